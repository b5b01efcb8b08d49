#include "bodytrack/convex_hull.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

#include "support/test_utils.hpp"

using namespace bodytrack;

namespace {

// Checks the defining property: every facet plane supports the whole set.
void check_supporting_planes(const ConvexHull& hull,
                             const std::vector<Eigen::Vector3d>& pts,
                             double diameter) {
  for (const auto& f : hull.facets) {
    CHECK(std::abs(f.normal.norm() - 1.0) < 1e-9);
    for (const auto& p : pts) {
      CHECK(f.normal.dot(p) - f.offset <= 1e-9 * diameter);
    }
  }
}

double diameter_of(const std::vector<Eigen::Vector3d>& pts) {
  Eigen::Vector3d lo = pts.front(), hi = pts.front();
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

// Hull membership from the computed (and independently verified) planes:
// a point is on the hull iff it lies on some supporting plane.
std::vector<bool> membership_from_planes(const ConvexHull& hull,
                                         const std::vector<Eigen::Vector3d>& pts,
                                         double diameter) {
  std::vector<bool> on(pts.size(), false);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (const auto& f : hull.facets) {
      if (std::abs(f.normal.dot(pts[i]) - f.offset) <= 1e-9 * diameter) {
        on[i] = true;
        break;
      }
    }
  }
  return on;
}

}  // namespace

TEST_CASE("regular tetrahedron: 4 facets, all points on hull") {
  const std::vector<Eigen::Vector3d> pts = {
      {1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
  const ConvexHull hull = quickhull3(pts);
  CHECK(hull.facets.size() == 4);
  CHECK(hull.hull_points == std::vector<int>{0, 1, 2, 3});
  check_supporting_planes(hull, pts, diameter_of(pts));
}

TEST_CASE("cube corners plus centroid: centroid excluded") {
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 8; ++i) {
    pts.emplace_back(i & 1 ? 1 : -1, i & 2 ? 1 : -1, i & 4 ? 1 : -1);
  }
  pts.emplace_back(0, 0, 0);
  const ConvexHull hull = quickhull3(pts);
  CHECK(hull.hull_points == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK(hull.signed_distance(Eigen::Vector3d(0, 0, 0)) < -0.5);
  check_supporting_planes(hull, pts, diameter_of(pts));
}

TEST_CASE("random ball sets: membership equals the half-space test") {
  auto g = testutil::rng(51);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Eigen::Vector3d> pts;
    for (int i = 0; i < 2000; ++i) {
      // Uniform in a ball via rejection.
      while (true) {
        Eigen::Vector3d p(testutil::uniform(g, -1, 1),
                          testutil::uniform(g, -1, 1),
                          testutil::uniform(g, -1, 1));
        if (p.squaredNorm() <= 1.0) {
          pts.push_back(p);
          break;
        }
      }
    }
    const ConvexHull hull = quickhull3(pts);
    const double diam = diameter_of(pts);
    check_supporting_planes(hull, pts, diam);
    const auto on = membership_from_planes(hull, pts, diam);
    const std::set<int> hull_set(hull.hull_points.begin(),
                                 hull.hull_points.end());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      CHECK(on[i] == (hull_set.count(static_cast<int>(i)) > 0));
    }
  }
}

TEST_CASE("degenerate inputs are rejected") {
  CHECK_THROWS_AS(quickhull3({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}),
                  DegenerateInput);
  // Coplanar square.
  CHECK_THROWS_AS(
      quickhull3({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}, {0.3, 0.4, 0}}),
      DegenerateInput);
  // Collinear.
  CHECK_THROWS_AS(quickhull3({{0, 0, 0}, {1, 1, 1}, {2, 2, 2}, {3, 3, 3}}),
                  DegenerateInput);
}
