#include "bodytrack/visibility.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

#include "support/oracles.hpp"
#include "support/test_utils.hpp"

using namespace bodytrack;

TEST_CASE("four points in front of the camera are all visible") {
  PointCloud c;
  c.points = {{0.5, 0.5, 2.0}, {-0.5, 0.5, 2.2}, {0, -0.7, 2.1}, {0, 0, 2.6}};
  const auto vis = extract_visible_points(c, Eigen::Vector3d::Zero());
  CHECK(vis.size() == 4);
}

TEST_CASE("the nearer of two collinear points occludes the farther") {
  // Two points on the camera ray at 1 m and 2 m, plus off-axis support so
  // the flipped set is not degenerate.
  PointCloud c;
  c.points = {{0, 0, 1.0}, {0, 0, 2.0}, {0.8, 0, 1.5}, {-0.8, 0, 1.5},
              {0, 0.8, 1.5}, {0, -0.8, 1.5}};
  const auto vis = extract_visible_points(c, Eigen::Vector3d::Zero());
  const std::set<int> v(vis.begin(), vis.end());
  CHECK(v.count(0) == 1);
  CHECK(v.count(1) == 0);
}

TEST_CASE("sphere visibility agrees with the ray-cast oracle from 5 cameras") {
  auto g = testutil::rng(61);
  const PointCloud sphere = testutil::sphere_cloud(g, 2000, 1.0);
  const std::vector<Eigen::Vector3d> cameras = {
      {3, 0, 0}, {0, 3, 0}, {0, 0, -3}, {2.1, 2.1, 0}, {-1.8, 1.8, 1.8}};
  for (const auto& cam : cameras) {
    const auto vis = extract_visible_points(sphere, cam);
    // Subset of input indices, no duplicates.
    std::set<int> vset;
    for (int i : vis) {
      CHECK(i >= 0);
      CHECK(i < 2000);
      CHECK(vset.insert(i).second);
    }
    int agree = 0;
    for (int i = 0; i < 2000; ++i) {
      const bool expect = oracle::sphere_point_visible(
          Eigen::Vector3d::Zero(), 1.0, cam, sphere.points[i]);
      if (expect == (vset.count(i) > 0)) ++agree;
    }
    CHECK(agree >= 1900);  // >= 95% agreement
  }
}

TEST_CASE("visible set is scale invariant") {
  auto g = testutil::rng(62);
  const PointCloud sphere = testutil::sphere_cloud(g, 500, 1.0);
  const Eigen::Vector3d cam(0, 0, -4);
  const auto base = extract_visible_points(sphere, cam);

  for (double lambda : {0.01, 7.3}) {
    PointCloud scaled;
    for (const auto& p : sphere.points) scaled.points.push_back(lambda * p);
    const auto vis = extract_visible_points(scaled, lambda * cam);
    CHECK(vis == base);
  }
}

TEST_CASE("camera coincident with a point is rejected") {
  PointCloud c;
  c.points = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  CHECK_THROWS_AS(extract_visible_points(c, Eigen::Vector3d(0, 0, 0)),
                  CameraOnPoint);
}

TEST_CASE("planar slices through the camera fall back to the jittered hull") {
  // Points and camera share the plane y = 0, so the flipped set (a radial
  // map) stays in that plane and the raw hull is degenerate.
  PointCloud slice;
  for (int i = 0; i < 50; ++i) {
    slice.points.emplace_back(-0.5 + i * (1.0 / 49.0), 0.0, 2.0);
  }
  bool jittered = false;
  const auto vis =
      extract_visible_points(slice, Eigen::Vector3d::Zero(), 1.0, &jittered);
  CHECK(jittered);
  CHECK(vis.size() == 50);  // the whole segment faces the camera
}

TEST_CASE("crop_neighborhood basic semantics") {
  PointCloud model;
  model.points = {{0, 0, 0}, {1, 0, 0}};
  const double d_nei = 0.04;

  RigidTransform t;  // identity
  PointCloud scene;
  scene.points = {{0, 0, 0},        // exactly on a model vertex: kept
                  {0, 0, 0.08},     // 2 * d_nei away: dropped
                  {1.0, 0.02, 0}};  // within d_nei of the second vertex: kept
  const PointCloud out = crop_neighborhood(scene, model, t, d_nei);
  REQUIRE(out.size() == 2);
  CHECK(out.points[0].isApprox(scene.points[0]));
  CHECK(out.points[1].isApprox(scene.points[2]));
}

TEST_CASE("crop_neighborhood matches brute force under a random transform") {
  auto g = testutil::rng(64);
  const PointCloud model = testutil::mannequin_like_cloud(g, 800);
  PointCloud scene = testutil::random_cloud(g, 5000, 0.6);
  const RigidTransform t = testutil::random_transform(g, 0.2);
  const double d_nei = 0.04;

  const PointCloud out = crop_neighborhood(scene, model, t, d_nei);

  PointCloud expect;
  for (const auto& p : scene.points) {
    const Eigen::Vector3d q = t.apply(p);
    bool keep = false;
    for (const auto& m : model.points) {
      if ((q - m).norm() < d_nei) {
        keep = true;
        break;
      }
    }
    if (keep) expect.points.push_back(p);
  }
  REQUIRE(out.size() == expect.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out.points[i].isApprox(expect.points[i]));
  }
}

TEST_CASE("crop_neighborhood is monotone in d_nei") {
  auto g = testutil::rng(65);
  const PointCloud model = testutil::sphere_cloud(g, 300, 0.5);
  const PointCloud scene = testutil::random_cloud(g, 2000, 1.0);
  const RigidTransform t = testutil::random_transform(g, 0.1);

  auto keys = [](const PointCloud& c) {
    std::set<std::tuple<double, double, double>> s;
    for (const auto& p : c.points) s.insert({p.x(), p.y(), p.z()});
    return s;
  };
  const auto small = keys(crop_neighborhood(scene, model, t, 0.03));
  const auto large = keys(crop_neighborhood(scene, model, t, 0.08));
  CHECK(std::includes(large.begin(), large.end(), small.begin(), small.end()));
}
