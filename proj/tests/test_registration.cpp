#include "bodytrack/registration.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "support/test_utils.hpp"

using namespace bodytrack;

namespace {

// Sphere samples carry exact analytic normals; used where a fixed point of
// the solver is wanted.
PointCloud sphere_with_normals(std::mt19937_64& g, int n, double radius) {
  PointCloud c = testutil::sphere_cloud(g, n, radius);
  c.normals.reserve(n);
  for (const auto& p : c.points) c.normals.push_back(p.normalized());
  return c;
}

double translation_error(const RigidTransform& a, const RigidTransform& b) {
  return (a.translation - b.translation).norm();
}

void check_trace_monotone(const IcpResult& r) {
  for (const auto& it : r.trace) {
    CHECK(it.objective_after <= it.objective_before + 1e-15);
  }
  for (std::size_t i = 1; i < r.trace.size(); ++i) {
    CHECK(r.trace[i].objective_after <=
          r.trace[i - 1].objective_after * (1.0 + 1e-9) + 1e-18);
  }
}

}  // namespace

TEST_CASE("point_to_plane_icp: fixed point on identical clouds") {
  auto g = testutil::rng(71);
  const PointCloud target = sphere_with_normals(g, 5000, 0.5);
  PointCloud source;
  source.points = target.points;
  const IcpResult r = point_to_plane_icp(source, target,
                                         RigidTransform::identity(),
                                         IcpParams{});
  CHECK(r.converged);
  CHECK(rotation_angle(r.transform.rotation) < 1e-6);
  CHECK(r.transform.translation.norm() < 1e-6);
  CHECK(is_rigid(r.transform));
}

TEST_CASE("point_to_plane_icp: recovers a 2 cm / 5 degree transform") {
  auto g = testutil::rng(72);
  PointCloud source = testutil::mannequin_like_cloud(g, 4000);
  auto g2 = testutil::rng(720);
  RigidTransform t_true = testutil::perturbation(g2, 0.02, 5.0 * M_PI / 180.0);

  PointCloud target = testutil::transformed(source, t_true);
  target.normals.clear();
  // Normals estimated on the target side, as a consumer would.
  target = estimate_normals(target, 12, Eigen::Vector3d(0, 0, 10));

  IcpParams p;
  p.max_iterations = 60;
  const IcpResult r =
      point_to_plane_icp(source, target, RigidTransform::identity(), p);
  CHECK(r.converged);
  CHECK(translation_error(r.transform, t_true) < 0.5e-3);
  CHECK(rotation_distance(r.transform, t_true) < 0.05 * M_PI / 180.0);
  check_trace_monotone(r);
}

TEST_CASE("point_to_plane_icp: no correspondences when displaced 10 m") {
  auto g = testutil::rng(73);
  const PointCloud target = sphere_with_normals(g, 500, 0.5);
  PointCloud source;
  for (const auto& p : target.points) {
    source.points.push_back(p + Eigen::Vector3d(10, 0, 0));
  }
  CHECK_THROWS_AS(point_to_plane_icp(source, target,
                                     RigidTransform::identity(), IcpParams{}),
                  NoCorrespondences);
}

TEST_CASE("point_to_plane_icp: missing normals rejected") {
  auto g = testutil::rng(74);
  PointCloud target = testutil::sphere_cloud(g, 100, 1.0);
  PointCloud source = target;
  CHECK_THROWS_AS(point_to_plane_icp(source, target,
                                     RigidTransform::identity(), IcpParams{}),
                  MissingNormals);
}

TEST_CASE("generalized_icp: fixed point on identical clouds") {
  auto g = testutil::rng(75);
  const PointCloud target = testutil::mannequin_like_cloud(g, 3000);
  const PointCloud source = target;
  const IcpResult r = generalized_icp(source, target,
                                      RigidTransform::identity(), IcpParams{});
  CHECK(r.converged);
  CHECK(rotation_angle(r.transform.rotation) < 1e-6);
  CHECK(r.transform.translation.norm() < 1e-6);
}

TEST_CASE("generalized_icp: recovers 5 cm / 10 degrees noise-free") {
  auto g = testutil::rng(76);
  const PointCloud source = testutil::mannequin_like_cloud(g, 5000);
  auto g2 = testutil::rng(760);
  const RigidTransform t_true =
      testutil::perturbation(g2, 0.05, 10.0 * M_PI / 180.0);
  const PointCloud target = testutil::transformed(source, t_true);

  IcpParams p;
  p.max_iterations = 60;
  p.max_correspondence_distance = 0.10;
  const IcpResult r =
      generalized_icp(source, target, RigidTransform::identity(), p);
  CHECK(translation_error(r.transform, t_true) < 1e-3);
  CHECK(rotation_distance(r.transform, t_true) < 0.1 * M_PI / 180.0);
  CHECK(is_rigid(r.transform));
  check_trace_monotone(r);
}

TEST_CASE("generalized_icp: 2 mm noise, 95th percentile over 20 seeds") {
  std::vector<double> terr, rerr;
  for (int seed = 0; seed < 20; ++seed) {
    auto g = testutil::rng(1000 + seed);
    const PointCloud source = testutil::mannequin_like_cloud(g, 4000);
    const RigidTransform t_true =
        testutil::perturbation(g, 0.05, 10.0 * M_PI / 180.0);
    PointCloud target = testutil::transformed(source, t_true);
    for (auto& p : target.points) {
      p += Eigen::Vector3d(testutil::gauss(g, 2e-3), testutil::gauss(g, 2e-3),
                           testutil::gauss(g, 2e-3));
    }
    IcpParams p;
    p.max_iterations = 60;
    p.max_correspondence_distance = 0.10;
    const IcpResult r =
        generalized_icp(source, target, RigidTransform::identity(), p);
    terr.push_back(translation_error(r.transform, t_true));
    rerr.push_back(rotation_distance(r.transform, t_true));
  }
  std::sort(terr.begin(), terr.end());
  std::sort(rerr.begin(), rerr.end());
  CHECK(terr[18] < 5e-3);                  // 95th percentile
  CHECK(rerr[18] < 1.0 * M_PI / 180.0);
}

TEST_CASE("generalized_icp: too few points") {
  PointCloud tiny;
  for (int i = 0; i < 10; ++i) tiny.points.emplace_back(i * 0.1, 0, 0);
  CHECK_THROWS_AS(generalized_icp(tiny, tiny, RigidTransform::identity(),
                                  IcpParams{}),
                  TooFewPoints);
}

TEST_CASE("registration is equivariant under a common rigid change of frame") {
  auto g = testutil::rng(77);
  const PointCloud source = testutil::mannequin_like_cloud(g, 2000);
  const RigidTransform t_true = testutil::perturbation(g, 0.02, 0.05);
  const PointCloud target = testutil::transformed(source, t_true);

  IcpParams p;
  p.max_iterations = 40;
  const IcpResult base =
      generalized_icp(source, target, RigidTransform::identity(), p);

  for (int trial = 0; trial < 3; ++trial) {
    const RigidTransform a = testutil::random_transform(g, 0.5);
    const PointCloud source_a = testutil::transformed(source, a);
    const PointCloud target_a = testutil::transformed(target, a);
    const RigidTransform init_a =
        compose(a, compose(RigidTransform::identity(), inverse(a)));
    const IcpResult moved = generalized_icp(source_a, target_a, init_a, p);
    const RigidTransform expect = compose(a, compose(base.transform,
                                                     inverse(a)));
    CHECK(translation_error(moved.transform, expect) < 1e-6);
    CHECK(rotation_distance(moved.transform, expect) < 1e-6);
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  auto g = testutil::rng(78);
  const PointCloud source = testutil::mannequin_like_cloud(g, 300);
  const RigidTransform t_true = testutil::perturbation(g, 0.01, 0.02);
  PointCloud target = testutil::transformed(source, t_true);
  target = estimate_normals(target, 10, Eigen::Vector3d(0, 0, 10));

  // Evaluate at a transform near, but not at, the optimum so residuals are
  // nonzero and the relative comparison is meaningful.
  const RigidTransform t_eval = testutil::perturbation(g, 0.004, 0.008);
  const KdTree tree(target.points);
  const auto corr = find_correspondences(source, tree, t_eval, 0.10);
  REQUIRE(corr.size() > 100);

  const auto covs_s = gicp_covariances(source, 20, 1e-3);
  const auto covs_t = gicp_covariances(target, 20, 1e-3);

  auto fd_check = [&](auto&& objective, const Vector6& analytic) {
    const double h = 1e-6;
    double worst_rel = 0.0;
    for (int a = 0; a < 6; ++a) {
      Vector6 delta = Vector6::Zero();
      delta(a) = h;
      auto shift = [&](double sign) {
        RigidTransform d;
        const Eigen::Vector3d omega = sign * delta.head<3>();
        const double angle = omega.norm();
        if (angle > 0.0) d.rotation = from_angle_axis({omega / angle, angle});
        d.translation = sign * delta.tail<3>();
        return compose(d, t_eval);
      };
      const double fd = (objective(shift(1.0)) - objective(shift(-1.0))) /
                        (2.0 * h);
      worst_rel = std::max(worst_rel,
                           std::abs(fd - analytic(a)) /
                               std::max(1e-12, analytic.cwiseAbs().maxCoeff()));
    }
    CHECK(worst_rel < 1e-4);
  };

  SUBCASE("point-to-plane") {
    fd_check(
        [&](const RigidTransform& t) {
          return point_to_plane_objective(source, target, corr, t);
        },
        point_to_plane_gradient(source, target, corr, t_eval));
  }
  SUBCASE("gicp with frozen weights") {
    // Freeze the Mahalanobis weights at t_eval's rotation, matching the
    // linearization the solver uses.
    std::vector<Eigen::Matrix3d> w(corr.size());
    for (std::size_t i = 0; i < corr.size(); ++i) {
      const Eigen::Matrix3d m =
          covs_t[corr[i].target] +
          t_eval.rotation * covs_s[corr[i].source] * t_eval.rotation.transpose();
      w[i] = m.inverse();
    }
    auto frozen_objective = [&](const RigidTransform& t) {
      double sum = 0.0;
      for (std::size_t i = 0; i < corr.size(); ++i) {
        const Eigen::Vector3d d = t.apply(source.points[corr[i].source]) -
                                  target.points[corr[i].target];
        sum += d.dot(w[i] * d);
      }
      return sum;
    };
    fd_check(frozen_objective,
             gicp_gradient(source, target, corr, covs_s, covs_t, t_eval));
  }
}
