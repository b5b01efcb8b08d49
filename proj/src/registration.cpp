#include "bodytrack/registration.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <cmath>

#include "bodytrack/parallel.hpp"

namespace bodytrack {

std::vector<Correspondence> find_correspondences(const PointCloud& source,
                                                 const KdTree& target_tree,
                                                 const RigidTransform& t,
                                                 double max_distance) {
  std::vector<int> match(source.size(), -1);
  parallel_for(0, source.size(), [&](std::size_t i) {
    match[i] = target_tree.nearest(t.apply(source.points[i]), max_distance);
  });
  std::vector<Correspondence> corr;
  corr.reserve(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (match[i] >= 0) corr.push_back({static_cast<int>(i), match[i]});
  }
  return corr;
}

std::vector<Eigen::Matrix3d> gicp_covariances(const PointCloud& c, int k,
                                              double epsilon) {
  const KdTree tree(c.points);
  const int kk = std::min<int>(k, static_cast<int>(c.size()));
  std::vector<Eigen::Matrix3d> covs(c.size());
  parallel_for(0, c.size(), [&](std::size_t i) {
    const std::vector<int> nn = tree.knn(c.points[i], kk);
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (int j : nn) mean += c.points[j];
    mean /= static_cast<double>(nn.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int j : nn) {
      const Eigen::Vector3d d = c.points[j] - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    // Ascending eigenvalues: column 0 is the surface normal direction.
    const Eigen::Matrix3d& v = eig.eigenvectors();
    covs[i] = v * Eigen::Vector3d(epsilon, 1.0, 1.0).asDiagonal() *
              v.transpose();
  });
  return covs;
}

double point_to_plane_objective(const PointCloud& source,
                                const PointCloud& target,
                                const std::vector<Correspondence>& corr,
                                const RigidTransform& t) {
  double sum = 0.0;
  for (const auto& c : corr) {
    const double r = target.normals[c.target].dot(
        t.apply(source.points[c.source]) - target.points[c.target]);
    sum += r * r;
  }
  return sum;
}

Vector6 point_to_plane_gradient(const PointCloud& source,
                                const PointCloud& target,
                                const std::vector<Correspondence>& corr,
                                const RigidTransform& t) {
  Vector6 g = Vector6::Zero();
  for (const auto& c : corr) {
    const Eigen::Vector3d p = t.apply(source.points[c.source]);
    const Eigen::Vector3d& n = target.normals[c.target];
    const double r = n.dot(p - target.points[c.target]);
    Vector6 j;
    j << p.cross(n), n;
    g += 2.0 * r * j;
  }
  return g;
}

namespace {

inline Eigen::Matrix3d gicp_weight(const Eigen::Matrix3d& source_cov,
                                   const Eigen::Matrix3d& target_cov,
                                   const Eigen::Matrix3d& rotation) {
  const Eigen::Matrix3d m =
      target_cov + rotation * source_cov * rotation.transpose();
  return m.inverse();
}

}  // namespace

double gicp_objective(const PointCloud& source, const PointCloud& target,
                      const std::vector<Correspondence>& corr,
                      const std::vector<Eigen::Matrix3d>& source_covs,
                      const std::vector<Eigen::Matrix3d>& target_covs,
                      const RigidTransform& t) {
  double sum = 0.0;
  for (const auto& c : corr) {
    const Eigen::Matrix3d w =
        gicp_weight(source_covs[c.source], target_covs[c.target], t.rotation);
    const Eigen::Vector3d d =
        t.apply(source.points[c.source]) - target.points[c.target];
    sum += d.dot(w * d);
  }
  return sum;
}

Vector6 gicp_gradient(const PointCloud& source, const PointCloud& target,
                      const std::vector<Correspondence>& corr,
                      const std::vector<Eigen::Matrix3d>& source_covs,
                      const std::vector<Eigen::Matrix3d>& target_covs,
                      const RigidTransform& t) {
  Vector6 g = Vector6::Zero();
  for (const auto& c : corr) {
    const Eigen::Matrix3d w =
        gicp_weight(source_covs[c.source], target_covs[c.target], t.rotation);
    const Eigen::Vector3d p = t.apply(source.points[c.source]);
    const Eigen::Vector3d d = p - target.points[c.target];
    Eigen::Matrix<double, 3, 6> j;
    j.leftCols<3>() = -skew<double>(p);
    j.rightCols<3>() = Eigen::Matrix3d::Identity();
    g += 2.0 * j.transpose() * (w * d);
  }
  return g;
}

namespace {

RigidTransform increment(const Vector6& delta) {
  RigidTransform d;
  const Eigen::Vector3d omega = delta.head<3>();
  const double angle = omega.norm();
  if (angle > 0.0) {
    d.rotation = from_angle_axis({omega / angle, angle});
  }
  d.translation = delta.tail<3>();
  return d;
}

// Shared Gauss-Newton loop. The callbacks bind the objective model:
//  - accumulate(corr, T, H, b) fills the normal equations at T
//  - objective(corr, T) evaluates the current objective
template <typename Accumulate, typename Objective>
IcpResult gauss_newton_icp(const PointCloud& source, const KdTree& target_tree,
                           const RigidTransform& init, const IcpParams& p,
                           Accumulate&& accumulate, Objective&& objective) {
  IcpResult result;
  RigidTransform t = init;

  for (int iter = 0; iter < p.max_iterations; ++iter) {
    const std::vector<Correspondence> corr = find_correspondences(
        source, target_tree, t, p.max_correspondence_distance);
    if (corr.empty()) {
      if (iter == 0) {
        throw NoCorrespondences("icp: no correspondences at the initial pose");
      }
      result.converged = false;
      break;
    }

    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Vector6 b = Vector6::Zero();
    accumulate(corr, t, h, b);
    const double f0 = objective(corr, t);

    Vector6 delta = h.ldlt().solve(-b);
    if (!delta.allFinite()) {
      delta = (h + 1e-9 * h.trace() * Eigen::Matrix<double, 6, 6>::Identity())
                  .ldlt()
                  .solve(-b);
    }

    const double inv_count = 1.0 / static_cast<double>(corr.size());
    IcpIteration record;
    record.objective_before = f0 * inv_count;
    record.correspondences = static_cast<int>(corr.size());

    double scale = 1.0;
    RigidTransform accepted = t;
    double f_accepted = f0;
    bool stepped = false;
    for (int halving = 0; halving <= 8; ++halving) {
      const RigidTransform candidate = compose(increment(scale * delta), t);
      const double f = objective(corr, candidate);
      if (f <= f0) {
        accepted = candidate;
        f_accepted = f;
        stepped = true;
        break;
      }
      scale *= 0.5;
    }
    record.step_scale = stepped ? scale : 0.0;
    record.objective_after = f_accepted * inv_count;
    result.trace.push_back(record);
    result.iterations = iter + 1;
    result.final_objective = f_accepted * inv_count;
    result.correspondence_count = static_cast<int>(corr.size());

    if (!stepped) {
      // No descent even at 1/256 of the step: treat as converged when the
      // full step was already negligible.
      result.converged = delta.tail<3>().norm() < p.translation_epsilon &&
                         delta.head<3>().norm() < p.rotation_epsilon;
      break;
    }
    t = accepted;

    const Vector6 applied = scale * delta;
    if (applied.tail<3>().norm() < p.translation_epsilon &&
        applied.head<3>().norm() < p.rotation_epsilon) {
      result.converged = true;
      break;
    }
  }

  result.transform = t;
  return result;
}

}  // namespace

IcpResult point_to_plane_icp(const PointCloud& source,
                             const PointCloud& target,
                             const RigidTransform& init, const IcpParams& p) {
  if (!target.has_normals()) {
    throw MissingNormals("point_to_plane_icp: target cloud has no normals");
  }
  if (source.empty()) {
    throw NoCorrespondences("point_to_plane_icp: empty source cloud");
  }
  const KdTree tree(target.points);

  auto accumulate = [&](const std::vector<Correspondence>& corr,
                        const RigidTransform& t,
                        Eigen::Matrix<double, 6, 6>& h, Vector6& b) {
    for (const auto& c : corr) {
      const Eigen::Vector3d p_t = t.apply(source.points[c.source]);
      const Eigen::Vector3d& n = target.normals[c.target];
      const double r = n.dot(p_t - target.points[c.target]);
      Vector6 j;
      j << p_t.cross(n), n;
      h += j * j.transpose();
      b += j * r;
    }
  };
  auto objective = [&](const std::vector<Correspondence>& corr,
                       const RigidTransform& t) {
    return point_to_plane_objective(source, target, corr, t);
  };
  return gauss_newton_icp(source, tree, init, p, accumulate, objective);
}

IcpResult generalized_icp(const PointCloud& source, const PointCloud& target,
                          const std::vector<Eigen::Matrix3d>& source_covs,
                          const std::vector<Eigen::Matrix3d>& target_covs,
                          const KdTree& target_tree,
                          const RigidTransform& init, const IcpParams& p) {
  // Weights are recomputed from the rotation at each linearization point and
  // held fixed through the step halvings.
  std::vector<Eigen::Matrix3d> weights;
  auto accumulate = [&](const std::vector<Correspondence>& corr,
                        const RigidTransform& t,
                        Eigen::Matrix<double, 6, 6>& h, Vector6& b) {
    weights.assign(corr.size(), Eigen::Matrix3d::Zero());
    parallel_for(0, corr.size(), [&](std::size_t i) {
      weights[i] = gicp_weight(source_covs[corr[i].source],
                               target_covs[corr[i].target], t.rotation);
    });
    for (std::size_t i = 0; i < corr.size(); ++i) {
      const auto& c = corr[i];
      const Eigen::Vector3d p_t = t.apply(source.points[c.source]);
      const Eigen::Vector3d d = p_t - target.points[c.target];
      Eigen::Matrix<double, 3, 6> j;
      j.leftCols<3>() = -skew<double>(p_t);
      j.rightCols<3>() = Eigen::Matrix3d::Identity();
      const Eigen::Matrix<double, 3, 6> wj = weights[i] * j;
      h += j.transpose() * wj;
      b += wj.transpose() * d;
    }
  };
  auto objective = [&](const std::vector<Correspondence>& corr,
                       const RigidTransform& t) {
    double sum = 0.0;
    for (std::size_t i = 0; i < corr.size(); ++i) {
      const auto& c = corr[i];
      const Eigen::Vector3d d =
          t.apply(source.points[c.source]) - target.points[c.target];
      sum += d.dot(weights[i] * d);
    }
    return sum;
  };
  return gauss_newton_icp(source, target_tree, init, p, accumulate, objective);
}

IcpResult generalized_icp(const PointCloud& source, const PointCloud& target,
                          const RigidTransform& init, const IcpParams& p) {
  if (static_cast<int>(source.size()) < p.neighbors_for_covariance ||
      static_cast<int>(target.size()) < p.neighbors_for_covariance) {
    throw TooFewPoints("generalized_icp: clouds smaller than the covariance neighborhood");
  }
  const auto source_covs = gicp_covariances(source, p.neighbors_for_covariance,
                                            p.gicp_covariance_epsilon);
  const auto target_covs = gicp_covariances(target, p.neighbors_for_covariance,
                                            p.gicp_covariance_epsilon);
  const KdTree tree(target.points);
  return generalized_icp(source, target, source_covs, target_covs, tree, init,
                         p);
}

}  // namespace bodytrack
