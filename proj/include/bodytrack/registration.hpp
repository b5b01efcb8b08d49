// Iterative rigid registration: point-to-plane ICP and plane-to-plane
// generalized ICP, both Gauss-Newton over a local 6-dof increment
// (angle-axis rotation + translation) composed on the left each iteration,
// with step halving while the objective increases.
//
// The objective/gradient evaluators are public so tests can check the
// analytic gradient against finite differences on fixed correspondences.
#pragma once

#include <Eigen/Core>
#include <vector>

#include "bodytrack/cloud.hpp"
#include "bodytrack/errors.hpp"
#include "bodytrack/kdtree.hpp"
#include "bodytrack/se3.hpp"

namespace bodytrack {

using Vector6 = Eigen::Matrix<double, 6, 1>;  // [rotation; translation]

struct IcpParams {
  int max_iterations = 30;
  double max_correspondence_distance = 0.03;  // 3x the default voxel size
  double translation_epsilon = 1e-5;          // meters
  double rotation_epsilon = 1e-5;             // radians
  double gicp_covariance_epsilon = 1e-3;
  int neighbors_for_covariance = 20;
};

// Objectives in the trace and result are mean squared residuals per
// correspondence, so values stay comparable as the match set changes size.
struct IcpIteration {
  double objective_before = 0.0;  // this iteration's correspondences, pre-step
  double objective_after = 0.0;   // same correspondences, accepted step
  int correspondences = 0;
  double step_scale = 1.0;        // 1, 1/2, ... 1/256; 0 when no step taken
};

struct IcpResult {
  RigidTransform transform;       // composes the refinement with init
  double final_objective = 0.0;
  int iterations = 0;
  bool converged = false;
  int correspondence_count = 0;
  std::vector<IcpIteration> trace;
};

struct Correspondence {
  int source = -1;
  int target = -1;
};

// Nearest target neighbor of t * source[i] strictly within max_distance.
std::vector<Correspondence> find_correspondences(const PointCloud& source,
                                                 const KdTree& target_tree,
                                                 const RigidTransform& t,
                                                 double max_distance);

// Per-point plane-to-plane covariances: k-NN PCA with eigenvalues replaced
// by (epsilon, 1, 1) in the local frame, epsilon on the normal direction.
std::vector<Eigen::Matrix3d> gicp_covariances(const PointCloud& c, int k,
                                               double epsilon);

// Sum of squared point-to-plane residuals ((t*s - q) . n_q) over corr.
double point_to_plane_objective(const PointCloud& source,
                                const PointCloud& target,
                                const std::vector<Correspondence>& corr,
                                const RigidTransform& t);

// Gradient of the above with respect to the left increment at t.
Vector6 point_to_plane_gradient(const PointCloud& source,
                                const PointCloud& target,
                                const std::vector<Correspondence>& corr,
                                const RigidTransform& t);

// Mahalanobis objective sum d^T (C_q + R C_s R^T)^-1 d with d = t*s - q.
double gicp_objective(const PointCloud& source, const PointCloud& target,
                      const std::vector<Correspondence>& corr,
                      const std::vector<Eigen::Matrix3d>& source_covs,
                      const std::vector<Eigen::Matrix3d>& target_covs,
                      const RigidTransform& t);

// Gradient of the gicp objective with the weights frozen at t's rotation.
Vector6 gicp_gradient(const PointCloud& source, const PointCloud& target,
                      const std::vector<Correspondence>& corr,
                      const std::vector<Eigen::Matrix3d>& source_covs,
                      const std::vector<Eigen::Matrix3d>& target_covs,
                      const RigidTransform& t);

// Minimizes the point-to-plane objective. Throws MissingNormals when the
// target has no normals, NoCorrespondences when the first iteration finds
// no matches.
IcpResult point_to_plane_icp(const PointCloud& source,
                             const PointCloud& target,
                             const RigidTransform& init, const IcpParams& p);

// Plane-to-plane generalized ICP. Throws TooFewPoints when either cloud has
// fewer than neighbors_for_covariance points.
IcpResult generalized_icp(const PointCloud& source, const PointCloud& target,
                          const RigidTransform& init, const IcpParams& p);

// Hot-path variant with precomputed covariances and target tree.
IcpResult generalized_icp(const PointCloud& source, const PointCloud& target,
                          const std::vector<Eigen::Matrix3d>& source_covs,
                          const std::vector<Eigen::Matrix3d>& target_covs,
                          const KdTree& target_tree,
                          const RigidTransform& init, const IcpParams& p);

}  // namespace bodytrack
