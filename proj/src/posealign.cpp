#include "bodytrack/posealign.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <algorithm>

namespace bodytrack {

Matrix4 solve_pose_pairs_raw(const std::vector<PosePair>& pairs) {
  if (pairs.empty()) throw NoPairs("solve_pose_pairs: no pose pairs");

  std::vector<const PosePair*> ordered;
  ordered.reserve(pairs.size());
  for (const auto& p : pairs) ordered.push_back(&p);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const PosePair* a, const PosePair* b) {
                     return a->frame_index < b->frame_index;
                   });

  Matrix4 normal = Matrix4::Zero();
  Matrix4 rhs = Matrix4::Zero();
  for (const PosePair* p : ordered) {
    const Matrix4 r = matrix_of(p->p_r);
    normal += r.transpose() * r;
    rhs += r.transpose() * matrix_of(p->p_m);
  }

  const Eigen::JacobiSVD<Matrix4> svd(normal);
  const double smin = svd.singularValues()(3);
  if (smin <= 0.0 || svd.singularValues()(0) / smin > 1e12) {
    throw SingularNormalMatrix("solve_pose_pairs: normal matrix is singular");
  }
  return normal.partialPivLu().solve(rhs);
}

RigidTransform solve_pose_pairs(const std::vector<PosePair>& pairs) {
  return project_to_se3(solve_pose_pairs_raw(pairs));
}

RigidTransform solve_pose_pairs_left(const std::vector<PosePair>& pairs) {
  if (pairs.empty()) throw NoPairs("solve_pose_pairs_left: no pose pairs");

  std::vector<const PosePair*> ordered;
  ordered.reserve(pairs.size());
  for (const auto& p : pairs) ordered.push_back(&p);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const PosePair* a, const PosePair* b) {
                     return a->frame_index < b->frame_index;
                   });

  // min_T ||T R - M||^2: T = (sum M R^T)(sum R R^T)^-1, solved row-wise via
  // the transposed system.
  Matrix4 normal = Matrix4::Zero();
  Matrix4 rhs = Matrix4::Zero();
  for (const PosePair* p : ordered) {
    const Matrix4 r = matrix_of(p->p_r);
    normal += r * r.transpose();
    rhs += r * matrix_of(p->p_m).transpose();
  }
  const Eigen::JacobiSVD<Matrix4> svd(normal);
  const double smin = svd.singularValues()(3);
  if (smin <= 0.0 || svd.singularValues()(0) / smin > 1e12) {
    throw SingularNormalMatrix("solve_pose_pairs_left: normal matrix is singular");
  }
  const Matrix4 t_transposed = normal.partialPivLu().solve(rhs);
  return project_to_se3(Matrix4(t_transposed.transpose()));
}

RigidTransform compose_marker_to_model(const RigidTransform& t_refined,
                                       const RigidTransform& t_hat) {
  return compose(t_refined, t_hat);
}

}  // namespace bodytrack
