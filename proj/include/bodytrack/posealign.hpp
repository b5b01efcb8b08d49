// Closed-form least-squares estimation of the fixed transform relating two
// pose streams, solved over all 16 matrix entries via the shared 4x4 normal
// matrix and then projected onto SE(3).
#pragma once

#include <vector>

#include "bodytrack/errors.hpp"
#include "bodytrack/se3.hpp"

namespace bodytrack {

struct PosePair {
  RigidTransform p_r;  // pose in the reconstruction/world convention
  RigidTransform p_m;  // pose of the marker map
  int frame_index = 0;
};

// Solves sum_i ||p_r_i * T - p_m_i||_F^2 for the raw 4x4 T column-wise with
// a pivoted factorization of the shared normal matrix, then projects onto
// SE(3). Pairs are summed in ascending frame order so permuting the input
// list cannot change the result. Throws NoPairs / SingularNormalMatrix.
RigidTransform solve_pose_pairs(const std::vector<PosePair>& pairs);

// The raw unprojected least-squares solution; exposed so callers can compare
// residuals before and after projection.
Matrix4 solve_pose_pairs_raw(const std::vector<PosePair>& pairs);

// Left-factor twin: minimizes sum_i ||T * p_r_i - p_m_i||_F^2 (same normal
// equations row-wise). Used by the split-half calibration's X step.
RigidTransform solve_pose_pairs_left(const std::vector<PosePair>& pairs);

// Marker-map frame -> model frame: t_refined composed with t_hat.
RigidTransform compose_marker_to_model(const RigidTransform& t_refined,
                                       const RigidTransform& t_hat);

}  // namespace bodytrack
