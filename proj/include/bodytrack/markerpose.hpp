// Camera-pose estimation from 2D-3D marker-corner correspondences: DLT
// initialization (homography-based for coplanar corner sets) followed by
// Gauss-Newton reprojection refinement. Failure is a value, not an error.
#pragma once

#include <optional>

#include "bodytrack/cloud.hpp"
#include "bodytrack/markers.hpp"
#include "bodytrack/se3.hpp"

namespace bodytrack {

struct PoseEstimate {
  RigidTransform pose;                   // marker-map frame -> camera frame
  bool success = false;                  // callers must not read pose if false
  double mean_reprojection_error = 0.0;  // RMS pixels over used corners
  int inlier_corner_count = 0;
};

// Success requires >= 2 detected markers present in the map, all corners in
// front of the camera under the refined pose, and RMS reprojection error
// <= 2 px. A prior seeds the refinement when given; DLT remains the
// fallback when refinement from the prior does not succeed.
PoseEstimate estimate_pose(const MarkerMap& map,
                           const MarkerDetections& detections,
                           const CameraIntrinsics& k,
                           const std::optional<RigidTransform>& prior =
                               std::nullopt);

// Root-mean-square pixel residual over all detected corners with ids in the
// map; 0 when nothing is detected.
double reprojection_error(const MarkerMap& map,
                          const MarkerDetections& detections,
                          const CameraIntrinsics& k,
                          const RigidTransform& pose);

}  // namespace bodytrack
