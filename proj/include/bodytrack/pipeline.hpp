// The three-stage flow: temporary body reconstruction from every l-th
// frame, marker-map and reference-model alignment, and the per-frame
// tracking state machine with positioning-error feedback.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "bodytrack/cloud.hpp"
#include "bodytrack/kdtree.hpp"
#include "bodytrack/markers.hpp"
#include "bodytrack/posealign.hpp"
#include "bodytrack/registration.hpp"
#include "bodytrack/simulate.hpp"

namespace bodytrack {

struct ReconstructionParams {
  int frame_skip = 10;     // l: use frame 1 and every l-th frame
  int n_target = 50000;    // N for the dynamic voxel size
  double d0 = 0.01;        // minimum dynamic voxel size, meters
  double d_recon = 0.01;   // accumulation voxel size, meters
  IcpParams icp;
};

struct TrackingParams {
  double d_star = 0.01;    // depth-cloud voxel size during tracking
  double d_nei = 0.04;     // neighborhood crop distance
  IcpParams icp;
};

struct ReconstructionResult {
  PointCloud cloud;                     // accumulated body cloud, recon frame
  std::map<int, RigidTransform> poses;  // frame index -> P^R (recon w.r.t. camera)
  std::map<int, RigidTransform> marker_poses;  // frame index -> P^M, successes
  RigidTransform t_hat;                 // marker-map frame -> recon frame
  std::vector<int> used_frames;         // L, ascending
  std::vector<int> success_frames;      // S subset of L, ascending
};

// Frames are selected by Frame::index (1, l, 2l, ...); entries whose scene
// pose is flagged invalid are skipped. The camera-frame cloud of each used
// frame is downsampled at the dynamic voxel size, registered against the
// accumulation with generalized ICP seeded by the scene pose, merged, and
// the accumulation re-downsampled at d_recon. Marker poses are estimated
// per used frame and the map-to-reconstruction transform solved from the
// successful ones. Throws NoUsableFrames / AlignmentFailed.
ReconstructionResult reconstruct_body(const std::vector<Frame>& frames,
                                      const MarkerMap& map,
                                      const CameraIntrinsics& k,
                                      const ReconstructionParams& p);

// Point-to-plane refinement of the manual reconstruction-to-model guess.
// Source: reconstruction points; target: model vertices with mesh normals.
// The full result is returned so callers can surface convergence.
IcpResult align_reference_model(const PointCloud& recon,
                                const TriangleMesh& model,
                                const RigidTransform& t_manual,
                                const IcpParams& icp);

struct TrackerState {
  RigidTransform t_marker_to_model;         // marker-map frame -> model frame
  TriangleMesh merged_model;                // vertices merged once at d_star
  PointCloud merged_vertices;
  KdTree model_tree;                        // over merged vertices
  std::vector<Eigen::Matrix3d> model_covariances;
  RigidTransform p_u_ref;                   // desired model pose in the map
  MarkerMap marker_map;
  CameraIntrinsics intrinsics;
  std::optional<RigidTransform> last_pose;  // refined pose of the last frame
  std::optional<RigidTransform> last_marker_pose;
  int last_frame_index = -1;
  bool acquired = false;                    // first marker success seen
};

TrackerState init_tracker(const ReconstructionResult& recon,
                          const RigidTransform& t_refined,
                          const TriangleMesh& model, const MarkerMap& map,
                          const CameraIntrinsics& k,
                          const RigidTransform& p_u_ref,
                          const TrackingParams& tp);

enum class TrackStatus { Tracking, HoldingLastPose, AwaitingAcquisition };

const char* to_string(TrackStatus s);
TrackStatus track_status_from_string(const std::string& s);

struct StageTimings {
  std::int64_t marker_us = 0;
  std::int64_t cloud_us = 0;
  std::int64_t visibility_us = 0;
  std::int64_t crop_us = 0;
  std::int64_t icp_us = 0;
  std::int64_t total_us = 0;
};

struct TrackResult {
  int frame_index = 0;
  TrackStatus status = TrackStatus::AwaitingAcquisition;
  std::optional<RigidTransform> patient_pose;  // P-hat*, model w.r.t. camera
  RigidTransform scene_pose;                   // map w.r.t. camera
  bool scene_pose_valid = true;
  std::optional<RigidTransform> adjustment;    // current vs desired pose
  std::optional<double> rotational_error_deg;
  std::optional<double> translational_error_mm;
  bool refined = false;  // geometric refinement applied (not a fallback hold)
  StageTimings timings;
};

// One frame of the tracking state machine. Marker pose first; on success
// the primary pose is marker pose composed with the inverse map-to-model
// transform, otherwise the held pose once acquired. The visible model
// points are extracted from the camera position, the depth cloud cropped to
// the model neighborhood, and generalized ICP refines the pose; a
// refinement that worsens the objective on its own correspondences falls
// back to the primary pose.
TrackResult track_frame(TrackerState& state, const Frame& frame,
                        const TrackingParams& tp);

// Patient pose in the scene-map frame (the fixed-frame quantity ground
// truth can be compared against); absent while awaiting acquisition or when
// the scene pose is invalid.
std::optional<RigidTransform> world_patient_pose(const TrackResult& r);

}  // namespace bodytrack
