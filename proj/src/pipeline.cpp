#include "bodytrack/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "bodytrack/markerpose.hpp"
#include "bodytrack/visibility.hpp"

namespace bodytrack {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t us_since(Clock::time_point& mark) {
  const auto now = Clock::now();
  const auto us =
      std::chrono::duration_cast<std::chrono::microseconds>(now - mark)
          .count();
  mark = now;
  return us;
}

bool in_used_set(int index, int l) {
  return index == 1 || (l > 0 && index % l == 0);
}

}  // namespace

ReconstructionResult reconstruct_body(const std::vector<Frame>& frames,
                                      const MarkerMap& map,
                                      const CameraIntrinsics& k,
                                      const ReconstructionParams& p) {
  ReconstructionResult result;

  std::vector<const Frame*> used;
  for (const auto& f : frames) {
    if (in_used_set(f.index, p.frame_skip) && f.scene_pose_valid) {
      used.push_back(&f);
    }
  }
  std::sort(used.begin(), used.end(),
            [](const Frame* a, const Frame* b) { return a->index < b->index; });
  if (used.empty()) {
    throw NoUsableFrames("reconstruct_body: no usable frames with a valid scene pose");
  }

  std::vector<PosePair> pairs;
  for (const Frame* frame : used) {
    result.used_frames.push_back(frame->index);

    const PointCloud raw = depth_to_pointcloud(frame->depth, k);
    PointCloud cloud;
    if (!raw.empty()) {
      cloud = voxel_downsample(raw, dynamic_voxel_size(raw, p.n_target, p.d0));
    }

    // Pose of the reconstruction frame w.r.t. the camera. The first used
    // frame anchors the reconstruction at its scene pose; later frames are
    // refined against the accumulation with generalized ICP, whose source
    // lives in the camera frame, so the refined map is the inverse pose.
    RigidTransform pose = frame->scene_pose;
    const int min_points = 8;
    if (static_cast<int>(result.cloud.size()) >= min_points &&
        static_cast<int>(cloud.size()) >= min_points) {
      // Dynamic-voxel clouds are far sparser than tracking clouds, so both
      // the correspondence gate and the covariance neighborhoods follow the
      // actual granularity; a fixed k of 20 over a few hundred points spans
      // too much curved surface and the refinement drifts.
      IcpParams icp_params = p.icp;
      const double voxel = dynamic_voxel_size(raw, p.n_target, p.d0);
      icp_params.max_correspondence_distance =
          std::max(icp_params.max_correspondence_distance, 1.5 * voxel);
      const int source_k =
          std::clamp(static_cast<int>(cloud.size()) / 60, 6,
                     p.icp.neighbors_for_covariance);
      const int target_k =
          std::clamp(static_cast<int>(result.cloud.size()) / 60, 6,
                     p.icp.neighbors_for_covariance);
      const auto source_covs = gicp_covariances(
          cloud, source_k, icp_params.gicp_covariance_epsilon);
      const auto target_covs = gicp_covariances(
          result.cloud, target_k, icp_params.gicp_covariance_epsilon);
      const KdTree target_tree(result.cloud.points);
      try {
        const IcpResult icp =
            generalized_icp(cloud, result.cloud, source_covs, target_covs,
                            target_tree, inverse(frame->scene_pose),
                            icp_params);
        pose = inverse(icp.transform);
      } catch (const NoCorrespondences&) {
        // Keep the scene pose; the frame still contributes geometry.
      }
    }
    result.poses[frame->index] = pose;

    if (!cloud.empty()) {
      const RigidTransform t_recon_from_camera = inverse(pose);
      for (const auto& pt : cloud.points) {
        result.cloud.points.push_back(t_recon_from_camera.apply(pt));
      }
      result.cloud = voxel_downsample(result.cloud, p.d_recon);
    }

    const PoseEstimate marker = estimate_pose(map, frame->detections, k);
    if (marker.success) {
      result.success_frames.push_back(frame->index);
      result.marker_poses[frame->index] = marker.pose;
      pairs.push_back({pose, marker.pose, frame->index});
    }
  }

  if (pairs.empty()) {
    throw AlignmentFailed("reconstruct_body: marker pose estimation never succeeded");
  }
  result.t_hat = solve_pose_pairs(pairs);
  return result;
}

IcpResult align_reference_model(const PointCloud& recon,
                                const TriangleMesh& model,
                                const RigidTransform& t_manual,
                                const IcpParams& icp) {
  PointCloud target = cloud_from_mesh_vertices(model, /*with_normals=*/true);
  return point_to_plane_icp(recon, target, t_manual, icp);
}

TrackerState init_tracker(const ReconstructionResult& recon,
                          const RigidTransform& t_refined,
                          const TriangleMesh& model, const MarkerMap& map,
                          const CameraIntrinsics& k,
                          const RigidTransform& p_u_ref,
                          const TrackingParams& tp) {
  TrackerState state;
  state.t_marker_to_model = compose_marker_to_model(t_refined, recon.t_hat);
  state.merged_model = merge_close_vertices(model, tp.d_star);
  state.merged_vertices.points = state.merged_model.vertices;
  state.model_tree = KdTree(state.merged_vertices.points);
  state.model_covariances =
      gicp_covariances(state.merged_vertices, tp.icp.neighbors_for_covariance,
                       tp.icp.gicp_covariance_epsilon);
  state.p_u_ref = p_u_ref;
  state.marker_map = map;
  state.intrinsics = k;
  return state;
}

const char* to_string(TrackStatus s) {
  switch (s) {
    case TrackStatus::Tracking:
      return "Tracking";
    case TrackStatus::HoldingLastPose:
      return "HoldingLastPose";
    case TrackStatus::AwaitingAcquisition:
      return "AwaitingAcquisition";
  }
  return "AwaitingAcquisition";
}

TrackStatus track_status_from_string(const std::string& s) {
  if (s == "Tracking") return TrackStatus::Tracking;
  if (s == "HoldingLastPose") return TrackStatus::HoldingLastPose;
  if (s == "AwaitingAcquisition") return TrackStatus::AwaitingAcquisition;
  throw ParseError("unknown track status: " + s);
}

TrackResult track_frame(TrackerState& state, const Frame& frame,
                        const TrackingParams& tp) {
  TrackResult result;
  result.frame_index = frame.index;
  result.scene_pose = frame.scene_pose;
  result.scene_pose_valid = frame.scene_pose_valid;

  const auto start = Clock::now();
  Clock::time_point mark = start;

  const PoseEstimate marker = estimate_pose(
      state.marker_map, frame.detections, state.intrinsics,
      state.last_marker_pose);
  result.timings.marker_us = us_since(mark);

  RigidTransform primary;
  if (marker.success) {
    primary = compose(marker.pose, inverse(state.t_marker_to_model));
    state.last_marker_pose = marker.pose;
    state.acquired = true;
    result.status = TrackStatus::Tracking;
  } else if (state.acquired && state.last_pose) {
    primary = *state.last_pose;
    result.status = TrackStatus::HoldingLastPose;
  } else {
    result.status = TrackStatus::AwaitingAcquisition;
    result.timings.total_us =
        std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() -
                                                              start)
            .count();
    return result;
  }

  // Geometric refinement of the primary pose against the depth cloud.
  const PointCloud scene_raw = depth_to_pointcloud(frame.depth,
                                                   state.intrinsics);
  const PointCloud scene = voxel_downsample(scene_raw, tp.d_star);
  result.timings.cloud_us = us_since(mark);

  RigidTransform t_model_from_camera = inverse(primary);
  RigidTransform chosen = t_model_from_camera;

  std::vector<int> visible;
  try {
    visible = extract_visible_points(state.merged_vertices,
                                     t_model_from_camera.translation);
  } catch (const Error&) {
    visible.clear();  // degenerate view; fall back to the primary pose
  }
  result.timings.visibility_us = us_since(mark);

  PointCloud neighborhood =
      crop_neighborhood(scene, state.model_tree, t_model_from_camera,
                        tp.d_nei);
  result.timings.crop_us = us_since(mark);

  if (!visible.empty() &&
      static_cast<int>(neighborhood.size()) >=
          tp.icp.neighbors_for_covariance &&
      static_cast<int>(visible.size()) >= tp.icp.neighbors_for_covariance) {
    PointCloud visible_cloud;
    visible_cloud.points.reserve(visible.size());
    std::vector<Eigen::Matrix3d> visible_covs;
    visible_covs.reserve(visible.size());
    for (int idx : visible) {
      visible_cloud.points.push_back(state.merged_vertices.points[idx]);
      visible_covs.push_back(state.model_covariances[idx]);
    }
    const KdTree visible_tree(visible_cloud.points);
    const auto source_covs =
        gicp_covariances(neighborhood, tp.icp.neighbors_for_covariance,
                         tp.icp.gicp_covariance_epsilon);
    try {
      const IcpResult icp = generalized_icp(
          neighborhood, visible_cloud, source_covs, visible_covs,
          visible_tree, t_model_from_camera, tp.icp);
      // Accept the refinement only if it does not worsen the objective on
      // its own final correspondence set.
      const auto corr = find_correspondences(
          neighborhood, visible_tree, icp.transform,
          tp.icp.max_correspondence_distance);
      if (!corr.empty()) {
        const double refined_obj =
            gicp_objective(neighborhood, visible_cloud, corr, source_covs,
                           visible_covs, icp.transform);
        const double primary_obj =
            gicp_objective(neighborhood, visible_cloud, corr, source_covs,
                           visible_covs, t_model_from_camera);
        if (refined_obj <= primary_obj) {
          chosen = icp.transform;
          result.refined = true;
        }
      }
    } catch (const Error&) {
      // NoCorrespondences and friends: keep the primary pose.
    }
  }
  result.timings.icp_us = us_since(mark);

  const RigidTransform patient_pose = inverse(chosen);
  result.patient_pose = patient_pose;
  state.last_pose = patient_pose;
  state.last_frame_index = frame.index;

  if (frame.scene_pose_valid) {
    const RigidTransform desired = compose(frame.scene_pose, state.p_u_ref);
    const RigidTransform adjustment = compose(patient_pose, inverse(desired));
    result.adjustment = adjustment;
    result.rotational_error_deg =
        rotation_angle(adjustment.rotation) * 180.0 / M_PI;
    result.translational_error_mm = adjustment.translation.norm() * 1000.0;
  }

  result.timings.total_us =
      std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() -
                                                            start)
          .count();
  return result;
}

std::optional<RigidTransform> world_patient_pose(const TrackResult& r) {
  if (!r.patient_pose || !r.scene_pose_valid) return std::nullopt;
  return compose(inverse(r.scene_pose), *r.patient_pose);
}

}  // namespace bodytrack
