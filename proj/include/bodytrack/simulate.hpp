// Deterministic synthetic stand-in for the physical capture rig: mannequin
// body model with attached markers, orbit camera trajectories, ray-cast
// depth rendering, marker-corner projection, and noisy scene-tracker poses.
// All randomness is counter-based on the sequence seed, so any frame is
// reproducible in isolation.
#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "bodytrack/cloud.hpp"
#include "bodytrack/markers.hpp"
#include "bodytrack/raycast.hpp"
#include "bodytrack/se3.hpp"

namespace bodytrack {

struct NoiseModel {
  double depth_sigma_mm = 0.0;       // Gaussian, per valid pixel
  double pixel_sigma = 0.0;          // Gaussian, per corner coordinate
  double scene_pose_sigma_mm = 0.0;  // translation
  double scene_pose_sigma_deg = 0.0; // rotation angle (half-normal)
  double detection_dropout = 0.0;    // per marker per frame
  std::uint64_t seed = 0;            // the sequence seed
};

struct GroundTruth {
  RigidTransform body_pose;    // body frame -> world
  RigidTransform camera_pose;  // camera frame -> world
};

struct Frame {
  int index = 0;  // 1-based within a sequence
  DepthImage depth;
  MarkerDetections detections;
  RigidTransform scene_pose;  // environment map w.r.t. camera
  bool scene_pose_valid = true;
  GroundTruth ground_truth;
};

struct BodyModel {
  TriangleMesh mesh;      // the reference model, body frame
  MarkerMap marker_map;   // rigidly attached, same frame
};

// Deterministic torso-like surface (capsule body, neck, ellipsoid head as a
// composed revolution profile) with 12 markers of side 4 cm on the upper
// torso. resolution = segments per ring; the default lands near 10k
// vertices with typical edges just over a centimeter.
BodyModel make_mannequin(int resolution = 72);

// Per-pixel ray cast; nearest hit distance along the optical axis in
// integer millimeters, 0 for misses. Gaussian noise is added to the
// quantized value, then clamped to >= 0.
DepthImage render_depth(const TriangleMesh& mesh_world,
                        const RigidTransform& camera_pose,
                        const CameraIntrinsics& k, const NoiseModel& noise,
                        int frame_index = 0);

// Hot path: mesh held in its own frame behind a prebuilt BVH, rays moved
// into that frame.
DepthImage render_depth_bvh(const TriangleBvh& bvh,
                            const RigidTransform& t_mesh_from_camera,
                            const CameraIntrinsics& k, const NoiseModel& noise,
                            int frame_index = 0);

// Pinhole projection of marker corners. A marker is detected iff all four
// corners land inside the image, sit deeper than 0.1 m, and the face normal
// points within 80 degrees of the camera; then pixel noise and dropout.
MarkerDetections project_markers(const MarkerMap& map,
                                 const RigidTransform& body_pose,
                                 const RigidTransform& camera_pose,
                                 const CameraIntrinsics& k,
                                 const NoiseModel& noise, int frame_index = 0);

// Ground truth perturbed by a uniformly random rotation axis with
// |N(0, sigma)| angle and N(0, sigma)^3 translation. The flag is always
// true in this version.
std::pair<RigidTransform, bool> simulate_scene_pose(
    const RigidTransform& gt_pose, const NoiseModel& noise,
    int frame_index = 0);

// Camera orbit around a look-at center. Angles sweep linearly over the
// sequence; dolly moves the radius linearly.
struct CameraPath {
  Eigen::Vector3d center{0.0, 0.0, 0.0};
  double radius = 1.8;        // meters
  double height = 1.2;        // above the center
  double start_angle_deg = -60.0;
  double end_angle_deg = 60.0;
  double dolly = 0.0;         // radial change over the whole sequence
};

// Piecewise-constant-velocity pose script: waypoints at fractions of the
// sequence, slerp/lerp between them. Empty means the body stays at identity.
struct BodyMotion {
  std::vector<std::pair<double, RigidTransform>> waypoints;
};

struct SequenceSpec {
  int frame_count = 300;
  CameraIntrinsics intrinsics;
  NoiseModel noise;
  CameraPath camera;
  BodyMotion body;
  BodyModel model;
};

RigidTransform camera_pose_on_path(const CameraPath& path, int frame_index,
                                   int frame_count);
RigidTransform body_pose_on_script(const BodyMotion& motion, int frame_index,
                                   int frame_count);

// Deterministic evaluation-style motion around the rest pose: segments of
// constant-velocity moves with bounded translation/rotation amplitude.
BodyMotion random_body_motion(std::uint64_t seed, double amplitude_m,
                              double amplitude_deg, int segments);

// Generates frames 1..frame_count through the sink (streaming, so callers
// can write to disk without holding a sequence in memory).
void generate_sequence(const SequenceSpec& spec,
                       const std::function<void(Frame&&)>& sink);

std::vector<Frame> generate_sequence(const SequenceSpec& spec);

}  // namespace bodytrack
