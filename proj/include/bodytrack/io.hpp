// File formats: PLY clouds/meshes (ascii and binary little-endian, float32
// coordinates), 16-bit PGM depth images, pose text files, the on-disk
// sequence directory, and the per-frame tracking results CSV.
#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bodytrack/cloud.hpp"
#include "bodytrack/errors.hpp"
#include "bodytrack/pipeline.hpp"
#include "bodytrack/simulate.hpp"

namespace bodytrack {

void write_ply(const std::filesystem::path& path, const PointCloud& cloud,
               bool binary = true);
void write_ply(const std::filesystem::path& path, const TriangleMesh& mesh,
               bool binary = true);
PointCloud read_ply_cloud(const std::filesystem::path& path);
TriangleMesh read_ply_mesh(const std::filesystem::path& path);

// Binary PGM, P5 maxval 65535, most significant byte first, millimeters.
void write_pgm16(const std::filesystem::path& path, const DepthImage& image);
DepthImage read_pgm16(const std::filesystem::path& path);

// Single-line pose text file ("tx ty tz qx qy qz qw").
void write_pose_file(const std::filesystem::path& path,
                     const RigidTransform& pose);
RigidTransform read_pose_file(const std::filesystem::path& path);

void write_intrinsics_json(const std::filesystem::path& path,
                           const CameraIntrinsics& k);
CameraIntrinsics read_intrinsics_json(const std::filesystem::path& path);

void write_marker_map_json(const std::filesystem::path& path,
                           const MarkerMap& map);
MarkerMap read_marker_map_json(const std::filesystem::path& path);

// Sequence directory layout:
//   intrinsics.json, body_model.ply, marker_map.json,
//   frames/NNNNNN.pgm, detections.jsonl, scene_poses.csv, ground_truth.csv
class SequenceWriter {
 public:
  // Refuses a non-empty existing directory unless force is set.
  SequenceWriter(const std::filesystem::path& dir, const CameraIntrinsics& k,
                 const BodyModel& model, bool force = false);
  ~SequenceWriter();

  void add(const Frame& frame);
  void finish();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

class SequenceReader {
 public:
  explicit SequenceReader(const std::filesystem::path& dir);

  const CameraIntrinsics& intrinsics() const { return intrinsics_; }
  const MarkerMap& marker_map() const { return marker_map_; }
  const TriangleMesh& body_mesh() const { return body_mesh_; }
  int frame_count() const { return frame_count_; }

  // 1-based; depth loaded from disk on demand.
  Frame frame(int index) const;

  std::vector<RigidTransform> ground_truth_body_poses() const;

 private:
  std::filesystem::path dir_;
  CameraIntrinsics intrinsics_;
  MarkerMap marker_map_;
  TriangleMesh body_mesh_;
  int frame_count_ = 0;
  std::vector<MarkerDetections> detections_;
  std::vector<std::pair<RigidTransform, bool>> scene_poses_;
  std::vector<GroundTruth> ground_truth_;
};

// Per-frame results: frame,status,tx,ty,tz,qx,qy,qz,qw,rot_err_deg,
// trans_err_mm,marker_us,cloud_us,visibility_us,crop_us,icp_us,total_us.
// The pose columns hold the patient pose in the scene-map frame; empty
// fields while awaiting acquisition.
void write_track_results_csv(const std::filesystem::path& path,
                             const std::vector<TrackResult>& results);

struct TrackRow {
  int frame_index = 0;
  TrackStatus status = TrackStatus::AwaitingAcquisition;
  std::optional<RigidTransform> world_pose;
  std::optional<double> rot_err_deg;
  std::optional<double> trans_err_mm;
  StageTimings timings;
};

std::vector<TrackRow> read_track_results_csv(
    const std::filesystem::path& path);

// Ground-truth CSV: frame,body pose columns,camera pose columns.
std::vector<RigidTransform> read_ground_truth_body_poses(
    const std::filesystem::path& path);

}  // namespace bodytrack
