// Point-cloud and mesh primitives: depth unprojection, voxel downsampling
// (including the dynamically sized variant), normal estimation, and mesh
// vertex merging.
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "bodytrack/errors.hpp"

namespace bodytrack {

struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<Eigen::Vector3d> normals;  // empty, or one unit normal per point

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return !normals.empty(); }
};

struct TriangleMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<Eigen::Vector3i> triangles;
  std::vector<Eigen::Vector3d> vertex_normals;  // empty or per-vertex

  bool has_normals() const { return !vertex_normals.empty(); }
};

// Depth in millimeters, 0 = invalid, row-major.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> data;

  std::uint16_t at(int u, int v) const { return data[v * width + u]; }
  std::uint16_t& at(int u, int v) { return data[v * width + u]; }
};

struct CameraIntrinsics {
  double fx = 0.0, fy = 0.0;
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;

  bool valid() const {
    return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx >= 0.0 &&
           cx < width && cy >= 0.0 && cy < height;
  }
};

// Pinhole back-projection, one point per valid pixel in row-major pixel
// order; depth converted from millimeters to meters.
PointCloud depth_to_pointcloud(const DepthImage& d, const CameraIntrinsics& k);

// max(cbrt(V / n_target), d0) where V is the volume of the axis-aligned
// bounding cube (edge = largest extent). Throws EmptyCloud.
double dynamic_voxel_size(const PointCloud& c, int n_target, double d0);

// One point per occupied voxel at the member centroid; voxel grid anchored
// at the bounding-box minimum with half-open cells; output ordered by
// ascending lexicographic voxel index. Normals averaged then renormalized.
PointCloud voxel_downsample(const PointCloud& c, double size);

// Per-point normal from the covariance of the k nearest neighbors, oriented
// toward the viewpoint. Throws TooFewPoints when c has < 3 points or k < 3.
PointCloud estimate_normals(const PointCloud& c, int k,
                            const Eigen::Vector3d& viewpoint =
                                Eigen::Vector3d::Zero());

// Clusters vertices by single linkage over mesh edges shorter than d and
// replaces each cluster with the average of its original vertices, repeating
// until no surviving edge is shorter than d (the single pass is not a fixed
// point when merged centroids move within range of each other). Collapsed
// triangles are dropped.
TriangleMesh merge_close_vertices(const TriangleMesh& m, double d);

// Area-weighted vertex normals from triangle winding.
std::vector<Eigen::Vector3d> mesh_vertex_normals(const TriangleMesh& m);

// Convenience: mesh vertices as a cloud, optionally with mesh normals.
PointCloud cloud_from_mesh_vertices(const TriangleMesh& m,
                                    bool with_normals = false);

}  // namespace bodytrack
