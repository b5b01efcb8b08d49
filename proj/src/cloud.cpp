#include "bodytrack/cloud.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "bodytrack/kdtree.hpp"

namespace bodytrack {

PointCloud depth_to_pointcloud(const DepthImage& d,
                               const CameraIntrinsics& k) {
  PointCloud out;
  out.points.reserve(d.data.size());
  for (int v = 0; v < d.height; ++v) {
    for (int u = 0; u < d.width; ++u) {
      const std::uint16_t raw = d.at(u, v);
      if (raw == 0) continue;
      const double z = raw / 1000.0;
      out.points.emplace_back((u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z);
    }
  }
  return out;
}

double dynamic_voxel_size(const PointCloud& c, int n_target, double d0) {
  if (c.empty()) throw EmptyCloud("dynamic_voxel_size: empty cloud");
  Eigen::Vector3d lo = c.points.front();
  Eigen::Vector3d hi = lo;
  for (const auto& p : c.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double edge = (hi - lo).maxCoeff();
  const double volume = edge * edge * edge;
  return std::max(std::cbrt(volume / n_target), d0);
}

namespace {

struct VoxelKey {
  std::int64_t x, y, z;
  bool operator==(const VoxelKey& o) const {
    return x == o.x && y == o.y && z == o.z;
  }
  bool operator<(const VoxelKey& o) const {
    if (x != o.x) return x < o.x;
    if (y != o.y) return y < o.y;
    return z < o.z;
  }
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::uint64_t v : {static_cast<std::uint64_t>(k.x),
                            static_cast<std::uint64_t>(k.y),
                            static_cast<std::uint64_t>(k.z)}) {
      h ^= v;
      h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

struct VoxelAccum {
  Eigen::Vector3d point_sum = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal_sum = Eigen::Vector3d::Zero();
  int count = 0;
};

}  // namespace

PointCloud voxel_downsample(const PointCloud& c, double size) {
  if (!(size > 0.0)) {
    throw NonPositiveVoxelSize("voxel_downsample: size must be > 0");
  }
  PointCloud out;
  if (c.empty()) return out;

  Eigen::Vector3d lo = c.points.front();
  for (const auto& p : c.points) lo = lo.cwiseMin(p);

  std::unordered_map<VoxelKey, VoxelAccum, VoxelKeyHash> grid;
  grid.reserve(c.size());
  const bool with_normals = c.has_normals();
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Eigen::Vector3d rel = (c.points[i] - lo) / size;
    const VoxelKey key{static_cast<std::int64_t>(std::floor(rel.x())),
                       static_cast<std::int64_t>(std::floor(rel.y())),
                       static_cast<std::int64_t>(std::floor(rel.z()))};
    VoxelAccum& acc = grid[key];
    acc.point_sum += c.points[i];
    if (with_normals) acc.normal_sum += c.normals[i];
    ++acc.count;
  }

  std::vector<VoxelKey> keys;
  keys.reserve(grid.size());
  for (const auto& kv : grid) keys.push_back(kv.first);
  std::sort(keys.begin(), keys.end());

  out.points.reserve(keys.size());
  if (with_normals) out.normals.reserve(keys.size());
  for (const VoxelKey& key : keys) {
    const VoxelAccum& acc = grid.at(key);
    out.points.push_back(acc.point_sum / acc.count);
    if (with_normals) {
      Eigen::Vector3d n = acc.normal_sum;
      const double len = n.norm();
      out.normals.push_back(len > 1e-12 ? Eigen::Vector3d(n / len)
                                        : Eigen::Vector3d(0, 0, 1));
    }
  }
  return out;
}

PointCloud estimate_normals(const PointCloud& c, int k,
                            const Eigen::Vector3d& viewpoint) {
  if (c.size() < 3 || k < 3) {
    throw TooFewPoints("estimate_normals: need >= 3 points and k >= 3");
  }
  const int kk = std::min<int>(k, static_cast<int>(c.size()));
  const KdTree tree(c.points);

  PointCloud out;
  out.points = c.points;
  out.normals.resize(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
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
    Eigen::Vector3d n = eig.eigenvectors().col(0);  // smallest eigenvalue
    if (n.dot(viewpoint - c.points[i]) < 0.0) n = -n;
    out.normals[i] = n.normalized();
  }
  return out;
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a > b) std::swap(a, b);  // keep the lower index as root
    parent[b] = a;
  }
};

// One single-linkage pass. Positions are weighted so a cluster lands on the
// mean of all original vertices it absorbed, not the mean of centroids.
bool merge_pass(std::vector<Eigen::Vector3d>& vertices,
                std::vector<double>& weights,
                std::vector<Eigen::Vector3d>& normals,
                std::vector<Eigen::Vector3i>& triangles, double d) {
  const int n = static_cast<int>(vertices.size());
  UnionFind uf(n);
  bool any = false;
  for (const auto& tri : triangles) {
    for (int e = 0; e < 3; ++e) {
      const int a = tri(e), b = tri((e + 1) % 3);
      if ((vertices[a] - vertices[b]).norm() < d) {
        uf.unite(a, b);
        any = true;
      }
    }
  }
  if (!any) return false;

  // Cluster ids ordered by smallest member index.
  std::vector<int> remap(n, -1);
  std::vector<Eigen::Vector3d> new_vertices;
  std::vector<double> new_weights;
  std::vector<Eigen::Vector3d> new_normals;
  const bool with_normals = !normals.empty();
  for (int i = 0; i < n; ++i) {
    const int root = uf.find(i);
    if (remap[root] < 0) {
      remap[root] = static_cast<int>(new_vertices.size());
      new_vertices.push_back(Eigen::Vector3d::Zero());
      new_weights.push_back(0.0);
      if (with_normals) new_normals.push_back(Eigen::Vector3d::Zero());
    }
    const int id = remap[root];
    new_vertices[id] += weights[i] * vertices[i];
    new_weights[id] += weights[i];
    if (with_normals) new_normals[id] += weights[i] * normals[i];
  }
  for (std::size_t i = 0; i < new_vertices.size(); ++i) {
    new_vertices[i] /= new_weights[i];
    if (with_normals) {
      const double len = new_normals[i].norm();
      new_normals[i] =
          len > 1e-12 ? Eigen::Vector3d(new_normals[i] / len)
                      : Eigen::Vector3d(0, 0, 1);
    }
  }

  std::vector<Eigen::Vector3i> new_triangles;
  new_triangles.reserve(triangles.size());
  for (const auto& tri : triangles) {
    const Eigen::Vector3i t(remap[uf.find(tri(0))], remap[uf.find(tri(1))],
                            remap[uf.find(tri(2))]);
    if (t(0) == t(1) || t(1) == t(2) || t(0) == t(2)) continue;
    new_triangles.push_back(t);
  }

  vertices = std::move(new_vertices);
  weights = std::move(new_weights);
  normals = std::move(new_normals);
  triangles = std::move(new_triangles);
  return true;
}

}  // namespace

TriangleMesh merge_close_vertices(const TriangleMesh& m, double d) {
  TriangleMesh out = m;
  if (!(d > 0.0)) return out;
  std::vector<double> weights(out.vertices.size(), 1.0);
  while (merge_pass(out.vertices, weights, out.vertex_normals, out.triangles,
                    d)) {
  }
  return out;
}

std::vector<Eigen::Vector3d> mesh_vertex_normals(const TriangleMesh& m) {
  std::vector<Eigen::Vector3d> normals(m.vertices.size(),
                                       Eigen::Vector3d::Zero());
  for (const auto& tri : m.triangles) {
    const Eigen::Vector3d& a = m.vertices[tri(0)];
    const Eigen::Vector3d& b = m.vertices[tri(1)];
    const Eigen::Vector3d& c = m.vertices[tri(2)];
    const Eigen::Vector3d fn = (b - a).cross(c - a);  // area weighted
    normals[tri(0)] += fn;
    normals[tri(1)] += fn;
    normals[tri(2)] += fn;
  }
  for (auto& n : normals) {
    const double len = n.norm();
    n = len > 1e-12 ? Eigen::Vector3d(n / len) : Eigen::Vector3d(0, 0, 1);
  }
  return normals;
}

PointCloud cloud_from_mesh_vertices(const TriangleMesh& m, bool with_normals) {
  PointCloud out;
  out.points = m.vertices;
  if (with_normals) {
    out.normals = m.has_normals() ? m.vertex_normals : mesh_vertex_normals(m);
  }
  return out;
}

}  // namespace bodytrack
