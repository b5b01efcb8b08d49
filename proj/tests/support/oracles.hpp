// Independent oracles used to freeze expected values: brute-force neighbor
// search, a voxel-hash downsampler, ray casting against analytic shapes and
// meshes, point-to-mesh distance, and Kabsch alignment. These deliberately
// avoid the library's own implementations.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>
#include <vector>

#include "bodytrack/cloud.hpp"
#include "bodytrack/se3.hpp"

namespace oracle {

inline std::vector<int> brute_knn(const std::vector<Eigen::Vector3d>& pts,
                                  const Eigen::Vector3d& q, int k) {
  std::vector<std::pair<double, int>> d;
  d.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    d.emplace_back((pts[i] - q).squaredNorm(), static_cast<int>(i));
  }
  std::sort(d.begin(), d.end());
  std::vector<int> out;
  for (int i = 0; i < k && i < static_cast<int>(d.size()); ++i) {
    out.push_back(d[i].second);
  }
  return out;
}

inline std::vector<int> brute_radius(const std::vector<Eigen::Vector3d>& pts,
                                     const Eigen::Vector3d& q, double r) {
  std::vector<std::pair<double, int>> d;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d2 = (pts[i] - q).squaredNorm();
    if (d2 <= r * r) d.emplace_back(d2, static_cast<int>(i));
  }
  std::sort(d.begin(), d.end());
  std::vector<int> out;
  for (auto& e : d) out.push_back(e.second);
  return out;
}

// Independent voxel downsampler: ordered map keyed on integer triples.
inline std::vector<Eigen::Vector3d> brute_voxel_centroids(
    const std::vector<Eigen::Vector3d>& pts, double size) {
  if (pts.empty()) return {};
  Eigen::Vector3d lo = pts.front();
  for (const auto& p : pts) lo = lo.cwiseMin(p);
  std::map<std::tuple<long long, long long, long long>,
           std::pair<Eigen::Vector3d, int>>
      cells;
  for (const auto& p : pts) {
    const Eigen::Vector3d rel = (p - lo) / size;
    const auto key = std::make_tuple(
        static_cast<long long>(std::floor(rel.x())),
        static_cast<long long>(std::floor(rel.y())),
        static_cast<long long>(std::floor(rel.z())));
    auto& cell = cells[key];
    if (cell.second == 0) cell.first = Eigen::Vector3d::Zero();
    cell.first += p;
    cell.second += 1;
  }
  std::vector<Eigen::Vector3d> out;
  out.reserve(cells.size());
  for (const auto& kv : cells) {
    out.push_back(kv.second.first / kv.second.second);
  }
  return out;
}

// Ray / triangle-mesh intersection by exhaustive Moller-Trumbore; returns
// the smallest positive ray parameter or +inf.
inline double brute_raycast(const bodytrack::TriangleMesh& mesh,
                            const Eigen::Vector3d& origin,
                            const Eigen::Vector3d& dir) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& tri : mesh.triangles) {
    const Eigen::Vector3d& a = mesh.vertices[tri(0)];
    const Eigen::Vector3d e1 = mesh.vertices[tri(1)] - a;
    const Eigen::Vector3d e2 = mesh.vertices[tri(2)] - a;
    const Eigen::Vector3d pvec = dir.cross(e2);
    const double det = e1.dot(pvec);
    if (std::abs(det) < 1e-15) continue;
    const double inv = 1.0 / det;
    const Eigen::Vector3d tvec = origin - a;
    const double u = tvec.dot(pvec) * inv;
    if (u < -1e-12 || u > 1.0 + 1e-12) continue;
    const Eigen::Vector3d qvec = tvec.cross(e1);
    const double v = dir.dot(qvec) * inv;
    if (v < -1e-12 || u + v > 1.0 + 1e-12) continue;
    const double t = e2.dot(qvec) * inv;
    if (t > 1e-12 && t < best) best = t;
  }
  return best;
}

// Visibility of points on an analytic sphere from an external camera: a
// sphere point is visible when the segment camera->point does not cross the
// sphere earlier than the point itself.
inline bool sphere_point_visible(const Eigen::Vector3d& center, double radius,
                                 const Eigen::Vector3d& camera,
                                 const Eigen::Vector3d& point,
                                 double tol = 1e-9) {
  const Eigen::Vector3d d = point - camera;
  const double len = d.norm();
  const Eigen::Vector3d dir = d / len;
  // Smallest positive root of |camera + t dir - center|^2 = r^2.
  const Eigen::Vector3d oc = camera - center;
  const double b = 2.0 * dir.dot(oc);
  const double c = oc.squaredNorm() - radius * radius;
  const double disc = b * b - 4.0 * c;
  if (disc <= 0.0) return true;
  const double t0 = (-b - std::sqrt(disc)) / 2.0;
  return t0 >= len - tol;
}

inline double point_to_triangle_distance(const Eigen::Vector3d& p,
                                         const Eigen::Vector3d& a,
                                         const Eigen::Vector3d& b,
                                         const Eigen::Vector3d& c) {
  // Ericson's closest-point-on-triangle.
  const Eigen::Vector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return (p - a).norm();
  const Eigen::Vector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return (p - b).norm();
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return (p - (a + v * ab)).norm();
  }
  const Eigen::Vector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return (p - c).norm();
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return (p - (a + w * ac)).norm();
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return (p - (b + w * (c - b))).norm();
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return (p - (a + ab * v + ac * w)).norm();
}

inline double point_to_mesh_distance(const Eigen::Vector3d& p,
                                     const bodytrack::TriangleMesh& mesh) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& tri : mesh.triangles) {
    best = std::min(best, point_to_triangle_distance(
                              p, mesh.vertices[tri(0)], mesh.vertices[tri(1)],
                              mesh.vertices[tri(2)]));
  }
  return best;
}

// Rigid Kabsch alignment mapping a[i] onto b[i] (least squares).
inline bodytrack::RigidTransform kabsch(
    const std::vector<Eigen::Vector3d>& a,
    const std::vector<Eigen::Vector3d>& b) {
  Eigen::Vector3d ca = Eigen::Vector3d::Zero(), cb = Eigen::Vector3d::Zero();
  for (const auto& p : a) ca += p;
  for (const auto& p : b) cb += p;
  ca /= static_cast<double>(a.size());
  cb /= static_cast<double>(b.size());
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < a.size(); ++i) {
    h += (a[i] - ca) * (b[i] - cb).transpose();
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant();
  bodytrack::RigidTransform t;
  t.rotation = svd.matrixV() * d * svd.matrixU().transpose();
  t.translation = cb - t.rotation * ca;
  return t;
}

}  // namespace oracle
