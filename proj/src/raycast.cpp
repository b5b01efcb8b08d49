#include "bodytrack/raycast.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

namespace bodytrack {

namespace {
constexpr int kLeafTris = 4;
constexpr int kMaxDepth = 48;
}  // namespace

TriangleBvh::TriangleBvh(const TriangleMesh& mesh) {
  tris_.reserve(mesh.triangles.size());
  for (const auto& t : mesh.triangles) {
    Tri tri;
    tri.a = mesh.vertices[t(0)];
    tri.e1 = mesh.vertices[t(1)] - tri.a;
    tri.e2 = mesh.vertices[t(2)] - tri.a;
    tri.centroid = tri.a + (tri.e1 + tri.e2) / 3.0;
    tris_.push_back(tri);
  }
  order_.resize(tris_.size());
  for (std::size_t i = 0; i < order_.size(); ++i)
    order_[i] = static_cast<std::int32_t>(i);
  if (!tris_.empty()) {
    nodes_.reserve(2 * tris_.size() / kLeafTris + 8);
    root_ = build(0, static_cast<std::int32_t>(tris_.size()), 0);
  }
}

std::int32_t TriangleBvh::build(std::int32_t begin, std::int32_t end,
                                int depth) {
  Node node;
  node.lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  node.hi = -node.lo;
  for (std::int32_t i = begin; i < end; ++i) {
    const Tri& t = tris_[order_[i]];
    for (const Eigen::Vector3d& v :
         {t.a, Eigen::Vector3d(t.a + t.e1), Eigen::Vector3d(t.a + t.e2)}) {
      node.lo = node.lo.cwiseMin(v);
      node.hi = node.hi.cwiseMax(v);
    }
  }
  node.begin = begin;
  node.end = end;
  if (end - begin <= kLeafTris || depth >= kMaxDepth) {
    nodes_.push_back(node);
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }

  int axis = 0;
  (node.hi - node.lo).maxCoeff(&axis);
  const std::int32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end, [&](std::int32_t a, std::int32_t b) {
                     const double ca = tris_[a].centroid(axis);
                     const double cb = tris_[b].centroid(axis);
                     return ca != cb ? ca < cb : a < b;
                   });

  const std::int32_t self = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(node);
  const std::int32_t left = build(begin, mid, depth + 1);
  const std::int32_t right = build(mid, end, depth + 1);
  nodes_[self].left = left;
  nodes_[self].right = right;
  return self;
}

double TriangleBvh::raycast(const Eigen::Vector3d& origin,
                            const Eigen::Vector3d& dir, double t_min) const {
  if (nodes_.empty()) return kMiss;
  const Eigen::Vector3d inv_dir = dir.cwiseInverse();
  double best = kMiss;

  auto box_hit = [&](const Node& n) {
    double t0 = t_min, t1 = best;
    for (int a = 0; a < 3; ++a) {
      if (dir(a) == 0.0) {  // avoid 0 * inf when the origin sits on a slab
        if (origin(a) < n.lo(a) || origin(a) > n.hi(a)) return false;
        continue;
      }
      double lo = (n.lo(a) - origin(a)) * inv_dir(a);
      double hi = (n.hi(a) - origin(a)) * inv_dir(a);
      if (inv_dir(a) < 0.0) std::swap(lo, hi);
      t0 = std::max(t0, lo);
      t1 = std::min(t1, hi);
      if (t0 > t1) return false;
    }
    return true;
  };

  std::int32_t stack[kMaxDepth + 2];
  int top = 0;
  stack[top++] = root_;
  while (top > 0) {
    const Node& n = nodes_[stack[--top]];
    if (!box_hit(n)) continue;
    if (n.left < 0) {
      for (std::int32_t i = n.begin; i < n.end; ++i) {
        const Tri& tri = tris_[order_[i]];
        const Eigen::Vector3d pvec = dir.cross(tri.e2);
        const double det = tri.e1.dot(pvec);
        if (std::abs(det) < 1e-300) continue;
        const double inv_det = 1.0 / det;
        const Eigen::Vector3d tvec = origin - tri.a;
        const double u = tvec.dot(pvec) * inv_det;
        if (u < 0.0 || u > 1.0) continue;
        const Eigen::Vector3d qvec = tvec.cross(tri.e1);
        const double v = dir.dot(qvec) * inv_det;
        if (v < 0.0 || u + v > 1.0) continue;
        const double t = tri.e2.dot(qvec) * inv_det;
        if (t > t_min && t < best) best = t;
      }
    } else {
      stack[top++] = n.left;
      stack[top++] = n.right;
    }
  }
  return best;
}

}  // namespace bodytrack
