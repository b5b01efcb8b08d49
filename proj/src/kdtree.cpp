#include "bodytrack/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace bodytrack {

namespace {
constexpr int kLeafSize = 16;

struct HeapEntry {
  double d2;
  int index;
  bool operator<(const HeapEntry& o) const {
    return d2 != o.d2 ? d2 < o.d2 : index < o.index;
  }
};
}  // namespace

KdTree::KdTree(const std::vector<Eigen::Vector3d>& points) : points_(points) {
  order_.resize(points_.size());
  for (std::size_t i = 0; i < order_.size(); ++i)
    order_[i] = static_cast<std::int32_t>(i);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 8);
    root_ = build(0, static_cast<std::int32_t>(points_.size()));
  }
}

std::int32_t KdTree::build(std::int32_t begin, std::int32_t end) {
  Node node;
  node.begin = begin;
  node.end = end;
  if (end - begin <= kLeafSize) {
    // Leaf order fixed by index for determinism.
    std::sort(order_.begin() + begin, order_.begin() + end);
    nodes_.push_back(node);
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }

  Eigen::Vector3d lo = points_[order_[begin]];
  Eigen::Vector3d hi = lo;
  for (std::int32_t i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);

  const std::int32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end,
                   [&](std::int32_t a, std::int32_t b) {
                     const double pa = points_[a](axis), pb = points_[b](axis);
                     return pa != pb ? pa < pb : a < b;
                   });
  node.axis = axis;
  node.split = points_[order_[mid]](axis);

  const std::int32_t self = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(node);
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  nodes_[self].left = left;
  nodes_[self].right = right;
  return self;
}

std::vector<int> KdTree::knn(const Eigen::Vector3d& q, int k) const {
  std::vector<int> out;
  if (empty() || k <= 0) return out;
  k = std::min<int>(k, static_cast<int>(points_.size()));

  std::priority_queue<HeapEntry> heap;  // worst candidate on top
  auto consider = [&](std::int32_t idx) {
    const HeapEntry e{(points_[idx] - q).squaredNorm(), idx};
    if (static_cast<int>(heap.size()) < k) {
      heap.push(e);
    } else if (e < heap.top()) {
      heap.pop();
      heap.push(e);
    }
  };

  // Iterative traversal, nearer child first.
  std::vector<std::int32_t> stack{root_};
  while (!stack.empty()) {
    const std::int32_t ni = stack.back();
    stack.pop_back();
    const Node& n = nodes_[ni];
    if (n.axis < 0) {
      for (std::int32_t i = n.begin; i < n.end; ++i) consider(order_[i]);
      continue;
    }
    const double delta = q(n.axis) - n.split;
    const std::int32_t near = delta < 0.0 ? n.left : n.right;
    const std::int32_t far = delta < 0.0 ? n.right : n.left;
    if (static_cast<int>(heap.size()) < k ||
        delta * delta <= heap.top().d2) {
      stack.push_back(far);
    }
    stack.push_back(near);
  }

  // The pruning bound above is loose for ties; rebuild exact order.
  std::vector<HeapEntry> entries;
  entries.reserve(heap.size());
  while (!heap.empty()) {
    entries.push_back(heap.top());
    heap.pop();
  }
  std::sort(entries.begin(), entries.end());
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.index);
  return out;
}

std::vector<int> KdTree::radius_search(const Eigen::Vector3d& q,
                                       double r) const {
  std::vector<int> out;
  if (empty() || r < 0.0) return out;
  const double r2 = r * r;
  std::vector<HeapEntry> hits;

  std::vector<std::int32_t> stack{root_};
  while (!stack.empty()) {
    const std::int32_t ni = stack.back();
    stack.pop_back();
    const Node& n = nodes_[ni];
    if (n.axis < 0) {
      for (std::int32_t i = n.begin; i < n.end; ++i) {
        const std::int32_t idx = order_[i];
        const double d2 = (points_[idx] - q).squaredNorm();
        if (d2 <= r2) hits.push_back({d2, idx});
      }
      continue;
    }
    const double delta = q(n.axis) - n.split;
    if (delta <= r) stack.push_back(n.left);
    if (-delta <= r) stack.push_back(n.right);
  }

  std::sort(hits.begin(), hits.end());
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back(h.index);
  return out;
}

int KdTree::nearest(const Eigen::Vector3d& q, double max_distance) const {
  if (empty()) return -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  if (max_distance >= 0.0) best_d2 = max_distance * max_distance;
  int best = -1;

  std::vector<std::int32_t> stack{root_};
  while (!stack.empty()) {
    const std::int32_t ni = stack.back();
    stack.pop_back();
    const Node& n = nodes_[ni];
    if (n.axis < 0) {
      for (std::int32_t i = n.begin; i < n.end; ++i) {
        const std::int32_t idx = order_[i];
        const double d2 = (points_[idx] - q).squaredNorm();
        if (d2 < best_d2 || (d2 == best_d2 && best >= 0 && idx < best)) {
          best_d2 = d2;
          best = idx;
        }
      }
      continue;
    }
    const double delta = q(n.axis) - n.split;
    const std::int32_t near = delta < 0.0 ? n.left : n.right;
    const std::int32_t far = delta < 0.0 ? n.right : n.left;
    if (delta * delta <= best_d2) stack.push_back(far);
    stack.push_back(near);
  }
  return best;
}

}  // namespace bodytrack
