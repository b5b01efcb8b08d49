// Exact 3-d tree over a fixed point set. Queries agree with brute force,
// ties broken by lower point index; read-only after construction.
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace bodytrack {

class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(const std::vector<Eigen::Vector3d>& points);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  // Exact k nearest neighbors ordered by (distance, index).
  std::vector<int> knn(const Eigen::Vector3d& q, int k) const;

  // All indices within distance r (inclusive), ordered by (distance, index).
  std::vector<int> radius_search(const Eigen::Vector3d& q, double r) const;

  // Index of the single nearest point, or -1 on an empty tree. When
  // max_distance >= 0, returns -1 unless the nearest point is strictly
  // closer than max_distance.
  int nearest(const Eigen::Vector3d& q, double max_distance = -1.0) const;

 private:
  struct Node {
    double split = 0.0;
    int axis = -1;          // -1 marks a leaf
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::int32_t begin = 0;  // leaf range into order_
    std::int32_t end = 0;
  };

  std::int32_t build(std::int32_t begin, std::int32_t end);

  std::vector<Eigen::Vector3d> points_;
  std::vector<std::int32_t> order_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

}  // namespace bodytrack
