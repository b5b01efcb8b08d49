// BVH-accelerated ray casting against triangle meshes (Moller-Trumbore).
// Used by the synthetic depth renderer and by test oracles.
#pragma once

#include <Eigen/Core>
#include <limits>
#include <vector>

#include "bodytrack/cloud.hpp"

namespace bodytrack {

class TriangleBvh {
 public:
  TriangleBvh() = default;
  explicit TriangleBvh(const TriangleMesh& mesh);

  bool empty() const { return nodes_.empty(); }

  // Smallest ray parameter t > t_min with a hit, or +infinity. The ray is
  // origin + t * dir with dir not necessarily unit length.
  double raycast(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                 double t_min = 1e-9) const;

  static constexpr double kMiss = std::numeric_limits<double>::infinity();

 private:
  struct Node {
    Eigen::Vector3d lo, hi;
    std::int32_t left = -1, right = -1;
    std::int32_t begin = 0, end = 0;  // triangle range when leaf
  };

  std::int32_t build(std::int32_t begin, std::int32_t end, int depth);

  struct Tri {
    Eigen::Vector3d a, e1, e2;  // vertex + edge vectors
    Eigen::Vector3d centroid;
  };

  std::vector<Tri> tris_;
  std::vector<std::int32_t> order_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

}  // namespace bodytrack
