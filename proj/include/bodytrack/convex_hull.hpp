// Exact 3D convex hull (quickhull) with consistently outward facet normals.
#pragma once

#include <Eigen/Core>
#include <array>
#include <vector>

#include "bodytrack/errors.hpp"

namespace bodytrack {

struct HullFacet {
  std::array<int, 3> vertices;   // indices into the input point list
  Eigen::Vector3d normal;        // unit, outward
  double offset;                 // plane is normal . x = offset
};

struct ConvexHull {
  std::vector<int> hull_points;  // sorted, unique input indices on the hull
  std::vector<HullFacet> facets;

  // Signed distance of p to the hull boundary along the most violated
  // facet plane; <= 0 means inside or on.
  double signed_distance(const Eigen::Vector3d& p) const;
};

// Throws DegenerateInput when the points are collinear/coplanar within
// 1e-12 times the bounding-box diameter (or fewer than 4 points).
ConvexHull quickhull3(const std::vector<Eigen::Vector3d>& points);

}  // namespace bodytrack
