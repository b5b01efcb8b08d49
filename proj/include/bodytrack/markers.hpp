// Fiducial-marker data shared by pose estimation and the simulator: the 3D
// marker map (body frame) and per-frame 2D corner detections.
#pragma once

#include <Eigen/Core>
#include <array>
#include <map>
#include <vector>

namespace bodytrack {

// id -> four corner positions in the body frame, counter-clockwise from the
// top-left corner as seen from outside the surface.
struct MarkerMap {
  std::map<int, std::array<Eigen::Vector3d, 4>> markers;
  double marker_side = 0.0;  // meters
};

struct MarkerDetection {
  int id = -1;
  std::array<Eigen::Vector2d, 4> corners;  // pixels
};

struct MarkerDetections {
  std::vector<MarkerDetection> markers;

  bool empty() const { return markers.empty(); }
  std::size_t size() const { return markers.size(); }
};

}  // namespace bodytrack
