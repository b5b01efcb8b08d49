#include "bodytrack/visibility.hpp"

#include <algorithm>
#include <cmath>

#include "bodytrack/convex_hull.hpp"
#include "bodytrack/random.hpp"

namespace bodytrack {

std::vector<int> extract_visible_points(const PointCloud& model_points,
                                        const Eigen::Vector3d& camera_pos,
                                        double radius_exponent,
                                        bool* used_jitter) {
  if (used_jitter) *used_jitter = false;
  const int n = static_cast<int>(model_points.size());
  if (n < 4) {
    throw DegenerateInput("extract_visible_points: need at least 4 points");
  }

  // Camera-centered coordinates and the flipping radius.
  std::vector<Eigen::Vector3d> centered(n);
  double max_norm = 0.0;
  for (int i = 0; i < n; ++i) {
    centered[i] = model_points.points[i] - camera_pos;
    const double len = centered[i].norm();
    if (len <= 1e-9) {
      throw CameraOnPoint("extract_visible_points: camera coincides with a point");
    }
    max_norm = std::max(max_norm, len);
  }
  const double radius = std::pow(10.0, radius_exponent) * max_norm;

  // Spherical flip p -> p + 2 (R - |p|) p / |p|, then hull with the origin.
  std::vector<Eigen::Vector3d> flipped(n + 1);
  for (int i = 0; i < n; ++i) {
    const double len = centered[i].norm();
    flipped[i] = centered[i] + 2.0 * (radius - len) * centered[i] / len;
  }
  flipped[n] = Eigen::Vector3d::Zero();  // the camera itself

  ConvexHull hull;
  try {
    hull = quickhull3(flipped);
  } catch (const DegenerateInput&) {
    // Flat model patches produce coplanar flipped sets; retry with a
    // deterministic jitter scaled well below any geometric tolerance.
    double diameter = 0.0;
    for (const auto& p : flipped) diameter = std::max(diameter, p.norm());
    const double scale = 1e-9 * 2.0 * diameter;
    const CounterRng rng(0x9d5ab4e1u, RngStream::generic);
    for (int i = 0; i < n; ++i) {
      flipped[i] += scale * rng.unit_vector(static_cast<std::uint64_t>(i));
    }
    hull = quickhull3(flipped);
    if (used_jitter) *used_jitter = true;
  }

  std::vector<int> visible;
  visible.reserve(hull.hull_points.size());
  for (int idx : hull.hull_points) {
    if (idx < n) visible.push_back(idx);
  }
  return visible;
}

PointCloud crop_neighborhood(const PointCloud& scene, const KdTree& model_tree,
                             const RigidTransform& t_model_from_camera,
                             double d_nei) {
  PointCloud out;
  const bool with_normals = scene.has_normals();
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Eigen::Vector3d q = t_model_from_camera.apply(scene.points[i]);
    if (model_tree.nearest(q, d_nei) >= 0) {
      out.points.push_back(scene.points[i]);
      if (with_normals) out.normals.push_back(scene.normals[i]);
    }
  }
  return out;
}

PointCloud crop_neighborhood(const PointCloud& scene,
                             const PointCloud& model_points,
                             const RigidTransform& t_model_from_camera,
                             double d_nei) {
  const KdTree tree(model_points.points);
  return crop_neighborhood(scene, tree, t_model_from_camera, d_nei);
}

}  // namespace bodytrack
