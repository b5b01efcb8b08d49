// Visibility culling of model points (hidden point removal: spherical
// flipping plus convex hull) and neighborhood cropping of the depth cloud.
#pragma once

#include <Eigen/Core>
#include <vector>

#include "bodytrack/cloud.hpp"
#include "bodytrack/errors.hpp"
#include "bodytrack/kdtree.hpp"
#include "bodytrack/se3.hpp"

namespace bodytrack {

// Indices of the points visible from camera_pos. Points are flipped with
// radius R = 10^radius_exponent * max distance from the camera; a point is
// visible when its flipped image lies on the hull of the flipped set plus
// the origin. Coplanar inputs are retried with a deterministic 1e-9-scale
// jitter; *used_jitter reports when that happened.
std::vector<int> extract_visible_points(const PointCloud& model_points,
                                        const Eigen::Vector3d& camera_pos,
                                        double radius_exponent = 1.0,
                                        bool* used_jitter = nullptr);

// Scene points p with some model point closer than d_nei to T * p, where
// T = t_model_from_camera. Order preserved; normals carried along.
PointCloud crop_neighborhood(const PointCloud& scene,
                             const PointCloud& model_points,
                             const RigidTransform& t_model_from_camera,
                             double d_nei);

// Hot-path variant against a prebuilt model tree.
PointCloud crop_neighborhood(const PointCloud& scene, const KdTree& model_tree,
                             const RigidTransform& t_model_from_camera,
                             double d_nei);

}  // namespace bodytrack
