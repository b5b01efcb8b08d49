#include "bodytrack/simulate.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>

#include "bodytrack/parallel.hpp"
#include "bodytrack/random.hpp"

namespace bodytrack {

namespace {

constexpr double kBodyLength = 1.70;  // along x, meters
constexpr double kBodyCenter = 0.85;  // body frame origin at mid-torso

// Composed revolution profile: capsule torso, neck cylinder, ellipsoid head.
// The parameter s runs over [0, kBodyLength] from the foot end.
double profile_radius(double s) {
  const double torso_r = 0.16;
  const double torso_len = 1.40;
  double torso = 0.0;
  if (s >= 0.0 && s <= torso_len) {
    if (s < torso_r) {
      torso = std::sqrt(std::max(0.0, torso_r * torso_r -
                                          (torso_r - s) * (torso_r - s)));
    } else if (s > torso_len - torso_r) {
      const double d = s - (torso_len - torso_r);
      torso = std::sqrt(std::max(0.0, torso_r * torso_r - d * d));
    } else {
      torso = torso_r;
    }
  }
  double neck = 0.0;
  if (s >= 1.25 && s <= 1.60) neck = 0.065;
  double head = 0.0;
  const double head_center = 1.56, head_half = 0.14, head_r = 0.105;
  if (std::abs(s - head_center) < head_half) {
    const double q = (s - head_center) / head_half;
    head = head_r * std::sqrt(std::max(0.0, 1.0 - q * q));
  }
  return std::max({torso, neck, head});
}

// Gentle azimuthal features (belly, shoulder, hip, flattened chest) so the
// surface is not a body of revolution: depth-only registration would
// otherwise be nearly blind to rotation about the long axis.
double shape_scale(double s, double phi) {
  auto bump = [&](double s0, double ws, double phi0, double wphi, double amp) {
    const double ds = (s - s0) / ws;
    const double dp = std::atan2(std::sin(phi - phi0),
                                 std::cos(phi - phi0)) / wphi;
    return amp * std::exp(-ds * ds - dp * dp);
  };
  double scale = 1.0;
  scale -= bump(0.95, 0.30, 0.0, 0.9, 0.08);   // flatter chest
  scale += bump(0.55, 0.18, 0.0, 0.7, 0.12);   // belly
  scale += bump(1.18, 0.12, 1.0, 0.5, 0.15);   // one shoulder
  scale += bump(0.28, 0.15, -0.9, 0.6, 0.10);  // hip
  return scale;
}

Eigen::Vector3d surface_point(double s, double phi) {
  const double r = profile_radius(s) * shape_scale(s, phi);
  // Elliptical cross-section: wider than tall, like a torso lying flat.
  return {s - kBodyCenter, 1.25 * r * std::sin(phi), 0.85 * r * std::cos(phi)};
}

Eigen::Vector3d surface_normal(double s, double phi) {
  const double h = 1e-5;
  const Eigen::Vector3d ds =
      (surface_point(s + h, phi) - surface_point(s - h, phi)) / (2 * h);
  const Eigen::Vector3d dphi =
      (surface_point(s, phi + h) - surface_point(s, phi - h)) / (2 * h);
  Eigen::Vector3d n = dphi.cross(ds);
  n.normalize();
  // Outward: away from the centerline.
  const Eigen::Vector3d radial(0.0, std::sin(phi), std::cos(phi));
  if (n.dot(radial) < 0.0) n = -n;
  return n;
}

}  // namespace

BodyModel make_mannequin(int resolution) {
  resolution = std::max(resolution, 8);
  const int rings = 2 * resolution;
  const double ds = kBodyLength / rings;
  // Slightly tighter than the ring spacing, with a deterministic wobble, so
  // a d_*-scale merge finds short local clusters but never a whole ring.
  const double target_spacing = 0.92 * ds;

  BodyModel model;
  TriangleMesh& mesh = model.mesh;

  // Poles plus rings whose segment count tracks the local circumference;
  // tiny near-pole fans would otherwise collapse far off the surface when
  // vertices are merged.
  mesh.vertices.push_back(surface_point(0.0, 0.0));
  mesh.vertices.push_back(surface_point(kBodyLength, 0.0));

  std::vector<std::vector<int>> ring_vertices(rings + 1);
  std::vector<std::vector<double>> ring_angles(rings + 1);
  for (int j = 1; j < rings; ++j) {
    const double s = j * ds;
    const double r = profile_radius(s);
    const double circumference = 2.0 * M_PI * r * 1.05;  // elliptical mean
    const int n = std::max(8, static_cast<int>(std::lround(
                                  circumference / target_spacing)));
    for (int i = 0; i < n; ++i) {
      const double wobble = 0.15 * std::sin(2.399963 * i + 0.7 * j);
      const double phi = 2.0 * M_PI * (i + wobble) / n;
      ring_vertices[j].push_back(static_cast<int>(mesh.vertices.size()));
      ring_angles[j].push_back(phi);
      mesh.vertices.push_back(surface_point(s, phi));
    }
  }

  // Bridges two rings of different counts with a monotone two-pointer walk
  // over the unrolled angle sequences; na + nb triangles, watertight.
  auto bridge = [&](int ja, int jb) {
    const auto& va = ring_vertices[ja];
    const auto& vb = ring_vertices[jb];
    const auto& aa = ring_angles[ja];
    const auto& ab = ring_angles[jb];
    const int na = static_cast<int>(va.size());
    const int nb = static_cast<int>(vb.size());
    auto angle_a = [&](int i) { return aa[i % na] + 2.0 * M_PI * (i / na); };
    auto angle_b = [&](int i) { return ab[i % nb] + 2.0 * M_PI * (i / nb); };
    int ia = 0, ib = 0;
    while (ia < na || ib < nb) {
      const bool advance_a =
          ib >= nb || (ia < na && angle_a(ia + 1) <= angle_b(ib + 1));
      if (advance_a) {
        mesh.triangles.push_back({va[ia % na], va[(ia + 1) % na],
                                  vb[ib % nb]});
        ++ia;
      } else {
        mesh.triangles.push_back({va[ia % na], vb[(ib + 1) % nb],
                                  vb[ib % nb]});
        ++ib;
      }
    }
  };

  for (int i = 0; i < static_cast<int>(ring_vertices[1].size()); ++i) {
    const int n = static_cast<int>(ring_vertices[1].size());
    mesh.triangles.push_back({0, ring_vertices[1][(i + 1) % n],
                              ring_vertices[1][i]});
  }
  for (int j = 1; j < rings - 1; ++j) bridge(j, j + 1);
  const auto& last = ring_vertices[rings - 1];
  for (int i = 0; i < static_cast<int>(last.size()); ++i) {
    const int n = static_cast<int>(last.size());
    mesh.triangles.push_back({1, last[i], last[(i + 1) % n]});
  }

  // Twelve markers on the upper torso, corners on the local tangent plane.
  model.marker_map.marker_side = 0.04;
  const double half = model.marker_map.marker_side / 2.0;
  int id = 0;
  for (double s : {0.30, 0.78, 1.22}) {
    for (double phi_deg : {-65.0, -22.0, 22.0, 65.0}) {
      const double phi = phi_deg * M_PI / 180.0;
      const Eigen::Vector3d c = surface_point(s, phi);
      const Eigen::Vector3d n = surface_normal(s, phi);
      Eigen::Vector3d t1 =
          (surface_point(s + 1e-4, phi) - surface_point(s - 1e-4, phi));
      t1 = (t1 - n * n.dot(t1)).normalized();
      const Eigen::Vector3d t2 = n.cross(t1);
      // Counter-clockwise from top-left, viewed from outside.
      model.marker_map.markers[id] = {
          Eigen::Vector3d(c - half * t1 + half * t2),
          Eigen::Vector3d(c - half * t1 - half * t2),
          Eigen::Vector3d(c + half * t1 - half * t2),
          Eigen::Vector3d(c + half * t1 + half * t2)};
      ++id;
    }
  }
  return model;
}

DepthImage render_depth_bvh(const TriangleBvh& bvh,
                            const RigidTransform& t_mesh_from_camera,
                            const CameraIntrinsics& k, const NoiseModel& noise,
                            int frame_index) {
  DepthImage out;
  out.width = k.width;
  out.height = k.height;
  out.data.assign(static_cast<std::size_t>(k.width) * k.height, 0);
  if (bvh.empty()) return out;

  const Eigen::Vector3d origin = t_mesh_from_camera.translation;
  const CounterRng rng(noise.seed, RngStream::depth_noise,
                       static_cast<std::uint64_t>(frame_index));

  parallel_for(0, static_cast<std::size_t>(k.height), [&](std::size_t row) {
    const int v = static_cast<int>(row);
    for (int u = 0; u < k.width; ++u) {
      // Direction scaled so the ray parameter equals camera-frame depth.
      const Eigen::Vector3d dir_cam((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
      const Eigen::Vector3d dir = t_mesh_from_camera.rotation * dir_cam;
      const double t = bvh.raycast(origin, dir);
      if (!std::isfinite(t)) continue;
      double mm = std::llround(t * 1000.0);
      if (noise.depth_sigma_mm > 0.0) {
        mm += noise.depth_sigma_mm *
              rng.normal(static_cast<std::uint64_t>(v) * k.width + u);
      }
      const double clamped = std::clamp(std::round(mm), 0.0, 65535.0);
      out.at(u, v) = static_cast<std::uint16_t>(clamped);
    }
  });
  return out;
}

DepthImage render_depth(const TriangleMesh& mesh_world,
                        const RigidTransform& camera_pose,
                        const CameraIntrinsics& k, const NoiseModel& noise,
                        int frame_index) {
  const TriangleBvh bvh(mesh_world);
  return render_depth_bvh(bvh, camera_pose, k, noise, frame_index);
}

MarkerDetections project_markers(const MarkerMap& map,
                                 const RigidTransform& body_pose,
                                 const RigidTransform& camera_pose,
                                 const CameraIntrinsics& k,
                                 const NoiseModel& noise, int frame_index) {
  MarkerDetections out;
  const RigidTransform t_cam_from_body = compose(inverse(camera_pose),
                                                 body_pose);
  const CounterRng pix_rng(noise.seed, RngStream::pixel_noise,
                           static_cast<std::uint64_t>(frame_index));
  const CounterRng drop_rng(noise.seed, RngStream::dropout,
                            static_cast<std::uint64_t>(frame_index));

  std::uint64_t marker_slot = 0;
  for (const auto& [id, corners] : map.markers) {
    const std::uint64_t slot = marker_slot++;
    // Face culling against the ground-truth geometry.
    const Eigen::Vector3d face_n =
        body_pose.rotation *
        (corners[1] - corners[0]).cross(corners[3] - corners[0]).normalized();
    Eigen::Vector3d center_w = Eigen::Vector3d::Zero();
    for (const auto& c : corners) center_w += body_pose.apply(c);
    center_w /= 4.0;
    const Eigen::Vector3d to_camera = camera_pose.translation - center_w;
    if (face_n.dot(to_camera.normalized()) < std::cos(80.0 * M_PI / 180.0)) {
      continue;
    }

    MarkerDetection det;
    det.id = id;
    bool ok = true;
    for (int c = 0; c < 4 && ok; ++c) {
      const Eigen::Vector3d p = t_cam_from_body.apply(corners[c]);
      if (p.z() <= 0.1) {
        ok = false;
        break;
      }
      Eigen::Vector2d px(k.fx * p.x() / p.z() + k.cx,
                         k.fy * p.y() / p.z() + k.cy);
      if (noise.pixel_sigma > 0.0) {
        px.x() += noise.pixel_sigma * pix_rng.normal(slot * 8 + c * 2 + 0);
        px.y() += noise.pixel_sigma * pix_rng.normal(slot * 8 + c * 2 + 1);
      }
      if (px.x() < 0.0 || px.x() > k.width - 1 || px.y() < 0.0 ||
          px.y() > k.height - 1) {
        ok = false;
        break;
      }
      det.corners[c] = px;
    }
    if (!ok) continue;
    if (noise.detection_dropout > 0.0 &&
        drop_rng.uniform(slot) < noise.detection_dropout) {
      continue;
    }
    out.markers.push_back(det);
  }
  return out;
}

std::pair<RigidTransform, bool> simulate_scene_pose(
    const RigidTransform& gt_pose, const NoiseModel& noise, int frame_index) {
  if (noise.scene_pose_sigma_mm <= 0.0 && noise.scene_pose_sigma_deg <= 0.0) {
    return {gt_pose, true};
  }
  const CounterRng rng(noise.seed, RngStream::scene_pose,
                       static_cast<std::uint64_t>(frame_index));
  RigidTransform delta;
  const double angle = std::abs(rng.normal(0)) *
                       noise.scene_pose_sigma_deg * M_PI / 180.0;
  if (angle > 0.0) {
    delta.rotation = from_angle_axis({rng.unit_vector(1), angle});
  }
  delta.translation = rng.normal3(2) * (noise.scene_pose_sigma_mm / 1000.0);
  return {compose(delta, gt_pose), true};
}

RigidTransform camera_pose_on_path(const CameraPath& path, int frame_index,
                                   int frame_count) {
  const double f =
      frame_count > 1
          ? static_cast<double>(frame_index - 1) / (frame_count - 1)
          : 0.0;
  const double angle =
      (path.start_angle_deg +
       f * (path.end_angle_deg - path.start_angle_deg)) * M_PI / 180.0;
  const double radius = path.radius + f * path.dolly;

  const Eigen::Vector3d position =
      path.center + Eigen::Vector3d(radius * std::cos(angle),
                                    radius * std::sin(angle), path.height);
  const Eigen::Vector3d forward = (path.center - position).normalized();
  Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitZ());
  if (right.norm() < 1e-9) right = Eigen::Vector3d::UnitX();
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right);

  RigidTransform pose;  // camera -> world; camera looks along +z, v grows down
  pose.rotation.col(0) = right;
  pose.rotation.col(1) = down;
  pose.rotation.col(2) = forward;
  pose.translation = position;
  return pose;
}

namespace {

RigidTransform interpolate(const RigidTransform& a, const RigidTransform& b,
                           double f) {
  const Eigen::Quaterniond qa(a.rotation), qb(b.rotation);
  RigidTransform out;
  out.rotation = qa.slerp(f, qb).toRotationMatrix();
  out.translation = (1.0 - f) * a.translation + f * b.translation;
  return out;
}

}  // namespace

RigidTransform body_pose_on_script(const BodyMotion& motion, int frame_index,
                                   int frame_count) {
  if (motion.waypoints.empty()) return RigidTransform::identity();
  const double f =
      frame_count > 1
          ? static_cast<double>(frame_index - 1) / (frame_count - 1)
          : 0.0;
  if (f <= motion.waypoints.front().first) {
    return motion.waypoints.front().second;
  }
  for (std::size_t i = 1; i < motion.waypoints.size(); ++i) {
    const auto& [f1, p1] = motion.waypoints[i];
    if (f <= f1) {
      const auto& [f0, p0] = motion.waypoints[i - 1];
      const double local = (f - f0) / std::max(f1 - f0, 1e-12);
      return interpolate(p0, p1, local);
    }
  }
  return motion.waypoints.back().second;
}

BodyMotion random_body_motion(std::uint64_t seed, double amplitude_m,
                              double amplitude_deg, int segments) {
  const CounterRng rng(seed, RngStream::body_script);
  BodyMotion motion;
  std::uint64_t counter = 0;
  for (int i = 0; i <= segments; ++i) {
    RigidTransform pose;
    const double angle = rng.uniform(counter) * amplitude_deg * M_PI / 180.0;
    pose.rotation = from_angle_axis({rng.unit_vector(counter + 1), angle});
    const Eigen::Vector3d u(rng.uniform(counter + 2), rng.uniform(counter + 3),
                            rng.uniform(counter + 4));
    pose.translation = amplitude_m * (2.0 * u - Eigen::Vector3d::Ones());
    counter += 5;
    motion.waypoints.emplace_back(static_cast<double>(i) / segments, pose);
  }
  return motion;
}

void generate_sequence(const SequenceSpec& spec,
                       const std::function<void(Frame&&)>& sink) {
  const TriangleBvh bvh(spec.model.mesh);
  for (int i = 1; i <= spec.frame_count; ++i) {
    Frame frame;
    frame.index = i;
    frame.ground_truth.camera_pose =
        camera_pose_on_path(spec.camera, i, spec.frame_count);
    frame.ground_truth.body_pose =
        body_pose_on_script(spec.body, i, spec.frame_count);

    const RigidTransform t_body_from_camera =
        compose(inverse(frame.ground_truth.body_pose),
                frame.ground_truth.camera_pose);
    frame.depth = render_depth_bvh(bvh, t_body_from_camera, spec.intrinsics,
                                   spec.noise, i);
    frame.detections = project_markers(
        spec.model.marker_map, frame.ground_truth.body_pose,
        frame.ground_truth.camera_pose, spec.intrinsics, spec.noise, i);
    const auto [scene_pose, valid] = simulate_scene_pose(
        inverse(frame.ground_truth.camera_pose), spec.noise, i);
    frame.scene_pose = scene_pose;
    frame.scene_pose_valid = valid;
    sink(std::move(frame));
  }
}

std::vector<Frame> generate_sequence(const SequenceSpec& spec) {
  std::vector<Frame> frames;
  frames.reserve(spec.frame_count);
  generate_sequence(spec, [&](Frame&& f) { frames.push_back(std::move(f)); });
  return frames;
}

}  // namespace bodytrack
