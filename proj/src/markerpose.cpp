#include "bodytrack/markerpose.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <vector>

namespace bodytrack {

namespace {

struct CornerSet {
  std::vector<Eigen::Vector3d> object;  // marker-map frame
  std::vector<Eigen::Vector2d> image;   // normalized camera coordinates
  int marker_count = 0;
};

CornerSet gather(const MarkerMap& map, const MarkerDetections& detections,
                 const CameraIntrinsics& k) {
  CornerSet set;
  for (const auto& det : detections.markers) {
    const auto it = map.markers.find(det.id);
    if (it == map.markers.end()) continue;
    ++set.marker_count;
    for (int c = 0; c < 4; ++c) {
      set.object.push_back(it->second[c]);
      set.image.emplace_back((det.corners[c].x() - k.cx) / k.fx,
                             (det.corners[c].y() - k.cy) / k.fy);
    }
  }
  return set;
}

double rms_pixels(const CornerSet& set, const CameraIntrinsics& k,
                  const RigidTransform& pose) {
  if (set.object.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < set.object.size(); ++i) {
    const Eigen::Vector3d p = pose.apply(set.object[i]);
    if (p.z() < 1e-6) return 1e9;  // behind the camera: hopeless candidate
    const double du = (p.x() / p.z() - set.image[i].x()) * k.fx;
    const double dv = (p.y() / p.z() - set.image[i].y()) * k.fy;
    sum += du * du + dv * dv;
  }
  return std::sqrt(sum / static_cast<double>(set.object.size()));
}

// 12-parameter DLT for the full projective [R|t]; needs non-coplanar points.
std::optional<RigidTransform> dlt_init(const CornerSet& set) {
  const int n = static_cast<int>(set.object.size());
  if (n < 6) return std::nullopt;

  // Condition the 3D side.
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : set.object) centroid += p;
  centroid /= n;
  double scale = 0.0;
  for (const auto& p : set.object) scale += (p - centroid).norm();
  scale = std::max(scale / n, 1e-12);

  Eigen::MatrixXd a(2 * n, 12);
  a.setZero();
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d q = (set.object[i] - centroid) / scale;
    const Eigen::Vector4d x(q.x(), q.y(), q.z(), 1.0);
    a.block<1, 4>(2 * i, 0) = x.transpose();
    a.block<1, 4>(2 * i, 8) = -set.image[i].x() * x.transpose();
    a.block<1, 4>(2 * i + 1, 4) = x.transpose();
    a.block<1, 4>(2 * i + 1, 8) = -set.image[i].y() * x.transpose();
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
  const Eigen::VectorXd v = svd.matrixV().col(11);
  Eigen::Matrix<double, 3, 4> p;
  p.row(0) = v.segment<4>(0);
  p.row(1) = v.segment<4>(4);
  p.row(2) = v.segment<4>(8);

  // Undo the conditioning: X' = (X - c) / s.
  Eigen::Matrix4d t_norm = Eigen::Matrix4d::Identity() / scale;
  t_norm(3, 3) = 1.0;
  t_norm.block<3, 1>(0, 3) = -centroid / scale;
  p = p * t_norm;

  // Majority of the points must land in front of the camera.
  int positive = 0;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector4d x(set.object[i].x(), set.object[i].y(),
                            set.object[i].z(), 1.0);
    if (p.row(2).dot(x) > 0.0) ++positive;
  }
  if (2 * positive < n) p = -p;

  Eigen::Matrix3d m = p.leftCols<3>();
  const double det = m.determinant();
  if (!(std::abs(det) > 1e-30)) return std::nullopt;
  const double sigma = std::cbrt(det);
  Matrix4 raw = Matrix4::Identity();
  raw.topLeftCorner<3, 3>() = m / sigma;
  raw.topRightCorner<3, 1>() = p.col(3) / sigma;
  try {
    return project_to_se3(raw);
  } catch (const DegenerateRotation&) {
    return std::nullopt;
  }
}

// Homography DLT for (near-)coplanar corner sets.
std::optional<RigidTransform> homography_init(const CornerSet& set) {
  const int n = static_cast<int>(set.object.size());
  if (n < 4) return std::nullopt;

  // Plane frame from PCA.
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : set.object) centroid += p;
  centroid /= n;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : set.object) {
    const Eigen::Vector3d d = p - centroid;
    cov += d * d.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const Eigen::Vector3d e1 = eig.eigenvectors().col(2);
  const Eigen::Vector3d e2 = eig.eigenvectors().col(1);

  std::vector<Eigen::Vector2d> plane(n);
  double spread = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d d = set.object[i] - centroid;
    plane[i] = Eigen::Vector2d(e1.dot(d), e2.dot(d));
    spread += plane[i].norm();
  }
  spread = std::max(spread / n, 1e-12);

  Eigen::MatrixXd a(2 * n, 9);
  a.setZero();
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d x(plane[i].x() / spread, plane[i].y() / spread, 1.0);
    a.block<1, 3>(2 * i, 0) = x.transpose();
    a.block<1, 3>(2 * i, 6) = -set.image[i].x() * x.transpose();
    a.block<1, 3>(2 * i + 1, 3) = x.transpose();
    a.block<1, 3>(2 * i + 1, 6) = -set.image[i].y() * x.transpose();
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
  const Eigen::VectorXd v = svd.matrixV().col(8);
  Eigen::Matrix3d h;
  h << v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), v(8);
  h.col(0) /= spread;
  h.col(1) /= spread;

  const double lambda = 2.0 / (h.col(0).norm() + h.col(1).norm());
  Eigen::Matrix3d hs = h * lambda;
  if (hs(2, 2) < 0.0) hs = -hs;  // plane origin in front of the camera

  Matrix4 raw = Matrix4::Identity();
  raw.topLeftCorner<3, 1>() = hs.col(0);
  raw.block<3, 1>(0, 1) = hs.col(1);
  raw.block<3, 1>(0, 2) = hs.col(0).cross(hs.col(1));
  raw.topRightCorner<3, 1>() = hs.col(2);
  RigidTransform plane_to_camera;
  try {
    plane_to_camera = project_to_se3(raw);
  } catch (const DegenerateRotation&) {
    return std::nullopt;
  }

  // Compose with marker-map frame -> plane frame.
  RigidTransform map_to_plane;
  Eigen::Matrix3d basis;
  basis.col(0) = e1;
  basis.col(1) = e2;
  basis.col(2) = e1.cross(e2);
  map_to_plane.rotation = basis.transpose();
  map_to_plane.translation = -(basis.transpose() * centroid);
  return compose(plane_to_camera, map_to_plane);
}

// Gauss-Newton over the reprojection objective in normalized coordinates.
RigidTransform refine(const CornerSet& set, RigidTransform pose) {
  const int n = static_cast<int>(set.object.size());
  auto objective = [&](const RigidTransform& t) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector3d p = t.apply(set.object[i]);
      if (p.z() < 1e-6) return 1e18;
      const double du = p.x() / p.z() - set.image[i].x();
      const double dv = p.y() / p.z() - set.image[i].y();
      sum += du * du + dv * dv;
    }
    return sum;
  };

  for (int iter = 0; iter < 20; ++iter) {
    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> b = Eigen::Matrix<double, 6, 1>::Zero();
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector3d p = pose.apply(set.object[i]);
      if (p.z() < 1e-6) continue;
      const double inv_z = 1.0 / p.z();
      const Eigen::Vector2d r(p.x() * inv_z - set.image[i].x(),
                              p.y() * inv_z - set.image[i].y());
      Eigen::Matrix<double, 2, 3> d_proj;
      d_proj << inv_z, 0.0, -p.x() * inv_z * inv_z,  //
          0.0, inv_z, -p.y() * inv_z * inv_z;
      Eigen::Matrix<double, 3, 6> d_point;
      d_point.leftCols<3>() = -skew<double>(p);
      d_point.rightCols<3>() = Eigen::Matrix3d::Identity();
      const Eigen::Matrix<double, 2, 6> j = d_proj * d_point;
      h += j.transpose() * j;
      b += j.transpose() * r;
    }

    Eigen::Matrix<double, 6, 1> delta = h.ldlt().solve(-b);
    if (!delta.allFinite()) break;

    const double f0 = objective(pose);
    double scale = 1.0;
    bool stepped = false;
    for (int halving = 0; halving <= 8; ++halving) {
      RigidTransform d;
      const Eigen::Vector3d omega = scale * delta.head<3>();
      const double angle = omega.norm();
      if (angle > 0.0) d.rotation = from_angle_axis({omega / angle, angle});
      d.translation = scale * delta.tail<3>();
      const RigidTransform candidate = compose(d, pose);
      if (objective(candidate) <= f0) {
        pose = candidate;
        stepped = true;
        break;
      }
      scale *= 0.5;
    }
    if (!stepped || (scale * delta).norm() < 1e-12) break;
  }
  return pose;
}

bool corners_in_front(const CornerSet& set, const RigidTransform& pose) {
  for (const auto& x : set.object) {
    if (pose.apply(x).z() <= 0.0) return false;
  }
  return true;
}

}  // namespace

PoseEstimate estimate_pose(const MarkerMap& map,
                           const MarkerDetections& detections,
                           const CameraIntrinsics& k,
                           const std::optional<RigidTransform>& prior) {
  PoseEstimate out;
  const CornerSet set = gather(map, detections, k);
  out.inlier_corner_count = static_cast<int>(set.object.size());
  if (set.marker_count < 2) return out;

  auto evaluate = [&](const RigidTransform& pose) {
    PoseEstimate e;
    e.pose = pose;
    e.mean_reprojection_error = rms_pixels(set, k, pose);
    e.inlier_corner_count = static_cast<int>(set.object.size());
    e.success = e.mean_reprojection_error <= 2.0 && corners_in_front(set, pose);
    return e;
  };

  if (prior) {
    const PoseEstimate seeded = evaluate(refine(set, *prior));
    if (seeded.success) return seeded;
  }

  // DLT initialization; the homography branch covers coplanar corner sets
  // where the 12-parameter system is rank-deficient.
  PoseEstimate best;
  best.inlier_corner_count = static_cast<int>(set.object.size());
  best.mean_reprojection_error = 1e18;
  for (const auto& init : {dlt_init(set), homography_init(set)}) {
    if (!init) continue;
    const PoseEstimate cand = evaluate(refine(set, *init));
    if (cand.mean_reprojection_error < best.mean_reprojection_error) {
      best = cand;
    }
  }
  return best.mean_reprojection_error < 1e17 ? best : out;
}

double reprojection_error(const MarkerMap& map,
                          const MarkerDetections& detections,
                          const CameraIntrinsics& k,
                          const RigidTransform& pose) {
  const CornerSet set = gather(map, detections, k);
  return rms_pixels(set, k, pose);
}

}  // namespace bodytrack
