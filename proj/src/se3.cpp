#include "bodytrack/se3.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace bodytrack {

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

RigidTransform inverse(const RigidTransform& t) {
  RigidTransform out;
  out.rotation = t.rotation.transpose();
  out.translation = -(out.rotation * t.translation);
  return out;
}

Matrix4 matrix_of(const RigidTransform& t) {
  Matrix4 m = Matrix4::Identity();
  m.topLeftCorner<3, 3>() = t.rotation;
  m.topRightCorner<3, 1>() = t.translation;
  return m;
}

namespace {

// Nearest rotation in the Frobenius sense. Throws when the block is
// rank-deficient or its polar factor is a reflection.
Eigen::Matrix3d polar_rotation(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd;
  svd.compute(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sigma = svd.singularValues();
  if (sigma.minCoeff() < 1e-9) {
    throw DegenerateRotation("rotation block is rank-deficient");
  }
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    throw DegenerateRotation("polar factor has negative determinant");
  }
  return r;
}

// Extraction from an exact rotation, with the deterministic conventions:
// angle in [0, pi], identity reports axis +z, axis sign canonicalized at pi.
AngleAxis angle_axis_of_rotation(const Eigen::Matrix3d& r) {
  Eigen::AngleAxisd aa(r);
  AngleAxis out;
  out.angle = aa.angle();
  out.axis = aa.axis();
  if (out.angle < 0.0) {  // Eigen keeps angle in [0, pi]; guard anyway
    out.angle = -out.angle;
    out.axis = -out.axis;
  }
  if (out.angle < 1e-12) {
    out.axis = Eigen::Vector3d(0.0, 0.0, 1.0);
    return out;
  }
  if (std::abs(out.angle - M_PI) < 1e-9) {
    // Both signs of the axis describe the same rotation; pick the one whose
    // largest-magnitude component is positive.
    int imax = 0;
    out.axis.cwiseAbs().maxCoeff(&imax);
    if (out.axis(imax) < 0.0) out.axis = -out.axis;
  }
  out.axis.normalize();
  return out;
}

}  // namespace

AngleAxis to_angle_axis(const Eigen::Matrix3d& r) {
  return angle_axis_of_rotation(polar_rotation(r));
}

Eigen::Matrix3d from_angle_axis(const AngleAxis& aa) {
  const Eigen::Matrix3d k = skew<double>(aa.axis.normalized());
  return Eigen::Matrix3d::Identity() + std::sin(aa.angle) * k +
         (1.0 - std::cos(aa.angle)) * (k * k);
}

RigidTransform project_to_se3(const Matrix4& m) {
  const Eigen::Matrix3d polar = polar_rotation(m.topLeftCorner<3, 3>());
  RigidTransform out;
  out.rotation = from_angle_axis(angle_axis_of_rotation(polar));
  out.translation = m.topRightCorner<3, 1>();
  return out;
}

double rotation_angle(const Eigen::Matrix3d& r) {
  // atan2 form is accurate near both 0 and pi.
  const Eigen::Vector3d v(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0),
                          r(1, 0) - r(0, 1));
  const double c = (r.trace() - 1.0) * 0.5;
  return std::atan2(0.5 * v.norm(), c);
}

double rotation_distance(const RigidTransform& a, const RigidTransform& b) {
  return rotation_angle(a.rotation.transpose() * b.rotation);
}

double orthonormality_error(const Eigen::Matrix3d& r) {
  return (r.transpose() * r - Eigen::Matrix3d::Identity())
      .cwiseAbs()
      .maxCoeff();
}

bool is_rigid(const RigidTransform& t, double tol) {
  if (!t.rotation.allFinite() || !t.translation.allFinite()) return false;
  if (orthonormality_error(t.rotation) > tol) return false;
  return std::abs(t.rotation.determinant() - 1.0) <= tol;
}

std::string to_pose_text(const RigidTransform& t) {
  Eigen::Quaterniond q(t.rotation);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g %.17g %.17g %.17g",
                t.translation.x(), t.translation.y(), t.translation.z(),
                q.x(), q.y(), q.z(), q.w());
  return buf;
}

RigidTransform from_pose_text(const std::string& line) {
  std::istringstream in(line);
  double tx, ty, tz, qx, qy, qz, qw;
  if (!(in >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
    throw ParseError("pose text must hold 7 numbers: 'tx ty tz qx qy qz qw'");
  }
  Eigen::Quaterniond q(qw, qx, qy, qz);
  const double n = q.norm();
  if (!std::isfinite(n) || n < 1e-12) {
    throw ParseError("pose text quaternion is not normalizable");
  }
  q.coeffs() /= n;
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  RigidTransform t;
  t.rotation = q.toRotationMatrix();
  t.translation = Eigen::Vector3d(tx, ty, tz);
  return t;
}

}  // namespace bodytrack
