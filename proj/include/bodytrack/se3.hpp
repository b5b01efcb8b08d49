// Rigid-motion arithmetic: exact SE(3)/SO(3) composition and inversion,
// angle-axis conversion, and projection of arbitrary 4x4 matrices onto the
// rigid-motion group (polar decomposition followed by an angle-axis round
// trip).
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <string>

#include "bodytrack/errors.hpp"

namespace bodytrack {

// Raw 4x4 matrix, deliberately unconstrained. Unprojected least-squares
// output lives here until project_to_se3 is applied.
using Matrix4 = Eigen::Matrix4d;

// Axis-angle with angle in [0, pi]. The axis is a unit vector whenever
// angle > 0; the identity rotation reports axis +z by convention.
struct AngleAxis {
  Eigen::Vector3d axis{0.0, 0.0, 1.0};
  double angle{0.0};
};

struct RigidTransform {
  Eigen::Matrix3d rotation{Eigen::Matrix3d::Identity()};
  Eigen::Vector3d translation{Eigen::Vector3d::Zero()};

  static RigidTransform identity() { return RigidTransform{}; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }
};

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> skew(const Eigen::Matrix<Scalar, 3, 1>& v) {
  Eigen::Matrix<Scalar, 3, 3> s;
  s << Scalar(0), -v.z(), v.y(),  //
      v.z(), Scalar(0), -v.x(),   //
      -v.y(), v.x(), Scalar(0);
  return s;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform inverse(const RigidTransform& t);

Matrix4 matrix_of(const RigidTransform& t);

// Angle-axis of an (approximate) rotation. The input is first projected onto
// SO(3) via a polar decomposition so the result describes the nearest
// rotation; throws DegenerateRotation when the polar factor is a reflection.
AngleAxis to_angle_axis(const Eigen::Matrix3d& r);

// Rodrigues formula.
Eigen::Matrix3d from_angle_axis(const AngleAxis& aa);

// Replaces an arbitrary 4x4 matrix with the nearest rigid motion: polar
// decomposition of the 3x3 block, angle-axis round trip, translation copied
// from the fourth column, bottom row discarded. Throws DegenerateRotation
// when the 3x3 block is rank-deficient (smallest singular value < 1e-9) or
// its polar factor is a reflection.
RigidTransform project_to_se3(const Matrix4& m);

// Rotation angle in radians, in [0, pi]. Assumes r is close to a rotation.
double rotation_angle(const Eigen::Matrix3d& r);

// Angle of the relative rotation between two transforms, radians.
double rotation_distance(const RigidTransform& a, const RigidTransform& b);

// Max-norm of R^T R - I and determinant deviation; used by validity checks.
double orthonormality_error(const Eigen::Matrix3d& r);
bool is_rigid(const RigidTransform& t, double tol = 1e-9);

// Pose text form: "tx ty tz qx qy qz qw", quaternion normalized with w >= 0.
std::string to_pose_text(const RigidTransform& t);
RigidTransform from_pose_text(const std::string& line);

}  // namespace bodytrack
