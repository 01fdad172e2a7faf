#pragma once

// Rotations on SO(3), rigid transforms on SE(3), and the quaternion algebra
// used by the hand-eye solver. Quaternions are stored and serialized with the
// vector part first, [x, y, z, w], and canonicalized to w >= 0 wherever a
// representative is exposed. The templated kernels at the bottom accept both
// double and Jet scalars so factors can differentiate through them.

#include "rigcal/jet.hpp"
#include "rigcal/types.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>

namespace rigcal {

Mat3 skew(const Vec3& v);

/// Unit-quaternion rotation. Construction normalizes; accessors return the
/// sign-canonical representative (scalar part >= 0).
class Rotation {
 public:
  Rotation() : q_(Eigen::Quaterniond::Identity()) {}
  // Normalization is skipped for unit inputs so that an already-normalized
  // quaternion (e.g. re-parsed from its exact decimal form) passes through
  // bit-exactly instead of drifting by an ulp.
  explicit Rotation(const Eigen::Quaterniond& q)
      : q_(std::abs(q.squaredNorm() - 1.0) < 1e-12 ? q : q.normalized()) {}
  explicit Rotation(const Mat3& R);

  static Rotation identity() { return Rotation(); }

  /// Exponential map: rotation vector (axis * angle, radians) to rotation.
  static Rotation exp(const Vec3& phi);

  /// Logarithmic map: principal rotation vector, |phi| <= pi. The branch near
  /// pi is handled through the quaternion so the axis stays well defined.
  Vec3 log() const;

  Mat3 matrix() const { return q_.toRotationMatrix(); }

  /// Sign-canonical coefficients, ordered [x, y, z, w].
  Eigen::Quaterniond quaternion() const;

  Rotation inverse() const { return Rotation(q_.conjugate()); }
  Rotation operator*(const Rotation& o) const { return Rotation(q_ * o.q_); }
  Vec3 operator*(const Vec3& p) const { return q_ * p; }

  /// Geodesic distance to another rotation, radians in [0, pi].
  double angle_to(const Rotation& o) const;

  bool is_approx(const Rotation& o, double tol = 1e-12) const {
    return angle_to(o) <= tol;
  }

 private:
  Eigen::Quaterniond q_;
};

struct RigidTransform {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  RigidTransform() = default;
  RigidTransform(const Rotation& R, const Vec3& t) : rotation(R), translation(t) {}

  static RigidTransform identity() { return {}; }

  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }
  RigidTransform operator*(const RigidTransform& o) const {
    return {rotation * o.rotation, rotation * o.translation + translation};
  }
  RigidTransform inverse() const {
    const Rotation rinv = rotation.inverse();
    return {rinv, -(rinv * translation)};
  }
  Mat4 matrix() const;
};

/// 4x4 matrix L(q) with L(q1) * q2.coeffs() == (q1 * q2).coeffs() under the
/// Hamilton product and [x, y, z, w] coefficient ordering.
Mat4 quat_left_matrix(const Eigen::Quaterniond& q);

/// 4x4 matrix R(q) with R(q2) * q1.coeffs() == (q1 * q2).coeffs().
Mat4 quat_right_matrix(const Eigen::Quaterniond& q);

/// ZYX (yaw, pitch, roll) Euler angles in radians of R = Rz(y)*Ry(p)*Rx(r).
Vec3 rotation_to_euler_zyx(const Rotation& R);

// ---------------------------------------------------------------------------
// Scalar-generic kernels.

template <typename T>
Eigen::Matrix<T, 3, 3> skew(const Eigen::Matrix<T, 3, 1>& v) {
  Eigen::Matrix<T, 3, 3> S;
  S << T(0.0), -v.z(), v.y(),  //
      v.z(), T(0.0), -v.x(),   //
      -v.y(), v.x(), T(0.0);
  return S;
}

/// Quaternion exponential of a rotation vector. Series expansion near zero
/// keeps derivatives finite for autodiff scalars.
template <typename T>
Eigen::Quaternion<T> quat_exp(const Eigen::Matrix<T, 3, 1>& phi) {
  const T theta_sq = phi.squaredNorm();
  T half_sinc;  // sin(theta/2) / theta
  T cos_half;
  if (value_of(theta_sq) < 1e-16) {
    half_sinc = T(0.5) - theta_sq / 48.0 + theta_sq * theta_sq / 3840.0;
    cos_half = T(1.0) - theta_sq / 8.0 + theta_sq * theta_sq / 384.0;
  } else {
    using std::cos;
    using std::sin;
    using std::sqrt;
    const T theta = sqrt(theta_sq);
    half_sinc = sin(theta * 0.5) / theta;
    cos_half = cos(theta * 0.5);
  }
  Eigen::Quaternion<T> q;
  q.vec() = half_sinc * phi;
  q.w() = cos_half;
  return q;
}

/// Principal rotation vector of a unit quaternion (any sign representative).
template <typename T>
Eigen::Matrix<T, 3, 1> quat_log(const Eigen::Quaternion<T>& q_in) {
  Eigen::Quaternion<T> q = q_in;
  if (value_of(q.w()) < 0.0) {
    q.coeffs() = -q.coeffs();
  }
  const T sin_half_sq = q.vec().squaredNorm();
  if (value_of(sin_half_sq) < 1e-16) {
    // theta / sin(theta/2) ~ 2 / w * (1 - s^2 / (3 w^2)) with s = sin(theta/2)
    const T k = (T(2.0) / q.w()) * (T(1.0) - sin_half_sq / (q.w() * q.w() * 3.0));
    return (k * q.vec()).eval();
  }
  using std::atan2;
  using std::sqrt;
  const T sin_half = sqrt(sin_half_sq);
  const T theta = T(2.0) * atan2(sin_half, q.w());
  return ((theta / sin_half) * q.vec()).eval();
}

/// Rotation matrix of a rotation vector (Rodrigues), scalar generic.
template <typename T>
Eigen::Matrix<T, 3, 3> rotation_matrix_exp(const Eigen::Matrix<T, 3, 1>& phi) {
  return quat_exp(phi).toRotationMatrix();
}

/// q * v * q^-1 for a unit quaternion, scalar generic.
template <typename T>
Eigen::Matrix<T, 3, 1> quat_rotate(const Eigen::Quaternion<T>& q,
                                   const Eigen::Matrix<T, 3, 1>& v) {
  const Eigen::Matrix<T, 3, 1> t = 2.0 * q.vec().cross(v);
  return v + q.w() * t + q.vec().cross(t);
}

template <typename T>
Eigen::Quaternion<T> quat_cast(const Eigen::Quaterniond& q) {
  return Eigen::Quaternion<T>(T(q.w()), T(q.x()), T(q.y()), T(q.z()));
}

template <typename T>
Eigen::Matrix<T, 3, 1> vec_cast(const Vec3& v) {
  return Eigen::Matrix<T, 3, 1>(T(v.x()), T(v.y()), T(v.z()));
}

}  // namespace rigcal
