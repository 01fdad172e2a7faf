#include "rigcal/geometry.hpp"

namespace rigcal {

Mat3 skew(const Vec3& v) { return skew<double>(v); }

Rotation::Rotation(const Mat3& R) {
  if ((R * R.transpose() - Mat3::Identity()).norm() > 1e-6 || R.determinant() < 0.0) {
    throw ValidationError("matrix is not a rotation (orthonormality check failed)");
  }
  q_ = Eigen::Quaterniond(R).normalized();
}

Rotation Rotation::exp(const Vec3& phi) { return Rotation(quat_exp<double>(phi)); }

Vec3 Rotation::log() const { return quat_log<double>(q_); }

Eigen::Quaterniond Rotation::quaternion() const {
  Eigen::Quaterniond q = q_;
  const Vec4 c = q.coeffs();  // [x, y, z, w]
  bool flip = c[3] < 0.0;
  if (c[3] == 0.0) {
    // Tie-break deterministically on the first nonzero vector component.
    for (int i = 0; i < 3; ++i) {
      if (c[i] != 0.0) {
        flip = c[i] < 0.0;
        break;
      }
    }
  }
  if (flip) q.coeffs() = -q.coeffs();
  return q;
}

double Rotation::angle_to(const Rotation& o) const {
  return Eigen::AngleAxisd(q_.conjugate() * o.q_).angle();
}

Mat4 RigidTransform::matrix() const {
  Mat4 T = Mat4::Identity();
  T.topLeftCorner<3, 3>() = rotation.matrix();
  T.topRightCorner<3, 1>() = translation;
  return T;
}

Mat4 quat_left_matrix(const Eigen::Quaterniond& q) {
  const Vec3 v = q.vec();
  const double w = q.w();
  Mat4 L;
  L.topLeftCorner<3, 3>() = w * Mat3::Identity() + skew(v);
  L.topRightCorner<3, 1>() = v;
  L.bottomLeftCorner<1, 3>() = -v.transpose();
  L(3, 3) = w;
  return L;
}

Mat4 quat_right_matrix(const Eigen::Quaterniond& q) {
  const Vec3 v = q.vec();
  const double w = q.w();
  Mat4 R;
  R.topLeftCorner<3, 3>() = w * Mat3::Identity() - skew(v);
  R.topRightCorner<3, 1>() = v;
  R.bottomLeftCorner<1, 3>() = -v.transpose();
  R(3, 3) = w;
  return R;
}

Vec3 rotation_to_euler_zyx(const Rotation& rot) {
  const Mat3 R = rot.matrix();
  const double pitch = std::asin(std::clamp(-R(2, 0), -1.0, 1.0));
  double yaw, roll;
  if (std::abs(R(2, 0)) < 1.0 - 1e-12) {
    yaw = std::atan2(R(1, 0), R(0, 0));
    roll = std::atan2(R(2, 1), R(2, 2));
  } else {
    // Gimbal lock: pitch = +-pi/2; split the remaining rotation into yaw only.
    yaw = std::atan2(-R(0, 1), R(1, 1));
    roll = 0.0;
  }
  return Vec3(yaw, pitch, roll);
}

}  // namespace rigcal
