#pragma once

// Measurement models for the three sensor families.
//
// Conventions used throughout:
//  - Extrinsics are stored as T_imu_sensor, the pose of the sensor expressed
//    in the IMU body frame: p_imu = R * p_sensor + t.
//  - Every sensor clock maps to the reference clock (the base LiDAR) through
//    t_ref = t_sensor + time_offset.
//  - Camera intrinsics are packed as [fx, fy, cx, cy, d0, d1, d2, d3] where
//    the distortion block is (k1, k2, p1, p2) for the pinhole model and
//    (k1, k2, k3, k4) for the equidistant fisheye model.

#include "rigcal/geometry.hpp"
#include "rigcal/jet.hpp"
#include "rigcal/spline.hpp"
#include "rigcal/types.hpp"

#include <array>
#include <cmath>
#include <string>

namespace rigcal {

constexpr double kMaxTimeOffset = 0.1;  // seconds; sanity bound on any clock offset

struct SensorExtrinsics {
  RigidTransform T_imu_sensor;
  double time_offset = 0.0;

  void validate(const std::string& sensor_id) const {
    if (std::abs(time_offset) >= kMaxTimeOffset) {
      throw ValidationError("sensor '" + sensor_id + "': |time offset| " +
                            std::to_string(time_offset) + " exceeds the " +
                            std::to_string(kMaxTimeOffset) + " s bound");
    }
  }
};

// ---------------------------------------------------------------------------
// Cameras.

enum class CameraModelType { kPinholeRadtan4, kFisheyeEquidistant4 };

using IntrinsicsVec = Eigen::Matrix<double, 8, 1>;

struct CameraIntrinsics {
  CameraModelType model = CameraModelType::kPinholeRadtan4;
  int width = 640;
  int height = 480;
  double fx = 400.0, fy = 400.0, cx = 320.0, cy = 240.0;
  Vec4 distortion = Vec4::Zero();
  // Acceptance half-angle for rays (fisheye only); rays with a larger angle to
  // the optical axis do not project.
  double max_theta = 1.75;

  IntrinsicsVec as_vector() const {
    IntrinsicsVec v;
    v << fx, fy, cx, cy, distortion[0], distortion[1], distortion[2], distortion[3];
    return v;
  }
  void set_from_vector(const IntrinsicsVec& v) {
    fx = v[0];
    fy = v[1];
    cx = v[2];
    cy = v[3];
    distortion = v.segment<4>(4);
  }
  bool in_image(const Vec2& uv, double margin = 0.0) const {
    return uv.x() >= margin && uv.x() <= width - 1 - margin && uv.y() >= margin &&
           uv.y() <= height - 1 - margin;
  }
};

/// Projects a camera-frame point to pixel coordinates. Returns false when the
/// point is not in the projectable domain (behind a pinhole camera, or past
/// max_theta for a fisheye). Scalar generic over double/Jet.
template <typename T>
bool project_point(CameraModelType model, const Eigen::Matrix<T, 8, 1>& intr, double max_theta,
                   const Eigen::Matrix<T, 3, 1>& p_cam, Eigen::Matrix<T, 2, 1>* uv) {
  using std::atan2;
  using std::sqrt;
  const T& fx = intr[0];
  const T& fy = intr[1];
  const T& cx = intr[2];
  const T& cy = intr[3];

  if (model == CameraModelType::kPinholeRadtan4) {
    if (value_of(p_cam.z()) <= 1e-9) return false;
    const T x = p_cam.x() / p_cam.z();
    const T y = p_cam.y() / p_cam.z();
    const T& k1 = intr[4];
    const T& k2 = intr[5];
    const T& p1 = intr[6];
    const T& p2 = intr[7];
    const T r2 = x * x + y * y;
    const T radial = T(1.0) + r2 * (k1 + r2 * k2);
    const T xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
    const T yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
    (*uv)[0] = fx * xd + cx;
    (*uv)[1] = fy * yd + cy;
    return true;
  }

  // Equidistant fisheye.
  const T& k1 = intr[4];
  const T& k2 = intr[5];
  const T& k3 = intr[6];
  const T& k4 = intr[7];
  const T r2 = p_cam.x() * p_cam.x() + p_cam.y() * p_cam.y();
  if (value_of(r2) < 1e-18) {
    if (value_of(p_cam.z()) <= 0.0) return false;  // looking straight backwards
    // On-axis limit: theta ~ r/z, x' -> x/z.
    (*uv)[0] = fx * (p_cam.x() / p_cam.z()) + cx;
    (*uv)[1] = fy * (p_cam.y() / p_cam.z()) + cy;
    return true;
  }
  const T r = sqrt(r2);
  const T theta = atan2(r, p_cam.z());
  if (value_of(theta) > max_theta) return false;
  const T t2 = theta * theta;
  const T theta_d = theta * (T(1.0) + t2 * (k1 + t2 * (k2 + t2 * (k3 + t2 * k4))));
  const T scale = theta_d / r;
  (*uv)[0] = fx * scale * p_cam.x() + cx;
  (*uv)[1] = fy * scale * p_cam.y() + cy;
  return true;
}

inline bool project_point(const CameraIntrinsics& K, const Vec3& p_cam, Vec2* uv) {
  const IntrinsicsVec v = K.as_vector();
  return project_point<double>(K.model, v, K.max_theta, p_cam, uv);
}

/// Inverts the projection to a unit ray through iterative refinement
/// (fixed-point undistortion for the pinhole model, Newton on the angle
/// polynomial for the fisheye). Returns false if the iteration diverges.
bool unproject_pixel(const CameraIntrinsics& K, const Vec2& uv, Vec3* ray);

// ---------------------------------------------------------------------------
// IMU.

struct ImuBias {
  Vec3 gyro = Vec3::Zero();
  Vec3 accel = Vec3::Zero();
};

struct ImuSample {
  double t = 0.0;  // IMU clock
  Vec3 gyro = Vec3::Zero();
  Vec3 accel = Vec3::Zero();
};

/// Ideal IMU measurement at reference time t: body-frame angular rate plus
/// gyro bias, and specific force R^T (a_world - g) plus accelerometer bias.
ImuSample predict_imu(const Trajectory& traj, double t, const ImuBias& bias,
                      const Vec3& gravity_world);

/// Orthonormal basis of the tangent plane of the gravity sphere at g; columns
/// span the two observable directions of a fixed-magnitude gravity vector.
Eigen::Matrix<double, 3, 2> sphere_tangent_basis(const Vec3& g);

// ---------------------------------------------------------------------------
// LiDAR.

struct LidarPoint {
  double t = 0.0;  // LiDAR clock, per point
  Vec3 p = Vec3::Zero();
  double intensity = 0.0;
};

struct LidarScan {
  double t = 0.0;  // scan begin, LiDAR clock
  std::vector<LidarPoint> points;
};

/// World position of a LiDAR return captured at point time t_point.
inline Vec3 lidar_point_to_world(const Trajectory& traj, const SensorExtrinsics& ext,
                                 double t_point, const Vec3& p_lidar) {
  return traj.pose(t_point + ext.time_offset) * (ext.T_imu_sensor * p_lidar);
}

/// Projects a world point into a camera frame captured at camera time t_frame.
/// Returns false if the point is outside the projectable domain.
bool camera_project_world(const Trajectory& traj, const SensorExtrinsics& ext,
                          const CameraIntrinsics& K, double t_frame, const Vec3& p_world,
                          Vec2* uv);

}  // namespace rigcal
