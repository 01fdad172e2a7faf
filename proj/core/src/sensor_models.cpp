#include "rigcal/sensor_models.hpp"

namespace rigcal {

bool unproject_pixel(const CameraIntrinsics& K, const Vec2& uv, Vec3* ray) {
  const double xn = (uv.x() - K.cx) / K.fx;
  const double yn = (uv.y() - K.cy) / K.fy;

  if (K.model == CameraModelType::kPinholeRadtan4) {
    const double k1 = K.distortion[0], k2 = K.distortion[1];
    const double p1 = K.distortion[2], p2 = K.distortion[3];
    double x = xn, y = yn;
    for (int it = 0; it < 20; ++it) {
      const double r2 = x * x + y * y;
      const double radial = 1.0 + r2 * (k1 + r2 * k2);
      const double dx = 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
      const double dy = p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
      x = (xn - dx) / radial;
      y = (yn - dy) / radial;
    }
    // Verify the fixed point actually reproduces the pixel.
    const double r2 = x * x + y * y;
    const double radial = 1.0 + r2 * (k1 + r2 * k2);
    const double xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
    const double yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
    if (std::abs(xd - xn) > 1e-6 || std::abs(yd - yn) > 1e-6) return false;
    *ray = Vec3(x, y, 1.0).normalized();
    return true;
  }

  // Equidistant fisheye: solve theta_d = theta (1 + k1 t^2 + ... + k4 t^8).
  const double k1 = K.distortion[0], k2 = K.distortion[1];
  const double k3 = K.distortion[2], k4 = K.distortion[3];
  const double theta_d = std::sqrt(xn * xn + yn * yn);
  if (theta_d < 1e-12) {
    *ray = Vec3(0.0, 0.0, 1.0);
    return true;
  }
  double theta = theta_d;
  for (int it = 0; it < 20; ++it) {
    const double t2 = theta * theta;
    const double poly = 1.0 + t2 * (k1 + t2 * (k2 + t2 * (k3 + t2 * k4)));
    const double dpoly = 3.0 * k1 * t2 + 5.0 * k2 * t2 * t2 + 7.0 * k3 * t2 * t2 * t2 +
                         9.0 * k4 * t2 * t2 * t2 * t2;
    const double f = theta * poly - theta_d;
    const double df = poly + dpoly;
    theta -= f / df;
  }
  {
    const double t2 = theta * theta;
    const double f = theta * (1.0 + t2 * (k1 + t2 * (k2 + t2 * (k3 + t2 * k4)))) - theta_d;
    if (std::abs(f) > 1e-9 || !std::isfinite(theta)) return false;
  }
  const double s = std::sin(theta) / theta_d;
  *ray = Vec3(s * xn, s * yn, std::cos(theta));
  return true;
}

ImuSample predict_imu(const Trajectory& traj, double t, const ImuBias& bias,
                      const Vec3& gravity_world) {
  const RotationSpline::State rs = traj.rotation.eval(t);
  const PositionSpline::State ps = traj.position.eval(t);
  ImuSample s;
  s.t = t;
  s.gyro = rs.angular_velocity_body + bias.gyro;
  s.accel = rs.rotation.inverse() * (ps.acceleration - gravity_world) + bias.accel;
  return s;
}

Eigen::Matrix<double, 3, 2> sphere_tangent_basis(const Vec3& g) {
  const Vec3 gn = g.normalized();
  const Vec3 ref = std::abs(gn.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  Eigen::Matrix<double, 3, 2> B;
  B.col(0) = gn.cross(ref).normalized();
  B.col(1) = gn.cross(B.col(0)).normalized();
  return B;
}

bool camera_project_world(const Trajectory& traj, const SensorExtrinsics& ext,
                          const CameraIntrinsics& K, double t_frame, const Vec3& p_world,
                          Vec2* uv) {
  const RigidTransform T_world_imu = traj.pose(t_frame + ext.time_offset);
  const Vec3 p_cam = ext.T_imu_sensor.inverse() * (T_world_imu.inverse() * p_world);
  return project_point(K, p_cam, uv);
}

}  // namespace rigcal
