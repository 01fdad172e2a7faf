#include "rigcal/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace rigcal {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32),
                    0x9e3779b9u};
  return std::mt19937_64(seq);
}

Vec3 random_unit_vector(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(gauss(rng), gauss(rng), gauss(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

Vec3 gauss3(std::mt19937_64& rng, double sigma) {
  if (sigma <= 0.0) return Vec3::Zero();
  std::normal_distribution<double> gauss(0.0, sigma);
  return Vec3(gauss(rng), gauss(rng), gauss(rng));
}

// Stream salts keep per-sensor noise independent of the other sensors'
// configuration (adding a camera must not change the LiDAR returns).
constexpr std::uint64_t kSaltLandmarks = 0x01;
constexpr std::uint64_t kSaltImu = 0x02;
constexpr std::uint64_t kSaltCorrespondences = 0x03;
constexpr std::uint64_t kSaltLidarBase = 0x100;
constexpr std::uint64_t kSaltCameraBase = 0x200;
constexpr std::uint64_t kSaltDriftBase = 0x300;

}  // namespace

// ---------------------------------------------------------------------------
// Scene.

double ScenePlane::intensity_at(double u, double v) const {
  const auto cell = [&](double x) { return static_cast<long>(std::floor(x / checker_size)); };
  const bool even = ((cell(u) + cell(v)) % 2) == 0;
  return even ? gray_low : gray_high;
}

bool ScenePlane::raycast(const Vec3& start, const Vec3& dir, double* range, double* u,
                         double* v) const {
  const Vec3 n = normal();
  const double denom = n.dot(dir);
  if (std::abs(denom) < 1e-12) return false;
  const double r = n.dot(origin - start) / denom;
  if (r <= 1e-9) return false;
  const Vec3 local = start + r * dir - origin;
  const double uu = local.dot(u_axis);
  const double vv = local.dot(v_axis);
  if (uu < 0.0 || uu > u_extent || vv < 0.0 || vv > v_extent) return false;
  if (range) *range = r;
  if (u) *u = uu;
  if (v) *v = vv;
  return true;
}

void ScenePlane::validate() const {
  if (std::abs(u_axis.norm() - 1.0) > 1e-9 || std::abs(v_axis.norm() - 1.0) > 1e-9) {
    throw ValidationError("scene plane axes must be unit length");
  }
  if (std::abs(u_axis.dot(v_axis)) > 1e-9) {
    throw ValidationError("scene plane axes must be orthogonal");
  }
  if (u_extent <= 0.0 || v_extent <= 0.0) {
    throw ValidationError("scene plane extents must be positive");
  }
  if (checker_size <= 0.0) throw ValidationError("checker size must be positive");
  if (gray_low < 0.0 || gray_high > 1.0 || gray_low >= gray_high) {
    throw ValidationError("plane gray levels must satisfy 0 <= low < high <= 1");
  }
}

void RigSpec::validate() const {
  if (lidars.empty()) throw ValidationError("rig needs at least one LiDAR");
  if (scene.empty()) throw ValidationError("rig needs a scene");
  for (const auto& p : scene) p.validate();
  for (const auto& l : lidars) {
    if (l.extrinsics.time_offset != 0.0) {
      throw ValidationError("LiDAR clocks are hardware-synchronized; time offset must be 0");
    }
    if (l.rate_hz <= 0.0 || l.scan_rows <= 0 || l.scan_cols <= 0) {
      throw ValidationError("LiDAR rate and scan grid must be positive");
    }
    if (l.fov_horizontal_deg <= 0.0 || l.fov_horizontal_deg > 360.0 ||
        l.fov_vertical_deg <= 0.0 || l.fov_vertical_deg >= 180.0) {
      throw ValidationError("LiDAR field of view out of range");
    }
    if (l.min_range <= 0.0 || l.max_range <= l.min_range) {
      throw ValidationError("LiDAR range gates out of order");
    }
    if (l.range_sigma < 0.0) throw ValidationError("negative range noise");
  }
  for (const auto& c : cameras) {
    c.extrinsics.validate(c.id);
    if (c.intrinsics.width <= 0 || c.intrinsics.height <= 0 || c.intrinsics.fx <= 0.0 ||
        c.intrinsics.fy <= 0.0) {
      throw ValidationError("camera '" + c.id + "': intrinsics out of range");
    }
    if (c.rate_hz <= 0.0) throw ValidationError("camera rate must be positive");
    if (c.pixel_sigma < 0.0) throw ValidationError("negative pixel noise");
  }
  if (imu.rate_hz <= 0.0) throw ValidationError("IMU rate must be positive");
  if (imu.gyro_sigma < 0.0 || imu.accel_sigma < 0.0) throw ValidationError("negative IMU noise");
  if (std::abs(imu.time_offset) >= kMaxTimeOffset) {
    throw ValidationError("IMU time offset exceeds the supported window");
  }
  if (num_landmarks <= 0) throw ValidationError("need a positive landmark count");
  if (correspondence_frame_stride <= 0 || correspondences_per_frame < 0) {
    throw ValidationError("correspondence sampling parameters out of range");
  }
  if (correspondence_outlier_fraction < 0.0 || correspondence_outlier_fraction > 1.0) {
    throw ValidationError("outlier fraction must lie in [0, 1]");
  }
}

void MotionSpec::validate() const {
  if (duration <= 1.0) throw ValidationError("motion duration must exceed one second");
  if (figure_frequency <= 0.0) throw ValidationError("figure frequency must be positive");
}

// ---------------------------------------------------------------------------
// Motion model.

MotionModel::MotionModel(const MotionSpec& spec) : spec_(spec) {
  spec_.validate();
  if (spec_.family == MotionFamily::kPlanarFigureEight) {
    spec_.z_amplitude = 0.0;
    spec_.roll_amplitude = 0.0;
    spec_.pitch_amplitude = 0.0;
  }
  if (spec_.exact_spline_knot > 0.0) {
    // Replace the analytic curve by its own spline fit so that downstream
    // estimators with the same knot spacing can represent the truth exactly.
    const double knot = spec_.exact_spline_knot;
    const double pad = 4.0 * knot;
    std::vector<TimedPose> poses;
    const double dt = knot / 5.0;
    for (double t = -pad; t <= spec_.duration + pad + 0.5 * dt; t += dt) {
      const MotionState s = eval_analytic(t);
      poses.push_back({t, RigidTransform(s.rotation, s.position)});
    }
    spline_ = fit_trajectory(std::move(poses), knot);
  }
}

MotionState MotionModel::eval_analytic(double t) const {
  const MotionSpec& m = spec_;
  MotionState s;

  const double w = kTwoPi * m.figure_frequency;
  const double wz = kTwoPi * m.z_frequency;
  s.position = m.center + Vec3(m.x_amplitude * std::sin(w * t),
                               m.y_amplitude * std::sin(2.0 * w * t),
                               m.z_amplitude * std::sin(wz * t));
  s.velocity = Vec3(m.x_amplitude * w * std::cos(w * t),
                    m.y_amplitude * 2.0 * w * std::cos(2.0 * w * t),
                    m.z_amplitude * wz * std::cos(wz * t));
  s.acceleration = Vec3(-m.x_amplitude * w * w * std::sin(w * t),
                        -m.y_amplitude * 4.0 * w * w * std::sin(2.0 * w * t),
                        -m.z_amplitude * wz * wz * std::sin(wz * t));

  const double wy = kTwoPi * m.yaw_frequency;
  const double wr = kTwoPi * m.roll_frequency;
  const double wp = kTwoPi * m.pitch_frequency;
  const double a = m.yaw_rate * t + m.yaw_amplitude * std::sin(wy * t);
  const double da = m.yaw_rate + m.yaw_amplitude * wy * std::cos(wy * t);
  const double dda = -m.yaw_amplitude * wy * wy * std::sin(wy * t);
  const double b = m.roll_amplitude * std::sin(wr * t);
  const double db = m.roll_amplitude * wr * std::cos(wr * t);
  const double ddb = -m.roll_amplitude * wr * wr * std::sin(wr * t);
  const double c = m.pitch_amplitude * std::sin(wp * t);
  const double dc = m.pitch_amplitude * wp * std::cos(wp * t);
  const double ddc = -m.pitch_amplitude * wp * wp * std::sin(wp * t);

  const Eigen::Quaterniond q = Eigen::AngleAxisd(a, Vec3::UnitZ()) *
                               Eigen::AngleAxisd(b, Vec3::UnitX()) *
                               Eigen::AngleAxisd(c, Vec3::UnitY());
  s.rotation = Rotation(q);

  // Body angular rate of R = Rz(a) Rx(b) Ry(c):
  //   omega = u1 a' + u2 b' + u3 c'
  // with u1 = Ry(c)^T Rx(b)^T e_z, u2 = Ry(c)^T e_x, u3 = e_y. The angular
  // acceleration differentiates the frame vectors along b(t), c(t).
  const double sb = std::sin(b), cb = std::cos(b);
  const double sc = std::sin(c), cc = std::cos(c);
  const Vec3 u1(-sc * cb, sb, cc * cb);
  const Vec3 u2(cc, 0.0, sc);
  const Vec3 u3 = Vec3::UnitY();
  const Vec3 du1_db(sc * sb, cb, -cc * sb);
  const Vec3 du1_dc(-cc * cb, 0.0, -sc * cb);
  const Vec3 du1 = du1_db * db + du1_dc * dc;
  const Vec3 du2 = Vec3(-sc, 0.0, cc) * dc;

  s.angular_velocity_body = u1 * da + u2 * db + u3 * dc;
  s.angular_acceleration_body = du1 * da + u1 * dda + du2 * db + u2 * ddb + u3 * ddc;
  return s;
}

MotionState MotionModel::eval(double t) const {
  if (!spline_) return eval_analytic(t);
  MotionState s;
  const PositionSpline::State ps = spline_->position.eval(t);
  s.position = ps.position;
  s.velocity = ps.velocity;
  s.acceleration = ps.acceleration;
  const auto [seg, u] = spline_->rotation.grid().locate(t);
  const auto& cp = spline_->rotation.control_points();
  Eigen::Quaterniond qcp[4];
  for (int j = 0; j < 4; ++j) qcp[j] = cp[seg + j].quaternion();
  Eigen::Quaterniond q;
  Vec3 omega, alpha;
  eval_rotation_segment<double>(qcp, u, 1.0 / spline_->rotation.grid().knot_interval(), &q,
                                &omega, &alpha);
  s.rotation = Rotation(q);
  s.angular_velocity_body = omega;
  s.angular_acceleration_body = alpha;
  return s;
}

RigidTransform MotionModel::pose(double t) const {
  const MotionState s = eval(t);
  return {s.rotation, s.position};
}

// ---------------------------------------------------------------------------
// Default rig.

std::vector<ScenePlane> default_scene() {
  std::vector<ScenePlane> planes;
  const double x0 = -5.0, x1 = 5.0, y0 = -4.0, y1 = 4.0, z0 = -1.3, z1 = 1.7;
  const auto rect = [](const Vec3& origin, const Vec3& u, const Vec3& v, double ue, double ve,
                       double checker, double lo, double hi) {
    ScenePlane p;
    p.origin = origin;
    p.u_axis = u;
    p.v_axis = v;
    p.u_extent = ue;
    p.v_extent = ve;
    p.checker_size = checker;
    p.gray_low = lo;
    p.gray_high = hi;
    return p;
  };
  const Vec3 ex = Vec3::UnitX(), ey = Vec3::UnitY(), ez = Vec3::UnitZ();
  // Floor, ceiling, four walls.
  planes.push_back(rect({x0, y0, z0}, ex, ey, x1 - x0, y1 - y0, 0.5, 0.20, 0.80));
  planes.push_back(rect({x0, y0, z1}, ex, ey, x1 - x0, y1 - y0, 0.5, 0.30, 0.75));
  planes.push_back(rect({x1, y0, z0}, ey, ez, y1 - y0, z1 - z0, 0.5, 0.25, 0.85));
  planes.push_back(rect({x0, y0, z0}, ey, ez, y1 - y0, z1 - z0, 0.5, 0.15, 0.70));
  planes.push_back(rect({x0, y1, z0}, ex, ez, x1 - x0, z1 - z0, 0.5, 0.25, 0.90));
  planes.push_back(rect({x0, y0, z0}, ex, ez, x1 - x0, z1 - z0, 0.5, 0.20, 0.65));
  // Two boxes (five faces each, open underneath) break the planar symmetry
  // and give nearby surfaces at rig height.
  const auto box = [&](const Vec3& lo, const Vec3& hi, double checker, double gl, double gh) {
    planes.push_back(rect({lo.x(), lo.y(), hi.z()}, ex, ey, hi.x() - lo.x(), hi.y() - lo.y(),
                          checker, gl, gh));  // top
    planes.push_back(rect({lo.x(), lo.y(), lo.z()}, ey, ez, hi.y() - lo.y(), hi.z() - lo.z(),
                          checker, gl, gh));  // -x face
    planes.push_back(rect({hi.x(), lo.y(), lo.z()}, ey, ez, hi.y() - lo.y(), hi.z() - lo.z(),
                          checker, gl, gh));  // +x face
    planes.push_back(rect({lo.x(), lo.y(), lo.z()}, ex, ez, hi.x() - lo.x(), hi.z() - lo.z(),
                          checker, gl, gh));  // -y face
    planes.push_back(rect({lo.x(), hi.y(), lo.z()}, ex, ez, hi.x() - lo.x(), hi.z() - lo.z(),
                          checker, gl, gh));  // +y face
  };
  box({2.0, -2.5, -1.3}, {3.2, -1.3, -0.1}, 0.3, 0.10, 0.95);
  box({-3.5, 1.2, -1.3}, {-2.3, 2.6, 0.3}, 0.3, 0.12, 0.88);
  return planes;
}

RigSpec default_rig() {
  RigSpec rig;
  rig.scene = default_scene();

  const auto rot_zxy = [](double yaw, double roll, double pitch) {
    return Rotation(Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
                                       Eigen::AngleAxisd(roll, Vec3::UnitX()) *
                                       Eigen::AngleAxisd(pitch, Vec3::UnitY())));
  };

  SimLidar l0;
  l0.id = "lidar0";
  l0.extrinsics.T_imu_sensor =
      RigidTransform(rot_zxy(2.0 * kDeg, 1.2 * kDeg, -1.5 * kDeg), Vec3(0.12, 0.03, 0.06));
  l0.fov_vertical_deg = 40.0;
  SimLidar l1 = l0;
  l1.id = "lidar1";
  l1.extrinsics.T_imu_sensor =
      RigidTransform(rot_zxy(90.0 * kDeg, -1.0 * kDeg, 2.2 * kDeg), Vec3(-0.10, 0.08, 0.10));
  rig.lidars = {l0, l1};

  // Camera optical frames: z forward along the IMU x axis (before yawing the
  // second camera), x right, y down.
  Mat3 cam_axes;
  cam_axes.col(0) = Vec3(0.0, -1.0, 0.0);
  cam_axes.col(1) = Vec3(0.0, 0.0, -1.0);
  cam_axes.col(2) = Vec3(1.0, 0.0, 0.0);

  SimCamera c0;
  c0.id = "cam0";
  c0.extrinsics.T_imu_sensor = RigidTransform(
      Rotation(cam_axes) * rot_zxy(0.8 * kDeg, -0.5 * kDeg, 0.6 * kDeg), Vec3(0.15, -0.05, 0.02));
  c0.extrinsics.time_offset = -0.003;
  c0.intrinsics.model = CameraModelType::kPinholeRadtan4;
  c0.intrinsics.width = 640;
  c0.intrinsics.height = 480;
  c0.intrinsics.fx = 185.0;
  c0.intrinsics.fy = 185.0;
  c0.intrinsics.cx = 320.0;
  c0.intrinsics.cy = 240.0;
  c0.intrinsics.distortion = Vec4(-0.08, 0.01, 4e-4, -3e-4);

  SimCamera c1;
  c1.id = "cam1";
  c1.extrinsics.T_imu_sensor =
      RigidTransform(rot_zxy(60.0 * kDeg, 0.0, 0.0) * Rotation(cam_axes) *
                         rot_zxy(-0.7 * kDeg, 0.4 * kDeg, -0.9 * kDeg),
                     Vec3(-0.06, 0.14, 0.05));
  c1.extrinsics.time_offset = 0.004;
  c1.intrinsics.model = CameraModelType::kFisheyeEquidistant4;
  c1.intrinsics.width = 800;
  c1.intrinsics.height = 800;
  c1.intrinsics.fx = 230.0;
  c1.intrinsics.fy = 230.0;
  c1.intrinsics.cx = 400.0;
  c1.intrinsics.cy = 400.0;
  c1.intrinsics.distortion = Vec4(0.015, -0.01, 0.004, -0.001);
  c1.intrinsics.max_theta = 1.7;
  rig.cameras = {c0, c1};

  rig.imu.rate_hz = 200.0;
  rig.imu.bias.gyro = Vec3(0.002, -0.001, 0.0015);
  rig.imu.bias.accel = Vec3(0.05, -0.03, 0.08);
  rig.imu.time_offset = 0.002;
  return rig;
}

// ---------------------------------------------------------------------------
// Generation.

namespace {

struct SceneSampler {
  const std::vector<ScenePlane>* planes;
  std::vector<double> cumulative_area;

  explicit SceneSampler(const std::vector<ScenePlane>& scene) : planes(&scene) {
    double total = 0.0;
    for (const auto& p : scene) {
      total += p.u_extent * p.v_extent;
      cumulative_area.push_back(total);
    }
  }

  // Uniform-by-area surface point, with a small margin away from the edges.
  Vec3 sample(std::mt19937_64& rng, int* plane_index = nullptr) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double pick = unit(rng) * cumulative_area.back();
    const auto it = std::lower_bound(cumulative_area.begin(), cumulative_area.end(), pick);
    const int idx = static_cast<int>(it - cumulative_area.begin());
    const ScenePlane& p = (*planes)[idx];
    const double u = (0.03 + 0.94 * unit(rng)) * p.u_extent;
    const double v = (0.03 + 0.94 * unit(rng)) * p.v_extent;
    if (plane_index) *plane_index = idx;
    return p.point_at(u, v);
  }
};

// First plane hit along start -> dir, if any.
bool raycast_scene(const std::vector<ScenePlane>& scene, const Vec3& start, const Vec3& dir,
                   double* best_range, int* best_plane, double* u, double* v) {
  double best = std::numeric_limits<double>::infinity();
  int plane = -1;
  double bu = 0.0, bv = 0.0;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    double r, pu, pv;
    if (scene[i].raycast(start, dir, &r, &pu, &pv) && r < best) {
      best = r;
      plane = static_cast<int>(i);
      bu = pu;
      bv = pv;
    }
  }
  if (plane < 0) return false;
  if (best_range) *best_range = best;
  if (best_plane) *best_plane = plane;
  if (u) *u = bu;
  if (v) *v = bv;
  return true;
}

// A target point is visible from `eye` when no scene surface occludes the
// segment between them (the target's own surface hits at the full distance).
bool point_visible(const std::vector<ScenePlane>& scene, const Vec3& eye, const Vec3& target) {
  const Vec3 delta = target - eye;
  const double dist = delta.norm();
  if (dist < 1e-9) return false;
  const Vec3 dir = delta / dist;
  double range;
  if (!raycast_scene(scene, eye, dir, &range, nullptr, nullptr, nullptr)) return true;
  return range >= dist - 1e-6;
}

RigConfig make_config(const RigSpec& rig) {
  RigConfig config;
  for (const auto& l : rig.lidars) {
    LidarCalibration cal;
    cal.id = l.id;
    cal.extrinsics = l.extrinsics;
    cal.range_sigma = l.range_sigma > 0.0 ? l.range_sigma : 0.01;
    config.lidars.push_back(cal);
  }
  for (const auto& c : rig.cameras) {
    CameraCalibration cal;
    cal.id = c.id;
    cal.extrinsics = c.extrinsics;
    cal.intrinsics = c.intrinsics;
    cal.pixel_sigma = c.pixel_sigma > 0.0 ? c.pixel_sigma : 1.0;
    config.cameras.push_back(cal);
  }
  config.imu.rate_hz = rig.imu.rate_hz;
  config.imu.gyro_sigma = rig.imu.gyro_sigma > 0.0 ? rig.imu.gyro_sigma : 1.7e-3;
  config.imu.accel_sigma = rig.imu.accel_sigma > 0.0 ? rig.imu.accel_sigma : 2e-2;
  config.imu.time_offset = rig.imu.time_offset;
  return config;
}

}  // namespace

SimulationResult generate(const RigSpec& rig, const MotionSpec& motion, std::uint64_t seed) {
  rig.validate();
  const MotionModel model(motion);
  const double duration = model.spec().duration;
  const Vec3 gravity(0.0, 0.0, -kGravityMagnitude);

  SimulationResult out;
  out.dataset.config = make_config(rig);

  // --- IMU ------------------------------------------------------------------
  {
    auto rng = stream_rng(seed, kSaltImu);
    const double dt = 1.0 / rig.imu.rate_hz;
    const int count = static_cast<int>(std::floor(duration * rig.imu.rate_hz)) + 1;
    out.dataset.imu.reserve(count);
    for (int k = 0; k < count; ++k) {
      const double t_imu = k * dt;
      const double t_ref = t_imu + rig.imu.time_offset;
      const MotionState s = model.eval(t_ref);
      ImuSample sample;
      sample.t = t_imu;
      sample.gyro = s.angular_velocity_body + rig.imu.bias.gyro + gauss3(rng, rig.imu.gyro_sigma);
      sample.accel = s.rotation.inverse() * (s.acceleration - gravity) + rig.imu.bias.accel +
                     gauss3(rng, rig.imu.accel_sigma);
      out.dataset.imu.push_back(sample);
    }
  }

  // --- LiDAR scans and per-LiDAR odometry ------------------------------------
  for (std::size_t j = 0; j < rig.lidars.size(); ++j) {
    const SimLidar& lidar = rig.lidars[j];
    auto rng = stream_rng(seed, kSaltLidarBase + j);
    auto drift_rng = stream_rng(seed, kSaltDriftBase + j);
    std::normal_distribution<double> range_noise(0.0, 1.0);

    LidarData data;
    data.id = lidar.id;
    const int num_scans = static_cast<int>(std::floor(duration * lidar.rate_hz));
    const int rays = lidar.scan_rows * lidar.scan_cols;
    const double sweep = 0.9 / lidar.rate_hz;  // active fraction of the scan period
    const double az0 = -0.5 * lidar.fov_horizontal_deg * kDeg;
    const double el0 = -0.5 * lidar.fov_vertical_deg * kDeg;
    const double daz = lidar.fov_horizontal_deg * kDeg /
                       std::max(1, lidar.scan_cols - 1);
    const double del = lidar.fov_vertical_deg * kDeg / std::max(1, lidar.scan_rows - 1);

    const RigidTransform T_world_lidar0 = model.pose(0.0) * lidar.extrinsics.T_imu_sensor;
    const RigidTransform T_lidar0_world = T_world_lidar0.inverse();
    RigidTransform drift = RigidTransform::identity();
    Vec3 last_position = T_world_lidar0.translation;

    for (int k = 0; k < num_scans; ++k) {
      const double t0 = k / lidar.rate_hz;
      LidarScan scan;
      scan.t = t0;
      scan.points.reserve(rays);
      for (int col = 0; col < lidar.scan_cols; ++col) {
        for (int row = 0; row < lidar.scan_rows; ++row) {
          const int idx = col * lidar.scan_rows + row;
          const double t = t0 + sweep * idx / rays;
          const RigidTransform T_world_sensor = model.pose(t) * lidar.extrinsics.T_imu_sensor;
          const double az = az0 + col * daz;
          const double el = el0 + row * del;
          const Vec3 dir_sensor(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                                std::sin(el));
          const Vec3 dir_world = T_world_sensor.rotation * dir_sensor;
          double range, u, v;
          int plane;
          if (!raycast_scene(rig.scene, T_world_sensor.translation, dir_world, &range, &plane,
                             &u, &v)) {
            continue;
          }
          if (range < lidar.min_range || range > lidar.max_range) continue;
          double measured = range;
          if (lidar.range_sigma > 0.0) measured += lidar.range_sigma * range_noise(rng);
          LidarPoint point;
          point.t = t;
          point.p = dir_sensor * measured;
          point.intensity = rig.scene[plane].intensity_at(u, v);
          scan.points.push_back(point);
        }
      }

      // Odometry pose of this LiDAR in its own start frame, optionally with a
      // slow random walk proportional to distance traveled.
      const RigidTransform T_world_sensor = model.pose(t0) * lidar.extrinsics.T_imu_sensor;
      RigidTransform T_odom_sensor = T_lidar0_world * T_world_sensor;
      if (rig.odometry_drift) {
        const double dist = (T_world_sensor.translation - last_position).norm();
        last_position = T_world_sensor.translation;
        const double rot_sigma = rig.drift_rot_deg_per_10m * kDeg * dist / 10.0;
        const double trans_sigma = rig.drift_trans_m_per_10m * dist / 10.0;
        drift = drift * RigidTransform(Rotation::exp(gauss3(drift_rng, rot_sigma)),
                                       gauss3(drift_rng, trans_sigma));
        T_odom_sensor = drift * T_odom_sensor;
      }
      data.odometry.push_back({t0, T_odom_sensor});
      data.scans.push_back(std::move(scan));
    }
    out.dataset.lidars.push_back(std::move(data));
  }

  // --- Landmarks and feature tracks ------------------------------------------
  {
    auto rng = stream_rng(seed, kSaltLandmarks);
    const SceneSampler sampler(rig.scene);
    out.landmarks.reserve(rig.num_landmarks);
    for (int i = 0; i < rig.num_landmarks; ++i) out.landmarks.push_back(sampler.sample(rng));

    std::vector<FeatureTrack> tracks(rig.num_landmarks);
    for (int i = 0; i < rig.num_landmarks; ++i) tracks[i].id = i;
    std::vector<int> seen_in(rig.cameras.size(), 0);

    for (std::size_t c = 0; c < rig.cameras.size(); ++c) {
      const SimCamera& cam = rig.cameras[c];
      auto cam_rng = stream_rng(seed, kSaltCameraBase + c);
      std::normal_distribution<double> pix(0.0, 1.0);
      std::vector<bool> seen(rig.num_landmarks, false);
      const int frames = static_cast<int>(std::floor(duration * cam.rate_hz));
      for (int k = 0; k < frames; ++k) {
        const double t_ref =
            (k + static_cast<double>(c) / rig.cameras.size()) / cam.rate_hz;
        if (t_ref > duration) break;
        const RigidTransform T_world_cam = model.pose(t_ref) * cam.extrinsics.T_imu_sensor;
        const RigidTransform T_cam_world = T_world_cam.inverse();
        for (int i = 0; i < rig.num_landmarks; ++i) {
          const Vec3 p_cam = T_cam_world * out.landmarks[i];
          Vec2 uv;
          if (!project_point(cam.intrinsics, p_cam, &uv)) continue;
          if (!cam.intrinsics.in_image(uv, 1.0)) continue;
          if (!point_visible(rig.scene, T_world_cam.translation, out.landmarks[i])) continue;
          if (cam.pixel_sigma > 0.0) {
            uv += cam.pixel_sigma * Vec2(pix(cam_rng), pix(cam_rng));
          }
          TrackObservation obs;
          obs.camera = static_cast<int>(c);
          obs.t = t_ref - cam.extrinsics.time_offset;
          obs.uv = uv;
          tracks[i].observations.push_back(obs);
          if (!seen[i]) {
            seen[i] = true;
            ++seen_in[c];
          }
        }
      }
    }

    for (std::size_t c = 0; c < rig.cameras.size(); ++c) {
      if (seen_in[c] < rig.min_visible_landmarks) {
        std::ostringstream msg;
        msg << "camera " << rig.cameras[c].id << " sees only " << seen_in[c]
            << " landmarks; need " << rig.min_visible_landmarks;
        throw ValidationError(msg.str());
      }
    }
    for (auto& track : tracks) {
      if (track.observations.empty()) continue;
      // Canonical ordering: time, then camera (matches the reload ordering).
      std::sort(track.observations.begin(), track.observations.end(),
                [](const TrackObservation& a, const TrackObservation& b) {
                  return a.t != b.t ? a.t < b.t : a.camera < b.camera;
                });
      out.dataset.tracks.push_back(std::move(track));
    }
  }

  // --- Cross-modal correspondences -------------------------------------------
  if (!rig.cameras.empty() && rig.correspondences_per_frame > 0) {
    auto rng = stream_rng(seed, kSaltCorrespondences);
    const SceneSampler sampler(rig.scene);
    std::normal_distribution<double> pix(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const RigidTransform T_world_base0 =
        model.pose(0.0) * rig.lidars.front().extrinsics.T_imu_sensor;
    const RigidTransform T_base0_world = T_world_base0.inverse();

    struct FrameKey {
      double t_ref;
      int camera;
    };
    std::vector<FrameKey> frames;
    for (std::size_t c = 0; c < rig.cameras.size(); ++c) {
      const SimCamera& cam = rig.cameras[c];
      const int count = static_cast<int>(std::floor(duration * cam.rate_hz));
      for (int k = 0; k < count; k += rig.correspondence_frame_stride) {
        const double t_ref =
            (k + static_cast<double>(c) / rig.cameras.size()) / cam.rate_hz;
        if (t_ref <= duration) frames.push_back({t_ref, static_cast<int>(c)});
      }
    }
    std::sort(frames.begin(), frames.end(),
              [](const FrameKey& a, const FrameKey& b) { return a.t_ref < b.t_ref; });

    for (const FrameKey& frame : frames) {
      const SimCamera& cam = rig.cameras[frame.camera];
      const RigidTransform T_world_cam = model.pose(frame.t_ref) * cam.extrinsics.T_imu_sensor;
      const RigidTransform T_cam_world = T_world_cam.inverse();
      int produced = 0;
      int attempts = 0;
      const int max_attempts = 80 * rig.correspondences_per_frame;
      while (produced < rig.correspondences_per_frame && attempts < max_attempts) {
        ++attempts;
        const Vec3 p_world = sampler.sample(rng);
        const Vec3 p_cam = T_cam_world * p_world;
        Vec2 uv;
        if (!project_point(cam.intrinsics, p_cam, &uv)) continue;
        if (!cam.intrinsics.in_image(uv, 2.0)) continue;
        if (!point_visible(rig.scene, T_world_cam.translation, p_world)) continue;
        if (rig.correspondence_pixel_sigma > 0.0) {
          uv += rig.correspondence_pixel_sigma * Vec2(pix(rng), pix(rng));
        }
        if (rig.correspondence_outlier_fraction > 0.0 &&
            unit(rng) < rig.correspondence_outlier_fraction) {
          uv = Vec2(unit(rng) * cam.intrinsics.width, unit(rng) * cam.intrinsics.height);
        }
        CrossModalMatch match;
        match.camera = frame.camera;
        match.t = frame.t_ref - cam.extrinsics.time_offset;
        match.uv = uv;
        match.point = T_base0_world * p_world;
        out.dataset.correspondences.push_back(match);
        ++produced;
      }
    }
    out.dataset.has_correspondences = !out.dataset.correspondences.empty();
  }

  // --- Ground-truth state ------------------------------------------------------
  out.truth = state_from_config(out.dataset.config);
  out.truth.imu_bias = rig.imu.bias;
  out.truth.imu_time_offset = rig.imu.time_offset;
  out.truth.gravity = gravity;
  {
    std::vector<TimedPose> poses;
    const double pad = 0.4;
    const double dt = 0.02;
    for (double t = -pad; t <= duration + pad + 0.5 * dt; t += dt) {
      poses.push_back({t, model.pose(t)});
    }
    out.truth.trajectory = fit_trajectory(std::move(poses), 0.1);
  }
  out.truth.T_world_odom = model.pose(0.0) * rig.lidars.front().extrinsics.T_imu_sensor;
  for (int i = 0; i < rig.num_landmarks; ++i) out.truth.landmarks[i] = out.landmarks[i];

  out.dataset.validate();
  return out;
}

CalibrationState perturb(const CalibrationState& truth, double rot_deg, double trans_cm,
                         double td_ms, double intr_pct, std::uint64_t seed) {
  if (rot_deg < 0.0 || trans_cm < 0.0 || td_ms < 0.0 || intr_pct < 0.0) {
    throw ValidationError("perturbation magnitudes must be non-negative");
  }
  CalibrationState state = truth;
  auto rng = stream_rng(seed, 0x7e57ab1e);
  std::bernoulli_distribution coin(0.5);
  const double angle = rot_deg * kDeg;
  const double dist = trans_cm / 100.0;
  const double dt = td_ms / 1000.0;

  const auto bump_pose = [&](RigidTransform* T) {
    if (angle > 0.0) {
      T->rotation = T->rotation * Rotation::exp(angle * random_unit_vector(rng));
    }
    if (dist > 0.0) T->translation += dist * random_unit_vector(rng);
  };
  const auto signed_dt = [&]() { return coin(rng) ? dt : -dt; };

  for (auto& lidar : state.lidars) bump_pose(&lidar.extrinsics.T_imu_sensor);
  for (auto& cam : state.cameras) {
    bump_pose(&cam.extrinsics.T_imu_sensor);
    if (dt > 0.0) cam.extrinsics.time_offset += signed_dt();
    if (intr_pct > 0.0) {
      cam.intrinsics.fx *= 1.0 + (coin(rng) ? 1.0 : -1.0) * intr_pct / 100.0;
      cam.intrinsics.fy *= 1.0 + (coin(rng) ? 1.0 : -1.0) * intr_pct / 100.0;
    }
  }
  if (dt > 0.0) state.imu_time_offset += signed_dt();
  return state;
}

}  // namespace rigcal
