#pragma once

// Synthetic rig and dataset generation, the reference source for every
// recovery test. Ground truth uses a closed-form C^2 motion (position and
// Euler-angle sinusoids with analytic derivatives) rather than a spline, so
// spline-fitting error stays measurable. All clocks are consistent by
// construction: reference time = sensor timestamp + that sensor's true offset,
// exactly. LiDAR returns are ray-cast onto bounded scene rectangles and lie
// exactly on them before range noise is added.

#include "rigcal/calibration.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace rigcal {

/// Bounded textured rectangle: origin + u*u_axis + v*v_axis with
/// u in [0, u_extent], v in [0, v_extent]. Intensity is a checkerboard in the
/// rectangle's own coordinates.
struct ScenePlane {
  Vec3 origin = Vec3::Zero();
  Vec3 u_axis = Vec3::UnitX();
  Vec3 v_axis = Vec3::UnitY();
  double u_extent = 1.0;
  double v_extent = 1.0;
  double checker_size = 0.5;
  double gray_low = 0.25;
  double gray_high = 0.85;

  Vec3 normal() const { return u_axis.cross(v_axis); }
  Vec3 point_at(double u, double v) const { return origin + u * u_axis + v * v_axis; }
  double intensity_at(double u, double v) const;

  /// Range along `dir` (unit) from `start` to the bounded rectangle; false
  /// when the ray misses. Both faces are hit.
  bool raycast(const Vec3& start, const Vec3& dir, double* range, double* u = nullptr,
               double* v = nullptr) const;
  void validate() const;
};

struct SimLidar {
  std::string id = "lidar0";
  SensorExtrinsics extrinsics;  // truth; time offset must be 0 (hardware sync)
  double rate_hz = 10.0;
  int scan_rows = 32;
  int scan_cols = 250;  // rows * cols rays per scan
  double fov_horizontal_deg = 120.0;
  double fov_vertical_deg = 30.0;
  double min_range = 0.2;
  double max_range = 40.0;
  double range_sigma = 0.0;  // injected ranging noise, meters
};

struct SimCamera {
  std::string id = "cam0";
  SensorExtrinsics extrinsics;  // truth; time offset = true camera clock offset
  CameraIntrinsics intrinsics;  // truth
  double rate_hz = 15.0;
  double pixel_sigma = 0.0;  // injected detection noise, pixels
};

struct SimImu {
  double rate_hz = 200.0;
  ImuBias bias;               // truth (constant)
  double time_offset = 0.0;   // true IMU clock offset
  double gyro_sigma = 0.0;    // injected noise, rad/s
  double accel_sigma = 0.0;   // injected noise, m/s^2
};

struct RigSpec {
  std::vector<SimLidar> lidars;  // [0] is the reference sensor
  std::vector<SimCamera> cameras;
  SimImu imu;
  std::vector<ScenePlane> scene;
  int num_landmarks = 300;          // distributed over the scene planes by area
  int min_visible_landmarks = 50;   // per camera, over the whole trajectory

  // Odometry random-walk drift per 10 m traveled (disabled by default).
  bool odometry_drift = false;
  double drift_rot_deg_per_10m = 0.2;
  double drift_trans_m_per_10m = 0.01;

  // Cross-modal correspondence stream (pixel <-> scene point).
  int correspondence_frame_stride = 10;  // every Nth camera frame
  int correspondences_per_frame = 25;
  double correspondence_pixel_sigma = 0.0;
  double correspondence_outlier_fraction = 0.0;

  void validate() const;
};

enum class MotionFamily { kPlanarFigureEight, kFullExcitation };

/// Analytic C^2 trajectory: a figure-eight position sweep with secular plus
/// oscillatory yaw; the full-excitation family adds a z sinusoid and
/// roll/pitch wobble. Setting exact_spline_knot > 0 replaces the analytic
/// curve by its own B-spline fit so the truth becomes exactly representable.
struct MotionSpec {
  MotionFamily family = MotionFamily::kFullExcitation;
  double duration = 60.0;
  Vec3 center = Vec3(0.0, 0.0, 0.2);
  double x_amplitude = 1.6;
  double y_amplitude = 1.0;
  double figure_frequency = 0.05;  // Hz; the y axis runs at twice this
  double z_amplitude = 0.3;
  double z_frequency = 0.17;
  double yaw_rate = 0.12;       // rad/s secular drift
  double yaw_amplitude = 0.5;   // rad
  double yaw_frequency = 0.09;  // Hz
  double roll_amplitude = 0.12;
  double roll_frequency = 0.23;
  double pitch_amplitude = 0.10;
  double pitch_frequency = 0.19;
  double exact_spline_knot = 0.0;

  void validate() const;
};

struct MotionState {
  Vec3 position = Vec3::Zero();  // world
  Vec3 velocity = Vec3::Zero();
  Vec3 acceleration = Vec3::Zero();
  Rotation rotation;  // world <- body
  Vec3 angular_velocity_body = Vec3::Zero();
  Vec3 angular_acceleration_body = Vec3::Zero();
};

class MotionModel {
 public:
  explicit MotionModel(const MotionSpec& spec);

  MotionState eval(double t) const;
  RigidTransform pose(double t) const;
  const MotionSpec& spec() const { return spec_; }

 private:
  MotionState eval_analytic(double t) const;

  MotionSpec spec_;
  std::optional<Trajectory> spline_;  // exact_spline_knot mode
};

/// Desk-scale reference rig: two 120-degree LiDARs at 10 Hz with 8k returns
/// per scan, a pinhole and a fisheye camera at 15 Hz, a 200 Hz IMU with
/// nonzero biases and clock offsets, in a furnished room scene.
RigSpec default_rig();
std::vector<ScenePlane> default_scene();

struct SimulationResult {
  SensorDataset dataset;  // config mirrors the truth; perturb separately
  CalibrationState truth;
  std::vector<Vec3> landmarks;  // true landmark positions, world frame
};

SimulationResult generate(const RigSpec& rig, const MotionSpec& motion, std::uint64_t seed);

/// Initial-guess state: every extrinsic rotated by exactly rot_deg about a
/// uniformly random axis and translated by exactly trans_cm along a uniformly
/// random direction; IMU/camera clock offsets shifted by td_ms with random
/// sign; focal lengths scaled by intr_pct percent with random sign. LiDAR
/// offsets stay fixed (hardware-synchronized). Deterministic in `seed`.
CalibrationState perturb(const CalibrationState& truth, double rot_deg, double trans_cm,
                         double td_ms, double intr_pct, std::uint64_t seed);

}  // namespace rigcal
