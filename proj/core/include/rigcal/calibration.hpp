#pragma once

// Shared rig description and estimation-state types.
//
// A rig has one IMU (the body frame), one or more LiDARs (index 0 is the
// reference sensor whose clock defines reference time and whose odometry
// anchors the world frame), and zero or more cameras. LiDARs are assumed
// hardware-synchronized to the reference clock, so their time offsets are
// structural constants (0 for the base by definition); the IMU and each
// camera carry a free clock offset with t_ref = t_sensor + offset.

#include "rigcal/sensor_models.hpp"
#include "rigcal/spline.hpp"
#include "rigcal/types.hpp"
#include "rigcal/voxel_map.hpp"

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace rigcal {

struct LidarCalibration {
  std::string id = "lidar0";
  SensorExtrinsics extrinsics;  // T_imu_lidar
  double range_sigma = 0.01;    // expected ranging noise, meters (factor weight)
};

struct CameraCalibration {
  std::string id = "cam0";
  SensorExtrinsics extrinsics;  // T_imu_camera
  CameraIntrinsics intrinsics;
  double pixel_sigma = 1.0;  // expected detection noise, pixels (factor weight)
};

struct ImuConfig {
  double rate_hz = 200.0;
  double gyro_sigma = 1.7e-3;  // rad/s (factor weight)
  double accel_sigma = 2e-2;   // m/s^2 (factor weight)
  double time_offset = 0.0;    // initial guess for the IMU clock offset
};

/// Contents of a rig configuration file: sensor inventory with initial-guess
/// extrinsics/intrinsics/offsets plus the noise levels used to weight factors.
struct RigConfig {
  std::vector<LidarCalibration> lidars;  // [0] is the reference sensor
  std::vector<CameraCalibration> cameras;
  ImuConfig imu;
  double knot_interval = 0.2;  // trajectory resolution for calibration

  int lidar_index(const std::string& id) const;   // -1 when absent
  int camera_index(const std::string& id) const;  // -1 when absent
  void validate() const;
};

/// The full set of quantities being estimated, plus bookkeeping the stages
/// need to carry between each other (landmarks, plane map, frame anchoring,
/// observability notes).
struct CalibrationState {
  Trajectory trajectory;  // IMU body in the gravity-aligned world frame
  std::vector<LidarCalibration> lidars;
  std::vector<CameraCalibration> cameras;
  ImuBias imu_bias;
  double imu_time_offset = 0.0;
  Vec3 gravity = Vec3(0.0, 0.0, -kGravityMagnitude);

  std::unordered_map<int, Vec3> landmarks;  // visual landmarks by track id (world)
  std::shared_ptr<VoxelPlaneMap> map;       // plane map rebuilt by refinement stages
  RigidTransform T_world_odom;              // world <- base-LiDAR odometry frame

  // Directions the data could not constrain, pinned to their structural prior.
  // `sensor_id` + `coordinate` address the extrinsic-translation coordinate.
  struct FrozenCoordinate {
    std::string sensor_id;
    int coordinate = 2;
    double value = 0.0;
  };
  std::vector<FrozenCoordinate> frozen_translation;
  bool planar_motion = false;  // rotation excitation confined to a single axis
  Vec3 motion_axis = Vec3::UnitZ();
  std::vector<std::string> observability_notes;

  int lidar_index(const std::string& id) const;
  int camera_index(const std::string& id) const;
  void validate() const;  // base offset == 0, per-sensor extrinsics valid
};

/// Initial estimation state from configuration guesses: zero biases, nominal
/// gravity, empty trajectory/landmarks/map.
CalibrationState state_from_config(const RigConfig& config);

/// Copies the calibration parameters (extrinsics, offsets, intrinsics) of a
/// state into a config, preserving the config's noise levels and rates.
/// Sensors are matched by id; unknown ids raise ValidationError.
void write_state_to_config(const CalibrationState& state, RigConfig* config);

// ---------------------------------------------------------------------------
// In-memory sensor dataset (see io.hpp for the on-disk layout).

struct LidarData {
  std::string id = "lidar0";
  std::vector<LidarScan> scans;      // timestamps: reference clock
  std::vector<TimedPose> odometry;   // T_odom_lidar per keyframe, reference clock
};

struct TrackObservation {
  int camera = 0;  // index into config.cameras
  double t = 0.0;  // camera clock
  Vec2 uv = Vec2::Zero();
};

/// One scene feature tracked across frames and cameras. Observations from
/// different cameras share the track id, which unifies their landmark.
struct FeatureTrack {
  int id = 0;
  std::vector<TrackObservation> observations;
};

/// Externally matched pixel <-> LiDAR-map-point pair for the cross-modal
/// refinement stage. The 3-D point is expressed in the base-LiDAR odometry
/// frame (the frame the map is grown in before gravity alignment).
struct CrossModalMatch {
  int camera = 0;
  double t = 0.0;  // camera clock
  Vec2 uv = Vec2::Zero();
  Vec3 point = Vec3::Zero();
};

struct SensorDataset {
  RigConfig config;
  std::vector<ImuSample> imu;  // IMU clock
  std::vector<LidarData> lidars;
  std::vector<FeatureTrack> tracks;
  std::vector<CrossModalMatch> correspondences;
  bool has_correspondences = false;

  void validate() const;  // sensor streams present and consistent with config
};

// ---------------------------------------------------------------------------
// Final report (see io.hpp for the on-disk text format).

struct FactorClassReport {
  std::string name;
  int count = 0;
  int dropped = 0;
  double rms = 0.0;  // whitened, per residual element
};

struct CalibrationReport {
  std::vector<LidarCalibration> lidars;
  std::vector<CameraCalibration> cameras;
  ImuBias imu_bias;
  double imu_time_offset = 0.0;
  Vec3 gravity = Vec3(0.0, 0.0, -kGravityMagnitude);
  std::vector<FactorClassReport> residual_stats;
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::string> observability_notes;
  std::vector<std::string> warnings;
};

}  // namespace rigcal
