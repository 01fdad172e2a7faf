#include "rigcal/calibration.hpp"

#include <cmath>
#include <set>

namespace rigcal {

namespace {

template <typename T>
int index_of(const std::vector<T>& sensors, const std::string& id) {
  for (size_t i = 0; i < sensors.size(); ++i) {
    if (sensors[i].id == id) return static_cast<int>(i);
  }
  return -1;
}

void check_unique_ids(const std::vector<LidarCalibration>& lidars,
                      const std::vector<CameraCalibration>& cameras) {
  std::set<std::string> seen;
  for (const auto& l : lidars) {
    if (!seen.insert(l.id).second) throw ValidationError("duplicate sensor id '" + l.id + "'");
  }
  for (const auto& c : cameras) {
    if (!seen.insert(c.id).second) throw ValidationError("duplicate sensor id '" + c.id + "'");
  }
}

}  // namespace

int RigConfig::lidar_index(const std::string& id) const { return index_of(lidars, id); }
int RigConfig::camera_index(const std::string& id) const { return index_of(cameras, id); }

void RigConfig::validate() const {
  if (lidars.empty()) throw ValidationError("rig config declares no LiDAR");
  check_unique_ids(lidars, cameras);
  if (lidars[0].extrinsics.time_offset != 0.0) {
    throw ValidationError("reference sensor '" + lidars[0].id + "' must have time offset 0");
  }
  for (const auto& l : lidars) {
    l.extrinsics.validate(l.id);
    if (l.range_sigma <= 0.0) throw ValidationError("lidar '" + l.id + "': range sigma must be > 0");
  }
  for (const auto& c : cameras) {
    c.extrinsics.validate(c.id);
    if (c.pixel_sigma <= 0.0) throw ValidationError("camera '" + c.id + "': pixel sigma must be > 0");
    if (c.intrinsics.width <= 0 || c.intrinsics.height <= 0 || c.intrinsics.fx <= 0.0 ||
        c.intrinsics.fy <= 0.0) {
      throw ValidationError("camera '" + c.id + "': invalid intrinsics");
    }
  }
  if (imu.rate_hz <= 0.0 || imu.gyro_sigma <= 0.0 || imu.accel_sigma <= 0.0) {
    throw ValidationError("IMU configuration requires positive rate and noise levels");
  }
  if (std::abs(imu.time_offset) >= kMaxTimeOffset) {
    throw ValidationError("IMU time offset guess exceeds the " + std::to_string(kMaxTimeOffset) +
                          " s bound");
  }
  if (knot_interval <= 0.0) throw ValidationError("knot interval must be > 0");
}

int CalibrationState::lidar_index(const std::string& id) const { return index_of(lidars, id); }
int CalibrationState::camera_index(const std::string& id) const { return index_of(cameras, id); }

void CalibrationState::validate() const {
  if (lidars.empty()) throw ValidationError("calibration state has no LiDAR");
  check_unique_ids(lidars, cameras);
  if (lidars[0].extrinsics.time_offset != 0.0) {
    throw ValidationError("reference sensor '" + lidars[0].id + "' must have time offset 0");
  }
  for (const auto& l : lidars) l.extrinsics.validate(l.id);
  for (const auto& c : cameras) c.extrinsics.validate(c.id);
  if (std::abs(imu_time_offset) >= kMaxTimeOffset) {
    throw ValidationError("IMU time offset exceeds the " + std::to_string(kMaxTimeOffset) +
                          " s bound");
  }
  const double gn = gravity.norm();
  if (std::abs(gn - kGravityMagnitude) > 1e-6) {
    throw ValidationError("gravity magnitude " + std::to_string(gn) + " is not " +
                          std::to_string(kGravityMagnitude));
  }
}

CalibrationState state_from_config(const RigConfig& config) {
  config.validate();
  CalibrationState state;
  state.lidars = config.lidars;
  state.cameras = config.cameras;
  state.imu_bias = ImuBias{};
  state.imu_time_offset = config.imu.time_offset;
  state.gravity = Vec3(0.0, 0.0, -kGravityMagnitude);
  return state;
}

void write_state_to_config(const CalibrationState& state, RigConfig* config) {
  for (const auto& l : state.lidars) {
    const int i = config->lidar_index(l.id);
    if (i < 0) throw ValidationError("state lidar '" + l.id + "' not declared in config");
    config->lidars[i].extrinsics = l.extrinsics;
  }
  for (const auto& c : state.cameras) {
    const int i = config->camera_index(c.id);
    if (i < 0) throw ValidationError("state camera '" + c.id + "' not declared in config");
    config->cameras[i].extrinsics = c.extrinsics;
    config->cameras[i].intrinsics = c.intrinsics;
  }
  config->imu.time_offset = state.imu_time_offset;
}

void SensorDataset::validate() const {
  config.validate();
  if (lidars.size() != config.lidars.size()) {
    throw ValidationError("dataset has " + std::to_string(lidars.size()) +
                          " LiDAR streams but the config declares " +
                          std::to_string(config.lidars.size()));
  }
  for (size_t i = 0; i < lidars.size(); ++i) {
    if (lidars[i].id != config.lidars[i].id) {
      throw ValidationError("LiDAR stream order mismatch: '" + lidars[i].id + "' vs config '" +
                            config.lidars[i].id + "'");
    }
  }
  const int ncam = static_cast<int>(config.cameras.size());
  for (const auto& track : tracks) {
    for (const auto& obs : track.observations) {
      if (obs.camera < 0 || obs.camera >= ncam) {
        throw ValidationError("track " + std::to_string(track.id) +
                              " references camera index " + std::to_string(obs.camera));
      }
    }
  }
  for (const auto& match : correspondences) {
    if (match.camera < 0 || match.camera >= ncam) {
      throw ValidationError("correspondence references camera index " +
                            std::to_string(match.camera));
    }
  }
}

}  // namespace rigcal
