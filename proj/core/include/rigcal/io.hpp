#pragma once

// On-disk formats and dataset directory layout.
//
// A dataset directory contains:
//   rig.yaml                      sensor inventory, initial guesses, noise levels
//   imu.csv                       t, wx, wy, wz, ax, ay, az   (IMU clock, SI)
//   lidar<i>/odometry.csv         t, x, y, z, qx, qy, qz, qw  (T_odom_lidar)
//   lidar<i>/scans/<k>.txt|.bin   t, x, y, z, intensity per return
//   cam<i>/tracks.json            feature tracks of camera i
//   correspondences.json          optional pixel <-> map-point matches
//
// Sensor directories are positional (lidar0 is config.lidars[0]); JSON records
// reference sensors by their declared string ids. All numeric output uses 17
// significant digits, which round-trips IEEE doubles exactly; the binary scan
// variant stores the same five fields as little-endian 64-bit floats.

#include "rigcal/calibration.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace rigcal {

struct DatasetWriteOptions {
  bool binary_scans = true;  // ASCII scans are ~2.5x larger but diffable
};

void save_dataset(const SensorDataset& dataset, const std::string& directory,
                  const DatasetWriteOptions& options = {});

/// Loads and validates a dataset directory; optionally prints a per-stream
/// summary (durations, rates, counts). Throws ValidationError with file and
/// line context on malformed input.
SensorDataset load_dataset(const std::string& directory, std::ostream* log = nullptr);

// --- Individual streams (exposed for tests and tooling) ---------------------

void save_imu_csv(const std::vector<ImuSample>& samples, const std::string& path);
std::vector<ImuSample> load_imu_csv(const std::string& path);

void save_odometry_csv(const std::vector<TimedPose>& poses, const std::string& path);
std::vector<TimedPose> load_odometry_csv(const std::string& path);

void save_scan_ascii(const LidarScan& scan, const std::string& path);
LidarScan load_scan_ascii(const std::string& path);
void save_scan_binary(const LidarScan& scan, const std::string& path);
LidarScan load_scan_binary(const std::string& path);

/// Writes the observations of one camera; tracks without observations from
/// that camera are omitted.
void save_tracks_json(const std::vector<FeatureTrack>& tracks, int camera_index,
                      const std::string& camera_id, const std::string& path);
/// Appends one camera's observations into `tracks`, merging by track id.
void load_tracks_json(const std::string& path, const RigConfig& config,
                      std::vector<FeatureTrack>* tracks);

void save_correspondences_json(const std::vector<CrossModalMatch>& matches,
                               const RigConfig& config, const std::string& path);
std::vector<CrossModalMatch> load_correspondences_json(const std::string& path,
                                                       const RigConfig& config);

// --- Configuration and truth (YAML) -----------------------------------------

void save_rig_yaml(const RigConfig& config, const std::string& path);
RigConfig load_rig_yaml(const std::string& path);

/// Truth file: the rig configuration of a simulated dataset plus the quantities
/// that are otherwise estimated (IMU bias, gravity, IMU offset).
void save_truth_yaml(const CalibrationState& truth, const std::string& path);
CalibrationState load_truth_yaml(const std::string& path);

// --- Calibration report ------------------------------------------------------

/// Line-oriented text report: per-sensor extrinsics (quaternion xyzw plus a
/// derived yaw/pitch/roll convenience line), clock offsets in milliseconds,
/// intrinsics, biases, gravity, per-factor residual table, metrics, and notes.
/// save -> load -> save is byte-identical.
void save_report(const CalibrationReport& report, const std::string& path);
CalibrationReport load_report(const std::string& path);

std::string format_report(const CalibrationReport& report);
CalibrationReport parse_report(const std::string& text);

// --- Images -------------------------------------------------------------------

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 8-bit

  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

void save_pgm(const GrayImage& image, const std::string& path);

// --- Map export ----------------------------------------------------------------

/// ASCII PLY point cloud of the planar voxels: world position plus the owning
/// voxel id and plane id per point.
void save_map_ply(const VoxelPlaneMap& map, const std::string& path);

}  // namespace rigcal
