#pragma once

// Stage orchestration for full-rig calibration:
//   1. IMU + base-LiDAR trajectory bootstrap, per-sensor hand-eye seeding,
//      and visual landmark initialization (initializer module),
//   2. per-LiDAR map refinement (trajectory + that LiDAR's extrinsic against
//      its own plane map, IMU factors included),
//   3. joint refinement of trajectory, all extrinsics, clock offsets, biases,
//      gravity and landmarks over the shared multi-LiDAR map,
//   4. cross-modal gating (PnP RANSAC over rendered-map correspondences) and
//      a final intrinsic + extrinsic polish against the frozen LiDAR map.
//
// Stages mutate a CalibrationState in place and are deterministic. When the
// bootstrap flags single-axis (planar) rotation excitation, the z coordinate
// of every sensor's translation stays pinned to its initial guess through all
// stages and the report says so.

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "rigcal/calibration.hpp"
#include "rigcal/initializer.hpp"
#include "rigcal/io.hpp"
#include "rigcal/metrics.hpp"
#include "rigcal/solver.hpp"
#include "rigcal/voxel_map.hpp"

namespace rigcal {

struct PnpOptions {
  int max_iterations = 500;          // RANSAC rounds (confidence-based early exit)
  double inlier_threshold_px = 2.0;  // reprojection gate
  double confidence = 0.99;
  double min_inlier_ratio = 0.2;     // below this the gating fails
  std::uint64_t seed = 0;            // deterministic sampling
};

struct PipelineOptions {
  SolveOptions solver;                  // nonlinear solve settings per stage
  VoxelMapParams map;                   // voxel plane-map construction
  PlanarExtractionParams extraction;    // per-scan planar point preselection
  int lidar_refit_rounds = 3;           // plane re-fit rounds, single-LiDAR stage
  int joint_refit_rounds = 2;           // map re-fit rounds, joint stage
  int max_imu_factors = 2000;           // IMU samples are strided to this cap
  int max_plane_factors_per_scan = 150;
  int max_frames_per_camera = 120;      // visual frames are strided to this cap
  double render_min_translation = 0.5;    // m, render keyframe selection
  double render_min_rotation_deg = 5.0;   // deg, render keyframe selection
  PnpOptions pnp;
  MetricConfig metrics;
  bool compute_metrics = true;  // final map metrics in calibrate()
  std::ostream* log = nullptr;
};

// ---------------------------------------------------------------------------
// Map plumbing

/// Builds the world-frame planar voxel map from the listed LiDAR indices
/// (empty = all) at the current state. Each scan contributes its locally
/// planar returns, strided to the per-scan factor cap; returns outside the
/// trajectory span are skipped. MapPointRef::point indexes the original scan
/// points array, so intensities can be looked up from the dataset.
VoxelPlaneMap build_lidar_map(const CalibrationState& state, const SensorDataset& dataset,
                              const std::vector<int>& lidar_indices,
                              const PipelineOptions& options = {});

/// RMS point-to-plane distance over every planar voxel of a map, meters.
/// Layered (badly registered) clouds score high even after the per-voxel
/// refit, because the fitted planes cannot absorb the layer separation.
double map_plane_rms(const VoxelPlaneMap& map);

// ---------------------------------------------------------------------------
// Refinement stages

/// Single-LiDAR map refinement: frees the trajectory, this LiDAR's extrinsic
/// rotation/translation and the plane landmarks; IMU factors (frozen biases,
/// gravity, clock) keep the trajectory observable. The map is rebuilt and the
/// solve repeated for `lidar_refit_rounds` rounds.
///
/// Throws ValidationError for an unknown id; solver failures are rethrown as
/// SolverError tagged with the stage name.
void stage_refine_single_lidar(CalibrationState* state, const SensorDataset& dataset,
                               const std::string& lidar_id, const PipelineOptions& options = {},
                               SolveSummary* last_summary = nullptr);

/// Joint refinement over the shared multi-LiDAR map plus visual tracks and
/// IMU: frees the trajectory, every sensor extrinsic, the IMU and camera
/// clock offsets, biases, gravity, visual landmarks, and plane landmarks.
/// Camera intrinsics stay frozen. LiDAR clocks define the reference time and
/// are never estimated.
void stage_joint_refine(CalibrationState* state, const SensorDataset& dataset,
                        const PipelineOptions& options = {},
                        SolveSummary* last_summary = nullptr);

// ---------------------------------------------------------------------------
// Cross-modal correspondence plumbing

struct RenderedView {
  GrayImage image;
  std::vector<int> point_index;     // per pixel, row-major; -1 where empty
  std::vector<MapPointRef> points;  // the map points the indices refer to
  int covered_pixels = 0;
};

/// Projects every map point (state.map if present, else a map freshly built
/// from all LiDARs) into the camera at frame time `t_frame` (camera clock).
/// A z-buffer keeps the nearest point per pixel; intensity, clamped to
/// [0, 1], becomes the 8-bit gray value.
///
/// Throws SpanError when the camera pose falls outside the trajectory.
RenderedView render_intensity_image(const CalibrationState& state, const SensorDataset& dataset,
                                    const std::string& camera_id, double t_frame,
                                    const PipelineOptions& options = {});

/// Greedy parallax-based keyframe selection among one camera's observation
/// times: a frame is kept when it moved at least `render_min_translation` or
/// rotated at least `render_min_rotation_deg` since the last kept frame.
/// Returned times are camera-clock.
std::vector<double> select_render_frames(const CalibrationState& state,
                                         const SensorDataset& dataset, int camera_index,
                                         const PipelineOptions& options = {});

/// One pixel <-> 3-D point pair for PnP gating; the point is expressed in the
/// frame the pose is estimated in.
struct PnpMatch {
  Vec2 uv = Vec2::Zero();
  Vec3 point = Vec3::Zero();
};

struct PnpResult {
  RigidTransform T_frame_camera;  // camera pose in the point frame
  std::vector<int> inliers;       // indices into the match list, ascending
  int iterations = 0;             // RANSAC rounds actually run
};

/// RANSAC over 4-match samples, each refined by damped Gauss-Newton from the
/// prior pose; inliers reproject within `inlier_threshold_px`. The largest
/// consensus set is refined on all inliers. Returns nullopt (gating failure)
/// for fewer than 6 matches or an inlier ratio below `min_inlier_ratio`.
std::optional<PnpResult> gate_correspondences_pnp_ransac(const std::vector<PnpMatch>& matches,
                                                         const CameraIntrinsics& intr,
                                                         const RigidTransform& prior,
                                                         const PnpOptions& options = {});

/// Runs per-frame PnP gating over dataset.correspondences. Match points
/// arrive in the base-LiDAR odometry frame and are lifted to world through
/// state.T_world_odom; survivors are returned with world-frame points.
/// Frames whose gating fails are dropped with a warning.
std::vector<CrossModalMatch> gate_dataset_correspondences(const CalibrationState& state,
                                                          const SensorDataset& dataset,
                                                          const PipelineOptions& options,
                                                          std::vector<std::string>* warnings);

// ---------------------------------------------------------------------------
// Final polish + reporting

/// Final intrinsic/extrinsic stage against the frozen LiDAR map: frees camera
/// intrinsics, camera extrinsics, camera clocks, the trajectory and visual
/// landmarks; plane landmarks, LiDAR extrinsics, biases and gravity stay
/// frozen. All four residual classes participate (IMU, LiDAR plane, visual
/// reprojection, map-point reprojection from `gated_world`). With no gated
/// matches the stage falls back to joint-refinement behavior and records a
/// warning. Returns the stage report (parameters + residual table).
CalibrationReport stage_joint_intrinsic_extrinsic(CalibrationState* state,
                                                  const SensorDataset& dataset,
                                                  const std::vector<CrossModalMatch>& gated_world,
                                                  const PipelineOptions& options = {});

/// Copies the estimated parameters and bookkeeping of a state into a report.
CalibrationReport make_report(const CalibrationState& state);

/// Full calibration: bootstrap, hand-eye seeding, visual init, per-LiDAR
/// refinement, joint refinement, cross-modal gating, final polish, metrics.
std::pair<CalibrationState, CalibrationReport> calibrate(const SensorDataset& dataset,
                                                         const PipelineOptions& options = {});

}  // namespace rigcal
