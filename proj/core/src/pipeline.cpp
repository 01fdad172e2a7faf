#include "rigcal/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <unordered_set>

#include "rigcal/residuals.hpp"

namespace rigcal {
namespace {

constexpr double kDeg = M_PI / 180.0;

void log_line(const PipelineOptions& options, const std::string& line) {
  if (options.log) (*options.log) << line << "\n";
}

int stride_for(std::size_t n, int cap) {
  if (cap <= 0 || n <= static_cast<std::size_t>(cap)) return 1;
  return static_cast<int>((n + cap - 1) / cap);
}

VecX scalar_block(double v) {
  VecX x(1);
  x[0] = v;
  return x;
}

// ---------------------------------------------------------------------------
// Problem assembly shared by the stages

struct StageBlocks {
  TrajectoryBlockIds traj;
  std::vector<int> lidar_rot, lidar_pos, lidar_td;
  std::vector<int> cam_rot, cam_pos, cam_td, cam_intr;
  int bias_gyro = -1;
  int bias_accel = -1;
  int gravity = -1;
  int imu_td = -1;
  std::unordered_map<int, int> landmarks;  // track id -> block id
};

StageBlocks add_common_blocks(Problem& problem, const CalibrationState& state,
                              bool with_cameras) {
  StageBlocks b;
  b.traj = add_trajectory_blocks(problem, state.trajectory);
  for (const LidarCalibration& l : state.lidars) {
    b.lidar_rot.push_back(
        problem.add_rotation_block(l.extrinsics.T_imu_sensor.rotation, l.id + "_rot"));
    b.lidar_pos.push_back(
        problem.add_euclidean_block(l.extrinsics.T_imu_sensor.translation, l.id + "_pos"));
    b.lidar_td.push_back(problem.add_euclidean_block(scalar_block(l.extrinsics.time_offset),
                                                     l.id + "_td"));
    // LiDAR clocks define the reference time base and are never estimated.
    problem.set_frozen(b.lidar_td.back(), true);
  }
  if (with_cameras) {
    for (const CameraCalibration& c : state.cameras) {
      b.cam_rot.push_back(
          problem.add_rotation_block(c.extrinsics.T_imu_sensor.rotation, c.id + "_rot"));
      b.cam_pos.push_back(
          problem.add_euclidean_block(c.extrinsics.T_imu_sensor.translation, c.id + "_pos"));
      b.cam_td.push_back(
          problem.add_euclidean_block(scalar_block(c.extrinsics.time_offset), c.id + "_td"));
      b.cam_intr.push_back(
          problem.add_euclidean_block(c.intrinsics.as_vector(), c.id + "_intr"));
    }
  }
  b.bias_gyro = problem.add_euclidean_block(state.imu_bias.gyro, "bias_gyro");
  b.bias_accel = problem.add_euclidean_block(state.imu_bias.accel, "bias_accel");
  b.gravity = problem.add_gravity_block(state.gravity, "gravity");
  b.imu_td = problem.add_euclidean_block(scalar_block(state.imu_time_offset), "imu_td");
  return b;
}

void freeze_blocks(Problem& problem, const std::vector<int>& ids) {
  for (int id : ids) problem.set_frozen(id, true);
}

// Planar (single-axis) excitation leaves the z component of every sensor
// lever unobservable; pin it to the running value (= the structural prior).
void apply_planar_freeze(Problem& problem, const CalibrationState& state,
                         const std::vector<int>& pos_blocks) {
  if (!state.planar_motion) return;
  for (int id : pos_blocks) problem.set_coord_frozen(id, 2, true);
}

void add_imu_factors(Problem& problem, const StageBlocks& b, const CalibrationState& state,
                     const SensorDataset& dataset, const PipelineOptions& options) {
  const int stride = stride_for(dataset.imu.size(), options.max_imu_factors);
  for (std::size_t k = 0; k < dataset.imu.size(); k += stride) {
    auto factor = make_imu_factor(b.traj, b.bias_gyro, b.bias_accel, b.gravity, b.imu_td,
                                  dataset.imu[k], dataset.config.imu.gyro_sigma,
                                  dataset.config.imu.accel_sigma, state.imu_time_offset);
    if (factor) problem.add_factor(std::move(factor));
  }
}

void add_plane_factors(Problem& problem, const StageBlocks& b, const VoxelPlaneMap& map,
                       const CalibrationState& state, bool freeze_planes) {
  int index = 0;
  for (const MapVoxel* voxel : map.planar_voxels()) {
    const int plane_id =
        problem.add_euclidean_block(voxel->plane_cp, "plane_" + std::to_string(index++));
    if (freeze_planes) {
      problem.set_frozen(plane_id, true);
    } else {
      problem.set_eliminable(plane_id, true);
    }
    for (const MapPointRef& ref : voxel->points) {
      LidarPoint point;
      point.t = ref.t;
      point.p = ref.p_sensor;
      // Redescending loss: voxels straddling two surfaces (corners that pass
      // the planarity gate) must not drag the shared plane off the dominant
      // surface, so cross-surface points are downweighted instead of averaged.
      auto factor = make_lidar_plane_factor(
          b.traj, b.lidar_rot[ref.lidar], b.lidar_pos[ref.lidar], b.lidar_td[ref.lidar],
          plane_id, point, state.lidars[ref.lidar].range_sigma, Loss::cauchy(1.0),
          state.lidars[ref.lidar].extrinsics.time_offset);
      if (factor) problem.add_factor(std::move(factor));
    }
  }
}

// Visual reprojection factors for every track that already has a landmark
// estimate, with frames strided per camera to the configured cap. Tracks
// keep their landmark block only when at least two observations survive.
void add_camera_factors(Problem& problem, StageBlocks* b, const CalibrationState& state,
                        const SensorDataset& dataset, const PipelineOptions& options) {
  const int num_cams = static_cast<int>(state.cameras.size());
  if (num_cams == 0) return;

  std::vector<std::set<double>> frame_times(num_cams);
  for (const FeatureTrack& track : dataset.tracks) {
    if (!state.landmarks.count(track.id)) continue;
    for (const TrackObservation& obs : track.observations) {
      if (obs.camera >= 0 && obs.camera < num_cams) frame_times[obs.camera].insert(obs.t);
    }
  }
  std::vector<std::unordered_set<double>> allowed(num_cams);
  for (int c = 0; c < num_cams; ++c) {
    const std::vector<double> times(frame_times[c].begin(), frame_times[c].end());
    const int step = stride_for(times.size(), options.max_frames_per_camera);
    for (std::size_t k = 0; k < times.size(); k += step) allowed[c].insert(times[k]);
  }

  for (const FeatureTrack& track : dataset.tracks) {
    const auto lm = state.landmarks.find(track.id);
    if (lm == state.landmarks.end()) continue;

    std::vector<std::unique_ptr<Factor>> candidates;
    const int landmark_id =
        problem.add_euclidean_block(lm->second, "lm_" + std::to_string(track.id));
    problem.set_eliminable(landmark_id, true);
    for (const TrackObservation& obs : track.observations) {
      if (obs.camera < 0 || obs.camera >= num_cams) continue;
      if (!allowed[obs.camera].count(obs.t)) continue;
      const CameraCalibration& cam = state.cameras[obs.camera];
      auto factor = make_camera_factor(
          b->traj, b->cam_rot[obs.camera], b->cam_pos[obs.camera], b->cam_td[obs.camera],
          landmark_id, b->cam_intr[obs.camera], cam.intrinsics.model, cam.intrinsics.max_theta,
          obs.t, obs.uv, cam.pixel_sigma, Loss::huber(10.0), cam.extrinsics.time_offset);
      if (factor) candidates.push_back(std::move(factor));
    }
    if (candidates.size() < 2) {
      // under-constrained landmark: keep it out of the problem entirely
      problem.set_frozen(landmark_id, true);
      continue;
    }
    b->landmarks.emplace(track.id, landmark_id);
    for (auto& f : candidates) problem.add_factor(std::move(f));
  }
}

void add_crossmodal_factors(Problem& problem, const StageBlocks& b, const CalibrationState& state,
                            const std::vector<CrossModalMatch>& gated_world) {
  for (const CrossModalMatch& m : gated_world) {
    if (m.camera < 0 || m.camera >= static_cast<int>(state.cameras.size())) continue;
    const CameraCalibration& cam = state.cameras[m.camera];
    auto factor = make_lidar_camera_factor(
        b.traj, b.cam_rot[m.camera], b.cam_pos[m.camera], b.cam_td[m.camera],
        b.cam_intr[m.camera], cam.intrinsics.model, cam.intrinsics.max_theta, m.t, m.uv, m.point,
        cam.pixel_sigma, Loss::huber(10.0), cam.extrinsics.time_offset);
    if (factor) problem.add_factor(std::move(factor));
  }
}

void read_back(const Problem& problem, const StageBlocks& b, CalibrationState* state) {
  read_trajectory_blocks(problem, b.traj, &state->trajectory);
  for (std::size_t i = 0; i < state->lidars.size(); ++i) {
    SensorExtrinsics& ext = state->lidars[i].extrinsics;
    ext.T_imu_sensor.rotation = problem.block(b.lidar_rot[i]).as_rotation();
    ext.T_imu_sensor.translation = problem.block(b.lidar_pos[i]).value;
    ext.time_offset = problem.block(b.lidar_td[i]).value[0];
  }
  for (std::size_t i = 0; i < b.cam_rot.size(); ++i) {
    CameraCalibration& cam = state->cameras[i];
    cam.extrinsics.T_imu_sensor.rotation = problem.block(b.cam_rot[i]).as_rotation();
    cam.extrinsics.T_imu_sensor.translation = problem.block(b.cam_pos[i]).value;
    cam.extrinsics.time_offset = problem.block(b.cam_td[i]).value[0];
    cam.intrinsics.set_from_vector(IntrinsicsVec(problem.block(b.cam_intr[i]).value));
  }
  state->imu_bias.gyro = problem.block(b.bias_gyro).value;
  state->imu_bias.accel = problem.block(b.bias_accel).value;
  state->gravity = problem.block(b.gravity).value;
  state->imu_time_offset = problem.block(b.imu_td).value[0];
  for (const auto& [track_id, block_id] : b.landmarks) {
    state->landmarks[track_id] = problem.block(block_id).value;
  }
}

SolveSummary run_stage_solve(Problem& problem, const PipelineOptions& options,
                             const std::string& stage) {
  SolveSummary summary;
  try {
    summary = solve(problem, options.solver);
  } catch (const SolverError& e) {
    throw SolverError(stage + ": " + e.what());
  }
  if (!summary.converged()) throw SolverError(stage + ": " + summary.message);
  return summary;
}

std::string cost_line(const std::string& stage, int round, const SolveSummary& summary) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s round %d: cost %.6g -> %.6g in %d iterations",
                stage.c_str(), round, summary.initial_cost, summary.final_cost,
                summary.iterations);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Map plumbing

VoxelPlaneMap build_lidar_map(const CalibrationState& state, const SensorDataset& dataset,
                              const std::vector<int>& lidar_indices,
                              const PipelineOptions& options) {
  std::vector<int> indices = lidar_indices;
  if (indices.empty()) {
    for (int i = 0; i < static_cast<int>(dataset.lidars.size()); ++i) indices.push_back(i);
  }
  VoxelPlaneMap map(options.map);
  for (int li : indices) {
    if (li < 0 || li >= static_cast<int>(dataset.lidars.size()) ||
        li >= static_cast<int>(state.lidars.size())) {
      throw ValidationError("build_lidar_map: LiDAR index " + std::to_string(li) +
                            " out of range");
    }
    const LidarData& data = dataset.lidars[li];
    const SensorExtrinsics& ext = state.lidars[li].extrinsics;
    for (int si = 0; si < static_cast<int>(data.scans.size()); ++si) {
      const LidarScan& scan = data.scans[si];
      const std::vector<int> planar = extract_planar_points(scan.points, options.extraction);
      const int stride = stride_for(planar.size(), options.max_plane_factors_per_scan);
      for (std::size_t k = 0; k < planar.size(); k += stride) {
        const LidarPoint& pt = scan.points[planar[k]];
        const double t_ref = pt.t + ext.time_offset;
        if (!state.trajectory.contains(t_ref)) continue;
        MapPointRef ref;
        ref.lidar = li;
        ref.scan = si;
        ref.point = planar[k];
        ref.t = pt.t;
        ref.p_sensor = pt.p;
        ref.p_world = state.trajectory.pose(t_ref) * (ext.T_imu_sensor * pt.p);
        map.insert(ref);
      }
    }
  }
  map.build();
  return map;
}

double map_plane_rms(const VoxelPlaneMap& map) {
  double sq = 0.0;
  std::size_t n = 0;
  for (const MapVoxel* voxel : map.planar_voxels()) {
    const Vec3 normal = voxel->plane_normal();
    const double dist = voxel->plane_distance();
    for (const MapPointRef& ref : voxel->points) {
      const double d = normal.dot(ref.p_world) - dist;
      sq += d * d;
      ++n;
    }
  }
  return n == 0 ? 0.0 : std::sqrt(sq / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Refinement stages

void stage_refine_single_lidar(CalibrationState* state, const SensorDataset& dataset,
                               const std::string& lidar_id, const PipelineOptions& options,
                               SolveSummary* last_summary) {
  const std::string stage = "single-LiDAR refinement for '" + lidar_id + "'";
  const int li = dataset.config.lidar_index(lidar_id);
  if (li < 0 || li >= static_cast<int>(dataset.lidars.size()) ||
      state->lidar_index(lidar_id) != li) {
    throw ValidationError(stage + ": dataset has no LiDAR '" + lidar_id + "'");
  }

  for (int round = 0; round < options.lidar_refit_rounds; ++round) {
    const VoxelPlaneMap map = build_lidar_map(*state, dataset, {li}, options);
    if (map.planar_voxels().empty()) {
      throw DegeneracyError(stage + ": no planar structure in the LiDAR returns");
    }

    Problem problem;
    StageBlocks blocks = add_common_blocks(problem, *state, /*with_cameras=*/false);
    freeze_blocks(problem, {blocks.bias_gyro, blocks.bias_accel, blocks.gravity, blocks.imu_td});
    for (int j = 0; j < static_cast<int>(blocks.lidar_rot.size()); ++j) {
      if (j == li) continue;
      freeze_blocks(problem, {blocks.lidar_rot[j], blocks.lidar_pos[j]});
    }
    apply_planar_freeze(problem, *state, {blocks.lidar_pos[li]});

    add_imu_factors(problem, blocks, *state, dataset, options);
    add_plane_factors(problem, blocks, map, *state, /*freeze_planes=*/false);

    const SolveSummary summary = run_stage_solve(problem, options, stage);
    read_back(problem, blocks, state);
    log_line(options, cost_line(stage, round, summary));
    if (last_summary) *last_summary = summary;
  }
}

void stage_joint_refine(CalibrationState* state, const SensorDataset& dataset,
                        const PipelineOptions& options, SolveSummary* last_summary) {
  const std::string stage = "joint refinement";
  for (int round = 0; round < options.joint_refit_rounds; ++round) {
    const VoxelPlaneMap map = build_lidar_map(*state, dataset, {}, options);
    if (map.planar_voxels().empty()) {
      throw DegeneracyError(stage + ": no planar structure in the LiDAR returns");
    }

    Problem problem;
    StageBlocks blocks = add_common_blocks(problem, *state, /*with_cameras=*/true);
    freeze_blocks(problem, blocks.cam_intr);  // intrinsics wait for the final stage
    apply_planar_freeze(problem, *state, blocks.lidar_pos);
    apply_planar_freeze(problem, *state, blocks.cam_pos);

    add_imu_factors(problem, blocks, *state, dataset, options);
    add_plane_factors(problem, blocks, map, *state, /*freeze_planes=*/false);
    add_camera_factors(problem, &blocks, *state, dataset, options);

    const SolveSummary summary = run_stage_solve(problem, options, stage);
    read_back(problem, blocks, state);
    log_line(options, cost_line(stage, round, summary));
    if (last_summary) *last_summary = summary;
  }
  state->map = std::make_shared<VoxelPlaneMap>(build_lidar_map(*state, dataset, {}, options));
}

// ---------------------------------------------------------------------------
// Rendering and gating

RenderedView render_intensity_image(const CalibrationState& state, const SensorDataset& dataset,
                                    const std::string& camera_id, double t_frame,
                                    const PipelineOptions& options) {
  const int ci = state.camera_index(camera_id);
  if (ci < 0) throw ValidationError("render: unknown camera '" + camera_id + "'");
  const CameraCalibration& cam = state.cameras[ci];

  const double t_ref = t_frame + cam.extrinsics.time_offset;
  if (!state.trajectory.contains(t_ref)) {
    throw SpanError(t_ref, state.trajectory.grid().span_begin(),
                    state.trajectory.grid().span_end());
  }
  const RigidTransform T_cam_world =
      (state.trajectory.pose(t_ref) * cam.extrinsics.T_imu_sensor).inverse();

  std::shared_ptr<VoxelPlaneMap> map = state.map;
  if (!map) {
    map = std::make_shared<VoxelPlaneMap>(build_lidar_map(state, dataset, {}, options));
  }

  RenderedView view;
  view.image.width = cam.intrinsics.width;
  view.image.height = cam.intrinsics.height;
  view.image.pixels.assign(
      static_cast<std::size_t>(cam.intrinsics.width) * cam.intrinsics.height, 0);
  view.point_index.assign(view.image.pixels.size(), -1);
  std::vector<double> depth(view.image.pixels.size(), std::numeric_limits<double>::infinity());

  for (const MapVoxel* voxel : map->planar_voxels()) {
    for (const MapPointRef& ref : voxel->points) {
      const Vec3 p_cam = T_cam_world * ref.p_world;
      Vec2 uv = Vec2::Zero();
      if (!project_point(cam.intrinsics, p_cam, &uv)) continue;
      const int x = static_cast<int>(std::lround(uv.x()));
      const int y = static_cast<int>(std::lround(uv.y()));
      if (x < 0 || x >= view.image.width || y < 0 || y >= view.image.height) continue;
      const std::size_t pix = static_cast<std::size_t>(y) * view.image.width + x;
      const double range = p_cam.norm();
      if (range >= depth[pix]) continue;
      if (view.point_index[pix] < 0) ++view.covered_pixels;
      depth[pix] = range;
      view.points.push_back(ref);
      view.point_index[pix] = static_cast<int>(view.points.size()) - 1;
      const double intensity =
          dataset.lidars[ref.lidar].scans[ref.scan].points[ref.point].intensity;
      view.image.pixels[pix] =
          static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(intensity, 0.0, 1.0)));
    }
  }
  return view;
}

std::vector<double> select_render_frames(const CalibrationState& state,
                                         const SensorDataset& dataset, int camera_index,
                                         const PipelineOptions& options) {
  if (camera_index < 0 || camera_index >= static_cast<int>(state.cameras.size())) {
    throw ValidationError("select_render_frames: camera index out of range");
  }
  const CameraCalibration& cam = state.cameras[camera_index];
  std::set<double> times;
  for (const FeatureTrack& track : dataset.tracks) {
    for (const TrackObservation& obs : track.observations) {
      if (obs.camera == camera_index) times.insert(obs.t);
    }
  }

  std::vector<double> selected;
  bool have_last = false;
  RigidTransform last;
  for (double t : times) {
    const double t_ref = t + cam.extrinsics.time_offset;
    if (!state.trajectory.contains(t_ref)) continue;
    const RigidTransform pose = state.trajectory.pose(t_ref) * cam.extrinsics.T_imu_sensor;
    if (have_last) {
      const double moved = (pose.translation - last.translation).norm();
      const double turned = pose.rotation.angle_to(last.rotation);
      if (moved < options.render_min_translation &&
          turned < options.render_min_rotation_deg * kDeg) {
        continue;
      }
    }
    selected.push_back(t);
    last = pose;
    have_last = true;
  }
  return selected;
}

namespace {

struct PnpReprojFunctor {
  Vec3 point;
  Vec2 uv = Vec2::Zero();
  CameraModelType model;
  double max_theta;
  IntrinsicsVec intr;

  template <typename T>
  bool operator()(const T* const* params, T* residual) const {
    const Eigen::Quaternion<T> q(params[0][3], params[0][0], params[0][1], params[0][2]);
    Eigen::Matrix<T, 3, 1> t;
    Eigen::Matrix<T, 3, 1> p;
    for (int i = 0; i < 3; ++i) {
      t[i] = T(params[1][i]);
      p[i] = T(point[i]);
    }
    const Eigen::Matrix<T, 3, 1> p_cam = q.conjugate() * (p - t);
    Eigen::Matrix<T, 8, 1> K;
    for (int i = 0; i < 8; ++i) K[i] = T(intr[i]);
    Eigen::Matrix<T, 2, 1> proj;
    if (!project_point(model, K, max_theta, p_cam, &proj)) return false;
    residual[0] = proj[0] - T(uv[0]);
    residual[1] = proj[1] - T(uv[1]);
    return true;
  }
};

RigidTransform refine_pnp_pose(const std::vector<PnpMatch>& matches,
                               const std::vector<int>& subset, const CameraIntrinsics& intr,
                               const RigidTransform& seed, int max_iterations) {
  Problem problem;
  const int rot = problem.add_rotation_block(seed.rotation, "rot");
  const int pos = problem.add_euclidean_block(seed.translation, "pos");
  const IntrinsicsVec K = intr.as_vector();
  for (int i : subset) {
    PnpReprojFunctor f{matches[i].point, matches[i].uv, intr.model, intr.max_theta, K};
    problem.add_factor(std::make_unique<AutoDiffFactor<6, PnpReprojFunctor>>(
        "pnp", std::vector<int>{rot, pos}, 2, Loss::none(), std::move(f)));
  }
  SolveOptions opt;
  opt.max_iterations = max_iterations;
  opt.linear_solver = LinearSolverType::kDense;
  try {
    solve(problem, opt);
  } catch (const SolverError&) {
    return seed;  // degenerate sample; the consensus test will discard it
  }
  return RigidTransform(problem.block(rot).as_rotation(), Vec3(problem.block(pos).value));
}

std::vector<int> pnp_inliers(const std::vector<PnpMatch>& matches, const CameraIntrinsics& intr,
                             const RigidTransform& pose, double threshold_px) {
  std::vector<int> inliers;
  for (int i = 0; i < static_cast<int>(matches.size()); ++i) {
    const Vec3 p_cam = pose.rotation.inverse() * (matches[i].point - pose.translation);
    Vec2 uv = Vec2::Zero();
    if (!project_point(intr, p_cam, &uv)) continue;
    if ((uv - matches[i].uv).norm() < threshold_px) inliers.push_back(i);
  }
  return inliers;
}

}  // namespace

std::optional<PnpResult> gate_correspondences_pnp_ransac(const std::vector<PnpMatch>& matches,
                                                         const CameraIntrinsics& intr,
                                                         const RigidTransform& prior,
                                                         const PnpOptions& options) {
  const int n = static_cast<int>(matches.size());
  if (n < 6) return std::nullopt;

  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<int> pick(0, n - 1);

  std::vector<int> best;
  int max_rounds = options.max_iterations;
  int rounds = 0;
  for (; rounds < max_rounds; ++rounds) {
    std::vector<int> sample;
    while (static_cast<int>(sample.size()) < 4) {
      const int c = pick(rng);
      if (std::find(sample.begin(), sample.end(), c) == sample.end()) sample.push_back(c);
    }
    const RigidTransform pose = refine_pnp_pose(matches, sample, intr, prior, 15);
    std::vector<int> inliers = pnp_inliers(matches, intr, pose, options.inlier_threshold_px);
    if (inliers.size() > best.size()) {
      best = std::move(inliers);
      // confidence-based early exit on the inlier ratio seen so far
      const double w4 = std::clamp(std::pow(static_cast<double>(best.size()) / n, 4),
                                   1e-12, 1.0 - 1e-12);
      const int needed =
          static_cast<int>(std::ceil(std::log(1.0 - options.confidence) / std::log(1.0 - w4)));
      max_rounds = std::min(max_rounds, std::max(rounds + 1, needed));
    }
  }

  const auto acceptable = [&](std::size_t count) {
    return static_cast<int>(count) >= 6 &&
           static_cast<double>(count) >= options.min_inlier_ratio * n;
  };
  if (!acceptable(best.size())) return std::nullopt;

  PnpResult result;
  result.T_frame_camera = refine_pnp_pose(matches, best, intr, prior, 30);
  result.inliers = pnp_inliers(matches, intr, result.T_frame_camera,
                               options.inlier_threshold_px);
  result.iterations = rounds;
  if (!acceptable(result.inliers.size())) return std::nullopt;
  return result;
}

std::vector<CrossModalMatch> gate_dataset_correspondences(const CalibrationState& state,
                                                          const SensorDataset& dataset,
                                                          const PipelineOptions& options,
                                                          std::vector<std::string>* warnings) {
  std::map<std::pair<int, double>, std::vector<int>> frames;
  for (int i = 0; i < static_cast<int>(dataset.correspondences.size()); ++i) {
    const CrossModalMatch& m = dataset.correspondences[i];
    frames[{m.camera, m.t}].push_back(i);
  }

  const auto warn = [&](const std::string& text) {
    if (warnings) warnings->push_back(text);
    log_line(options, "warning: " + text);
  };

  std::vector<CrossModalMatch> gated;
  for (const auto& [key, indices] : frames) {
    const auto [ci, t] = key;
    if (ci < 0 || ci >= static_cast<int>(state.cameras.size())) {
      warn("correspondences reference camera index " + std::to_string(ci) + "; skipped");
      continue;
    }
    const CameraCalibration& cam = state.cameras[ci];
    const double t_ref = t + cam.extrinsics.time_offset;
    if (!state.trajectory.contains(t_ref)) {
      warn("correspondence frame for '" + cam.id + "' at t=" + std::to_string(t) +
           " outside the trajectory; skipped");
      continue;
    }

    std::vector<PnpMatch> matches;
    matches.reserve(indices.size());
    for (int i : indices) {
      matches.push_back(
          PnpMatch{dataset.correspondences[i].uv,
                   state.T_world_odom * dataset.correspondences[i].point});
    }
    const RigidTransform prior =
        state.trajectory.pose(t_ref) * cam.extrinsics.T_imu_sensor;
    const std::optional<PnpResult> result =
        gate_correspondences_pnp_ransac(matches, cam.intrinsics, prior, options.pnp);
    if (!result) {
      warn("PnP gating failed for '" + cam.id + "' at t=" + std::to_string(t) +
           " (" + std::to_string(indices.size()) + " matches)");
      continue;
    }
    for (int k : result->inliers) {
      CrossModalMatch m = dataset.correspondences[indices[k]];
      m.point = matches[k].point;  // world frame from here on
      gated.push_back(m);
    }
  }
  return gated;
}

// ---------------------------------------------------------------------------
// Final polish + reporting

CalibrationReport make_report(const CalibrationState& state) {
  CalibrationReport report;
  report.lidars = state.lidars;
  report.cameras = state.cameras;
  report.imu_bias = state.imu_bias;
  report.imu_time_offset = state.imu_time_offset;
  report.gravity = state.gravity;
  report.observability_notes = state.observability_notes;
  return report;
}

CalibrationReport stage_joint_intrinsic_extrinsic(CalibrationState* state,
                                                  const SensorDataset& dataset,
                                                  const std::vector<CrossModalMatch>& gated_world,
                                                  const PipelineOptions& options) {
  const std::string stage = "final intrinsic/extrinsic refinement";
  if (gated_world.empty()) {
    SolveSummary summary;
    stage_joint_refine(state, dataset, options, &summary);
    CalibrationReport report = make_report(*state);
    for (const auto& [name, stats] : summary.factor_stats) {
      report.residual_stats.push_back({name, stats.count, stats.dropped, stats.rms});
    }
    report.warnings.push_back(
        "no gated cross-modal matches; intrinsics kept at their prior values");
    log_line(options, stage + ": no gated matches, fell back to joint refinement");
    return report;
  }

  std::shared_ptr<VoxelPlaneMap> map = state->map;
  if (!map) {
    map = std::make_shared<VoxelPlaneMap>(build_lidar_map(*state, dataset, {}, options));
  }
  if (map->planar_voxels().empty()) {
    throw DegeneracyError(stage + ": no planar structure in the LiDAR returns");
  }

  Problem problem;
  StageBlocks blocks = add_common_blocks(problem, *state, /*with_cameras=*/true);
  // the LiDAR map is considered optimal here: its extrinsics and the planes
  // stay put, as do the inertial parameters
  freeze_blocks(problem, blocks.lidar_rot);
  freeze_blocks(problem, blocks.lidar_pos);
  freeze_blocks(problem, {blocks.bias_gyro, blocks.bias_accel, blocks.gravity, blocks.imu_td});
  apply_planar_freeze(problem, *state, blocks.cam_pos);

  add_imu_factors(problem, blocks, *state, dataset, options);
  add_plane_factors(problem, blocks, *map, *state, /*freeze_planes=*/true);
  add_camera_factors(problem, &blocks, *state, dataset, options);
  add_crossmodal_factors(problem, blocks, *state, gated_world);

  const SolveSummary summary = run_stage_solve(problem, options, stage);
  read_back(problem, blocks, state);
  state->map = map;
  log_line(options, cost_line(stage, 0, summary));

  CalibrationReport report = make_report(*state);
  for (const auto& [name, stats] : summary.factor_stats) {
    report.residual_stats.push_back({name, stats.count, stats.dropped, stats.rms});
  }
  return report;
}

std::pair<CalibrationState, CalibrationReport> calibrate(const SensorDataset& dataset,
                                                         const PipelineOptions& options) {
  dataset.validate();
  CalibrationState state = state_from_config(dataset.config);

  // --- trajectory bootstrap off the base LiDAR -----------------------------
  log_line(options, "stage: trajectory bootstrap");
  InitOptions init_options;
  init_options.knot_interval = dataset.config.knot_interval;
  init_options.gyro_sigma = dataset.config.imu.gyro_sigma;
  init_options.accel_sigma = dataset.config.imu.accel_sigma;
  init_options.imu_time_offset_hint = dataset.config.imu.time_offset;
  init_options.extrinsic_prior = state.lidars[0].extrinsics.T_imu_sensor;
  init_options.log = options.log;
  const TrajectoryInitResult init =
      init_trajectory(dataset.lidars[0].odometry, dataset.imu, init_options);
  state.trajectory = init.trajectory;
  state.lidars[0].extrinsics.T_imu_sensor = init.T_imu_lidar;
  state.gravity = init.gravity;
  state.T_world_odom = init.T_world_odom;
  state.planar_motion = init.report.single_axis_rotation;
  if (state.planar_motion) {
    Vec3 axis = state.lidars[0].extrinsics.T_imu_sensor.rotation *
                init.report.dominant_rotation_axis;
    if (axis.z() < 0.0) axis = -axis;
    state.motion_axis = axis.normalized();
    state.observability_notes.push_back(
        "rotation excitation confined to a single axis; sensor lever z components "
        "pinned to their configured values");
    for (const LidarCalibration& l : state.lidars) {
      state.frozen_translation.push_back({l.id, 2, l.extrinsics.T_imu_sensor.translation.z()});
    }
    for (const CameraCalibration& c : state.cameras) {
      state.frozen_translation.push_back({c.id, 2, c.extrinsics.T_imu_sensor.translation.z()});
    }
  }

  // --- hand-eye seeding of the remaining LiDARs -----------------------------
  for (std::size_t j = 1; j < state.lidars.size(); ++j) {
    log_line(options, "stage: hand-eye seeding for '" + state.lidars[j].id + "'");
    const HandEyeProblem problem =
        build_hand_eye_problem(state.trajectory, dataset.lidars[j].odometry);
    const HandEyeResult result =
        hand_eye(problem, state.lidars[j].extrinsics.T_imu_sensor);
    state.lidars[j].extrinsics.T_imu_sensor = result.X;
    if (!result.report.frozen_translation_directions.empty() && !state.planar_motion) {
      state.observability_notes.push_back("hand-eye for '" + state.lidars[j].id +
                                          "' left translation directions at the prior");
    }
  }

  // --- refinement stages ------------------------------------------------------
  for (const LidarCalibration& l : state.lidars) {
    log_line(options, "stage: single-LiDAR refinement for '" + l.id + "'");
    stage_refine_single_lidar(&state, dataset, l.id, options);
  }

  // Visual bootstrap runs against the LiDAR-refined trajectory so that the
  // triangulated landmarks enter the joint stage consistently.
  if (!state.cameras.empty() && !dataset.tracks.empty()) {
    log_line(options, "stage: visual bootstrap");
    InitVisualOptions visual_options;
    visual_options.max_frames_per_camera = options.max_frames_per_camera;
    visual_options.log = options.log;
    const InitVisualResult visual =
        init_visual(dataset.tracks, state.trajectory, state.cameras, visual_options);
    state.cameras = visual.cameras;
    state.landmarks = visual.landmarks;
  }

  log_line(options, "stage: joint refinement");
  stage_joint_refine(&state, dataset, options);

  std::vector<std::string> warnings;
  std::vector<CrossModalMatch> gated;
  if (dataset.has_correspondences) {
    log_line(options, "stage: cross-modal gating");
    gated = gate_dataset_correspondences(state, dataset, options, &warnings);
    log_line(options, "gating kept " + std::to_string(gated.size()) + " of " +
                          std::to_string(dataset.correspondences.size()) + " matches");
  }
  log_line(options, "stage: final intrinsic/extrinsic refinement");
  CalibrationReport report = stage_joint_intrinsic_extrinsic(&state, dataset, gated, options);
  report.warnings.insert(report.warnings.end(), warnings.begin(), warnings.end());

  // --- map quality metrics -----------------------------------------------------
  if (options.compute_metrics && state.map) {
    report.metrics.emplace_back("map_plane_rms_m", map_plane_rms(*state.map));
    std::vector<std::vector<Vec3>> clouds(state.lidars.size());
    for (const MapVoxel* voxel : state.map->planar_voxels()) {
      for (const MapPointRef& ref : voxel->points) clouds[ref.lidar].push_back(ref.p_world);
    }
    std::vector<Vec3> merged;
    for (const auto& c : clouds) merged.insert(merged.end(), c.begin(), c.end());
    if (merged.size() >= 100) {
      try {
        const MmeResult mme = mean_map_entropy(merged, options.metrics.mme_radius);
        report.metrics.emplace_back("mean_map_entropy_nats", mme.entropy);
      } catch (const ValidationError&) {
        report.warnings.push_back("map too sparse for the entropy metric");
      }
    }
    if (clouds.size() >= 2 && !clouds[0].empty() && !clouds[1].empty()) {
      try {
        const double t =
            thickness_cm(clouds[0], clouds[1], options.metrics.thickness_patch);
        report.metrics.emplace_back(
            "thickness_cm_" + state.lidars[0].id + "_" + state.lidars[1].id, t);
      } catch (const ValidationError&) {
        report.warnings.push_back("LiDAR clouds share no planar patches; thickness skipped");
      }
    }
  }

  return {std::move(state), std::move(report)};
}

}  // namespace rigcal
