#include <doctest.h>

#include <rigcal/pipeline.hpp>
#include <rigcal/simulator.hpp>

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

using namespace rigcal;

TEST_SUITE_BEGIN("pipeline");

namespace {

constexpr double kDeg = M_PI / 180.0;

double rot_err(const RigidTransform& a, const RigidTransform& b) {
  return a.rotation.angle_to(b.rotation);
}

double trans_err(const RigidTransform& a, const RigidTransform& b) {
  return (a.translation - b.translation).norm();
}

/// Stage options trimmed for test runtime: fewer rounds/iterations and capped
/// factor counts. With noise-free inputs that loses no accuracy.
PipelineOptions fast_options() {
  PipelineOptions opt;
  opt.lidar_refit_rounds = 2;
  opt.joint_refit_rounds = 2;
  opt.max_imu_factors = 800;
  opt.max_plane_factors_per_scan = 25;
  opt.max_frames_per_camera = 15;
  opt.solver.max_iterations = 40;
  return opt;
}

RigSpec small_rig() {
  RigSpec rig = default_rig();
  for (SimLidar& l : rig.lidars) {
    l.rate_hz = 5.0;
    l.scan_rows = 8;
    l.scan_cols = 64;
  }
  for (SimCamera& c : rig.cameras) c.rate_hz = 10.0;
  rig.imu.rate_hz = 100.0;
  rig.num_landmarks = 180;
  rig.min_visible_landmarks = 30;
  rig.correspondence_frame_stride = 4;
  rig.correspondences_per_frame = 30;
  return rig;
}

/// Short but strongly excited motion: the default amplitudes are tuned for
/// minute-long sessions and rotate far too little in eight seconds to
/// condition lever arms and clock offsets.
MotionSpec stage_motion() {
  MotionSpec m;
  m.family = MotionFamily::kFullExcitation;
  m.duration = 8.0;
  m.x_amplitude = 1.2;
  m.y_amplitude = 0.8;
  m.figure_frequency = 0.15;
  m.z_amplitude = 0.25;
  m.z_frequency = 0.45;
  m.yaw_rate = 0.3;
  m.yaw_amplitude = 0.7;
  m.yaw_frequency = 0.3;
  m.roll_amplitude = 0.35;
  m.roll_frequency = 0.6;
  m.pitch_amplitude = 0.3;
  m.pitch_frequency = 0.5;
  m.exact_spline_knot = 0.1;  // motion representable exactly by the trajectory
  return m;
}

const SimulationResult& stage_sim() {
  static const SimulationResult sim = generate(small_rig(), stage_motion(), 11);
  return sim;
}

// ---------------------------------------------------------------------------
// A static crafted scene: identity constant trajectory, one LiDAR and one
// pinhole camera at identity extrinsics, and two fronto-parallel walls. Wall B
// sits at twice the distance of wall A, and a subset of its points lies on
// exactly the same camera rays as wall-A points, so occlusion handling is
// fully predictable.

struct StaticScene {
  SensorDataset dataset;
  CalibrationState state;
  std::vector<Vec3> wall_a;  // world points of the near wall
};

StaticScene make_static_scene() {
  StaticScene s;
  s.dataset.config.lidars.resize(1);
  s.dataset.config.cameras.resize(1);
  s.state = state_from_config(s.dataset.config);

  std::vector<Vec3> pos_cps(6, Vec3::Zero());
  std::vector<Rotation> rot_cps(6, Rotation());
  s.state.trajectory.position = PositionSpline(-1.0, 1.0, pos_cps);
  s.state.trajectory.rotation = RotationSpline(-1.0, 1.0, rot_cps);

  LidarScan scan;
  scan.t = 0.0;
  for (int ix = -7; ix <= 7; ++ix) {
    for (int iy = -6; iy <= 6; ++iy) {
      LidarPoint p;
      p.p = Vec3(0.2 * ix, 0.2 * iy, 3.0);
      p.intensity = 1.0;
      scan.points.push_back(p);
      s.wall_a.push_back(p.p);
    }
  }
  for (int ix = -12; ix <= 12; ++ix) {
    for (int iy = -9; iy <= 9; ++iy) {
      LidarPoint p;
      p.p = Vec3(0.3 * ix, 0.3 * iy, 6.0);
      p.intensity = 0.0;
      scan.points.push_back(p);
    }
  }

  LidarData data;
  data.id = s.dataset.config.lidars[0].id;
  data.scans.push_back(std::move(scan));
  s.dataset.lidars.push_back(std::move(data));
  return s;
}

/// Map/extraction options suited to the crafted walls: keep every point.
PipelineOptions static_scene_options() {
  PipelineOptions opt;
  opt.extraction.search_radius = 1.0;
  opt.max_plane_factors_per_scan = 0;  // no cap
  return opt;
}

}  // namespace

// ---------------------------------------------------------------------------
// PnP gating

TEST_CASE("pnp gating keeps exactly the consistent matches") {
  CameraIntrinsics intr;
  const RigidTransform pose(Rotation::exp(Vec3(0.2, -0.3, 0.1)), Vec3(0.5, -0.2, 0.3));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lateral(-1.5, 1.5);
  std::uniform_real_distribution<double> depth(2.0, 8.0);
  std::vector<PnpMatch> matches;
  for (int i = 0; i < 100; ++i) {
    const Vec3 p_cam(lateral(rng), lateral(rng), depth(rng));
    PnpMatch m;
    m.point = pose * p_cam;
    REQUIRE(project_point(intr, p_cam, &m.uv));
    matches.push_back(m);
  }
  for (int i = 0; i < 20; ++i) {
    const Vec3 p_cam(lateral(rng), lateral(rng), depth(rng));
    PnpMatch m;
    m.point = pose * p_cam;
    REQUIRE(project_point(intr, p_cam, &m.uv));
    m.uv += Vec2(60.0 + 10.0 * i, -45.0);  // gross outlier
    matches.push_back(m);
  }

  const RigidTransform prior(pose.rotation * Rotation::exp(Vec3(0.02, -0.025, 0.015)),
                             pose.translation + Vec3(0.03, -0.02, 0.025));
  const std::optional<PnpResult> res = gate_correspondences_pnp_ransac(matches, intr, prior);
  REQUIRE(res.has_value());
  REQUIRE(res->inliers.size() == 100);
  for (int i = 0; i < 100; ++i) CHECK(res->inliers[i] == i);
  CHECK(rot_err(res->T_frame_camera, pose) < 1e-5);
  CHECK(trans_err(res->T_frame_camera, pose) < 1e-5);
  CHECK(res->iterations < 100);  // confidence-based early exit

  // deterministic in the seed
  const std::optional<PnpResult> res2 = gate_correspondences_pnp_ransac(matches, intr, prior);
  REQUIRE(res2.has_value());
  CHECK(res2->inliers == res->inliers);
  CHECK(rot_err(res2->T_frame_camera, res->T_frame_camera) == 0.0);
}

TEST_CASE("pnp gating refuses unusable inputs") {
  CameraIntrinsics intr;
  const RigidTransform pose;

  // all-outlier frame: random pixels unrelated to the points
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> ux(0.0, 640.0), uy(0.0, 480.0);
  std::uniform_real_distribution<double> lateral(-1.5, 1.5), depth(2.0, 8.0);
  std::vector<PnpMatch> garbage;
  for (int i = 0; i < 30; ++i) {
    PnpMatch m;
    m.point = Vec3(lateral(rng), lateral(rng), depth(rng));
    m.uv = Vec2(ux(rng), uy(rng));
    garbage.push_back(m);
  }
  CHECK_FALSE(gate_correspondences_pnp_ransac(garbage, intr, pose).has_value());

  // too few matches even when perfect
  std::vector<PnpMatch> few;
  for (int i = 0; i < 5; ++i) {
    const Vec3 p_cam(0.3 * i - 0.6, 0.2, 3.0 + 0.5 * i);
    PnpMatch m;
    m.point = p_cam;
    REQUIRE(project_point(intr, p_cam, &m.uv));
    few.push_back(m);
  }
  CHECK_FALSE(gate_correspondences_pnp_ransac(few, intr, pose).has_value());
}

// ---------------------------------------------------------------------------
// Map construction + rendering on the crafted static scene

TEST_CASE("lidar map keeps original point indices and both walls") {
  const StaticScene s = make_static_scene();
  const PipelineOptions opt = static_scene_options();
  VoxelPlaneMap map = build_lidar_map(s.state, s.dataset, {}, opt);

  const std::vector<LidarPoint>& pts = s.dataset.lidars[0].scans[0].points;
  size_t seen = 0;
  for (const MapVoxel* voxel : map.planar_voxels()) {
    for (const MapPointRef& ref : voxel->points) {
      ++seen;
      REQUIRE(ref.lidar == 0);
      REQUIRE(ref.scan == 0);
      REQUIRE(ref.point >= 0);
      REQUIRE(ref.point < static_cast<int>(pts.size()));
      CHECK(pts[ref.point].p == ref.p_sensor);
      CHECK(ref.p_world == ref.p_sensor);  // identity pose and extrinsics
    }
  }
  // every crafted point is locally planar and every voxel is a plane
  CHECK(seen == pts.size());
  CHECK(map_plane_rms(map) < 1e-12);

  CHECK_THROWS_AS(build_lidar_map(s.state, s.dataset, {1}, opt), ValidationError);
}

TEST_CASE("rendering z-buffers the walls and reprojects exactly") {
  StaticScene s = make_static_scene();
  const PipelineOptions opt = static_scene_options();
  s.state.map = std::make_shared<VoxelPlaneMap>(build_lidar_map(s.state, s.dataset, {}, opt));

  const RenderedView view = render_intensity_image(s.state, s.dataset, "cam0", 0.5, opt);
  REQUIRE(view.image.width == 640);
  REQUIRE(view.image.height == 480);

  int covered = 0;
  for (size_t i = 0; i < view.point_index.size(); ++i) {
    if (view.point_index[i] >= 0) ++covered;
  }
  CHECK(covered == view.covered_pixels);
  // 195 near-wall + 475 far-wall points, 25 of which share near-wall rays
  CHECK(view.covered_pixels == 195 + 475 - 25);

  const CameraIntrinsics& intr = s.state.cameras[0].intrinsics;
  for (int y = 0; y < view.image.height; ++y) {
    for (int x = 0; x < view.image.width; ++x) {
      const int idx = view.point_index[static_cast<size_t>(y) * view.image.width + x];
      if (idx < 0) continue;
      const MapPointRef& ref = view.points[idx];
      Vec2 uv = Vec2::Zero();
      REQUIRE(project_point(intr, ref.p_world, &uv));  // camera at the origin
      CHECK(std::lround(uv.x()) == x);
      CHECK(std::lround(uv.y()) == y);
    }
  }

  // the 25 shared rays must resolve to the near wall at full intensity
  for (int i = -2; i <= 2; ++i) {
    for (int j = -2; j <= 2; ++j) {
      const int x = 320 + 80 * i;
      const int y = 240 + 80 * j;
      const int idx = view.point_index[static_cast<size_t>(y) * 640 + x];
      REQUIRE(idx >= 0);
      CHECK(view.points[idx].p_world.z() == 3.0);
      CHECK(view.image.at(x, y) == 255);
    }
  }
  // a far-wall-only pixel renders the far wall at zero intensity
  const int far_idx = view.point_index[static_cast<size_t>(240) * 640 + 560];
  REQUIRE(far_idx >= 0);
  CHECK(view.points[far_idx].p_world.z() == 6.0);
  CHECK(view.image.at(560, 240) == 0);

  CHECK_THROWS_AS(render_intensity_image(s.state, s.dataset, "cam0", 50.0, opt), SpanError);
  CHECK_THROWS_AS(render_intensity_image(s.state, s.dataset, "nope", 0.5, opt),
                  ValidationError);
}

TEST_CASE("dataset correspondence gating lifts inliers to the world frame") {
  StaticScene s = make_static_scene();
  const PipelineOptions opt = static_scene_options();
  const CameraIntrinsics& intr = s.state.cameras[0].intrinsics;

  for (int i = 0; i < 36; ++i) {
    CrossModalMatch m;
    m.camera = 0;
    m.t = 0.5;
    m.point = s.wall_a[static_cast<size_t>(i) * 5];
    REQUIRE(project_point(intr, m.point, &m.uv));
    if (i >= 30) m.uv.x() += 75.0;  // outliers
    s.dataset.correspondences.push_back(m);
  }
  for (int i = 0; i < 8; ++i) {
    CrossModalMatch m;
    m.camera = 0;
    m.t = 77.0;  // outside the trajectory span
    m.point = s.wall_a[static_cast<size_t>(i)];
    REQUIRE(project_point(intr, m.point, &m.uv));
    s.dataset.correspondences.push_back(m);
  }
  s.dataset.has_correspondences = true;

  std::vector<std::string> warnings;
  const std::vector<CrossModalMatch> gated =
      gate_dataset_correspondences(s.state, s.dataset, opt, &warnings);
  CHECK(gated.size() == 30);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("outside") != std::string::npos);
  for (const CrossModalMatch& m : gated) {
    Vec2 uv = Vec2::Zero();
    REQUIRE(project_point(intr, m.point, &uv));  // world == odometry frame here
    CHECK((uv - m.uv).norm() < 1e-9);            // only the exact matches survive
  }
}

TEST_CASE("render frame selection is parallax driven") {
  StaticScene s = make_static_scene();
  // constant-velocity trajectory: 0.6 m/s along +x
  std::vector<Vec3> pos_cps;
  for (int i = 0; i < 10; ++i) pos_cps.push_back(Vec3(0.3 * i, 0.0, 0.0));
  s.state.trajectory.position = PositionSpline(-1.0, 0.5, pos_cps);
  s.state.trajectory.rotation = RotationSpline(-1.0, 0.5, std::vector<Rotation>(10, Rotation()));

  FeatureTrack track;
  track.id = 0;
  for (int k = 0; k < 10; ++k) {
    TrackObservation obs;
    obs.camera = 0;
    obs.t = 0.25 * k;
    track.observations.push_back(obs);
  }
  TrackObservation outside;
  outside.camera = 0;
  outside.t = -5.0;
  track.observations.push_back(outside);
  s.dataset.tracks.push_back(track);

  const std::vector<double> frames = select_render_frames(s.state, s.dataset, 0, {});
  CHECK(frames == std::vector<double>{0.0, 1.0, 2.0});

  CHECK_THROWS_AS(select_render_frames(s.state, s.dataset, 1, {}), ValidationError);
}

// ---------------------------------------------------------------------------
// Refinement stages on simulated data

TEST_CASE("single-lidar refinement pulls a perturbed extrinsic back") {
  const SimulationResult& sim = stage_sim();
  const PipelineOptions opt = fast_options();

  CalibrationState state = perturb(sim.truth, 0.5, 1.0, 0.0, 0.0, 31);
  const CalibrationState before = state;
  const double rms0 = map_plane_rms(build_lidar_map(state, sim.dataset, {0}, opt));
  REQUIRE(rms0 > 3e-3);  // the perturbation visibly layers the map

  stage_refine_single_lidar(&state, sim.dataset, "lidar0", opt);

  const double rms1 = map_plane_rms(build_lidar_map(state, sim.dataset, {0}, opt));
  CHECK(rms1 * 5.0 < rms0);
  CHECK(rot_err(state.lidars[0].extrinsics.T_imu_sensor,
                sim.truth.lidars[0].extrinsics.T_imu_sensor) < 1e-5);
  CHECK(trans_err(state.lidars[0].extrinsics.T_imu_sensor,
                  sim.truth.lidars[0].extrinsics.T_imu_sensor) < 1e-4);

  // everything not belonging to this stage stayed frozen
  CHECK(rot_err(state.lidars[1].extrinsics.T_imu_sensor,
                before.lidars[1].extrinsics.T_imu_sensor) == 0.0);
  CHECK(state.lidars[1].extrinsics.T_imu_sensor.translation ==
        before.lidars[1].extrinsics.T_imu_sensor.translation);
  CHECK(state.imu_bias.gyro == before.imu_bias.gyro);
  CHECK(state.imu_bias.accel == before.imu_bias.accel);
  CHECK(state.gravity == before.gravity);
  CHECK(state.imu_time_offset == before.imu_time_offset);
  CHECK(state.lidars[0].extrinsics.time_offset == 0.0);

  CHECK_THROWS_AS(stage_refine_single_lidar(&state, sim.dataset, "lidarX", opt),
                  ValidationError);
}

TEST_CASE("single-lidar refinement is idempotent at the truth") {
  const SimulationResult& sim = stage_sim();
  const PipelineOptions opt = fast_options();
  CalibrationState state = sim.truth;
  stage_refine_single_lidar(&state, sim.dataset, "lidar0", opt);
  CHECK(rot_err(state.lidars[0].extrinsics.T_imu_sensor,
                sim.truth.lidars[0].extrinsics.T_imu_sensor) < 1e-7);
  CHECK(trans_err(state.lidars[0].extrinsics.T_imu_sensor,
                  sim.truth.lidars[0].extrinsics.T_imu_sensor) < 1e-6);
}

TEST_CASE("joint refinement recovers extrinsics and clock offsets") {
  const SimulationResult& sim = stage_sim();
  const PipelineOptions opt = fast_options();

  CalibrationState state = perturb(sim.truth, 0.5, 1.0, 3.0, 0.0, 32);
  REQUIRE(std::abs(state.imu_time_offset - sim.truth.imu_time_offset) > 2e-3);

  stage_joint_refine(&state, sim.dataset, opt);

  for (size_t i = 0; i < state.lidars.size(); ++i) {
    CHECK(rot_err(state.lidars[i].extrinsics.T_imu_sensor,
                  sim.truth.lidars[i].extrinsics.T_imu_sensor) < 1e-4);
    CHECK(trans_err(state.lidars[i].extrinsics.T_imu_sensor,
                    sim.truth.lidars[i].extrinsics.T_imu_sensor) < 2e-4);
    CHECK(state.lidars[i].extrinsics.time_offset == 0.0);  // never estimated
  }
  for (size_t i = 0; i < state.cameras.size(); ++i) {
    CHECK(rot_err(state.cameras[i].extrinsics.T_imu_sensor,
                  sim.truth.cameras[i].extrinsics.T_imu_sensor) < 1e-4);
    CHECK(trans_err(state.cameras[i].extrinsics.T_imu_sensor,
                    sim.truth.cameras[i].extrinsics.T_imu_sensor) < 1e-3);
    CHECK(std::abs(state.cameras[i].extrinsics.time_offset -
                   sim.truth.cameras[i].extrinsics.time_offset) < 1e-4);
    // intrinsics are frozen in this stage
    CHECK(state.cameras[i].intrinsics.as_vector() ==
          sim.truth.cameras[i].intrinsics.as_vector());
  }
  CHECK(std::abs(state.imu_time_offset - sim.truth.imu_time_offset) < 1e-4);

  REQUIRE(state.map != nullptr);
  REQUIRE_FALSE(state.map->planar_voxels().empty());
  // The unweighted map RMS keeps a few-millimetre floor from corner voxels
  // that straddle two surfaces; the robust loss keeps them from biasing the
  // estimates, but they still count toward this diagnostic.
  CHECK(map_plane_rms(*state.map) < 1e-2);
}

TEST_CASE("final stage refines intrinsics against gated matches") {
  const SimulationResult& sim = stage_sim();
  const PipelineOptions opt = fast_options();

  CalibrationState state = sim.truth;
  for (CameraCalibration& cam : state.cameras) {
    cam.intrinsics.fx *= 1.02;
    cam.intrinsics.fy *= 1.02;
  }

  std::vector<std::string> warnings;
  const std::vector<CrossModalMatch> gated =
      gate_dataset_correspondences(state, sim.dataset, opt, &warnings);
  REQUIRE(gated.size() > 100);

  const CalibrationReport report = stage_joint_intrinsic_extrinsic(&state, sim.dataset, gated, opt);

  for (size_t i = 0; i < state.cameras.size(); ++i) {
    const CameraIntrinsics& got = state.cameras[i].intrinsics;
    const CameraIntrinsics& want = sim.truth.cameras[i].intrinsics;
    CHECK(std::abs(got.fx - want.fx) < 1e-3 * want.fx);
    CHECK(std::abs(got.fy - want.fy) < 1e-3 * want.fy);
  }
  // LiDAR geometry is pinned in this stage
  for (size_t i = 0; i < state.lidars.size(); ++i) {
    CHECK(rot_err(state.lidars[i].extrinsics.T_imu_sensor,
                  sim.truth.lidars[i].extrinsics.T_imu_sensor) == 0.0);
    CHECK(state.lidars[i].extrinsics.T_imu_sensor.translation ==
          sim.truth.lidars[i].extrinsics.T_imu_sensor.translation);
  }

  std::vector<std::string> classes;
  for (const FactorClassReport& r : report.residual_stats) {
    if (r.count > 0) classes.push_back(r.name);
  }
  for (const char* want : {"imu", "lidar_plane", "camera", "lidar_camera"}) {
    CAPTURE(want);
    CHECK(std::find(classes.begin(), classes.end(), want) != classes.end());
  }
}

TEST_CASE("final stage without gated matches falls back and warns") {
  const SimulationResult& sim = stage_sim();
  const PipelineOptions opt = fast_options();
  CalibrationState state = sim.truth;
  const CalibrationReport report = stage_joint_intrinsic_extrinsic(&state, sim.dataset, {}, opt);
  REQUIRE_FALSE(report.warnings.empty());
  CHECK(report.warnings[0].find("no gated cross-modal matches") != std::string::npos);
  REQUIRE_FALSE(report.residual_stats.empty());
  bool has_imu = false;
  for (const FactorClassReport& r : report.residual_stats) has_imu |= r.name == "imu";
  CHECK(has_imu);
  // intrinsics still at their input values
  CHECK(state.cameras[0].intrinsics.as_vector() == sim.truth.cameras[0].intrinsics.as_vector());
}

// ---------------------------------------------------------------------------
// End-to-end calibration

TEST_CASE("calibrate recovers a perturbed rig on clean data") {
  const SimulationResult& sim = stage_sim();
  SensorDataset dataset = sim.dataset;
  write_state_to_config(perturb(sim.truth, 2.0, 2.0, 2.0, 1.0, 33), &dataset.config);
  dataset.config.knot_interval = 0.1;

  const PipelineOptions opt = fast_options();
  const auto [state, report] = calibrate(dataset, opt);

  for (size_t i = 0; i < state.lidars.size(); ++i) {
    CHECK(rot_err(state.lidars[i].extrinsics.T_imu_sensor,
                  sim.truth.lidars[i].extrinsics.T_imu_sensor) < 2e-4);
    CHECK(trans_err(state.lidars[i].extrinsics.T_imu_sensor,
                    sim.truth.lidars[i].extrinsics.T_imu_sensor) < 1e-3);
    CHECK(state.lidars[i].extrinsics.time_offset == 0.0);
  }
  for (size_t i = 0; i < state.cameras.size(); ++i) {
    CHECK(rot_err(state.cameras[i].extrinsics.T_imu_sensor,
                  sim.truth.cameras[i].extrinsics.T_imu_sensor) < 5e-4);
    CHECK(trans_err(state.cameras[i].extrinsics.T_imu_sensor,
                    sim.truth.cameras[i].extrinsics.T_imu_sensor) < 2e-3);
    CHECK(std::abs(state.cameras[i].extrinsics.time_offset -
                   sim.truth.cameras[i].extrinsics.time_offset) < 1e-4);
    CHECK(std::abs(state.cameras[i].intrinsics.fx - sim.truth.cameras[i].intrinsics.fx) <
          1e-3 * sim.truth.cameras[i].intrinsics.fx);
  }
  CHECK(std::abs(state.imu_time_offset - sim.truth.imu_time_offset) < 1e-4);
  CHECK(std::abs(state.gravity.norm() - kGravityMagnitude) < 1e-9);
  CHECK(std::acos(std::clamp(-state.gravity.z() / state.gravity.norm(), -1.0, 1.0)) <
        1e-3);  // world stays gravity aligned

  // report contents
  CHECK(report.residual_stats.size() >= 4);
  bool has_rms = false;
  bool has_entropy = false;
  bool has_thickness = false;
  for (const auto& [name, value] : report.metrics) {
    if (name == "map_plane_rms_m") {
      has_rms = true;
      CHECK(value < 5e-3);
    }
    if (name == "mean_map_entropy_nats") has_entropy = true;
    if (name.rfind("thickness_cm_", 0) == 0) {
      has_thickness = true;
      CHECK(value < 0.5);
    }
  }
  CHECK(has_rms);
  CHECK(has_entropy);
  CHECK(has_thickness);
  CHECK(report.warnings.empty());
  CHECK(kDeg > 0.0);  // silence unused-constant warnings in reduced builds
}

TEST_SUITE_END();
