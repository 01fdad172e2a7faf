#include <doctest.h>

#include <rigcal/simulator.hpp>

#include <algorithm>
#include <cmath>

using namespace rigcal;

namespace {

constexpr double kDeg = M_PI / 180.0;

// Reduced-size rig so unit tests stay fast; geometry and clocks are the
// defaults.
RigSpec small_rig() {
  RigSpec rig = default_rig();
  for (auto& l : rig.lidars) {
    l.scan_rows = 12;
    l.scan_cols = 60;
  }
  rig.imu.rate_hz = 100.0;
  rig.num_landmarks = 250;  // the short test window sweeps less of the scene
  return rig;
}

MotionSpec short_motion(MotionFamily family = MotionFamily::kFullExcitation) {
  MotionSpec m;
  m.family = family;
  m.duration = 8.0;
  return m;
}

double plane_distance(const std::vector<ScenePlane>& scene, const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& plane : scene) {
    const Vec3 n = plane.normal().normalized();
    best = std::min(best, std::abs(n.dot(p - plane.origin)));
  }
  return best;
}

}  // namespace

TEST_SUITE_BEGIN("simulator");

TEST_CASE("motion model matches finite differences of itself") {
  for (const auto family : {MotionFamily::kFullExcitation, MotionFamily::kPlanarFigureEight}) {
    const MotionModel model(short_motion(family));
    const double h = 1e-5;
    for (double t = 0.3; t < 7.5; t += 0.61) {
      const MotionState s = model.eval(t);
      const MotionState sm = model.eval(t - h);
      const MotionState sp = model.eval(t + h);

      const Vec3 v_fd = (sp.position - sm.position) / (2.0 * h);
      const Vec3 a_fd = (sp.velocity - sm.velocity) / (2.0 * h);
      CHECK((s.velocity - v_fd).norm() < 1e-6);
      CHECK((s.acceleration - a_fd).norm() < 1e-6);

      // Body angular rate: R(t-h)^-1 R(t+h) ~ Exp(2h * omega).
      const Vec3 w_fd = (sm.rotation.inverse() * sp.rotation).log() / (2.0 * h);
      const Vec3 al_fd =
          (sp.angular_velocity_body - sm.angular_velocity_body) / (2.0 * h);
      CHECK((s.angular_velocity_body - w_fd).norm() < 1e-6);
      CHECK((s.angular_acceleration_body - al_fd).norm() < 1e-6);
    }
  }
}

TEST_CASE("planar family moves in a horizontal plane and rotates about z only") {
  const MotionModel model(short_motion(MotionFamily::kPlanarFigureEight));
  const double z0 = model.eval(0.0).position.z();
  for (double t = 0.0; t <= 8.0; t += 0.37) {
    const MotionState s = model.eval(t);
    CHECK(s.position.z() == doctest::Approx(z0).epsilon(1e-12));
    CHECK(std::abs(s.angular_velocity_body.x()) < 1e-12);
    CHECK(std::abs(s.angular_velocity_body.y()) < 1e-12);
    CHECK((s.rotation * Vec3::UnitZ() - Vec3::UnitZ()).norm() < 1e-12);
  }
}

TEST_CASE("spline-backed motion mode exposes consistent derivatives") {
  MotionSpec spec = short_motion();
  spec.exact_spline_knot = 0.2;
  const MotionModel model(spec);
  const double h = 1e-5;
  for (double t = 0.5; t < 7.0; t += 0.93) {
    const MotionState s = model.eval(t);
    const MotionState sm = model.eval(t - h);
    const MotionState sp = model.eval(t + h);
    CHECK((s.velocity - (sp.position - sm.position) / (2.0 * h)).norm() < 1e-5);
    const Vec3 w_fd = (sm.rotation.inverse() * sp.rotation).log() / (2.0 * h);
    CHECK((s.angular_velocity_body - w_fd).norm() < 1e-5);
    const Vec3 al_fd = (sp.angular_velocity_body - sm.angular_velocity_body) / (2.0 * h);
    CHECK((s.angular_acceleration_body - al_fd).norm() < 1e-4);
  }
}

TEST_CASE("noise-free IMU measurements reproduce the analytic motion exactly") {
  RigSpec rig = small_rig();
  const MotionSpec motion = short_motion();
  const SimulationResult sim = generate(rig, motion, 11);
  const MotionModel model(motion);
  const Vec3 g(0.0, 0.0, -9.81);

  REQUIRE(!sim.dataset.imu.empty());
  CHECK(sim.dataset.imu.front().t == doctest::Approx(0.0));
  for (std::size_t k = 0; k < sim.dataset.imu.size(); k += 37) {
    const ImuSample& s = sim.dataset.imu[k];
    // Sample timestamps are in the IMU clock; truth is evaluated at the
    // reference time t + td.
    const MotionState state = model.eval(s.t + rig.imu.time_offset);
    const Vec3 gyro = state.angular_velocity_body + rig.imu.bias.gyro;
    const Vec3 accel =
        state.rotation.inverse() * (state.acceleration - g) + rig.imu.bias.accel;
    CHECK((s.gyro - gyro).norm() < 1e-10);
    CHECK((s.accel - accel).norm() < 1e-10);
  }
}

TEST_CASE("lidar returns lie exactly on scene surfaces") {
  RigSpec rig = small_rig();
  const MotionSpec motion = short_motion();
  const SimulationResult sim = generate(rig, motion, 12);
  const MotionModel model(motion);

  for (std::size_t j = 0; j < rig.lidars.size(); ++j) {
    const LidarData& data = sim.dataset.lidars[j];
    REQUIRE(!data.scans.empty());
    std::size_t checked = 0;
    for (std::size_t k = 0; k < data.scans.size(); k += 7) {
      const LidarScan& scan = data.scans[k];
      REQUIRE(!scan.points.empty());
      for (std::size_t i = 0; i < scan.points.size(); i += 53) {
        const LidarPoint& pt = scan.points[i];
        // Hardware-synchronized: point times are already reference times.
        const Vec3 p_world =
            model.pose(pt.t) * (rig.lidars[j].extrinsics.T_imu_sensor * pt.p);
        CHECK(plane_distance(rig.scene, p_world) < 1e-9);
        CHECK(pt.intensity >= 0.0);
        CHECK(pt.intensity <= 1.0);
        ++checked;
      }
      CHECK(scan.t == doctest::Approx(k / rig.lidars[j].rate_hz));
      for (std::size_t i = 1; i < scan.points.size(); ++i) {
        CHECK(scan.points[i].t > scan.points[i - 1].t);
      }
    }
    CHECK(checked > 100);
  }
}

TEST_CASE("odometry streams are expressed in each lidar's start frame") {
  RigSpec rig = small_rig();
  const MotionSpec motion = short_motion();
  const SimulationResult sim = generate(rig, motion, 13);
  const MotionModel model(motion);

  for (std::size_t j = 0; j < rig.lidars.size(); ++j) {
    const auto& odom = sim.dataset.lidars[j].odometry;
    REQUIRE(!odom.empty());
    const RigidTransform T_wl0 = model.pose(0.0) * rig.lidars[j].extrinsics.T_imu_sensor;
    CHECK(odom.front().pose.rotation.angle_to(Rotation::identity()) < 1e-12);
    CHECK(odom.front().pose.translation.norm() < 1e-12);
    for (std::size_t k = 0; k < odom.size(); k += 11) {
      const RigidTransform expected =
          T_wl0.inverse() * (model.pose(odom[k].t) * rig.lidars[j].extrinsics.T_imu_sensor);
      CHECK(odom[k].pose.rotation.angle_to(expected.rotation) < 1e-12);
      CHECK((odom[k].pose.translation - expected.translation).norm() < 1e-12);
    }
  }
}

TEST_CASE("feature tracks project the true landmarks at the true times") {
  RigSpec rig = small_rig();
  const MotionSpec motion = short_motion();
  const SimulationResult sim = generate(rig, motion, 14);
  const MotionModel model(motion);

  REQUIRE(!sim.dataset.tracks.empty());
  std::size_t checked = 0;
  for (const FeatureTrack& track : sim.dataset.tracks) {
    std::vector<double> last_t(rig.cameras.size(), -1e30);
    for (const TrackObservation& obs : track.observations) {
      const SimCamera& cam = rig.cameras[obs.camera];
      // Observation timestamps are in the camera clock.
      const double t_ref = obs.t + cam.extrinsics.time_offset;
      const RigidTransform T_world_cam = model.pose(t_ref) * cam.extrinsics.T_imu_sensor;
      Vec2 uv;
      REQUIRE(project_point(cam.intrinsics, T_world_cam.inverse() * sim.landmarks[track.id],
                            &uv));
      CHECK((uv - obs.uv).norm() < 1e-9);
      CHECK(obs.t > last_t[obs.camera]);
      last_t[obs.camera] = obs.t;
      ++checked;
    }
  }
  CHECK(checked > 500);
}

TEST_CASE("every camera observes the configured minimum number of landmarks") {
  RigSpec rig = small_rig();
  const SimulationResult sim = generate(rig, short_motion(), 15);
  for (std::size_t c = 0; c < rig.cameras.size(); ++c) {
    std::size_t distinct = 0;
    for (const FeatureTrack& track : sim.dataset.tracks) {
      distinct += std::any_of(track.observations.begin(), track.observations.end(),
                              [&](const TrackObservation& o) {
                                return o.camera == static_cast<int>(c);
                              });
    }
    CHECK(distinct >= static_cast<std::size_t>(rig.min_visible_landmarks));
  }
}

TEST_CASE("a starved camera fails generation with a validation error") {
  RigSpec rig = small_rig();
  rig.num_landmarks = 10;  // below the minimum visible requirement
  CHECK_THROWS_AS(generate(rig, short_motion(), 16), ValidationError);
}

TEST_CASE("nonzero lidar time offsets are rejected") {
  RigSpec rig = small_rig();
  rig.lidars[1].extrinsics.time_offset = 0.001;
  CHECK_THROWS_AS(generate(rig, short_motion(), 17), ValidationError);
}

TEST_CASE("correspondences live in the base lidar's odometry frame") {
  RigSpec rig = small_rig();
  const MotionSpec motion = short_motion();
  const SimulationResult sim = generate(rig, motion, 18);
  const MotionModel model(motion);
  REQUIRE(sim.dataset.has_correspondences);
  REQUIRE(!sim.dataset.correspondences.empty());

  const RigidTransform T_world_base0 =
      model.pose(0.0) * rig.lidars.front().extrinsics.T_imu_sensor;
  double last_t = -1e30;
  for (const CrossModalMatch& match : sim.dataset.correspondences) {
    const SimCamera& cam = rig.cameras[match.camera];
    const double t_ref = match.t + cam.extrinsics.time_offset;
    const Vec3 p_world = T_world_base0 * match.point;
    const RigidTransform T_world_cam = model.pose(t_ref) * cam.extrinsics.T_imu_sensor;
    Vec2 uv;
    REQUIRE(project_point(cam.intrinsics, T_world_cam.inverse() * p_world, &uv));
    CHECK((uv - match.uv).norm() < 1e-9);
    CHECK(plane_distance(rig.scene, p_world) < 1e-9);
    CHECK(match.t >= last_t);
    last_t = match.t;
  }
}

TEST_CASE("correspondence outliers replace roughly the requested fraction") {
  RigSpec rig = small_rig();
  rig.correspondence_outlier_fraction = 0.25;
  const MotionSpec motion = short_motion();
  const SimulationResult sim = generate(rig, motion, 19);
  const MotionModel model(motion);
  const RigidTransform T_world_base0 =
      model.pose(0.0) * rig.lidars.front().extrinsics.T_imu_sensor;

  std::size_t outliers = 0;
  for (const CrossModalMatch& match : sim.dataset.correspondences) {
    const SimCamera& cam = rig.cameras[match.camera];
    const RigidTransform T_world_cam =
        model.pose(match.t + cam.extrinsics.time_offset) * cam.extrinsics.T_imu_sensor;
    Vec2 uv;
    REQUIRE(project_point(cam.intrinsics, T_world_cam.inverse() * (T_world_base0 * match.point),
                          &uv));
    if ((uv - match.uv).norm() > 1.0) ++outliers;
  }
  const double fraction =
      static_cast<double>(outliers) / static_cast<double>(sim.dataset.correspondences.size());
  CHECK(fraction > 0.15);
  CHECK(fraction < 0.35);
}

TEST_CASE("generation is deterministic in the seed") {
  RigSpec rig = small_rig();
  rig.imu.gyro_sigma = 1e-3;
  rig.imu.accel_sigma = 1e-2;
  rig.lidars[0].range_sigma = 0.01;
  rig.cameras[0].pixel_sigma = 0.5;
  const MotionSpec motion = short_motion();
  const SimulationResult a = generate(rig, motion, 42);
  const SimulationResult b = generate(rig, motion, 42);
  const SimulationResult c = generate(rig, motion, 43);

  CHECK(a.dataset.imu.size() == b.dataset.imu.size());
  bool identical = true;
  bool differs_from_c = false;
  for (std::size_t k = 0; k < a.dataset.imu.size(); ++k) {
    identical = identical && a.dataset.imu[k].gyro == b.dataset.imu[k].gyro &&
                a.dataset.imu[k].accel == b.dataset.imu[k].accel;
    differs_from_c = differs_from_c || a.dataset.imu[k].gyro != c.dataset.imu[k].gyro;
  }
  CHECK(identical);
  CHECK(differs_from_c);
  CHECK(a.dataset.lidars[0].scans[3].points[100].p ==
        b.dataset.lidars[0].scans[3].points[100].p);
  CHECK(a.dataset.tracks.size() == b.dataset.tracks.size());
}

TEST_CASE("truth trajectory tracks the analytic motion closely") {
  RigSpec rig = small_rig();
  const MotionSpec motion = short_motion();
  const SimulationResult sim = generate(rig, motion, 20);
  const MotionModel model(motion);
  for (double t = 0.0; t <= motion.duration; t += 0.5) {
    const RigidTransform truth = sim.truth.trajectory.pose(t);
    const RigidTransform analytic = model.pose(t);
    CHECK(truth.rotation.angle_to(analytic.rotation) < 1e-4);
    CHECK((truth.translation - analytic.translation).norm() < 1e-4);
  }
  CHECK(sim.truth.gravity.z() == doctest::Approx(-9.81));
  CHECK(sim.truth.imu_time_offset == doctest::Approx(rig.imu.time_offset));
}

TEST_CASE("perturb shifts every parameter by the exact requested magnitude") {
  RigSpec rig = small_rig();
  const SimulationResult sim = generate(rig, short_motion(), 21);

  const double rot_deg = 3.0, trans_cm = 5.0, td_ms = 4.0, intr_pct = 2.0;
  const CalibrationState guess = perturb(sim.truth, rot_deg, trans_cm, td_ms, intr_pct, 99);

  for (std::size_t j = 0; j < guess.lidars.size(); ++j) {
    const double angle = guess.lidars[j].extrinsics.T_imu_sensor.rotation.angle_to(
        sim.truth.lidars[j].extrinsics.T_imu_sensor.rotation);
    CHECK(angle == doctest::Approx(rot_deg * kDeg).epsilon(1e-9));
    const double shift = (guess.lidars[j].extrinsics.T_imu_sensor.translation -
                          sim.truth.lidars[j].extrinsics.T_imu_sensor.translation)
                             .norm();
    CHECK(shift == doctest::Approx(trans_cm / 100.0).epsilon(1e-9));
    // Hardware-synchronized LiDAR clocks are never perturbed.
    CHECK(guess.lidars[j].extrinsics.time_offset == 0.0);
  }
  for (std::size_t c = 0; c < guess.cameras.size(); ++c) {
    const double angle = guess.cameras[c].extrinsics.T_imu_sensor.rotation.angle_to(
        sim.truth.cameras[c].extrinsics.T_imu_sensor.rotation);
    CHECK(angle == doctest::Approx(rot_deg * kDeg).epsilon(1e-9));
    const double dtd = std::abs(guess.cameras[c].extrinsics.time_offset -
                                sim.truth.cameras[c].extrinsics.time_offset);
    CHECK(dtd == doctest::Approx(td_ms / 1000.0).epsilon(1e-9));
    const double fx_ratio = guess.cameras[c].intrinsics.fx / sim.truth.cameras[c].intrinsics.fx;
    CHECK(std::abs(std::abs(fx_ratio - 1.0) - intr_pct / 100.0) < 1e-12);
    CHECK(guess.cameras[c].intrinsics.cx == sim.truth.cameras[c].intrinsics.cx);
    CHECK(guess.cameras[c].intrinsics.distortion == sim.truth.cameras[c].intrinsics.distortion);
  }
  CHECK(std::abs(std::abs(guess.imu_time_offset - sim.truth.imu_time_offset) - td_ms / 1000.0) <
        1e-12);
  CHECK(guess.imu_bias.gyro == sim.truth.imu_bias.gyro);
  CHECK(guess.gravity == sim.truth.gravity);

  // Deterministic in the seed; zero magnitudes are the identity.
  const CalibrationState again = perturb(sim.truth, rot_deg, trans_cm, td_ms, intr_pct, 99);
  CHECK(again.lidars[0].extrinsics.T_imu_sensor.translation ==
        guess.lidars[0].extrinsics.T_imu_sensor.translation);
  const CalibrationState other = perturb(sim.truth, rot_deg, trans_cm, td_ms, intr_pct, 100);
  CHECK(other.lidars[0].extrinsics.T_imu_sensor.translation !=
        guess.lidars[0].extrinsics.T_imu_sensor.translation);
  const CalibrationState zero = perturb(sim.truth, 0.0, 0.0, 0.0, 0.0, 99);
  CHECK(zero.lidars[0].extrinsics.T_imu_sensor.translation ==
        sim.truth.lidars[0].extrinsics.T_imu_sensor.translation);
  CHECK(zero.cameras[0].extrinsics.time_offset ==
        sim.truth.cameras[0].extrinsics.time_offset);
  CHECK(zero.cameras[1].intrinsics.fx == sim.truth.cameras[1].intrinsics.fx);
}

TEST_CASE("odometry drift perturbs poses but leaves scans untouched") {
  RigSpec rig = small_rig();
  const MotionSpec motion = short_motion();
  const SimulationResult clean = generate(rig, motion, 30);
  rig.odometry_drift = true;
  rig.drift_rot_deg_per_10m = 2.0;
  rig.drift_trans_m_per_10m = 0.2;
  const SimulationResult drifty = generate(rig, motion, 30);

  CHECK(clean.dataset.lidars[0].scans[5].points[10].p ==
        drifty.dataset.lidars[0].scans[5].points[10].p);
  double max_delta = 0.0;
  const auto& a = clean.dataset.lidars[0].odometry;
  const auto& b = drifty.dataset.lidars[0].odometry;
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    max_delta = std::max(max_delta, (a[k].pose.translation - b[k].pose.translation).norm());
  }
  CHECK(max_delta > 1e-6);
  CHECK(max_delta < 0.5);
}

TEST_SUITE_END();
