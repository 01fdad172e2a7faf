#include "rigcal/initializer.hpp"

#include "rigcal/residuals.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace rigcal {
namespace {

constexpr double kDeg = M_PI / 180.0;
// singular value < ratio * largest  =>  the direction is unobservable.
constexpr double kDegeneracyRatio = 1e-3;
// Absolute floor on the largest rotation singular value; below it the pose
// pairs carry no rotation information at all (pure translation).
constexpr double kNoRotationSigma = 1e-6;

std::string format_vec(const Eigen::Ref<const Eigen::VectorXd>& v) {
  std::ostringstream os;
  os << "[";
  for (int i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << "]";
  return os.str();
}

/// Relative poses between consecutive keyframes, where a new keyframe starts
/// once the motion since the previous one reaches either threshold.
std::vector<RigidTransform> keyframe_deltas(const std::vector<TimedPose>& odometry,
                                            double min_translation, double min_rotation_rad) {
  std::vector<RigidTransform> deltas;
  if (odometry.empty()) return deltas;
  const TimedPose* last = &odometry.front();
  for (std::size_t i = 1; i < odometry.size(); ++i) {
    const RigidTransform d = last->pose.inverse() * odometry[i].pose;
    if (d.translation.norm() >= min_translation || d.rotation.log().norm() >= min_rotation_rad) {
      deltas.push_back(d);
      last = &odometry[i];
    }
  }
  return deltas;
}

struct RotationExcitation {
  Vec4 singular_values = Vec4::Zero();  // descending; of the self hand-eye system
  double total_rotation_rad = 0.0;
  bool single_axis = false;
  Vec3 dominant_axis = Vec3::Zero();
};

/// Axis-diversity analysis of a set of relative rotations, phrased through
/// the same quaternion system the hand-eye solver uses (with both sides equal
/// the system's smallest two singular values vanish iff all axes coincide).
RotationExcitation analyze_rotation_excitation(const std::vector<RigidTransform>& deltas) {
  RotationExcitation ex;
  Eigen::Matrix4d normal = Eigen::Matrix4d::Zero();
  Mat3 scatter = Mat3::Zero();
  for (const RigidTransform& d : deltas) {
    const Eigen::Quaterniond q = d.rotation.quaternion();
    const Mat4 block = quat_left_matrix(q) - quat_right_matrix(q);
    normal += block.transpose() * block;
    const Vec3 phi = d.rotation.log();
    scatter += phi * phi.transpose();
    ex.total_rotation_rad += phi.norm();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(normal);  // ascending eigenvalues
  for (int i = 0; i < 4; ++i) {
    ex.singular_values[i] = std::sqrt(std::max(0.0, es.eigenvalues()[3 - i]));
  }
  Eigen::SelfAdjointEigenSolver<Mat3> axes(scatter);
  ex.dominant_axis = axes.eigenvectors().col(2);
  ex.single_axis = ex.singular_values[0] > 0.0 &&
                   ex.singular_values[2] < kDegeneracyRatio * ex.singular_values[0];
  return ex;
}

/// Orientation, body rates and world-frame acceleration of the fitted spline
/// at one reference time, packaged for the bootstrap IMU factor.
InitImuSampleData sample_kinematics(const Trajectory& traj, double t_ref) {
  InitImuSampleData d;
  const KnotGrid& grid = traj.rotation.grid();
  const auto [seg, u] = grid.locate(t_ref);
  Eigen::Quaterniond cp[4];
  for (int j = 0; j < 4; ++j) cp[j] = traj.rotation.control_point(seg + j).quaternion();
  Eigen::Quaterniond q;
  Vec3 omega, alpha;
  eval_rotation_segment<double>(cp, u, 1.0 / grid.knot_interval(), &q, &omega, &alpha);
  d.q_ml = q;
  d.omega_body = omega;
  d.alpha_body = alpha;
  d.accel_world = traj.position.eval(t_ref).acceleration;
  return d;
}

double recompose_error(const HandEyeProblem& problem, const Rotation& X) {
  double sum = 0.0;
  for (const RelativePosePair& pair : problem.pairs) {
    const double e = (pair.delta_a.rotation * X).angle_to(X * pair.delta_b.rotation);
    sum += e * e;
  }
  return sum;
}

HandEyeResult solve_hand_eye(const HandEyeProblem& problem, const RigidTransform* prior) {
  const int n = static_cast<int>(problem.pairs.size());
  if (n < 2) {
    throw ValidationError("hand-eye needs at least two relative-pose pairs; got " +
                          std::to_string(n));
  }

  HandEyeResult result;
  ObservabilityReport& report = result.report;

  const Eigen::MatrixXd A = problem.rotation_system();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeFullV);
  for (int i = 0; i < 4; ++i) report.rotation_singular_values[i] = svd.singularValues()[i];

  Mat3 scatter = Mat3::Zero();
  for (const RelativePosePair& pair : problem.pairs) {
    const Vec3 phi = pair.delta_a.rotation.log();
    scatter += phi * phi.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> axes(scatter);
  report.dominant_rotation_axis = axes.eigenvectors().col(2);

  const Vec4& sv = report.rotation_singular_values;
  if (sv[0] < kNoRotationSigma * std::sqrt(static_cast<double>(n))) {
    throw InitDegeneracyError(
        "hand-eye rotation system has no usable excitation (relative rotations are all "
        "near identity)",
        report);
  }
  report.single_axis_rotation = sv[2] < kDegeneracyRatio * sv[0];

  Eigen::Vector4d q_coeffs;
  if (report.single_axis_rotation) {
    if (prior == nullptr) {
      throw InitDegeneracyError(
          "hand-eye rotation system is rank deficient: all relative rotations share a "
          "single axis",
          report);
    }
    // The feasible rotations span the two smallest right-singular directions;
    // pick the member closest to the prior.
    const Eigen::Vector4d qp = prior->rotation.quaternion().coeffs();
    const Eigen::Vector4d v2 = svd.matrixV().col(2);
    const Eigen::Vector4d v3 = svd.matrixV().col(3);
    q_coeffs = v2 * v2.dot(qp) + v3 * v3.dot(qp);
    if (q_coeffs.norm() < 1e-9) q_coeffs = v3;  // prior orthogonal to the feasible set
  } else {
    q_coeffs = svd.matrixV().col(3);
  }
  q_coeffs.normalize();
  Rotation rotation(Eigen::Quaterniond(q_coeffs[3], q_coeffs[0], q_coeffs[1], q_coeffs[2]));

  // Self-check against the quaternion matrix convention: recompose both ways
  // and keep whichever closes the loop delta_a * X = X * delta_b.
  if (recompose_error(problem, rotation.inverse()) < recompose_error(problem, rotation)) {
    rotation = rotation.inverse();
  }

  Eigen::MatrixXd B;
  Eigen::VectorXd c;
  problem.translation_system(rotation, &B, &c);
  Eigen::JacobiSVD<Eigen::MatrixXd> tsvd(B, Eigen::ComputeThinU | Eigen::ComputeFullV);
  for (int i = 0; i < 3; ++i) report.translation_singular_values[i] = tsvd.singularValues()[i];

  const Vec3 p0 = prior ? prior->translation : Vec3::Zero();
  Vec3 p = p0;
  const Eigen::VectorXd rhs = c - B * p0;
  const Vec3& tsv = report.translation_singular_values;
  for (int i = 0; i < 3; ++i) {
    const Vec3 v = tsvd.matrixV().col(i);
    if (tsv[i] < kDegeneracyRatio * tsv[0] || tsv[0] <= 0.0) {
      report.frozen_translation_directions.push_back(v);
    } else {
      p += v * (tsvd.matrixU().col(i).dot(rhs) / tsv[i]);
    }
  }

  result.X = RigidTransform(rotation, p);
  return result;
}

}  // namespace

std::string ObservabilityReport::summary() const {
  std::ostringstream os;
  os << "rotation singular values " << format_vec(rotation_singular_values)
     << "; translation singular values " << format_vec(translation_singular_values);
  if (single_axis_rotation) {
    os << "; single-axis rotation about " << format_vec(dominant_rotation_axis);
  }
  if (!frozen_translation_directions.empty()) {
    os << "; frozen directions:";
    for (const Vec3& d : frozen_translation_directions) os << " " << format_vec(d);
  }
  return os.str();
}

Eigen::MatrixXd HandEyeProblem::rotation_system() const {
  Eigen::MatrixXd A(4 * static_cast<int>(pairs.size()), 4);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    A.block<4, 4>(4 * static_cast<int>(i), 0) =
        quat_left_matrix(pairs[i].delta_a.rotation.quaternion()) -
        quat_right_matrix(pairs[i].delta_b.rotation.quaternion());
  }
  return A;
}

void HandEyeProblem::translation_system(const Rotation& rotation, Eigen::MatrixXd* B,
                                        Eigen::VectorXd* c) const {
  B->resize(3 * static_cast<int>(pairs.size()), 3);
  c->resize(3 * static_cast<int>(pairs.size()));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const int row = 3 * static_cast<int>(i);
    B->block<3, 3>(row, 0) = pairs[i].delta_a.rotation.matrix() - Mat3::Identity();
    c->segment<3>(row) = rotation * pairs[i].delta_b.translation - pairs[i].delta_a.translation;
  }
}

HandEyeProblem build_hand_eye_problem(const Trajectory& traj_a,
                                      const std::vector<TimedPose>& odometry_b,
                                      double min_translation, double min_rotation_deg) {
  HandEyeProblem problem;
  const double min_rotation = min_rotation_deg * kDeg;
  const TimedPose* last = nullptr;
  for (const TimedPose& tp : odometry_b) {
    if (!traj_a.contains(tp.t)) continue;
    if (last == nullptr) {
      last = &tp;
      continue;
    }
    const RigidTransform delta_b = last->pose.inverse() * tp.pose;
    if (delta_b.translation.norm() < min_translation &&
        delta_b.rotation.log().norm() < min_rotation) {
      continue;
    }
    RelativePosePair pair;
    pair.t0 = last->t;
    pair.t1 = tp.t;
    pair.delta_a = traj_a.pose(last->t).inverse() * traj_a.pose(tp.t);
    pair.delta_b = delta_b;
    problem.pairs.push_back(pair);
    last = &tp;
  }
  return problem;
}

HandEyeResult hand_eye(const HandEyeProblem& problem) { return solve_hand_eye(problem, nullptr); }

HandEyeResult hand_eye(const HandEyeProblem& problem, const RigidTransform& prior) {
  return solve_hand_eye(problem, &prior);
}

// ---------------------------------------------------------------------------

TrajectoryInitResult init_trajectory(const std::vector<TimedPose>& base_lidar_odometry,
                                     const std::vector<ImuSample>& imu,
                                     const InitOptions& options) {
  if (base_lidar_odometry.size() < 8) {
    throw ValidationError("trajectory bootstrap needs odometry poses; got " +
                          std::to_string(base_lidar_odometry.size()));
  }
  double t_min = base_lidar_odometry.front().t;
  double t_max = t_min;
  for (const TimedPose& tp : base_lidar_odometry) {
    t_min = std::min(t_min, tp.t);
    t_max = std::max(t_max, tp.t);
  }
  if (t_max - t_min < 2.0) {
    throw ValidationError("trajectory bootstrap needs at least 2 s of odometry; got " +
                          std::to_string(t_max - t_min) + " s");
  }
  if (imu.empty()) throw ValidationError("trajectory bootstrap needs IMU samples");

  TrajectoryInitResult result;

  // Spline fit of the base LiDAR motion in its odometry frame.
  const Trajectory lidar_traj =
      fit_trajectory(base_lidar_odometry, options.knot_interval, &result.odometry_fit);

  // Rotation excitation between keyframes decides what is observable.
  const std::vector<RigidTransform> deltas =
      keyframe_deltas(base_lidar_odometry, options.keyframe_min_translation,
                      options.keyframe_min_rotation_deg * kDeg);
  const RotationExcitation excitation = analyze_rotation_excitation(deltas);
  result.report.rotation_singular_values = excitation.singular_values;
  result.report.single_axis_rotation = excitation.single_axis;
  result.report.dominant_rotation_axis = excitation.dominant_axis;
  // The lever arm is excited exactly where rotation is: reuse the rotation
  // system's leading singular values as its conditioning proxy.
  result.report.translation_singular_values = excitation.singular_values.head<3>();
  if (excitation.total_rotation_rad < options.min_total_rotation_deg * kDeg) {
    throw InitDegeneracyError(
        "trajectory bootstrap: odometry carries only " +
            std::to_string(excitation.total_rotation_rad / kDeg) +
            " deg of rotation; the IMU-LiDAR rotation is unobservable",
        result.report);
  }

  // IMU samples that land inside the fitted span (one knot of margin).
  const KnotGrid& grid = lidar_traj.grid();
  const double lo = grid.span_begin() + grid.knot_interval();
  const double hi = grid.span_end() - grid.knot_interval();
  std::vector<const ImuSample*> usable;
  usable.reserve(imu.size());
  for (const ImuSample& s : imu) {
    const double t_ref = s.t + options.imu_time_offset_hint;
    if (t_ref >= lo && t_ref <= hi) usable.push_back(&s);
  }
  if (usable.size() < 20) {
    throw ValidationError("trajectory bootstrap: only " + std::to_string(usable.size()) +
                          " IMU samples fall inside the odometry span");
  }
  const std::size_t stride =
      std::max<std::size_t>(1, usable.size() / static_cast<std::size_t>(options.max_imu_samples));

  const Rotation R_il_seed = options.extrinsic_prior.rotation;
  const Vec3 lever_seed = options.extrinsic_prior.inverse().translation;

  std::vector<InitImuSampleData> samples;
  samples.reserve(usable.size() / stride + 1);
  Vec3 gravity_acc = Vec3::Zero();
  for (std::size_t i = 0; i < usable.size(); i += stride) {
    const ImuSample& s = *usable[i];
    InitImuSampleData d = sample_kinematics(lidar_traj, s.t + options.imu_time_offset_hint);
    d.gyro_meas = s.gyro;
    d.accel_meas = s.accel;
    gravity_acc +=
        d.accel_world - (Rotation(d.q_ml) * (R_il_seed.inverse() * s.accel));
    samples.push_back(std::move(d));
  }
  Vec3 gravity_seed = gravity_acc / static_cast<double>(samples.size());
  if (gravity_seed.norm() < 1e-6) {
    gravity_seed = Vec3(0.0, 0.0, -kGravityMagnitude);
  } else {
    gravity_seed = kGravityMagnitude * gravity_seed.normalized();
  }

  Problem problem;
  const int rot_id = problem.add_rotation_block(R_il_seed, "rot_imu_lidar");
  const int lever_id = problem.add_euclidean_block(lever_seed, "lever_arm");
  const int gravity_id = problem.add_gravity_block(gravity_seed, "gravity_odom");
  for (const InitImuSampleData& d : samples) {
    problem.add_factor(make_init_imu_factor(rot_id, lever_id, gravity_id, d, options.gyro_sigma,
                                            options.accel_sigma));
  }
  SolveOptions solve_options;
  solve_options.max_iterations = 80;
  solve_options.linear_solver = LinearSolverType::kDense;
  solve_options.log = options.log;
  result.summary = solve(problem, solve_options);
  if (!result.summary.converged()) {
    throw SolverError("IMU-LiDAR bootstrap did not converge: " + result.summary.message);
  }

  const Rotation R_il = problem.block(rot_id).as_rotation();
  Vec3 lever = problem.block(lever_id).value;
  const Vec3 gravity_odom = problem.block(gravity_id).value;

  if (result.report.single_axis_rotation) {
    // All rotation shares one axis: the lever component along it never enters
    // the residual, so keep the prior's component and report the direction.
    const Vec3& axis = result.report.dominant_rotation_axis;
    lever += axis * axis.dot(lever_seed - lever);
    result.report.frozen_translation_directions.push_back(axis);
  }

  const RigidTransform T_lidar_imu(R_il.inverse(), lever);
  result.T_imu_lidar = T_lidar_imu.inverse();

  // Rotate the odometry frame so gravity points along -z, then express the
  // IMU body motion in that world frame and refit the spline.
  const Eigen::Quaterniond q_align =
      Eigen::Quaterniond::FromTwoVectors(gravity_odom, Vec3(0.0, 0.0, -1.0));
  result.T_world_odom = RigidTransform(Rotation(q_align), Vec3::Zero());
  result.gravity = result.T_world_odom.rotation * gravity_odom;

  std::vector<TimedPose> world_poses;
  world_poses.reserve(base_lidar_odometry.size());
  for (const TimedPose& tp : base_lidar_odometry) {
    world_poses.push_back({tp.t, result.T_world_odom * tp.pose * T_lidar_imu});
  }
  result.trajectory = fit_trajectory(world_poses, options.knot_interval, &result.world_fit);

  if (options.log != nullptr) {
    *options.log << "trajectory bootstrap: " << samples.size() << " IMU samples, "
                 << deltas.size() << " keyframe increments, "
                 << (result.report.single_axis_rotation ? "single-axis" : "full") << " rotation"
                 << "; odometry fit rms " << result.odometry_fit.rms_position << " m / "
                 << result.odometry_fit.rms_rotation << " rad\n";
  }
  return result;
}

// ---------------------------------------------------------------------------

InitVisualResult init_visual(const std::vector<FeatureTrack>& tracks, const Trajectory& traj,
                             const std::vector<CameraCalibration>& cameras,
                             const InitVisualOptions& options) {
  if (cameras.empty()) throw ValidationError("visual bootstrap needs at least one camera");
  const int num_cams = static_cast<int>(cameras.size());

  InitVisualResult result;
  result.cameras = cameras;
  result.used_landmarks_per_camera.assign(num_cams, 0);

  const double min_parallax = options.min_parallax_deg * kDeg;

  struct Ray {
    Vec3 center;
    Vec3 dir;
  };
  struct ObsRef {
    int camera;
    double t;
    Vec2 uv;
  };
  struct Candidate {
    int id;
    Vec3 point;
    std::vector<ObsRef> obs;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(tracks.size());

  for (const FeatureTrack& track : tracks) {
    std::vector<ObsRef> valid;
    std::vector<Ray> rays;
    for (const TrackObservation& obs : track.observations) {
      if (obs.camera < 0 || obs.camera >= num_cams) {
        throw ValidationError("track " + std::to_string(track.id) +
                              " references camera index " + std::to_string(obs.camera));
      }
      const CameraCalibration& cam = cameras[obs.camera];
      const double t_ref = obs.t + cam.extrinsics.time_offset;
      if (!traj.contains(t_ref)) continue;
      Vec3 ray_cam;
      if (!unproject_pixel(cam.intrinsics, obs.uv, &ray_cam)) continue;
      const RigidTransform T_world_cam = traj.pose(t_ref) * cam.extrinsics.T_imu_sensor;
      valid.push_back({obs.camera, obs.t, obs.uv});
      rays.push_back({T_world_cam.translation, (T_world_cam.rotation * ray_cam).normalized()});
    }
    if (valid.size() < 2) {
      ++result.dropped_outside_span;
      continue;
    }

    // Best-parallax observation pair (strided so long tracks stay O(64)).
    std::size_t best_i = 0, best_j = 1;
    double best_angle = -1.0;
    const std::size_t stride = std::max<std::size_t>(1, rays.size() / 8);
    for (std::size_t i = 0; i < rays.size(); i += stride) {
      for (std::size_t j = i + stride; j < rays.size(); j += stride) {
        const double angle =
            std::acos(std::clamp(rays[i].dir.dot(rays[j].dir), -1.0, 1.0));
        if (angle > best_angle) {
          best_angle = angle;
          best_i = i;
          best_j = j;
        }
      }
    }
    if (best_angle < min_parallax) {
      ++result.dropped_low_parallax;
      continue;
    }

    // Midpoint of the closest points of the two rays.
    const Ray& r1 = rays[best_i];
    const Ray& r2 = rays[best_j];
    const Vec3 w = r1.center - r2.center;
    const double b = r1.dir.dot(r2.dir);
    const double d1 = r1.dir.dot(w);
    const double d2 = r2.dir.dot(w);
    const double denom = 1.0 - b * b;  // bounded away from 0 by the parallax gate
    const double s = (b * d2 - d1) / denom;
    const double t = (d2 - b * d1) / denom;
    if (s <= 0.0 || t <= 0.0) {
      ++result.dropped_negative_depth;
      continue;
    }
    const Vec3 midpoint = 0.5 * (r1.center + s * r1.dir + r2.center + t * r2.dir);
    candidates.push_back({track.id, midpoint, std::move(valid)});
  }

  // Frame striding: cap the distinct observation times used per camera.
  std::vector<std::vector<double>> cam_times(num_cams);
  for (const Candidate& cand : candidates) {
    for (const ObsRef& o : cand.obs) cam_times[o.camera].push_back(o.t);
  }
  std::vector<std::unordered_set<double>> allowed(num_cams);
  for (int c = 0; c < num_cams; ++c) {
    std::vector<double>& ts = cam_times[c];
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    const std::size_t max_frames = static_cast<std::size_t>(options.max_frames_per_camera);
    const std::size_t step =
        ts.empty() ? 1 : std::max<std::size_t>(1, (ts.size() + max_frames - 1) / max_frames);
    for (std::size_t i = 0; i < ts.size(); i += step) allowed[c].insert(ts[i]);
  }

  Problem problem;
  const TrajectoryBlockIds traj_blocks = add_trajectory_blocks(problem, traj);
  for (int id : traj_blocks.rot_cp) problem.set_frozen(id, true);
  for (int id : traj_blocks.pos_cp) problem.set_frozen(id, true);

  struct CamBlocks {
    int rot = -1, pos = -1, td = -1, intr = -1;
  };
  std::vector<CamBlocks> cam_blocks(num_cams);
  for (int c = 0; c < num_cams; ++c) {
    const CameraCalibration& cam = cameras[c];
    cam_blocks[c].rot =
        problem.add_rotation_block(cam.extrinsics.T_imu_sensor.rotation, cam.id + "_rot");
    cam_blocks[c].pos =
        problem.add_euclidean_block(cam.extrinsics.T_imu_sensor.translation, cam.id + "_pos");
    VecX td(1);
    td[0] = cam.extrinsics.time_offset;
    cam_blocks[c].td = problem.add_euclidean_block(td, cam.id + "_td");
    problem.set_frozen(cam_blocks[c].td, true);  // offsets stay at their guesses here
    cam_blocks[c].intr = problem.add_euclidean_block(cam.intrinsics.as_vector(), cam.id + "_intr");
    problem.set_frozen(cam_blocks[c].intr, true);
  }

  std::unordered_map<int, int> landmark_block;
  std::vector<std::unordered_set<int>> used(num_cams);
  for (const Candidate& cand : candidates) {
    // Commit the track only if at least two observations survive striding, so
    // no landmark enters the problem underdetermined.
    std::vector<const ObsRef*> use;
    for (const ObsRef& o : cand.obs) {
      if (allowed[o.camera].count(o.t) > 0) use.push_back(&o);
    }
    if (use.size() < 2) continue;
    const int lm_id = problem.add_euclidean_block(cand.point, "lm_" + std::to_string(cand.id));
    problem.set_eliminable(lm_id, true);
    landmark_block.emplace(cand.id, lm_id);
    for (const ObsRef* o : use) {
      const CameraCalibration& cam = cameras[o->camera];
      const double sigma = cam.pixel_sigma > 0.0 ? cam.pixel_sigma : 1.0;
      auto factor = make_camera_factor(
          traj_blocks, cam_blocks[o->camera].rot, cam_blocks[o->camera].pos,
          cam_blocks[o->camera].td, lm_id, cam_blocks[o->camera].intr, cam.intrinsics.model,
          cam.intrinsics.max_theta, o->t, o->uv, sigma, Loss::huber(10.0),
          cam.extrinsics.time_offset);
      if (!factor) continue;
      problem.add_factor(std::move(factor));
      used[o->camera].insert(cand.id);
    }
  }

  for (int c = 0; c < num_cams; ++c) {
    result.used_landmarks_per_camera[c] = static_cast<int>(used[c].size());
    if (result.used_landmarks_per_camera[c] < options.min_landmarks_per_camera) {
      throw DegeneracyError(
          "camera '" + cameras[c].id + "': only " +
          std::to_string(result.used_landmarks_per_camera[c]) +
          " landmarks survive triangulation; need at least " +
          std::to_string(options.min_landmarks_per_camera));
    }
  }

  if (options.log != nullptr) {
    *options.log << "visual bootstrap: " << landmark_block.size() << " landmarks, dropped "
                 << result.dropped_low_parallax << " low-parallax / "
                 << result.dropped_negative_depth << " behind-camera / "
                 << result.dropped_outside_span << " out-of-span tracks\n";
  }

  SolveOptions solve_options;
  solve_options.max_iterations = options.max_solver_iterations;
  solve_options.log = options.log;
  result.summary = solve(problem, solve_options);
  if (!result.summary.converged()) {
    throw SolverError("visual bootstrap did not converge: " + result.summary.message);
  }

  for (int c = 0; c < num_cams; ++c) {
    result.cameras[c].extrinsics.T_imu_sensor = RigidTransform(
        problem.block(cam_blocks[c].rot).as_rotation(), Vec3(problem.block(cam_blocks[c].pos).value));
  }
  for (const auto& [track_id, block_id] : landmark_block) {
    result.landmarks.emplace(track_id, Vec3(problem.block(block_id).value));
  }
  return result;
}

}  // namespace rigcal
