#pragma once

// Bootstrap estimators that turn raw odometry, IMU and feature-track data into
// a usable starting state for the batch calibration:
//
//  * init_trajectory  — fits a spline to the base LiDAR odometry, solves a
//    small least squares for the IMU<->base-LiDAR rotation, the IMU lever arm
//    and gravity on top of that fixed spline, then re-expresses the whole
//    trajectory in a gravity-aligned world frame.
//  * hand_eye         — quaternion hand-eye calibration for the remaining
//    LiDARs from matched relative-pose pairs, with singular-value based
//    degeneracy analysis and optional priors for unobservable directions.
//  * init_visual      — camera extrinsics and landmark positions from feature
//    tracks, triangulated by the midpoint method and refined by a bundle
//    adjustment in which the trajectory control points are held fixed.

#include "rigcal/calibration.hpp"
#include "rigcal/geometry.hpp"
#include "rigcal/sensor_models.hpp"
#include "rigcal/solver.hpp"
#include "rigcal/spline.hpp"
#include "rigcal/types.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace rigcal {

/// Singular-value analysis of the linear systems solved while bootstrapping,
/// plus the directions that were unobservable and had to be pinned.
struct ObservabilityReport {
  Vec4 rotation_singular_values = Vec4::Zero();     // descending
  Vec3 translation_singular_values = Vec3::Zero();  // descending
  /// Unit tangent directions of the translation (or lever-arm) solve whose
  /// singular value fell below the degeneracy threshold; their components
  /// were kept at the prior instead of being estimated.
  std::vector<Vec3> frozen_translation_directions;
  bool single_axis_rotation = false;
  /// Common rotation axis when single_axis_rotation is set (unit vector in
  /// the body frame of the analyzed pose sequence).
  Vec3 dominant_rotation_axis = Vec3::Zero();

  std::string summary() const;
};

/// Degeneracy failure carrying the analysis that triggered it.
class InitDegeneracyError : public DegeneracyError {
 public:
  InitDegeneracyError(const std::string& what, ObservabilityReport report)
      : DegeneracyError(what), report_(std::move(report)) {}
  const ObservabilityReport& observability() const { return report_; }

 private:
  ObservabilityReport report_;
};

/// One matched motion increment: the relative pose of each sensor over the
/// same reference-clock interval [t0, t1].
struct RelativePosePair {
  double t0 = 0.0;
  double t1 = 0.0;
  RigidTransform delta_a;  // T_a(t0)^-1 * T_a(t1)
  RigidTransform delta_b;  // T_b(t0)^-1 * T_b(t1)
};

/// Hand-eye formulation: find X = T_a_b such that delta_a * X = X * delta_b
/// for every pair.
struct HandEyeProblem {
  std::vector<RelativePosePair> pairs;

  /// Stacked 4N x 4 homogeneous system on quaternion coefficients [x,y,z,w];
  /// the quaternion of X spans its null space.
  Eigen::MatrixXd rotation_system() const;

  /// Stacked 3N x 3 system B and right-hand side c with B * t_X = c, valid
  /// once the rotation of X is known.
  void translation_system(const Rotation& rotation, Eigen::MatrixXd* B,
                          Eigen::VectorXd* c) const;
};

/// Pairs consecutive odometry keyframes (spaced by at least min_translation
/// meters or min_rotation_deg degrees of motion) with the relative motion of
/// the spline over the same interval. Odometry samples outside the spline
/// span are skipped.
HandEyeProblem build_hand_eye_problem(const Trajectory& traj_a,
                                      const std::vector<TimedPose>& odometry_b,
                                      double min_translation = 0.1,
                                      double min_rotation_deg = 1.0);

struct HandEyeResult {
  RigidTransform X;  // T_a_b: maps b-frame coordinates into the a-frame
  ObservabilityReport report;
};

/// Solves the hand-eye problem without priors. Throws ValidationError with
/// fewer than two pairs, and InitDegeneracyError when the rotation system is
/// rank deficient (all relative rotations share one axis, or there is no
/// rotation at all). Translation directions whose singular value falls below
/// the degeneracy threshold are left at zero and reported as frozen.
HandEyeResult hand_eye(const HandEyeProblem& problem);

/// As above, but degenerate directions are resolved against a prior instead
/// of erroring: a single-axis rotation system picks the null-space member
/// closest to the prior rotation, and unobservable translation directions
/// keep the prior's component. Only a rotation system with no usable
/// excitation at all still throws.
HandEyeResult hand_eye(const HandEyeProblem& problem, const RigidTransform& prior);

// ---------------------------------------------------------------------------

struct InitOptions {
  double knot_interval = 0.2;  // for both the odometry-frame and world-frame fits
  double gyro_sigma = 1.7e-3;
  double accel_sigma = 2e-2;
  /// Guess for the IMU clock offset: t_ref = t_imu + offset.
  double imu_time_offset_hint = 0.0;
  /// T_imu_lidar seed; also the fallback for unobservable lever directions.
  RigidTransform extrinsic_prior;
  /// Below this much total rotation across keyframes the bootstrap refuses to run.
  double min_total_rotation_deg = 2.0;
  /// singular value < ratio * largest => direction treated as unobservable.
  double degeneracy_ratio = 1e-3;
  int max_imu_samples = 4000;
  double keyframe_min_translation = 0.1;
  double keyframe_min_rotation_deg = 1.0;
  std::ostream* log = nullptr;
};

struct TrajectoryInitResult {
  Trajectory trajectory;       // IMU body motion in the gravity-aligned world frame
  RigidTransform T_imu_lidar;  // base LiDAR extrinsics
  Vec3 gravity = Vec3::Zero();  // world frame, after alignment
  RigidTransform T_world_odom;  // odometry frame -> world frame
  ObservabilityReport report;
  FitReport odometry_fit;  // odometry-frame spline fit quality
  FitReport world_fit;     // world-frame IMU spline fit quality
  SolveSummary summary;    // of the rotation/lever/gravity least squares
};

/// Bootstraps the continuous trajectory and the base LiDAR's extrinsics from
/// that LiDAR's odometry and raw IMU samples. Requires at least two seconds
/// of odometry (ValidationError) and nontrivial rotation; a rotationless
/// sequence throws InitDegeneracyError. Single-axis rotation is allowed: the
/// lever-arm component along the axis stays at the prior and is reported.
TrajectoryInitResult init_trajectory(const std::vector<TimedPose>& base_lidar_odometry,
                                     const std::vector<ImuSample>& imu,
                                     const InitOptions& options = {});

// ---------------------------------------------------------------------------

struct InitVisualOptions {
  double min_parallax_deg = 1.0;
  int min_landmarks_per_camera = 20;
  /// Distinct observation times used per camera; extra frames are strided out.
  int max_frames_per_camera = 120;
  int max_solver_iterations = 60;
  std::ostream* log = nullptr;
};

struct InitVisualResult {
  std::vector<CameraCalibration> cameras;  // same order as the input
  std::unordered_map<int, Vec3> landmarks;
  std::vector<int> used_landmarks_per_camera;
  int dropped_low_parallax = 0;
  int dropped_negative_depth = 0;
  int dropped_outside_span = 0;
  SolveSummary summary;
};

/// Initializes camera extrinsics and landmarks from feature tracks on top of
/// a fixed trajectory. Landmarks are seeded by midpoint triangulation of the
/// best-parallax observation pair; tracks with insufficient parallax or a
/// behind-the-camera intersection are dropped and counted. A camera ending up
/// with fewer than min_landmarks_per_camera usable landmarks aborts with
/// DegeneracyError. Trajectory control points are frozen and come back
/// bit-identical.
InitVisualResult init_visual(const std::vector<FeatureTrack>& tracks, const Trajectory& traj,
                             const std::vector<CameraCalibration>& cameras,
                             const InitVisualOptions& options = {});

}  // namespace rigcal
