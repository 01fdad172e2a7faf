#pragma once

// Continuous-time trajectory representation: a uniform cubic B-spline over R^3
// for position and a cumulative uniform cubic B-spline over SO(3) for
// orientation, sharing the same knot grid. Control points x_0..x_{N-1} with
// knot interval dt starting at t0 parameterize the closed time span
// [t0, t0 + (N-3) dt]; segment i is driven by control points i..i+3 through
// the normalized local coordinate u = (t - t0)/dt - i in [0, 1).
//
// The segment kernels are scalar-generic (double or Jet) and are shared by the
// spline classes, the factors, and the initializer.

#include "rigcal/geometry.hpp"
#include "rigcal/types.hpp"

#include <utility>
#include <vector>

namespace rigcal {

/// Cumulative cubic basis functions and their derivatives with respect to the
/// local coordinate u (callers scale by 1/dt per time derivative).
template <typename T>
struct CumulativeBasis {
  T l[3];    // lambda_1..lambda_3
  T dl[3];   // d lambda / du
  T ddl[3];  // d^2 lambda / du^2
};

template <typename T>
CumulativeBasis<T> cumulative_basis(const T& u) {
  const T u2 = u * u;
  const T u3 = u2 * u;
  CumulativeBasis<T> b;
  b.l[0] = (u3 - 3.0 * u2 + 3.0 * u + 5.0) / 6.0;
  b.l[1] = (-2.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0;
  b.l[2] = u3 / 6.0;
  b.dl[0] = (u2 - 2.0 * u + 1.0) * 0.5;
  b.dl[1] = (-2.0 * u2 + 2.0 * u + 1.0) * 0.5;
  b.dl[2] = u2 * 0.5;
  b.ddl[0] = u - 1.0;
  b.ddl[1] = 1.0 - 2.0 * u;
  b.ddl[2] = u;
  return b;
}

/// Position, velocity and acceleration of one spline segment. Any output
/// pointer may be null. inv_dt converts per-u derivatives to per-second.
template <typename T>
void eval_position_segment(const Eigen::Matrix<T, 3, 1> cp[4], const T& u, double inv_dt,
                           Eigen::Matrix<T, 3, 1>* p, Eigen::Matrix<T, 3, 1>* v,
                           Eigen::Matrix<T, 3, 1>* a) {
  const CumulativeBasis<T> b = cumulative_basis(u);
  const Eigen::Matrix<T, 3, 1> d1 = cp[1] - cp[0];
  const Eigen::Matrix<T, 3, 1> d2 = cp[2] - cp[1];
  const Eigen::Matrix<T, 3, 1> d3 = cp[3] - cp[2];
  if (p) *p = cp[0] + b.l[0] * d1 + b.l[1] * d2 + b.l[2] * d3;
  if (v) *v = (b.dl[0] * d1 + b.dl[1] * d2 + b.dl[2] * d3) * inv_dt;
  if (a) *a = (b.ddl[0] * d1 + b.ddl[1] * d2 + b.ddl[2] * d3) * (inv_dt * inv_dt);
}

/// Orientation R(u) = R_i Exp(l1 d1) Exp(l2 d2) Exp(l3 d3) with
/// d_j = Log(R_{i+j-1}^-1 R_{i+j}), plus body-frame angular velocity and
/// angular acceleration obtained by the chain recursion
///   w_j = A_j^T w_{j-1} + dl_j d_j
///   al_j = A_j^T al_{j-1} - dl_j d_j x (A_j^T w_{j-1}) + ddl_j d_j.
/// omega and alpha outputs may be null.
template <typename T>
void eval_rotation_segment(const Eigen::Quaternion<T> cp[4], const T& u, double inv_dt,
                           Eigen::Quaternion<T>* q_out, Eigen::Matrix<T, 3, 1>* omega_body,
                           Eigen::Matrix<T, 3, 1>* alpha_body) {
  using V3 = Eigen::Matrix<T, 3, 1>;
  const CumulativeBasis<T> b = cumulative_basis(u);

  Eigen::Quaternion<T> q = cp[0];
  V3 w = V3::Zero();
  V3 al = V3::Zero();
  const bool need_w = omega_body != nullptr || alpha_body != nullptr;
  for (int j = 0; j < 3; ++j) {
    const V3 d = quat_log(Eigen::Quaternion<T>(cp[j].conjugate() * cp[j + 1]));
    const Eigen::Quaternion<T> A = quat_exp<T>((b.l[j] * d).eval());
    q = q * A;
    if (need_w) {
      const Eigen::Quaternion<T> Ainv = A.conjugate();
      const V3 w_rot = quat_rotate(Ainv, w);
      if (alpha_body) {
        al = quat_rotate(Ainv, al) - (b.dl[j] * d).cross(w_rot) + b.ddl[j] * d;
      }
      w = w_rot + b.dl[j] * d;
    }
  }
  if (q_out) {
    q.normalize();
    *q_out = q;
  }
  if (omega_body) *omega_body = w * inv_dt;
  if (alpha_body) *alpha_body = al * (inv_dt * inv_dt);
}

// ---------------------------------------------------------------------------

/// Shared knot layout. The closed valid span is [start, start + num_segments*dt]
/// where num_segments = num_control_points - 3.
class KnotGrid {
 public:
  KnotGrid() = default;
  KnotGrid(double start_time, double knot_interval, int num_control_points);

  double start_time() const { return start_; }
  double knot_interval() const { return dt_; }
  int num_control_points() const { return num_cp_; }
  int num_segments() const { return num_cp_ - 3; }
  double span_begin() const { return start_; }
  double span_end() const { return start_ + num_segments() * dt_; }
  bool contains(double t) const { return t >= span_begin() && t <= span_end(); }

  /// Segment index and local coordinate for a valid query time; the right
  /// span endpoint maps to the last segment with u = 1. Throws SpanError.
  std::pair<int, double> locate(double t) const;

 private:
  double start_ = 0.0;
  double dt_ = 0.1;
  int num_cp_ = 4;
};

class PositionSpline {
 public:
  struct State {
    Vec3 position;
    Vec3 velocity;
    Vec3 acceleration;
  };

  PositionSpline() = default;
  PositionSpline(double start_time, double knot_interval, std::vector<Vec3> control_points);

  State eval(double t) const;

  const KnotGrid& grid() const { return grid_; }
  const std::vector<Vec3>& control_points() const { return cp_; }
  Vec3& control_point(int i) { return cp_[i]; }
  const Vec3& control_point(int i) const { return cp_[i]; }

 private:
  KnotGrid grid_;
  std::vector<Vec3> cp_;
};

class RotationSpline {
 public:
  struct State {
    Rotation rotation;
    Vec3 angular_velocity_body;
  };

  RotationSpline() = default;
  RotationSpline(double start_time, double knot_interval, std::vector<Rotation> control_points);

  State eval(double t) const;

  const KnotGrid& grid() const { return grid_; }
  const std::vector<Rotation>& control_points() const { return cp_; }
  Rotation& control_point(int i) { return cp_[i]; }
  const Rotation& control_point(int i) const { return cp_[i]; }

 private:
  KnotGrid grid_;
  std::vector<Rotation> cp_;
};

struct TimedPose {
  double t = 0.0;
  RigidTransform pose;
};

/// Split continuous-time trajectory; both splines share one knot grid.
struct Trajectory {
  PositionSpline position;
  RotationSpline rotation;

  const KnotGrid& grid() const { return position.grid(); }
  bool contains(double t) const { return grid().contains(t); }

  RigidTransform pose(double t) const {
    return {rotation.eval(t).rotation, position.eval(t).position};
  }
};

struct FitReport {
  double rms_position = 0.0;       // meters
  double rms_rotation = 0.0;       // radians
  double max_position = 0.0;
  double max_rotation = 0.0;
  int rotation_iterations = 0;
};

/// Least-squares fit of a trajectory to timed poses on a fresh knot grid
/// spanning the measurements. Position is linear; rotation is solved by
/// Gauss-Newton on the control-point tangent space.
Trajectory fit_trajectory(std::vector<TimedPose> poses, double knot_interval,
                          FitReport* report = nullptr);

}  // namespace rigcal
