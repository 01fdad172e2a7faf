#include "rigcal/spline.hpp"

#include "rigcal/jet.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>

namespace rigcal {

KnotGrid::KnotGrid(double start_time, double knot_interval, int num_control_points)
    : start_(start_time), dt_(knot_interval), num_cp_(num_control_points) {
  if (!(knot_interval > 0.0)) {
    throw ValidationError("knot interval must be positive");
  }
  if (num_control_points < 4) {
    throw ValidationError("a cubic spline needs at least 4 control points");
  }
}

std::pair<int, double> KnotGrid::locate(double t) const {
  if (!contains(t)) {
    throw SpanError(t, span_begin(), span_end());
  }
  const double s = (t - start_) / dt_;
  int i = static_cast<int>(std::floor(s));
  i = std::clamp(i, 0, num_segments() - 1);
  return {i, s - i};
}

PositionSpline::PositionSpline(double start_time, double knot_interval,
                               std::vector<Vec3> control_points)
    : grid_(start_time, knot_interval, static_cast<int>(control_points.size())),
      cp_(std::move(control_points)) {}

PositionSpline::State PositionSpline::eval(double t) const {
  const auto [i, u] = grid_.locate(t);
  const Vec3 cp[4] = {cp_[i], cp_[i + 1], cp_[i + 2], cp_[i + 3]};
  State s;
  eval_position_segment<double>(cp, u, 1.0 / grid_.knot_interval(), &s.position, &s.velocity,
                                &s.acceleration);
  return s;
}

RotationSpline::RotationSpline(double start_time, double knot_interval,
                               std::vector<Rotation> control_points)
    : grid_(start_time, knot_interval, static_cast<int>(control_points.size())),
      cp_(std::move(control_points)) {}

RotationSpline::State RotationSpline::eval(double t) const {
  const auto [i, u] = grid_.locate(t);
  const Eigen::Quaternion<double> cp[4] = {cp_[i].quaternion(), cp_[i + 1].quaternion(),
                                           cp_[i + 2].quaternion(), cp_[i + 3].quaternion()};
  Eigen::Quaterniond q;
  State s;
  eval_rotation_segment<double>(cp, u, 1.0 / grid_.knot_interval(), &q,
                                &s.angular_velocity_body, nullptr);
  s.rotation = Rotation(q);
  return s;
}

namespace {

// Smoothness ridge weight tying consecutive control-point differences. Keeps
// data-free control points finite without measurably biasing constrained ones.
constexpr double kRidgeWeight = 1e-5;

KnotGrid make_grid(double t0, double t1, double dt) {
  const int segments = std::max(1, static_cast<int>(std::ceil((t1 - t0) / dt - 1e-9)));
  return KnotGrid(t0, dt, segments + 3);
}

std::vector<Vec3> fit_position(const std::vector<TimedPose>& poses, const KnotGrid& grid) {
  const int n = grid.num_control_points();
  std::vector<Eigen::Triplet<double>> trip;
  VecX rhs = VecX::Zero(3 * n);
  const double inv_dt = 1.0 / grid.knot_interval();

  for (const TimedPose& m : poses) {
    const auto [i, u] = grid.locate(m.t);
    const CumulativeBasis<double> b = cumulative_basis(u);
    // Weights on the four absolute control points of segment i.
    const double w[4] = {1.0 - b.l[0], b.l[0] - b.l[1], b.l[1] - b.l[2], b.l[2]};
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) {
        const double h = w[r] * w[c];
        for (int k = 0; k < 3; ++k) {
          trip.emplace_back(3 * (i + r) + k, 3 * (i + c) + k, h);
        }
      }
      for (int k = 0; k < 3; ++k) {
        rhs[3 * (i + r) + k] += w[r] * m.pose.translation[k];
      }
    }
    (void)inv_dt;
  }
  // Second-difference ridge rows.
  for (int j = 1; j + 1 < n; ++j) {
    const int idx[3] = {j - 1, j, j + 1};
    const double w[3] = {kRidgeWeight, -2.0 * kRidgeWeight, kRidgeWeight};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        for (int k = 0; k < 3; ++k) {
          trip.emplace_back(3 * idx[r] + k, 3 * idx[c] + k, w[r] * w[c]);
        }
      }
    }
  }

  Eigen::SparseMatrix<double> H(3 * n, 3 * n);
  H.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(H);
  if (ldlt.info() != Eigen::Success) {
    throw SolverError("position spline fit: normal equations are singular");
  }
  const VecX x = ldlt.solve(rhs);

  std::vector<Vec3> cp(n);
  for (int j = 0; j < n; ++j) cp[j] = x.segment<3>(3 * j);
  return cp;
}

std::vector<Rotation> fit_rotation(const std::vector<TimedPose>& poses, const KnotGrid& grid,
                                   int* iterations_out) {
  const int n = grid.num_control_points();

  // Initialize every control point from the measurement nearest its peak of
  // influence so the Gauss-Newton iteration starts in the right homotopy class.
  std::vector<Rotation> cp(n);
  for (int j = 0; j < n; ++j) {
    const double t_peak = grid.start_time() + (j - 1) * grid.knot_interval();
    auto it = std::lower_bound(poses.begin(), poses.end(), t_peak,
                               [](const TimedPose& p, double t) { return p.t < t; });
    if (it == poses.end()) it = std::prev(poses.end());
    if (it != poses.begin() && std::abs(std::prev(it)->t - t_peak) < std::abs(it->t - t_peak)) {
      it = std::prev(it);
    }
    cp[j] = it->pose.rotation;
  }

  using J12 = Jet<12>;
  using J9 = Jet<9>;
  int iter = 0;
  for (; iter < 15; ++iter) {
    std::vector<Eigen::Triplet<double>> trip;
    VecX rhs = VecX::Zero(3 * n);

    // Measurement residuals log(q_meas^-1 q(t)).
    for (const TimedPose& m : poses) {
      const auto [i, u] = grid.locate(m.t);
      Eigen::Quaternion<J12> cpj[4];
      for (int k = 0; k < 4; ++k) {
        Eigen::Matrix<J12, 3, 1> delta;
        for (int d = 0; d < 3; ++d) delta[d] = J12(0.0, 3 * k + d);
        cpj[k] = quat_cast<J12>(cp[i + k].quaternion()) * quat_exp(delta);
      }
      Eigen::Quaternion<J12> q;
      eval_rotation_segment<J12>(cpj, J12(u), 1.0, &q, nullptr, nullptr);
      const Eigen::Quaternion<J12> qe = quat_cast<J12>(m.pose.rotation.quaternion().conjugate()) * q;
      const Eigen::Matrix<J12, 3, 1> r = quat_log(qe);

      Eigen::Matrix<double, 3, 12> J;
      Vec3 rv;
      for (int d = 0; d < 3; ++d) {
        rv[d] = r[d].a;
        J.row(d) = r[d].v.transpose();
      }
      for (int br = 0; br < 4; ++br) {
        const Eigen::Matrix3d Jr = J.block<3, 3>(0, 3 * br);
        for (int bc = 0; bc < 4; ++bc) {
          const Mat3 h = Jr.transpose() * J.block<3, 3>(0, 3 * bc);
          for (int a = 0; a < 3; ++a) {
            for (int bb = 0; bb < 3; ++bb) {
              trip.emplace_back(3 * (i + br) + a, 3 * (i + bc) + bb, h(a, bb));
            }
          }
        }
        rhs.segment<3>(3 * (i + br)) -= Jr.transpose() * rv;
      }
    }

    // Angular second-difference ridge: log(q_{j-1}^-1 q_j) - log(q_j^-1 q_{j+1}).
    for (int j = 1; j + 1 < n; ++j) {
      Eigen::Quaternion<J9> qj[3];
      for (int k = 0; k < 3; ++k) {
        Eigen::Matrix<J9, 3, 1> delta;
        for (int d = 0; d < 3; ++d) delta[d] = J9(0.0, 3 * k + d);
        qj[k] = quat_cast<J9>(cp[j - 1 + k].quaternion()) * quat_exp(delta);
      }
      const Eigen::Matrix<J9, 3, 1> r =
          (quat_log(Eigen::Quaternion<J9>(qj[0].conjugate() * qj[1])) -
           quat_log(Eigen::Quaternion<J9>(qj[1].conjugate() * qj[2]))) *
          kRidgeWeight;
      Eigen::Matrix<double, 3, 9> J;
      Vec3 rv;
      for (int d = 0; d < 3; ++d) {
        rv[d] = r[d].a;
        J.row(d) = r[d].v.transpose();
      }
      for (int br = 0; br < 3; ++br) {
        const Eigen::Matrix3d Jr = J.block<3, 3>(0, 3 * br);
        for (int bc = 0; bc < 3; ++bc) {
          const Mat3 h = Jr.transpose() * J.block<3, 3>(0, 3 * bc);
          for (int a = 0; a < 3; ++a) {
            for (int bb = 0; bb < 3; ++bb) {
              trip.emplace_back(3 * (j - 1 + br) + a, 3 * (j - 1 + bc) + bb, h(a, bb));
            }
          }
        }
        rhs.segment<3>(3 * (j - 1 + br)) -= Jr.transpose() * rv;
      }
    }

    Eigen::SparseMatrix<double> H(3 * n, 3 * n);
    H.setFromTriplets(trip.begin(), trip.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(H);
    if (ldlt.info() != Eigen::Success) {
      throw SolverError("rotation spline fit: normal equations are singular");
    }
    const VecX dx = ldlt.solve(rhs);

    for (int j = 0; j < n; ++j) {
      cp[j] = cp[j] * Rotation::exp(dx.segment<3>(3 * j));
    }
    if (dx.lpNorm<Eigen::Infinity>() < 1e-13) {
      ++iter;
      break;
    }
  }
  if (iterations_out) *iterations_out = iter;
  return cp;
}

}  // namespace

Trajectory fit_trajectory(std::vector<TimedPose> poses, double knot_interval, FitReport* report) {
  if (poses.size() < 2) {
    throw ValidationError("trajectory fit needs at least two timed poses");
  }
  std::sort(poses.begin(), poses.end(),
            [](const TimedPose& a, const TimedPose& b) { return a.t < b.t; });
  if (!(poses.back().t > poses.front().t)) {
    throw ValidationError("trajectory fit needs measurements at distinct times");
  }

  const KnotGrid grid = make_grid(poses.front().t, poses.back().t, knot_interval);

  Trajectory traj;
  traj.position = PositionSpline(grid.start_time(), grid.knot_interval(),
                                 fit_position(poses, grid));
  int rot_iters = 0;
  traj.rotation = RotationSpline(grid.start_time(), grid.knot_interval(),
                                 fit_rotation(poses, grid, &rot_iters));

  if (report) {
    report->rotation_iterations = rot_iters;
    double se_p = 0.0, se_r = 0.0;
    report->max_position = 0.0;
    report->max_rotation = 0.0;
    for (const TimedPose& m : poses) {
      const double ep = (traj.position.eval(m.t).position - m.pose.translation).norm();
      const double er = traj.rotation.eval(m.t).rotation.angle_to(m.pose.rotation);
      se_p += ep * ep;
      se_r += er * er;
      report->max_position = std::max(report->max_position, ep);
      report->max_rotation = std::max(report->max_rotation, er);
    }
    report->rms_position = std::sqrt(se_p / poses.size());
    report->rms_rotation = std::sqrt(se_r / poses.size());
  }
  return traj;
}

}  // namespace rigcal
