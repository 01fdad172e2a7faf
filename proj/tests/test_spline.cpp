#include <doctest.h>

#include <rigcal/spline.hpp>

#include "oracles.hpp"

#include <random>

using namespace rigcal;

namespace {

std::mt19937_64 rng_for(const char* tag) {
  std::seed_seq seq(tag, tag + std::strlen(tag));
  return std::mt19937_64(seq);
}

std::vector<Vec3> random_positions(int n, std::mt19937_64& rng, double scale = 2.0) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<Vec3> cp(n);
  for (auto& p : cp) p = Vec3(d(rng), d(rng), d(rng));
  return cp;
}

// Smooth random rotation walk: consecutive control points stay well inside the
// principal logarithm domain.
std::vector<Rotation> random_rotations(int n, std::mt19937_64& rng, double step = 0.4) {
  std::normal_distribution<double> d(0.0, step);
  std::vector<Rotation> cp(n);
  cp[0] = Rotation::exp(Vec3(d(rng), d(rng), d(rng)));
  for (int i = 1; i < n; ++i) {
    cp[i] = cp[i - 1] * Rotation::exp(Vec3(d(rng), d(rng), d(rng)));
  }
  return cp;
}

}  // namespace

TEST_SUITE_BEGIN("spline");

TEST_CASE("cumulative basis endpoint values and derivative sums") {
  const auto b0 = cumulative_basis(0.0);
  CHECK(b0.l[0] == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(b0.l[1] == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
  CHECK(b0.l[2] == 0.0);

  const auto b1 = cumulative_basis(1.0 - 1e-12);
  CHECK(b1.l[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(b1.l[1] == doctest::Approx(5.0 / 6.0).epsilon(1e-9));
  CHECK(b1.l[2] == doctest::Approx(1.0 / 6.0).epsilon(1e-9));

  auto rng = rng_for("basis");
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const auto b = cumulative_basis(U(rng));
    CHECK(b.dl[0] + b.dl[1] + b.dl[2] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(b.ddl[0] + b.ddl[1] + b.ddl[2] == doctest::Approx(0.0).epsilon(1e-14));
  }
}

TEST_CASE("position evaluation matches the de Boor recursion") {
  auto rng = rng_for("deboor");
  const double start = 2.5, dt = 0.37;
  const auto cp = random_positions(20, rng);
  const PositionSpline spline(start, dt, cp);
  std::uniform_real_distribution<double> T(spline.grid().span_begin() + 1e-9,
                                           spline.grid().span_end() - 1e-9);
  for (int i = 0; i < 10000; ++i) {
    const double t = T(rng);
    const Vec3 ref = oracle::bspline_position(cp, start, dt, t);
    CHECK((spline.eval(t).position - ref).norm() < 1e-10);
  }
}

TEST_CASE("position derivatives match central differences") {
  auto rng = rng_for("posfd");
  const double start = 0.0, dt = 0.21;
  const PositionSpline spline(start, dt, random_positions(15, rng));
  std::uniform_real_distribution<double> T(start + 0.05, spline.grid().span_end() - 0.05);
  const double h = 1e-5;
  for (int i = 0; i < 500; ++i) {
    const double t = T(rng);
    const auto s = spline.eval(t);
    const Vec3 v_fd = (spline.eval(t + h).position - spline.eval(t - h).position) / (2 * h);
    const Vec3 a_fd =
        (spline.eval(t + h).velocity - spline.eval(t - h).velocity) / (2 * h);
    CHECK((s.velocity - v_fd).norm() < 1e-5 * std::max(1.0, v_fd.norm()));
    CHECK((s.acceleration - a_fd).norm() < 1e-5 * std::max(1.0, a_fd.norm()));
  }
}

TEST_CASE("rotation evaluation matches the term-by-term product form") {
  auto rng = rng_for("rotprod");
  const double start = -1.0, dt = 0.5;
  const auto cp = random_rotations(14, rng);
  const RotationSpline spline(start, dt, cp);
  std::vector<Mat3> cpm;
  for (const auto& r : cp) cpm.push_back(r.matrix());
  std::uniform_real_distribution<double> T(spline.grid().span_begin() + 1e-9,
                                           spline.grid().span_end() - 1e-9);
  for (int i = 0; i < 1000; ++i) {
    const double t = T(rng);
    const Mat3 ref = oracle::rotation_product_form(cpm, start, dt, t);
    CHECK((spline.eval(t).rotation.matrix() - ref).norm() < 1e-10);
  }
}

TEST_CASE("angular velocity matches finite differences of the orientation") {
  auto rng = rng_for("rotfd");
  const double start = 0.0, dt = 0.3;
  const RotationSpline spline(start, dt, random_rotations(12, rng));
  std::uniform_real_distribution<double> T(start + 0.05, spline.grid().span_end() - 0.05);
  const double h = 1e-6;
  for (int i = 0; i < 500; ++i) {
    const double t = T(rng);
    const auto s = spline.eval(t);
    // Body-frame rate: log(R(t-h)^-1 R(t+h)) / 2h.
    const Rotation Rm = spline.eval(t - h).rotation;
    const Rotation Rp = spline.eval(t + h).rotation;
    const Vec3 w_fd = (Rm.inverse() * Rp).log() / (2 * h);
    CHECK((s.angular_velocity_body - w_fd).norm() < 1e-5 * std::max(1.0, w_fd.norm()));
  }
}

TEST_CASE("constant-rate control points reproduce the twist exactly") {
  const Vec3 omega(0.3, -0.2, 0.5);
  const double dt = 0.25;
  const Rotation R0 = Rotation::exp(Vec3(0.1, 0.7, -0.3));
  std::vector<Rotation> cp;
  for (int k = 0; k < 12; ++k) cp.push_back(R0 * Rotation::exp(k * dt * omega));
  const RotationSpline spline(0.0, dt, cp);
  for (double t : {0.0, 0.1, 0.37, 1.0, 1.99, 2.25}) {
    const auto s = spline.eval(t);
    CHECK((s.angular_velocity_body - omega).norm() < 1e-12);
    // Control point k sits at R0 exp(k dt w); the curve passes through
    // R0 exp((t/dt + 1) dt w) because the window is centered one knot in.
    const Rotation expected = R0 * Rotation::exp((t + dt) * omega);
    CHECK(s.rotation.angle_to(expected) < 1e-12);
  }
}

TEST_CASE("collinear control points give constant velocity and zero acceleration") {
  const Vec3 p0(1.0, -2.0, 0.5), dir(0.4, 0.1, -0.2);
  std::vector<Vec3> cp;
  for (int k = 0; k < 10; ++k) cp.push_back(p0 + k * dir);
  const double dt = 0.5;
  const PositionSpline spline(0.0, dt, cp);
  for (double t : {0.0, 0.3, 1.7, 3.49, 3.5}) {
    const auto s = spline.eval(t);
    CHECK((s.velocity - dir / dt).norm() < 1e-12);
    CHECK(s.acceleration.norm() < 1e-12);
  }
}

TEST_CASE("span checks throw with the offending timestamp") {
  auto rng = rng_for("span");
  const PositionSpline spline(1.0, 0.5, random_positions(8, rng));
  CHECK(spline.grid().span_begin() == 1.0);
  CHECK(spline.grid().span_end() == doctest::Approx(3.5));
  CHECK_NOTHROW(spline.eval(1.0));
  CHECK_NOTHROW(spline.eval(3.5));
  CHECK_THROWS_AS(spline.eval(0.999999), SpanError);
  try {
    spline.eval(3.5000001);
    CHECK(false);
  } catch (const SpanError& e) {
    CHECK(e.query_time == doctest::Approx(3.5000001));
    CHECK(e.span_max == doctest::Approx(3.5));
  }
}

TEST_CASE("time reparameterization shifts cleanly") {
  auto rng = rng_for("shift");
  const auto cp = random_positions(10, rng);
  const auto cr = random_rotations(10, rng);
  const double delta = 10.3;
  const PositionSpline a(0.0, 0.4, cp), b(delta, 0.4, cp);
  const RotationSpline ra(0.0, 0.4, cr), rb(delta, 0.4, cr);
  std::uniform_real_distribution<double> T(0.0, a.grid().span_end());
  for (int i = 0; i < 200; ++i) {
    const double t = T(rng);
    CHECK((a.eval(t).position - b.eval(t + delta).position).norm() < 1e-12);
    CHECK(ra.eval(t).rotation.angle_to(rb.eval(t + delta).rotation) < 1e-12);
  }
}

TEST_CASE("curves are twice continuously differentiable across knots") {
  auto rng = rng_for("c2");
  const double dt = 0.5;
  const PositionSpline ps(0.0, dt, random_positions(12, rng));
  const RotationSpline rs(0.0, dt, random_rotations(12, rng));
  const double eps = 1e-9;
  for (int knot = 1; knot < ps.grid().num_segments(); ++knot) {
    const double t = knot * dt;
    const auto pl = ps.eval(t - eps), pr = ps.eval(t + eps);
    CHECK((pl.position - pr.position).norm() < 1e-8);
    CHECK((pl.velocity - pr.velocity).norm() < 1e-7);
    CHECK((pl.acceleration - pr.acceleration).norm() < 1e-6);
    const auto rl = rs.eval(t - eps), rr = rs.eval(t + eps);
    CHECK(rl.rotation.angle_to(rr.rotation) < 1e-8);
    CHECK((rl.angular_velocity_body - rr.angular_velocity_body).norm() < 1e-7);
  }
}

TEST_CASE("fitting poses sampled from a spline recovers the control points") {
  auto rng = rng_for("fit");
  const double dt = 0.25;
  const auto cp = random_positions(12, rng, 1.0);
  const auto cr = random_rotations(12, rng, 0.3);
  const PositionSpline ps(0.0, dt, cp);
  const RotationSpline rs(0.0, dt, cr);

  std::vector<TimedPose> poses;
  const double end = ps.grid().span_end();
  for (double t = 0.0; t <= end + 1e-12; t += dt / 4.0) {
    const double tq = std::min(t, end);
    poses.push_back({tq, {rs.eval(tq).rotation, ps.eval(tq).position}});
  }
  FitReport report;
  const Trajectory fit = fit_trajectory(poses, dt, &report);
  REQUIRE(fit.grid().num_control_points() == 12);
  for (int i = 0; i < 12; ++i) {
    CHECK((fit.position.control_point(i) - cp[i]).norm() < 1e-6);
    CHECK(fit.rotation.control_point(i).angle_to(cr[i]) < 1e-6);
  }
  CHECK(report.rms_position < 1e-8);
  CHECK(report.rms_rotation < 1e-8);
}

TEST_CASE("fit validation errors") {
  CHECK_THROWS_AS(fit_trajectory({{0.0, RigidTransform{}}}, 0.1), ValidationError);
  CHECK_THROWS_AS(
      fit_trajectory({{0.0, RigidTransform{}}, {0.0, RigidTransform{}}}, 0.1),
      ValidationError);
  CHECK_THROWS_AS(
      fit_trajectory({{0.0, RigidTransform{}}, {1.0, RigidTransform{}}}, 0.0),
      ValidationError);
}

TEST_SUITE_END();
