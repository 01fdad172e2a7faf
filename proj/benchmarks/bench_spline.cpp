#include <benchmark/benchmark.h>

#include <rigcal/spline.hpp>

#include <random>

namespace {

rigcal::PositionSpline make_position_spline(int n) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<rigcal::Vec3> cp(n);
  for (auto& p : cp) p = rigcal::Vec3(d(rng), d(rng), d(rng));
  return rigcal::PositionSpline(0.0, 0.1, cp);
}

rigcal::RotationSpline make_rotation_spline(int n) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> d(0.0, 0.2);
  std::vector<rigcal::Rotation> cp(n);
  cp[0] = rigcal::Rotation();
  for (int i = 1; i < n; ++i) {
    cp[i] = cp[i - 1] * rigcal::Rotation::exp(rigcal::Vec3(d(rng), d(rng), d(rng)));
  }
  return rigcal::RotationSpline(0.0, 0.1, cp);
}

void BM_PositionEval(benchmark::State& state) {
  const auto spline = make_position_spline(200);
  const double t0 = spline.grid().span_begin();
  const double t1 = spline.grid().span_end();
  double t = t0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(spline.eval(t));
    t += 0.001;
    if (t > t1) t = t0;
  }
}
BENCHMARK(BM_PositionEval);

void BM_RotationEval(benchmark::State& state) {
  const auto spline = make_rotation_spline(200);
  const double t0 = spline.grid().span_begin();
  const double t1 = spline.grid().span_end();
  double t = t0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(spline.eval(t));
    t += 0.001;
    if (t > t1) t = t0;
  }
}
BENCHMARK(BM_RotationEval);

}  // namespace

BENCHMARK_MAIN();
