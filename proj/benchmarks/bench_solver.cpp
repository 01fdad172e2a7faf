#include <benchmark/benchmark.h>

#include <rigcal/solver.hpp>

#include <random>

namespace {

// Chained Rosenbrock in n 2-vectors: classic smooth nonconvex test problem.
struct RosenbrockPair {
  template <typename T>
  bool operator()(const T* const* params, T* residual) const {
    const T* x = params[0];
    residual[0] = T(10.0) * (x[1] - x[0] * x[0]);
    residual[1] = T(1.0) - x[0];
    return true;
  }
};

void BM_SolveRosenbrockChain(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    state.PauseTiming();
    rigcal::Problem problem;
    for (int i = 0; i < n; ++i) {
      const int id = problem.add_euclidean_block(Eigen::Vector2d(-1.2, 1.0));
      problem.add_factor(std::make_unique<rigcal::AutoDiffFactor<2, RosenbrockPair>>(
          "rosenbrock", std::vector<int>{id}, 2, rigcal::Loss::none(),
          RosenbrockPair{}));
    }
    rigcal::SolveOptions opts;
    opts.max_iterations = 100;
    state.ResumeTiming();
    const auto summary = rigcal::solve(problem, opts);
    benchmark::DoNotOptimize(summary.final_cost);
  }
}
BENCHMARK(BM_SolveRosenbrockChain)->Arg(10)->Arg(100);

}  // namespace

BENCHMARK_MAIN();
