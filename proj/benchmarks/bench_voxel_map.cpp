#include <benchmark/benchmark.h>

#include <rigcal/voxel_map.hpp>

#include <random>

namespace {

std::vector<rigcal::MapPointRef> make_room_points(int n) {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> U(-4.0, 4.0);
  std::uniform_int_distribution<int> wall(0, 5);
  std::vector<rigcal::MapPointRef> pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i) {
    rigcal::Vec3 p(U(rng), U(rng), U(rng) * 0.35 + 1.5);
    switch (wall(rng)) {
      case 0: p.x() = -4.0; break;
      case 1: p.x() = 4.0; break;
      case 2: p.y() = -4.0; break;
      case 3: p.y() = 4.0; break;
      case 4: p.z() = 0.1; break;
      default: p.z() = 3.0; break;
    }
    rigcal::MapPointRef ref;
    ref.lidar = 0;
    ref.scan = i % 40;
    ref.point = i;
    ref.t = 0.01 * i;
    ref.p_sensor = p;
    ref.p_world = p;
    pts.push_back(ref);
  }
  return pts;
}

void BM_VoxelMapBuild(benchmark::State& state) {
  const auto pts = make_room_points(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    rigcal::VoxelPlaneMap map{rigcal::VoxelMapParams{}};
    for (const auto& p : pts) map.insert(p);
    map.build();
    benchmark::DoNotOptimize(map.planar_voxels().size());
  }
}
BENCHMARK(BM_VoxelMapBuild)->Arg(10000)->Arg(50000);

}  // namespace

BENCHMARK_MAIN();
