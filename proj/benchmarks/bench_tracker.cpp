// Association-only cost: Kalman + Hungarian + lifecycle per frame.

#include <benchmark/benchmark.h>

#include "irt/rng.hpp"
#include "irt/tracker.hpp"

namespace {

using namespace irt;

std::vector<Observation> random_observations(Rng& rng, int count) {
  std::vector<Observation> obs(static_cast<std::size_t>(count));
  for (Observation& o : obs) {
    o.t = Vec3(rng.uniform(-10, 10), rng.uniform(5, 20), rng.uniform(0, 2));
    o.scale = rng.uniform(3.6, 4.8);
    o.yaw = rng.uniform(-3.0, 3.0);
    o.width = 0.42 * o.scale;
    o.height = 0.36 * o.scale;
    o.length = o.scale;
    o.latents.shape = Eigen::VectorXd::Random(8);
    o.latents.texture = Eigen::VectorXd::Random(12);
    o.score = rng.uniform(0.5, 1.0);
  }
  return obs;
}

void BM_TrackerStep(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(7);
  Tracker tracker;
  // Warm up with stable tracks so steps exercise matching, not just births.
  std::vector<Observation> base = random_observations(rng, n);
  int frame = 0;
  for (; frame < 5; ++frame) tracker.step(base, frame);
  for (auto _ : state) {
    for (Observation& o : base) o.t += Vec3(0.1, 0.0, 0.0);
    auto records = tracker.step(base, frame++);
    benchmark::DoNotOptimize(records.data());
  }
}
BENCHMARK(BM_TrackerStep)->Arg(5)->Arg(20)->Arg(50);

void BM_Hungarian(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(11);
  Eigen::MatrixXd score(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) score(i, j) = rng.uniform();
  }
  for (auto _ : state) {
    auto pairs = hungarian_assign(score);
    benchmark::DoNotOptimize(pairs.data());
  }
}
BENCHMARK(BM_Hungarian)->Arg(8)->Arg(32)->Arg(128);

}  // namespace
