// Full scheduled fit cost per frame, the pipeline's inner loop.

#include <benchmark/benchmark.h>

#include "irt/fitting.hpp"
#include "irt/synth.hpp"

namespace {

using namespace irt;

void BM_FitFrame(benchmark::State& state) {
  ScenarioConfig cfg;
  cfg.n_objects = static_cast<int>(state.range(0));
  cfg.n_frames = 1;
  const Scene scene = sample_scene(cfg);
  Generator gen(cfg.generator);
  FitConfig fit;
  const std::vector<Image> frames = render_sequence(scene, gen, fit.render);

  std::vector<SceneObject> inits;
  for (const TruthObject& obj : scene.objects) {
    SceneObject init;
    init.pose = obj.poses[0];
    init.pose.t.x() += 0.2;  // realistic detector offset
    init.scale = obj.scale;
    init.latents.shape = Eigen::VectorXd::Zero(cfg.generator.shape_dim);
    init.latents.texture = Eigen::VectorXd::Zero(cfg.generator.texture_dim);
    inits.push_back(std::move(init));
  }
  for (auto _ : state) {
    auto results = fit_frame(frames[0], inits, scene.camera, gen, fit);
    benchmark::DoNotOptimize(results.data());
  }
}
BENCHMARK(BM_FitFrame)->Arg(1)->Arg(3)->Arg(6)->Unit(benchmark::kMillisecond);

}  // namespace
