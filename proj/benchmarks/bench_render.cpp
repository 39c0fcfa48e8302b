// Forward render and backward pass cost at the tracking resolution.

#include <benchmark/benchmark.h>

#include "irt/renderer.hpp"
#include "irt/synth.hpp"

namespace {

using namespace irt;

struct BenchScene {
  Generator gen{GeneratorConfig{}};
  Camera cam = default_camera();
  std::vector<SceneObject> objects;
  RenderConfig rc;

  explicit BenchScene(int n_objects) {
    ScenarioConfig cfg;
    cfg.n_objects = n_objects;
    cfg.n_frames = 1;
    const Scene scene = sample_scene(cfg);
    for (const TruthObject& obj : scene.objects) {
      objects.push_back({obj.latents, obj.poses[0], obj.scale});
    }
  }
};

void BM_RenderForward(benchmark::State& state) {
  BenchScene bench(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    SceneRender render =
        render_scene(bench.gen, bench.objects, bench.cam, bench.rc);
    benchmark::DoNotOptimize(render.composite().image.data());
  }
}
BENCHMARK(BM_RenderForward)->Arg(1)->Arg(3)->Arg(6);

void BM_RenderBackward(benchmark::State& state) {
  BenchScene bench(static_cast<int>(state.range(0)));
  Image dimage(bench.cam.width, bench.cam.height, 3, 1e-3);
  Image dforeground(bench.cam.width, bench.cam.height, 1, 1e-3);
  for (auto _ : state) {
    SceneRender render =
        render_scene(bench.gen, bench.objects, bench.cam, bench.rc);
    auto grads = render.backward(dimage, dforeground);
    benchmark::DoNotOptimize(grads.data());
  }
}
BENCHMARK(BM_RenderBackward)->Arg(1)->Arg(3)->Arg(6);

}  // namespace
