// irtrack: synthesize scenes, run the fit-and-track pipeline, evaluate, and
// compare ablation variants. See README.md for config layout and examples.

#include <cstdint>
#include <string>

#include "CLI11.hpp"
#include "irt/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"analysis-by-synthesis multi-object tracking pipeline"};
  app.require_subcommand(1);

  irt::CommandOptions options;
  std::string config;
  std::uint64_t seed = 0;
  bool has_seed = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON run configuration")
        ->required();
    cmd->add_option("--jobs", options.jobs, "scene-level worker threads")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "override the config seed")
        ->each([&](const std::string&) { has_seed = true; });
  };

  CLI::App* generate =
      app.add_subcommand("generate", "sample scenes, frames and detections");
  add_common(generate);

  CLI::App* track =
      app.add_subcommand("track", "fit detections per frame and associate");
  add_common(track);
  track->add_flag("--overlay", options.overlay,
                  "write fitted-object overlay images");

  CLI::App* eval =
      app.add_subcommand("eval", "score track files against ground truth");
  add_common(eval);

  CLI::App* ablate =
      app.add_subcommand("ablate", "compare fitting/affinity variants");
  add_common(ablate);
  ablate->add_option("--variant", options.variant,
                     "run a single variant (default: all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    // Usage problems are configuration errors; --help stays 0.
    return code == 0 ? 0 : irt::kExitConfig;
  }

  options.config_path = config;
  if (has_seed) options.seed_override = seed;

  if (generate->parsed()) return irt::cmd_generate(options);
  if (track->parsed()) return irt::cmd_track(options);
  if (eval->parsed()) return irt::cmd_eval(options);
  return irt::cmd_ablate(options);
}
