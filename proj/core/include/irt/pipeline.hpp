// Command layer shared by the CLI binary and the end-to-end tests:
// generate (synthesize scenes to disk), track (per-frame fit + data
// association), eval (MOT metrics report) and ablate (variant comparison
// table). The run_* functions throw the formats error taxonomy; the cmd_*
// wrappers map exceptions onto process exit codes.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "irt/formats.hpp"
#include "irt/metrics.hpp"
#include "irt/synth.hpp"

namespace irt {

// Log verbosity from the IRTRACK_LOG environment variable
// ("quiet", "info", "debug"); unset or unknown values mean info.
enum class LogLevel { kQuiet = 0, kInfo = 1, kDebug = 2 };
LogLevel log_level();
void log_info(const std::string& message);
void log_debug(const std::string& message);

// Parsed command line for one subcommand invocation.
struct CommandOptions {
  std::filesystem::path config_path;
  bool overlay = false;
  int jobs = 1;
  std::optional<std::uint64_t> seed_override;
  std::string variant;  // ablate: run only this variant (empty = all)
};

// --- generate ----------------------------------------------------------------

// One generated scene directory: scene.jsonl + detections.jsonl + frames/.
struct GeneratedScene {
  std::filesystem::path directory;
  std::filesystem::path scene_file;
  std::filesystem::path detection_file;
  std::vector<std::filesystem::path> frame_files;
};

/// Samples cfg.n_scenes scenes (seeds cfg.seed, cfg.seed + 1, ...), renders
/// their frames and corrupted detections, and writes one subdirectory per
/// scene under cfg.output_dir.
std::vector<GeneratedScene> run_generate(const RunConfig& cfg);

// --- track -------------------------------------------------------------------

// In-memory tracking result for one scene.
struct SceneTrackOutput {
  std::vector<TrackRecord> records;
  // Per-frame soft IoU between the fitted composite foreground and the
  // ground-truth foreground; filled only when requested.
  std::vector<double> mask_ious;
};

/// Core per-frame loop: fit every detection (latents warm-started from the
/// nearest predicted track), assemble observations, and step the tracker.
/// `frames` must hold one observed image per scene frame. When `overlays`
/// is non-null it receives one image per frame with the fitted objects
/// composited over the faded observation.
SceneTrackOutput track_scene(const Scene& scene,
                             const std::vector<FrameDetections>& detections,
                             const std::vector<Image>& frames,
                             const FitConfig& fit_cfg,
                             const TrackerConfig& tracker_cfg,
                             bool compute_mask_iou = false,
                             std::vector<Image>* overlays = nullptr);

/// Disk-to-disk tracking. cfg.scene_path may name a single scene file or a
/// directory of generated scene subdirectories; track files are written
/// next to their outputs under cfg.output_dir. Returns the written track
/// file paths.
std::vector<std::filesystem::path> run_track(const RunConfig& cfg,
                                             bool overlay, int jobs);

// --- eval --------------------------------------------------------------------

struct SequenceReport {
  std::string name;
  SequenceSummary summary;
  SweepMetrics sweep;
};

struct MetricsReport {
  std::vector<SequenceReport> sequences;
  // Metrics over all sequences' frames pooled into one stream.
  SequenceSummary aggregate;
  SweepMetrics aggregate_sweep;
};

/// Converts ground truth + track records into per-frame evaluation boxes.
std::vector<EvalFrame> eval_frames_from(const Scene& scene,
                                        const std::vector<TrackRecord>& records);

/// Evaluates track files against their scenes (single pair or generated
/// directory trees), writes metrics.json under cfg.output_dir and returns
/// the report.
MetricsReport run_eval(const RunConfig& cfg, int jobs);

/// Aligned plain-text rendering of a report.
std::string format_report(const MetricsReport& report);

// --- ablate ------------------------------------------------------------------

struct AblationRow {
  std::string variant;
  double amota = 0.0;
  double mota = 0.0;
  double recall = 0.0;
  int idsw_crossing = 0;  // total ID switches on the crossing-pair suite
  double mask_iou_median = 0.0;
};

/// Fitting/affinity variants compared by cmd_ablate, in report order.
std::vector<std::string> ablation_variants();

/// Applies a named variant to a base config. Throws ConfigError for names
/// outside ablation_variants().
RunConfig apply_variant(const RunConfig& base, const std::string& variant);

/// Runs every requested variant over a standard scene set (AMOTA/MOTA/
/// recall/mask-IoU) and a crossing-pair suite (ID switches), writes
/// ablation.json under cfg.output_dir and returns the table rows.
std::vector<AblationRow> run_ablate(const RunConfig& cfg,
                                    const std::string& variant_filter,
                                    int jobs);

std::string format_ablation(const std::vector<AblationRow>& rows);

// --- exit-code wrappers --------------------------------------------------------

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitInputMismatch = 3;
inline constexpr int kExitSchema = 4;

int cmd_generate(const CommandOptions& options);
int cmd_track(const CommandOptions& options);
int cmd_eval(const CommandOptions& options);
int cmd_ablate(const CommandOptions& options);

}  // namespace irt
