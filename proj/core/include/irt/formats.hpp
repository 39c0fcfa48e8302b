// On-disk interchange: JSON run configuration and JSONL scene, detection and
// track files. Every JSONL file opens with a one-line header record carrying
// the schema name, schema version and the run's config hash, so downstream
// commands can refuse mismatched inputs.

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "irt/fitting.hpp"
#include "irt/synth.hpp"
#include "irt/tracker.hpp"

namespace irt {

inline constexpr int kSchemaVersion = 1;

// Error taxonomy; the command layer maps these onto process exit codes
// (config 2, input mismatch 3, schema violation 4).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InputMismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// 64-bit FNV-1a over a byte string.
std::uint64_t fnv1a(std::string_view bytes);

// One run of the pipeline: where files live plus the full parameter set.
struct RunConfig {
  std::uint64_t seed = 1;
  int n_scenes = 1;  // generate/ablate batch size
  std::filesystem::path output_dir = "out";
  // Inputs for track/eval; generate derives them from output_dir.
  std::filesystem::path scene_path;
  std::filesystem::path detections_path;
  std::filesystem::path frames_dir;
  std::filesystem::path tracks_path;
  ScenarioConfig scenario;
  FitConfig fit;
  TrackerConfig tracker;
};

/// Parses a config from JSON text. Absent fields keep their defaults;
/// unknown fields raise ConfigError naming the field.
RunConfig parse_run_config(const std::string& json_text);

/// Loads and parses a config file; relative paths inside it are resolved
/// against the file's directory.
RunConfig load_run_config(const std::filesystem::path& path);

/// FNV-1a hash (16 hex digits) of the canonical JSON of the semantic config
/// fields (seed, batch size, scenario, fit, tracker); file paths are
/// excluded so the hash is stable across directory layouts.
std::string config_hash_hex(const RunConfig& cfg);

// --- Scene files -----------------------------------------------------------

void write_scene_file(const std::filesystem::path& path, const Scene& scene,
                      const std::string& config_hash);
Scene read_scene_file(const std::filesystem::path& path,
                      std::string* config_hash = nullptr);

// --- Detection files -------------------------------------------------------

void write_detection_file(const std::filesystem::path& path,
                          const std::vector<FrameDetections>& frames,
                          const std::string& config_hash);
std::vector<FrameDetections> read_detection_file(
    const std::filesystem::path& path, std::string* config_hash = nullptr);

// --- Track files -----------------------------------------------------------

struct TrackFileData {
  int n_frames = 0;
  std::string config_hash;
  std::vector<TrackRecord> records;  // ordered by frame, then id
};

void write_track_file(const std::filesystem::path& path,
                      const std::vector<TrackRecord>& records, int n_frames,
                      const std::string& config_hash);
TrackFileData read_track_file(const std::filesystem::path& path);

}  // namespace irt
