#include "irt/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "irt/rng.hpp"
#include "json.hpp"

namespace irt {

namespace {

using nlohmann::json;

// Detections whose nearest predicted track center is within this distance
// inherit that track's smoothed latents and filtered scale as the fit
// initialization.
constexpr double kWarmStartRadius = 2.0;
// Match radius (meters) for evaluation, nuScenes-style.
constexpr double kEvalRadius = 2.0;
constexpr double kOverlayFade = 0.45;
// The crossing suite uses heavier center noise so that association at the
// crossing is genuinely ambiguous and the latent term has work to do.
constexpr double kCrossingSigmaPos = 1.0;
// Id offset between pooled sequences so identity bookkeeping can't chain
// across sequence boundaries.
constexpr int kSequenceIdStride = 1000000;

std::string frame_name(const char* stem, int index) {
  std::ostringstream name;
  name << stem << "_" << std::setw(4) << std::setfill('0') << index << ".ppm";
  return name.str();
}

// Runs fn(0..count-1) on up to `jobs` threads; the first exception wins.
void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, count));
  if (jobs <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(jobs));
  for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2]
                    : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string scene_dir_name(int index) {
  std::ostringstream name;
  name << "scene_" << std::setw(3) << std::setfill('0') << index;
  return name.str();
}

// --- evaluation plumbing ---------------------------------------------------

struct ScenePair {
  std::string name;
  std::filesystem::path scene_file;
  std::filesystem::path detection_file;  // track only
  std::filesystem::path frames_dir;      // track only; may be empty
  std::filesystem::path track_file;      // eval only
  std::filesystem::path out_dir;
};

std::vector<ScenePair> collect_track_inputs(const RunConfig& cfg) {
  if (cfg.scene_path.empty()) {
    throw ConfigError("paths.scene is required for track");
  }
  std::vector<ScenePair> pairs;
  if (std::filesystem::is_directory(cfg.scene_path)) {
    std::vector<std::filesystem::path> subdirs;
    for (const auto& entry :
         std::filesystem::directory_iterator(cfg.scene_path)) {
      if (entry.is_directory() &&
          std::filesystem::exists(entry.path() / "scene.jsonl")) {
        subdirs.push_back(entry.path());
      }
    }
    std::sort(subdirs.begin(), subdirs.end());
    if (subdirs.empty()) {
      throw ConfigError("no scene subdirectories under " +
                        cfg.scene_path.string());
    }
    for (const auto& dir : subdirs) {
      ScenePair p;
      p.name = dir.filename().string();
      p.scene_file = dir / "scene.jsonl";
      p.detection_file = dir / "detections.jsonl";
      p.frames_dir = dir / "frames";
      p.out_dir = cfg.output_dir / p.name;
      pairs.push_back(std::move(p));
    }
    return pairs;
  }
  ScenePair p;
  p.name = "scene";
  p.scene_file = cfg.scene_path;
  if (cfg.detections_path.empty()) {
    throw ConfigError("paths.detections is required for track");
  }
  p.detection_file = cfg.detections_path;
  p.frames_dir = cfg.frames_dir;
  p.out_dir = cfg.output_dir;
  pairs.push_back(std::move(p));
  return pairs;
}

std::vector<ScenePair> collect_eval_inputs(const RunConfig& cfg) {
  if (cfg.scene_path.empty()) {
    throw ConfigError("paths.scene is required for eval");
  }
  std::vector<ScenePair> pairs;
  if (std::filesystem::is_directory(cfg.scene_path)) {
    std::vector<std::filesystem::path> subdirs;
    for (const auto& entry :
         std::filesystem::directory_iterator(cfg.scene_path)) {
      if (entry.is_directory() &&
          std::filesystem::exists(entry.path() / "scene.jsonl")) {
        subdirs.push_back(entry.path());
      }
    }
    std::sort(subdirs.begin(), subdirs.end());
    if (subdirs.empty()) {
      throw ConfigError("no scene subdirectories under " +
                        cfg.scene_path.string());
    }
    for (const auto& dir : subdirs) {
      ScenePair p;
      p.name = dir.filename().string();
      p.scene_file = dir / "scene.jsonl";
      // Track files live either beside the scene or mirrored under
      // output_dir.
      const std::filesystem::path beside = dir / "tracks.jsonl";
      const std::filesystem::path mirrored =
          cfg.output_dir / p.name / "tracks.jsonl";
      p.track_file = std::filesystem::exists(beside) ? beside : mirrored;
      pairs.push_back(std::move(p));
    }
    return pairs;
  }
  ScenePair p;
  p.name = "scene";
  p.scene_file = cfg.scene_path;
  if (cfg.tracks_path.empty()) {
    throw ConfigError("paths.tracks is required for eval");
  }
  p.track_file = cfg.tracks_path;
  pairs.push_back(std::move(p));
  return pairs;
}

std::vector<Image> load_or_render_frames(const Scene& scene,
                                         const std::filesystem::path& frames_dir,
                                         const RenderConfig& rc) {
  const int n = scene.config.n_frames;
  std::vector<Image> frames;
  frames.reserve(static_cast<std::size_t>(n));
  if (!frames_dir.empty() && std::filesystem::is_directory(frames_dir)) {
    for (int t = 0; t < n; ++t) {
      const std::filesystem::path file = frames_dir / frame_name("frame", t);
      if (!std::filesystem::exists(file)) {
        throw InputMismatchError("missing frame image: " + file.string());
      }
      frames.push_back(read_ppm(file.string()));
    }
    return frames;
  }
  Generator gen(scene.config.generator);
  return render_sequence(scene, gen, rc);
}

json summary_to_json(const SequenceSummary& s, const SweepMetrics& sweep) {
  return json{{"mota", s.mota},     {"recall", s.recall},
              {"idsw", s.idsw},     {"tp", s.tp},
              {"fp", s.fp},         {"fn", s.fn},
              {"gt", s.gt},         {"amota", sweep.amota},
              {"amotp", sweep.amotp}};
}

}  // namespace

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("IRTRACK_LOG");
    if (env == nullptr) return LogLevel::kInfo;
    const std::string value(env);
    if (value == "quiet") return LogLevel::kQuiet;
    if (value == "debug") return LogLevel::kDebug;
    return LogLevel::kInfo;
  }();
  return level;
}

void log_info(const std::string& message) {
  if (log_level() >= LogLevel::kInfo) {
    std::cerr << "[irtrack] " << message << "\n";
  }
}

void log_debug(const std::string& message) {
  if (log_level() >= LogLevel::kDebug) {
    std::cerr << "[irtrack:debug] " << message << "\n";
  }
}

std::vector<GeneratedScene> run_generate(const RunConfig& cfg) {
  validate_scenario(cfg.scenario);
  const std::string hash = config_hash_hex(cfg);
  std::vector<GeneratedScene> out(static_cast<std::size_t>(cfg.n_scenes));
  for (int i = 0; i < cfg.n_scenes; ++i) {
    ScenarioConfig scenario = cfg.scenario;
    scenario.seed = cfg.seed + static_cast<std::uint64_t>(i);
    const Scene scene = sample_scene(scenario);
    Generator gen(scenario.generator);

    GeneratedScene& gs = out[static_cast<std::size_t>(i)];
    gs.directory = cfg.output_dir / scene_dir_name(i);
    std::filesystem::create_directories(gs.directory / "frames");
    gs.scene_file = gs.directory / "scene.jsonl";
    write_scene_file(gs.scene_file, scene, hash);

    const std::vector<Image> frames =
        render_sequence(scene, gen, cfg.fit.render);
    for (int t = 0; t < scenario.n_frames; ++t) {
      std::filesystem::path file =
          gs.directory / "frames" / frame_name("frame", t);
      write_ppm(file.string(), frames[static_cast<std::size_t>(t)]);
      gs.frame_files.push_back(std::move(file));
    }

    gs.detection_file = gs.directory / "detections.jsonl";
    write_detection_file(gs.detection_file,
                         corrupt_detections(scene, scenario), hash);
    log_info("generated " + gs.directory.string());
  }
  return out;
}

SceneTrackOutput track_scene(const Scene& scene,
                             const std::vector<FrameDetections>& detections,
                             const std::vector<Image>& frames,
                             const FitConfig& fit_cfg,
                             const TrackerConfig& tracker_cfg,
                             bool compute_mask_iou,
                             std::vector<Image>* overlays) {
  const int n_frames = scene.config.n_frames;
  if (static_cast<int>(detections.size()) != n_frames) {
    throw InputMismatchError(
        "detection frames (" + std::to_string(detections.size()) +
        ") do not match scene frames (" + std::to_string(n_frames) + ")");
  }
  if (static_cast<int>(frames.size()) != n_frames) {
    throw InputMismatchError(
        "image frames (" + std::to_string(frames.size()) +
        ") do not match scene frames (" + std::to_string(n_frames) + ")");
  }
  Generator gen(scene.config.generator);
  // The scene's background plate is reproducible from its config; giving it
  // to the fitter makes the loss compare full frames, not bare composites.
  const Image background = make_background(scene.config, scene.camera);
  TrackerConfig tcfg = tracker_cfg;
  if (!tcfg.frustum.has_value()) tcfg.frustum = scene.camera;
  Tracker tracker(tcfg);

  SceneTrackOutput out;
  if (overlays != nullptr) overlays->clear();
  for (int t = 0; t < n_frames; ++t) {
    const std::vector<Detection>& dets =
        detections[static_cast<std::size_t>(t)].detections;

    // Warm-start previews from the constant-velocity prediction of every
    // live track.
    struct Preview {
      Vec3 center;
      double scale;
      const LatentPair* latents;
    };
    std::vector<Preview> previews;
    for (const TrackState& track : tracker.tracks()) {
      previews.push_back({track.x.head<3>() + track.x.tail<3>(),
                          track.x[3], &track.z_ema});
    }

    std::vector<SceneObject> inits;
    inits.reserve(dets.size());
    for (const Detection& det : dets) {
      const Preview* nearest = nullptr;
      double best = kWarmStartRadius;
      for (const Preview& p : previews) {
        const double d = (p.center - det.center).norm();
        if (d <= best) {
          best = d;
          nearest = &p;
        }
      }
      SceneObject init;
      init.pose = Pose::from_yaw(det.yaw, det.center);
      if (nearest != nullptr) {
        init.scale = nearest->scale;
        init.latents = *nearest->latents;
      } else {
        init.scale =
            initial_scale_from_dims(det.width, det.height, det.length);
        init.latents.shape =
            Eigen::VectorXd::Zero(scene.config.generator.shape_dim);
        init.latents.texture =
            Eigen::VectorXd::Zero(scene.config.generator.texture_dim);
      }
      inits.push_back(std::move(init));
    }

    std::vector<FitResult> fits;
    if (!inits.empty()) {
      fits = fit_frame(frames[static_cast<std::size_t>(t)], inits,
                       scene.camera, gen, fit_cfg, &background);
    }
    std::vector<Observation> observations;
    std::vector<SceneObject> fitted;
    for (std::size_t i = 0; i < fits.size(); ++i) {
      if (fits[i].culled) continue;
      observations.push_back(make_observation(dets[i], fits[i]));
      fitted.push_back({fits[i].latents, fits[i].pose, fits[i].scale});
    }
    std::vector<TrackRecord> records = tracker.step(observations, t);
    out.records.insert(out.records.end(), records.begin(), records.end());

    if (compute_mask_iou || overlays != nullptr) {
      Image fit_fg(scene.camera.width, scene.camera.height, 1);
      Image fit_rgb(scene.camera.width, scene.camera.height, 3);
      if (!fitted.empty()) {
        SceneRender render =
            render_scene(gen, fitted, scene.camera, fit_cfg.render);
        fit_fg = render.composite().foreground;
        fit_rgb = render.composite().image;
      }
      if (compute_mask_iou) {
        Image gt_fg;
        std::vector<SceneObject> truth;
        for (const TruthObject& obj : scene.objects) {
          truth.push_back(
              {obj.latents, obj.poses[static_cast<std::size_t>(t)],
               obj.scale});
        }
        SceneRender gt_render =
            render_scene(gen, truth, scene.camera, fit_cfg.render);
        gt_fg = gt_render.composite().foreground;
        out.mask_ious.push_back(mask_iou(fit_fg, gt_fg));
      }
      if (overlays != nullptr) {
        const Image& observed = frames[static_cast<std::size_t>(t)];
        Image overlay(scene.camera.width, scene.camera.height, 3);
        for (int y = 0; y < overlay.height(); ++y) {
          for (int x = 0; x < overlay.width(); ++x) {
            const double fade = (1.0 - fit_fg.at(x, y)) * kOverlayFade;
            for (int c = 0; c < 3; ++c) {
              overlay.at(x, y, c) =
                  fit_rgb.at(x, y, c) + fade * observed.at(x, y, c);
            }
          }
        }
        overlays->push_back(std::move(overlay));
      }
    }
  }
  std::sort(out.records.begin(), out.records.end(),
            [](const TrackRecord& a, const TrackRecord& b) {
              if (a.frame != b.frame) return a.frame < b.frame;
              return a.id < b.id;
            });
  return out;
}

std::vector<std::filesystem::path> run_track(const RunConfig& cfg,
                                             bool overlay, int jobs) {
  const std::vector<ScenePair> pairs = collect_track_inputs(cfg);
  std::vector<std::filesystem::path> written(pairs.size());
  parallel_for(static_cast<int>(pairs.size()), jobs, [&](int index) {
    const ScenePair& pair = pairs[static_cast<std::size_t>(index)];
    std::string scene_hash;
    const Scene scene = read_scene_file(pair.scene_file, &scene_hash);
    std::string det_hash;
    const std::vector<FrameDetections> dets =
        read_detection_file(pair.detection_file, &det_hash);
    if (scene_hash != det_hash) {
      throw InputMismatchError("config hash mismatch between " +
                               pair.scene_file.string() + " and " +
                               pair.detection_file.string());
    }
    if (static_cast<int>(dets.size()) != scene.config.n_frames) {
      throw InputMismatchError(
          "detection file has " + std::to_string(dets.size()) +
          " frames, scene has " + std::to_string(scene.config.n_frames));
    }
    const std::vector<Image> frames =
        load_or_render_frames(scene, pair.frames_dir, cfg.fit.render);
    std::vector<Image> overlays;
    SceneTrackOutput result =
        track_scene(scene, dets, frames, cfg.fit, cfg.tracker, false,
                    overlay ? &overlays : nullptr);
    std::filesystem::path track_file =
        !cfg.tracks_path.empty() && pairs.size() == 1
            ? cfg.tracks_path
            : pair.out_dir / "tracks.jsonl";
    std::filesystem::create_directories(track_file.parent_path());
    write_track_file(track_file, result.records, scene.config.n_frames,
                     scene_hash);
    if (overlay) {
      const std::filesystem::path overlay_dir = pair.out_dir / "overlays";
      std::filesystem::create_directories(overlay_dir);
      for (int t = 0; t < static_cast<int>(overlays.size()); ++t) {
        write_ppm((overlay_dir / frame_name("overlay", t)).string(),
                  overlays[static_cast<std::size_t>(t)]);
      }
    }
    log_info("tracked " + pair.name + " -> " + track_file.string());
    written[static_cast<std::size_t>(index)] = std::move(track_file);
  });
  return written;
}

std::vector<EvalFrame> eval_frames_from(
    const Scene& scene, const std::vector<TrackRecord>& records) {
  std::vector<EvalFrame> frames(
      static_cast<std::size_t>(scene.config.n_frames));
  for (int t = 0; t < scene.config.n_frames; ++t) {
    EvalFrame& frame = frames[static_cast<std::size_t>(t)];
    for (const TruthObject& obj : scene.objects) {
      frame.ground_truth.push_back(
          {obj.id, obj.poses[static_cast<std::size_t>(t)].t, 1.0});
    }
  }
  for (const TrackRecord& r : records) {
    if (r.frame < 0 || r.frame >= scene.config.n_frames) {
      throw InputMismatchError("track record frame " +
                               std::to_string(r.frame) +
                               " outside the scene");
    }
    frames[static_cast<std::size_t>(r.frame)].predictions.push_back(
        {r.id, r.center, r.score});
  }
  return frames;
}

MetricsReport run_eval(const RunConfig& cfg, int jobs) {
  const std::vector<ScenePair> pairs = collect_eval_inputs(cfg);
  MetricsReport report;
  report.sequences.resize(pairs.size());
  std::vector<std::vector<EvalFrame>> per_sequence(pairs.size());
  parallel_for(static_cast<int>(pairs.size()), jobs, [&](int index) {
    const ScenePair& pair = pairs[static_cast<std::size_t>(index)];
    std::string scene_hash;
    const Scene scene = read_scene_file(pair.scene_file, &scene_hash);
    const TrackFileData tracks = read_track_file(pair.track_file);
    if (tracks.config_hash != scene_hash) {
      throw InputMismatchError("config hash mismatch between " +
                               pair.scene_file.string() + " and " +
                               pair.track_file.string());
    }
    if (tracks.n_frames != scene.config.n_frames) {
      throw InputMismatchError(
          "track file has " + std::to_string(tracks.n_frames) +
          " frames, scene has " + std::to_string(scene.config.n_frames));
    }
    std::vector<EvalFrame> frames = eval_frames_from(scene, tracks.records);
    SequenceReport& seq = report.sequences[static_cast<std::size_t>(index)];
    seq.name = pair.name;
    seq.summary = mota_and_recall(frames, kEvalRadius);
    seq.sweep = amota_amotp(frames);
    per_sequence[static_cast<std::size_t>(index)] = std::move(frames);
  });

  // Pool all sequences into one stream, offsetting ids so identities never
  // chain across sequence boundaries.
  std::vector<EvalFrame> pooled;
  for (std::size_t s = 0; s < per_sequence.size(); ++s) {
    const int offset = static_cast<int>(s) * kSequenceIdStride;
    for (EvalFrame frame : per_sequence[s]) {
      for (EvalBox& box : frame.ground_truth) box.id += offset;
      for (EvalBox& box : frame.predictions) box.id += offset;
      pooled.push_back(std::move(frame));
    }
  }
  report.aggregate = mota_and_recall(pooled, kEvalRadius);
  report.aggregate_sweep = amota_amotp(pooled);

  json j;
  j["aggregate"] = summary_to_json(report.aggregate, report.aggregate_sweep);
  j["sequences"] = json::array();
  for (const SequenceReport& seq : report.sequences) {
    json row = summary_to_json(seq.summary, seq.sweep);
    row["name"] = seq.name;
    j["sequences"].push_back(std::move(row));
  }
  std::filesystem::create_directories(cfg.output_dir);
  std::ofstream out(cfg.output_dir / "metrics.json");
  if (!out) {
    throw ConfigError("cannot write metrics.json under " +
                      cfg.output_dir.string());
  }
  out << j.dump(2) << "\n";
  return report;
}

std::string format_report(const MetricsReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(12) << "sequence" << std::right
      << std::setw(8) << "MOTA" << std::setw(8) << "AMOTA" << std::setw(8)
      << "AMOTP" << std::setw(8) << "recall" << std::setw(6) << "IDSW"
      << std::setw(6) << "FP" << std::setw(6) << "FN" << std::setw(6) << "GT"
      << "\n";
  auto row = [&out](const std::string& name, const SequenceSummary& s,
                    const SweepMetrics& sweep) {
    out << std::left << std::setw(12) << name << std::right << std::fixed
        << std::setprecision(3) << std::setw(8) << s.mota << std::setw(8)
        << sweep.amota << std::setw(8) << sweep.amotp << std::setw(8)
        << s.recall << std::setw(6) << s.idsw << std::setw(6) << s.fp
        << std::setw(6) << s.fn << std::setw(6) << s.gt << "\n";
  };
  for (const SequenceReport& seq : report.sequences) {
    row(seq.name, seq.summary, seq.sweep);
  }
  row("aggregate", report.aggregate, report.aggregate_sweep);
  return out.str();
}

std::vector<std::string> ablation_variants() {
  return {"full",        "no-L_embed",  "no-L_RGB",
          "no-L_perceptual", "no-schedule", "w_z=0"};
}

RunConfig apply_variant(const RunConfig& base, const std::string& variant) {
  RunConfig cfg = base;
  if (variant == "full") return cfg;
  if (variant == "no-L_embed") {
    cfg.fit.alpha_texture = 1.0;
    cfg.fit.alpha_shape = 1.0;
    cfg.fit.penalty_weight = 0.0;
    return cfg;
  }
  if (variant == "no-L_RGB") {
    cfg.fit.use_rgb_loss = false;
    return cfg;
  }
  if (variant == "no-L_perceptual") {
    cfg.fit.use_perceptual_loss = false;
    return cfg;
  }
  if (variant == "no-schedule") {
    cfg.fit.use_schedule = false;
    return cfg;
  }
  if (variant == "w_z=0") {
    cfg.tracker.affinity.w_latent = 0.0;
    return cfg;
  }
  throw ConfigError("unknown ablation variant '" + variant + "'");
}

namespace {

struct SuiteResult {
  std::vector<EvalFrame> pooled;
  std::vector<double> mask_ious;
  int idsw = 0;
};

// Generates, tracks and evaluates `n_scenes` in-memory scenes of the given
// scenario (per-scene seeds seed_base + i).
SuiteResult run_suite(const RunConfig& cfg, const ScenarioConfig& scenario,
                      std::uint64_t seed_base, bool want_mask_iou, int jobs) {
  SuiteResult result;
  std::vector<SuiteResult> per_scene(
      static_cast<std::size_t>(cfg.n_scenes));
  parallel_for(cfg.n_scenes, jobs, [&](int i) {
    ScenarioConfig sc = scenario;
    sc.seed = seed_base + static_cast<std::uint64_t>(i);
    const Scene scene = sample_scene(sc);
    Generator gen(sc.generator);
    const std::vector<Image> frames =
        render_sequence(scene, gen, cfg.fit.render);
    const std::vector<FrameDetections> dets = corrupt_detections(scene, sc);
    SceneTrackOutput tracked = track_scene(scene, dets, frames, cfg.fit,
                                           cfg.tracker, want_mask_iou);
    SuiteResult& mine = per_scene[static_cast<std::size_t>(i)];
    mine.pooled = eval_frames_from(scene, tracked.records);
    mine.mask_ious = std::move(tracked.mask_ious);
    mine.idsw = mota_and_recall(mine.pooled, kEvalRadius).idsw;
  });
  for (std::size_t s = 0; s < per_scene.size(); ++s) {
    const int offset = static_cast<int>(s) * kSequenceIdStride;
    for (EvalFrame frame : per_scene[s].pooled) {
      for (EvalBox& box : frame.ground_truth) box.id += offset;
      for (EvalBox& box : frame.predictions) box.id += offset;
      result.pooled.push_back(std::move(frame));
    }
    result.mask_ious.insert(result.mask_ious.end(),
                            per_scene[s].mask_ious.begin(),
                            per_scene[s].mask_ious.end());
    result.idsw += per_scene[s].idsw;
  }
  return result;
}

}  // namespace

std::vector<AblationRow> run_ablate(const RunConfig& cfg,
                                    const std::string& variant_filter,
                                    int jobs) {
  std::vector<std::string> variants = ablation_variants();
  if (!variant_filter.empty()) {
    if (std::find(variants.begin(), variants.end(), variant_filter) ==
        variants.end()) {
      throw ConfigError("unknown ablation variant '" + variant_filter + "'");
    }
    variants = {variant_filter};
  }

  ScenarioConfig crossing = cfg.scenario;
  crossing.trajectory = TrajectoryKind::kCrossingPair;
  crossing.n_objects = std::max(2, cfg.scenario.n_objects - cfg.scenario.n_objects % 2);
  crossing.sigma_pos = std::max(cfg.scenario.sigma_pos, kCrossingSigmaPos);

  std::vector<AblationRow> rows;
  for (const std::string& variant : variants) {
    const RunConfig vcfg = apply_variant(cfg, variant);
    const SuiteResult standard =
        run_suite(vcfg, vcfg.scenario, vcfg.seed, true, jobs);
    const SuiteResult cross =
        run_suite(vcfg, crossing, vcfg.seed + 1000, false, jobs);
    const SequenceSummary summary =
        mota_and_recall(standard.pooled, kEvalRadius);
    const SweepMetrics sweep = amota_amotp(standard.pooled);
    AblationRow row;
    row.variant = variant;
    row.amota = sweep.amota;
    row.mota = summary.mota;
    row.recall = summary.recall;
    row.idsw_crossing = cross.idsw;
    row.mask_iou_median = median(standard.mask_ious);
    rows.push_back(std::move(row));
    log_info("ablate " + variant + " done");
  }

  json j;
  j["variants"] = json::array();
  for (const AblationRow& row : rows) {
    j["variants"].push_back(json{{"variant", row.variant},
                                 {"amota", row.amota},
                                 {"mota", row.mota},
                                 {"recall", row.recall},
                                 {"idsw_crossing", row.idsw_crossing},
                                 {"mask_iou_median", row.mask_iou_median}});
  }
  std::filesystem::create_directories(cfg.output_dir);
  std::ofstream out(cfg.output_dir / "ablation.json");
  if (!out) {
    throw ConfigError("cannot write ablation.json under " +
                      cfg.output_dir.string());
  }
  out << j.dump(2) << "\n";
  return rows;
}

std::string format_ablation(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(18) << "variant" << std::right << std::setw(8)
      << "AMOTA" << std::setw(8) << "MOTA" << std::setw(8) << "recall"
      << std::setw(14) << "IDSW(cross)" << std::setw(10) << "mask-IoU"
      << "\n";
  for (const AblationRow& row : rows) {
    out << std::left << std::setw(18) << row.variant << std::right
        << std::fixed << std::setprecision(3) << std::setw(8) << row.amota
        << std::setw(8) << row.mota << std::setw(8) << row.recall
        << std::setw(14) << row.idsw_crossing << std::setw(10)
        << row.mask_iou_median << "\n";
  }
  return out.str();
}

namespace {

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InputMismatchError& e) {
    std::cerr << "input mismatch: " << e.what() << "\n";
    return kExitInputMismatch;
  } catch (const SchemaError& e) {
    std::cerr << "schema violation: " << e.what() << "\n";
    return kExitSchema;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

RunConfig config_for(const CommandOptions& options) {
  RunConfig cfg = load_run_config(options.config_path);
  if (options.seed_override.has_value()) cfg.seed = *options.seed_override;
  return cfg;
}

}  // namespace

int cmd_generate(const CommandOptions& options) {
  return guarded([&] {
    const RunConfig cfg = config_for(options);
    for (const GeneratedScene& gs : run_generate(cfg)) {
      std::cout << gs.scene_file.string() << "\n"
                << gs.detection_file.string() << "\n";
      if (!gs.frame_files.empty()) {
        std::cout << gs.frame_files.front().parent_path().string() << " ("
                  << gs.frame_files.size() << " frames)\n";
      }
    }
  });
}

int cmd_track(const CommandOptions& options) {
  return guarded([&] {
    const RunConfig cfg = config_for(options);
    for (const auto& path : run_track(cfg, options.overlay, options.jobs)) {
      std::cout << path.string() << "\n";
    }
  });
}

int cmd_eval(const CommandOptions& options) {
  return guarded([&] {
    const RunConfig cfg = config_for(options);
    const MetricsReport report = run_eval(cfg, options.jobs);
    std::cout << format_report(report);
  });
}

int cmd_ablate(const CommandOptions& options) {
  return guarded([&] {
    const RunConfig cfg = config_for(options);
    const std::vector<AblationRow> rows =
        run_ablate(cfg, options.variant, options.jobs);
    std::cout << format_ablation(rows);
  });
}

}  // namespace irt
