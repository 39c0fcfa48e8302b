#include "irt/formats.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <utility>

#include "json.hpp"

namespace irt {

namespace {

using nlohmann::json;

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) {
    throw json::other_error::create(501, "expected an array of 3 numbers", &j);
  }
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json vecxd_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Eigen::VectorXd vecxd_from_json(const json& j) {
  if (!j.is_array()) {
    throw json::other_error::create(501, "expected a number array", &j);
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

// --- enum <-> string -------------------------------------------------------

std::string trajectory_name(TrajectoryKind k) {
  switch (k) {
    case TrajectoryKind::kConstantVelocity: return "constant-velocity";
    case TrajectoryKind::kConstantTurn: return "constant-turn";
    case TrajectoryKind::kCrossingPair: return "crossing-pair";
  }
  return "constant-velocity";
}

TrajectoryKind trajectory_from_name(const std::string& s) {
  if (s == "constant-velocity") return TrajectoryKind::kConstantVelocity;
  if (s == "constant-turn") return TrajectoryKind::kConstantTurn;
  if (s == "crossing-pair") return TrajectoryKind::kCrossingPair;
  throw ConfigError("unknown trajectory kind '" + s + "'");
}

std::string background_name(BackgroundKind k) {
  return k == BackgroundKind::kNoise ? "noise" : "flat-gray";
}

BackgroundKind background_from_name(const std::string& s) {
  if (s == "noise") return BackgroundKind::kNoise;
  if (s == "flat-gray") return BackgroundKind::kFlatGray;
  throw ConfigError("unknown background kind '" + s + "'");
}

std::string regularizer_name(FitConfig::Regularizer r) {
  return r == FitConfig::Regularizer::kShrink ? "shrink" : "penalty";
}

FitConfig::Regularizer regularizer_from_name(const std::string& s) {
  if (s == "shrink") return FitConfig::Regularizer::kShrink;
  if (s == "penalty") return FitConfig::Regularizer::kPenalty;
  throw ConfigError("unknown regularizer '" + s + "'");
}

std::string status_name(TrackStatus s) {
  return s == TrackStatus::kTracked ? "tracked" : "lost";
}

TrackStatus status_from_name(const std::string& s) {
  if (s == "tracked") return TrackStatus::kTracked;
  if (s == "lost") return TrackStatus::kLost;
  throw ConfigError("unknown track status '" + s + "'");
}

// --- section serializers ---------------------------------------------------

json camera_to_json(const Camera& cam) {
  return json{{"width", cam.width},   {"height", cam.height},
              {"fx", cam.fx},         {"fy", cam.fy},
              {"cx", cam.cx},         {"cy", cam.cy},
              {"position", vec3_to_json(cam.pose.t)},
              {"omega", vec3_to_json(cam.pose.omega)}};
}

void camera_from_json(const json& j, Camera* cam) {
  for (const auto& [key, value] : j.items()) {
    if (key == "width") cam->width = value.get<int>();
    else if (key == "height") cam->height = value.get<int>();
    else if (key == "fx") cam->fx = value.get<double>();
    else if (key == "fy") cam->fy = value.get<double>();
    else if (key == "cx") cam->cx = value.get<double>();
    else if (key == "cy") cam->cy = value.get<double>();
    else if (key == "position") cam->pose.t = vec3_from_json(value);
    else if (key == "omega") cam->pose.omega = vec3_from_json(value);
    else throw ConfigError("camera: unknown field '" + key + "'");
  }
}

json generator_to_json(const GeneratorConfig& g) {
  return json{{"shape_dim", g.shape_dim},
              {"texture_dim", g.texture_dim},
              {"subdivision", g.subdivision},
              {"seed", g.seed}};
}

void generator_from_json(const json& j, GeneratorConfig* g) {
  for (const auto& [key, value] : j.items()) {
    if (key == "shape_dim") g->shape_dim = value.get<int>();
    else if (key == "texture_dim") g->texture_dim = value.get<int>();
    else if (key == "subdivision") g->subdivision = value.get<int>();
    else if (key == "seed") g->seed = value.get<std::uint64_t>();
    else throw ConfigError("generator: unknown field '" + key + "'");
  }
}

json scenario_to_json(const ScenarioConfig& c) {
  return json{{"n_objects", c.n_objects},
              {"n_frames", c.n_frames},
              {"camera", camera_to_json(c.camera)},
              {"generator", generator_to_json(c.generator)},
              {"trajectory", trajectory_name(c.trajectory)},
              {"crossing_frame", c.crossing_frame},
              {"latent_shape_sigma", c.latent_shape_sigma},
              {"latent_texture_sigma", c.latent_texture_sigma},
              {"sigma_pos", c.sigma_pos},
              {"sigma_yaw", c.sigma_yaw},
              {"sigma_dims", c.sigma_dims},
              {"p_drop", c.p_drop},
              {"fp_rate", c.fp_rate},
              {"background", background_name(c.background)},
              {"seed", c.seed}};
}

void scenario_from_json(const json& j, ScenarioConfig* c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "n_objects") c->n_objects = value.get<int>();
    else if (key == "n_frames") c->n_frames = value.get<int>();
    else if (key == "camera") camera_from_json(value, &c->camera);
    else if (key == "generator") generator_from_json(value, &c->generator);
    else if (key == "trajectory")
      c->trajectory = trajectory_from_name(value.get<std::string>());
    else if (key == "crossing_frame") c->crossing_frame = value.get<int>();
    else if (key == "latent_shape_sigma")
      c->latent_shape_sigma = value.get<double>();
    else if (key == "latent_texture_sigma")
      c->latent_texture_sigma = value.get<double>();
    else if (key == "sigma_pos") c->sigma_pos = value.get<double>();
    else if (key == "sigma_yaw") c->sigma_yaw = value.get<double>();
    else if (key == "sigma_dims") c->sigma_dims = value.get<double>();
    else if (key == "p_drop") c->p_drop = value.get<double>();
    else if (key == "fp_rate") c->fp_rate = value.get<double>();
    else if (key == "background")
      c->background = background_from_name(value.get<std::string>());
    else if (key == "seed") c->seed = value.get<std::uint64_t>();
    else throw ConfigError("scenario: unknown field '" + key + "'");
  }
}

json fit_to_json(const FitConfig& f) {
  return json{{"steps_color", f.steps_color},
              {"steps_shape", f.steps_shape},
              {"steps_pose_tail", f.steps_pose_tail},
              {"use_schedule", f.use_schedule},
              {"lr_texture", f.lr_texture},
              {"lr_shape", f.lr_shape},
              {"lr_translation", f.lr_translation},
              {"lr_rotation", f.lr_rotation},
              {"lr_log_scale", f.lr_log_scale},
              {"adam_beta1", f.adam_beta1},
              {"adam_beta2", f.adam_beta2},
              {"adam_epsilon", f.adam_epsilon},
              {"perceptual_weight", f.perceptual_weight},
              {"alpha_texture", f.alpha_texture},
              {"alpha_shape", f.alpha_shape},
              {"regularizer", regularizer_name(f.regularizer)},
              {"penalty_weight", f.penalty_weight},
              {"patch_width", f.patch_width},
              {"patch_height", f.patch_height},
              {"sharpness", f.render.sharpness},
              {"light_direction", vec3_to_json(f.render.light_direction)},
              {"ambient", f.render.ambient},
              {"diffuse_sharpness", f.render.diffuse_sharpness},
              {"use_rgb_loss", f.use_rgb_loss},
              {"use_perceptual_loss", f.use_perceptual_loss}};
}

void fit_from_json(const json& j, FitConfig* f) {
  for (const auto& [key, value] : j.items()) {
    if (key == "steps_color") f->steps_color = value.get<int>();
    else if (key == "steps_shape") f->steps_shape = value.get<int>();
    else if (key == "steps_pose_tail") f->steps_pose_tail = value.get<int>();
    else if (key == "use_schedule") f->use_schedule = value.get<bool>();
    else if (key == "lr_texture") f->lr_texture = value.get<double>();
    else if (key == "lr_shape") f->lr_shape = value.get<double>();
    else if (key == "lr_translation") f->lr_translation = value.get<double>();
    else if (key == "lr_rotation") f->lr_rotation = value.get<double>();
    else if (key == "lr_log_scale") f->lr_log_scale = value.get<double>();
    else if (key == "adam_beta1") f->adam_beta1 = value.get<double>();
    else if (key == "adam_beta2") f->adam_beta2 = value.get<double>();
    else if (key == "adam_epsilon") f->adam_epsilon = value.get<double>();
    else if (key == "perceptual_weight")
      f->perceptual_weight = value.get<double>();
    else if (key == "alpha_texture") f->alpha_texture = value.get<double>();
    else if (key == "alpha_shape") f->alpha_shape = value.get<double>();
    else if (key == "regularizer")
      f->regularizer = regularizer_from_name(value.get<std::string>());
    else if (key == "penalty_weight") f->penalty_weight = value.get<double>();
    else if (key == "patch_width") f->patch_width = value.get<int>();
    else if (key == "patch_height") f->patch_height = value.get<int>();
    else if (key == "sharpness") f->render.sharpness = value.get<double>();
    else if (key == "light_direction")
      f->render.light_direction = vec3_from_json(value);
    else if (key == "ambient") f->render.ambient = value.get<double>();
    else if (key == "diffuse_sharpness")
      f->render.diffuse_sharpness = value.get<double>();
    else if (key == "use_rgb_loss") f->use_rgb_loss = value.get<bool>();
    else if (key == "use_perceptual_loss")
      f->use_perceptual_loss = value.get<bool>();
    else throw ConfigError("fit: unknown field '" + key + "'");
  }
}

json tracker_to_json(const TrackerConfig& t) {
  return json{{"w_iou", t.affinity.w_iou},
              {"w_latent", t.affinity.w_latent},
              {"w_center", t.affinity.w_center},
              {"gate_distance", t.affinity.gate_distance},
              {"min_affinity", t.affinity.min_affinity},
              {"n_life", t.affinity.n_life},
              {"observe_dims", t.observe_dims},
              {"min_hits", t.min_hits},
              {"q_pose", t.q_pose},
              {"q_velocity", t.q_velocity},
              {"r_position", t.r_position},
              {"r_scale", t.r_scale},
              {"r_yaw", t.r_yaw},
              {"r_dims", t.r_dims},
              {"p0", t.p0},
              {"p0_velocity", t.p0_velocity}};
}

void tracker_from_json(const json& j, TrackerConfig* t) {
  for (const auto& [key, value] : j.items()) {
    if (key == "w_iou") t->affinity.w_iou = value.get<double>();
    else if (key == "w_latent") t->affinity.w_latent = value.get<double>();
    else if (key == "w_center") t->affinity.w_center = value.get<double>();
    else if (key == "gate_distance")
      t->affinity.gate_distance = value.get<double>();
    else if (key == "min_affinity")
      t->affinity.min_affinity = value.get<double>();
    else if (key == "n_life") t->affinity.n_life = value.get<int>();
    else if (key == "observe_dims") t->observe_dims = value.get<bool>();
    else if (key == "min_hits") t->min_hits = value.get<int>();
    else if (key == "q_pose") t->q_pose = value.get<double>();
    else if (key == "q_velocity") t->q_velocity = value.get<double>();
    else if (key == "r_position") t->r_position = value.get<double>();
    else if (key == "r_scale") t->r_scale = value.get<double>();
    else if (key == "r_yaw") t->r_yaw = value.get<double>();
    else if (key == "r_dims") t->r_dims = value.get<double>();
    else if (key == "p0") t->p0 = value.get<double>();
    else if (key == "p0_velocity") t->p0_velocity = value.get<double>();
    else throw ConfigError("tracker: unknown field '" + key + "'");
  }
}

// --- JSONL plumbing --------------------------------------------------------

json header_record(const char* schema, const std::string& config_hash) {
  return json{{"schema", schema},
              {"version", kSchemaVersion},
              {"config_hash", config_hash}};
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) {
    throw ConfigError("cannot open for writing: " + path.string());
  }
  return out;
}

struct JsonlFile {
  std::string config_hash;
  std::vector<json> records;  // records[i] came from line i + 2
};

std::string location(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

JsonlFile read_jsonl(const std::filesystem::path& path, const char* schema) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open input: " + path.string());
  }
  std::string line;
  std::size_t line_no = 0;
  JsonlFile out;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& e) {
      throw SchemaError(location(path, line_no) + ": " + e.what());
    }
    if (!saw_header) {
      try {
        const std::string got = record.at("schema").get<std::string>();
        if (got != schema) {
          throw SchemaError(location(path, line_no) + ": /schema: expected '" +
                            schema + "', found '" + got + "'");
        }
        const int version = record.at("version").get<int>();
        if (version != kSchemaVersion) {
          throw SchemaError(location(path, line_no) +
                            ": /version: unsupported version " +
                            std::to_string(version));
        }
        out.config_hash = record.at("config_hash").get<std::string>();
      } catch (const json::exception& e) {
        throw SchemaError(location(path, line_no) + ": bad header: " +
                          e.what());
      }
      saw_header = true;
      continue;
    }
    out.records.push_back(std::move(record));
  }
  if (!saw_header) {
    throw SchemaError(path.string() + ": missing header record");
  }
  return out;
}

}  // namespace

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t hash = 14695981039346656037ull;
  for (unsigned char byte : bytes) {
    hash ^= byte;
    hash *= 1099511628211ull;
  }
  return hash;
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  RunConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "n_scenes") cfg.n_scenes = value.get<int>();
      else if (key == "output_dir")
        cfg.output_dir = value.get<std::string>();
      else if (key == "paths") {
        for (const auto& [pkey, pvalue] : value.items()) {
          if (pkey == "scene") cfg.scene_path = pvalue.get<std::string>();
          else if (pkey == "detections")
            cfg.detections_path = pvalue.get<std::string>();
          else if (pkey == "frames")
            cfg.frames_dir = pvalue.get<std::string>();
          else if (pkey == "tracks")
            cfg.tracks_path = pvalue.get<std::string>();
          else
            throw ConfigError("paths: unknown field '" + pkey + "'");
        }
      } else if (key == "scenario") {
        scenario_from_json(value, &cfg.scenario);
      } else if (key == "fit") {
        fit_from_json(value, &cfg.fit);
      } else if (key == "tracker") {
        tracker_from_json(value, &cfg.tracker);
      } else {
        throw ConfigError("unknown field '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (cfg.n_scenes < 1) throw ConfigError("n_scenes must be >= 1");
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config: " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  RunConfig cfg = parse_run_config(buffer.str());
  const std::filesystem::path base = path.parent_path();
  auto rebase = [&](std::filesystem::path& p) {
    if (!p.empty() && p.is_relative()) p = base / p;
  };
  rebase(cfg.output_dir);
  rebase(cfg.scene_path);
  rebase(cfg.detections_path);
  rebase(cfg.frames_dir);
  rebase(cfg.tracks_path);
  return cfg;
}

std::string config_hash_hex(const RunConfig& cfg) {
  const json j{{"seed", cfg.seed},
               {"n_scenes", cfg.n_scenes},
               {"scenario", scenario_to_json(cfg.scenario)},
               {"fit", fit_to_json(cfg.fit)},
               {"tracker", tracker_to_json(cfg.tracker)}};
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << fnv1a(j.dump());
  return hex.str();
}

void write_scene_file(const std::filesystem::path& path, const Scene& scene,
                      const std::string& config_hash) {
  std::ofstream out = open_for_write(path);
  out << header_record("irtrack/scene", config_hash).dump() << "\n";
  json objects = json::array();
  for (const TruthObject& obj : scene.objects) {
    objects.push_back(json{{"id", obj.id},
                           {"scale", obj.scale},
                           {"dims", vec3_to_json(obj.dims)},
                           {"z_shape", vecxd_to_json(obj.latents.shape)},
                           {"z_texture", vecxd_to_json(obj.latents.texture)}});
  }
  out << json{{"type", "meta"},
              {"scenario", scenario_to_json(scene.config)},
              {"objects", objects}}
             .dump()
      << "\n";
  for (int t = 0; t < scene.config.n_frames; ++t) {
    json poses = json::array();
    for (const TruthObject& obj : scene.objects) {
      poses.push_back(json{{"id", obj.id},
                           {"t", vec3_to_json(obj.poses[t].t)},
                           {"omega", vec3_to_json(obj.poses[t].omega)}});
    }
    out << json{{"type", "frame"}, {"frame", t}, {"poses", poses}}.dump()
        << "\n";
  }
}

Scene read_scene_file(const std::filesystem::path& path,
                      std::string* config_hash) {
  const JsonlFile file = read_jsonl(path, "irtrack/scene");
  if (config_hash != nullptr) *config_hash = file.config_hash;
  if (file.records.empty()) {
    throw SchemaError(path.string() + ": missing meta record");
  }
  Scene scene;
  try {
    const json& meta = file.records[0];
    if (meta.at("type").get<std::string>() != "meta") {
      throw SchemaError(location(path, 2) + ": /type: expected 'meta'");
    }
    scenario_from_json(meta.at("scenario"), &scene.config);
    scene.camera = scene.config.camera;
    for (const json& jobj : meta.at("objects")) {
      TruthObject obj;
      obj.id = jobj.at("id").get<int>();
      obj.scale = jobj.at("scale").get<double>();
      obj.dims = vec3_from_json(jobj.at("dims"));
      obj.latents.shape = vecxd_from_json(jobj.at("z_shape"));
      obj.latents.texture = vecxd_from_json(jobj.at("z_texture"));
      obj.poses.resize(scene.config.n_frames);
      scene.objects.push_back(std::move(obj));
    }
  } catch (const json::exception& e) {
    throw SchemaError(location(path, 2) + ": " + e.what());
  } catch (const ConfigError& e) {
    throw SchemaError(location(path, 2) + ": " + e.what());
  }

  const int n_frames = scene.config.n_frames;
  if (static_cast<int>(file.records.size()) != n_frames + 1) {
    throw SchemaError(path.string() + ": expected " +
                      std::to_string(n_frames) + " frame records, found " +
                      std::to_string(file.records.size() - 1));
  }
  for (int t = 0; t < n_frames; ++t) {
    const std::size_t line = static_cast<std::size_t>(t) + 3;
    try {
      const json& rec = file.records[static_cast<std::size_t>(t) + 1];
      if (rec.at("type").get<std::string>() != "frame" ||
          rec.at("frame").get<int>() != t) {
        throw SchemaError(location(path, line) +
                          ": expected frame record " + std::to_string(t));
      }
      const json& poses = rec.at("poses");
      if (poses.size() != scene.objects.size()) {
        throw SchemaError(location(path, line) +
                          ": /poses: expected one pose per object");
      }
      for (const json& jpose : poses) {
        const int id = jpose.at("id").get<int>();
        TruthObject* target = nullptr;
        for (TruthObject& obj : scene.objects) {
          if (obj.id == id) target = &obj;
        }
        if (target == nullptr) {
          throw SchemaError(location(path, line) + ": /poses: unknown id " +
                            std::to_string(id));
        }
        target->poses[t] = Pose{vec3_from_json(jpose.at("t")),
                                vec3_from_json(jpose.at("omega"))};
      }
    } catch (const json::exception& e) {
      throw SchemaError(location(path, line) + ": " + e.what());
    }
  }
  return scene;
}

void write_detection_file(const std::filesystem::path& path,
                          const std::vector<FrameDetections>& frames,
                          const std::string& config_hash) {
  std::ofstream out = open_for_write(path);
  out << header_record("irtrack/detections", config_hash).dump() << "\n";
  for (std::size_t t = 0; t < frames.size(); ++t) {
    json dets = json::array();
    for (const Detection& d : frames[t].detections) {
      dets.push_back(
          json{{"center", vec3_to_json(d.center)},
               {"yaw", d.yaw},
               {"dims", json::array({d.width, d.height, d.length})},
               {"score", d.score}});
    }
    out << json{{"frame", static_cast<int>(t)}, {"detections", dets}}.dump()
        << "\n";
  }
}

std::vector<FrameDetections> read_detection_file(
    const std::filesystem::path& path, std::string* config_hash) {
  const JsonlFile file = read_jsonl(path, "irtrack/detections");
  if (config_hash != nullptr) *config_hash = file.config_hash;
  std::vector<FrameDetections> frames(file.records.size());
  for (std::size_t i = 0; i < file.records.size(); ++i) {
    const std::size_t line = i + 2;
    try {
      const json& rec = file.records[i];
      if (rec.at("frame").get<int>() != static_cast<int>(i)) {
        throw SchemaError(location(path, line) +
                          ": /frame: expected " + std::to_string(i));
      }
      for (const json& jdet : rec.at("detections")) {
        Detection d;
        d.center = vec3_from_json(jdet.at("center"));
        d.yaw = jdet.at("yaw").get<double>();
        const Vec3 dims = vec3_from_json(jdet.at("dims"));
        d.width = dims.x();
        d.height = dims.y();
        d.length = dims.z();
        d.score = jdet.at("score").get<double>();
        frames[i].detections.push_back(d);
      }
    } catch (const json::exception& e) {
      throw SchemaError(location(path, line) + ": " + e.what());
    }
  }
  return frames;
}

void write_track_file(const std::filesystem::path& path,
                      const std::vector<TrackRecord>& records, int n_frames,
                      const std::string& config_hash) {
  std::ofstream out = open_for_write(path);
  out << header_record("irtrack/tracks", config_hash).dump() << "\n";
  out << json{{"type", "meta"}, {"n_frames", n_frames}}.dump() << "\n";
  std::vector<std::vector<const TrackRecord*>> by_frame(
      static_cast<std::size_t>(n_frames));
  for (const TrackRecord& r : records) {
    if (r.frame < 0 || r.frame >= n_frames) {
      throw InputMismatchError("track record frame " +
                               std::to_string(r.frame) +
                               " outside [0, " + std::to_string(n_frames) +
                               ")");
    }
    by_frame[static_cast<std::size_t>(r.frame)].push_back(&r);
  }
  for (int t = 0; t < n_frames; ++t) {
    auto& frame_records = by_frame[static_cast<std::size_t>(t)];
    std::stable_sort(frame_records.begin(), frame_records.end(),
                     [](const TrackRecord* a, const TrackRecord* b) {
                       return a->id < b->id;
                     });
    json tracks = json::array();
    for (const TrackRecord* r : frame_records) {
      tracks.push_back(
          json{{"id", r->id},
               {"center", vec3_to_json(r->center)},
               {"yaw", r->yaw},
               {"scale", r->scale},
               {"dims", json::array({r->width, r->height, r->length})},
               {"z_shape", vecxd_to_json(r->latents.shape)},
               {"z_texture", vecxd_to_json(r->latents.texture)},
               {"status", status_name(r->status)},
               {"score", r->score}});
    }
    out << json{{"frame", t}, {"tracks", tracks}}.dump() << "\n";
  }
}

TrackFileData read_track_file(const std::filesystem::path& path) {
  const JsonlFile file = read_jsonl(path, "irtrack/tracks");
  TrackFileData out;
  out.config_hash = file.config_hash;
  if (file.records.empty()) {
    throw SchemaError(path.string() + ": missing meta record");
  }
  try {
    const json& meta = file.records[0];
    if (meta.at("type").get<std::string>() != "meta") {
      throw SchemaError(location(path, 2) + ": /type: expected 'meta'");
    }
    out.n_frames = meta.at("n_frames").get<int>();
  } catch (const json::exception& e) {
    throw SchemaError(location(path, 2) + ": " + e.what());
  }
  if (static_cast<int>(file.records.size()) != out.n_frames + 1) {
    throw SchemaError(path.string() + ": expected " +
                      std::to_string(out.n_frames) +
                      " frame records, found " +
                      std::to_string(file.records.size() - 1));
  }
  for (int t = 0; t < out.n_frames; ++t) {
    const std::size_t line = static_cast<std::size_t>(t) + 3;
    try {
      const json& rec = file.records[static_cast<std::size_t>(t) + 1];
      if (rec.at("frame").get<int>() != t) {
        throw SchemaError(location(path, line) +
                          ": /frame: expected " + std::to_string(t));
      }
      for (const json& jtrack : rec.at("tracks")) {
        TrackRecord r;
        r.frame = t;
        r.id = jtrack.at("id").get<int>();
        r.center = vec3_from_json(jtrack.at("center"));
        r.yaw = jtrack.at("yaw").get<double>();
        r.scale = jtrack.at("scale").get<double>();
        const Vec3 dims = vec3_from_json(jtrack.at("dims"));
        r.width = dims.x();
        r.height = dims.y();
        r.length = dims.z();
        r.latents.shape = vecxd_from_json(jtrack.at("z_shape"));
        r.latents.texture = vecxd_from_json(jtrack.at("z_texture"));
        r.status = status_from_name(jtrack.at("status").get<std::string>());
        r.score = jtrack.at("score").get<double>();
        out.records.push_back(std::move(r));
      }
    } catch (const json::exception& e) {
      throw SchemaError(location(path, line) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw SchemaError(location(path, line) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace irt
