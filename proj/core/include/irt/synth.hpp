// Synthetic ground-truth oracle: samples latent-prior objects on simple
// dynamics, renders observation sequences with the same forward model used
// for fitting, and emits detector-style corrupted detections.

#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "irt/geometry.hpp"
#include "irt/image.hpp"
#include "irt/prior.hpp"
#include "irt/renderer.hpp"
#include "irt/tracker.hpp"

namespace irt {

enum class TrajectoryKind {
  kConstantVelocity,
  kConstantTurn,
  // Two lanes moving in opposite directions; each pair lines up behind the
  // camera axis at the crossing frame, producing a full occlusion event.
  kCrossingPair,
};

enum class BackgroundKind { kNoise, kFlatGray };

/// Tripod camera in a z-up world: positioned behind the origin at eye
/// height, looking along world +y with the image upright.
Camera default_camera(int width = 256, int height = 192, double focal = 200.0);

struct ScenarioConfig {
  int n_objects = 3;  // 1..10
  int n_frames = 20;
  Camera camera = default_camera();
  GeneratorConfig generator;
  TrajectoryKind trajectory = TrajectoryKind::kConstantVelocity;
  int crossing_frame = -1;  // -1 selects n_frames / 2
  double latent_shape_sigma = 0.3;
  double latent_texture_sigma = 0.8;
  // Detection corruption.
  double sigma_pos = 0.3;   // meters
  double sigma_yaw = 0.05;  // radians
  double sigma_dims = 0.1;  // meters
  double p_drop = 0.1;
  double fp_rate = 0.5;  // Poisson false positives per frame
  BackgroundKind background = BackgroundKind::kNoise;
  std::uint64_t seed = 1;
};

// Ground truth for one object over the whole sequence.
struct TruthObject {
  int id = 0;
  double scale = 1.0;
  Vec3 dims = Vec3::Zero();  // width, height, length in meters
  LatentPair latents;
  std::vector<Pose> poses;  // world pose per frame
};

struct Scene {
  ScenarioConfig config;
  Camera camera;
  std::vector<TruthObject> objects;
};

/// Box dimensions (width, height, length) implied by an object scale; the
/// largest dimension equals the scale exactly.
Vec3 dims_from_scale(double scale);

/// Throws std::invalid_argument on out-of-range fields.
void validate_scenario(const ScenarioConfig& cfg);

/// Samples ground truth deterministically from cfg.seed. Spawn poses are
/// rejection-sampled until every pair has zero bird's-eye-view overlap and
/// every object stays inside the camera frustum over the checked horizon;
/// throws std::runtime_error after 1000 failed attempts for one object.
Scene sample_scene(const ScenarioConfig& cfg);

/// Background plate: flat mid-gray, or a smooth seeded noise texture so the
/// fitting losses must respect mask support instead of matching a constant.
Image make_background(const ScenarioConfig& cfg, const Camera& cam);

/// Observation for one frame: composited objects over the background.
/// `foreground`, when non-null, receives the total coverage mask.
Image render_frame(const Scene& scene, const Generator& gen, int frame,
                   const RenderConfig& rc, const Image& background,
                   Image* foreground = nullptr);

/// All frames of the scene, rendered with a background from
/// make_background.
std::vector<Image> render_sequence(const Scene& scene, const Generator& gen,
                                   const RenderConfig& rc);

struct FrameDetections {
  std::vector<Detection> detections;
};

/// Detector simulation: per frame each ground-truth box is dropped with
/// p_drop, survivors get Gaussian noise on center/yaw/dims (dims clamped
/// to 0.1 m), and Poisson(fp_rate) false positives are placed uniformly in
/// the viewing frustum. Deterministic from noise_cfg.seed; the scene's
/// ground truth is never modified.
std::vector<FrameDetections> corrupt_detections(const Scene& scene,
                                                const ScenarioConfig& noise_cfg);

}  // namespace irt
