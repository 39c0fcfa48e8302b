#include "irt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "irt/rng.hpp"

namespace irt {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

// Spawn sampling region (world meters) and spawn geometry.
constexpr double kSpawnXMin = -4.0, kSpawnXMax = 4.0;
constexpr double kSpawnYMin = 6.0, kSpawnYMax = 14.0;
constexpr double kScaleMin = 3.6, kScaleMax = 4.8;
constexpr double kSpeedMin = 0.05, kSpeedMax = 0.2;  // meters per frame
constexpr double kTurnMin = 0.01, kTurnMax = 0.03;   // radians per frame
constexpr double kCrossSpeedMin = 0.08, kCrossSpeedMax = 0.15;
// Image-space margin (pixels) the projected center must keep from the
// border, and how many frames ahead containment is enforced.
constexpr double kSpawnMarginPx = 32.0;
constexpr int kContainmentHorizon = 64;
constexpr int kMaxSpawnAttempts = 1000;

double altitude_for_scale(double scale) {
  // Rest the canonical bottom face on the ground plane z = 0.
  return 0.18 * scale;
}

bool center_in_frustum(const Camera& cam, const Vec3& world, double margin) {
  const Mat4 world_to_cam = cam.pose.inverse_matrix();
  const Vec3 x_cam =
      world_to_cam.topLeftCorner<3, 3>() * world + world_to_cam.topRightCorner<3, 1>();
  const ProjectedPoint pp = project_point(cam, x_cam);
  if (pp.behind) return false;
  return pp.u >= margin && pp.u <= cam.width - margin && pp.v >= margin &&
         pp.v <= cam.height - margin;
}

// Unit-height boxes at z = 0 so only the bird's-eye-view footprint decides
// the overlap test.
Box3D bev_box(const Vec3& center, double yaw, const Vec3& dims) {
  Box3D b;
  b.center = Vec3(center.x(), center.y(), 0.0);
  b.yaw = yaw;
  b.width = dims.x();
  b.height = 1.0;
  b.length = dims.z();
  return b;
}

struct MotionSeed {
  Vec3 start = Vec3::Zero();
  double yaw = 0.0;
  double speed = 0.0;
  double turn_rate = 0.0;  // radians per frame; 0 = straight
};

std::vector<Pose> integrate_poses(const MotionSeed& seed, int n_frames) {
  std::vector<Pose> poses;
  poses.reserve(n_frames);
  Vec3 p = seed.start;
  double psi = seed.yaw;
  for (int t = 0; t < n_frames; ++t) {
    poses.push_back(Pose::from_yaw(wrap_angle(psi), p));
    p += seed.speed * Vec3(std::cos(psi), std::sin(psi), 0.0);
    psi += seed.turn_rate;
  }
  return poses;
}

bool trajectory_contained(const Camera& cam, const std::vector<Pose>& poses) {
  const int horizon =
      std::min<int>(static_cast<int>(poses.size()), kContainmentHorizon);
  for (int t = 0; t < horizon; ++t) {
    if (!center_in_frustum(cam, poses[t].t, kSpawnMarginPx)) return false;
  }
  return true;
}

bool overlaps_existing(const std::vector<TruthObject>& placed,
                       const Vec3& center, double yaw, const Vec3& dims) {
  const Box3D candidate = bev_box(center, yaw, dims);
  for (const TruthObject& other : placed) {
    const Box3D existing =
        bev_box(other.poses.front().t, other.poses.front().yaw(), other.dims);
    if (iou3d(candidate, existing) > 0.0) return true;
  }
  return false;
}

LatentPair sample_latents(const ScenarioConfig& cfg, Rng& rng) {
  LatentPair z;
  z.shape.resize(cfg.generator.shape_dim);
  for (int i = 0; i < z.shape.size(); ++i) {
    z.shape[i] = cfg.latent_shape_sigma * rng.normal();
  }
  const double norm = z.shape.norm();
  if (norm > 2.0) z.shape *= 2.0 / norm;
  z.texture.resize(cfg.generator.texture_dim);
  for (int i = 0; i < z.texture.size(); ++i) {
    z.texture[i] = cfg.latent_texture_sigma * rng.normal();
  }
  return z;
}

int poisson_draw(Rng& rng, double rate) {
  if (rate <= 0.0) return 0;
  const double limit = std::exp(-rate);
  int k = 0;
  double product = 1.0;
  do {
    ++k;
    product *= rng.uniform();
  } while (product > limit);
  return k - 1;
}

}  // namespace

Camera default_camera(int width, int height, double focal) {
  Camera cam;
  cam.fx = focal;
  cam.fy = focal;
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  cam.width = width;
  cam.height = height;
  // Rotate camera-down onto world-down and camera-forward onto world +y.
  cam.pose = Pose{Vec3(0.0, -8.0, 1.5), Vec3(-kPi / 2.0, 0.0, 0.0)};
  return cam;
}

Vec3 dims_from_scale(double scale) {
  return Vec3(0.42 * scale, 0.36 * scale, 1.0 * scale);
}

void validate_scenario(const ScenarioConfig& cfg) {
  if (cfg.n_objects < 1 || cfg.n_objects > 10) {
    throw std::invalid_argument("n_objects must be in [1, 10]");
  }
  if (cfg.n_frames < 1) {
    throw std::invalid_argument("n_frames must be >= 1");
  }
  validate_camera(cfg.camera);
  const bool probs_ok =
      cfg.p_drop >= 0.0 && cfg.p_drop <= 1.0 && cfg.fp_rate >= 0.0;
  if (!probs_ok) {
    throw std::invalid_argument("p_drop must be in [0,1] and fp_rate >= 0");
  }
  if (cfg.sigma_pos < 0.0 || cfg.sigma_yaw < 0.0 || cfg.sigma_dims < 0.0 ||
      cfg.latent_shape_sigma < 0.0 || cfg.latent_texture_sigma < 0.0) {
    throw std::invalid_argument("noise sigmas must be >= 0");
  }
  if (cfg.crossing_frame >= cfg.n_frames) {
    throw std::invalid_argument("crossing_frame must be < n_frames");
  }
}

Scene sample_scene(const ScenarioConfig& cfg) {
  validate_scenario(cfg);
  Scene scene;
  scene.config = cfg;
  scene.camera = cfg.camera;

  Rng root(cfg.seed);
  Rng obj_rng = root.fork(1);
  const int crossing =
      cfg.crossing_frame >= 0 ? cfg.crossing_frame : cfg.n_frames / 2;

  for (int i = 0; i < cfg.n_objects; ++i) {
    TruthObject obj;
    obj.id = i;
    bool placed = false;
    for (int attempt = 0; attempt < kMaxSpawnAttempts && !placed; ++attempt) {
      obj.scale = obj_rng.uniform(kScaleMin, kScaleMax);
      obj.dims = dims_from_scale(obj.scale);
      MotionSeed seed;
      if (cfg.trajectory == TrajectoryKind::kCrossingPair && i % 2 == 0) {
        // Near lane, driving +x; crosses the camera axis at `crossing`.
        seed.speed = obj_rng.uniform(kCrossSpeedMin, kCrossSpeedMax);
        seed.yaw = 0.0;
        seed.start = Vec3(-seed.speed * crossing,
                          8.0 + obj_rng.uniform(-0.4, 0.4),
                          altitude_for_scale(obj.scale));
      } else if (cfg.trajectory == TrajectoryKind::kCrossingPair) {
        // Far lane, driving -x.
        seed.speed = obj_rng.uniform(kCrossSpeedMin, kCrossSpeedMax);
        seed.yaw = kPi;
        seed.start = Vec3(seed.speed * crossing,
                          12.0 + obj_rng.uniform(-0.4, 0.4),
                          altitude_for_scale(obj.scale));
      } else {
        seed.start = Vec3(obj_rng.uniform(kSpawnXMin, kSpawnXMax),
                          obj_rng.uniform(kSpawnYMin, kSpawnYMax),
                          altitude_for_scale(obj.scale));
        seed.yaw = obj_rng.uniform(-kPi, kPi);
        seed.speed = obj_rng.uniform(kSpeedMin, kSpeedMax);
        if (cfg.trajectory == TrajectoryKind::kConstantTurn) {
          const double sign = obj_rng.uniform() < 0.5 ? -1.0 : 1.0;
          seed.turn_rate = sign * obj_rng.uniform(kTurnMin, kTurnMax);
        }
      }
      if (overlaps_existing(scene.objects, seed.start, seed.yaw, obj.dims)) {
        continue;
      }
      std::vector<Pose> poses = integrate_poses(seed, cfg.n_frames);
      if (!trajectory_contained(scene.camera, poses)) continue;
      obj.poses = std::move(poses);
      placed = true;
    }
    if (!placed) {
      throw std::runtime_error(
          "sample_scene: could not place object " + std::to_string(i) +
          " without overlap after 1000 attempts");
    }
    obj.latents = sample_latents(cfg, obj_rng);
    scene.objects.push_back(std::move(obj));
  }
  return scene;
}

Image make_background(const ScenarioConfig& cfg, const Camera& cam) {
  Image bg(cam.width, cam.height, 3, 0.5);
  if (cfg.background == BackgroundKind::kFlatGray) return bg;

  // Smooth value noise: a coarse random lattice upsampled bilinearly.
  Rng rng = Rng(cfg.seed).fork(2);
  const int cw = std::max(2, cam.width / 16);
  const int ch = std::max(2, cam.height / 16);
  Image coarse(cw, ch, 3);
  for (int y = 0; y < ch; ++y) {
    for (int x = 0; x < cw; ++x) {
      for (int c = 0; c < 3; ++c) coarse.at(x, y, c) = rng.uniform(0.25, 0.75);
    }
  }
  const double sx = static_cast<double>(cw) / cam.width;
  const double sy = static_cast<double>(ch) / cam.height;
  for (int y = 0; y < cam.height; ++y) {
    const double gy = std::clamp((y + 0.5) * sy - 0.5, 0.0, ch - 1.0);
    const int y0 = std::min(static_cast<int>(gy), ch - 2);
    const double fy = gy - y0;
    for (int x = 0; x < cam.width; ++x) {
      const double gx = std::clamp((x + 0.5) * sx - 0.5, 0.0, cw - 1.0);
      const int x0 = std::min(static_cast<int>(gx), cw - 2);
      const double fx = gx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = (1.0 - fx) * coarse.at(x0, y0, c) +
                           fx * coarse.at(x0 + 1, y0, c);
        const double bottom = (1.0 - fx) * coarse.at(x0, y0 + 1, c) +
                              fx * coarse.at(x0 + 1, y0 + 1, c);
        bg.at(x, y, c) = (1.0 - fy) * top + fy * bottom;
      }
    }
  }
  return bg;
}

Image render_frame(const Scene& scene, const Generator& gen, int frame,
                   const RenderConfig& rc, const Image& background,
                   Image* foreground) {
  if (frame < 0 || frame >= scene.config.n_frames) {
    throw std::invalid_argument("render_frame: frame out of range");
  }
  std::vector<SceneObject> objects;
  objects.reserve(scene.objects.size());
  for (const TruthObject& obj : scene.objects) {
    objects.push_back({obj.latents, obj.poses[frame], obj.scale});
  }
  SceneRender render = render_scene(gen, objects, scene.camera, rc);
  const SceneComposite& comp = render.composite();
  Image out(scene.camera.width, scene.camera.height, 3);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      const double bg_weight = 1.0 - comp.foreground.at(x, y);
      for (int c = 0; c < 3; ++c) {
        out.at(x, y, c) =
            comp.image.at(x, y, c) + bg_weight * background.at(x, y, c);
      }
    }
  }
  if (foreground != nullptr) *foreground = comp.foreground;
  return out;
}

std::vector<Image> render_sequence(const Scene& scene, const Generator& gen,
                                   const RenderConfig& rc) {
  const Image bg = make_background(scene.config, scene.camera);
  std::vector<Image> frames;
  frames.reserve(scene.config.n_frames);
  for (int t = 0; t < scene.config.n_frames; ++t) {
    frames.push_back(render_frame(scene, gen, t, rc, bg));
  }
  return frames;
}

std::vector<FrameDetections> corrupt_detections(
    const Scene& scene, const ScenarioConfig& noise_cfg) {
  validate_scenario(noise_cfg);
  Rng det_root = Rng(noise_cfg.seed).fork(3);
  const Camera& cam = scene.camera;
  std::vector<FrameDetections> out(scene.config.n_frames);
  for (int t = 0; t < scene.config.n_frames; ++t) {
    Rng rng = det_root.fork(static_cast<std::uint64_t>(t));
    for (const TruthObject& obj : scene.objects) {
      if (rng.uniform() < noise_cfg.p_drop) continue;
      Detection det;
      det.center = obj.poses[t].t +
                   Vec3(rng.normal(0.0, noise_cfg.sigma_pos),
                        rng.normal(0.0, noise_cfg.sigma_pos),
                        rng.normal(0.0, noise_cfg.sigma_pos));
      det.yaw = wrap_angle(obj.poses[t].yaw() +
                           rng.normal(0.0, noise_cfg.sigma_yaw));
      det.width = std::max(0.1, obj.dims.x() +
                                    rng.normal(0.0, noise_cfg.sigma_dims));
      det.height = std::max(0.1, obj.dims.y() +
                                     rng.normal(0.0, noise_cfg.sigma_dims));
      det.length = std::max(0.1, obj.dims.z() +
                                     rng.normal(0.0, noise_cfg.sigma_dims));
      det.score = rng.uniform(0.6, 1.0);
      out[t].detections.push_back(det);
    }
    const int n_fp = poisson_draw(rng, noise_cfg.fp_rate);
    for (int k = 0; k < n_fp; ++k) {
      // Uniform over image position and depth: backproject a pixel.
      const double u = rng.uniform(0.0, cam.width);
      const double v = rng.uniform(0.25 * cam.height, 0.75 * cam.height);
      const double depth = rng.uniform(5.0, 18.0);
      const Vec3 x_cam((u - cam.cx) / cam.fx * depth,
                       (v - cam.cy) / cam.fy * depth, depth);
      Detection det;
      det.center = cam.pose.rotation() * x_cam + cam.pose.t;
      const Vec3 dims = dims_from_scale(rng.uniform(kScaleMin, kScaleMax));
      det.yaw = rng.uniform(-kPi, kPi);
      det.width = dims.x();
      det.height = dims.y();
      det.length = dims.z();
      det.score = rng.uniform(0.1, 0.6);
      out[t].detections.push_back(det);
    }
  }
  return out;
}

}  // namespace irt
