// Test-time optimization: the masked RGB loss, a deterministic multi-scale
// perceptual surrogate, Adam, latent shrinkage, and the staged fitting
// schedule that refines texture first, then shape and scale, then pose.

#pragma once

#include <Eigen/Dense>
#include <vector>

#include "irt/geometry.hpp"
#include "irt/image.hpp"
#include "irt/prior.hpp"
#include "irt/renderer.hpp"

namespace irt {

/// Which feature subset the perceptual surrogate compares.
enum class FitPhase { kTexture, kJoint };

struct FitConfig {
  // Schedule: steps_color steps on texture only, then steps_shape steps on
  // shape+scale with texture frozen; pose (t, omega) joins for the final
  // steps_pose_tail of those.
  int steps_color = 2;
  int steps_shape = 3;
  int steps_pose_tail = 2;
  bool use_schedule = true;  // false: every group active each step, no anneal

  double lr_texture = 0.05;
  double lr_shape = 0.05;
  double lr_translation = 0.1;
  double lr_rotation = 0.05;
  double lr_log_scale = 0.02;

  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  double perceptual_weight = 10.0;  // lambda on the perceptual term
  double alpha_texture = 0.7;       // shrinkage factors toward the mean code
  double alpha_shape = 0.7;

  /// Latent regularization: proximal shrinkage after each step (default) or
  /// an explicit quadratic penalty added to the loss.
  enum class Regularizer { kShrink, kPenalty };
  Regularizer regularizer = Regularizer::kShrink;
  double penalty_weight = 1e-3;  // only used in kPenalty mode

  int patch_width = 128;   // per-object render/loss window
  int patch_height = 96;

  RenderConfig render;  // base settings; the schedule anneals sharpness
  // Coarse-to-fine silhouettes: phase k of 3 renders at
  // sharpness * ramp^(k-2), reaching the base value in the final phase so
  // the optimum lines up with observations rendered at the base sharpness.
  double sharpness_ramp = 2.0;

  // Ablation switches.
  bool use_rgb_loss = true;
  bool use_perceptual_loss = true;
};

struct LossBreakdown {
  double rgb = 0.0;
  double perceptual = 0.0;
  double embed = 0.0;  // quadratic penalty (zero in shrinkage mode)
  double total = 0.0;
};

/// Mean squared masked residual: sum over pixels of ||(I - Ihat) * Mhat||^2
/// divided by the soft foreground count (sum of Mhat). Empty foreground -> 0.
double masked_rgb_loss(const Image& observed, const SceneComposite& rendered);

/// Deterministic perceptual surrogate: a 3-level pyramid where each level
/// contributes 4x4 box-averaged color and 3x3 horizontal/vertical luminance
/// gradients; the loss is the mean of the per-map mean squared distances.
/// kTexture compares only the finest-level color map.
double perceptual_loss(const Image& observed_patch, const Image& rendered_patch,
                       FitPhase phase);

/// dL/d(rendered image) and dL/d(foreground mask), full frame.
struct LossGrads {
  Image dimage;
  Image dforeground;
};

/// Full fitting loss over one frame: masked RGB plus the perceptual term
/// averaged over per-object windows, weighted by cfg.perceptual_weight.
/// When `grads` is non-null the exact reverse-mode image gradients are
/// written to it.
///
/// `background`, when known (synthetic scenes), completes the un-modeled
/// part of every pixel so the residual compares the observation against the
/// full scene render and vanishes exactly at the generative optimum; without
/// it the perceptual term falls back to observation completion and the RGB
/// term compares the bare composite.
LossBreakdown combined_loss(const Image& observed, const SceneComposite& rendered,
                            const std::vector<PatchRect>& windows,
                            FitPhase phase, const FitConfig& cfg,
                            LossGrads* grads = nullptr,
                            const Image* background = nullptr);

/// z <- alpha*z + (1-alpha)*z_avg. Throws if alpha is outside (0, 1].
Eigen::VectorXd shrink_latent(const Eigen::VectorXd& z,
                              const Eigen::VectorXd& z_avg, double alpha);

/// First/second moment buffers for one parameter group.
struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  int step = 0;
};

/// Standard bias-corrected Adam update, in place.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad,
               AdamState& state, double lr, const FitConfig& cfg);

struct FitResult {
  LatentPair latents;
  Pose pose;
  double scale = 1.0;
  LossBreakdown final_loss;
  std::vector<double> trace;  // total loss at each step plus the final eval
  bool culled = false;        // object never rendered (behind/off screen)
  bool skipped = false;       // a non-finite gradient froze this object
};

/// Runs the staged schedule on all objects jointly against one observed
/// frame. Per-object loss windows are fixed from the initial projected
/// centers. If every object is culled the inputs are returned unchanged
/// with culled flags set. `background` is forwarded to combined_loss.
std::vector<FitResult> fit_frame(const Image& observed,
                                 const std::vector<SceneObject>& inits,
                                 const Camera& cam, const Generator& gen,
                                 const FitConfig& cfg,
                                 const Image* background = nullptr);

/// Loss window for an object whose center projects to (u, v): a patch-sized
/// rectangle centered there, shifted to stay inside the frame.
PatchRect loss_window(double u, double v, const Camera& cam, int patch_width,
                      int patch_height);

}  // namespace irt
