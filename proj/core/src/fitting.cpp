#include "irt/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace irt {

namespace {

// ---- Perceptual feature plumbing ------------------------------------------
//
// All feature extractors are linear, so the reverse pass is the adjoint of
// each map applied to the upstream feature residual.

Image crop(const Image& img, const PatchRect& r) {
  Image out(r.width, r.height, img.channels());
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      for (int c = 0; c < img.channels(); ++c) {
        out.at(x, y, c) = img.at(r.x0 + x, r.y0 + y, c);
      }
    }
  }
  return out;
}

Image box4(const Image& img) {
  const int ow = img.width() / 4;
  const int oh = img.height() / 4;
  Image out(std::max(ow, 0), std::max(oh, 0), img.channels());
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      for (int c = 0; c < img.channels(); ++c) {
        double s = 0.0;
        for (int dy = 0; dy < 4; ++dy) {
          for (int dx = 0; dx < 4; ++dx) {
            s += img.at(4 * x + dx, 4 * y + dy, c);
          }
        }
        out.at(x, y, c) = s / 16.0;
      }
    }
  }
  return out;
}

void box4_adjoint(const Image& dout, Image* din) {
  for (int y = 0; y < dout.height(); ++y) {
    for (int x = 0; x < dout.width(); ++x) {
      for (int c = 0; c < dout.channels(); ++c) {
        const double g = dout.at(x, y, c) / 16.0;
        for (int dy = 0; dy < 4; ++dy) {
          for (int dx = 0; dx < 4; ++dx) {
            din->at(4 * x + dx, 4 * y + dy, c) += g;
          }
        }
      }
    }
  }
}

Image luminance(const Image& rgb) {
  Image out(rgb.width(), rgb.height(), 1);
  for (int y = 0; y < rgb.height(); ++y) {
    for (int x = 0; x < rgb.width(); ++x) {
      out.at(x, y) = (rgb.at(x, y, 0) + rgb.at(x, y, 1) + rgb.at(x, y, 2)) / 3.0;
    }
  }
  return out;
}

void luminance_adjoint(const Image& dlum, Image* drgb) {
  for (int y = 0; y < dlum.height(); ++y) {
    for (int x = 0; x < dlum.width(); ++x) {
      const double g = dlum.at(x, y) / 3.0;
      for (int c = 0; c < 3; ++c) drgb->at(x, y, c) += g;
    }
  }
}

// 3x3 Sobel on a single-channel image, valid region only, /8 normalization.
const double kSobelX[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
const double kSobelY[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};

Image sobel(const Image& lum, bool horizontal) {
  const int ow = lum.width() - 2;
  const int oh = lum.height() - 2;
  Image out(std::max(ow, 0), std::max(oh, 0), 1);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int dy = 0; dy < 3; ++dy) {
        for (int dx = 0; dx < 3; ++dx) {
          const double k = horizontal ? kSobelX[dy][dx] : kSobelY[dy][dx];
          s += k * lum.at(x + dx, y + dy);
        }
      }
      out.at(x, y) = s / 8.0;
    }
  }
  return out;
}

void sobel_adjoint(const Image& dout, bool horizontal, Image* dlum) {
  for (int y = 0; y < dout.height(); ++y) {
    for (int x = 0; x < dout.width(); ++x) {
      const double g = dout.at(x, y) / 8.0;
      for (int dy = 0; dy < 3; ++dy) {
        for (int dx = 0; dx < 3; ++dx) {
          const double k = horizontal ? kSobelX[dy][dx] : kSobelY[dy][dx];
          dlum->at(x + dx, y + dy) += k * g;
        }
      }
    }
  }
}

Image down2(const Image& img) {
  const int ow = img.width() / 2;
  const int oh = img.height() / 2;
  Image out(std::max(ow, 0), std::max(oh, 0), img.channels());
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      for (int c = 0; c < img.channels(); ++c) {
        out.at(x, y, c) = (img.at(2 * x, 2 * y, c) + img.at(2 * x + 1, 2 * y, c) +
                           img.at(2 * x, 2 * y + 1, c) +
                           img.at(2 * x + 1, 2 * y + 1, c)) /
                          4.0;
      }
    }
  }
  return out;
}

void down2_adjoint(const Image& dout, Image* din) {
  for (int y = 0; y < dout.height(); ++y) {
    for (int x = 0; x < dout.width(); ++x) {
      for (int c = 0; c < dout.channels(); ++c) {
        const double g = dout.at(x, y, c) / 4.0;
        din->at(2 * x, 2 * y, c) += g;
        din->at(2 * x + 1, 2 * y, c) += g;
        din->at(2 * x, 2 * y + 1, c) += g;
        din->at(2 * x + 1, 2 * y + 1, c) += g;
      }
    }
  }
}

// Mean squared distance between two equally-shaped maps; optionally
// accumulates weight * d(mse)/d(b) into db.
double map_mse(const Image& a, const Image& b, double weight, Image* db) {
  if (a.size() == 0) return 0.0;
  const double count = static_cast<double>(a.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    s += d * d;
    if (db) db->data()[i] += weight * 2.0 * (b.data()[i] - a.data()[i]) / count;
  }
  return s / count;
}

// Fixed map weights for the joint-phase surrogate. The edge maps carry the
// weight: they respond to where the silhouette sits rather than to region
// means, which makes them the counterbalance to the support-masked RGB term
// (blind to unclaimed pixels) and symmetric in the range direction.
// The joint phase is the uniform mean over its nine feature maps (three
// pyramid levels, each with box-averaged color plus the two luminance
// gradients), so every map carries the same weight.
constexpr double kJointMapCount = 9.0;
constexpr double kColorMapWeight = 1.0 / kJointMapCount;
constexpr double kEdgeMapWeight = 1.0 / kJointMapCount;
constexpr double kLevelWeights[3] = {1.0, 1.0, 1.0};

// One pyramid level: color means plus the two Sobel responses. Returns the
// weighted sum of the per-map MSEs; adjoints accumulate into dpatch_b.
double level_loss(const Image& pa, const Image& pb, bool color_only,
                  double w_color, double w_edge, Image* dpatch_b) {
  double total = 0.0;
  {
    const Image fa = box4(pa);
    const Image fb = box4(pb);
    Image dfb;
    if (dpatch_b) dfb = Image(fb.width(), fb.height(), fb.channels());
    total += w_color * map_mse(fa, fb, w_color, dpatch_b ? &dfb : nullptr);
    if (dpatch_b) box4_adjoint(dfb, dpatch_b);
  }
  if (color_only) return total;
  const Image la = luminance(pa);
  const Image lb = luminance(pb);
  Image dlb;
  if (dpatch_b) dlb = Image(lb.width(), lb.height(), 1);
  for (const bool horizontal : {true, false}) {
    const Image ga = sobel(la, horizontal);
    const Image gb = sobel(lb, horizontal);
    Image dgb;
    if (dpatch_b) dgb = Image(gb.width(), gb.height(), 1);
    total += w_edge * map_mse(ga, gb, w_edge, dpatch_b ? &dgb : nullptr);
    if (dpatch_b) sobel_adjoint(dgb, horizontal, &dlb);
  }
  if (dpatch_b) luminance_adjoint(dlb, dpatch_b);
  return total;
}

// Shared forward/backward for the perceptual surrogate. dpatch, if given,
// receives d(loss)/d(rendered patch).
double perceptual_impl(const Image& obs, const Image& rend, FitPhase phase,
                       Image* dpatch) {
  if (obs.width() != rend.width() || obs.height() != rend.height() ||
      obs.channels() != 3 || rend.channels() != 3) {
    throw std::invalid_argument("perceptual_loss: patch shapes differ");
  }
  if (phase == FitPhase::kTexture) {
    return level_loss(obs, rend, /*color_only=*/true, 1.0, 0.0, dpatch);
  }
  // Joint phase: three pyramid levels, three maps each, averaged uniformly.
  double total = 0.0;
  const Image a1 = down2(obs), b1 = down2(rend);
  const Image a2 = down2(a1), b2 = down2(b1);
  Image d1, d2;
  if (dpatch) {
    d1 = Image(b1.width(), b1.height(), 3);
    d2 = Image(b2.width(), b2.height(), 3);
  }
  total += level_loss(obs, rend, false, kLevelWeights[0] * kColorMapWeight,
                      kLevelWeights[0] * kEdgeMapWeight, dpatch);
  total += level_loss(a1, b1, false, kLevelWeights[1] * kColorMapWeight,
                      kLevelWeights[1] * kEdgeMapWeight,
                      dpatch ? &d1 : nullptr);
  total += level_loss(a2, b2, false, kLevelWeights[2] * kColorMapWeight,
                      kLevelWeights[2] * kEdgeMapWeight,
                      dpatch ? &d2 : nullptr);
  if (dpatch) {
    down2_adjoint(d2, &d1);
    down2_adjoint(d1, dpatch);
  }
  return total;
}

}  // namespace

double masked_rgb_loss(const Image& observed, const SceneComposite& rendered) {
  const Image& fg = rendered.foreground;
  const Image& img = rendered.image;
  if (observed.width() != img.width() || observed.height() != img.height() ||
      observed.channels() != 3) {
    throw std::invalid_argument("masked_rgb_loss: resolution mismatch");
  }
  double num = 0.0;
  double count = 0.0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double m = fg.at(x, y);
      if (m <= 0.0) continue;
      count += m;
      for (int c = 0; c < 3; ++c) {
        const double d = (observed.at(x, y, c) - img.at(x, y, c)) * m;
        num += d * d;
      }
    }
  }
  return count > 0.0 ? num / count : 0.0;
}

double perceptual_loss(const Image& observed_patch, const Image& rendered_patch,
                       FitPhase phase) {
  return perceptual_impl(observed_patch, rendered_patch, phase, nullptr);
}

LossBreakdown combined_loss(const Image& observed, const SceneComposite& rendered,
                            const std::vector<PatchRect>& windows,
                            FitPhase phase, const FitConfig& cfg,
                            LossGrads* grads, const Image* background) {
  const int W = rendered.image.width();
  const int H = rendered.image.height();
  if (background != nullptr &&
      (background->width() != W || background->height() != H ||
       background->channels() != 3)) {
    throw std::invalid_argument("combined_loss: background shape mismatch");
  }
  LossBreakdown out;
  if (grads) {
    grads->dimage = Image(W, H, 3);
    grads->dforeground = Image(W, H, 1);
  }

  if (cfg.use_rgb_loss) {
    // Forward and reverse of: sum(m^2 e^2) / sum(m), where the residual
    // e = I - (Ihat + (1 - m) * B) compares the observation against the
    // composite completed with the background model B (zero without one,
    // i.e. the bare premultiplied composite). The completion uses the same
    // association as the synthetic compositor, so an observation produced
    // from the same parameters cancels bitwise and a fit started at that
    // optimum sees exactly zero gradients instead of rounding dust, which a
    // normalized optimizer would amplify into full-size steps.
    auto residual = [&](int x, int y, int c) {
      if (background == nullptr) {
        return observed.at(x, y, c) - rendered.image.at(x, y, c);
      }
      const double completed =
          rendered.image.at(x, y, c) +
          (1.0 - rendered.foreground.at(x, y)) * background->at(x, y, c);
      return observed.at(x, y, c) - completed;
    };
    double num = 0.0;
    double count = 0.0;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const double m = rendered.foreground.at(x, y);
        if (m <= 0.0) continue;
        count += m;
        for (int c = 0; c < 3; ++c) {
          const double d = residual(x, y, c) * m;
          num += d * d;
        }
      }
    }
    if (count > 0.0) {
      out.rgb = num / count;
      if (grads) {
        for (int y = 0; y < H; ++y) {
          for (int x = 0; x < W; ++x) {
            const double m = rendered.foreground.at(x, y);
            if (m <= 0.0) continue;
            double dnum_dm = 0.0;
            for (int c = 0; c < 3; ++c) {
              const double e = residual(x, y, c);
              const double b =
                  background != nullptr ? background->at(x, y, c) : 0.0;
              // d(e*m)/dm = e + m * de/dm with de/dm = +b.
              dnum_dm += 2.0 * (e * m) * (e + m * b);
              grads->dimage.at(x, y, c) += -2.0 * m * m * e / count;
            }
            grads->dforeground.at(x, y) += (dnum_dm - out.rgb) / count;
          }
        }
      }
    }
  }

  if (cfg.use_perceptual_loss && !windows.empty()) {
    // Complete the un-modeled part of every patch so only pixels the render
    // claims drive the perceptual term: completed = Ihat + (1 - Mhat) * F,
    // with filler F = background model when known, the observation itself
    // otherwise.
    const Image& filler = background != nullptr ? *background : observed;
    const double per_window = 1.0 / static_cast<double>(windows.size());
    double acc = 0.0;
    for (const PatchRect& w : windows) {
      const Image obs = crop(observed, w);
      Image completed = crop(rendered.image, w);
      for (int y = 0; y < w.height; ++y) {
        for (int x = 0; x < w.width; ++x) {
          const double claim = 1.0 - rendered.foreground.at(w.x0 + x, w.y0 + y);
          for (int c = 0; c < 3; ++c) {
            completed.at(x, y, c) += claim * filler.at(w.x0 + x, w.y0 + y, c);
          }
        }
      }
      Image dpatch;
      if (grads) dpatch = Image(w.width, w.height, 3);
      acc += perceptual_impl(obs, completed, phase, grads ? &dpatch : nullptr);
      if (grads) {
        const double scale = cfg.perceptual_weight * per_window;
        for (int y = 0; y < w.height; ++y) {
          for (int x = 0; x < w.width; ++x) {
            double dfg = 0.0;
            for (int c = 0; c < 3; ++c) {
              const double g = scale * dpatch.at(x, y, c);
              grads->dimage.at(w.x0 + x, w.y0 + y, c) += g;
              dfg -= g * filler.at(w.x0 + x, w.y0 + y, c);
            }
            grads->dforeground.at(w.x0 + x, w.y0 + y) += dfg;
          }
        }
      }
    }
    out.perceptual = acc * per_window;
  }

  out.total = out.rgb + cfg.perceptual_weight * out.perceptual;
  return out;
}

Eigen::VectorXd shrink_latent(const Eigen::VectorXd& z,
                              const Eigen::VectorXd& z_avg, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("shrink_latent: alpha must be in (0, 1]");
  }
  if (z.size() != z_avg.size()) {
    throw std::invalid_argument("shrink_latent: size mismatch");
  }
  // Anchored form of alpha*z + (1-alpha)*z_avg: z == z_avg is an exact fixed
  // point rather than one up to rounding, so a converged fit stays put.
  return z_avg + alpha * (z - z_avg);
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad,
               AdamState& state, double lr, const FitConfig& cfg) {
  if (params.size() != grad.size()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  if (state.m.size() != params.size()) {
    state.m = Eigen::VectorXd::Zero(params.size());
    state.v = Eigen::VectorXd::Zero(params.size());
    state.step = 0;
  }
  state.step += 1;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  state.m = b1 * state.m + (1.0 - b1) * grad;
  state.v = b2 * state.v + (1.0 - b2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(b1, state.step);
  const double c2 = 1.0 - std::pow(b2, state.step);
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
  }
}

PatchRect loss_window(double u, double v, const Camera& cam, int patch_width,
                      int patch_height) {
  const int w = std::min(patch_width, cam.width);
  const int h = std::min(patch_height, cam.height);
  int x0 = static_cast<int>(std::lround(u)) - w / 2;
  int y0 = static_cast<int>(std::lround(v)) - h / 2;
  x0 = std::clamp(x0, 0, cam.width - w);
  y0 = std::clamp(y0, 0, cam.height - h);
  return {x0, y0, w, h};
}

namespace {

struct GroupStates {
  AdamState texture, shape, translation, rotation, log_scale;
};

bool finite(const Eigen::VectorXd& v) { return v.allFinite(); }
bool finite(const Vec3& v) { return v.allFinite(); }

}  // namespace

std::vector<FitResult> fit_frame(const Image& observed,
                                 const std::vector<SceneObject>& inits,
                                 const Camera& cam, const Generator& gen,
                                 const FitConfig& cfg,
                                 const Image* background) {
  if (!(cfg.sharpness_ramp > 0.0)) {
    throw std::invalid_argument("fit_frame: sharpness ramp must be positive");
  }
  if (inits.empty()) {
    throw std::invalid_argument("fit_frame: needs at least one object");
  }
  if (observed.width() != cam.width || observed.height() != cam.height ||
      observed.channels() != 3) {
    throw std::invalid_argument("fit_frame: observed frame shape mismatch");
  }
  if (cfg.steps_pose_tail > cfg.steps_shape) {
    throw std::invalid_argument("fit_frame: pose tail longer than shape stage");
  }

  const int P = static_cast<int>(inits.size());
  std::vector<SceneObject> objs = inits;
  std::vector<FitResult> results(P);
  for (int p = 0; p < P; ++p) {
    results[p].latents = objs[p].latents;
    results[p].pose = objs[p].pose;
    results[p].scale = objs[p].scale;
  }

  // Loss windows are pinned to the initial projected centers for the whole
  // schedule so the objective does not move under the optimizer.
  std::vector<PatchRect> windows(P);
  bool any_in_front = false;
  const Mat4 world_to_cam = cam.pose.inverse_matrix();
  for (int p = 0; p < P; ++p) {
    const Vec3 center_cam =
        (world_to_cam * objs[p].pose.t.homogeneous()).head<3>();
    const ProjectedPoint c = project_point(cam, center_cam);
    windows[p] = c.behind ? full_frame(cam)
                          : loss_window(c.u, c.v, cam, cfg.patch_width,
                                        cfg.patch_height);
    any_in_front = any_in_front || !c.behind;
  }
  if (!any_in_front) {
    for (auto& r : results) r.culled = true;
    return results;
  }

  std::vector<GroupStates> states(P);
  std::vector<char> frozen(P, 0);
  // The regularizer anchor is each object's incoming latent pair: for
  // track-driven fits that is the track's running average embedding, for
  // cold fits the template. A fit started at a consistent optimum stays
  // there instead of being dragged toward the origin.
  std::vector<LatentPair> anchors(P);
  for (int p = 0; p < P; ++p) anchors[p] = inits[p].latents;

  const int total_steps = cfg.steps_color + cfg.steps_shape;
  std::vector<double> trace;
  trace.reserve(total_steps + 1);
  LossBreakdown last;

  // One joint forward (and optional reverse) pass over all live objects.
  auto eval = [&](double sharpness, FitPhase phase,
                  std::vector<ObjectGrads>* out_grads) -> LossBreakdown {
    RenderConfig rc = cfg.render;
    rc.sharpness = sharpness;
    const SceneRender render = render_scene(gen, objs, cam, rc, &windows);
    std::vector<PatchRect> live;
    for (int p = 0; p < P; ++p) {
      if (!render.culled(p)) live.push_back(windows[p]);
    }
    LossGrads grads;
    LossBreakdown lb = combined_loss(observed, render.composite(), live, phase,
                                     cfg, out_grads ? &grads : nullptr,
                                     background);
    if (cfg.regularizer == FitConfig::Regularizer::kPenalty) {
      for (int p = 0; p < P; ++p) {
        lb.embed += cfg.penalty_weight *
                    ((objs[p].latents.shape - anchors[p].shape).squaredNorm() +
                     (objs[p].latents.texture - anchors[p].texture).squaredNorm());
      }
      lb.total += lb.embed;
    }
    if (out_grads) {
      *out_grads = render.backward(grads.dimage, grads.dforeground);
    }
    return lb;
  };

  for (int step = 0; step < total_steps; ++step) {
    // Stage selection: texture-only, then shape+scale, then +pose.
    int stage;
    if (!cfg.use_schedule) {
      stage = -1;
    } else if (step < cfg.steps_color) {
      stage = 0;
    } else if (step < cfg.steps_color + cfg.steps_shape - cfg.steps_pose_tail) {
      stage = 1;
    } else {
      stage = 2;
    }
    const bool opt_texture = stage == 0 || stage == -1;
    const bool opt_shape = stage == 1 || stage == 2 || stage == -1;
    const bool opt_pose = stage == 2 || stage == -1;
    const FitPhase phase =
        stage == 0 ? FitPhase::kTexture : FitPhase::kJoint;
    // Coarse-to-fine: soft silhouettes early, the base sharpness (matching
    // how observations are rendered) by the last phase.
    const double sharpness =
        stage < 0 ? cfg.render.sharpness
                  : cfg.render.sharpness * std::pow(cfg.sharpness_ramp, stage - 2);

    std::vector<ObjectGrads> og;
    last = eval(sharpness, phase, &og);
    trace.push_back(last.total);

    for (int p = 0; p < P; ++p) {
      if (og[p].culled) {
        results[p].culled = true;
        continue;
      }
      results[p].culled = false;
      if (frozen[p]) continue;

      Eigen::VectorXd g_tex = og[p].z_texture;
      Eigen::VectorXd g_shape = og[p].z_shape;
      Vec3 g_t = og[p].translation;
      Vec3 g_w = og[p].rotation;
      double g_s = og[p].log_scale;
      if (cfg.regularizer == FitConfig::Regularizer::kPenalty) {
        g_tex += 2.0 * cfg.penalty_weight *
                 (objs[p].latents.texture - anchors[p].texture);
        g_shape += 2.0 * cfg.penalty_weight *
                   (objs[p].latents.shape - anchors[p].shape);
      }
      const bool ok = finite(g_tex) && finite(g_shape) && finite(g_t) &&
                      finite(g_w) && std::isfinite(g_s);
      if (!ok) {
        frozen[p] = 1;
        results[p].skipped = true;
        continue;
      }

      // One optimizer over all groups with masked updates: during the joint
      // phase, groups that are not yet unmasked take a zero-learning-rate
      // step so their Adam moments track the gradient history. When a group
      // becomes active its second-moment estimate is already calibrated, so
      // components whose gradient has faded move proportionally instead of
      // taking a full-size cold-start step. Texture-phase gradients stay out
      // of the geometry moments: that loss ignores edges entirely, and its
      // pull on pose is pure appearance mismatch.
      if (opt_texture) {
        adam_step(objs[p].latents.texture, g_tex, states[p].texture,
                  cfg.lr_texture, cfg);
        if (cfg.regularizer == FitConfig::Regularizer::kShrink) {
          objs[p].latents.texture = shrink_latent(objs[p].latents.texture,
                                                  anchors[p].texture,
                                                  cfg.alpha_texture);
        }
      }
      const bool joint = phase == FitPhase::kJoint;
      if (opt_shape || joint) {
        adam_step(objs[p].latents.shape, g_shape, states[p].shape,
                  opt_shape ? cfg.lr_shape : 0.0, cfg);
        Eigen::VectorXd ls(1);
        const double log_scale_before = std::log(objs[p].scale);
        ls[0] = log_scale_before;
        Eigen::VectorXd gs(1);
        gs[0] = g_s;
        adam_step(ls, gs, states[p].log_scale,
                  opt_shape ? cfg.lr_log_scale : 0.0, cfg);
        // exp(log(s)) can land one ulp off s; only a real update may touch
        // the scale, so a zero-gradient fit leaves it bitwise intact.
        if (ls[0] != log_scale_before) objs[p].scale = std::exp(ls[0]);
        if (opt_shape && cfg.regularizer == FitConfig::Regularizer::kShrink) {
          objs[p].latents.shape = shrink_latent(objs[p].latents.shape,
                                                anchors[p].shape,
                                                cfg.alpha_shape);
        }
      }
      if (opt_pose || joint) {
        Eigen::VectorXd t = objs[p].pose.t;
        adam_step(t, Eigen::VectorXd(g_t), states[p].translation,
                  opt_pose ? cfg.lr_translation : 0.0, cfg);
        objs[p].pose.t = t;
        Eigen::VectorXd w = objs[p].pose.omega;
        adam_step(w, Eigen::VectorXd(g_w), states[p].rotation,
                  opt_pose ? cfg.lr_rotation : 0.0, cfg);
        objs[p].pose.omega = w;
      }
    }
  }

  // Final evaluation at the base sharpness, like the last stage.
  last = eval(cfg.render.sharpness, FitPhase::kJoint, nullptr);
  trace.push_back(last.total);

  for (int p = 0; p < P; ++p) {
    results[p].latents = objs[p].latents;
    results[p].pose = objs[p].pose;
    results[p].scale = objs[p].scale;
    results[p].final_loss = last;
    results[p].trace = trace;
  }
  return results;
}

}  // namespace irt
