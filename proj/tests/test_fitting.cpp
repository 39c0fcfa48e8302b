#include "irt/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "irt/renderer.hpp"

using namespace irt;

namespace {

Camera straight_camera(int width, int height, double f) {
  Camera cam;
  cam.fx = f;
  cam.fy = f;
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  cam.width = width;
  cam.height = height;
  return cam;  // identity pose: camera frame == world frame
}

// Ground-level camera looking down world +y, like the synthetic scenes use.
// Keeping the pose non-trivial here guards the world->camera handling of the
// per-object loss windows.
Camera ground_camera(int width, int height, double f) {
  Camera cam = straight_camera(width, height, f);
  cam.pose = Pose{Vec3(0.0, -8.0, 1.5), Vec3(-M_PI / 2.0, 0.0, 0.0)};
  return cam;
}

LatentPair patterned_latents(const Generator& gen, double shape_amp,
                             double texture_amp) {
  LatentPair z;
  z.shape = Eigen::VectorXd::Zero(gen.config().shape_dim);
  z.texture = Eigen::VectorXd::Zero(gen.config().texture_dim);
  for (int i = 0; i < z.shape.size(); ++i) {
    z.shape[i] = shape_amp * ((i % 2) ? -1.0 : 1.0);
  }
  for (int i = 0; i < z.texture.size(); ++i) {
    z.texture[i] = texture_amp * std::sin(0.8 * i + 0.3);
  }
  return z;
}

// Observed frame: composite over a flat mid-gray background.
Image compose_on_gray(const SceneComposite& comp, double gray = 0.5) {
  Image frame(comp.image.width(), comp.image.height(), 3);
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) {
      const double bg = (1.0 - comp.foreground.at(x, y)) * gray;
      for (int c = 0; c < 3; ++c) {
        frame.at(x, y, c) = comp.image.at(x, y, c) + bg;
      }
    }
  }
  return frame;
}

double mask_iou(const Image& a, const Image& b, double threshold = 0.5) {
  int inter = 0;
  int uni = 0;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      const bool pa = a.at(x, y) > threshold;
      const bool pb = b.at(x, y) > threshold;
      inter += pa && pb;
      uni += pa || pb;
    }
  }
  return uni > 0 ? static_cast<double>(inter) / uni : 1.0;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

void check_grad(const std::string& label, int index, double analytic,
                double fd) {
  CAPTURE(label);
  CAPTURE(index);
  const double tol = std::max(1e-7, 1e-3 * std::max(std::abs(analytic),
                                                    std::abs(fd)));
  CHECK(std::abs(analytic - fd) < tol);
}

}  // namespace

TEST_CASE("masked rgb loss matches hand-computed values") {
  const int W = 20, H = 10;
  SceneComposite comp;
  comp.image = Image(W, H, 3);
  comp.foreground = Image(W, H, 1);
  // Exactly 100 fully-masked pixels (top five rows).
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < W; ++x) comp.foreground.at(x, y) = 1.0;
  }
  Image observed(W, H, 3);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (y < 5) {
        observed.at(x, y, 0) = 0.5;  // residual 0.5 in one channel
      } else {
        for (int c = 0; c < 3; ++c) observed.at(x, y, c) = 7.0;  // unmasked
      }
    }
  }
  // 100 * (0.5)^2 / 100.
  CHECK(masked_rgb_loss(observed, comp) == doctest::Approx(0.25).epsilon(1e-12));

  // Pixels outside the mask never contribute, whatever they contain.
  Image wild = observed;
  for (int x = 0; x < W; ++x) wild.at(x, 9, 1) = -123.0;
  CHECK(masked_rgb_loss(wild, comp) == masked_rgb_loss(observed, comp));

  // Identical images -> 0 even under a nontrivial mask.
  SceneComposite same = comp;
  Image obs_same = same.image;
  CHECK(masked_rgb_loss(obs_same, same) == 0.0);

  // Empty mask -> 0 regardless of the image difference.
  comp.foreground.fill(0.0);
  CHECK(masked_rgb_loss(observed, comp) == 0.0);

  // One soft pixel: num = (0.3 * 0.5)^2, count = 0.5.
  SceneComposite soft;
  soft.image = Image(4, 4, 3);
  soft.foreground = Image(4, 4, 1);
  soft.foreground.at(1, 2) = 0.5;
  Image obs(4, 4, 3);
  obs.at(1, 2, 0) = 0.3;
  CHECK(masked_rgb_loss(obs, soft) == doctest::Approx(0.045).epsilon(1e-12));

  Image narrow(W - 1, H, 3);
  CHECK_THROWS_AS(masked_rgb_loss(narrow, comp), std::invalid_argument);
}

TEST_CASE("perceptual loss is symmetric, nonnegative, and zero at identity") {
  std::mt19937_64 rng(501);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Image a(16, 16, 3), b(16, 16, 3);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a.data()[i] = uni(rng);
      b.data()[i] = uni(rng);
    }
    for (const FitPhase phase : {FitPhase::kTexture, FitPhase::kJoint}) {
      CHECK(perceptual_loss(a, a, phase) == 0.0);
      const double ab = perceptual_loss(a, b, phase);
      CHECK(ab >= 0.0);
      CHECK(ab == perceptual_loss(b, a, phase));
    }
  }
  Image a(16, 16, 3), small(12, 16, 3), gray(16, 16, 1);
  CHECK_THROWS_AS(perceptual_loss(a, small, FitPhase::kJoint),
                  std::invalid_argument);
  CHECK_THROWS_AS(perceptual_loss(gray, gray, FitPhase::kJoint),
                  std::invalid_argument);
}

TEST_CASE("perceptual loss of a constant offset has a closed form") {
  // Constant offset d: every color-mean map differs by exactly d while all
  // gradient maps stay zero, so texture phase gives d^2 and joint phase
  // averages {d^2, 0, 0} over three levels -> d^2 / 3.
  const double d = 0.1;
  Image a(16, 16, 3), b(16, 16, 3);
  a.fill(0.4);
  b.fill(0.4 + d);
  CHECK(perceptual_loss(a, b, FitPhase::kTexture) ==
        doctest::Approx(d * d).epsilon(1e-12));
  CHECK(perceptual_loss(a, b, FitPhase::kJoint) ==
        doctest::Approx(d * d / 3.0).epsilon(1e-12));
}

TEST_CASE("texture phase sees only block color means") {
  // Period-4 stripes with a dyadic amplitude cancel exactly inside every
  // 4x4 box, so the texture-phase features match bit for bit; the joint
  // phase still sees the luminance gradients.
  Image a(16, 16, 3), b(16, 16, 3);
  a.fill(0.5);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      const double v = 0.5 + ((x % 4) < 2 ? 0.0625 : -0.0625);
      for (int c = 0; c < 3; ++c) b.at(x, y, c) = v;
    }
  }
  CHECK(perceptual_loss(a, b, FitPhase::kTexture) == 0.0);
  CHECK(perceptual_loss(a, b, FitPhase::kJoint) > 1e-6);
}

TEST_CASE("perceptual loss grows with noise amplitude") {
  std::mt19937_64 rng(502);
  std::uniform_real_distribution<double> uni(0.2, 0.8);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sigmas[3] = {0.02, 0.05, 0.1};
  for (const FitPhase phase : {FitPhase::kTexture, FitPhase::kJoint}) {
    double mean[3] = {0.0, 0.0, 0.0};
    for (int trial = 0; trial < 100; ++trial) {
      Image base(16, 16, 3);
      for (std::size_t i = 0; i < base.size(); ++i) base.data()[i] = uni(rng);
      for (int s = 0; s < 3; ++s) {
        Image noisy = base;
        for (std::size_t i = 0; i < noisy.size(); ++i) {
          noisy.data()[i] += sigmas[s] * normal(rng);
        }
        mean[s] += perceptual_loss(base, noisy, phase) / 100.0;
      }
    }
    CHECK(mean[0] < mean[1]);
    CHECK(mean[1] < mean[2]);
  }
}

TEST_CASE("combined loss reports an exact breakdown") {
  const int W = 16, H = 16;
  FitConfig cfg;

  // Flat hand case: rgb = 3 * 0.1^2 = 0.03; the render claims every pixel,
  // so the completed patch is the render itself and the joint perceptual
  // term is the constant-offset closed form 0.1^2 / 3.
  SceneComposite comp;
  comp.image = Image(W, H, 3);
  comp.foreground = Image(W, H, 1);
  comp.foreground.fill(1.0);
  Image observed(W, H, 3);
  observed.fill(0.1);
  const std::vector<PatchRect> windows = {PatchRect{0, 0, W, H}};
  const LossBreakdown lb =
      combined_loss(observed, comp, windows, FitPhase::kJoint, cfg);
  CHECK(lb.rgb == doctest::Approx(0.03).epsilon(1e-12));
  CHECK(lb.perceptual == doctest::Approx(0.01 / 3.0).epsilon(1e-12));
  CHECK(lb.embed == 0.0);
  CHECK(lb.total ==
        doctest::Approx(0.03 + cfg.perceptual_weight * 0.01 / 3.0)
            .epsilon(1e-12));

  // On a structured composite the parts must agree with the standalone
  // operations, including the observation-completed perceptual patches.
  SceneComposite tex;
  tex.image = Image(W, H, 3);
  tex.foreground = Image(W, H, 1);
  Image obs2(W, H, 3);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      tex.foreground.at(x, y) = 0.2 + 0.6 * std::abs(std::sin(0.4 * x + 0.7 * y));
      for (int c = 0; c < 3; ++c) {
        tex.image.at(x, y, c) = 0.3 + 0.2 * std::sin(0.3 * (x + 2 * c) + y);
        obs2.at(x, y, c) = 0.4 + 0.3 * std::cos(0.5 * x - 0.2 * y + c);
      }
    }
  }
  const PatchRect win{2, 1, 12, 12};
  const LossBreakdown lb2 =
      combined_loss(obs2, tex, {win}, FitPhase::kJoint, cfg);
  CHECK(lb2.rgb == masked_rgb_loss(obs2, tex));
  Image obs_patch(win.width, win.height, 3);
  Image completed(win.width, win.height, 3);
  for (int y = 0; y < win.height; ++y) {
    for (int x = 0; x < win.width; ++x) {
      const double claim = 1.0 - tex.foreground.at(win.x0 + x, win.y0 + y);
      for (int c = 0; c < 3; ++c) {
        const double o = obs2.at(win.x0 + x, win.y0 + y, c);
        obs_patch.at(x, y, c) = o;
        completed.at(x, y, c) =
            tex.image.at(win.x0 + x, win.y0 + y, c) + claim * o;
      }
    }
  }
  CHECK(lb2.perceptual ==
        doctest::Approx(perceptual_loss(obs_patch, completed, FitPhase::kJoint))
            .epsilon(1e-12));
  CHECK(lb2.total == doctest::Approx(lb2.rgb + 10.0 * lb2.perceptual)
                         .epsilon(1e-12));

  // Ablation switches zero out their component; no windows, no perceptual.
  FitConfig no_rgb = cfg;
  no_rgb.use_rgb_loss = false;
  CHECK(combined_loss(obs2, tex, {win}, FitPhase::kJoint, no_rgb).rgb == 0.0);
  FitConfig no_perc = cfg;
  no_perc.use_perceptual_loss = false;
  CHECK(combined_loss(obs2, tex, {win}, FitPhase::kJoint, no_perc).perceptual ==
        0.0);
  CHECK(combined_loss(obs2, tex, {}, FitPhase::kJoint, cfg).perceptual == 0.0);
}

TEST_CASE("combined loss image adjoints match finite differences") {
  const int W = 24, H = 16;
  SceneComposite comp;
  comp.image = Image(W, H, 3);
  comp.foreground = Image(W, H, 1);
  Image observed(W, H, 3);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      comp.foreground.at(x, y) = 0.25 + 0.6 * std::abs(std::sin(0.9 * x - 0.4 * y));
      for (int c = 0; c < 3; ++c) {
        comp.image.at(x, y, c) = 0.35 + 0.25 * std::sin(0.6 * x + 0.3 * y + c);
        observed.at(x, y, c) = 0.5 + 0.3 * std::cos(0.2 * x + 0.5 * y - c);
      }
    }
  }
  const std::vector<PatchRect> windows = {PatchRect{2, 1, 16, 12},
                                          PatchRect{6, 3, 16, 12}};
  FitConfig cfg;
  const double h = 1e-6;
  std::mt19937_64 rng(503);
  std::uniform_int_distribution<int> px(0, W - 1), py(0, H - 1), pc(0, 2);

  for (const FitPhase phase : {FitPhase::kTexture, FitPhase::kJoint}) {
    LossGrads grads;
    combined_loss(observed, comp, windows, phase, cfg, &grads);
    auto value = [&](const SceneComposite& c) {
      return combined_loss(observed, c, windows, phase, cfg).total;
    };
    for (int probe = 0; probe < 40; ++probe) {
      const int x = px(rng), y = py(rng), c = pc(rng);
      SceneComposite plus = comp, minus = comp;
      plus.image.at(x, y, c) += h;
      minus.image.at(x, y, c) -= h;
      const double fd = (value(plus) - value(minus)) / (2.0 * h);
      const double an = grads.dimage.at(x, y, c);
      CAPTURE(x);
      CAPTURE(y);
      CAPTURE(c);
      CHECK(std::abs(an - fd) <
            std::max(1e-9, 1e-5 * std::max(std::abs(an), std::abs(fd))));

      SceneComposite fplus = comp, fminus = comp;
      fplus.foreground.at(x, y) += h;
      fminus.foreground.at(x, y) -= h;
      const double ffd = (value(fplus) - value(fminus)) / (2.0 * h);
      const double fan = grads.dforeground.at(x, y);
      CHECK(std::abs(fan - ffd) <
            std::max(1e-9, 1e-5 * std::max(std::abs(fan), std::abs(ffd))));
    }
  }
}

TEST_CASE("combined loss parameter gradients match finite differences") {
  const Generator gen;
  const Camera cam = straight_camera(48, 36, 40.0);
  FitConfig cfg;
  cfg.patch_width = 32;
  cfg.patch_height = 24;

  for (int seed = 0; seed < 4; ++seed) {
    std::mt19937_64 rng(700 + seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);

    // Observation: a differently-posed, differently-painted object over
    // gray, rendered without windows so it does not depend on them.
    SceneObject truth;
    truth.latents = patterned_latents(gen, 0.0, 0.5 + 0.2 * uni(rng));
    truth.scale = 3.4;
    truth.pose = Pose::from_yaw(0.3 * uni(rng), Vec3(0.4 * uni(rng), 0.3, 9.0));
    const SceneRender truth_render = render_scene(gen, {truth}, cam, {});
    const Image observed = compose_on_gray(truth_render.composite());

    SceneObject fit;
    fit.latents = patterned_latents(gen, 0.0, 0.3);
    fit.latents.texture[2] += 0.2 * uni(rng);
    fit.scale = 3.2 + 0.3 * uni(rng);
    fit.pose = Pose{Vec3(0.3 * uni(rng), 0.35, 8.6),
                    Vec3(0.05 * uni(rng), 0.05 * uni(rng), 0.4 * uni(rng))};

    const ProjectedPoint center = project_point(cam, fit.pose.t);
    REQUIRE_FALSE(center.behind);
    const std::vector<PatchRect> windows = {loss_window(
        center.u, center.v, cam, cfg.patch_width, cfg.patch_height)};
    const FitPhase phase = (seed % 2) ? FitPhase::kJoint : FitPhase::kTexture;
    Image gray(cam.width, cam.height, 3);
    gray.fill(0.5);
    const Image* bg = (seed < 2) ? nullptr : &gray;  // both completion paths

    auto loss_at = [&](const SceneObject& obj) {
      const SceneRender r = render_scene(gen, {obj}, cam, cfg.render, &windows);
      return combined_loss(observed, r.composite(), windows, phase, cfg,
                           nullptr, bg)
          .total;
    };

    const SceneRender render = render_scene(gen, {fit}, cam, cfg.render, &windows);
    REQUIRE_FALSE(render.culled(0));
    LossGrads lg;
    combined_loss(observed, render.composite(), windows, phase, cfg, &lg, bg);
    const std::vector<ObjectGrads> og =
        render.backward(lg.dimage, lg.dforeground);

    // Step sizes per family: texture moves no geometry; shape and pose push
    // through sharpness-40 sigmoids whose curvature punishes larger steps.
    const double h_texture = 1e-4, h_shape = 3e-6, h_pose = 1e-6;

    for (int i = 0; i < fit.latents.texture.size(); ++i) {
      SceneObject plus = fit, minus = fit;
      plus.latents.texture[i] += h_texture;
      minus.latents.texture[i] -= h_texture;
      const double fd = (loss_at(plus) - loss_at(minus)) / (2.0 * h_texture);
      check_grad("texture", i, og[0].z_texture[i], fd);
    }
    for (int i = 0; i < fit.latents.shape.size(); ++i) {
      SceneObject plus = fit, minus = fit;
      plus.latents.shape[i] += h_shape;
      minus.latents.shape[i] -= h_shape;
      const double fd = (loss_at(plus) - loss_at(minus)) / (2.0 * h_shape);
      check_grad("shape", i, og[0].z_shape[i], fd);
    }
    for (int i = 0; i < 3; ++i) {
      SceneObject plus = fit, minus = fit;
      plus.pose.t[i] += h_pose;
      minus.pose.t[i] -= h_pose;
      const double fd = (loss_at(plus) - loss_at(minus)) / (2.0 * h_pose);
      check_grad("translation", i, og[0].translation[i], fd);

      SceneObject wplus = fit, wminus = fit;
      wplus.pose.omega[i] += h_pose;
      wminus.pose.omega[i] -= h_pose;
      const double wfd = (loss_at(wplus) - loss_at(wminus)) / (2.0 * h_pose);
      check_grad("rotation", i, og[0].rotation[i], wfd);
    }
    SceneObject splus = fit, sminus = fit;
    splus.scale = fit.scale * std::exp(h_pose);
    sminus.scale = fit.scale * std::exp(-h_pose);
    const double sfd = (loss_at(splus) - loss_at(sminus)) / (2.0 * h_pose);
    check_grad("log_scale", 0, og[0].log_scale, sfd);
  }
}

TEST_CASE("latent shrinkage contracts toward the average code") {
  Eigen::VectorXd z(2), avg(2);
  z << 1.0, -2.0;
  avg.setZero();
  const Eigen::VectorXd s = shrink_latent(z, avg, 0.7);
  CHECK(s[0] == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(s[1] == doctest::Approx(-1.4).epsilon(1e-15));

  CHECK((shrink_latent(z, z, 0.3) - z).norm() == 0.0);   // fixed point
  CHECK((shrink_latent(z, avg, 1.0) - z).norm() == 0.0);  // identity

  std::mt19937_64 rng(504);
  std::normal_distribution<double> normal(0.0, 2.0);
  std::uniform_real_distribution<double> alpha_dist(0.01, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd a(6), b(6);
    for (int i = 0; i < 6; ++i) {
      a[i] = normal(rng);
      b[i] = normal(rng);
    }
    const double alpha = alpha_dist(rng);
    CHECK(shrink_latent(a, b, alpha).norm() <=
          std::max(a.norm(), b.norm()) + 1e-12);
  }

  CHECK_THROWS_AS(shrink_latent(z, avg, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(shrink_latent(z, avg, 1.1), std::invalid_argument);
  CHECK_THROWS_AS(shrink_latent(z, avg, -0.2), std::invalid_argument);
  Eigen::VectorXd short_avg(1);
  CHECK_THROWS_AS(shrink_latent(z, short_avg, 0.5), std::invalid_argument);
}

TEST_CASE("adam matches the reference recurrence") {
  FitConfig cfg;

  // Zero gradient moves nothing, bit for bit.
  Eigen::VectorXd p(3);
  p << 3.7, -1.2, 0.0;
  const Eigen::VectorXd p0 = p;
  AdamState state;
  adam_step(p, Eigen::VectorXd::Zero(3), state, 0.1, cfg);
  CHECK((p - p0).norm() == 0.0);

  // First step with g = 1: bias correction cancels exactly, so the update
  // is -lr / (1 + eps).
  Eigen::VectorXd q(1);
  q << 0.0;
  AdamState qs;
  adam_step(q, Eigen::VectorXd::Ones(1), qs, 0.1, cfg);
  CHECK(q[0] == doctest::Approx(-0.1 / (1.0 + cfg.adam_epsilon))
                    .epsilon(1e-12));

  // Two steps against a hand-unrolled recurrence.
  Eigen::VectorXd r(1);
  r << 1.0;
  AdamState rs;
  Eigen::VectorXd g1(1), g2(1);
  g1 << 0.5;
  g2 << -0.25;
  adam_step(r, g1, rs, 0.1, cfg);
  adam_step(r, g2, rs, 0.1, cfg);
  double m = 0.0, v = 0.0, ref = 1.0;
  const double grads[2] = {0.5, -0.25};
  for (int step = 1; step <= 2; ++step) {
    const double g = grads[step - 1];
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
    v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g * g;
    const double mhat = m / (1.0 - std::pow(cfg.adam_beta1, step));
    const double vhat = v / (1.0 - std::pow(cfg.adam_beta2, step));
    ref -= 0.1 * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
  }
  CHECK(r[0] == doctest::Approx(ref).epsilon(1e-14));

  // A vector step equals independent scalar steps.
  Eigen::VectorXd vec(3), gvec(3);
  vec << 0.2, -0.4, 1.1;
  gvec << 0.3, -0.8, 0.05;
  Eigen::VectorXd expect = vec;
  AdamState vs;
  adam_step(vec, gvec, vs, 0.05, cfg);
  for (int i = 0; i < 3; ++i) {
    Eigen::VectorXd si(1), gi(1);
    si << expect[i];
    gi << gvec[i];
    AdamState ss;
    adam_step(si, gi, ss, 0.05, cfg);
    CHECK(vec[i] == si[0]);
  }

  // A state sized for another parameter group is reset, not misused.
  Eigen::VectorXd fresh(2), stale_p(2), g(2);
  fresh << 1.0, 2.0;
  stale_p = fresh;
  g << 0.1, -0.2;
  AdamState fresh_state, stale_state;
  stale_state.m = Eigen::VectorXd::Ones(5);
  stale_state.v = Eigen::VectorXd::Ones(5);
  stale_state.step = 9;
  adam_step(fresh, g, fresh_state, 0.1, cfg);
  adam_step(stale_p, g, stale_state, 0.1, cfg);
  CHECK((fresh - stale_p).norm() == 0.0);
  CHECK(stale_state.step == 1);

  Eigen::VectorXd bad(2);
  CHECK_THROWS_AS(adam_step(bad, Eigen::VectorXd::Zero(3), fresh_state, 0.1, cfg),
                  std::invalid_argument);
}

TEST_CASE("loss windows stay inside the frame") {
  Camera cam = straight_camera(100, 80, 50.0);

  const PatchRect centered = loss_window(50.0, 40.0, cam, 32, 24);
  CHECK(centered.x0 == 34);
  CHECK(centered.y0 == 28);
  CHECK(centered.width == 32);
  CHECK(centered.height == 24);

  CHECK(loss_window(50.6, 40.0, cam, 32, 24).x0 == 35);  // rounds the center

  CHECK(loss_window(3.0, 40.0, cam, 32, 24).x0 == 0);    // left clamp
  CHECK(loss_window(99.0, 40.0, cam, 32, 24).x0 == 68);  // right clamp
  CHECK(loss_window(50.0, 1.0, cam, 32, 24).y0 == 0);    // top clamp
  CHECK(loss_window(50.0, 79.0, cam, 32, 24).y0 == 56);  // bottom clamp

  const PatchRect full = loss_window(10.0, 10.0, cam, 200, 300);
  CHECK(full.x0 == 0);
  CHECK(full.y0 == 0);
  CHECK(full.width == 100);
  CHECK(full.height == 80);
}

TEST_CASE("fit frame respects the stage schedule") {
  const Generator gen;
  const Camera cam = straight_camera(48, 36, 40.0);

  SceneObject init;
  init.latents = patterned_latents(gen, 0.3, 0.4);
  init.scale = 3.5;
  init.pose = Pose{Vec3(0.1, 0.2, 9.0), Vec3(0.1, -0.2, 0.4)};

  SceneObject truth = init;
  truth.latents.texture = patterned_latents(gen, 0.0, -0.5).texture;
  truth.pose.t.x() += 0.2;
  const Image observed =
      compose_on_gray(render_scene(gen, {truth}, cam, {}).composite());

  FitConfig base;
  base.patch_width = 32;
  base.patch_height = 24;

  auto fit_with = [&](int color, int shape, int tail, bool schedule) {
    FitConfig cfg = base;
    cfg.steps_color = color;
    cfg.steps_shape = shape;
    cfg.steps_pose_tail = tail;
    cfg.use_schedule = schedule;
    return fit_frame(observed, {init}, cam, gen, cfg)[0];
  };

  // Color-only steps: texture moves, everything else is bit-identical.
  const FitResult color_only = fit_with(2, 0, 0, true);
  CHECK((color_only.latents.texture - init.latents.texture).norm() > 0.0);
  CHECK((color_only.latents.shape - init.latents.shape).norm() == 0.0);
  CHECK((color_only.pose.t - init.pose.t).norm() == 0.0);
  CHECK((color_only.pose.omega - init.pose.omega).norm() == 0.0);
  CHECK(color_only.scale == init.scale);
  CHECK(color_only.trace.size() == 3);  // two steps plus the final eval

  // Shape stage: shape and scale move, texture and pose stay frozen.
  const FitResult shape_only = fit_with(0, 1, 0, true);
  CHECK((shape_only.latents.shape - init.latents.shape).norm() > 0.0);
  CHECK(shape_only.scale != init.scale);
  CHECK((shape_only.latents.texture - init.latents.texture).norm() == 0.0);
  CHECK((shape_only.pose.t - init.pose.t).norm() == 0.0);
  CHECK((shape_only.pose.omega - init.pose.omega).norm() == 0.0);

  // Pose tail: translation and rotation join, texture still frozen.
  const FitResult with_pose = fit_with(0, 1, 1, true);
  CHECK((with_pose.pose.t - init.pose.t).norm() > 0.0);
  CHECK((with_pose.pose.omega - init.pose.omega).norm() > 0.0);
  CHECK((with_pose.latents.texture - init.latents.texture).norm() == 0.0);

  // Without the schedule every group is live from the first step.
  const FitResult free_run = fit_with(0, 1, 0, false);
  CHECK((free_run.latents.texture - init.latents.texture).norm() > 0.0);
  CHECK((free_run.pose.t - init.pose.t).norm() > 0.0);

  CHECK_THROWS_AS(fit_with(1, 0, 1, true), std::invalid_argument);
  CHECK_THROWS_AS(fit_frame(observed, {}, cam, gen, base),
                  std::invalid_argument);
  Image wrong(32, 36, 3);
  CHECK_THROWS_AS(fit_frame(wrong, {init}, cam, gen, base),
                  std::invalid_argument);
}

TEST_CASE("fit frame is a near fixed point at the ground truth") {
  const Generator gen;
  const Camera cam = ground_camera(96, 72, 80.0);

  SceneObject truth;
  truth.latents = patterned_latents(gen, 0.0, 0.3);
  truth.scale = 4.0;
  truth.pose = Pose::from_yaw(0.4, Vec3(0.0, 2.0, 0.7));
  const Image observed =
      compose_on_gray(render_scene(gen, {truth}, cam, {}).composite());

  FitConfig cfg;
  cfg.patch_width = 64;
  cfg.patch_height = 48;
  const FitResult res = fit_frame(observed, {truth}, cam, gen, cfg)[0];

  CHECK_FALSE(res.culled);
  CHECK_FALSE(res.skipped);
  CHECK((res.pose.t - truth.pose.t).norm() < 0.05);
  CHECK(std::abs(res.pose.yaw() - truth.pose.yaw()) < 0.035);
  CHECK(res.trace.size() == 6);  // five steps plus the final eval
  for (const double l : res.trace) CHECK(std::isfinite(l));
  CHECK(res.final_loss.embed == 0.0);  // shrinkage mode has no penalty term

  // Penalty mode reports the quadratic term and folds it into the total.
  FitConfig pen = cfg;
  pen.regularizer = FitConfig::Regularizer::kPenalty;
  pen.penalty_weight = 1e-3;
  const FitResult rp = fit_frame(observed, {truth}, cam, gen, pen)[0];
  const double expect_embed =
      pen.penalty_weight * (rp.latents.shape.squaredNorm() +
                            rp.latents.texture.squaredNorm());
  CHECK(rp.final_loss.embed == doctest::Approx(expect_embed).epsilon(1e-12));
  CHECK(rp.final_loss.total ==
        doctest::Approx(rp.final_loss.rgb +
                        pen.perceptual_weight * rp.final_loss.perceptual +
                        rp.final_loss.embed)
            .epsilon(1e-12));
}

TEST_CASE("fit frame recovers a laterally perturbed object") {
  const Generator gen;
  const Camera cam = ground_camera(96, 72, 80.0);
  FitConfig cfg;
  cfg.patch_width = 64;
  cfg.patch_height = 48;

  std::vector<double> t_err, yaw_err, iou;
  for (int seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(820 + seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);

    SceneObject truth;
    truth.latents = patterned_latents(gen, 0.0, 0.0);
    truth.scale = 3.8 + 0.3 * uni(rng);
    truth.pose =
        Pose::from_yaw(0.5 * uni(rng), Vec3(0.8 * uni(rng), 2.0 + uni(rng),
                                            0.18 * truth.scale));
    const SceneRender truth_render = render_scene(gen, {truth}, cam, {});
    const Image observed = compose_on_gray(truth_render.composite());

    SceneObject init = truth;
    init.pose.t += Vec3(0.3 * (seed % 2 ? 1.0 : -1.0), 0.05 * uni(rng), 0.0);
    init.pose.omega.z() += 0.1;
    const double init_t_err = (init.pose.t - truth.pose.t).norm();
    const double init_yaw_err = std::abs(init.pose.yaw() - truth.pose.yaw());

    const FitResult res = fit_frame(observed, {init}, cam, gen, cfg)[0];
    REQUIRE_FALSE(res.culled);
    const double final_t_err = (res.pose.t - truth.pose.t).norm();
    const double final_yaw_err = std::abs(res.pose.yaw() - truth.pose.yaw());
    CHECK(final_t_err < init_t_err);
    CHECK(final_yaw_err < init_yaw_err);
    t_err.push_back(final_t_err);
    yaw_err.push_back(final_yaw_err);

    SceneObject fitted;
    fitted.latents = res.latents;
    fitted.pose = res.pose;
    fitted.scale = res.scale;
    const SceneRender fit_render = render_scene(gen, {fitted}, cam, {});
    iou.push_back(mask_iou(fit_render.composite().foreground,
                           truth_render.composite().foreground));
  }
  CHECK(median(t_err) < 0.2);
  CHECK(median(yaw_err) < 5.0 * M_PI / 180.0);
  CHECK(median(iou) > 0.8);
}

TEST_CASE("fit frame flags objects the camera cannot see") {
  const Generator gen;
  const Camera cam = straight_camera(48, 36, 40.0);

  SceneObject behind;
  behind.latents = patterned_latents(gen, 0.2, 0.3);
  behind.scale = 3.0;
  behind.pose = Pose::from_translation(Vec3(0.0, 0.0, -5.0));

  Image observed(48, 36, 3);
  observed.fill(0.5);

  FitConfig cfg;
  cfg.patch_width = 32;
  cfg.patch_height = 24;

  // Everything behind the camera: inputs come back untouched and flagged.
  const std::vector<FitResult> all_behind =
      fit_frame(observed, {behind}, cam, gen, cfg);
  CHECK(all_behind[0].culled);
  CHECK(all_behind[0].trace.empty());
  CHECK((all_behind[0].latents.shape - behind.latents.shape).norm() == 0.0);
  CHECK((all_behind[0].latents.texture - behind.latents.texture).norm() == 0.0);
  CHECK((all_behind[0].pose.t - behind.pose.t).norm() == 0.0);
  CHECK(all_behind[0].scale == behind.scale);

  // Mixed visibility: the visible object fits, the hidden one is frozen.
  SceneObject front;
  front.latents = patterned_latents(gen, 0.0, 0.2);
  front.scale = 3.5;
  front.pose = Pose{Vec3(0.0, 0.3, 9.0), Vec3(0.0, 0.0, 0.3)};
  SceneObject truth = front;
  truth.latents.texture.setZero();
  const Image seen =
      compose_on_gray(render_scene(gen, {truth}, cam, {}).composite());

  const std::vector<FitResult> mixed =
      fit_frame(seen, {front, behind}, cam, gen, cfg);
  CHECK_FALSE(mixed[0].culled);
  CHECK((mixed[0].latents.texture - front.latents.texture).norm() > 0.0);
  CHECK(mixed[1].culled);
  CHECK((mixed[1].latents.texture - behind.latents.texture).norm() == 0.0);
  CHECK((mixed[1].pose.t - behind.pose.t).norm() == 0.0);
}
