#include "irt/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace irt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Smooth one-sided clamp used for the diffuse term: softplus(b*x)/b.
double soft_clamp(double x, double b) {
  const double t = b * x;
  if (t > 30.0) return x;
  return std::log1p(std::exp(t)) / b;
}

double soft_clamp_slope(double x, double b) { return sigmoid(b * x); }

struct Vec2d {
  double x, y;
};

// Signed distance from pixel p to a screen triangle: positive inside,
// negative outside, magnitude = distance to the nearest boundary point.
// Also reports which edge realizes the distance and the clamped parameter
// along it, so callers can differentiate through the nearest point.
struct SignedDistance {
  double sd;
  int edge;    // 0: v0->v1, 1: v1->v2, 2: v2->v0
  double t;    // clamped [0,1] parameter along that edge
};

SignedDistance signed_distance(double px, double py, const Vec2d v[3]) {
  double best = kInf;
  int best_edge = 0;
  double best_t = 0.0;
  bool positive[3];
  const double area2 = (v[1].x - v[0].x) * (v[2].y - v[0].y) -
                       (v[1].y - v[0].y) * (v[2].x - v[0].x);
  for (int e = 0; e < 3; ++e) {
    const Vec2d& a = v[e];
    const Vec2d& b = v[(e + 1) % 3];
    const double ex = b.x - a.x;
    const double ey = b.y - a.y;
    const double len2 = ex * ex + ey * ey;
    double t = 0.0;
    if (len2 > 0.0) {
      t = std::clamp(((px - a.x) * ex + (py - a.y) * ey) / len2, 0.0, 1.0);
    }
    const double dx = px - (a.x + t * ex);
    const double dy = py - (a.y + t * ey);
    const double d = std::sqrt(dx * dx + dy * dy);
    if (d < best) {
      best = d;
      best_edge = e;
      best_t = t;
    }
    const double cross = ex * (py - a.y) - ey * (px - a.x);
    positive[e] = (cross * area2) >= 0.0;
  }
  const bool inside = positive[0] && positive[1] && positive[2];
  return {inside ? best : -best, best_edge, best_t};
}

// Gradient of the signed distance w.r.t. the two endpoints of the nearest
// edge (constant elsewhere). `scale` premultiplies the result.
void signed_distance_backward(double px, double py, const Vec2d v[3],
                              const SignedDistance& sd, double scale,
                              Vec2d dverts[3]) {
  const int e = sd.edge;
  const Vec2d& a = v[e];
  const Vec2d& b = v[(e + 1) % 3];
  const double qx = a.x + sd.t * (b.x - a.x);
  const double qy = a.y + sd.t * (b.y - a.y);
  double dx = px - qx;
  double dy = py - qy;
  const double dist = std::sqrt(dx * dx + dy * dy);
  if (dist < 1e-12) return;  // on the boundary; subgradient zero
  dx /= dist;
  dy /= dist;
  const double sign = sd.sd >= 0.0 ? 1.0 : -1.0;
  // d dist / d q = -(p-q)/dist, and q moves with the endpoints by (1-t), t.
  const double ga = -scale * sign * (1.0 - sd.t);
  const double gb = -scale * sign * sd.t;
  dverts[e].x += ga * dx;
  dverts[e].y += ga * dy;
  dverts[(e + 1) % 3].x += gb * dx;
  dverts[(e + 1) % 3].y += gb * dy;
}

// Screen-space barycentric coordinates of a pixel.
struct Barycentric {
  double w[3];
  double denom;
};

bool barycentric(double px, double py, const Vec2d v[3], Barycentric* out) {
  const double denom = (v[1].y - v[2].y) * (v[0].x - v[2].x) +
                       (v[2].x - v[1].x) * (v[0].y - v[2].y);
  if (std::abs(denom) < 1e-12) return false;
  const double w0 = ((v[1].y - v[2].y) * (px - v[2].x) +
                     (v[2].x - v[1].x) * (py - v[2].y)) /
                    denom;
  const double w1 = ((v[2].y - v[0].y) * (px - v[2].x) +
                     (v[0].x - v[2].x) * (py - v[2].y)) /
                    denom;
  out->w[0] = w0;
  out->w[1] = w1;
  out->w[2] = 1.0 - w0 - w1;
  out->denom = denom;
  return true;
}

// Scatters dL/dw0, dL/dw1 (after eliminating w2 = 1 - w0 - w1) back to the
// six screen coordinates.
void barycentric_backward(double px, double py, const Vec2d v[3],
                          const Barycentric& bc, double dw0, double dw1,
                          Vec2d dverts[3]) {
  const double denom = bc.denom;

  // Partials of E0, E1 and denom w.r.t. each coordinate.
  // E0 = (v1.y - v2.y)(px - v2.x) + (v2.x - v1.x)(py - v2.y)
  // E1 = (v2.y - v0.y)(px - v2.x) + (v0.x - v2.x)(py - v2.y)
  // denom = (v1.y - v2.y)(v0.x - v2.x) + (v2.x - v1.x)(v0.y - v2.y)
  const double dE0[6] = {
      0.0,                                    // d/d v0.x
      0.0,                                    // d/d v0.y
      -(py - v[2].y),                         // d/d v1.x
      (px - v[2].x),                          // d/d v1.y
      -(v[1].y - v[2].y) + (py - v[2].y),     // d/d v2.x
      -(px - v[2].x) - (v[2].x - v[1].x)};    // d/d v2.y
  const double dE1[6] = {
      (py - v[2].y),                          // d/d v0.x
      -(px - v[2].x),                         // d/d v0.y
      0.0,                                    // d/d v1.x
      0.0,                                    // d/d v1.y
      -(v[2].y - v[0].y) - (py - v[2].y),     // d/d v2.x
      (px - v[2].x) - (v[0].x - v[2].x)};     // d/d v2.y
  const double dDen[6] = {
      (v[1].y - v[2].y),                      // d/d v0.x
      (v[2].x - v[1].x),                      // d/d v0.y
      -(v[0].y - v[2].y),                     // d/d v1.x
      (v[0].x - v[2].x),                      // d/d v1.y
      -(v[1].y - v[2].y) + (v[0].y - v[2].y), // d/d v2.x
      -(v[0].x - v[2].x) - (v[2].x - v[1].x)}; // d/d v2.y

  for (int i = 0; i < 6; ++i) {
    const double g0 = (dE0[i] - bc.w[0] * dDen[i]) / denom;
    const double g1 = (dE1[i] - bc.w[1] * dDen[i]) / denom;
    const double g = dw0 * g0 + dw1 * g1;
    if (i % 2 == 0) {
      dverts[i / 2].x += g;
    } else {
      dverts[i / 2].y += g;
    }
  }
}

constexpr int kAttribChannels = 4;  // shade + rgb albedo

// Per-pixel raster records retained for the reverse pass.
struct PixelTape {
  double prod = 1.0;    // product of the non-zero (1 - D_j) factors
  int zero_count = 0;   // number of exactly-zero factors
  int winner = -1;      // containing front face with smallest depth
  double winner_depth = kInf;
  int rim_face = -1;    // nearest front face when not contained
  double rim_sd = -kInf;
  int rim_edge = 0;
  double rim_t = 0.0;
};

struct ObjectTape {
  bool culled = true;
  PatchRect roi;
  double distance = kInf;

  TriangleMesh mesh;       // canonical (deformed) vertices + template normals
  VertexColors colors;
  Mat3 R_world;            // R(omega)
  Mat3 Rc;                 // camera rotation (camera->world)
  Mat3 Jl;                 // left Jacobian at omega
  double scale = 1.0;

  std::vector<Vec3> v_cam;
  std::vector<double> su, sv, sz;
  std::vector<double> shade;
  std::vector<double> dclamp;  // diffuse clamp slope at each vertex
  std::vector<Vec3> n_cam;
  std::vector<double> ndotl;
  std::vector<char> front;
  std::vector<PixelTape> px;
};

int roi_index(const PatchRect& roi, int x, int y) {
  return (y - roi.y0) * roi.width + (x - roi.x0);
}

// Rasterizes pre-transformed vertex data into `out` and (optionally) fills
// the per-pixel tape. Assumes every vertex is strictly in front of the
// near plane.
void raster_core(const std::vector<Vec3>& v_cam, const std::vector<double>& su,
                 const std::vector<double>& sv, const std::vector<double>& sz,
                 const std::vector<double>& shade,
                 const std::vector<Vec3>& albedo,
                 const std::vector<Eigen::Vector3i>& faces,
                 const std::vector<char>& front, const PatchRect& roi,
                 const RenderConfig& cfg, ObjectRender* out,
                 std::vector<PixelTape>* tape) {
  const double kappa = cfg.sharpness;
  const double margin = 40.0 / kappa + 1.0;
  const int npx = roi.width * roi.height;
  std::vector<PixelTape> local;
  std::vector<PixelTape>& px = tape ? *tape : local;
  px.assign(npx, PixelTape{});

  for (std::size_t f = 0; f < faces.size(); ++f) {
    const int i0 = faces[f][0], i1 = faces[f][1], i2 = faces[f][2];
    const Vec2d verts[3] = {{su[i0], sv[i0]}, {su[i1], sv[i1]}, {su[i2], sv[i2]}};
    const int xlo = std::max(roi.x0, static_cast<int>(std::floor(
                                         std::min({verts[0].x, verts[1].x, verts[2].x}) - margin)));
    const int xhi = std::min(roi.x0 + roi.width - 1,
                             static_cast<int>(std::ceil(
                                 std::max({verts[0].x, verts[1].x, verts[2].x}) + margin)));
    const int ylo = std::max(roi.y0, static_cast<int>(std::floor(
                                         std::min({verts[0].y, verts[1].y, verts[2].y}) - margin)));
    const int yhi = std::min(roi.y0 + roi.height - 1,
                             static_cast<int>(std::ceil(
                                 std::max({verts[0].y, verts[1].y, verts[2].y}) + margin)));
    const bool is_front = front[f] != 0;
    for (int y = ylo; y <= yhi; ++y) {
      for (int x = xlo; x <= xhi; ++x) {
        const SignedDistance sd = signed_distance(x + 0.0, y + 0.0, verts);
        const double d = sigmoid(kappa * sd.sd);
        PixelTape& t = px[roi_index(roi, x, y)];
        const double factor = 1.0 - d;
        if (factor == 0.0) {
          ++t.zero_count;
        } else {
          t.prod *= factor;
        }
        if (!is_front) continue;
        if (sd.sd >= 0.0) {
          Barycentric bc;
          if (!barycentric(x + 0.0, y + 0.0, verts, &bc)) continue;
          const double rho = bc.w[0] / sz[i0] + bc.w[1] / sz[i1] + bc.w[2] / sz[i2];
          if (rho <= 0.0) continue;
          const double depth = 1.0 / rho;
          if (depth < t.winner_depth) {
            t.winner_depth = depth;
            t.winner = static_cast<int>(f);
          }
        } else if (sd.sd > t.rim_sd) {
          t.rim_sd = sd.sd;
          t.rim_face = static_cast<int>(f);
          t.rim_edge = sd.edge;
          t.rim_t = sd.t;
        }
      }
    }
  }

  out->rgb = Image(roi.width, roi.height, 3);
  out->mask = Image(roi.width, roi.height, 1);
  out->depth = Image(roi.width, roi.height, 1, kInf);
  out->roi = roi;
  for (int y = roi.y0; y < roi.y0 + roi.height; ++y) {
    for (int x = roi.x0; x < roi.x0 + roi.width; ++x) {
      PixelTape& t = px[roi_index(roi, x, y)];
      const double mask = t.zero_count > 0 ? 1.0 : 1.0 - t.prod;
      out->mask.at(x - roi.x0, y - roi.y0) = mask;
      if (mask <= 0.0) continue;
      double interp[kAttribChannels];
      bool have_color = false;
      if (t.winner >= 0) {
        const auto& fc = faces[t.winner];
        const Vec2d verts[3] = {{su[fc[0]], sv[fc[0]]},
                                {su[fc[1]], sv[fc[1]]},
                                {su[fc[2]], sv[fc[2]]}};
        Barycentric bc;
        if (barycentric(x + 0.0, y + 0.0, verts, &bc)) {
          double rho = 0.0;
          for (int c = 0; c < kAttribChannels; ++c) interp[c] = 0.0;
          for (int k = 0; k < 3; ++k) {
            const int vi = fc[k];
            const double wk = bc.w[k] / sz[vi];
            rho += wk;
            interp[0] += wk * shade[vi];
            interp[1] += wk * albedo[vi][0];
            interp[2] += wk * albedo[vi][1];
            interp[3] += wk * albedo[vi][2];
          }
          for (int c = 0; c < kAttribChannels; ++c) interp[c] /= rho;
          out->depth.at(x - roi.x0, y - roi.y0) = 1.0 / rho;
          have_color = true;
        }
      } else if (t.rim_face >= 0) {
        // Boundary fallback: extend the nearest front face's edge color so
        // partially covered pixels outside every triangle stay shaded.
        const auto& fc = faces[t.rim_face];
        const int ia = fc[t.rim_edge];
        const int ib = fc[(t.rim_edge + 1) % 3];
        const double w = t.rim_t;
        interp[0] = (1.0 - w) * shade[ia] + w * shade[ib];
        interp[1] = (1.0 - w) * albedo[ia][0] + w * albedo[ib][0];
        interp[2] = (1.0 - w) * albedo[ia][1] + w * albedo[ib][1];
        interp[3] = (1.0 - w) * albedo[ia][2] + w * albedo[ib][2];
        out->depth.at(x - roi.x0, y - roi.y0) =
            (1.0 - w) * sz[ia] + w * sz[ib];
        have_color = true;
      }
      if (have_color) {
        for (int c = 0; c < 3; ++c) {
          out->rgb.at(x - roi.x0, y - roi.y0, c) = interp[0] * interp[1 + c];
        }
      }
    }
  }
  (void)v_cam;
}

PatchRect projected_roi(const std::vector<double>& su,
                        const std::vector<double>& sv, const Camera& cam,
                        double margin) {
  double xlo = kInf, xhi = -kInf, ylo = kInf, yhi = -kInf;
  for (std::size_t i = 0; i < su.size(); ++i) {
    xlo = std::min(xlo, su[i]);
    xhi = std::max(xhi, su[i]);
    ylo = std::min(ylo, sv[i]);
    yhi = std::max(yhi, sv[i]);
  }
  const int x0 = std::clamp(static_cast<int>(std::floor(xlo - margin)), 0,
                            cam.width - 1);
  const int x1 = std::clamp(static_cast<int>(std::ceil(xhi + margin)), 0,
                            cam.width - 1);
  const int y0 = std::clamp(static_cast<int>(std::floor(ylo - margin)), 0,
                            cam.height - 1);
  const int y1 = std::clamp(static_cast<int>(std::ceil(yhi + margin)), 0,
                            cam.height - 1);
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

PatchRect clip_to_frame(const PatchRect& r, const Camera& cam) {
  const int x0 = std::clamp(r.x0, 0, cam.width - 1);
  const int y0 = std::clamp(r.y0, 0, cam.height - 1);
  const int x1 = std::clamp(r.x0 + r.width, x0 + 1, cam.width);
  const int y1 = std::clamp(r.y0 + r.height, y0 + 1, cam.height);
  return {x0, y0, x1 - x0, y1 - y0};
}

void compute_shading(const std::vector<Vec3>& n_cam, const RenderConfig& cfg,
                     std::vector<double>* shade, std::vector<double>* dclamp,
                     std::vector<double>* ndotl) {
  const Vec3 light = cfg.light_direction.normalized();
  const std::size_t n = n_cam.size();
  shade->resize(n);
  dclamp->resize(n);
  ndotl->resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double dot = n_cam[i].dot(light);
    (*ndotl)[i] = dot;
    (*shade)[i] = cfg.ambient + (1.0 - cfg.ambient) *
                                    soft_clamp(dot, cfg.diffuse_sharpness);
    (*dclamp)[i] = (1.0 - cfg.ambient) *
                   soft_clamp_slope(dot, cfg.diffuse_sharpness);
  }
}

void front_flags(const std::vector<Vec3>& v_cam,
                 const std::vector<Eigen::Vector3i>& faces,
                 std::vector<char>* front) {
  front->resize(faces.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Vec3& a = v_cam[faces[f][0]];
    const Vec3& b = v_cam[faces[f][1]];
    const Vec3& c = v_cam[faces[f][2]];
    const Vec3 normal = (b - a).cross(c - a);
    const Vec3 center = (a + b + c) / 3.0;
    // Outward normals point away from the surface; a face is visible when
    // its normal has a component toward the camera (against the view ray).
    (*front)[f] = normal.dot(center) < 0.0 ? 1 : 0;
  }
}

}  // namespace

PatchRect full_frame(const Camera& cam) { return {0, 0, cam.width, cam.height}; }

ObjectRender rasterize_object(const TriangleMesh& mesh,
                              const Mat4& object_to_cam, const Camera& cam,
                              const RenderConfig& cfg, const PatchRect* roi) {
  validate_camera(cam);
  const std::size_t n = mesh.vertices.size();
  const Mat3 linear = object_to_cam.topLeftCorner<3, 3>();
  const Vec3 offset = object_to_cam.topRightCorner<3, 1>();
  std::vector<Vec3> v_cam(n);
  std::vector<double> su(n), sv(n), sz(n);
  for (std::size_t i = 0; i < n; ++i) {
    v_cam[i] = linear * mesh.vertices[i] + offset;
    if (!(v_cam[i].z() > kNearPlane)) {
      throw std::invalid_argument(
          "rasterize_object: vertex on or behind the near plane");
    }
    su[i] = cam.fx * v_cam[i].x() / v_cam[i].z() + cam.cx;
    sv[i] = cam.fy * v_cam[i].y() / v_cam[i].z() + cam.cy;
    sz[i] = v_cam[i].z();
  }
  std::vector<Vec3> n_cam(n);
  for (std::size_t i = 0; i < n; ++i) {
    n_cam[i] = (linear * mesh.normals[i]).normalized();
  }
  std::vector<double> shade, dclamp, ndotl;
  compute_shading(n_cam, cfg, &shade, &dclamp, &ndotl);
  std::vector<char> front;
  front_flags(v_cam, mesh.faces, &front);

  const PatchRect rect = roi ? clip_to_frame(*roi, cam)
                             : projected_roi(su, sv, cam, 40.0 / cfg.sharpness + 1.0);
  ObjectRender out;
  raster_core(v_cam, su, sv, sz, shade, mesh.albedo, mesh.faces, front, rect,
              cfg, &out, nullptr);
  return out;
}

SceneComposite composite_scene(const std::vector<ObjectRender>& renders,
                               const std::vector<double>& distances, int width,
                               int height) {
  if (renders.size() != distances.size()) {
    throw std::invalid_argument(
        "composite_scene: renders and distances size mismatch");
  }
  std::vector<std::size_t> order(renders.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return distances[a] < distances[b];
  });

  SceneComposite out;
  out.image = Image(width, height, 3);
  out.foreground = Image(width, height, 1);
  out.weights.resize(renders.size());
  Image sum(width, height, 1);
  for (std::size_t i = 0; i < renders.size(); ++i) {
    out.weights[i] = Image(width, height, 1);
  }
  for (const std::size_t p : order) {
    const ObjectRender& r = renders[p];
    if (r.mask.empty()) continue;
    const PatchRect& roi = r.roi;
    for (int y = roi.y0; y < roi.y0 + roi.height; ++y) {
      for (int x = roi.x0; x < roi.x0 + roi.width; ++x) {
        const double m = r.mask.at(x - roi.x0, y - roi.y0);
        if (m <= 0.0) continue;
        const double before = sum.at(x, y);
        // Remaining visibility budget: nearer objects consume the pixel
        // first, so gamma telescopes to min(sum of masks, 1) == foreground.
        const double gamma = std::max(std::min(m, 1.0 - before), 0.0);
        sum.at(x, y) = before + m;
        if (gamma > 0.0) {
          out.weights[p].at(x, y) = gamma;
          for (int c = 0; c < 3; ++c) {
            out.image.at(x, y, c) += gamma * r.rgb.at(x - roi.x0, y - roi.y0, c);
          }
        }
      }
    }
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      out.foreground.at(x, y) = std::min(sum.at(x, y), 1.0);
    }
  }
  return out;
}

class SceneRenderImpl {
 public:
  const Generator* gen = nullptr;
  Camera cam;
  RenderConfig cfg;
  std::vector<ObjectTape> tapes;
  std::vector<ObjectRender> renders;
  std::vector<double> distances;
  SceneComposite composite;
  Image mask_sum;  // un-clamped union, needed for the foreground gate
};

SceneRender::SceneRender() : impl_(new SceneRenderImpl) {}
SceneRender::SceneRender(SceneRender&&) noexcept = default;
SceneRender& SceneRender::operator=(SceneRender&&) noexcept = default;
SceneRender::~SceneRender() = default;

const SceneComposite& SceneRender::composite() const { return impl_->composite; }
const std::vector<ObjectRender>& SceneRender::object_renders() const {
  return impl_->renders;
}
const std::vector<double>& SceneRender::distances() const {
  return impl_->distances;
}
bool SceneRender::culled(int object) const {
  return impl_->tapes[object].culled;
}

SceneRender render_scene(const Generator& gen,
                         const std::vector<SceneObject>& objects,
                         const Camera& cam, const RenderConfig& cfg,
                         const std::vector<PatchRect>* rois) {
  validate_camera(cam);
  if (objects.empty()) {
    throw std::invalid_argument("render_scene: no objects");
  }
  if (rois && rois->size() != objects.size()) {
    throw std::invalid_argument("render_scene: roi count mismatch");
  }
  SceneRender result;
  SceneRenderImpl& impl = *result.impl_;
  impl.gen = &gen;
  impl.cam = cam;
  impl.cfg = cfg;
  impl.tapes.resize(objects.size());
  impl.renders.resize(objects.size());
  impl.distances.assign(objects.size(), kInf);

  const Mat3 Rc = cam.pose.rotation();
  for (std::size_t p = 0; p < objects.size(); ++p) {
    const SceneObject& obj = objects[p];
    ObjectTape& tape = impl.tapes[p];
    tape.mesh = gen.generate(obj.latents);
    tape.colors = gen.shade_vertices(obj.latents.texture);
    tape.R_world = obj.pose.rotation();
    tape.Rc = Rc;
    tape.Jl = so3_left_jacobian(obj.pose.omega);
    tape.scale = obj.scale;

    const Mat3 R_rel = Rc.transpose() * tape.R_world;
    const Vec3 t_rel = Rc.transpose() * (obj.pose.t - cam.pose.t);
    impl.distances[p] = t_rel.norm();

    const std::size_t n = tape.mesh.vertices.size();
    tape.v_cam.resize(n);
    tape.su.resize(n);
    tape.sv.resize(n);
    tape.sz.resize(n);
    bool in_front = true;
    for (std::size_t i = 0; i < n; ++i) {
      tape.v_cam[i] = R_rel * (obj.scale * tape.mesh.vertices[i]) + t_rel;
      if (!(tape.v_cam[i].z() > kNearPlane)) {
        in_front = false;
        break;
      }
    }
    if (!in_front) {
      tape.culled = true;
      continue;
    }
    double ulo = kInf, uhi = -kInf, vlo = kInf, vhi = -kInf;
    for (std::size_t i = 0; i < n; ++i) {
      tape.su[i] = cam.fx * tape.v_cam[i].x() / tape.v_cam[i].z() + cam.cx;
      tape.sv[i] = cam.fy * tape.v_cam[i].y() / tape.v_cam[i].z() + cam.cy;
      tape.sz[i] = tape.v_cam[i].z();
      ulo = std::min(ulo, tape.su[i]);
      uhi = std::max(uhi, tape.su[i]);
      vlo = std::min(vlo, tape.sv[i]);
      vhi = std::max(vhi, tape.sv[i]);
    }
    const double pad = 40.0 / cfg.sharpness + 1.0;
    if (uhi < -pad || ulo > cam.width - 1 + pad || vhi < -pad ||
        vlo > cam.height - 1 + pad) {
      tape.culled = true;  // entire footprint off screen
      continue;
    }
    tape.n_cam.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      tape.n_cam[i] = R_rel * tape.mesh.normals[i];
    }
    compute_shading(tape.n_cam, cfg, &tape.shade, &tape.dclamp, &tape.ndotl);
    front_flags(tape.v_cam, tape.mesh.faces, &tape.front);

    PatchRect rect = rois ? clip_to_frame((*rois)[p], cam)
                          : projected_roi(tape.su, tape.sv, cam,
                                          40.0 / cfg.sharpness + 1.0);
    tape.roi = rect;
    tape.culled = false;
    std::vector<Vec3> albedo(n);
    for (std::size_t i = 0; i < n; ++i) albedo[i] = tape.colors.albedo[i];
    raster_core(tape.v_cam, tape.su, tape.sv, tape.sz, tape.shade, albedo,
                tape.mesh.faces, tape.front, rect, cfg, &impl.renders[p],
                &tape.px);
  }
  // With every object culled the composite is legitimately empty (all-zero
  // image and foreground); callers treat that as pure background.
  impl.composite =
      composite_scene(impl.renders, impl.distances, cam.width, cam.height);
  impl.mask_sum = Image(cam.width, cam.height, 1);
  for (std::size_t p = 0; p < objects.size(); ++p) {
    if (impl.tapes[p].culled) continue;
    const ObjectRender& r = impl.renders[p];
    for (int y = r.roi.y0; y < r.roi.y0 + r.roi.height; ++y) {
      for (int x = r.roi.x0; x < r.roi.x0 + r.roi.width; ++x) {
        impl.mask_sum.at(x, y) += r.mask.at(x - r.roi.x0, y - r.roi.y0);
      }
    }
  }
  return result;
}

std::vector<ObjectGrads> SceneRender::backward(
    const Image& dL_dimage, const Image& dL_dforeground) const {
  const SceneRenderImpl& impl = *impl_;
  const Camera& cam = impl.cam;
  if (dL_dimage.width() != cam.width || dL_dimage.height() != cam.height ||
      dL_dimage.channels() != 3) {
    throw std::invalid_argument("backward: image gradient shape mismatch");
  }
  if (dL_dforeground.width() != cam.width ||
      dL_dforeground.height() != cam.height ||
      dL_dforeground.channels() != 1) {
    throw std::invalid_argument("backward: foreground gradient shape mismatch");
  }
  const Generator& gen = *impl.gen;
  const double kappa = impl.cfg.sharpness;
  const double margin = 40.0 / kappa + 1.0;
  const Vec3 light = impl.cfg.light_direction.normalized();

  std::vector<ObjectGrads> grads(impl.tapes.size());
  for (std::size_t p = 0; p < impl.tapes.size(); ++p) {
    const ObjectTape& tape = impl.tapes[p];
    ObjectGrads& g = grads[p];
    g.z_shape = Eigen::VectorXd::Zero(gen.config().shape_dim);
    g.z_texture = Eigen::VectorXd::Zero(gen.config().texture_dim);
    g.culled = tape.culled;
    if (tape.culled) continue;

    const ObjectRender& render = impl.renders[p];
    const PatchRect& roi = tape.roi;
    const Image& gamma = impl.composite.weights[p];

    // Per-pixel upstream gradients for this object's color and mask.
    Image dcolor(roi.width, roi.height, 3);
    Image dmask(roi.width, roi.height, 1);
    for (int y = roi.y0; y < roi.y0 + roi.height; ++y) {
      for (int x = roi.x0; x < roi.x0 + roi.width; ++x) {
        const double gm = gamma.at(x, y);
        double dm = 0.0;
        if (gm > 0.0) {
          for (int c = 0; c < 3; ++c) {
            const double di = dL_dimage.at(x, y, c);
            dcolor.at(x - roi.x0, y - roi.y0, c) = gm * di;
            dm += render.rgb.at(x - roi.x0, y - roi.y0, c) * di;
          }
        }
        if (impl.mask_sum.at(x, y) < 1.0) {
          dm += dL_dforeground.at(x, y);
        }
        dmask.at(x - roi.x0, y - roi.y0) = dm;
      }
    }

    const std::size_t n = tape.mesh.vertices.size();
    std::vector<double> du(n, 0.0), dv(n, 0.0), dz(n, 0.0);
    std::vector<double> dshade(n, 0.0);
    std::vector<Vec3> dalbedo(n, Vec3::Zero());

    const auto& faces = tape.mesh.faces;

    // --- Color paths: interpolated winner and boundary fallback pixels. ---
    for (int y = roi.y0; y < roi.y0 + roi.height; ++y) {
      for (int x = roi.x0; x < roi.x0 + roi.width; ++x) {
        const int li = roi_index(roi, x, y);
        const PixelTape& t = tape.px[li];
        double dattr[kAttribChannels] = {0, 0, 0, 0};
        const double dc0 = dcolor.at(x - roi.x0, y - roi.y0, 0);
        const double dc1 = dcolor.at(x - roi.x0, y - roi.y0, 1);
        const double dc2 = dcolor.at(x - roi.x0, y - roi.y0, 2);
        if (dc0 == 0.0 && dc1 == 0.0 && dc2 == 0.0) continue;

        if (t.winner >= 0) {
          const auto& fc = faces[t.winner];
          const Vec2d verts[3] = {{tape.su[fc[0]], tape.sv[fc[0]]},
                                  {tape.su[fc[1]], tape.sv[fc[1]]},
                                  {tape.su[fc[2]], tape.sv[fc[2]]}};
          Barycentric bc;
          if (!barycentric(x + 0.0, y + 0.0, verts, &bc)) continue;
          double attr[3][kAttribChannels];
          double interp[kAttribChannels] = {0, 0, 0, 0};
          double rho = 0.0;
          double wz[3];
          for (int k = 0; k < 3; ++k) {
            const int vi = fc[k];
            attr[k][0] = tape.shade[vi];
            attr[k][1] = tape.colors.albedo[vi][0];
            attr[k][2] = tape.colors.albedo[vi][1];
            attr[k][3] = tape.colors.albedo[vi][2];
            wz[k] = bc.w[k] / tape.sz[vi];
            rho += wz[k];
            for (int c = 0; c < kAttribChannels; ++c) {
              interp[c] += wz[k] * attr[k][c];
            }
          }
          for (int c = 0; c < kAttribChannels; ++c) interp[c] /= rho;
          // color = shade * albedo, channel-wise
          dattr[0] = dc0 * interp[1] + dc1 * interp[2] + dc2 * interp[3];
          dattr[1] = dc0 * interp[0];
          dattr[2] = dc1 * interp[0];
          dattr[3] = dc2 * interp[0];

          double dw[3] = {0, 0, 0};
          for (int k = 0; k < 3; ++k) {
            const int vi = fc[k];
            double dot_diff = 0.0;
            double dot_attr = 0.0;
            for (int c = 0; c < kAttribChannels; ++c) {
              dot_diff += dattr[c] * (attr[k][c] - interp[c]);
              dot_attr += dattr[c] * attr[k][c];
            }
            (void)dot_attr;
            // attribute and depth sensitivities of the rational interp
            dshade[vi] += dattr[0] * wz[k] / rho;
            dalbedo[vi][0] += dattr[1] * wz[k] / rho;
            dalbedo[vi][1] += dattr[2] * wz[k] / rho;
            dalbedo[vi][2] += dattr[3] * wz[k] / rho;
            dw[k] = dot_diff / (tape.sz[vi] * rho);
            dz[vi] += -bc.w[k] * dot_diff / (tape.sz[vi] * tape.sz[vi] * rho);
          }
          Vec2d dverts[3] = {{0, 0}, {0, 0}, {0, 0}};
          barycentric_backward(x + 0.0, y + 0.0, verts, bc, dw[0] - dw[2],
                               dw[1] - dw[2], dverts);
          for (int k = 0; k < 3; ++k) {
            du[fc[k]] += dverts[k].x;
            dv[fc[k]] += dverts[k].y;
          }
        } else if (t.rim_face >= 0) {
          const auto& fc = faces[t.rim_face];
          const int ia = fc[t.rim_edge];
          const int ib = fc[(t.rim_edge + 1) % 3];
          const double w = t.rim_t;
          const double attr_a[kAttribChannels] = {
              tape.shade[ia], tape.colors.albedo[ia][0],
              tape.colors.albedo[ia][1], tape.colors.albedo[ia][2]};
          const double attr_b[kAttribChannels] = {
              tape.shade[ib], tape.colors.albedo[ib][0],
              tape.colors.albedo[ib][1], tape.colors.albedo[ib][2]};
          double interp[kAttribChannels];
          for (int c = 0; c < kAttribChannels; ++c) {
            interp[c] = (1.0 - w) * attr_a[c] + w * attr_b[c];
          }
          dattr[0] = dc0 * interp[1] + dc1 * interp[2] + dc2 * interp[3];
          dattr[1] = dc0 * interp[0];
          dattr[2] = dc1 * interp[0];
          dattr[3] = dc2 * interp[0];
          dshade[ia] += dattr[0] * (1.0 - w);
          dshade[ib] += dattr[0] * w;
          dalbedo[ia][0] += dattr[1] * (1.0 - w);
          dalbedo[ib][0] += dattr[1] * w;
          dalbedo[ia][1] += dattr[2] * (1.0 - w);
          dalbedo[ib][1] += dattr[2] * w;
          dalbedo[ia][2] += dattr[3] * (1.0 - w);
          dalbedo[ib][2] += dattr[3] * w;
          if (w > 0.0 && w < 1.0) {
            double dt = 0.0;
            for (int c = 0; c < kAttribChannels; ++c) {
              dt += dattr[c] * (attr_b[c] - attr_a[c]);
            }
            // t = d1/d2 with d1 = (p-a).(b-a), d2 = |b-a|^2
            const double ax = tape.su[ia], ay = tape.sv[ia];
            const double bx = tape.su[ib], by = tape.sv[ib];
            const double ex = bx - ax, ey = by - ay;
            const double d2 = ex * ex + ey * ey;
            if (d2 > 0.0) {
              const double pxp = x + 0.0, pyp = y + 0.0;
              const double dd1_ax = 2.0 * ax - bx - pxp;
              const double dd1_ay = 2.0 * ay - by - pyp;
              const double dd1_bx = pxp - ax;
              const double dd1_by = pyp - ay;
              const double dd2_ax = -2.0 * ex, dd2_ay = -2.0 * ey;
              const double dd2_bx = 2.0 * ex, dd2_by = 2.0 * ey;
              du[ia] += dt * (dd1_ax - w * dd2_ax) / d2;
              dv[ia] += dt * (dd1_ay - w * dd2_ay) / d2;
              du[ib] += dt * (dd1_bx - w * dd2_bx) / d2;
              dv[ib] += dt * (dd1_by - w * dd2_by) / d2;
            }
          }
        }
      }
    }

    // --- Mask path: silhouette sigmoids of every triangle. ---
    for (std::size_t f = 0; f < faces.size(); ++f) {
      const int i0 = faces[f][0], i1 = faces[f][1], i2 = faces[f][2];
      const Vec2d verts[3] = {{tape.su[i0], tape.sv[i0]},
                              {tape.su[i1], tape.sv[i1]},
                              {tape.su[i2], tape.sv[i2]}};
      const int xlo = std::max(roi.x0, static_cast<int>(std::floor(
                                           std::min({verts[0].x, verts[1].x, verts[2].x}) - margin)));
      const int xhi = std::min(roi.x0 + roi.width - 1,
                               static_cast<int>(std::ceil(
                                   std::max({verts[0].x, verts[1].x, verts[2].x}) + margin)));
      const int ylo = std::max(roi.y0, static_cast<int>(std::floor(
                                           std::min({verts[0].y, verts[1].y, verts[2].y}) - margin)));
      const int yhi = std::min(roi.y0 + roi.height - 1,
                               static_cast<int>(std::ceil(
                                   std::max({verts[0].y, verts[1].y, verts[2].y}) + margin)));
      for (int y = ylo; y <= yhi; ++y) {
        for (int x = xlo; x <= xhi; ++x) {
          const int li = roi_index(roi, x, y);
          const double dm = dmask.at(x - roi.x0, y - roi.y0);
          if (dm == 0.0) continue;
          const PixelTape& t = tape.px[li];
          const SignedDistance sd = signed_distance(x + 0.0, y + 0.0, verts);
          const double d = sigmoid(kappa * sd.sd);
          const double one_minus = 1.0 - d;
          // dM/dD_f = product of the other (1 - D_k) factors
          double others;
          if (t.zero_count == 0) {
            others = one_minus > 0.0 ? t.prod / one_minus : 0.0;
          } else if (t.zero_count == 1 && one_minus == 0.0) {
            others = t.prod;
          } else {
            others = 0.0;
          }
          if (others == 0.0) continue;
          const double dsd = dm * others * d * one_minus * kappa;
          if (dsd == 0.0) continue;
          Vec2d dverts[3] = {{0, 0}, {0, 0}, {0, 0}};
          signed_distance_backward(x + 0.0, y + 0.0, verts, sd, dsd, dverts);
          du[i0] += dverts[0].x;
          dv[i0] += dverts[0].y;
          du[i1] += dverts[1].x;
          dv[i1] += dverts[1].y;
          du[i2] += dverts[2].x;
          dv[i2] += dverts[2].y;
        }
      }
    }

    // --- Vertex-level chains back to the object parameters. ---
    const Mat3 RcT = tape.Rc.transpose();
    Vec3 dt_rel = Vec3::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      // albedo -> texture code
      if (dalbedo[i] != Vec3::Zero()) {
        gen.accumulate_texture_grad(tape.colors, static_cast<int>(i),
                                    dalbedo[i], g.z_texture);
      }
      // shade -> camera-frame normal -> rotation
      if (dshade[i] != 0.0) {
        const Vec3 dn = dshade[i] * tape.dclamp[i] * light;
        const Vec3 q = tape.R_world * tape.mesh.normals[i];
        g.rotation += tape.Jl.transpose() * q.cross(tape.Rc * dn);
      }
      // screen -> camera-frame position
      const bool has_pix = du[i] != 0.0 || dv[i] != 0.0 || dz[i] != 0.0;
      if (!has_pix) continue;
      const double z = tape.sz[i];
      Vec3 dvc(du[i] * cam.fx / z, dv[i] * cam.fy / z,
               dz[i] - du[i] * cam.fx * tape.v_cam[i].x() / (z * z) -
                   dv[i] * cam.fy * tape.v_cam[i].y() / (z * z));
      dt_rel += dvc;
      const Vec3 q = tape.R_world * (tape.scale * tape.mesh.vertices[i]);
      g.rotation += tape.Jl.transpose() * q.cross(tape.Rc * dvc);
      const Vec3 dcanon = tape.scale * (RcT * tape.R_world).transpose() * dvc;
      for (int k = 0; k < gen.config().shape_dim; ++k) {
        g.z_shape[k] += gen.shape_basis_column(k)[i].dot(dcanon);
      }
      g.log_scale +=
          tape.scale * dvc.dot(RcT * tape.R_world * tape.mesh.vertices[i]);
    }
    g.translation = tape.Rc * dt_rel;
  }
  return grads;
}

}  // namespace irt
