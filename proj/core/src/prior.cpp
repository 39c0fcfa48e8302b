#include "irt/prior.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <tuple>

#include "irt/rng.hpp"

namespace irt {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Radial superellipsoid mapping: scales a unit direction until
// |x/a|^m + |y/b|^m + |z/c|^m = 1.
Vec3 to_superellipsoid(const Vec3& direction) {
  const Vec3 half(Generator::kHalfExtentX, Generator::kHalfExtentY,
                  Generator::kHalfExtentZ);
  const double m = Generator::kSuperellipsoidExponent;
  double level = 0.0;
  for (int c = 0; c < 3; ++c) {
    level += std::pow(std::abs(direction[c]) / half[c], m);
  }
  return direction / std::pow(level, 1.0 / m);
}

// Outward unit normal from the implicit-function gradient.
Vec3 superellipsoid_normal(const Vec3& p) {
  const Vec3 half(Generator::kHalfExtentX, Generator::kHalfExtentY,
                  Generator::kHalfExtentZ);
  const double m = Generator::kSuperellipsoidExponent;
  Vec3 grad;
  for (int c = 0; c < 3; ++c) {
    const double u = p[c] / half[c];
    grad[c] = (m / half[c]) * std::pow(std::abs(u), m - 1.0) *
              (u >= 0.0 ? 1.0 : -1.0);
  }
  return grad.normalized();
}

// One smooth pseudo-random scalar field: a short sum of sinusoids over the
// normalized canonical coordinates.
struct SinusoidField {
  static constexpr int kWaves = 3;
  Vec3 freq[kWaves];
  double amp[kWaves];
  double phase[kWaves];

  static SinusoidField draw(Rng& rng) {
    SinusoidField f;
    for (int j = 0; j < kWaves; ++j) {
      Vec3 dir(rng.normal(), rng.normal(), rng.normal());
      if (dir.norm() < 1e-9) dir = Vec3::UnitX();
      f.freq[j] = dir.normalized() * rng.uniform(0.5, 2.5);
      f.amp[j] = rng.uniform(-1.0, 1.0);
      f.phase[j] = rng.uniform(0.0, 2.0 * kPi);
    }
    return f;
  }

  double eval(const Vec3& q) const {
    double v = 0.0;
    for (int j = 0; j < kWaves; ++j) {
      v += amp[j] * std::sin(freq[j].dot(q) + phase[j]);
    }
    return v;
  }
};

}  // namespace

Generator::Generator(GeneratorConfig config) : config_(config) {
  if (config_.shape_dim < 1) {
    throw std::invalid_argument("Generator: shape_dim must be >= 1");
  }
  if (config_.texture_dim < 4) {
    throw std::invalid_argument("Generator: texture_dim must be >= 4");
  }
  if (config_.subdivision < 1) {
    throw std::invalid_argument("Generator: subdivision must be >= 1");
  }

  // --- Template mesh: cube-sphere grid pushed onto the superellipsoid. ---
  const int n = config_.subdivision;
  // Face frames (u, v, outward w) chosen so u x v = w; quads wound
  // counter-clockwise when viewed from outside.
  struct Face {
    Vec3 u, v, w;
  };
  const Face faces[6] = {
      {Vec3::UnitY(), Vec3::UnitZ(), Vec3::UnitX()},
      {Vec3::UnitZ(), Vec3::UnitY(), -Vec3::UnitX()},
      {Vec3::UnitZ(), Vec3::UnitX(), Vec3::UnitY()},
      {Vec3::UnitX(), Vec3::UnitZ(), -Vec3::UnitY()},
      {Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()},
      {Vec3::UnitY(), Vec3::UnitX(), -Vec3::UnitZ()},
  };

  std::map<std::tuple<long long, long long, long long>, int> seen;
  auto vertex_id = [&](const Vec3& cube_point) {
    const auto key = std::make_tuple(
        static_cast<long long>(std::llround(cube_point.x() * 1e6)),
        static_cast<long long>(std::llround(cube_point.y() * 1e6)),
        static_cast<long long>(std::llround(cube_point.z() * 1e6)));
    const auto it = seen.find(key);
    if (it != seen.end()) return it->second;
    const int id = static_cast<int>(template_.vertices.size());
    seen.emplace(key, id);
    const Vec3 p = to_superellipsoid(cube_point.normalized());
    template_.vertices.push_back(p);
    template_.normals.push_back(superellipsoid_normal(p));
    return id;
  };

  for (const Face& f : faces) {
    for (int row = 0; row < n; ++row) {
      for (int col = 0; col < n; ++col) {
        const double u0 = -1.0 + 2.0 * col / n;
        const double u1 = -1.0 + 2.0 * (col + 1) / n;
        const double v0 = -1.0 + 2.0 * row / n;
        const double v1 = -1.0 + 2.0 * (row + 1) / n;
        const int p00 = vertex_id(f.w + u0 * f.u + v0 * f.v);
        const int p10 = vertex_id(f.w + u1 * f.u + v0 * f.v);
        const int p01 = vertex_id(f.w + u0 * f.u + v1 * f.v);
        const int p11 = vertex_id(f.w + u1 * f.u + v1 * f.v);
        template_.faces.emplace_back(p00, p10, p11);
        template_.faces.emplace_back(p00, p11, p01);
      }
    }
  }
  template_.albedo.assign(template_.vertices.size(), Vec3(0.5, 0.5, 0.5));

  const int nverts = vertex_count();
  const Vec3 inv_half(1.0 / kHalfExtentX, 1.0 / kHalfExtentY, 1.0 / kHalfExtentZ);
  std::vector<Vec3> normalized(nverts);
  for (int i = 0; i < nverts; ++i) {
    normalized[i] = template_.vertices[i].cwiseProduct(inv_half);
  }

  // --- Shape basis: seeded sinusoid displacement fields, each column
  // rescaled so its largest per-vertex component is kBasisColumnMaxInf. ---
  Rng shape_rng = Rng(config_.seed).fork(1);
  basis_.resize(config_.shape_dim);
  for (int k = 0; k < config_.shape_dim; ++k) {
    SinusoidField field[3] = {SinusoidField::draw(shape_rng),
                              SinusoidField::draw(shape_rng),
                              SinusoidField::draw(shape_rng)};
    auto& column = basis_[k];
    column.resize(nverts);
    double peak = 0.0;
    for (int i = 0; i < nverts; ++i) {
      for (int c = 0; c < 3; ++c) {
        column[i][c] = field[c].eval(normalized[i]);
        peak = std::max(peak, std::abs(column[i][c]));
      }
    }
    const double scale = kBasisColumnMaxInf / peak;
    for (int i = 0; i < nverts; ++i) column[i] *= scale;
  }

  // --- Texture field: per-coefficient monomial mixes over the surface. ---
  Rng tex_rng = Rng(config_.seed).fork(2);
  const int spatial_terms = config_.texture_dim - 4;
  texture_weights_.resize(spatial_terms);
  for (int j = 0; j < spatial_terms; ++j) {
    for (int ch = 0; ch < 3; ++ch) {
      for (int m = 0; m < 8; ++m) {
        texture_weights_[j](ch, m) = tex_rng.uniform(-0.25, 0.25);
      }
    }
  }
  spatial_response_.resize(nverts);
  for (int i = 0; i < nverts; ++i) {
    const Eigen::Matrix<double, 8, 1> mono = monomials(template_.vertices[i]);
    spatial_response_[i].resize(3, spatial_terms);
    for (int j = 0; j < spatial_terms; ++j) {
      spatial_response_[i].col(j) = texture_weights_[j] * mono;
    }
  }
}

Eigen::Matrix<double, 8, 1> Generator::monomials(const Vec3& position) const {
  const Vec3 q(position.x() / kHalfExtentX, position.y() / kHalfExtentY,
               position.z() / kHalfExtentZ);
  Eigen::Matrix<double, 8, 1> mono;
  mono << q.x(), q.y(), q.z(), q.x() * q.y(), q.y() * q.z(), q.z() * q.x(),
      q.x() * q.x() - q.y() * q.y(), 3.0 * q.z() * q.z() - 1.0;
  return mono;
}

const std::vector<Vec3>& Generator::shape_basis_column(int k) const {
  if (k < 0 || k >= config_.shape_dim) {
    throw std::invalid_argument("shape_basis_column: index out of range");
  }
  return basis_[k];
}

std::vector<Vec3> Generator::deform_shape(const Eigen::VectorXd& z_shape) const {
  if (z_shape.size() != config_.shape_dim) {
    throw std::invalid_argument("deform_shape: z_shape has wrong dimension");
  }
  std::vector<Vec3> out = template_.vertices;
  for (int k = 0; k < config_.shape_dim; ++k) {
    const double w = z_shape[k];
    if (w == 0.0) continue;
    const auto& column = basis_[k];
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] += w * column[i];
    }
  }
  return out;
}

Vec3 Generator::shade_texture(const Eigen::VectorXd& z_texture,
                              const Vec3& position) const {
  if (z_texture.size() != config_.texture_dim) {
    throw std::invalid_argument("shade_texture: z_texture has wrong dimension");
  }
  const Eigen::Matrix<double, 8, 1> mono = monomials(position);
  Vec3 rgb;
  for (int ch = 0; ch < 3; ++ch) {
    double logit = z_texture[ch] + 0.5 * z_texture[3];
    for (int j = 0; j + 4 < config_.texture_dim; ++j) {
      logit += z_texture[4 + j] * (texture_weights_[j].row(ch) * mono).value();
    }
    rgb[ch] = sigmoid(logit);
  }
  return rgb;
}

VertexColors Generator::shade_vertices(const Eigen::VectorXd& z_texture) const {
  if (z_texture.size() != config_.texture_dim) {
    throw std::invalid_argument("shade_vertices: z_texture has wrong dimension");
  }
  const int nverts = vertex_count();
  const int spatial_terms = config_.texture_dim - 4;
  VertexColors out;
  out.albedo.resize(nverts);
  out.dalbedo_dlogit.resize(nverts);
  for (int i = 0; i < nverts; ++i) {
    for (int ch = 0; ch < 3; ++ch) {
      double logit = z_texture[ch] + 0.5 * z_texture[3];
      for (int j = 0; j < spatial_terms; ++j) {
        logit += z_texture[4 + j] * spatial_response_[i](ch, j);
      }
      const double a = sigmoid(logit);
      out.albedo[i][ch] = a;
      out.dalbedo_dlogit[i][ch] = a * (1.0 - a);
    }
  }
  return out;
}

void Generator::accumulate_texture_grad(const VertexColors& colors, int vertex,
                                        const Vec3& dL_dalbedo,
                                        Eigen::VectorXd& grad) const {
  const int spatial_terms = config_.texture_dim - 4;
  for (int ch = 0; ch < 3; ++ch) {
    const double w = dL_dalbedo[ch] * colors.dalbedo_dlogit[vertex][ch];
    if (w == 0.0) continue;
    grad[ch] += w;
    grad[3] += 0.5 * w;
    for (int j = 0; j < spatial_terms; ++j) {
      grad[4 + j] += w * spatial_response_[vertex](ch, j);
    }
  }
}

TriangleMesh Generator::generate(const LatentPair& z) const {
  TriangleMesh mesh;
  mesh.vertices = deform_shape(z.shape);
  mesh.normals = template_.normals;
  mesh.faces = template_.faces;
  mesh.albedo = shade_vertices(z.texture).albedo;
  return mesh;
}

double Generator::shape_basis_spectral_norm() const {
  const int nverts = vertex_count();
  Eigen::MatrixXd stacked(3 * nverts, config_.shape_dim);
  for (int k = 0; k < config_.shape_dim; ++k) {
    for (int i = 0; i < nverts; ++i) {
      stacked.block<3, 1>(3 * i, k) = basis_[k][i];
    }
  }
  // Power iteration on B^T B; dimensions are tiny so convergence is quick.
  Eigen::VectorXd v = Eigen::VectorXd::Ones(config_.shape_dim).normalized();
  const Eigen::MatrixXd gram = stacked.transpose() * stacked;
  for (int it = 0; it < 100; ++it) {
    v = (gram * v).normalized();
  }
  return std::sqrt(v.dot(gram * v));
}

void export_obj(const std::string& path, const TriangleMesh& mesh) {
  std::ofstream out(path);
  if (!out) {
    throw std::invalid_argument("export_obj: cannot open " + path);
  }
  out << "# vertices with rgb, normals, faces\n";
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& p = mesh.vertices[i];
    out << "v " << p.x() << " " << p.y() << " " << p.z();
    if (i < mesh.albedo.size()) {
      const Vec3& a = mesh.albedo[i];
      out << " " << a.x() << " " << a.y() << " " << a.z();
    }
    out << "\n";
  }
  for (const Vec3& n : mesh.normals) {
    out << "vn " << n.x() << " " << n.y() << " " << n.z() << "\n";
  }
  for (const auto& f : mesh.faces) {
    out << "f " << f.x() + 1 << "//" << f.x() + 1 << " " << f.y() + 1 << "//"
        << f.y() + 1 << " " << f.z() + 1 << "//" << f.z() + 1 << "\n";
  }
}

}  // namespace irt
