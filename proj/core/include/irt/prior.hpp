// Latent mesh prior: a fixed superellipsoid template with a seeded bank of
// smooth displacement fields (shape space) and a seeded low-order color
// field (texture space). Both latent spaces are small, deterministic for a
// given seed, and differentiable everywhere.
//
// Canonical frame: x = length (forward), y = width, z = height (up). The
// template occupies half-extents (0.5, 0.21, 0.18); admissible latents keep
// every displaced vertex inside [-0.8, 0.8]^3.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "irt/geometry.hpp"

namespace irt {

/// Per-object latent code: shape coefficients and texture coefficients.
struct LatentPair {
  Eigen::VectorXd shape;
  Eigen::VectorXd texture;
};

/// Watertight triangle mesh with per-vertex unit normals and RGB albedo.
/// Faces are wound counter-clockwise when seen from outside.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Vec3> normals;
  std::vector<Eigen::Vector3i> faces;
  std::vector<Vec3> albedo;
};

struct GeneratorConfig {
  int shape_dim = 8;
  int texture_dim = 12;   // 3 channel offsets + brightness + spatial terms
  int subdivision = 9;    // cube-sphere grid resolution per face
  std::uint64_t seed = 42;
};

/// Albedo and its per-channel logit slopes for every template vertex;
/// the slopes are what the renderer needs to push pixel gradients back
/// into the texture code.
struct VertexColors {
  std::vector<Vec3> albedo;
  std::vector<Vec3> dalbedo_dlogit;
};

class Generator {
 public:
  explicit Generator(GeneratorConfig config = {});

  const GeneratorConfig& config() const { return config_; }
  int vertex_count() const { return static_cast<int>(template_.vertices.size()); }
  int face_count() const { return static_cast<int>(template_.faces.size()); }

  /// Neutral-gray template (all-zero latents leave it untouched).
  const TriangleMesh& template_mesh() const { return template_; }

  /// Displacement field of shape coefficient k, one vector per vertex.
  /// Columns are scaled so max_i ||column_k[i]||_inf = 0.05.
  const std::vector<Vec3>& shape_basis_column(int k) const;

  /// Template vertices displaced by the weighted basis columns.
  std::vector<Vec3> deform_shape(const Eigen::VectorXd& z_shape) const;

  /// Color of the texture field at an arbitrary canonical-frame position.
  Vec3 shade_texture(const Eigen::VectorXd& z_texture, const Vec3& position) const;

  /// Albedo (plus logit slopes) for all template vertices at once.
  VertexColors shade_vertices(const Eigen::VectorXd& z_texture) const;

  /// Scatters a single vertex's albedo gradient into dL/dz_texture.
  void accumulate_texture_grad(const VertexColors& colors, int vertex,
                               const Vec3& dL_dalbedo,
                               Eigen::VectorXd& grad) const;

  /// Full mesh for a latent code: deformed vertices, template normals,
  /// shaded per-vertex albedo.
  TriangleMesh generate(const LatentPair& z) const;

  /// Spectral norm of the stacked displacement basis (3V x shape_dim),
  /// i.e. the Lipschitz constant of the vertex map w.r.t. z_shape.
  double shape_basis_spectral_norm() const;

  static constexpr double kHalfExtentX = 0.5;
  static constexpr double kHalfExtentY = 0.21;
  static constexpr double kHalfExtentZ = 0.18;
  static constexpr double kSuperellipsoidExponent = 6.0;
  static constexpr double kBasisColumnMaxInf = 0.05;

 private:
  GeneratorConfig config_;
  TriangleMesh template_;
  // basis_[k][i] = displacement of vertex i under shape coefficient k.
  std::vector<std::vector<Vec3>> basis_;
  // Per-vertex 3 x (texture_dim - 4) spatial response matrices.
  std::vector<Eigen::MatrixXd> spatial_response_;
  // Seeded 3 x 8 monomial mixing weights per spatial texture coefficient.
  std::vector<Eigen::Matrix<double, 3, 8>> texture_weights_;

  Eigen::Matrix<double, 8, 1> monomials(const Vec3& position) const;
};

/// Writes a mesh as Wavefront-style text ("v x y z r g b" / "vn" / "f"),
/// handy for inspecting templates and fitted shapes in external viewers.
void export_obj(const std::string& path, const TriangleMesh& mesh);

}  // namespace irt
