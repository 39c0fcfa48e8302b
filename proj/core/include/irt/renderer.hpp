// Soft differentiable rasterizer. Every triangle contributes a sigmoid
// silhouette in screen space; per-object masks are the probabilistic union
// of triangle coverages, colors come from the nearest front-facing triangle
// with perspective-correct interpolation, and scene composition blends
// objects front-to-back with clamped visibility weights.
//
// The scene-level entry point records everything needed to run the exact
// reverse pass: given per-pixel image/foreground gradients it returns
// gradients w.r.t. each object's shape code, texture code, translation,
// rotation (exp-map tangent) and log-scale.

#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "irt/geometry.hpp"
#include "irt/image.hpp"
#include "irt/prior.hpp"

namespace irt {

struct RenderConfig {
  double sharpness = 40.0;      // silhouette sigmoid slope, 1/pixel
  Vec3 light_direction = Vec3(0.3, -1.0, 0.5);  // camera frame, toward light
  double ambient = 0.4;
  double diffuse_sharpness = 8.0;  // softplus knee of the diffuse clamp
};

/// Axis-aligned pixel rectangle in full-frame coordinates.
struct PatchRect {
  int x0 = 0;
  int y0 = 0;
  int width = 0;
  int height = 0;

  bool contains(int x, int y) const {
    return x >= x0 && x < x0 + width && y >= y0 && y < y0 + height;
  }
};

PatchRect full_frame(const Camera& cam);

/// Single-object raster output. rgb holds the raw surface color (zero where
/// the mask is zero), mask the soft silhouette, depth the camera-frame depth
/// of the winning surface (+inf where empty). All patches share `roi`.
struct ObjectRender {
  Image rgb;
  Image mask;
  Image depth;
  PatchRect roi;
};

/// Rasterizes one mesh given its metric object-to-camera transform. The
/// transform's linear part must be rotation times uniform scale (normals are
/// rotated, not sheared). Throws std::invalid_argument if any vertex lands
/// on or behind the near plane.
ObjectRender rasterize_object(const TriangleMesh& mesh,
                              const Mat4& object_to_cam, const Camera& cam,
                              const RenderConfig& cfg,
                              const PatchRect* roi = nullptr);

/// Distance-ordered composite of per-object renders. weights[p] is the
/// visibility weight of input object p (full frame); foreground is the
/// clamped union of all masks.
struct SceneComposite {
  Image image;
  Image foreground;
  std::vector<Image> weights;
};

SceneComposite composite_scene(const std::vector<ObjectRender>& renders,
                               const std::vector<double>& distances, int width,
                               int height);

/// One object instance in a scene: latent code plus world pose and scale.
struct SceneObject {
  LatentPair latents;
  Pose pose;
  double scale = 1.0;
};

/// Gradients of a scalar loss w.r.t. one object's parameters.
struct ObjectGrads {
  Eigen::VectorXd z_shape;
  Eigen::VectorXd z_texture;
  Vec3 translation = Vec3::Zero();
  Vec3 rotation = Vec3::Zero();
  double log_scale = 0.0;
  bool culled = false;
};

class SceneRenderImpl;

/// Forward render of a scene with a retained tape for the reverse pass.
class SceneRender {
 public:
  SceneRender(SceneRender&&) noexcept;
  SceneRender& operator=(SceneRender&&) noexcept;
  ~SceneRender();

  const SceneComposite& composite() const;
  const std::vector<ObjectRender>& object_renders() const;
  /// Camera-frame distance of each object's center (compositing key).
  const std::vector<double>& distances() const;
  bool culled(int object) const;

  /// Reverse pass: consumes dL/d(composite image) [3ch] and
  /// dL/d(foreground mask) [1ch], both full frame, and returns per-object
  /// parameter gradients. Visibility weights are treated as constants of
  /// the blend, matching the forward clamp.
  std::vector<ObjectGrads> backward(const Image& dL_dimage,
                                    const Image& dL_dforeground) const;

 private:
  friend SceneRender render_scene(const Generator&,
                                  const std::vector<SceneObject>&,
                                  const Camera&, const RenderConfig&,
                                  const std::vector<PatchRect>*);
  SceneRender();
  std::unique_ptr<SceneRenderImpl> impl_;
};

/// Renders all objects and composites them. Objects with any vertex behind
/// the near plane are culled (flagged, zero contribution, zero gradients);
/// with every object culled the composite is legitimately empty. Optional
/// per-object ROIs restrict rasterization to patches (clipped to the frame).
SceneRender render_scene(const Generator& gen,
                         const std::vector<SceneObject>& objects,
                         const Camera& cam, const RenderConfig& cfg,
                         const std::vector<PatchRect>* rois = nullptr);

}  // namespace irt
