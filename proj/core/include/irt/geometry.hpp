// Rigid-body math: so(3) exp/log maps, object-to-camera transforms and
// pinhole projection. All functions are pure and safe to call concurrently.

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace irt {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Geometry closer than this to the camera plane is culled before rasterization.
inline constexpr double kNearPlane = 0.1;

/// Skew-symmetric matrix such that skew(v) * u = v x u.
Mat3 skew(const Vec3& v);

/// Rodrigues exponential map so(3) -> SO(3). Uses a series expansion for
/// ||omega|| < 1e-6. Throws std::invalid_argument on non-finite input.
Mat3 so3_exp(const Vec3& omega);

/// Principal logarithm SO(3) -> so(3), ||result|| in [0, pi]. Throws
/// std::invalid_argument if R is not orthonormal within 1e-6.
Vec3 so3_log(const Mat3& rotation);

/// Left Jacobian of SO(3); relates tangent perturbations to group
/// perturbations, exp(omega + d) ~ exp(J_l(omega) d) * exp(omega).
Mat3 so3_left_jacobian(const Vec3& omega);

/// Derivative of the rotated vector R(omega) * v with respect to omega,
/// as a 3x3 matrix (row i = d(Rv)_i / d omega).
Mat3 rotate_vector_jacobian(const Vec3& omega, const Vec3& v);

/// Wraps an angle to (-pi, pi].
double wrap_angle(double theta);

// Rigid pose as translation + axis-angle rotation vector. The pose maps
// local coordinates to the reference frame: X_ref = R(omega) * X_local + t.
struct Pose {
  Vec3 t = Vec3::Zero();
  Vec3 omega = Vec3::Zero();

  Mat3 rotation() const { return so3_exp(omega); }
  Mat4 matrix() const;
  Mat4 inverse_matrix() const;

  /// Re-expresses omega on the principal branch, ||omega|| in [0, pi].
  Pose canonicalized() const;

  /// Heading about the reference z (up) axis, from the canonical log map.
  double yaw() const { return canonicalized().omega.z(); }

  static Pose from_translation(const Vec3& t) { return Pose{t, Vec3::Zero()}; }
  static Pose from_yaw(double psi, const Vec3& t = Vec3::Zero()) {
    return Pose{t, Vec3(0.0, 0.0, psi)};
  }
};

// Pinhole camera. `pose` maps camera coordinates to the reference frame;
// the camera looks down its local +z axis, image origin top-left.
struct Camera {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  Pose pose;

  Mat3 intrinsics() const;
};

/// Throws std::invalid_argument unless fx,fy > 0 and the principal point
/// lies inside the image.
void validate_camera(const Camera& cam);

// A latent-prior object placed in the scene graph: reference-frame pose
// plus one isotropic scale (meters per canonical unit).
struct ObjectNode {
  Pose pose;
  double scale = 1.0;
};

/// Object-to-camera transform with the object kept at canonical (unit)
/// scale: the spatial 3x4 block of inv(T_cam) * T_obj is divided by the
/// object scale, so camera-frame quantities come out in canonical units.
/// Projection through the intrinsics is invariant to that uniform scaling.
/// Throws std::invalid_argument if scale <= 0.
Mat4 object_to_camera(const ObjectNode& obj, const Camera& cam);

/// Metric object-to-camera transform: maps canonical vertices directly to
/// camera coordinates in meters (scale folded into the linear part).
Mat4 object_to_camera_metric(const ObjectNode& obj, const Camera& cam);

struct ProjectedPoint {
  double u = 0, v = 0;
  double depth = 0;
  bool behind = false;  // depth <= near plane
};

/// Pinhole projection of a camera-frame point. Points at or behind the
/// near plane are flagged, not errors.
ProjectedPoint project_point(const Camera& cam, const Vec3& x_cam);

}  // namespace irt
