#include "irt/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace irt {

Mat3 skew(const Vec3& v) {
  Mat3 s;
  // clang-format off
  s <<     0, -v.z(),  v.y(),
       v.z(),      0, -v.x(),
      -v.y(),  v.x(),      0;
  // clang-format on
  return s;
}

Mat3 so3_exp(const Vec3& omega) {
  if (!omega.allFinite()) {
    throw std::invalid_argument("so3_exp: non-finite rotation vector");
  }
  const double theta2 = omega.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 w = skew(omega);
  double a, b;  // R = I + a*w + b*w^2
  if (theta < 1e-6) {
    a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0;
    b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Mat3::Identity() + a * w + b * (w * w);
}

Vec3 so3_log(const Mat3& rotation) {
  const double ortho_err = (rotation.transpose() * rotation - Mat3::Identity())
                               .cwiseAbs()
                               .maxCoeff();
  if (!rotation.allFinite() || ortho_err > 1e-6 ||
      rotation.determinant() < 0.0) {
    throw std::invalid_argument("so3_log: input is not a rotation matrix");
  }
  Eigen::AngleAxisd aa(rotation);
  double angle = aa.angle();
  Vec3 axis = aa.axis();
  // Eigen returns angle in [0, pi]; fold the boundary just in case.
  if (angle > M_PI) {
    angle = 2.0 * M_PI - angle;
    axis = -axis;
  }
  if (angle < 1e-12) return Vec3::Zero();
  return angle * axis;
}

Mat3 so3_left_jacobian(const Vec3& omega) {
  const double theta2 = omega.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 w = skew(omega);
  double c1, c2;  // J = I + c1*w + c2*w^2
  if (theta < 1e-4) {
    c1 = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
    c2 = 1.0 / 6.0 - theta2 / 120.0 + theta2 * theta2 / 5040.0;
  } else {
    c1 = (1.0 - std::cos(theta)) / theta2;
    c2 = (theta - std::sin(theta)) / (theta2 * theta);
  }
  return Mat3::Identity() + c1 * w + c2 * (w * w);
}

Mat3 rotate_vector_jacobian(const Vec3& omega, const Vec3& v) {
  // exp((J_l d)^) R v ~ Rv + (J_l d) x (Rv)  =>  d(Rv)/domega = -[Rv]x J_l.
  const Vec3 rv = so3_exp(omega) * v;
  return -skew(rv) * so3_left_jacobian(omega);
}

double wrap_angle(double theta) {
  double wrapped = std::remainder(theta, 2.0 * M_PI);
  if (wrapped <= -M_PI) wrapped += 2.0 * M_PI;
  return wrapped;
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation();
  m.topRightCorner<3, 1>() = t;
  return m;
}

Mat4 Pose::inverse_matrix() const {
  const Mat3 rt = rotation().transpose();
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rt;
  m.topRightCorner<3, 1>() = -rt * t;
  return m;
}

Pose Pose::canonicalized() const {
  return Pose{t, so3_log(so3_exp(omega))};
}

Mat3 Camera::intrinsics() const {
  Mat3 k = Mat3::Zero();
  k(0, 0) = fx;
  k(1, 1) = fy;
  k(0, 2) = cx;
  k(1, 2) = cy;
  k(2, 2) = 1.0;
  return k;
}

void validate_camera(const Camera& cam) {
  if (!(cam.fx > 0.0) || !(cam.fy > 0.0)) {
    throw std::invalid_argument("camera: focal lengths must be positive");
  }
  if (cam.cx < 0.0 || cam.cx >= cam.width || cam.cy < 0.0 ||
      cam.cy >= cam.height) {
    throw std::invalid_argument("camera: principal point outside image");
  }
}

Mat4 object_to_camera(const ObjectNode& obj, const Camera& cam) {
  if (!(obj.scale > 0.0)) {
    throw std::invalid_argument("object_to_camera: scale must be positive");
  }
  Mat4 rel = cam.pose.inverse_matrix() * obj.pose.matrix();
  rel.topRows<3>() /= obj.scale;  // homogeneous row unchanged
  return rel;
}

Mat4 object_to_camera_metric(const ObjectNode& obj, const Camera& cam) {
  if (!(obj.scale > 0.0)) {
    throw std::invalid_argument(
        "object_to_camera_metric: scale must be positive");
  }
  Mat4 rel = cam.pose.inverse_matrix() * obj.pose.matrix();
  rel.topLeftCorner<3, 3>() *= obj.scale;
  return rel;
}

ProjectedPoint project_point(const Camera& cam, const Vec3& x_cam) {
  ProjectedPoint out;
  out.depth = x_cam.z();
  out.behind = !(x_cam.z() > kNearPlane);
  const double z = out.behind ? kNearPlane : x_cam.z();
  out.u = cam.fx * x_cam.x() / z + cam.cx;
  out.v = cam.fy * x_cam.y() / z + cam.cy;
  return out;
}

}  // namespace irt
