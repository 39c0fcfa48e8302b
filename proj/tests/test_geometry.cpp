#include "irt/geometry.hpp"

#include <cmath>

#include "doctest.h"
#include "irt/rng.hpp"

using namespace irt;

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

Vec3 random_axis_angle(Rng& rng, double max_norm) {
  Vec3 v(rng.normal(), rng.normal(), rng.normal());
  if (v.norm() < 1e-12) v = Vec3(1, 0, 0);
  return v.normalized() * rng.uniform(0.0, max_norm);
}

}  // namespace

TEST_CASE("exp/log round trip over 10^4 random rotations") {
  Rng rng(101);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    // Stay slightly inside the principal branch; at exactly pi the sign of
    // the axis is ambiguous.
    const Vec3 omega = random_axis_angle(rng, kPi - 1e-3);
    const Vec3 back = so3_log(so3_exp(omega));
    worst = std::max(worst, (back - omega).norm());
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("exp/log handles the small-angle series branch") {
  Rng rng(102);
  for (int i = 0; i < 100; ++i) {
    const Vec3 omega = random_axis_angle(rng, 1e-7);
    const Mat3 R = so3_exp(omega);
    CHECK((R * R.transpose() - Mat3::Identity()).norm() < 1e-12);
    CHECK((so3_log(R) - omega).norm() < 1e-12);
  }
  CHECK(so3_exp(Vec3::Zero()).isApprox(Mat3::Identity()));
  CHECK(so3_log(Mat3::Identity()).norm() == 0.0);
}

TEST_CASE("exponentials are rotations") {
  Rng rng(103);
  for (int i = 0; i < 200; ++i) {
    const Mat3 R = so3_exp(random_axis_angle(rng, kPi));
    CHECK((R * R.transpose() - Mat3::Identity()).norm() < 1e-12);
    CHECK(R.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("rotate_vector_jacobian matches central differences") {
  Rng rng(104);
  const double h = 1e-6;
  for (int i = 0; i < 50; ++i) {
    const Vec3 omega = random_axis_angle(rng, 2.5);
    const Vec3 v(rng.normal(), rng.normal(), rng.normal());
    const Mat3 J = rotate_vector_jacobian(omega, v);
    for (int k = 0; k < 3; ++k) {
      Vec3 delta = Vec3::Zero();
      delta[k] = h;
      const Vec3 fd =
          (so3_exp(omega + delta) * v - so3_exp(omega - delta) * v) /
          (2.0 * h);
      CHECK((J.col(k) - fd).norm() < 1e-6 * std::max(1.0, fd.norm()));
    }
  }
}

TEST_CASE("left Jacobian relates tangent to group perturbations") {
  Rng rng(105);
  const double h = 1e-5;
  for (int i = 0; i < 50; ++i) {
    const Vec3 omega = random_axis_angle(rng, 2.5);
    const Mat3 Jl = so3_left_jacobian(omega);
    for (int k = 0; k < 3; ++k) {
      Vec3 delta = Vec3::Zero();
      delta[k] = h;
      // exp(omega + delta) * exp(omega)^T ~ exp(J_l delta)
      const Vec3 lhs =
          so3_log(so3_exp(omega + delta) * so3_exp(omega).transpose());
      CHECK((lhs - Jl * delta).norm() < 10.0 * h * h + 1e-12);
    }
  }
}

TEST_CASE("wrap_angle maps onto (-pi, pi]") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(-kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(1.5 * kPi) == doctest::Approx(-0.5 * kPi));
  CHECK(wrap_angle(2.0 * kPi) == doctest::Approx(0.0));
  Rng rng(106);
  for (int i = 0; i < 1000; ++i) {
    const double theta = rng.uniform(-50.0, 50.0);
    const double w = wrap_angle(theta);
    CHECK(w > -kPi - 1e-12);
    CHECK(w <= kPi + 1e-12);
    CHECK(std::remainder(theta - w, 2.0 * kPi) ==
          doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("pose yaw and canonicalization") {
  CHECK(Pose::from_yaw(0.7).yaw() == doctest::Approx(0.7));
  CHECK(Pose::from_yaw(4.0).yaw() == doctest::Approx(wrap_angle(4.0)));
  Rng rng(107);
  for (int i = 0; i < 100; ++i) {
    Pose pose{Vec3(rng.normal(), rng.normal(), rng.normal()),
              random_axis_angle(rng, 6.0)};
    const Pose canon = pose.canonicalized();
    CHECK(canon.omega.norm() <= kPi + 1e-12);
    CHECK((canon.rotation() - pose.rotation()).norm() < 1e-9);
    CHECK((pose.matrix() * pose.inverse_matrix() - Mat4::Identity()).norm() <
          1e-10);
  }
}

TEST_CASE("object_to_camera equals an independently assembled transform") {
  Rng rng(108);
  for (int i = 0; i < 50; ++i) {
    Camera cam;
    cam.fx = 120;
    cam.fy = 130;
    cam.cx = 32;
    cam.cy = 24;
    cam.width = 64;
    cam.height = 48;
    cam.pose = Pose{Vec3(rng.normal(), rng.normal(), rng.normal()),
                    random_axis_angle(rng, 2.0)};
    ObjectNode obj;
    obj.pose = Pose{Vec3(rng.normal(), rng.normal(), rng.normal()),
                    random_axis_angle(rng, 2.0)};
    obj.scale = rng.uniform(0.5, 5.0);

    // Oracle: full 4x4 algebra done with plain Eigen blocks.
    Mat4 cam_mat = Mat4::Identity();
    cam_mat.topLeftCorner<3, 3>() = cam.pose.rotation();
    cam_mat.topRightCorner<3, 1>() = cam.pose.t;
    Mat4 obj_mat = Mat4::Identity();
    obj_mat.topLeftCorner<3, 3>() = obj.pose.rotation();
    obj_mat.topRightCorner<3, 1>() = obj.pose.t;
    Mat4 expected = cam_mat.inverse() * obj_mat;
    expected.topRows<3>() /= obj.scale;

    const Mat4 canonical = object_to_camera(obj, cam);
    const Mat4 metric = object_to_camera_metric(obj, cam);
    CHECK((canonical - expected).norm() < 1e-9);
    CHECK((canonical * canonical.inverse() - Mat4::Identity()).norm() < 1e-10);

    for (int p = 0; p < 5; ++p) {
      const Vec3 v(rng.normal(), rng.normal(), rng.normal());
      // Metric transform reproduces the full composition: scale the
      // canonical vertex, place it with the object pose, view it from the
      // camera.
      const Vec3 placed =
          (cam_mat.inverse() * obj_mat *
           Eigen::Vector4d(obj.scale * v.x(), obj.scale * v.y(),
                           obj.scale * v.z(), 1.0))
              .head<3>();
      const Vec3 via_metric =
          (metric * Eigen::Vector4d(v.x(), v.y(), v.z(), 1.0)).head<3>();
      CHECK((via_metric - placed).norm() < 1e-9);

      // The canonical transform reports the same point in canonical units:
      // feeding it the scaled vertex yields the metric position over s, so
      // the two project to identical pixels.
      const Vec3 via_canonical =
          (canonical * Eigen::Vector4d(obj.scale * v.x(), obj.scale * v.y(),
                                       obj.scale * v.z(), 1.0))
              .head<3>();
      CHECK((obj.scale * via_canonical - via_metric).norm() < 1e-9);
      if (via_metric.z() > obj.scale * kNearPlane) {
        const ProjectedPoint a = project_point(cam, via_metric);
        const ProjectedPoint b = project_point(cam, via_canonical);
        CHECK(a.u == doctest::Approx(b.u).epsilon(1e-9));
        CHECK(a.v == doctest::Approx(b.v).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("object_to_camera hand-pinned case") {
  Camera cam;
  cam.fx = cam.fy = 100;
  cam.cx = 32;
  cam.cy = 24;
  cam.width = 64;
  cam.height = 48;
  ObjectNode obj;
  obj.pose = Pose::from_translation(Vec3(1, 0, 0));
  obj.scale = 2.0;
  Mat4 expected;
  // clang-format off
  expected << 0.5, 0,   0,   0.5,
              0,   0.5, 0,   0,
              0,   0,   0.5, 0,
              0,   0,   0,   1;
  // clang-format on
  CHECK((object_to_camera(obj, cam) - expected).norm() < 1e-12);
  CHECK((object_to_camera(ObjectNode{}, cam) - Mat4::Identity()).norm() <
        1e-12);
}

TEST_CASE("object_to_camera rejects non-positive scale") {
  Camera cam;
  cam.fx = cam.fy = 100;
  cam.cx = 32;
  cam.cy = 24;
  cam.width = 64;
  cam.height = 48;
  ObjectNode obj;
  obj.scale = 0.0;
  CHECK_THROWS_AS(object_to_camera(obj, cam), std::invalid_argument);
  obj.scale = -1.0;
  CHECK_THROWS_AS(object_to_camera_metric(obj, cam), std::invalid_argument);
}

TEST_CASE("pinhole projection hand example") {
  Camera cam;
  cam.fx = 100;
  cam.fy = 100;
  cam.cx = 50;
  cam.cy = 40;
  cam.width = 100;
  cam.height = 80;
  const ProjectedPoint p = project_point(cam, Vec3(1.0, 2.0, 4.0));
  CHECK(p.u == doctest::Approx(75.0));
  CHECK(p.v == doctest::Approx(90.0));
  CHECK(p.depth == doctest::Approx(4.0));
  CHECK_FALSE(p.behind);

  const ProjectedPoint behind = project_point(cam, Vec3(0.0, 0.0, 0.05));
  CHECK(behind.behind);
}

TEST_CASE("camera validation") {
  Camera cam;
  cam.fx = 100;
  cam.fy = 100;
  cam.cx = 32;
  cam.cy = 24;
  cam.width = 64;
  cam.height = 48;
  CHECK_NOTHROW(validate_camera(cam));
  Camera bad = cam;
  bad.fx = 0.0;
  CHECK_THROWS_AS(validate_camera(bad), std::invalid_argument);
  bad = cam;
  bad.cx = 100.0;  // principal point outside the image
  CHECK_THROWS_AS(validate_camera(bad), std::invalid_argument);
}

TEST_CASE("so3_exp rejects non-finite input") {
  CHECK_THROWS_AS(so3_exp(Vec3(std::nan(""), 0, 0)), std::invalid_argument);
}
