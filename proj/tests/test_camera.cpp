#include "gradcheck.hpp"
#include "hrf/camera.hpp"

#include <doctest.h>

#include <cmath>

using namespace hrf;

namespace {

Camera test_camera() {
  Intrinsics k{80.0, 80.0, 31.5, 31.5};
  return Camera::look_at({1.0, 1.2, 3.0}, {0.0, 0.9, 0.0}, {0.0, 1.0, 0.0}, k, 64, 64);
}

}  // namespace

TEST_CASE("projection of axis and behind-camera points") {
  const Camera cam = test_camera();
  const Eigen::Vector3d p = cam.center() + 2.5 * cam.forward();
  const Projection pr = cam.project(p);
  CHECK(pr.in_front);
  CHECK(pr.depth == doctest::Approx(2.5));
  CHECK(pr.pixel.x() == doctest::Approx(31.5));
  CHECK(pr.pixel.y() == doctest::Approx(31.5));
  CHECK_FALSE(cam.project(cam.center() - 1.0 * cam.forward()).in_front);
}

TEST_CASE("generate_ray and project round trip") {
  const Camera cam = test_camera();
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector2d q(64.0 * uniform01(rng) - 0.5, 64.0 * uniform01(rng) - 0.5);
    const double t = 0.5 + 5.0 * uniform01(rng);
    const Eigen::Vector2d back = cam.project(cam.generate_ray(q).at(t)).pixel;
    CHECK((back - q).norm() < 1e-4);
  }
}

TEST_CASE("ray directions") {
  const Camera cam = test_camera();
  const Ray principal = cam.generate_ray({31.5, 31.5});
  CHECK((principal.direction - cam.forward()).norm() < 1e-12);
  CHECK(principal.direction.norm() == doctest::Approx(1.0));

  const Ray a = cam.generate_ray({31.5, 31.5}), b = cam.generate_ray({32.5, 31.5});
  const double angle = std::acos(std::clamp(a.direction.dot(b.direction), -1.0, 1.0));
  CHECK(angle == doctest::Approx(1.0 / 80.0).epsilon(1e-3));

  // The centre lies on the ray only at t = 0.
  CHECK((a.at(0.0) - cam.center()).norm() < 1e-12);
  CHECK((a.at(0.3) - cam.center()).norm() == doctest::Approx(0.3));
}

TEST_CASE("invalid cameras are rejected") {
  Intrinsics k{80.0, 80.0, 31.5, 31.5};
  CHECK_THROWS_AS(Camera(Intrinsics{0.0, 1.0, 0.0, 0.0}, Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero(), 8, 8),
                  CameraError);
  CHECK_THROWS_AS(Camera(k, 2.0 * Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero(), 8, 8), CameraError);
  CHECK_THROWS_AS(Camera::look_at({0, 2, 0}, {0, 0, 0}, {0, 1, 0}, k, 8, 8), CameraError);
}

TEST_CASE("positional encoding sizes and values") {
  CHECK(positional_encode(Eigen::VectorXd::Zero(3), 10).size() == 63);
  CHECK(positional_encode(Eigen::VectorXd::Zero(3), 4).size() == 27);
  CHECK(positional_encode(Eigen::VectorXd::Zero(24), 4).size() == 216);

  const Eigen::VectorXd z = positional_encode(Eigen::VectorXd::Zero(2), 3);
  for (int l = 0; l < 3; ++l) {
    for (int d = 0; d < 2; ++d) {
      CHECK(z[2 + 4 * l + d] == 0.0);      // sin
      CHECK(z[2 + 4 * l + 2 + d] == 1.0);  // cos
    }
  }
  CHECK(z[0] == 0.0);
  CHECK(z[1] == 0.0);

  Eigen::VectorXd x(1);
  x << 0.3;
  const Eigen::VectorXd e = positional_encode(x, 2);
  CHECK(e[0] == 0.3);
  CHECK(e[1] == doctest::Approx(std::sin(M_PI * 0.3)));
  CHECK(e[2] == doctest::Approx(std::cos(M_PI * 0.3)));
  CHECK(e[3] == doctest::Approx(std::sin(2 * M_PI * 0.3)));
  CHECK(e[4] == doctest::Approx(std::cos(2 * M_PI * 0.3)));
}

TEST_CASE("positional encoding rows agree with the vector form and are differentiable") {
  Rng rng(2);
  Matrix<double> x(5, 3);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = 2.0 * uniform01(rng) - 1.0;
  const Matrix<double> rows = positional_encode_rows<double>(x, 4);
  for (Index r = 0; r < 5; ++r) {
    const Eigen::VectorXd v = positional_encode(x.row(r).transpose().eval(), 4);
    CHECK((rows.row(r).transpose() - v).norm() < 1e-12);
  }
  std::vector<Index> picks(x.size());
  for (Index i = 0; i < x.size(); ++i) picks[i] = i;
  auto build = [](Tape<double>&, const Var<double>& v) {
    Rng proj(3);
    return hrf::testing::project(positional_encode(v, 4), proj);
  };
  CHECK(hrf::testing::passes(hrf::testing::check_input(x, Shape{5, 3}, build, picks), 1e-4));
}

TEST_CASE("ray and box intersection") {
  const Aabb unit{{0, 0, 0}, {1, 1, 1}};
  Ray r;
  r.origin = {-2.0, 0.5, 0.5};
  r.direction = {1.0, 0.0, 0.0};
  auto hit = ray_bounds(r, unit);
  REQUIRE(hit);
  CHECK(hit->near == doctest::Approx(2.0));
  CHECK(hit->far == doctest::Approx(3.0));

  r.origin = {-2.0, 2.0, 0.5};
  CHECK_FALSE(ray_bounds(r, unit));

  const Aabb point{{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}};
  r.origin = {-2.0, 0.5, 0.5};
  CHECK_FALSE(ray_bounds(r, point));

  Rng rng(4);
  for (int i = 0; i < 500; ++i) {
    Ray q;
    q.origin = Eigen::Vector3d(uniform01(rng), uniform01(rng), uniform01(rng)) * 6.0 - Eigen::Vector3d::Constant(3.0);
    q.direction = Eigen::Vector3d(uniform01(rng) - 0.5, uniform01(rng) - 0.5, uniform01(rng) - 0.5).normalized();
    if (auto b = ray_bounds(q, unit)) CHECK(b->far > b->near);
  }
}
