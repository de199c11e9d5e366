#include "hrf/camera.hpp"

#include <cmath>
#include <numbers>

namespace hrf {

Camera::Camera(Intrinsics intrinsics, const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation, int width,
               int height)
    : intrinsics_(intrinsics), rotation_(rotation), translation_(translation), width_(width), height_(height) {
  if (!(intrinsics.fx > 0.0 && intrinsics.fy > 0.0)) throw CameraError("camera: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw CameraError("camera: image size must be positive");
  if (!(rotation.transpose() * rotation).isApprox(Eigen::Matrix3d::Identity(), 1e-6) ||
      std::abs(rotation.determinant() - 1.0) > 1e-6) {
    throw CameraError("camera: rotation is not orthonormal with det +1");
  }
}

Camera Camera::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& world_up,
                       Intrinsics intrinsics, int width, int height) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  Eigen::Vector3d right = forward.cross(world_up);
  if (right.norm() < 1e-9) throw CameraError("camera: view direction parallel to up vector");
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d rotation;
  rotation.row(0) = right.transpose();
  rotation.row(1) = down.transpose();
  rotation.row(2) = forward.transpose();
  return Camera(intrinsics, rotation, -rotation * eye, width, height);
}

Projection Camera::project(const Eigen::Vector3d& world) const {
  const Eigen::Vector3d c = to_camera(world);
  Projection out;
  out.depth = c.z();
  out.in_front = c.z() > 0.0;
  if (std::abs(c.z()) > 1e-12) {
    out.pixel = {intrinsics_.fx * c.x() / c.z() + intrinsics_.cx, intrinsics_.fy * c.y() / c.z() + intrinsics_.cy};
  } else {
    out.pixel = Eigen::Vector2d::Constant(std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

Ray Camera::generate_ray(const Eigen::Vector2d& pixel) const {
  const Eigen::Vector3d local((pixel.x() - intrinsics_.cx) / intrinsics_.fx, (pixel.y() - intrinsics_.cy) / intrinsics_.fy,
                              1.0);
  Ray ray;
  ray.origin = center();
  ray.direction = (rotation_.transpose() * local).normalized();
  return ray;
}

bool Camera::operator==(const Camera& o) const {
  return intrinsics_.fx == o.intrinsics_.fx && intrinsics_.fy == o.intrinsics_.fy && intrinsics_.cx == o.intrinsics_.cx &&
         intrinsics_.cy == o.intrinsics_.cy && rotation_ == o.rotation_ && translation_ == o.translation_ &&
         width_ == o.width_ && height_ == o.height_;
}

std::optional<Interval> ray_bounds(const Ray& ray, const Aabb& box) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a], d = ray.direction[a];
    if (std::abs(d) < 1e-15) {
      if (o < box.min[a] || o > box.max[a]) return std::nullopt;
      continue;
    }
    double ta = (box.min[a] - o) / d, tb = (box.max[a] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  const double near = std::max(t0, 1e-3);
  if (!(t1 > near)) return std::nullopt;
  return Interval{near, t1};
}

Eigen::VectorXd positional_encode(const Eigen::VectorXd& x, int frequencies) {
  const Index d = x.size();
  Eigen::VectorXd out(encoded_size(static_cast<int>(d), frequencies));
  out.head(d) = x;
  double freq = std::numbers::pi;
  for (int l = 0; l < frequencies; ++l, freq *= 2.0) {
    out.segment(d + 2 * l * d, d) = (freq * x.array()).sin().matrix();
    out.segment(d + (2 * l + 1) * d, d) = (freq * x.array()).cos().matrix();
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> positional_encode_rows(const Matrix<Scalar>& x, int frequencies) {
  const Index d = x.cols();
  Matrix<Scalar> out(x.rows(), encoded_size(static_cast<int>(d), frequencies));
  out.leftCols(d) = x;
  Scalar freq = std::numbers::pi_v<Scalar>;
  for (int l = 0; l < frequencies; ++l, freq *= Scalar(2)) {
    out.middleCols(d + 2 * l * d, d) = (freq * x.array()).sin().matrix();
    out.middleCols(d + (2 * l + 1) * d, d) = (freq * x.array()).cos().matrix();
  }
  return out;
}

template <typename Scalar>
Var<Scalar> positional_encode(const Var<Scalar>& x, int frequencies) {
  Matrix<Scalar> out = positional_encode_rows<Scalar>(x.value(), frequencies);
  const int ix = x.id();
  const Index d = x.cols();
  return x.tape().record(Tensor<Scalar>::from_matrix(std::move(out)), {ix}, [ix, d, frequencies](Tape<Scalar>& t, int self) {
    const auto& g = t.out_grad(self);
    const auto& y = t.value(self);
    Matrix<Scalar> gx = g.leftCols(d);
    Scalar freq = std::numbers::pi_v<Scalar>;
    for (int l = 0; l < frequencies; ++l, freq *= Scalar(2)) {
      // d sin(fx) = f cos(fx); d cos(fx) = -f sin(fx); both already stored in y.
      const auto sin_block = y.middleCols(d + 2 * l * d, d).array();
      const auto cos_block = y.middleCols(d + (2 * l + 1) * d, d).array();
      gx.array() += freq * (g.middleCols(d + 2 * l * d, d).array() * cos_block -
                            g.middleCols(d + (2 * l + 1) * d, d).array() * sin_block);
    }
    t.accumulate(ix, gx);
  });
}

template Matrix<float> positional_encode_rows(const Matrix<float>&, int);
template Matrix<double> positional_encode_rows(const Matrix<double>&, int);
template Var<float> positional_encode(const Var<float>&, int);
template Var<double> positional_encode(const Var<double>&, int);

}  // namespace hrf
