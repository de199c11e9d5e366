#pragma once

#include "hrf/tensor.hpp"

#include <Eigen/Geometry>

#include <limits>
#include <optional>
#include <stdexcept>

namespace hrf {

class CameraError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
};

struct Projection {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  double depth = 0.0;  // camera-space z
  bool in_front = false;
};

struct Ray {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d direction = Eigen::Vector3d::UnitZ();
  double near = 0.0;
  double far = 0.0;

  bool has_bounds() const { return far > near && near > 0.0; }
  Eigen::Vector3d at(double t) const { return origin + t * direction; }
};

struct Interval {
  double near = 0.0;
  double far = 0.0;
};

struct Aabb {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Zero();

  template <typename Range>
  static Aabb around(const Range& points) {
    Aabb box{Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity()),
             Eigen::Vector3d::Constant(-std::numeric_limits<double>::infinity())};
    for (const Eigen::Vector3d& p : points) {
      box.min = box.min.cwiseMin(p);
      box.max = box.max.cwiseMax(p);
    }
    return box;
  }
  Aabb dilated(double margin) const {
    return {min - Eigen::Vector3d::Constant(margin), max + Eigen::Vector3d::Constant(margin)};
  }
  bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

/// Pinhole camera. World-to-camera rigid transform; the camera looks down
/// +z with image x to the right and y down. Pixel (i, j) has its centre at
/// continuous coordinate (i, j).
class Camera {
 public:
  Camera() = default;
  Camera(Intrinsics intrinsics, const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation, int width,
         int height);

  /// Camera at eye looking at target; world_up picks the roll.
  static Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& world_up,
                        Intrinsics intrinsics, int width, int height);

  const Intrinsics& intrinsics() const { return intrinsics_; }
  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }
  int width() const { return width_; }
  int height() const { return height_; }

  Eigen::Vector3d center() const { return -rotation_.transpose() * translation_; }
  Eigen::Vector3d forward() const { return rotation_.row(2).transpose(); }
  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const { return rotation_ * world + translation_; }

  Projection project(const Eigen::Vector3d& world) const;
  Ray generate_ray(const Eigen::Vector2d& pixel) const;
  /// Point at distance `range` along the ray through pixel.
  Eigen::Vector3d unproject(const Eigen::Vector2d& pixel, double range) const {
    return generate_ray(pixel).at(range);
  }

  bool operator==(const Camera& other) const;

 private:
  Intrinsics intrinsics_;
  Eigen::Matrix3d rotation_ = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation_ = Eigen::Vector3d::Zero();
  int width_ = 1;
  int height_ = 1;
};

/// Slab test against box. The near bound is clamped to at least 1e-3;
/// std::nullopt when the ray misses or the interval is empty.
std::optional<Interval> ray_bounds(const Ray& ray, const Aabb& box);

inline int encoded_size(int dims, int frequencies) { return dims * (1 + 2 * frequencies); }

/// [x, sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^(L-1) pi x), cos(2^(L-1) pi x)].
Eigen::VectorXd positional_encode(const Eigen::VectorXd& x, int frequencies);

/// Row-wise encoding of an N x D matrix.
template <typename Scalar>
Matrix<Scalar> positional_encode_rows(const Matrix<Scalar>& x, int frequencies);

/// Differentiable row-wise encoding.
template <typename Scalar>
Var<Scalar> positional_encode(const Var<Scalar>& x, int frequencies);

}  // namespace hrf
