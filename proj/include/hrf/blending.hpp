#pragma once

#include "hrf/field_renderer.hpp"

#include <utility>

namespace hrf {

class BlendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BlendSettings {
  double visibility_threshold = 0.02;  // meters, before scene scaling
  double scene_scale = 1.0;
  double residual_cap = 1.0;  // meters
  double background_alpha = 0.05;

  double epsilon() const { return visibility_threshold * scene_scale; }
};

/// The two sources whose optical axes are angularly closest to the
/// target's in the horizontal plane, one on each side when possible.
std::pair<int, int> select_adjacent_views(const Camera& target, const std::vector<Camera>& sources);

/// One source view as seen by the warp: camera, colour, range depth and
/// encoder features.
template <typename Scalar>
struct BlendSource {
  const Camera* camera = nullptr;
  const Image* rgb = nullptr;
  const Image* depth = nullptr;  // meters along pixel rays, 0 = no surface
  const Tensor<Scalar>* features = nullptr;
};

struct WarpSample {
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  Eigen::VectorXd feature;
  double visibility = 0.0;
  double residual = 0.0;
  double cos_theta = 0.0;
  bool in_bounds = false;
};

/// Back-projects target pixel q at range target_depth and looks it up in
/// the source view. Colour and features are bilinear; the residual is the
/// closest match among the 3x3 source depth texels around the projection.
template <typename Scalar>
WarpSample warp_fetch(const Camera& target, const Eigen::Vector2d& q, double target_depth,
                      const BlendSource<Scalar>& source, const BlendSettings& settings);

/// Per-pixel network inputs for N target pixels.
template <typename Scalar>
struct BlendInputs {
  Matrix<Scalar> first_color;   // N x 3
  Matrix<Scalar> second_color;  // N x 3
  Matrix<Scalar> volume_color;  // N x 3
  Matrix<Scalar> features;      // N x 2(C+3): [f, O, residual, cos] per view
};

template <typename Scalar>
BlendInputs<Scalar> gather_blend_inputs(const Camera& target, const std::vector<Eigen::Vector2i>& pixels,
                                        const Image& target_depth, const Image& volume_rgb,
                                        const BlendSource<Scalar>& first, const BlendSource<Scalar>& second,
                                        int feature_channels, const BlendSettings& settings);

template <typename Scalar>
struct BlendOutput {
  Var<Scalar> color;    // N x 3
  Var<Scalar> weights;  // N x 3, rows sum to one
};

/// W = softmax(MLP_A(features)); C = W1 C_first + W2 C_volume + W3 C_second.
template <typename Scalar>
BlendOutput<Scalar> blend(const BoundParameters<Scalar>& appearance, const BlendInputs<Scalar>& inputs);

/// sum_j weights(:, j) * candidates[j], differentiable in both.
template <typename Scalar>
Var<Scalar> convex_combine(const Var<Scalar>& weights, const std::vector<Var<Scalar>>& candidates);

/// Refines a volume-rendered view: every pixel with a surface (alpha above
/// the background threshold) is blended from its two adjacent sources.
template <typename Scalar>
Image blend_view(const HumanModel<Scalar>& model, const Camera& target, const RenderedView& volume,
                 const std::vector<BlendSource<Scalar>>& sources, const BlendSettings& settings);

}  // namespace hrf
