#pragma once

#include "hrf/camera.hpp"
#include "hrf/image.hpp"
#include "hrf/model_config.hpp"
#include "hrf/nn.hpp"

namespace hrf {

class FeatureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One calibrated camera with its RGB frame and binary mask.
struct SourceView {
  Camera camera;
  Image rgb;   // 3 channels in [0, 1]
  Image mask;  // 1 channel, 0 or 1
  int frame = 0;

  /// RGBA input to the encoder: RGB with background zeroed, mask last.
  Image encoder_input() const { return masked_rgba(rgb, mask); }
};

// --- Image encoder -----------------------------------------------------------

/// Spatial size must be divisible by this.
constexpr int kEncoderDownsampling = 8;

void check_encoder_size(int width, int height);

template <typename Scalar>
ParameterSet<Scalar> make_encoder(const ModelConfig& config);

/// Encoder-decoder with skip connections: [H, W, 4] -> [H, W, C].
template <typename Scalar>
Var<Scalar> extract_features(Tape<Scalar>& tape, const BoundParameters<Scalar>& encoder, const Image& rgba);

/// Same network on an [H, W, 4] node, differentiable in the input.
template <typename Scalar>
Var<Scalar> encode(const BoundParameters<Scalar>& encoder, const Var<Scalar>& x);

// --- Per-view fetch ----------------------------------------------------------

/// Feature fetched for one point from one view (single-point convenience).
struct PixelFetch {
  Eigen::VectorXd feature;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  Eigen::Vector3d source_dir = Eigen::Vector3d::Zero();  // unit(p - camera centre)
  double theta = 0.0;                                     // angle to the target ray, radians
  bool valid = false;
};

template <typename Scalar>
PixelFetch fetch(const Camera& camera, const Tensor<Scalar>& feature_map, const Eigen::Vector3d& point,
                 const Eigen::Vector3d& target_dir);

/// Batched, differentiable fetch of P points from one view.
template <typename Scalar>
struct ViewFetch {
  Var<Scalar> features;       // P x C, zero rows where invalid
  Matrix<Scalar> source_dirs;  // P x 3
  Matrix<Scalar> cos_theta;    // P x 1
  std::vector<bool> valid;
};

template <typename Scalar>
ViewFetch<Scalar> fetch_view(const Camera& camera, const Var<Scalar>& feature_map, const Matrix<double>& points,
                             const Matrix<double>& target_dirs);

// --- Aggregation -------------------------------------------------------------

template <typename Scalar>
ParameterSet<Scalar> make_view_blend(const ModelConfig& config);

/// Input width of the per-view scoring network.
int view_blend_input_width(const ModelConfig& config);

template <typename Scalar>
struct AggregatedFeature {
  Var<Scalar> feature;  // P x C
  Var<Scalar> weights;  // P x K, zero on invalid views
  std::vector<bool> observed;
};

/// Scores each view with the shared network, softmaxes over valid views
/// and blends their features. Points with no valid view get a zero feature
/// and observed = false.
template <typename Scalar>
AggregatedFeature<Scalar> aggregate(const BoundParameters<Scalar>& view_blend, const ModelConfig& config,
                                    const std::vector<ViewFetch<Scalar>>& views, const Matrix<double>& target_dirs);

/// Masked softmax over K views: logits are stacked view-major (K*P x 1).
/// Masked entries use a -1e9 logit and come out as exactly 0.
template <typename Scalar>
Var<Scalar> view_softmax(const Var<Scalar>& logits, const std::vector<bool>& valid, Index views);

/// sum_k weights(:, k) * features(k*P + i, :).
template <typename Scalar>
Var<Scalar> view_weighted_sum(const Var<Scalar>& weights, const Var<Scalar>& stacked_features);

}  // namespace hrf
