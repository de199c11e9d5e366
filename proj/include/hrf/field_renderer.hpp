#pragma once

#include "hrf/model.hpp"
#include "hrf/render.hpp"
#include "hrf/skeleton.hpp"

namespace hrf {

struct RenderSettings {
  int coarse_samples = 32;
  int fine_samples = 64;
  double bounds_margin = 0.3;  // meters around the posed skeleton
  double importance_floor = 1e-2;
  double background_alpha = 0.05;  // below this a pixel has no surface depth
  int chunk_rays = 1024;
  SkinningConfig skinning;
};

/// Everything about one frame the renderer needs besides the networks.
struct FrameContext {
  PosedSkeleton posed;
  Aabb bounds;
  std::vector<SourceView> sources;

  static FrameContext make(const Skeleton& skeleton, const SkeletonPose& pose, std::vector<SourceView> sources,
                           double margin);
};

struct Trainable {
  bool encoder = false;
  bool view_blend = false;
  bool deform = false;
  bool field = false;

  static Trainable none() { return {}; }
  static Trainable all() { return {true, true, true, true}; }
};

/// The four radiance networks placed on one tape.
template <typename Scalar>
struct BoundModel {
  BoundParameters<Scalar> encoder;
  BoundParameters<Scalar> view_blend;
  BoundParameters<Scalar> deform;
  BoundParameters<Scalar> field;

  BoundModel(Tape<Scalar>& tape, const HumanModel<Scalar>& model, Trainable trainable);
};

/// Posed-point quantities that do not depend on network parameters.
struct PointGeometry {
  Matrix<double> skinned;     // P x 3, inverse-skinned points
  Matrix<double> distances;   // P x J
  Matrix<double> directions;  // P x 3J
};

PointGeometry point_geometry(const PosedSkeleton& posed, const Matrix<double>& points, const SkinningConfig& skinning);

template <typename Scalar>
std::vector<Var<Scalar>> source_feature_maps(const BoundModel<Scalar>& bound, const FrameContext& frame);

/// Feature maps computed without recording gradients.
template <typename Scalar>
std::vector<Tensor<Scalar>> source_feature_maps(const HumanModel<Scalar>& model, const FrameContext& frame);

template <typename Scalar>
struct PointSamples {
  RadianceSamples<Scalar> radiance;
  Deformation<Scalar> deformation;
  AggregatedFeature<Scalar> feature;
};

/// Runs aggregation, deformation and the field for posed points seen along
/// view_dirs.
template <typename Scalar>
PointSamples<Scalar> evaluate_points(const BoundModel<Scalar>& bound, const ModelConfig& config,
                                     const FrameContext& frame, const std::vector<Var<Scalar>>& feature_maps,
                                     const Matrix<double>& points, const Matrix<double>& view_dirs,
                                     const SkinningConfig& skinning);

template <typename Scalar>
struct RayBatchResult {
  Var<Scalar> color;  // B x 3, zero for rays missing the frame bounds
  Var<Scalar> alpha;  // B x 1
  Var<Scalar> depth;  // B x 1, expected termination distance
  std::vector<bool> hit;
  std::vector<double> fars;  // far bound per ray (0 on a miss)
  Index samples_per_ray = 0;
};

/// Hierarchical rendering of a ray batch. The coarse pass runs on a scratch
/// tape; the merged coarse and fine samples are evaluated on `bound`'s tape.
/// Jittered sampling when rng is given, deterministic midpoints otherwise.
template <typename Scalar>
RayBatchResult<Scalar> render_rays(const HumanModel<Scalar>& model, const BoundModel<Scalar>& bound,
                                   const FrameContext& frame, const std::vector<Var<Scalar>>& feature_maps,
                                   const std::vector<Ray>& rays, const RenderSettings& settings, Rng* rng);

struct RenderedView {
  Image rgb;    // 3 channels, black background
  Image alpha;  // 1 channel
  Image depth;  // 1 channel meters: expected depth, far bound where alpha is low, 0 off the bounds
};

template <typename Scalar>
RenderedView render_view(const HumanModel<Scalar>& model, const FrameContext& frame, const Camera& camera,
                         const RenderSettings& settings);

}  // namespace hrf
