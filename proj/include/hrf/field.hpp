#pragma once

#include "hrf/camera.hpp"
#include "hrf/model_config.hpp"
#include "hrf/nn.hpp"

namespace hrf {

// --- Pose-conditioned deformation ------------------------------------------

int deform_input_width(const ModelConfig& config);

template <typename Scalar>
ParameterSet<Scalar> make_deform(const ModelConfig& config);

template <typename Scalar>
struct Deformation {
  Var<Scalar> canonical;  // P x 3, skinned point plus residual
  Var<Scalar> residual;   // P x 3, |each component| < max_displacement
};

/// canonical = skinned + s_max * tanh(net([PE(distances), directions, feature])).
/// skinned is the inverse-skinned point, distances P x J and directions
/// P x 3J are the pose descriptors of the posed point.
template <typename Scalar>
Deformation<Scalar> deform(const BoundParameters<Scalar>& deform_net, const ModelConfig& config,
                           const Matrix<double>& skinned, const Matrix<double>& distances,
                           const Matrix<double>& directions, const Var<Scalar>& feature);

// --- Radiance field --------------------------------------------------------

/// Width of the colour branch input: trunk + encoded view direction + feature.
int color_input_width(const ModelConfig& config);

template <typename Scalar>
ParameterSet<Scalar> make_field(const ModelConfig& config);

template <typename Scalar>
struct RadianceSamples {
  Var<Scalar> density;  // P x 1, softplus >= 0
  Var<Scalar> color;    // P x 3, sigmoid in [0, 1]
};

/// Density depends on the canonical point only; colour additionally sees
/// the view direction and the aggregated feature.
template <typename Scalar>
RadianceSamples<Scalar> query_field(const BoundParameters<Scalar>& field, const ModelConfig& config,
                                    const Var<Scalar>& canonical, const Matrix<double>& view_dirs,
                                    const Var<Scalar>& feature);

}  // namespace hrf
