#pragma once

#include "hrf/features.hpp"
#include "hrf/field.hpp"
#include "hrf/model_config.hpp"

namespace hrf {

template <typename Scalar>
ParameterSet<Scalar> make_appearance(const ModelConfig& config);

/// Input width of the appearance blending network: two views of
/// [feature, visibility, residual, cos].
int appearance_input_width(const ModelConfig& config);

/// Parameters of all five networks.
template <typename Scalar>
struct HumanModel {
  ModelConfig config;
  ParameterSet<Scalar> encoder;
  ParameterSet<Scalar> view_blend;
  ParameterSet<Scalar> deform;
  ParameterSet<Scalar> field;
  ParameterSet<Scalar> appearance;

  /// Builds every network and initializes them in a fixed order.
  static HumanModel create(const ModelConfig& config, Rng& rng);

  template <typename Other>
  HumanModel<Other> cast() const {
    return {config,
            encoder.template cast<Other>(),
            view_blend.template cast<Other>(),
            deform.template cast<Other>(),
            field.template cast<Other>(),
            appearance.template cast<Other>()};
  }
};

}  // namespace hrf
