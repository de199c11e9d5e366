#include "hrf/model.hpp"

namespace hrf {

int appearance_input_width(const ModelConfig& config) { return 2 * (config.feature_channels + 3); }

template <typename Scalar>
ParameterSet<Scalar> make_appearance(const ModelConfig& config) {
  ParameterSet<Scalar> p;
  const Index w = config.appearance_width;
  add_linear(p, "l0", appearance_input_width(config), w);
  for (int i = 1; i < 6; ++i) add_linear(p, "l" + std::to_string(i), w, w);
  add_linear(p, "l6", w, w / 2);
  add_linear(p, "out", w / 2, 3);
  return p;
}

template <typename Scalar>
HumanModel<Scalar> HumanModel<Scalar>::create(const ModelConfig& config, Rng& rng) {
  HumanModel m{config,
               make_encoder<Scalar>(config),
               make_view_blend<Scalar>(config),
               make_deform<Scalar>(config),
               make_field<Scalar>(config),
               make_appearance<Scalar>(config)};
  m.encoder.initialize(rng);
  m.view_blend.initialize(rng);
  m.deform.initialize(rng);
  m.field.initialize(rng);
  m.appearance.initialize(rng);
  return m;
}

template ParameterSet<float> make_appearance<float>(const ModelConfig&);
template ParameterSet<double> make_appearance<double>(const ModelConfig&);
template struct HumanModel<float>;
template struct HumanModel<double>;

}  // namespace hrf
