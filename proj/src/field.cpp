#include "hrf/field.hpp"

#include <algorithm>

namespace hrf {

int deform_input_width(const ModelConfig& config) {
  return encoded_size(config.joints, config.distance_frequencies) + 3 * config.joints + config.feature_channels;
}

template <typename Scalar>
ParameterSet<Scalar> make_deform(const ModelConfig& config) {
  const Index w = config.deform_width, half = std::max(1, config.deform_width / 2);
  ParameterSet<Scalar> p;
  add_linear(p, "l0", deform_input_width(config), w);
  add_linear(p, "l1", w, w);
  add_linear(p, "l2", w, w);
  add_linear(p, "l3", w, w);
  add_linear(p, "l4", w, half);
  add_linear(p, "l5", half, 3);
  return p;
}

template <typename Scalar>
Deformation<Scalar> deform(const BoundParameters<Scalar>& deform_net, const ModelConfig& config,
                           const Matrix<double>& skinned, const Matrix<double>& distances,
                           const Matrix<double>& directions, const Var<Scalar>& feature) {
  const Index n = skinned.rows();
  if (distances.cols() != config.joints || directions.cols() != 3 * config.joints || distances.rows() != n ||
      directions.rows() != n)
    throw_shape_mismatch("deform", Shape{distances.rows(), distances.cols()}, Shape{n, config.joints});
  if (feature.rows() != n || feature.cols() != config.feature_channels)
    throw_shape_mismatch("deform", feature.shape(), Shape{n, config.feature_channels});
  Tape<Scalar>& tape = feature.tape();
  Matrix<Scalar> pose(n, encoded_size(config.joints, config.distance_frequencies) + 3 * config.joints);
  pose << positional_encode_rows<Scalar>(distances.template cast<Scalar>(), config.distance_frequencies),
      directions.template cast<Scalar>();
  Var<Scalar> f = config.deform_uses_features ? feature : tape.constant(Matrix<Scalar>::Zero(n, config.feature_channels));
  Var<Scalar> h = concat(std::vector<Var<Scalar>>{tape.constant(std::move(pose)), f});
  h = relu(apply_linear(deform_net, "l0", h));
  h = relu(apply_linear(deform_net, "l1", h));
  h = relu(apply_linear(deform_net, "l2", h));
  h = relu(apply_linear(deform_net, "l3", h));
  h = relu(apply_linear(deform_net, "l4", h));
  Deformation<Scalar> out;
  out.residual = scale(tanh(apply_linear(deform_net, "l5", h)), static_cast<Scalar>(config.max_displacement));
  out.canonical = add(tape.constant(skinned.template cast<Scalar>()), out.residual);
  return out;
}

int color_input_width(const ModelConfig& config) {
  return config.field_width + encoded_size(3, config.direction_frequencies) + config.feature_channels;
}

template <typename Scalar>
ParameterSet<Scalar> make_field(const ModelConfig& config) {
  const Index w = config.field_width, half = std::max(1, config.field_width / 2);
  const Index pe = encoded_size(3, config.position_frequencies);
  ParameterSet<Scalar> p;
  add_linear(p, "l0", pe, w);
  add_linear(p, "l1", w, w);
  add_linear(p, "l2", w, w);
  add_linear(p, "l3", w, w);
  add_linear(p, "l4", w + pe, w);
  add_linear(p, "l5", w, w);
  add_linear(p, "l6", w, w);
  add_linear(p, "density", w, 1, /*zero_bias=*/true);
  add_linear(p, "l7", color_input_width(config), w);
  add_linear(p, "l8", w, half);
  add_linear(p, "color", half, 3);
  return p;
}

template <typename Scalar>
RadianceSamples<Scalar> query_field(const BoundParameters<Scalar>& field, const ModelConfig& config,
                                    const Var<Scalar>& canonical, const Matrix<double>& view_dirs,
                                    const Var<Scalar>& feature) {
  const Index n = canonical.rows();
  if (canonical.cols() != 3 || view_dirs.rows() != n || feature.rows() != n)
    throw_shape_mismatch("query_field", canonical.shape(), feature.shape());
  Tape<Scalar>& tape = canonical.tape();
  Var<Scalar> pe = positional_encode(canonical, config.position_frequencies);
  Var<Scalar> h = relu(apply_linear(field, "l0", pe));
  h = relu(apply_linear(field, "l1", h));
  h = relu(apply_linear(field, "l2", h));
  h = relu(apply_linear(field, "l3", h));
  h = relu(apply_linear(field, "l4", concat(std::vector<Var<Scalar>>{h, pe})));
  h = relu(apply_linear(field, "l5", h));
  h = relu(apply_linear(field, "l6", h));
  RadianceSamples<Scalar> out;
  out.density = softplus(apply_linear(field, "density", h));
  Var<Scalar> dir_pe =
      tape.constant(positional_encode_rows<Scalar>(view_dirs.template cast<Scalar>(), config.direction_frequencies));
  Var<Scalar> c = relu(apply_linear(field, "l7", concat(std::vector<Var<Scalar>>{h, dir_pe, feature})));
  c = relu(apply_linear(field, "l8", c));
  out.color = sigmoid(apply_linear(field, "color", c));
  return out;
}

#define HRF_INSTANTIATE_FIELD(S)                                                                                     \
  template ParameterSet<S> make_deform<S>(const ModelConfig&);                                                       \
  template Deformation<S> deform(const BoundParameters<S>&, const ModelConfig&, const Matrix<double>&,               \
                                 const Matrix<double>&, const Matrix<double>&, const Var<S>&);                       \
  template ParameterSet<S> make_field<S>(const ModelConfig&);                                                        \
  template RadianceSamples<S> query_field(const BoundParameters<S>&, const ModelConfig&, const Var<S>&,              \
                                          const Matrix<double>&, const Var<S>&);

HRF_INSTANTIATE_FIELD(float)
HRF_INSTANTIATE_FIELD(double)

}  // namespace hrf
