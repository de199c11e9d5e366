#include "hrf/nn.hpp"

namespace hrf {

template <typename Scalar>
void add_linear(ParameterSet<Scalar>& params, const std::string& name, Index in, Index out, bool zero_bias) {
  params.add(name + ".weight", Shape{in, out}, InitSpec::fan_in_uniform(in));
  params.add(name + ".bias", Shape{out}, zero_bias ? InitSpec::zeros() : InitSpec::fan_in_uniform(in));
}

template <typename Scalar>
Var<Scalar> apply_linear(const BoundParameters<Scalar>& params, const std::string& name, const Var<Scalar>& x) {
  return linear(x, params[name + ".weight"], params[name + ".bias"]);
}

template <typename Scalar>
void add_conv3x3(ParameterSet<Scalar>& params, const std::string& name, Index cin, Index cout) {
  params.add(name + ".weight", Shape{9 * cin, cout}, InitSpec::fan_in_uniform(9 * cin));
  params.add(name + ".bias", Shape{cout}, InitSpec::fan_in_uniform(9 * cin));
}

template <typename Scalar>
Var<Scalar> apply_conv3x3(const BoundParameters<Scalar>& params, const std::string& name, const Var<Scalar>& x,
                          int stride) {
  return conv2d(x, params[name + ".weight"], params[name + ".bias"], stride);
}

#define HRF_INSTANTIATE_NN(S)                                                                         \
  template void add_linear(ParameterSet<S>&, const std::string&, Index, Index, bool);                 \
  template Var<S> apply_linear(const BoundParameters<S>&, const std::string&, const Var<S>&);         \
  template void add_conv3x3(ParameterSet<S>&, const std::string&, Index, Index);                      \
  template Var<S> apply_conv3x3(const BoundParameters<S>&, const std::string&, const Var<S>&, int);

HRF_INSTANTIATE_NN(float)
HRF_INSTANTIATE_NN(double)

}  // namespace hrf
