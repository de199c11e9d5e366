#pragma once

#include "hrf/optim.hpp"

#include <string>

namespace hrf {

// Linear layer "<name>.weight" (in x out) and "<name>.bias" (out).
template <typename Scalar>
void add_linear(ParameterSet<Scalar>& params, const std::string& name, Index in, Index out, bool zero_bias = false);

template <typename Scalar>
Var<Scalar> apply_linear(const BoundParameters<Scalar>& params, const std::string& name, const Var<Scalar>& x);

// 3x3 convolution "<name>.weight" ((9*cin) x cout) and "<name>.bias" (cout).
template <typename Scalar>
void add_conv3x3(ParameterSet<Scalar>& params, const std::string& name, Index cin, Index cout);

template <typename Scalar>
Var<Scalar> apply_conv3x3(const BoundParameters<Scalar>& params, const std::string& name, const Var<Scalar>& x,
                          int stride);

}  // namespace hrf
