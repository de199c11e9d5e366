#include "hrf/optim.hpp"

#include <algorithm>
#include <cmath>

namespace hrf {

double uniform01(Rng& rng) {
  // 53 random bits; avoids std::uniform_real_distribution's implementation latitude.
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename Scalar>
void ParameterSet<Scalar>::add(const std::string& name, Shape shape, InitSpec init) {
  if (contains(name)) throw std::invalid_argument("parameter '" + name + "' already defined");
  entries_.push_back(Entry{name, Tensor<Scalar>(std::move(shape), true), init});
}

template <typename Scalar>
void ParameterSet<Scalar>::initialize(Rng& rng) {
  for (auto& e : entries_) {
    auto& v = e.value.values();
    switch (e.init.kind) {
      case InitSpec::Kind::Zeros:
        v.setZero();
        break;
      case InitSpec::Kind::Constant:
        v.setConstant(static_cast<Scalar>(e.init.value));
        break;
      case InitSpec::Kind::UniformFanIn: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(1, e.init.fan_in)));
        for (Index i = 0; i < v.size(); ++i) v.data()[i] = static_cast<Scalar>((2.0 * uniform01(rng) - 1.0) * bound);
        break;
      }
    }
  }
}

template <typename Scalar>
bool ParameterSet<Scalar>::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

template <typename Scalar>
Tensor<Scalar>& ParameterSet<Scalar>::at(const std::string& name) {
  for (auto& e : entries_)
    if (e.name == name) return e.value;
  throw std::out_of_range("no parameter named '" + name + "'");
}

template <typename Scalar>
const Tensor<Scalar>& ParameterSet<Scalar>::at(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.value;
  throw std::out_of_range("no parameter named '" + name + "'");
}

template <typename Scalar>
Index ParameterSet<Scalar>::parameter_count() const {
  Index n = 0;
  for (const auto& e : entries_) n += e.value.numel();
  return n;
}

template <typename Scalar>
BoundParameters<Scalar>::BoundParameters(Tape<Scalar>& tape, const ParameterSet<Scalar>& params, bool trainable)
    : set_(&params), trainable_(trainable) {
  vars_.reserve(params.size());
  for (const auto& e : params.entries()) {
    Tensor<Scalar> copy = e.value;
    copy.set_requires_grad(trainable);
    vars_.push_back(tape.leaf(std::move(copy)));
  }
}

template <typename Scalar>
const Var<Scalar>& BoundParameters<Scalar>::operator[](const std::string& name) const {
  const auto& entries = set_->entries();
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].name == name) return vars_[i];
  throw std::out_of_range("no bound parameter named '" + name + "'");
}

template <typename Scalar>
Gradients<Scalar> collect_gradients(const Tape<Scalar>& tape, const BoundParameters<Scalar>& bound) {
  Gradients<Scalar> out;
  const auto& entries = bound.set().entries();
  for (std::size_t i = 0; i < entries.size(); ++i) out[entries[i].name] = tape.grad(bound.vars()[i]);
  return out;
}

template <typename Scalar>
void accumulate_gradients(Gradients<Scalar>& into, const Gradients<Scalar>& from) {
  for (const auto& [name, g] : from) {
    auto it = into.find(name);
    if (it == into.end())
      into.emplace(name, g);
    else
      it->second += g;
  }
}

double LrSchedule::at(std::int64_t step) const {
  if (horizon <= 0) return end;
  const double frac = std::clamp(static_cast<double>(step) / static_cast<double>(horizon), 0.0, 1.0);
  return start * std::pow(end / start, frac);
}

template <typename Scalar>
void Adam<Scalar>::reset(const ParameterSet<Scalar>& params) {
  state_.first.clear();
  state_.second.clear();
  for (const auto& e : params.entries()) {
    state_.first.push_back(Matrix<Scalar>::Zero(e.value.rows(), e.value.cols()));
    state_.second.push_back(Matrix<Scalar>::Zero(e.value.rows(), e.value.cols()));
  }
  state_.step = 0;
}

template <typename Scalar>
double Adam<Scalar>::step(ParameterSet<Scalar>& params, const Gradients<Scalar>& grads) {
  auto& entries = params.entries();
  if (state_.first.size() != entries.size()) reset(params);
  for (const auto& e : entries)
    if (!grads.count(e.name)) throw OptimizerError("adam: missing gradient for parameter '" + e.name + "'");

  const double lr = config_.schedule.at(state_.step);
  state_.step += 1;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state_.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state_.step));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Matrix<Scalar>& g = grads.at(entries[i].name);
    auto& value = entries[i].value.values();
    if (g.rows() != value.rows() || g.cols() != value.cols())
      throw_shape_mismatch("adam", entries[i].value.shape(), Shape{g.rows(), g.cols()});
    auto& m = state_.first[i];
    auto& v = state_.second[i];
    m = Scalar(b1) * m + Scalar(1 - b1) * g;
    v = Scalar(b2) * v + Scalar(1 - b2) * g.cwiseProduct(g);
    const Scalar step_size = static_cast<Scalar>(lr / c1);
    const Scalar inv_c2 = static_cast<Scalar>(1.0 / c2);
    value.array() -= step_size * m.array() / ((v.array() * inv_c2).sqrt() + Scalar(config_.epsilon));
  }
  return lr;
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class BoundParameters<float>;
template class BoundParameters<double>;
template class Adam<float>;
template class Adam<double>;
template Gradients<float> collect_gradients(const Tape<float>&, const BoundParameters<float>&);
template Gradients<double> collect_gradients(const Tape<double>&, const BoundParameters<double>&);
template void accumulate_gradients(Gradients<float>&, const Gradients<float>&);
template void accumulate_gradients(Gradients<double>&, const Gradients<double>&);

}  // namespace hrf
