#pragma once

#include "hrf/tensor.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace hrf {

using Rng = std::mt19937_64;

double uniform01(Rng& rng);

struct InitSpec {
  enum class Kind { UniformFanIn, Zeros, Constant };
  Kind kind = Kind::UniformFanIn;
  Index fan_in = 1;
  double value = 0.0;

  static InitSpec fan_in_uniform(Index fan_in) { return {Kind::UniformFanIn, fan_in, 0.0}; }
  static InitSpec zeros() { return {Kind::Zeros, 1, 0.0}; }
  static InitSpec constant(double v) { return {Kind::Constant, 1, v}; }
};

/// Named, ordered parameter tensors of one network.
template <typename Scalar>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor<Scalar> value;
    InitSpec init;
  };

  void add(const std::string& name, Shape shape, InitSpec init);
  /// Draws every tensor from its InitSpec, in insertion order.
  void initialize(Rng& rng);

  bool contains(const std::string& name) const;
  Tensor<Scalar>& at(const std::string& name);
  const Tensor<Scalar>& at(const std::string& name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  Index parameter_count() const;

  /// Converts values to another precision, keeping names and init specs.
  template <typename Other>
  ParameterSet<Other> cast() const {
    ParameterSet<Other> out;
    for (const auto& e : entries_) {
      out.add(e.name, e.value.shape(), e.init);
      out.at(e.name).values() = e.value.values().template cast<Other>();
    }
    return out;
  }

 private:
  std::vector<Entry> entries_;
};

/// Parameters of one network placed on a tape as leaves.
template <typename Scalar>
class BoundParameters {
 public:
  BoundParameters() = default;
  BoundParameters(Tape<Scalar>& tape, const ParameterSet<Scalar>& params, bool trainable);

  const Var<Scalar>& operator[](const std::string& name) const;
  const std::vector<Var<Scalar>>& vars() const { return vars_; }
  const ParameterSet<Scalar>& set() const { return *set_; }
  bool trainable() const { return trainable_; }

 private:
  const ParameterSet<Scalar>* set_ = nullptr;
  std::vector<Var<Scalar>> vars_;
  bool trainable_ = false;
};

/// name -> gradient, shaped like the parameter.
template <typename Scalar>
using Gradients = std::map<std::string, Matrix<Scalar>>;

template <typename Scalar>
Gradients<Scalar> collect_gradients(const Tape<Scalar>& tape, const BoundParameters<Scalar>& bound);

/// Adds b into a, creating entries as needed.
template <typename Scalar>
void accumulate_gradients(Gradients<Scalar>& into, const Gradients<Scalar>& from);

/// Exponential decay from start to end over horizon steps, flat afterwards.
struct LrSchedule {
  double start = 1e-4;
  double end = 1e-5;
  std::int64_t horizon = 1;

  double at(std::int64_t step) const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  LrSchedule schedule;
};

template <typename Scalar>
struct AdamState {
  std::vector<Matrix<Scalar>> first;
  std::vector<Matrix<Scalar>> second;
  std::int64_t step = 0;
};

class OptimizerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig config) : config_(config) {}

  /// Zeroes moments to match params.
  void reset(const ParameterSet<Scalar>& params);
  /// One update; every parameter must have a gradient. Returns the learning
  /// rate used.
  double step(ParameterSet<Scalar>& params, const Gradients<Scalar>& grads);

  const AdamConfig& config() const { return config_; }
  AdamConfig& config() { return config_; }
  AdamState<Scalar>& state() { return state_; }
  const AdamState<Scalar>& state() const { return state_; }

 private:
  AdamConfig config_;
  AdamState<Scalar> state_;
};

}  // namespace hrf
