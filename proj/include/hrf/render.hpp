#pragma once

#include "hrf/camera.hpp"
#include "hrf/optim.hpp"

#include <vector>

namespace hrf {

class RenderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// n depths in [near, far], one per equal-width bin: uniform within the bin
/// when rng is given, the bin midpoint otherwise.
std::vector<double> sample_stratified(const Ray& ray, int n, Rng* rng);

/// n depths drawn by inverse transform from the piecewise-constant density
/// proportional to weight + floor over the bins around `depths` (bin
/// edges are midpoints between neighbours, plus near and far). Evenly
/// spaced quantiles are used when rng is null. Result is sorted.
std::vector<double> sample_importance(const std::vector<double>& weights, const std::vector<double>& depths,
                                      double near, double far, int n, Rng* rng, double floor = 1e-2);

std::vector<double> merge_sorted(const std::vector<double>& a, const std::vector<double>& b);

/// Samples along one ray, densities/colours already evaluated.
struct RaySamples {
  std::vector<double> depths;
  double far = 0.0;
  std::vector<double> density;
  std::vector<Eigen::Vector3d> color;
};

struct RenderOutput {
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  double alpha = 0.0;
  double depth = 0.0;
  std::vector<double> weights;
};

constexpr double kDepthEpsilon = 1e-6;

/// Reference compositor: w_i = T_i (1 - exp(-sigma_i delta_i)), C = sum w c,
/// alpha = sum w, depth = sum w t / max(alpha, eps).
RenderOutput composite(const RaySamples& samples);

template <typename Scalar>
struct CompositeResult {
  Var<Scalar> color;       // R x 3
  Var<Scalar> alpha;       // R x 1
  Var<Scalar> depth;       // R x 1
  Matrix<Scalar> weights;  // R x N, not differentiable
};

/// Batched differentiable compositor over R rays of N samples each, rows
/// ray-major (r * N + i). Differentiable in density, colour and depths.
template <typename Scalar>
CompositeResult<Scalar> composite(const Var<Scalar>& density, const Var<Scalar>& color, const Var<Scalar>& depths,
                                  const std::vector<double>& fars, Index samples_per_ray);

}  // namespace hrf
