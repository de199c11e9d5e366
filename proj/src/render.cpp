#include "hrf/render.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace hrf {

std::vector<double> sample_stratified(const Ray& ray, int n, Rng* rng) {
  if (!ray.has_bounds()) throw RenderError("sample_stratified: ray has no near/far bounds");
  if (n <= 0) throw RenderError("sample_stratified: sample count must be positive");
  const double step = (ray.far - ray.near) / n;
  std::vector<double> t(n);
  for (int i = 0; i < n; ++i) t[i] = ray.near + step * (i + (rng ? uniform01(*rng) : 0.5));
  return t;
}

std::vector<double> sample_importance(const std::vector<double>& weights, const std::vector<double>& depths,
                                      double near, double far, int n, Rng* rng, double floor) {
  const std::size_t bins = depths.size();
  if (bins == 0 || weights.size() != bins) throw RenderError("sample_importance: weights/depths mismatch");
  std::vector<double> edges(bins + 1);
  edges[0] = near;
  edges[bins] = far;
  for (std::size_t i = 1; i < bins; ++i) edges[i] = 0.5 * (depths[i - 1] + depths[i]);
  std::vector<double> cdf(bins + 1, 0.0);
  for (std::size_t i = 0; i < bins; ++i) cdf[i + 1] = cdf[i] + std::max(weights[i], 0.0) + floor;
  const double total = cdf[bins];
  for (double& c : cdf) c /= total;

  std::vector<double> u(n);
  for (int i = 0; i < n; ++i) u[i] = rng ? uniform01(*rng) : (i + 0.5) / n;
  if (rng) std::sort(u.begin(), u.end());
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    const std::size_t b = std::min<std::size_t>(
        bins - 1, static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u[i]) - cdf.begin()) - 1);
    const double width = cdf[b + 1] - cdf[b];
    const double frac = width > 0.0 ? (u[i] - cdf[b]) / width : 0.5;
    out[i] = edges[b] + std::clamp(frac, 0.0, 1.0) * (edges[b + 1] - edges[b]);
  }
  return out;
}

std::vector<double> merge_sorted(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), out.begin());
  return out;
}

RenderOutput composite(const RaySamples& s) {
  const std::size_t n = s.depths.size();
  if (s.density.size() != n || s.color.size() != n) throw RenderError("composite: sample arrays differ in length");
  RenderOutput out;
  out.weights.resize(n);
  double optical = 0.0, weighted_t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double delta = (i + 1 < n ? s.depths[i + 1] : s.far) - s.depths[i];
    const double tau = s.density[i] * delta;
    const double w = std::exp(-optical) * (1.0 - std::exp(-tau));
    optical += tau;
    out.weights[i] = w;
    out.color += w * s.color[i];
    out.alpha += w;
    weighted_t += w * s.depths[i];
  }
  out.depth = weighted_t / std::max(out.alpha, kDepthEpsilon);
  return out;
}

template <typename Scalar>
CompositeResult<Scalar> composite(const Var<Scalar>& density, const Var<Scalar>& color, const Var<Scalar>& depths,
                                  const std::vector<double>& fars, Index samples_per_ray) {
  const Index n = samples_per_ray;
  const Index rays = static_cast<Index>(fars.size());
  if (density.rows() != rays * n || density.cols() != 1) throw_shape_mismatch("composite", density.shape(), Shape{rays * n, 1});
  if (color.rows() != rays * n || color.cols() != 3) throw_shape_mismatch("composite", color.shape(), Shape{rays * n, 3});
  if (depths.rows() != rays * n || depths.cols() != 1) throw_shape_mismatch("composite", depths.shape(), Shape{rays * n, 1});

  const auto& sigma = density.value();
  const auto& rgb = color.value();
  const auto& t = depths.value();
  auto weights = std::make_shared<Matrix<Scalar>>(rays, n);
  auto transmit = std::make_shared<Matrix<Scalar>>(rays, n);  // T_i
  Matrix<Scalar> out(rays, 5);
  const Scalar eps = static_cast<Scalar>(kDepthEpsilon);
  for (Index r = 0; r < rays; ++r) {
    Scalar optical = 0, alpha = 0, wt = 0;
    Eigen::Matrix<Scalar, 1, 3> c = Eigen::Matrix<Scalar, 1, 3>::Zero();
    for (Index i = 0; i < n; ++i) {
      const Index k = r * n + i;
      const Scalar delta = (i + 1 < n ? t(k + 1, 0) : static_cast<Scalar>(fars[r])) - t(k, 0);
      const Scalar tau = sigma(k, 0) * delta;
      const Scalar trans = std::exp(-optical);
      const Scalar w = trans * (Scalar(1) - std::exp(-tau));
      optical += tau;
      (*transmit)(r, i) = trans;
      (*weights)(r, i) = w;
      c += w * rgb.row(k);
      alpha += w;
      wt += w * t(k, 0);
    }
    out.template block<1, 3>(r, 0) = c;
    out(r, 3) = alpha;
    out(r, 4) = wt / std::max(alpha, eps);
  }

  const int is = density.id(), ic = color.id(), it = depths.id();
  std::vector<double> far_copy = fars;
  Var<Scalar> packed = density.tape().record(
      Tensor<Scalar>::from_matrix(std::move(out)), {is, ic, it},
      [=, fars = std::move(far_copy)](Tape<Scalar>& tp, int self) {
        const auto& g = tp.out_grad(self);
        const auto& o = tp.value(self);
        const auto& sv = tp.value(is);
        const auto& cv = tp.value(ic);
        const auto& tv = tp.value(it);
        const bool want_s = tp.requires_grad(is), want_c = tp.requires_grad(ic), want_t = tp.requires_grad(it);
        Matrix<Scalar>* gs = want_s ? &tp.grad_buffer(is) : nullptr;
        Matrix<Scalar>* gc = want_c ? &tp.grad_buffer(ic) : nullptr;
        Matrix<Scalar>* gt = want_t ? &tp.grad_buffer(it) : nullptr;
        std::vector<Scalar> gw(n), gtau(n);
        for (Index r = 0; r < rays; ++r) {
          const Scalar alpha = o(r, 3), depth = o(r, 4);
          const bool normalised = alpha > eps;
          const Scalar denom = normalised ? alpha : eps;
          const Eigen::Matrix<Scalar, 1, 3> g_color = g.template block<1, 3>(r, 0);
          const Scalar g_alpha = g(r, 3), g_depth = g(r, 4);
          for (Index i = 0; i < n; ++i) {
            const Index k = r * n + i;
            const Scalar w = (*weights)(r, i);
            // depth = sum w t / alpha: d/dw_i = (t_i - depth) / alpha when normalised.
            const Scalar d_depth = normalised ? (tv(k, 0) - depth) / denom : tv(k, 0) / denom;
            gw[i] = g_color.dot(cv.row(k)) + g_alpha + g_depth * d_depth;
            if (gc) gc->row(k) += w * g_color;
            if (gt) (*gt)(k, 0) += g_depth * w / denom;
          }
          // w_i = T_i (1 - e^{-tau_i});  dw_i/dtau_i = T_i e^{-tau_i};  dw_j/dtau_i = -w_j for j > i.
          Scalar suffix = 0;
          for (Index i = n - 1; i >= 0; --i) {
            const Index k = r * n + i;
            const Scalar delta = (i + 1 < n ? tv(k + 1, 0) : static_cast<Scalar>(fars[r])) - tv(k, 0);
            const Scalar tau = sv(k, 0) * delta;
            gtau[i] = gw[i] * (*transmit)(r, i) * std::exp(-tau) - suffix;
            suffix += gw[i] * (*weights)(r, i);
            if (gs) (*gs)(k, 0) += gtau[i] * delta;
            if (gt) {
              const Scalar g_delta = gtau[i] * sv(k, 0);
              (*gt)(k, 0) -= g_delta;
              if (i + 1 < n) (*gt)(k + 1, 0) += g_delta;
            }
          }
        }
      });
  CompositeResult<Scalar> res;
  res.color = slice(packed, 0, 3);
  res.alpha = slice(packed, 3, 1);
  res.depth = slice(packed, 4, 1);
  res.weights = *weights;
  return res;
}

template CompositeResult<float> composite(const Var<float>&, const Var<float>&, const Var<float>&,
                                          const std::vector<double>&, Index);
template CompositeResult<double> composite(const Var<double>&, const Var<double>&, const Var<double>&,
                                           const std::vector<double>&, Index);

}  // namespace hrf
