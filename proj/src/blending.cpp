#include "hrf/blending.hpp"

#include "hrf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>



namespace hrf {

namespace {

double wrap_angle(double a) {
  a = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
  if (a < 0) a += 2.0 * std::numbers::pi;
  return a - std::numbers::pi;
}

Eigen::Vector3d sample_rgb(const Image& img, double x, double y) {
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (int dy = 0; dy <= 1; ++dy)
    for (int dx = 0; dx <= 1; ++dx) {
      const double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy);
      if (w == 0.0) continue;
      const int xi = std::min(x0 + dx, img.width() - 1), yi = std::min(y0 + dy, img.height() - 1);
      c += w * img.rgb(xi, yi).cast<double>();
    }
  return c;
}

template <typename Scalar>
Eigen::VectorXd sample_features(const Tensor<Scalar>& map, double x, double y) {
  const Index h = map.shape()[0], w = map.shape()[1], c = map.shape()[2];
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  Eigen::VectorXd f = Eigen::VectorXd::Zero(c);
  for (int dy = 0; dy <= 1; ++dy)
    for (int dx = 0; dx <= 1; ++dx) {
      const double wt = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy);
      if (wt == 0.0) continue;
      const Index xi = std::min<Index>(x0 + dx, w - 1), yi = std::min<Index>(y0 + dy, h - 1);
      f += wt * map.values().row(yi * w + xi).transpose().template cast<double>();
    }
  return f;
}

/// Smallest |range - D| over the 3x3 depth texels around the nearest one to
/// (x, y). Zero texels are background.
double depth_residual(const Image& depth, double x, double y, double range, double cap) {
  const int cx = static_cast<int>(std::lround(x)), cy = static_cast<int>(std::lround(y));
  double best = cap;
  for (int yi = std::max(0, cy - 1); yi <= std::min(depth.height() - 1, cy + 1); ++yi)
    for (int xi = std::max(0, cx - 1); xi <= std::min(depth.width() - 1, cx + 1); ++xi) {
      const double d = depth.at(xi, yi, 0);
      if (d > 0.0) best = std::min(best, std::abs(range - d));
    }
  return best;
}

}  // namespace

std::pair<int, int> select_adjacent_views(const Camera& target, const std::vector<Camera>& sources) {
  if (sources.size() < 2) throw BlendError("select_adjacent_views: need at least 2 source views");
  constexpr double kTie = 1e-12;
  const double at = optical_axis_azimuth(target);
  const int n = static_cast<int>(sources.size());
  std::vector<double> offset(n);
  for (int i = 0; i < n; ++i) offset[i] = wrap_angle(optical_axis_azimuth(sources[i]) - at);
  auto nearest = [&](auto&& allowed) {
    int best = -1;
    for (int i = 0; i < n; ++i) {
      if (!allowed(i)) continue;
      if (best < 0 || std::abs(offset[i]) < std::abs(offset[best]) - kTie) best = i;
    }
    return best;
  };
  const int v1 = nearest([](int) { return true; });
  int v2 = -1;
  if (std::abs(offset[v1]) > kTie) {
    const bool positive = offset[v1] > 0;
    v2 = nearest([&](int i) { return i != v1 && (positive ? offset[i] < -kTie : offset[i] > kTie); });
  }
  if (v2 < 0) v2 = nearest([&](int i) { return i != v1; });
  return {v1, v2};
}

template <typename Scalar>
WarpSample warp_fetch(const Camera& target, const Eigen::Vector2d& q, double target_depth,
                      const BlendSource<Scalar>& source, const BlendSettings& settings) {
  const Index channels = source.features ? source.features->shape()[2] : 0;
  WarpSample out;
  out.feature = Eigen::VectorXd::Zero(channels);
  out.residual = settings.residual_cap;
  const Ray ray = target.generate_ray(q);
  const Eigen::Vector3d x = ray.at(target_depth);
  const Camera& cam = *source.camera;
  const Eigen::Vector3d to_x = x - cam.center();
  const double range = to_x.norm();
  if (range > 0.0) out.cos_theta = std::clamp(ray.direction.dot(to_x / range), -1.0, 1.0);
  const Projection proj = cam.project(x);
  const double px = proj.pixel.x(), py = proj.pixel.y();
  if (!proj.in_front || px < 0.0 || py < 0.0 || px > cam.width() - 1 || py > cam.height() - 1) return out;
  out.in_bounds = true;
  out.color = sample_rgb(*source.rgb, px, py);
  if (source.features) out.feature = sample_features(*source.features, px, py);
  out.residual = depth_residual(*source.depth, px, py, range, settings.residual_cap);
  out.visibility = out.residual < settings.epsilon() ? 1.0 : 0.0;
  return out;
}

template <typename Scalar>
BlendInputs<Scalar> gather_blend_inputs(const Camera& target, const std::vector<Eigen::Vector2i>& pixels,
                                        const Image& target_depth, const Image& volume_rgb,
                                        const BlendSource<Scalar>& first, const BlendSource<Scalar>& second,
                                        int feature_channels, const BlendSettings& settings) {
  const Index n = static_cast<Index>(pixels.size());
  const Index block = feature_channels + 3;
  BlendInputs<Scalar> in{Matrix<Scalar>(n, 3), Matrix<Scalar>(n, 3), Matrix<Scalar>(n, 3),
                         Matrix<Scalar>::Zero(n, 2 * block)};
  for (Index i = 0; i < n; ++i) {
    const Eigen::Vector2i q = pixels[i];
    const double d = target_depth.at(q.x(), q.y(), 0);
    in.volume_color.row(i) = volume_rgb.rgb(q.x(), q.y()).transpose().template cast<Scalar>();
    int v = 0;
    for (const BlendSource<Scalar>* src : {&first, &second}) {
      const WarpSample w = warp_fetch(target, q.cast<double>(), d, *src, settings);
      (v == 0 ? in.first_color : in.second_color).row(i) = w.color.transpose().template cast<Scalar>();
      const Index c0 = v * block;
      const Index fc = std::min<Index>(feature_channels, w.feature.size());
      for (Index c = 0; c < fc; ++c) in.features(i, c0 + c) = static_cast<Scalar>(w.feature[c]);
      in.features(i, c0 + feature_channels) = static_cast<Scalar>(w.visibility);
      in.features(i, c0 + feature_channels + 1) = static_cast<Scalar>(w.residual);
      in.features(i, c0 + feature_channels + 2) = static_cast<Scalar>(w.cos_theta);
      ++v;
    }
  }
  return in;
}

template <typename Scalar>
Var<Scalar> convex_combine(const Var<Scalar>& weights, const std::vector<Var<Scalar>>& candidates) {
  const Index n = weights.rows(), k = weights.cols();
  if (static_cast<Index>(candidates.size()) != k) throw_shape_mismatch("convex_combine", weights.shape(), Shape{n, static_cast<Index>(candidates.size())});
  const Index c = candidates.front().cols();
  Matrix<Scalar> out = Matrix<Scalar>::Zero(n, c);
  std::vector<int> parents{weights.id()};
  for (Index j = 0; j < k; ++j) {
    const auto& cj = candidates[j].value();
    if (cj.rows() != n || cj.cols() != c) throw_shape_mismatch("convex_combine", candidates[j].shape(), Shape{n, c});
    out += weights.value().col(j).asDiagonal() * cj;
    parents.push_back(candidates[j].id());
  }
  return weights.tape().record(Tensor<Scalar>::from_matrix(std::move(out)), parents, [parents, k](Tape<Scalar>& tp, int self) {
    const auto& g = tp.out_grad(self);
    const auto& w = tp.value(parents[0]);
    const bool want_w = tp.requires_grad(parents[0]);
    Matrix<Scalar> gw = want_w ? Matrix<Scalar>(w.rows(), k) : Matrix<Scalar>();
    for (Index j = 0; j < k; ++j) {
      const int id = parents[j + 1];
      if (want_w) gw.col(j) = g.cwiseProduct(tp.value(id)).rowwise().sum();
      if (tp.requires_grad(id)) tp.accumulate(id, w.col(j).asDiagonal() * g);
    }
    if (want_w) tp.accumulate(parents[0], gw);
  });
}

template <typename Scalar>
BlendOutput<Scalar> blend(const BoundParameters<Scalar>& appearance, const BlendInputs<Scalar>& inputs) {
  Tape<Scalar>& tape = appearance.vars().front().tape();
  Var<Scalar> h = tape.constant(inputs.features);
  for (int i = 0; i < 7; ++i) h = relu(apply_linear(appearance, "l" + std::to_string(i), h));
  BlendOutput<Scalar> out;
  out.weights = softmax(apply_linear(appearance, "out", h));
  out.color = convex_combine(out.weights, std::vector<Var<Scalar>>{tape.constant(inputs.first_color),
                                                                   tape.constant(inputs.volume_color),
                                                                   tape.constant(inputs.second_color)});
  return out;
}

template <typename Scalar>
Image blend_view(const HumanModel<Scalar>& model, const Camera& target, const RenderedView& volume,
                 const std::vector<BlendSource<Scalar>>& sources, const BlendSettings& settings) {
  std::vector<Camera> cams;
  for (const auto& s : sources) cams.push_back(*s.camera);
  const auto [v1, v2] = select_adjacent_views(target, cams);
  std::vector<Eigen::Vector2i> pixels;
  for (int y = 0; y < target.height(); ++y)
    for (int x = 0; x < target.width(); ++x)
      if (volume.alpha.at(x, y, 0) >= settings.background_alpha && volume.depth.at(x, y, 0) > 0.0f)
        pixels.emplace_back(x, y);
  Image out = volume.rgb;
  if (pixels.empty()) return out;
  const auto inputs = gather_blend_inputs(target, pixels, volume.depth, volume.rgb, sources[v1], sources[v2],
                                          model.config.feature_channels, settings);
  Tape<Scalar> tape;
  BoundParameters<Scalar> bound(tape, model.appearance, false);
  const auto res = blend(bound, inputs);
  for (std::size_t i = 0; i < pixels.size(); ++i)
    for (int c = 0; c < 3; ++c)
      out.at(pixels[i].x(), pixels[i].y(), c) = static_cast<float>(res.color.value()(static_cast<Index>(i), c));
  return out;
}

#define HRF_INSTANTIATE_BLENDING(S)                                                                                  \
  template WarpSample warp_fetch(const Camera&, const Eigen::Vector2d&, double, const BlendSource<S>&,               \
                                 const BlendSettings&);                                                              \
  template BlendInputs<S> gather_blend_inputs(const Camera&, const std::vector<Eigen::Vector2i>&, const Image&,      \
                                              const Image&, const BlendSource<S>&, const BlendSource<S>&, int,       \
                                              const BlendSettings&);                                                 \
  template Var<S> convex_combine(const Var<S>&, const std::vector<Var<S>>&);                                         \
  template BlendOutput<S> blend(const BoundParameters<S>&, const BlendInputs<S>&);                                   \
  template Image blend_view(const HumanModel<S>&, const Camera&, const RenderedView&,                                \
                            const std::vector<BlendSource<S>>&, const BlendSettings&);

HRF_INSTANTIATE_BLENDING(float)
HRF_INSTANTIATE_BLENDING(double)

}  // namespace hrf
