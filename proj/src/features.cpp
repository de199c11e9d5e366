#include "hrf/features.hpp"

#include <algorithm>
#include <cmath>

namespace hrf {

void check_encoder_size(int width, int height) {
  if (width <= 0 || height <= 0 || width % kEncoderDownsampling != 0 || height % kEncoderDownsampling != 0) {
    throw FeatureError("feature encoder: image size " + std::to_string(width) + "x" + std::to_string(height) +
                       " is not divisible by " + std::to_string(kEncoderDownsampling));
  }
}

template <typename Scalar>
ParameterSet<Scalar> make_encoder(const ModelConfig& config) {
  const Index b = config.encoder_width;
  ParameterSet<Scalar> p;
  add_conv3x3(p, "down0", 4, b);
  add_conv3x3(p, "down1", b, 2 * b);
  add_conv3x3(p, "down2", 2 * b, 4 * b);
  add_conv3x3(p, "down3", 4 * b, 8 * b);
  add_conv3x3(p, "up1", 8 * b + 4 * b, 8 * b);
  add_conv3x3(p, "up2", 8 * b + 2 * b, 4 * b);
  add_conv3x3(p, "up3", 4 * b + b, 2 * b);
  add_conv3x3(p, "out", 2 * b, config.feature_channels);
  return p;
}

template <typename Scalar>
Var<Scalar> extract_features(Tape<Scalar>& tape, const BoundParameters<Scalar>& encoder, const Image& rgba) {
  if (rgba.channels() != 4) throw FeatureError("feature encoder: expected an RGBA image");
  check_encoder_size(rgba.width(), rgba.height());
  Matrix<Scalar> pixels = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                              rgba.data().data(), static_cast<Index>(rgba.width()) * rgba.height(), 4)
                              .template cast<Scalar>();
  return encode(encoder, tape.constant(Tensor<Scalar>(Shape{rgba.height(), rgba.width(), 4}, std::move(pixels))));
}

template <typename Scalar>
Var<Scalar> encode(const BoundParameters<Scalar>& encoder, const Var<Scalar>& x) {
  if (x.shape().size() != 3 || x.shape()[2] != 4) throw FeatureError("feature encoder: expected an [H, W, 4] input");
  check_encoder_size(static_cast<int>(x.shape()[1]), static_cast<int>(x.shape()[0]));
  Var<Scalar> d0 = relu(apply_conv3x3(encoder, "down0", x, 1));
  Var<Scalar> d1 = relu(apply_conv3x3(encoder, "down1", d0, 2));
  Var<Scalar> d2 = relu(apply_conv3x3(encoder, "down2", d1, 2));
  Var<Scalar> d3 = relu(apply_conv3x3(encoder, "down3", d2, 2));
  Var<Scalar> u1 = relu(apply_conv3x3(encoder, "up1", concat_channels(upsample2x(d3), d2), 1));
  Var<Scalar> u2 = relu(apply_conv3x3(encoder, "up2", concat_channels(upsample2x(u1), d1), 1));
  Var<Scalar> u3 = relu(apply_conv3x3(encoder, "up3", concat_channels(upsample2x(u2), d0), 1));
  return apply_conv3x3(encoder, "out", u3, 1);
}

template <typename Scalar>
ViewFetch<Scalar> fetch_view(const Camera& camera, const Var<Scalar>& feature_map, const Matrix<double>& points,
                             const Matrix<double>& target_dirs) {
  const Index n = points.rows();
  Matrix<Scalar> uv(n, 2);
  ViewFetch<Scalar> out;
  out.source_dirs.resize(n, 3);
  out.cos_theta.resize(n, 1);
  std::vector<bool> in_front(n);
  const Eigen::Vector3d centre = camera.center();
  for (Index i = 0; i < n; ++i) {
    const Eigen::Vector3d p = points.row(i).transpose();
    const Projection proj = camera.project(p);
    in_front[i] = proj.in_front;
    if (proj.in_front) {
      uv(i, 0) = static_cast<Scalar>(proj.pixel.x());
      uv(i, 1) = static_cast<Scalar>(proj.pixel.y());
    } else {
      uv.row(i).setConstant(Scalar(-1));
    }
    Eigen::Vector3d dir = p - centre;
    const double len = dir.norm();
    dir = len > 0.0 ? Eigen::Vector3d(dir / len) : Eigen::Vector3d(camera.forward());
    out.source_dirs.row(i) = dir.transpose().template cast<Scalar>();
    const double c = std::clamp(target_dirs.row(i).dot(dir.transpose()), -1.0, 1.0);
    out.cos_theta(i, 0) = static_cast<Scalar>(c);
  }
  SampleResult<Scalar> sampled = bilinear_sample(feature_map, feature_map.tape().constant(std::move(uv)));
  out.features = sampled.values;
  out.valid.resize(n);
  for (Index i = 0; i < n; ++i) out.valid[i] = sampled.valid[i] && in_front[i];
  return out;
}

template <typename Scalar>
PixelFetch fetch(const Camera& camera, const Tensor<Scalar>& feature_map, const Eigen::Vector3d& point,
                 const Eigen::Vector3d& target_dir) {
  Tape<Scalar> tape;
  Var<Scalar> map = tape.constant(feature_map);
  Matrix<double> pts = point.transpose();
  Matrix<double> dirs = target_dir.normalized().transpose();
  ViewFetch<Scalar> vf = fetch_view(camera, map, pts, dirs);
  PixelFetch out;
  out.valid = vf.valid[0];
  out.feature = vf.features.value().row(0).transpose().template cast<double>();
  out.pixel = camera.project(point).pixel;
  out.source_dir = vf.source_dirs.row(0).transpose().template cast<double>();
  out.theta = std::acos(std::clamp(static_cast<double>(vf.cos_theta(0, 0)), -1.0, 1.0));
  return out;
}

int view_blend_input_width(const ModelConfig& config) {
  return 2 * encoded_size(3, config.direction_frequencies) + config.feature_channels + 1;
}

template <typename Scalar>
ParameterSet<Scalar> make_view_blend(const ModelConfig& config) {
  const Index w = config.view_blend_width, half = std::max(1, config.view_blend_width / 2);
  ParameterSet<Scalar> p;
  add_linear(p, "l0", view_blend_input_width(config), w);
  add_linear(p, "l1", w, w);
  add_linear(p, "l2", w, w);
  add_linear(p, "l3", w, w);
  add_linear(p, "l4", w, half);
  add_linear(p, "l5", half, 1);
  return p;
}

template <typename Scalar>
Var<Scalar> view_softmax(const Var<Scalar>& logits, const std::vector<bool>& valid, Index views) {
  const Index total = logits.rows();
  if (logits.cols() != 1 || views <= 0 || total % views != 0 || static_cast<Index>(valid.size()) != total)
    throw_shape_mismatch("view_softmax", logits.shape(), Shape{views});
  const Index n = total / views;
  const auto& l = logits.value();
  Matrix<Scalar> w = Matrix<Scalar>::Zero(n, views);
  constexpr Scalar kMasked = Scalar(-1e9);
  for (Index i = 0; i < n; ++i) {
    Scalar m = kMasked;
    bool any = false;
    for (Index k = 0; k < views; ++k)
      if (valid[k * n + i]) {
        m = any ? std::max(m, l(k * n + i, 0)) : l(k * n + i, 0);
        any = true;
      }
    if (!any) continue;
    Scalar sum = 0;
    for (Index k = 0; k < views; ++k) {
      const Scalar logit = valid[k * n + i] ? l(k * n + i, 0) : kMasked;
      const Scalar e = std::exp(logit - m);
      w(i, k) = e;
      sum += e;
    }
    w.row(i) /= sum;
  }
  const int il = logits.id();
  return logits.tape().record(Tensor<Scalar>::from_matrix(std::move(w)), {il}, [il, n, views](Tape<Scalar>& t, int self) {
    const auto& g = t.out_grad(self);
    const auto& y = t.value(self);
    Matrix<Scalar>& gl = t.grad_buffer(il);
    for (Index i = 0; i < n; ++i) {
      const Scalar dot = g.row(i).dot(y.row(i));
      for (Index k = 0; k < views; ++k) gl(k * n + i, 0) += y(i, k) * (g(i, k) - dot);
    }
  });
}

template <typename Scalar>
Var<Scalar> view_weighted_sum(const Var<Scalar>& weights, const Var<Scalar>& stacked_features) {
  const Index n = weights.rows(), views = weights.cols(), c = stacked_features.cols();
  if (stacked_features.rows() != n * views) throw_shape_mismatch("view_weighted_sum", weights.shape(), stacked_features.shape());
  const auto& w = weights.value();
  const auto& f = stacked_features.value();
  Matrix<Scalar> out = Matrix<Scalar>::Zero(n, c);
  for (Index k = 0; k < views; ++k) out += w.col(k).asDiagonal() * f.middleRows(k * n, n);
  const int iw = weights.id(), iff = stacked_features.id();
  return weights.tape().record(Tensor<Scalar>::from_matrix(std::move(out)), {iw, iff},
                               [iw, iff, n, views](Tape<Scalar>& t, int self) {
                                 const auto& g = t.out_grad(self);
                                 if (t.requires_grad(iw)) {
                                   const auto& fv = t.value(iff);
                                   Matrix<Scalar>& gw = t.grad_buffer(iw);
                                   for (Index k = 0; k < views; ++k)
                                     gw.col(k) += g.cwiseProduct(fv.middleRows(k * n, n)).rowwise().sum();
                                 }
                                 if (t.requires_grad(iff)) {
                                   const auto& wv = t.value(iw);
                                   Matrix<Scalar>& gf = t.grad_buffer(iff);
                                   for (Index k = 0; k < views; ++k) gf.middleRows(k * n, n) += wv.col(k).asDiagonal() * g;
                                 }
                               });
}

template <typename Scalar>
AggregatedFeature<Scalar> aggregate(const BoundParameters<Scalar>& view_blend, const ModelConfig& config,
                                    const std::vector<ViewFetch<Scalar>>& views, const Matrix<double>& target_dirs) {
  if (views.empty()) throw FeatureError("aggregate: no source views");
  Tape<Scalar>& tape = views.front().features.tape();
  const Index n = target_dirs.rows();
  const Index k_views = static_cast<Index>(views.size());
  const int freqs = config.direction_frequencies;
  const Matrix<Scalar> target_pe = positional_encode_rows<Scalar>(target_dirs.template cast<Scalar>(), freqs);

  std::vector<Var<Scalar>> inputs, features;
  std::vector<bool> valid;
  valid.reserve(n * k_views);
  for (const auto& v : views) {
    if (v.features.rows() != n) throw_shape_mismatch("aggregate", v.features.shape(), Shape{n, 3});
    Matrix<Scalar> geometry(n, target_pe.cols() * 2 + 1);
    geometry << target_pe, positional_encode_rows<Scalar>(v.source_dirs, freqs), v.cos_theta;
    // Feature block sits between the direction encodings and cos(theta).
    Var<Scalar> geo = tape.constant(std::move(geometry));
    const Index pe = target_pe.cols();
    inputs.push_back(concat(std::vector<Var<Scalar>>{slice(geo, 0, 2 * pe), v.features, slice(geo, 2 * pe, 1)}));
    features.push_back(v.features);
    valid.insert(valid.end(), v.valid.begin(), v.valid.end());
  }
  Var<Scalar> h = concat_rows(inputs);
  h = relu(apply_linear(view_blend, "l0", h));
  h = relu(apply_linear(view_blend, "l1", h));
  h = relu(apply_linear(view_blend, "l2", h));
  h = relu(apply_linear(view_blend, "l3", h));
  h = relu(apply_linear(view_blend, "l4", h));
  Var<Scalar> logits = apply_linear(view_blend, "l5", h);

  AggregatedFeature<Scalar> out;
  out.weights = view_softmax(logits, valid, k_views);
  out.feature = view_weighted_sum(out.weights, concat_rows(features));
  out.observed.assign(n, false);
  for (Index k = 0; k < k_views; ++k)
    for (Index i = 0; i < n; ++i) out.observed[i] = out.observed[i] || valid[k * n + i];
  return out;
}

#define HRF_INSTANTIATE_FEATURES(S)                                                                                  \
  template ParameterSet<S> make_encoder<S>(const ModelConfig&);                                                      \
  template Var<S> extract_features(Tape<S>&, const BoundParameters<S>&, const Image&);                               \
  template Var<S> encode(const BoundParameters<S>&, const Var<S>&);                                                  \
  template ViewFetch<S> fetch_view(const Camera&, const Var<S>&, const Matrix<double>&, const Matrix<double>&);      \
  template PixelFetch fetch(const Camera&, const Tensor<S>&, const Eigen::Vector3d&, const Eigen::Vector3d&);        \
  template ParameterSet<S> make_view_blend<S>(const ModelConfig&);                                                   \
  template Var<S> view_softmax(const Var<S>&, const std::vector<bool>&, Index);                                      \
  template Var<S> view_weighted_sum(const Var<S>&, const Var<S>&);                                                   \
  template AggregatedFeature<S> aggregate(const BoundParameters<S>&, const ModelConfig&,                             \
                                          const std::vector<ViewFetch<S>>&, const Matrix<double>&);

HRF_INSTANTIATE_FEATURES(float)
HRF_INSTANTIATE_FEATURES(double)

}  // namespace hrf
