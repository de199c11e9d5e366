#include "hrf/field_renderer.hpp"

#include <algorithm>

namespace hrf {

namespace {

// Places the rows of `a` at `rows` of a zero matrix with `total` rows.
template <typename Scalar>
Var<Scalar> scatter_rows(const Var<Scalar>& a, const std::vector<Index>& rows, Index total) {
  Matrix<Scalar> out = Matrix<Scalar>::Zero(total, a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(rows[i]) = a.value().row(static_cast<Index>(i));
  const int ia = a.id();
  return a.tape().record(Tensor<Scalar>::from_matrix(std::move(out)), {ia}, [ia, rows](Tape<Scalar>& tp, int self) {
    const auto& g = tp.out_grad(self);
    Matrix<Scalar>& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < rows.size(); ++i) ga.row(static_cast<Index>(i)) += g.row(rows[i]);
  });
}

template <typename Scalar>
std::vector<Var<Scalar>> as_constants(Tape<Scalar>& tape, const std::vector<Tensor<Scalar>>& maps) {
  std::vector<Var<Scalar>> out;
  for (const auto& m : maps) out.push_back(tape.constant(m));
  return out;
}

}  // namespace

FrameContext FrameContext::make(const Skeleton& skeleton, const SkeletonPose& pose, std::vector<SourceView> sources,
                                double margin) {
  FrameContext ctx;
  ctx.posed = pose_transforms(skeleton, pose);
  ctx.bounds = ctx.posed.bounds().dilated(margin);
  ctx.sources = std::move(sources);
  return ctx;
}

template <typename Scalar>
BoundModel<Scalar>::BoundModel(Tape<Scalar>& tape, const HumanModel<Scalar>& model, Trainable trainable)
    : encoder(tape, model.encoder, trainable.encoder),
      view_blend(tape, model.view_blend, trainable.view_blend),
      deform(tape, model.deform, trainable.deform),
      field(tape, model.field, trainable.field) {}

PointGeometry point_geometry(const PosedSkeleton& posed, const Matrix<double>& points, const SkinningConfig& skinning) {
  const Index n = points.rows();
  const int joints = posed.size();
  PointGeometry g{Matrix<double>(n, 3), Matrix<double>(n, joints), Matrix<double>(n, 3 * joints)};
  for (Index i = 0; i < n; ++i) {
    const Eigen::Vector3d p = points.row(i).transpose();
    const Eigen::VectorXd w = skinning_weights(p, posed, skinning);
    Eigen::Vector3d c;
    try {
      c = inverse_skin(p, posed, w);
    } catch (const SkeletonError&) {
      // Degenerate blend: fall back to the dominant bone.
      Index best = 0;
      w.maxCoeff(&best);
      c = posed.bone_transforms[best].inverse() * p;
    }
    g.skinned.row(i) = c.transpose();
    const PoseDescriptor d = pose_descriptor(p, posed);
    g.distances.row(i) = d.distances.transpose();
    g.directions.row(i) = d.directions.transpose();
  }
  return g;
}

template <typename Scalar>
std::vector<Var<Scalar>> source_feature_maps(const BoundModel<Scalar>& bound, const FrameContext& frame) {
  std::vector<Var<Scalar>> out;
  if (bound.encoder.vars().empty()) return out;
  Tape<Scalar>& tape = bound.encoder.vars().front().tape();
  for (const auto& s : frame.sources) out.push_back(extract_features(tape, bound.encoder, s.encoder_input()));
  return out;
}

template <typename Scalar>
std::vector<Tensor<Scalar>> source_feature_maps(const HumanModel<Scalar>& model, const FrameContext& frame) {
  std::vector<Tensor<Scalar>> out;
  for (const auto& s : frame.sources) {
    Tape<Scalar> tape;
    BoundParameters<Scalar> enc(tape, model.encoder, false);
    out.push_back(extract_features(tape, enc, s.encoder_input()).tensor());
  }
  return out;
}

template <typename Scalar>
PointSamples<Scalar> evaluate_points(const BoundModel<Scalar>& bound, const ModelConfig& config,
                                     const FrameContext& frame, const std::vector<Var<Scalar>>& feature_maps,
                                     const Matrix<double>& points, const Matrix<double>& view_dirs,
                                     const SkinningConfig& skinning) {
  if (feature_maps.size() != frame.sources.size() || feature_maps.empty())
    throw FeatureError("evaluate_points: need one feature map per source view");
  const PointGeometry geo = point_geometry(frame.posed, points, skinning);
  std::vector<ViewFetch<Scalar>> fetches;
  for (std::size_t k = 0; k < frame.sources.size(); ++k)
    fetches.push_back(fetch_view(frame.sources[k].camera, feature_maps[k], points, view_dirs));
  AggregatedFeature<Scalar> agg = aggregate(bound.view_blend, config, fetches, view_dirs);
  Deformation<Scalar> def = deform(bound.deform, config, geo.skinned, geo.distances, geo.directions, agg.feature);
  RadianceSamples<Scalar> rad = query_field(bound.field, config, def.canonical, view_dirs, agg.feature);
  return {rad, def, agg};
}

template <typename Scalar>
RayBatchResult<Scalar> render_rays(const HumanModel<Scalar>& model, const BoundModel<Scalar>& bound,
                                   const FrameContext& frame, const std::vector<Var<Scalar>>& feature_maps,
                                   const std::vector<Ray>& rays, const RenderSettings& settings, Rng* rng) {
  if (settings.coarse_samples < 1 || settings.fine_samples < 0)
    throw RenderError("render_rays: invalid sample counts");
  Tape<Scalar>& tape = bound.field.vars().front().tape();
  const Index total = static_cast<Index>(rays.size());
  RayBatchResult<Scalar> res;
  res.hit.assign(rays.size(), false);
  res.fars.assign(rays.size(), 0.0);
  std::vector<Ray> live;
  std::vector<Index> live_rows;
  for (Index r = 0; r < total; ++r) {
    const auto iv = ray_bounds(rays[r], frame.bounds);
    if (!iv) continue;
    Ray ray = rays[r];
    ray.near = iv->near;
    ray.far = iv->far;
    res.hit[r] = true;
    res.fars[r] = iv->far;
    live.push_back(ray);
    live_rows.push_back(r);
  }
  const int nc = settings.coarse_samples, nf = settings.fine_samples;
  res.samples_per_ray = nc + nf;
  if (live.empty()) {
    res.color = tape.constant(Matrix<Scalar>::Zero(total, 3));
    res.alpha = tape.constant(Matrix<Scalar>::Zero(total, 1));
    res.depth = tape.constant(Matrix<Scalar>::Zero(total, 1));
    return res;
  }
  const Index nr = static_cast<Index>(live.size());
  std::vector<double> fars(nr);
  std::vector<std::vector<double>> coarse(nr);
  for (Index r = 0; r < nr; ++r) {
    coarse[r] = sample_stratified(live[r], nc, rng);
    fars[r] = live[r].far;
  }

  auto sample_points = [&](const std::vector<std::vector<double>>& depths, Index per_ray, Matrix<double>& pts,
                           Matrix<double>& dirs, Matrix<Scalar>& t) {
    pts.resize(nr * per_ray, 3);
    dirs.resize(nr * per_ray, 3);
    t.resize(nr * per_ray, 1);
    for (Index r = 0; r < nr; ++r)
      for (Index i = 0; i < per_ray; ++i) {
        const Index k = r * per_ray + i;
        pts.row(k) = live[r].at(depths[r][i]).transpose();
        dirs.row(k) = live[r].direction.transpose();
        t(k, 0) = static_cast<Scalar>(depths[r][i]);
      }
  };

  std::vector<std::vector<double>> merged = coarse;
  if (nf > 0) {
    Tape<Scalar> scratch;
    BoundModel<Scalar> frozen(scratch, model, Trainable::none());
    std::vector<Tensor<Scalar>> maps;
    for (const auto& m : feature_maps) maps.push_back(m.tensor());
    const auto scratch_maps = as_constants(scratch, maps);
    Matrix<double> pts, dirs;
    Matrix<Scalar> t;
    sample_points(coarse, nc, pts, dirs, t);
    const auto s = evaluate_points(frozen, model.config, frame, scratch_maps, pts, dirs, settings.skinning);
    const auto comp = composite(s.radiance.density, s.radiance.color, scratch.constant(std::move(t)), fars, nc);
    for (Index r = 0; r < nr; ++r) {
      std::vector<double> w(nc);
      for (int i = 0; i < nc; ++i) w[i] = static_cast<double>(comp.weights(r, i));
      merged[r] = merge_sorted(
          coarse[r], sample_importance(w, coarse[r], live[r].near, live[r].far, nf, rng, settings.importance_floor));
    }
  }

  const Index per_ray = nc + nf;
  Matrix<double> pts, dirs;
  Matrix<Scalar> t;
  sample_points(merged, per_ray, pts, dirs, t);
  const auto s = evaluate_points(bound, model.config, frame, feature_maps, pts, dirs, settings.skinning);
  const auto comp = composite(s.radiance.density, s.radiance.color, tape.constant(std::move(t)), fars, per_ray);
  if (nr == total) {
    res.color = comp.color;
    res.alpha = comp.alpha;
    res.depth = comp.depth;
  } else {
    res.color = scatter_rows(comp.color, live_rows, total);
    res.alpha = scatter_rows(comp.alpha, live_rows, total);
    res.depth = scatter_rows(comp.depth, live_rows, total);
  }
  return res;
}

template <typename Scalar>
RenderedView render_view(const HumanModel<Scalar>& model, const FrameContext& frame, const Camera& camera,
                         const RenderSettings& settings) {
  const int w = camera.width(), h = camera.height();
  RenderedView out{Image(w, h, 3), Image(w, h, 1), Image(w, h, 1)};
  const auto maps = source_feature_maps(model, frame);
  const Index pixels = static_cast<Index>(w) * h;
  const Index chunk = std::max(1, settings.chunk_rays);
  for (Index begin = 0; begin < pixels; begin += chunk) {
    const Index end = std::min(pixels, begin + chunk);
    std::vector<Ray> rays;
    for (Index p = begin; p < end; ++p)
      rays.push_back(camera.generate_ray(Eigen::Vector2d(static_cast<double>(p % w), static_cast<double>(p / w))));
    Tape<Scalar> tape;
    BoundModel<Scalar> bound(tape, model, Trainable::none());
    const auto res = render_rays(model, bound, frame, as_constants(tape, maps), rays, settings, nullptr);
    for (Index p = begin; p < end; ++p) {
      const Index r = p - begin;
      const int x = static_cast<int>(p % w), y = static_cast<int>(p / w);
      for (int c = 0; c < 3; ++c) out.rgb.at(x, y, c) = static_cast<float>(res.color.value()(r, c));
      const double a = static_cast<double>(res.alpha.value()(r, 0));
      out.alpha.at(x, y, 0) = static_cast<float>(a);
      double d = 0.0;
      if (res.hit[r]) d = a >= settings.background_alpha ? static_cast<double>(res.depth.value()(r, 0)) : res.fars[r];
      out.depth.at(x, y, 0) = static_cast<float>(d);
    }
  }
  return out;
}

#define HRF_INSTANTIATE_FIELD_RENDERER(S)                                                                            \
  template struct BoundModel<S>;                                                                                     \
  template std::vector<Var<S>> source_feature_maps(const BoundModel<S>&, const FrameContext&);                       \
  template std::vector<Tensor<S>> source_feature_maps(const HumanModel<S>&, const FrameContext&);                    \
  template PointSamples<S> evaluate_points(const BoundModel<S>&, const ModelConfig&, const FrameContext&,            \
                                           const std::vector<Var<S>>&, const Matrix<double>&, const Matrix<double>&, \
                                           const SkinningConfig&);                                                   \
  template RayBatchResult<S> render_rays(const HumanModel<S>&, const BoundModel<S>&, const FrameContext&,            \
                                         const std::vector<Var<S>>&, const std::vector<Ray>&, const RenderSettings&, \
                                         Rng*);                                                                      \
  template RenderedView render_view(const HumanModel<S>&, const FrameContext&, const Camera&, const RenderSettings&);

HRF_INSTANTIATE_FIELD_RENDERER(float)
HRF_INSTANTIATE_FIELD_RENDERER(double)

}  // namespace hrf
