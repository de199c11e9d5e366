#include "hrf/training.hpp"

#include "hrf/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace hrf {

namespace {

Rng restore_rng(const std::string& text) {
  Rng rng;
  if (text.empty()) return rng;
  std::istringstream in(text);
  in >> rng;
  if (!in) throw TrainingError("checkpoint RNG state is unreadable");
  return rng;
}

std::string save_rng(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

int pick(Rng& rng, int n) { return std::min(n - 1, static_cast<int>(uniform01(rng) * n)); }

std::vector<int> dilated_foreground(const Image& mask, int radius) {
  std::vector<int> out;
  const int w = mask.width(), h = mask.height();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool hit = false;
      for (int dy = -radius; dy <= radius && !hit; ++dy)
        for (int dx = -radius; dx <= radius && !hit; ++dx) {
          const int xx = x + dx, yy = y + dy;
          hit = xx >= 0 && yy >= 0 && xx < w && yy < h && mask.at(xx, yy, 0) >= 0.5f;
        }
      if (hit) out.push_back(y * w + x);
    }
  return out;
}

struct RayBatch {
  std::vector<Ray> rays;
  std::vector<int> pixels;
  Matrix<float> color;
  Matrix<float> mask;
};

RayBatch sample_batch(const Camera& camera, const ViewImages& view, const std::vector<int>& foreground,
                      const TrainConfig& config, Rng& rng) {
  const int w = camera.width(), total = camera.width() * camera.height();
  const int n = config.batch_rays;
  const int n_fg = foreground.empty() ? 0 : static_cast<int>(std::lround(config.foreground_fraction * n));
  RayBatch b;
  b.color.resize(n, 3);
  b.mask.resize(n, 1);
  for (int i = 0; i < n; ++i) {
    const int p = i < n_fg ? foreground[pick(rng, static_cast<int>(foreground.size()))] : pick(rng, total);
    const int x = p % w, y = p / w;
    b.pixels.push_back(p);
    b.rays.push_back(camera.generate_ray(Eigen::Vector2d(x, y)));
    for (int c = 0; c < 3; ++c) b.color(i, c) = view.rgb.at(x, y, c);
    b.mask(i, 0) = view.mask.at(x, y, 0);
  }
  return b;
}

Adam<float> make_adam(const Checkpoint& ckpt, const std::string& name, const LrSchedule& schedule,
                      const ParameterSet<float>& params) {
  AdamConfig cfg;
  cfg.schedule = schedule;
  Adam<float> adam(cfg);
  const auto it = ckpt.optimizer.find(name);
  if (it != ckpt.optimizer.end())
    adam.state() = it->second;
  else
    adam.reset(params);
  return adam;
}

void begin_stage(Checkpoint& ckpt, Stage stage) {
  if (ckpt.stage == stage) return;
  ckpt.stage = stage;
  ckpt.stage_step = 0;
  ckpt.optimizer.clear();
}

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::Generalizable: return "train";
    case Stage::Finetune: return "finetune";
    case Stage::Blending: return "train-blend";
  }
  return "train";
}

[[noreturn]] void abort_non_finite(const TrainOptions& options, Stage stage, std::int64_t step, int subject, int frame,
                                   int target, const std::vector<int>& sources, const std::vector<int>& pixels,
                                   double color, double mask) {
  nlohmann::json dump = {{"stage", stage_name(stage)}, {"step", step},       {"subject", subject},
                         {"frame", frame},             {"target", target},   {"sources", sources},
                         {"pixels", pixels},           {"color_loss", std::isfinite(color) ? color : -1.0},
                         {"mask_loss", std::isfinite(mask) ? mask : -1.0}};
  std::string where = dump.dump();
  if (!options.dump_dir.empty()) {
    std::filesystem::create_directories(options.dump_dir);
    const auto path = options.dump_dir / ("nonfinite_step_" + std::to_string(step) + ".json");
    std::ofstream(path) << dump.dump(2) << '\n';
    where = path.string();
  }
  throw TrainingError("non-finite loss at " + std::string(stage_name(stage)) + " step " + std::to_string(step) +
                      "; batch dump: " + where);
}

Tensor<float> view_features(const HumanModel<float>& model, const Image& rgb, const Image& mask) {
  Tape<float> tape;
  BoundParameters<float> enc(tape, model.encoder, false);
  return extract_features(tape, enc, masked_rgba(rgb, mask)).tensor();
}

const BoundParameters<float>& bound_network(const BoundModel<float>& bound, const std::string& name) {
  if (name == "encoder") return bound.encoder;
  if (name == "view_blend") return bound.view_blend;
  if (name == "deform") return bound.deform;
  return bound.field;
}

void run_radiance(Checkpoint& ckpt, const std::vector<const Dataset*>& subjects, const TrainConfig& config,
                  const TrainOptions& options, Stage stage, Trainable trainable, std::int64_t steps) {
  if (subjects.empty()) throw TrainingError("training needs at least one subject");
  for (const Dataset* ds : subjects) {
    if (ds->frames.empty()) throw TrainingError("training dataset has no frames");
    if (ds->train_views().size() < 2) throw TrainingError("training needs at least 2 training views per frame");
    if (ds->skeleton.size() != config.model.joints)
      throw TrainingError("dataset skeleton has " + std::to_string(ds->skeleton.size()) +
                          " joints, model expects " + std::to_string(config.model.joints));
  }
  begin_stage(ckpt, stage);
  const std::int64_t end = options.stop_at >= 0 ? std::min(steps, options.stop_at) : steps;
  const LrSchedule schedule{config.lr_start, config.lr_end, steps};
  HumanModel<float>& model = ckpt.model;

  std::vector<std::string> names;
  if (trainable.encoder) names.push_back("encoder");
  if (trainable.view_blend) names.push_back("view_blend");
  if (trainable.deform) names.push_back("deform");
  if (trainable.field) names.push_back("field");
  std::map<std::string, Adam<float>> adams;
  for (const auto& n : names) adams.emplace(n, make_adam(ckpt, n, schedule, network(model, n)));

  Rng rng = restore_rng(ckpt.rng_state);
  std::map<std::tuple<int, int, int>, std::vector<int>> fg_cache;
  std::map<std::string, std::vector<Tensor<float>>> feature_cache;

  for (; ckpt.stage_step < end; ++ckpt.stage_step) {
    const int s = pick(rng, static_cast<int>(subjects.size()));
    const Dataset& ds = *subjects[s];
    const int f = pick(rng, static_cast<int>(ds.frames.size()));
    const auto train = ds.train_views();
    const int target = train[pick(rng, static_cast<int>(train.size()))];
    const auto sources = select_sources(ds, config.source_views, target);
    const FrameContext ctx = frame_context(ds, f, sources, config);
    const ViewImages& view = ds.frames[f].views[target];
    auto& fg = fg_cache[{s, f, target}];
    if (fg.empty()) fg = dilated_foreground(view.mask, config.mask_dilation);
    const RayBatch batch = sample_batch(ds.cameras[target].camera, view, fg, config, rng);

    Tape<float> tape;
    BoundModel<float> bound(tape, model, trainable);
    std::vector<Var<float>> maps;
    if (trainable.encoder) {
      maps = source_feature_maps(bound, ctx);
    } else {
      std::string key = std::to_string(s) + ":" + std::to_string(f);
      for (int v : sources) key += "," + std::to_string(v);
      auto& cached = feature_cache[key];
      if (cached.empty()) cached = source_feature_maps(model, ctx);
      for (const auto& m : cached) maps.push_back(tape.constant(m));
    }
    const auto res = render_rays(model, bound, ctx, maps, batch.rays, config.render, &rng);
    const Var<float> lc = color_loss(res.color, batch.color);
    const Var<float> lm = mask_loss(res.alpha, batch.mask);
    const Var<float> total = add(lc, scale(lm, static_cast<float>(config.mask_weight)));
    const double vc = lc.value()(0, 0), vm = lm.value()(0, 0), vt = total.value()(0, 0);
    if (!std::isfinite(vt)) abort_non_finite(options, stage, ckpt.stage_step, s, f, target, sources, batch.pixels, vc, vm);
    tape.backward(total);
    double lr = schedule.at(ckpt.stage_step);
    for (const auto& n : names) lr = adams.at(n).step(network(model, n), collect_gradients(tape, bound_network(bound, n)));

    const std::int64_t done = ckpt.stage_step + 1;
    LogRecord rec{stage_name(stage), ckpt.stage_step, vc, vm, vt, config.mask_weight, lr, std::nullopt};
    bool emit = options.log && config.log_every > 0 && (ckpt.stage_step % config.log_every == 0 || done == steps);
    if (options.validate_every > 0 && done % options.validate_every == 0) {
      const Dataset& v0 = *subjects.front();
      const int vt0 = v0.train_views().front();
      const auto vs = select_sources(v0, config.source_views, vt0);
      const RenderedView rv = render_frame_view(model, v0, 0, v0.cameras[vt0].camera, vs, config);
      rec.validation_psnr = psnr(rv.rgb, v0.frames[0].views[vt0].rgb);
      emit = static_cast<bool>(options.log);
    }
    if (emit) options.log(rec);
  }
  ckpt.rng_state = save_rng(rng);
  for (const auto& [n, adam] : adams) ckpt.optimizer[n] = adam.state();
}

struct BlendPool {
  BlendInputs<float> inputs;
  Matrix<float> target;
};

}  // namespace

template <typename Scalar>
Var<Scalar> color_loss(const Var<Scalar>& rendered, const Matrix<Scalar>& target) {
  if (rendered.rows() != target.rows() || rendered.cols() != target.cols())
    throw_shape_mismatch("color_loss", rendered.shape(), Shape{target.rows(), target.cols()});
  Tape<Scalar>& tape = rendered.tape();
  const Var<Scalar> diff = sub(rendered, tape.constant(target));
  return scale(reduce_sum(square(diff)), static_cast<Scalar>(1.0 / std::max<Index>(1, target.rows())));
}

template <typename Scalar>
Var<Scalar> mask_loss(const Var<Scalar>& alpha, const Matrix<Scalar>& mask) {
  if (alpha.rows() != mask.rows() || alpha.cols() != 1 || mask.cols() != 1)
    throw_shape_mismatch("mask_loss", alpha.shape(), Shape{mask.rows(), 1});
  const Index n = alpha.rows();
  const Scalar eps = static_cast<Scalar>(kMaskEpsilon);
  const auto& a = alpha.value();
  Scalar sum = 0;
  for (Index i = 0; i < n; ++i) {
    const Scalar p = std::clamp(a(i, 0), eps, Scalar(1) - eps);
    sum -= mask(i, 0) * std::log(p) + (Scalar(1) - mask(i, 0)) * std::log(Scalar(1) - p);
  }
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(std::max<Index>(1, n));
  const int ia = alpha.id();
  return alpha.tape().record(Tensor<Scalar>::scalar(sum * inv_n), {ia},
                             [ia, mask, eps, inv_n](Tape<Scalar>& tp, int self) {
                               const Scalar g = tp.out_grad(self)(0, 0);
                               const auto& a = tp.value(ia);
                               Matrix<Scalar> ga = Matrix<Scalar>::Zero(a.rows(), 1);
                               for (Index i = 0; i < a.rows(); ++i) {
                                 const Scalar p = a(i, 0);
                                 if (p < eps || p > Scalar(1) - eps) continue;
                                 ga(i, 0) = g * inv_n * (p - mask(i, 0)) / (p * (Scalar(1) - p));
                               }
                               tp.accumulate(ia, ga);
                             });
}

std::string to_json_line(const LogRecord& r) {
  nlohmann::json j = {{"stage", r.stage}, {"step", r.step},     {"L_c", r.color}, {"L_m", r.mask},
                      {"total", r.total}, {"lambda", r.lambda}, {"lr", r.lr}};
  if (r.validation_psnr) j["validation_psnr"] = *r.validation_psnr;
  return j.dump();
}

Checkpoint initial_checkpoint(const TrainConfig& config) {
  Rng rng(config.seed);
  Checkpoint ckpt;
  ckpt.model = HumanModel<float>::create(config.model, rng);
  ckpt.rng_state = save_rng(rng);
  return ckpt;
}

void check_compatible(const Checkpoint& ckpt, const TrainConfig& config) {
  if (!(ckpt.model.config == config.model))
    throw TrainingError("checkpoint architecture " + model_config_json(ckpt.model.config) +
                        " does not match the configured model " + model_config_json(config.model));
}

void train_generalizable(Checkpoint& ckpt, const std::vector<const Dataset*>& subjects, const TrainConfig& config,
                         const TrainOptions& options) {
  check_compatible(ckpt, config);
  run_radiance(ckpt, subjects, config, options, Stage::Generalizable, Trainable::all(), config.steps);
}

void finetune(Checkpoint& ckpt, const Dataset& subject, const TrainConfig& config, const TrainOptions& options) {
  check_compatible(ckpt, config);
  Trainable t{config.finetune_encoder, false, true, true};
  run_radiance(ckpt, {&subject}, config, options, Stage::Finetune, t, config.finetune_steps);
}

void train_blending(Checkpoint& ckpt, const Dataset& ds, const TrainConfig& config, const TrainOptions& options) {
  check_compatible(ckpt, config);
  if (!ds.has_depth()) throw TrainingError("blend training requires depth maps in the dataset");
  const auto train = ds.train_views();
  if (train.size() < (config.blend_leave_one_out ? 3u : 2u))
    throw TrainingError("blend training needs at least " + std::string(config.blend_leave_one_out ? "3" : "2") +
                        " training views");
  begin_stage(ckpt, Stage::Blending);
  const std::int64_t steps = config.blend_steps;
  const std::int64_t end = options.stop_at >= 0 ? std::min(steps, options.stop_at) : steps;
  if (ckpt.stage_step >= end) return;
  HumanModel<float>& model = ckpt.model;

  // Every foreground pixel of every training view, warped with ground-truth depth.
  BlendPool pool;
  std::vector<BlendInputs<float>> parts;
  std::vector<Matrix<float>> targets;
  for (int f = 0; f < static_cast<int>(ds.frames.size()); ++f)
    for (int t : train) {
      auto ex = blend_example(model, ds, f, t, config.blend_leave_one_out, config);
      parts.push_back(std::move(ex.inputs));
      targets.push_back(std::move(ex.target));
    }
  Index rows = 0;
  for (const auto& p : parts) rows += p.features.rows();
  if (rows == 0) throw TrainingError("blend training found no foreground pixels");
  const Index width = parts.front().features.cols();
  pool.inputs = {Matrix<float>(rows, 3), Matrix<float>(rows, 3), Matrix<float>(rows, 3), Matrix<float>(rows, width)};
  pool.target.resize(rows, 3);
  Index r0 = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Index n = parts[i].features.rows();
    pool.inputs.first_color.middleRows(r0, n) = parts[i].first_color;
    pool.inputs.second_color.middleRows(r0, n) = parts[i].second_color;
    pool.inputs.volume_color.middleRows(r0, n) = parts[i].volume_color;
    pool.inputs.features.middleRows(r0, n) = parts[i].features;
    pool.target.middleRows(r0, n) = targets[i];
    r0 += n;
  }

  const LrSchedule schedule{config.blend_lr_start, config.blend_lr_end, steps};
  Adam<float> adam = make_adam(ckpt, "appearance", schedule, model.appearance);
  Rng rng = restore_rng(ckpt.rng_state);
  const Index batch = config.blend_batch;
  for (; ckpt.stage_step < end; ++ckpt.stage_step) {
    BlendInputs<float> in{Matrix<float>(batch, 3), Matrix<float>(batch, 3), Matrix<float>(batch, 3),
                          Matrix<float>(batch, width)};
    Matrix<float> target(batch, 3);
    std::vector<int> picked;
    for (Index i = 0; i < batch; ++i) {
      const int k = pick(rng, static_cast<int>(rows));
      picked.push_back(k);
      in.first_color.row(i) = pool.inputs.first_color.row(k);
      in.second_color.row(i) = pool.inputs.second_color.row(k);
      in.volume_color.row(i) = pool.inputs.volume_color.row(k);
      in.features.row(i) = pool.inputs.features.row(k);
      target.row(i) = pool.target.row(k);
    }
    Tape<float> tape;
    BoundParameters<float> bound(tape, model.appearance, true);
    const auto out = blend(bound, in);
    const Var<float> loss = color_loss(out.color, target);
    const double v = loss.value()(0, 0);
    if (!std::isfinite(v)) abort_non_finite(options, Stage::Blending, ckpt.stage_step, 0, -1, -1, {}, picked, v, 0.0);
    tape.backward(loss);
    const double lr = adam.step(model.appearance, collect_gradients(tape, bound));
    const std::int64_t done = ckpt.stage_step + 1;
    if (options.log && config.log_every > 0 && (ckpt.stage_step % config.log_every == 0 || done == steps))
      options.log(LogRecord{stage_name(Stage::Blending), ckpt.stage_step, v, 0.0, v, 0.0, lr, std::nullopt});
  }
  ckpt.rng_state = save_rng(rng);
  ckpt.optimizer["appearance"] = adam.state();
  ckpt.appearance_trained = true;
}

std::vector<int> select_sources(const Dataset& ds, int source_views, int target) {
  const auto train = ds.train_views();
  const int n = static_cast<int>(train.size());
  if (n < 1) throw TrainingError("dataset has no training views");
  if (source_views > n)
    throw TrainingError("requested " + std::to_string(source_views) + " source views but the dataset has " +
                        std::to_string(n));
  const int k = source_views <= 0 ? n : source_views;
  if (k == n) return train;
  std::vector<int> pool;
  for (int v : train)
    if (v != target) pool.push_back(v);
  const int m = static_cast<int>(pool.size());
  std::vector<int> out;
  for (int i = 0; i < k; ++i) out.push_back(pool[static_cast<std::size_t>(i) * m / k]);
  return out;
}

FrameContext frame_context(const Dataset& ds, int frame, const std::vector<int>& sources, const TrainConfig& config) {
  return FrameContext::make(ds.skeleton, ds.frames.at(frame).pose, ds.source_views(frame, sources),
                            config.render.bounds_margin);
}

RenderedView render_frame_view(const HumanModel<float>& model, const Dataset& ds, int frame, const Camera& camera,
                               const std::vector<int>& sources, const TrainConfig& config) {
  return render_view(model, frame_context(ds, frame, sources, config), camera, config.render);
}

Image blend_frame_view(const HumanModel<float>& model, const Dataset& ds, int frame, const Camera& camera,
                       const std::vector<int>& sources, const RenderedView& volume, const TrainConfig& config) {
  std::vector<Camera> cams;
  for (int v : sources) cams.push_back(ds.cameras[v].camera);
  const auto [a, b] = select_adjacent_views(camera, cams);
  const int v1 = sources[a], v2 = sources[b];
  const ViewImages& i1 = ds.frames[frame].views[v1];
  const ViewImages& i2 = ds.frames[frame].views[v2];
  const RenderedView d1 = render_frame_view(model, ds, frame, ds.cameras[v1].camera, sources, config);
  const RenderedView d2 = render_frame_view(model, ds, frame, ds.cameras[v2].camera, sources, config);
  const Tensor<float> f1 = view_features(model, i1.rgb, i1.mask), f2 = view_features(model, i2.rgb, i2.mask);
  std::vector<BlendSource<float>> src{{&ds.cameras[v1].camera, &i1.rgb, &d1.depth, &f1},
                                      {&ds.cameras[v2].camera, &i2.rgb, &d2.depth, &f2}};
  BlendSettings bs = config.blend;
  bs.background_alpha = config.render.background_alpha;
  return blend_view(model, camera, volume, src, bs);
}

BlendExample blend_example(const HumanModel<float>& model, const Dataset& ds, int frame, int target,
                           bool leave_one_out, const TrainConfig& config) {
  const auto train = ds.train_views();
  std::vector<int> candidates;
  for (int v : train)
    if (!leave_one_out || v != target) candidates.push_back(v);
  std::vector<Camera> cams;
  for (int v : candidates) cams.push_back(ds.cameras[v].camera);
  const Camera& cam = ds.cameras[target].camera;
  const auto [a, b] = select_adjacent_views(cam, cams);
  const int v1 = candidates[a], v2 = candidates[b];
  const DatasetFrame& fr = ds.frames[frame];
  BlendExample ex;
  ex.volume = render_frame_view(model, ds, frame, cam, select_sources(ds, config.source_views, target), config);
  const Tensor<float> f1 = view_features(model, fr.views[v1].rgb, fr.views[v1].mask);
  const Tensor<float> f2 = view_features(model, fr.views[v2].rgb, fr.views[v2].mask);
  const ViewImages& tv = fr.views[target];
  for (int y = 0; y < cam.height(); ++y)
    for (int x = 0; x < cam.width(); ++x)
      if (tv.mask.at(x, y, 0) >= 0.5f && tv.depth.at(x, y, 0) > 0.0f) ex.pixels.emplace_back(x, y);
  BlendSource<float> s1{&ds.cameras[v1].camera, &fr.views[v1].rgb, &fr.views[v1].depth, &f1};
  BlendSource<float> s2{&ds.cameras[v2].camera, &fr.views[v2].rgb, &fr.views[v2].depth, &f2};
  ex.inputs = gather_blend_inputs(cam, ex.pixels, tv.depth, ex.volume.rgb, s1, s2, model.config.feature_channels,
                                  config.blend);
  ex.target.resize(static_cast<Index>(ex.pixels.size()), 3);
  for (std::size_t i = 0; i < ex.pixels.size(); ++i)
    ex.target.row(static_cast<Index>(i)) = tv.rgb.rgb(ex.pixels[i].x(), ex.pixels[i].y()).transpose();
  ex.first_view = v1;
  ex.second_view = v2;
  return ex;
}

Matrix<float> apply_blend(const HumanModel<float>& model, const BlendInputs<float>& inputs) {
  if (inputs.features.rows() == 0) return Matrix<float>(0, 3);
  Tape<float> tape;
  BoundParameters<float> bound(tape, model.appearance, false);
  return blend(bound, inputs).color.value();
}

template Var<float> color_loss(const Var<float>&, const Matrix<float>&);
template Var<double> color_loss(const Var<double>&, const Matrix<double>&);
template Var<float> mask_loss(const Var<float>&, const Matrix<float>&);
template Var<double> mask_loss(const Var<double>&, const Matrix<double>&);

}  // namespace hrf
