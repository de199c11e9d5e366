#include "gradcheck.hpp"
#include "hrf/dataset.hpp"
#include "hrf/field_renderer.hpp"
#include "hrf/render.hpp"

#include <doctest.h>

#include <cmath>

using namespace hrf;

namespace {

Ray segment(double near, double far) {
  Ray r;
  r.near = near;
  r.far = far;
  return r;
}

}  // namespace

TEST_CASE("stratified sampling") {
  const auto mid = sample_stratified(segment(1e-3, 4.0 + 1e-3), 4, nullptr);
  CHECK(mid[0] == doctest::Approx(0.501));
  CHECK(mid[1] == doctest::Approx(1.501));
  CHECK(mid[2] == doctest::Approx(2.501));
  CHECK(mid[3] == doctest::Approx(3.501));

  Rng rng(1);
  const auto jit = sample_stratified(segment(1.0, 3.0), 16, &rng);
  for (int i = 0; i < 16; ++i) {
    CHECK(jit[i] >= 1.0 + i * 0.125);
    CHECK(jit[i] <= 1.0 + (i + 1) * 0.125);
  }
  CHECK_THROWS_AS(sample_stratified(Ray{}, 4, nullptr), RenderError);

  const RenderSettings defaults;
  CHECK(defaults.coarse_samples == 32);
  CHECK(defaults.fine_samples == 64);
}

TEST_CASE("importance sampling") {
  std::vector<double> depths(8);
  for (int i = 0; i < 8; ++i) depths[i] = 0.5 + i;
  Rng rng(2);

  SUBCASE("concentrated weights") {
    std::vector<double> w(8, 0.0);
    w[5] = 1.0;
    const double floor = 1e-3;
    const int n = 2000;
    const auto s = sample_importance(w, depths, 0.0, 8.0, n, &rng, floor);
    // Bin 5 spans the midpoints around depth 5.5.
    int inside = 0;
    for (double t : s) inside += (t >= 5.0 && t <= 6.0);
    const double leak = n * 8 * floor / (1.0 + 8 * floor);
    CHECK(n - inside <= 3.0 * leak + 5.0);
  }
  SUBCASE("uniform weights give uniform samples") {
    std::vector<double> w(8, 1.0);
    const int n = 10000;
    const auto s = sample_importance(w, depths, 0.0, 8.0, n, &rng, 0.0);
    std::vector<int> counts(16, 0);
    for (double t : s) counts[std::min(15, static_cast<int>(t / 0.5))]++;
    double chi2 = 0.0;
    const double expected = n / 16.0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // 15 degrees of freedom; 99.9th percentile is 37.7.
    CHECK(chi2 < 37.7);
  }
  SUBCASE("sorted output and merge") {
    std::vector<double> w{0.1, 0.5, 0.2, 0.0, 0.0, 0.9, 0.1, 0.0};
    const auto s = sample_importance(w, depths, 0.0, 8.0, 64, &rng, 1e-2);
    CHECK(std::is_sorted(s.begin(), s.end()));
    const auto merged = merge_sorted(depths, s);
    CHECK(merged.size() == 72);
    CHECK(std::is_sorted(merged.begin(), merged.end()));
  }
}

TEST_CASE("compositing closed forms") {
  SUBCASE("empty space") {
    RaySamples s;
    s.far = 2.0;
    s.depths = sample_stratified(segment(1.0, 2.0), 16, nullptr);
    s.density.assign(16, 0.0);
    s.color.assign(16, Eigen::Vector3d(0.2, 0.4, 0.6));
    const RenderOutput out = composite(s);
    CHECK(out.alpha == 0.0);
    CHECK(out.color.isZero());
  }
  SUBCASE("single opaque sample") {
    RaySamples s;
    s.depths = {2.0};
    s.far = 3.0;
    s.density = {20.0};
    s.color = {Eigen::Vector3d(1.0, 0.5, 0.25)};
    const RenderOutput out = composite(s);
    CHECK(out.alpha == doctest::Approx(1.0).epsilon(1e-8));
    CHECK((out.color - Eigen::Vector3d(1.0, 0.5, 0.25)).norm() < 1e-8);
    CHECK(out.depth == doctest::Approx(2.0));
  }
  SUBCASE("homogeneous medium") {
    const double analytic = 1.0 - std::exp(-2.0);
    double previous = std::numeric_limits<double>::infinity();
    for (int n : {32, 64, 128, 256, 512}) {
      RaySamples s;
      s.far = 2.0;
      s.depths = sample_stratified(segment(1.0, 2.0), n, nullptr);
      s.density.assign(n, 2.0);
      s.color.assign(n, Eigen::Vector3d::Ones());
      const RenderOutput out = composite(s);
      const double err = std::abs(out.alpha - (1.0 - std::exp(-2.0 * (1.0 - 0.5 / n))));
      CHECK(err < 1e-12);  // exact for piecewise-constant density
      const double vs_segment = std::abs(out.alpha - analytic);
      if (n == 256) CHECK(vs_segment < 1e-3);
      CHECK(vs_segment < previous);
      previous = vs_segment;
    }
  }
  SUBCASE("weights sum to alpha") {
    Rng rng(3);
    RaySamples s;
    s.far = 5.0;
    double t = 0.1;
    for (int i = 0; i < 40; ++i) {
      s.depths.push_back(t);
      t += 0.1 * uniform01(rng);
      s.density.push_back(10.0 * uniform01(rng));
      s.color.emplace_back(uniform01(rng), uniform01(rng), uniform01(rng));
    }
    const RenderOutput out = composite(s);
    double sum = 0.0;
    for (double w : out.weights) {
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
      sum += w;
    }
    CHECK(sum == doctest::Approx(out.alpha).epsilon(1e-12));
    CHECK(out.alpha <= 1.0 + 1e-12);
  }
  SUBCASE("opaque surface depth within one sample spacing") {
    RaySamples s;
    s.far = 4.0;
    const double spacing = 4.0 / 64;
    for (int i = 0; i < 64; ++i) {
      const double t = (i + 0.5) * spacing;
      s.depths.push_back(t);
      s.density.push_back(t >= 2.3 ? 500.0 : 0.0);
      s.color.emplace_back(0.5, 0.5, 0.5);
    }
    CHECK(std::abs(composite(s).depth - 2.3) <= spacing);
  }
}

TEST_CASE("batched compositor agrees with the scalar one") {
  Rng rng(4);
  const int rays = 3, n = 10;
  Matrix<double> sigma(rays * n, 1), color(rays * n, 3), t(rays * n, 1);
  std::vector<double> fars(rays);
  std::vector<RaySamples> ref(rays);
  for (int r = 0; r < rays; ++r) {
    double depth = 0.5;
    for (int i = 0; i < n; ++i) {
      const int k = r * n + i;
      t(k, 0) = depth;
      depth += 0.05 + 0.1 * uniform01(rng);
      sigma(k, 0) = 5.0 * uniform01(rng);
      color.row(k) << uniform01(rng), uniform01(rng), uniform01(rng);
      ref[r].depths.push_back(t(k, 0));
      ref[r].density.push_back(sigma(k, 0));
      ref[r].color.push_back(color.row(k).transpose());
    }
    fars[r] = depth;
    ref[r].far = depth;
  }
  Tape<double> tape;
  auto out = composite(tape.constant(sigma), tape.constant(color), tape.constant(t), fars, n);
  for (int r = 0; r < rays; ++r) {
    const RenderOutput e = composite(ref[r]);
    CHECK((out.color.value().row(r).transpose() - e.color).norm() < 1e-12);
    CHECK(out.alpha.value()(r, 0) == doctest::Approx(e.alpha).epsilon(1e-12));
    CHECK(out.depth.value()(r, 0) == doctest::Approx(e.depth).epsilon(1e-12));
  }

  auto build_from = [&](int which) {
    return [&, which](Tape<double>& tp, const Var<double>& x) {
      Var<double> s = which == 0 ? x : tp.constant(sigma);
      Var<double> c = which == 1 ? x : tp.constant(color);
      Var<double> d = which == 2 ? x : tp.constant(t);
      auto res = composite(s, c, d, fars, n);
      Rng proj(5);
      return hrf::testing::project(concat<double>({res.color, res.alpha, res.depth}), proj);
    };
  };
  auto all = [](Index count) {
    std::vector<Index> v(count);
    for (Index i = 0; i < count; ++i) v[i] = i;
    return v;
  };
  CHECK(hrf::testing::passes(hrf::testing::check_input(sigma, Shape{rays * n, 1}, build_from(0), all(sigma.size())), 1e-4));
  CHECK(hrf::testing::passes(hrf::testing::check_input(color, Shape{rays * n, 3}, build_from(1), all(color.size())), 1e-4));
  CHECK(hrf::testing::passes(hrf::testing::check_input(t, Shape{rays * n, 1}, build_from(2), all(t.size())), 1e-4));
}

TEST_CASE("composed render path gradients") {
  ModelConfig cfg;
  cfg.feature_channels = 4;
  cfg.encoder_width = 2;
  cfg.view_blend_width = 8;
  cfg.deform_width = 8;
  cfg.field_width = 8;
  cfg.position_frequencies = 4;

  DatagenConfig gen;
  gen.frames = 1;
  gen.rig.views = 2;
  gen.rig.width = 16;
  gen.rig.height_px = 16;
  const Dataset ds = generate_dataset(gen);
  const FrameContext frame = FrameContext::make(ds.skeleton, ds.frames[0].pose, ds.source_views(0, {0, 1}), 0.3);

  Rng rng(7);
  HumanModel<double> model = HumanModel<double>::create(cfg, rng);
  RenderSettings settings;
  settings.coarse_samples = 12;
  settings.fine_samples = 0;  // fine depths come from a non-differentiable pass

  const Camera& cam = ds.cameras[0].camera;
  std::vector<Ray> rays;
  for (const auto& q : {Eigen::Vector2d(7.5, 6.0), Eigen::Vector2d(8.0, 9.0), Eigen::Vector2d(7.0, 12.0)})
    rays.push_back(cam.generate_ray(q));

  auto objective = [&](Tape<double>& t, const std::vector<BoundParameters<double>>& b) {
    BoundModel<double> bound(t, model, Trainable::none());
    bound.encoder = b[0];
    bound.view_blend = b[1];
    bound.deform = b[2];
    bound.field = b[3];
    const auto maps = source_feature_maps(bound, frame);
    const auto res = render_rays(model, bound, frame, maps, rays, settings, nullptr);
    Rng proj(8);
    return hrf::testing::project(concat<double>({res.color, res.alpha, res.depth}), proj);
  };
  const auto r =
      hrf::testing::check_parameters({&model.encoder, &model.view_blend, &model.deform, &model.field}, objective, rng, 4);
  CAPTURE(r.worst);
  CAPTURE(r.max_rel_error);
  CHECK(hrf::testing::passes(r, 1e-3));
}
