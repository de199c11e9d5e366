#include "gradcheck.hpp"
#include "hrf/blending.hpp"
#include "hrf/dataset.hpp"
#include "hrf/model.hpp"

#include <doctest.h>

#include <cmath>

using namespace hrf;

namespace {

std::vector<Camera> ring(int views, double offset_deg = 0.0) {
  RigConfig rig;
  rig.views = views;
  rig.azimuth_offset = offset_deg;
  std::vector<Camera> out;
  for (const auto& c : make_ring_rig(rig)) out.push_back(c.camera);
  return out;
}

Camera ring_target(double azimuth_deg) {
  RigConfig rig;
  rig.views = 2;
  rig.azimuth_offset = azimuth_deg;
  return make_ring_rig(rig)[0].camera;
}

Dataset posed_dataset(int size) {
  DatagenConfig gen;
  gen.frames = 1;
  gen.motion = "arm-wave";
  gen.first_frame = 7;
  gen.rig.width = size;
  gen.rig.height_px = size;
  return generate_dataset(gen);
}

const Dataset& shared_dataset() {
  static const Dataset ds = posed_dataset(64);
  return ds;
}

BlendSource<double> source_of(const Dataset& ds, int view) {
  const ViewImages& v = ds.frames[0].views[view];
  return {&ds.cameras[view].camera, &v.rgb, &v.depth, nullptr};
}

bool interior(const Image& mask, const Eigen::Vector2d& p) {
  const int cx = static_cast<int>(std::lround(p.x())), cy = static_cast<int>(std::lround(p.y()));
  for (int y = cy - 1; y <= cy + 1; ++y)
    for (int x = cx - 1; x <= cx + 1; ++x)
      if (x < 0 || y < 0 || x >= mask.width() || y >= mask.height() || mask.at(x, y, 0) < 0.5f) return false;
  return true;
}

BlendInputs<double> random_inputs(Index n, int channels, Rng& rng) {
  auto rand = [&](Index r, Index c, double lo, double hi) {
    Matrix<double> m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = lo + (hi - lo) * uniform01(rng);
    return m;
  };
  return {rand(n, 3, 0, 1), rand(n, 3, 0, 1), rand(n, 3, 0, 1), rand(n, 2 * (channels + 3), -1, 1)};
}

}  // namespace

TEST_CASE("adjacent view selection") {
  const std::vector<Camera> cams = ring(6);

  SUBCASE("target at a source pose") {
    const auto [v1, v2] = select_adjacent_views(cams[4], cams);
    CHECK(v1 == 4);
    CHECK((v2 == 3 || v2 == 5));
  }
  SUBCASE("midway between two ring cameras") {
    const auto [v1, v2] = select_adjacent_views(ring_target(150.0), cams);
    CHECK(v1 == 2);
    CHECK(v2 == 3);
  }
  SUBCASE("one on each side") {
    const auto [v1, v2] = select_adjacent_views(ring_target(70.0), cams);
    CHECK(v1 == 1);
    CHECK(v2 == 2);
  }
  SUBCASE("a full sweep selects every source equally often") {
    std::vector<int> first(6, 0);
    for (int i = 0; i < 360; ++i) {
      const auto [v1, v2] = select_adjacent_views(ring_target(i + 0.5), cams);
      CHECK(v1 != v2);
      first[v1]++;
    }
    for (int c : first) CHECK(c == 60);
  }
  CHECK_THROWS_AS(select_adjacent_views(cams[0], {cams[1]}), BlendError);
}

TEST_CASE("identity warp") {
  const Dataset& ds = shared_dataset();
  const BlendSource<double> src = source_of(ds, 0);
  const ViewImages& v = ds.frames[0].views[0];
  int checked = 0;
  for (int y = 0; y < 64; y += 3) {
    for (int x = 0; x < 64; x += 3) {
      if (v.mask.at(x, y, 0) < 0.5f) continue;
      const WarpSample w = warp_fetch(*src.camera, Eigen::Vector2d(x, y), v.depth.at(x, y, 0), src, BlendSettings{});
      CHECK(w.in_bounds);
      CHECK(w.residual < 1e-5);
      CHECK(w.visibility == 1.0);
      CHECK((w.color - v.rgb.rgb(x, y).cast<double>()).norm() < 1e-6);
      CHECK(w.cos_theta == doctest::Approx(1.0));
      ++checked;
    }
  }
  CHECK(checked > 20);
}

TEST_CASE("occlusion by depth difference") {
  const Camera cam = ring(6)[0];
  Image rgb(64, 64, 3, 0.5f), depth(64, 64, 1, 1.0f);
  const BlendSource<double> src{&cam, &rgb, &depth, nullptr};
  const Eigen::Vector2d q(20.0, 30.0);

  const WarpSample hidden = warp_fetch(cam, q, 1.5, src, BlendSettings{});
  CHECK(hidden.residual == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(hidden.visibility == 0.0);

  int flips = 0;
  double previous = 1.0;
  for (int i = 0; i <= 100; ++i) {
    const double gap = 1e-3 * i;
    const double o = warp_fetch(cam, q, 1.0 + gap, src, BlendSettings{}).visibility;
    if (o != previous) ++flips;
    previous = o;
  }
  CHECK(flips == 1);
  CHECK(previous == 0.0);

  BlendSettings scaled;
  scaled.scene_scale = 10.0;
  CHECK(warp_fetch(cam, q, 1.1, src, scaled).visibility == 1.0);

  const Camera behind = Camera::look_at(cam.center() + 2.0 * cam.forward(), cam.center() + 3.0 * cam.forward(),
                                        Eigen::Vector3d::UnitY(), cam.intrinsics(), 64, 64);
  const WarpSample off = warp_fetch(cam, q, 1.0, BlendSource<double>{&behind, &rgb, &depth, nullptr}, BlendSettings{});
  CHECK_FALSE(off.in_bounds);
  CHECK(off.visibility == 0.0);
  CHECK(off.color.isZero());
}

TEST_CASE("visibility agrees with the analytic oracle") {
  // At 64 px a texel spans about 3 cm at the actor, wider than the 2 cm
  // threshold; 256 px resolves it.
  const int size = 256;
  const Dataset ds = posed_dataset(size);
  const ActorModel actor = build_actor(*ds.actor_seed);
  const PosedSkeleton posed = pose_transforms(actor.skeleton, ds.frames[0].pose);
  for (int target : {0, 3}) {
    std::vector<Camera> others;
    std::vector<int> ids;
    for (int v : ds.train_views())
      if (v != target) {
        others.push_back(ds.cameras[v].camera);
        ids.push_back(v);
      }
    const Camera& cam = ds.cameras[target].camera;
    const auto [a, b] = select_adjacent_views(cam, others);
    const ViewImages& tv = ds.frames[0].views[target];
    for (int s : {ids[a], ids[b]}) {
      const BlendSource<double> src = source_of(ds, s);
      int total = 0, agree = 0, visible = 0, consistent = 0;
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          if (tv.mask.at(x, y, 0) < 0.5f) continue;
          const WarpSample w = warp_fetch(cam, Eigen::Vector2d(x, y), tv.depth.at(x, y, 0), src, BlendSettings{});
          const Ray ray = cam.generate_ray(Eigen::Vector2d(x, y));
          const Eigen::Vector3d surface = ray.at(intersect_actor(actor, posed, ray)->distance);
          const bool oracle = w.in_bounds && visible_from(actor, posed, ds.cameras[s].camera, surface, 5e-3);
          ++total;
          agree += (oracle == (w.visibility == 1.0));
          // Colour comparison away from the source silhouette, where the
          // bilinear fetch mixes in background.
          if (oracle && interior(ds.frames[0].views[s].mask, ds.cameras[s].camera.project(surface).pixel)) {
            ++visible;
            consistent += (w.color - tv.rgb.rgb(x, y).cast<double>()).cwiseAbs().maxCoeff() < 0.15;
          }
        }
      }
      CAPTURE(target);
      CAPTURE(s);
      CHECK(total > 3000);
      CHECK(agree > 0.95 * total);
      CHECK(visible > 0.5 * total);
      CHECK(consistent > 0.95 * visible);
    }
  }
}

TEST_CASE("blend network") {
  const ModelConfig full;
  CHECK(appearance_input_width(full) == 70);

  ModelConfig cfg;
  cfg.feature_channels = 4;
  cfg.appearance_width = 8;
  Rng rng(1);
  ParameterSet<double> net = make_appearance<double>(cfg);
  net.initialize(rng);
  for (auto& e : net.entries()) e.value.values() *= 3.0;
  const BlendInputs<double> in = random_inputs(40, cfg.feature_channels, rng);

  Tape<double> tape;
  BoundParameters<double> bound(tape, net, false);
  const BlendOutput<double> out = blend(bound, in);
  for (Index i = 0; i < 40; ++i) {
    CHECK((out.weights.value().row(i).array() >= 0.0).all());
    CHECK(out.weights.value().row(i).sum() == doctest::Approx(1.0));
    for (int c = 0; c < 3; ++c) {
      const double lo = std::min({in.first_color(i, c), in.volume_color(i, c), in.second_color(i, c)});
      const double hi = std::max({in.first_color(i, c), in.volume_color(i, c), in.second_color(i, c)});
      CHECK(out.color.value()(i, c) >= lo - 1e-12);
      CHECK(out.color.value()(i, c) <= hi + 1e-12);
    }
  }

  auto objective = [&](Tape<double>&, const std::vector<BoundParameters<double>>& b) {
    Rng proj(2);
    return hrf::testing::project(blend(b[0], in).color, proj);
  };
  const auto r = hrf::testing::check_parameters({&net}, objective, rng, 8);
  CAPTURE(r.worst);
  CHECK(hrf::testing::passes(r, 1e-4));
}

TEST_CASE("identity-warp blending is realizable") {
  const Dataset& ds = shared_dataset();
  const Camera& cam = ds.cameras[0].camera;
  std::vector<Eigen::Vector2i> pixels;
  const ViewImages& tv = ds.frames[0].views[0];
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (tv.mask.at(x, y, 0) > 0.5f) pixels.emplace_back(x, y);
  const Image wrong(64, 64, 3, 0.0f);
  const BlendInputs<double> in =
      gather_blend_inputs(cam, pixels, tv.depth, wrong, source_of(ds, 0), source_of(ds, 1), 4, BlendSettings{});

  ModelConfig cfg;
  cfg.feature_channels = 4;
  cfg.appearance_width = 8;
  ParameterSet<double> net = make_appearance<double>(cfg);
  for (auto& e : net.entries()) e.value.values().setZero();
  net.at("out.bias").values().data()[0] = 30.0;

  Tape<double> tape;
  BoundParameters<double> bound(tape, net, false);
  const Var<double> c = blend(bound, in).color;
  double loss = 0.0;
  for (std::size_t i = 0; i < pixels.size(); ++i)
    loss += (c.value().row(i).transpose() - tv.rgb.rgb(pixels[i].x(), pixels[i].y()).cast<double>()).squaredNorm();
  CHECK(loss / pixels.size() < 1e-12);
}

TEST_CASE("convex combination gradients") {
  Rng rng(3);
  Matrix<double> w(5, 3), a(5, 2), b(5, 2), c(5, 2);
  for (auto* m : {&w, &a, &b, &c})
    for (Index i = 0; i < m->size(); ++i) m->data()[i] = uniform01(rng);
  auto build = [&](Tape<double>& t, const Var<double>& x) {
    Rng proj(4);
    return hrf::testing::project(convex_combine(x, {t.constant(a), t.constant(b), t.constant(c)}), proj);
  };
  std::vector<Index> picks(w.size());
  for (Index i = 0; i < w.size(); ++i) picks[i] = i;
  CHECK(hrf::testing::passes(hrf::testing::check_input(w, Shape{5, 3}, build, picks), 1e-4));
  auto build_a = [&](Tape<double>& t, const Var<double>& x) {
    Rng proj(4);
    return hrf::testing::project(convex_combine(t.constant(w), {x, t.constant(b), t.constant(c)}), proj);
  };
  std::vector<Index> picks_a(a.size());
  for (Index i = 0; i < a.size(); ++i) picks_a[i] = i;
  CHECK(hrf::testing::passes(hrf::testing::check_input(a, Shape{5, 2}, build_a, picks_a), 1e-4));
}
