#include "gradcheck.hpp"
#include "hrf/training.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace hrf;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.model.feature_channels = 4;
  c.model.encoder_width = 2;
  c.model.view_blend_width = 8;
  c.model.deform_width = 8;
  c.model.field_width = 8;
  c.model.appearance_width = 8;
  c.model.position_frequencies = 4;
  c.render.coarse_samples = 4;
  c.render.fine_samples = 4;
  c.steps = 6;
  c.batch_rays = 16;
  c.lr_start = 1e-3;
  c.lr_end = 1e-4;
  c.finetune_steps = 4;
  c.blend_steps = 5;
  c.blend_batch = 32;
  c.log_every = 1;
  return c;
}

const Dataset& tiny_dataset() {
  static const Dataset ds = [] {
    DatagenConfig gen;
    gen.frames = 2;
    gen.rig.views = 4;
    gen.rig.width = 16;
    gen.rig.height_px = 16;
    return generate_dataset(gen);
  }();
  return ds;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("hrf_test_training_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("colour loss") {
  Tape<double> tape;
  Matrix<double> one(1, 3), target(1, 3);
  one << 0.6, 0.2, 0.3;
  target << 0.5, 0.2, 0.3;
  CHECK(color_loss(tape.constant(one), target).value()(0, 0) == doctest::Approx(0.01));
  CHECK(color_loss(tape.constant(target), target).value()(0, 0) == 0.0);

  Rng rng(1);
  Matrix<double> a(37, 3), b(37, 3);
  for (Index i = 0; i < a.size(); ++i) {
    a.data()[i] = uniform01(rng);
    b.data()[i] = uniform01(rng);
  }
  double naive = 0.0;
  for (Index r = 0; r < 37; ++r)
    for (Index c = 0; c < 3; ++c) naive += (a(r, c) - b(r, c)) * (a(r, c) - b(r, c));
  CHECK(color_loss(tape.constant(a), b).value()(0, 0) == doctest::Approx(naive / 37).epsilon(1e-12));
  CHECK_THROWS(color_loss(tape.constant(a), Matrix<double>(36, 3)));
}

TEST_CASE("mask loss") {
  Tape<double> tape;
  Matrix<double> half(1, 1), zero(1, 1), sure(1, 1), one(1, 1);
  half << 0.5;
  zero << 0.0;
  sure << 1.0 - kMaskEpsilon;
  one << 1.0;
  CHECK(mask_loss(tape.constant(half), zero).value()(0, 0) == doctest::Approx(std::log(2.0)));
  CHECK(mask_loss(tape.constant(sure), one).value()(0, 0) < 2e-6);

  Rng rng(2);
  Matrix<double> alpha(9, 1), mask(9, 1);
  for (Index i = 0; i < 9; ++i) {
    alpha(i, 0) = 0.05 + 0.9 * uniform01(rng);
    mask(i, 0) = i % 2;
  }
  Tape<double> t;
  Var<double> x = t.leaf(Tensor<double>::from_matrix(alpha, true));
  t.backward(mask_loss(x, mask));
  const Matrix<double> g = t.grad(x);
  for (Index i = 0; i < 9; ++i) {
    const double a = alpha(i, 0), m = mask(i, 0);
    CHECK(g(i, 0) == doctest::Approx((a - m) / (a * (1.0 - a)) / 9.0).epsilon(1e-12));
  }
  CHECK(TrainConfig{}.mask_weight == 0.1);
  CHECK(TrainConfig{}.batch_rays == 4096);
  CHECK(TrainConfig{}.render.coarse_samples == 32);
  CHECK(TrainConfig{}.render.fine_samples == 64);
}

TEST_CASE("config parsing") {
  const TrainConfig c = parse_config(R"({"steps": 12, "model": {"field_width": 16}, "render": {"fine_samples": 0}})");
  CHECK(c.steps == 12);
  CHECK(c.model.field_width == 16);
  CHECK(c.model.deform_width == 256);
  CHECK(c.render.fine_samples == 0);
  CHECK_THROWS_AS(parse_config(R"({"stepz": 12})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"model": {"field_wdith": 16}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"steps": "many"})"), ConfigError);
  CHECK_THROWS_AS(parse_config("[1, 2]"), ConfigError);
  const std::string text = config_to_json(tiny_config());
  CHECK(config_to_json(parse_config(text)) == text);
  CHECK(config_hash(tiny_config().model) != config_hash(ModelConfig{}));
}

TEST_CASE("checkpoint serialization") {
  const TrainConfig cfg = tiny_config();
  Checkpoint ckpt = initial_checkpoint(cfg);
  train_generalizable(ckpt, {&tiny_dataset()}, cfg, TrainOptions{2, {}, {}, 0});
  const std::string bytes = serialize_checkpoint(ckpt);
  CHECK(serialize_checkpoint(deserialize_checkpoint(bytes)) == bytes);

  const fs::path dir = scratch_dir("ckpt");
  save_checkpoint(dir / "a.ckpt", ckpt);
  CHECK(serialize_checkpoint(load_checkpoint(dir / "a.ckpt")) == bytes);

  std::string corrupt = bytes;
  corrupt[corrupt.size() / 2] ^= 0x5a;
  CHECK_THROWS_AS(deserialize_checkpoint(corrupt), CheckpointChecksumError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() / 3)), CheckpointError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, 6)), CheckpointTruncatedError);

  // The version field follows the 8-byte magic.
  std::string future = bytes;
  future[8] = static_cast<char>(kCheckpointVersion + 1);
  CHECK_THROWS_AS(deserialize_checkpoint(future), CheckpointVersionError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), CheckpointError);
  fs::remove_all(dir);
}

TEST_CASE("resumed training matches uninterrupted training") {
  const TrainConfig cfg = tiny_config();
  std::vector<std::string> straight_log, resumed_log;

  Checkpoint straight = initial_checkpoint(cfg);
  train_generalizable(straight, {&tiny_dataset()}, cfg,
                      TrainOptions{-1, [&](const LogRecord& r) { straight_log.push_back(to_json_line(r)); }, {}, 0});

  Checkpoint first = initial_checkpoint(cfg);
  auto log = [&](const LogRecord& r) { resumed_log.push_back(to_json_line(r)); };
  train_generalizable(first, {&tiny_dataset()}, cfg, TrainOptions{3, log, {}, 0});
  Checkpoint second = deserialize_checkpoint(serialize_checkpoint(first));
  train_generalizable(second, {&tiny_dataset()}, cfg, TrainOptions{-1, log, {}, 0});

  CHECK(second.stage_step == cfg.steps);
  CHECK(resumed_log == straight_log);
  CHECK(serialize_checkpoint(second) == serialize_checkpoint(straight));
}

TEST_CASE("log records") {
  const TrainConfig cfg = tiny_config();
  Checkpoint ckpt = initial_checkpoint(cfg);
  std::vector<LogRecord> records;
  train_generalizable(ckpt, {&tiny_dataset()}, cfg,
                      TrainOptions{-1, [&](const LogRecord& r) { records.push_back(r); }, {}, 3});
  REQUIRE(records.size() == static_cast<std::size_t>(cfg.steps));
  for (const auto& r : records) {
    CHECK(std::isfinite(r.total));
    CHECK(r.total == doctest::Approx(r.color + 0.1 * r.mask).epsilon(1e-5));
    const auto j = nlohmann::json::parse(to_json_line(r));
    for (const char* key : {"L_c", "L_m", "total", "lr", "lambda", "step", "stage"}) CHECK(j.contains(key));
  }
  CHECK(records[2].validation_psnr.has_value());
  CHECK_FALSE(records[1].validation_psnr.has_value());
  CHECK(records.front().lr == doctest::Approx(cfg.lr_start));
}

TEST_CASE("freezing contracts") {
  const TrainConfig cfg = tiny_config();
  Checkpoint base = initial_checkpoint(cfg);
  train_generalizable(base, {&tiny_dataset()}, cfg);

  auto digests = [](const Checkpoint& c) {
    std::map<std::string, std::uint64_t> d;
    for (const auto& [name, params] : named_networks(c.model)) d[name] = parameter_digest(*params);
    return d;
  };
  const auto before = digests(base);

  SUBCASE("fine-tuning") {
    Checkpoint ft = base;
    finetune(ft, tiny_dataset(), cfg);
    const auto after = digests(ft);
    CHECK(after.at("encoder") == before.at("encoder"));
    CHECK(after.at("view_blend") == before.at("view_blend"));
    CHECK(after.at("appearance") == before.at("appearance"));
    CHECK(after.at("deform") != before.at("deform"));
    CHECK(after.at("field") != before.at("field"));

    TrainConfig open = cfg;
    open.finetune_encoder = true;
    Checkpoint ft2 = base;
    finetune(ft2, tiny_dataset(), open);
    CHECK(digests(ft2).at("encoder") != before.at("encoder"));
    CHECK(digests(ft2).at("view_blend") == before.at("view_blend"));
  }
  SUBCASE("blend training") {
    Checkpoint bl = base;
    train_blending(bl, tiny_dataset(), cfg);
    const auto after = digests(bl);
    for (const char* n : {"encoder", "view_blend", "deform", "field"}) CHECK(after.at(n) == before.at(n));
    CHECK(after.at("appearance") != before.at("appearance"));
    CHECK(bl.appearance_trained);

    Dataset no_depth = tiny_dataset();
    for (auto& f : no_depth.frames)
      for (auto& v : f.views) v.depth = Image();
    Checkpoint again = base;
    CHECK_THROWS_AS(train_blending(again, no_depth, cfg), TrainingError);
  }
  SUBCASE("architecture mismatch") {
    TrainConfig other = cfg;
    other.model.field_width = 12;
    Checkpoint c = base;
    CHECK_THROWS_AS(finetune(c, tiny_dataset(), other), TrainingError);
  }
}

TEST_CASE("non-finite loss aborts with a batch dump") {
  const TrainConfig cfg = tiny_config();
  Checkpoint ckpt = initial_checkpoint(cfg);
  ckpt.model.field.entries().front().value.values().setConstant(std::numeric_limits<float>::quiet_NaN());
  const fs::path dir = scratch_dir("nan");
  CHECK_THROWS_AS(train_generalizable(ckpt, {&tiny_dataset()}, cfg, TrainOptions{-1, {}, dir, 0}), TrainingError);
  CHECK(fs::exists(dir / "nonfinite_step_0.json"));
  fs::remove_all(dir);
}

TEST_CASE("source selection") {
  DatagenConfig gen;
  gen.frames = 1;
  gen.rig.views = 6;
  gen.rig.holdout = 2;
  gen.rig.width = 8;
  gen.rig.height_px = 8;
  const Dataset ds = generate_dataset(gen);
  CHECK(ds.train_views() == std::vector<int>{0, 1, 2, 3, 4, 5});
  CHECK(ds.holdout_views() == std::vector<int>{6, 7});
  CHECK(select_sources(ds, 6, 2) == std::vector<int>{0, 1, 2, 3, 4, 5});
  CHECK(select_sources(ds, 0, 2) == std::vector<int>{0, 1, 2, 3, 4, 5});
  const auto four = select_sources(ds, 4, 2);
  CHECK(four.size() == 4);
  CHECK(std::find(four.begin(), four.end(), 2) == four.end());
  const auto two = select_sources(ds, 2, -1);
  CHECK(two == std::vector<int>{0, 3});
  CHECK_THROWS_AS(select_sources(ds, 7, 0), TrainingError);
}
