#include "hrf/checkpoint.hpp"
#include "hrf/config.hpp"
#include "hrf/dataset.hpp"
#include "hrf/metrics.hpp"
#include "hrf/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>

namespace fs = std::filesystem;
using namespace hrf;

namespace {

std::string error_name(const std::exception& e) {
  if (dynamic_cast<const DatasetError*>(&e)) return "DatasetError";
  if (dynamic_cast<const CheckpointVersionError*>(&e)) return "CheckpointVersionError";
  if (dynamic_cast<const CheckpointChecksumError*>(&e)) return "CheckpointChecksumError";
  if (dynamic_cast<const CheckpointTruncatedError*>(&e)) return "CheckpointTruncatedError";
  if (dynamic_cast<const CheckpointError*>(&e)) return "CheckpointError";
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const TrainingError*>(&e)) return "TrainingError";
  if (dynamic_cast<const BlendError*>(&e)) return "BlendError";
  if (dynamic_cast<const RenderError*>(&e)) return "RenderError";
  if (dynamic_cast<const FeatureError*>(&e)) return "FeatureError";
  if (dynamic_cast<const SkeletonError*>(&e)) return "SkeletonError";
  if (dynamic_cast<const CameraError*>(&e)) return "CameraError";
  if (dynamic_cast<const ImageError*>(&e)) return "ImageError";
  if (dynamic_cast<const ShapeError*>(&e)) return "ShapeError";
  if (dynamic_cast<const std::invalid_argument*>(&e)) return "InvalidArgument";
  return "Error";
}

class LogSink {
 public:
  explicit LogSink(const std::string& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::app);
      if (!file_) throw std::runtime_error("cannot open log file " + path);
    }
  }
  LogFn fn() {
    return [this](const LogRecord& r) {
      const std::string line = to_json_line(r);
      std::cout << line << '\n';
      if (file_.is_open()) file_ << line << '\n' << std::flush;
    };
  }

 private:
  std::ofstream file_;
};

TrainConfig config_or_default(const std::string& path) { return path.empty() ? TrainConfig{} : load_config(path); }

// Least-squares point closest to every training camera's optical axis.
Eigen::Vector3d rig_centre(const Dataset& ds) {
  Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  for (int v : ds.train_views()) {
    const Camera& c = ds.cameras[v].camera;
    const Eigen::Vector3d d = c.forward();
    const Eigen::Matrix3d p = Eigen::Matrix3d::Identity() - d * d.transpose();
    a += p;
    b += p * c.center();
  }
  return a.ldlt().solve(b);
}

std::vector<Camera> orbit_cameras(const Dataset& ds, int count) {
  const Eigen::Vector3d centre = rig_centre(ds);
  const Camera& ref = ds.cameras[ds.train_views().front()].camera;
  double radius = 0.0, height = 0.0;
  const auto train = ds.train_views();
  for (int v : train) {
    const Eigen::Vector3d c = ds.cameras[v].camera.center() - centre;
    radius += std::hypot(c.x(), c.z());
    height += c.y();
  }
  radius /= train.size();
  height /= train.size();
  std::vector<Camera> out;
  for (int i = 0; i < count; ++i) {
    const double a = 2.0 * std::numbers::pi * i / count;
    const Eigen::Vector3d eye = centre + Eigen::Vector3d(radius * std::sin(a), height, radius * std::cos(a));
    out.push_back(Camera::look_at(eye, centre, Eigen::Vector3d::UnitY(), ref.intrinsics(), ref.width(), ref.height()));
  }
  return out;
}

void write_view(const fs::path& stem, const Image& rgb, const RenderedView& view) {
  fs::create_directories(stem.parent_path());
  save_png8(fs::path(stem.string() + ".rgb.png"), rgb);
  save_png8(fs::path(stem.string() + ".alpha.png"), view.alpha);
  save_depth_png(fs::path(stem.string() + ".depth.png"), view.depth);
}

void print_report(const MetricReport& report, bool masked, const std::string& json_path) {
  std::printf("%-32s %9s %8s %9s", "image", "PSNR", "SSIM", "MAE");
  if (masked) std::printf(" %11s %10s", "fg-PSNR", "fg-MAE");
  std::printf("\n");
  auto row = [&](const ImageMetrics& m) {
    std::printf("%-32s %9.3f %8.4f %9.3f", m.name.c_str(), m.psnr, m.ssim, m.mae);
    if (masked) std::printf(" %11.3f %10.3f", m.masked_psnr, m.masked_mae);
    std::printf("\n");
  };
  for (const auto& m : report.images) row(m);
  row(report.mean);
  std::printf("LPIPS: not computed (out of scope for this tool)\n");
  if (json_path.empty()) return;
  nlohmann::json j;
  auto entry = [&](const ImageMetrics& m) {
    nlohmann::json e = {{"name", m.name}, {"psnr", m.psnr}, {"ssim", m.ssim}, {"mae", m.mae}};
    if (masked) {
      e["masked_psnr"] = m.masked_psnr;
      e["masked_mae"] = m.masked_mae;
    }
    return e;
  };
  for (const auto& m : report.images) j["images"].push_back(entry(m));
  j["mean"] = entry(report.mean);
  j["lpips"] = "not computed";
  std::ofstream(json_path) << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generalizable neural radiance fields for animated humans: data generation, training, rendering, evaluation"};
  app.require_subcommand(1);

  // datagen
  auto* datagen = app.add_subcommand("datagen", "Render a synthetic multi-view dataset of an animated capsule actor");
  DatagenConfig dg;
  std::string dg_out;
  datagen->add_option("--out", dg_out, "Output dataset directory")->required();
  datagen->add_option("--views", dg.rig.views, "Number of training cameras on the ring")->capture_default_str();
  datagen->add_option("--holdout", dg.rig.holdout, "Extra held-out cameras between ring cameras")->capture_default_str();
  datagen->add_option("--frames", dg.frames, "Number of frames")->capture_default_str();
  datagen->add_option("--first-frame", dg.first_frame, "Index of the first frame")->capture_default_str();
  int size = 64;
  datagen->add_option("--size", size, "Image width and height in pixels (multiple of 8)")->capture_default_str();
  datagen->add_option("--seed", dg.seed, "Actor seed")->capture_default_str();
  datagen->add_option("--motion", dg.motion, "idle-sway, arm-wave, walk-cycle or twist")->capture_default_str();
  datagen->add_option("--period", dg.period, "Motion period in frames")->capture_default_str();
  datagen->add_option("--radius", dg.rig.radius, "Camera ring radius (m)")->capture_default_str();
  datagen->add_option("--camera-height", dg.rig.height, "Camera height above the rig centre (m)")->capture_default_str();
  datagen->add_option("--fov", dg.rig.field_of_view, "Horizontal field of view (degrees)")->capture_default_str();

  // train / finetune / train-blend share most options
  std::string config_path, data_dir, ckpt_in, ckpt_out, log_path, dump_dir;
  std::vector<std::string> subjects;
  std::int64_t steps_override = -1;
  int validate_every = 0;
  bool unfreeze_encoder = false;

  auto* train = app.add_subcommand("train", "Train the generalizable radiance field on one or more subjects");
  train->add_option("--config", config_path, "JSON training config");
  train->add_option("--data", subjects, "Dataset directory (repeat for several subjects)")->required();
  train->add_option("--out", ckpt_out, "Output checkpoint")->required();
  train->add_option("--resume", ckpt_in, "Resume from this checkpoint");
  train->add_option("--log", log_path, "Append JSON-lines training logs to this file");
  train->add_option("--steps", steps_override, "Override the configured step count");
  train->add_option("--validate-every", validate_every, "Log a validation PSNR every n steps");
  train->add_option("--dump-dir", dump_dir, "Directory for diagnostic dumps of non-finite batches");

  auto* ft = app.add_subcommand("finetune", "Fine-tune deformation and radiance networks on one subject");
  ft->add_option("--config", config_path, "JSON training config");
  ft->add_option("--data", data_dir, "Subject dataset directory")->required();
  ft->add_option("--checkpoint", ckpt_in, "Base checkpoint")->required();
  ft->add_option("--out", ckpt_out, "Output checkpoint")->required();
  ft->add_option("--log", log_path, "Append JSON-lines logs to this file");
  ft->add_option("--steps", steps_override, "Override the configured fine-tuning step count");
  ft->add_flag("--unfreeze-encoder", unfreeze_encoder, "Also optimize the image encoder");
  ft->add_option("--dump-dir", dump_dir, "Directory for diagnostic dumps of non-finite batches");

  auto* tb = app.add_subcommand("train-blend", "Train the appearance blending network (needs depth maps)");
  tb->add_option("--config", config_path, "JSON training config");
  tb->add_option("--data", data_dir, "Dataset directory with depth maps")->required();
  tb->add_option("--checkpoint", ckpt_in, "Radiance checkpoint")->required();
  tb->add_option("--out", ckpt_out, "Output checkpoint")->required();
  tb->add_option("--log", log_path, "Append JSON-lines logs to this file");
  tb->add_option("--steps", steps_override, "Override the configured blending step count");

  // render
  auto* render = app.add_subcommand("render", "Render novel views from a checkpoint");
  std::string render_out, view_set = "all";
  int orbit = 0, render_frame = -1, source_views = -1;
  bool use_blend = false;
  render->add_option("--config", config_path, "JSON config (render settings)");
  render->add_option("--checkpoint", ckpt_in, "Checkpoint")->required();
  render->add_option("--data", data_dir, "Dataset providing poses and source views")->required();
  render->add_option("--out", render_out, "Output directory")->required();
  render->add_option("--orbit", orbit, "Render n cameras on an orbit instead of dataset cameras");
  render->add_option("--cameras", view_set, "Dataset cameras: all, train, holdout or a comma list of indices")
      ->capture_default_str();
  render->add_option("--frame", render_frame, "Render only this frame position (default: all frames)");
  render->add_option("--sources", source_views, "Number of source views K (default: config)");
  render->add_flag("--blend", use_blend, "Refine with the appearance blending network");

  // eval
  auto* eval = app.add_subcommand("eval", "Compare rendered images with ground truth");
  std::string rendered_dir, truth_dir, json_out;
  bool masked = false;
  eval->add_option("--rendered", rendered_dir, "Directory of rendered *.rgb.png")->required();
  eval->add_option("--truth", truth_dir, "Ground-truth dataset directory")->required();
  eval->add_flag("--masked", masked, "Also report foreground-only PSNR and MAE");
  eval->add_option("--json", json_out, "Write the report as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*datagen) {
      dg.rig.width = dg.rig.height_px = size;
      check_encoder_size(size, size);
      write_dataset(dg_out, generate_dataset(dg));
      std::printf("wrote %d frames x %d cameras to %s\n", dg.frames, dg.rig.views + dg.rig.holdout, dg_out.c_str());
      return 0;
    }
    if (*train) {
      TrainConfig cfg = config_or_default(config_path);
      if (steps_override >= 0) cfg.steps = static_cast<int>(steps_override);
      std::vector<Dataset> data;
      for (const auto& s : subjects) data.push_back(read_dataset(s));
      std::vector<const Dataset*> ptrs;
      for (const auto& d : data) ptrs.push_back(&d);
      Checkpoint ckpt = ckpt_in.empty() ? initial_checkpoint(cfg) : load_checkpoint(ckpt_in);
      LogSink sink(log_path);
      TrainOptions opts;
      opts.log = sink.fn();
      opts.dump_dir = dump_dir;
      opts.validate_every = validate_every;
      train_generalizable(ckpt, ptrs, cfg, opts);
      save_checkpoint(ckpt_out, ckpt);
      return 0;
    }
    if (*ft) {
      TrainConfig cfg = config_or_default(config_path);
      if (steps_override >= 0) cfg.finetune_steps = static_cast<int>(steps_override);
      cfg.finetune_encoder = cfg.finetune_encoder || unfreeze_encoder;
      const Dataset ds = read_dataset(data_dir);
      Checkpoint ckpt = load_checkpoint(ckpt_in);
      LogSink sink(log_path);
      TrainOptions opts;
      opts.log = sink.fn();
      opts.dump_dir = dump_dir;
      finetune(ckpt, ds, cfg, opts);
      save_checkpoint(ckpt_out, ckpt);
      return 0;
    }
    if (*tb) {
      TrainConfig cfg = config_or_default(config_path);
      if (steps_override >= 0) cfg.blend_steps = static_cast<int>(steps_override);
      const Dataset ds = read_dataset(data_dir);
      Checkpoint ckpt = load_checkpoint(ckpt_in);
      LogSink sink(log_path);
      TrainOptions opts;
      opts.log = sink.fn();
      train_blending(ckpt, ds, cfg, opts);
      save_checkpoint(ckpt_out, ckpt);
      return 0;
    }
    if (*render) {
      TrainConfig cfg = config_or_default(config_path);
      const Checkpoint ckpt = load_checkpoint(ckpt_in);
      cfg.model = ckpt.model.config;
      if (source_views >= 0) cfg.source_views = source_views;
      if (use_blend && !ckpt.appearance_trained)
        throw CheckpointError("--blend needs a checkpoint with trained appearance blending weights (run train-blend)");
      const Dataset ds = read_dataset(data_dir);
      std::vector<int> frames;
      if (render_frame >= 0) {
        if (render_frame >= static_cast<int>(ds.frames.size())) throw DatasetError("--frame is out of range");
        frames.push_back(render_frame);
      } else {
        for (int f = 0; f < static_cast<int>(ds.frames.size()); ++f) frames.push_back(f);
      }
      std::vector<int> views;
      if (orbit <= 0) {
        if (view_set == "all") {
          for (int v = 0; v < static_cast<int>(ds.cameras.size()); ++v) views.push_back(v);
        } else if (view_set == "train") {
          views = ds.train_views();
        } else if (view_set == "holdout") {
          views = ds.holdout_views();
        } else {
          std::stringstream ss(view_set);
          for (std::string tok; std::getline(ss, tok, ',');) {
            const int v = std::stoi(tok);
            if (v < 0 || v >= static_cast<int>(ds.cameras.size())) throw DatasetError("camera " + tok + " does not exist");
            views.push_back(v);
          }
        }
      }
      int written = 0;
      for (int f : frames) {
        const int index = ds.frames[f].index;
        if (orbit > 0) {
          const auto cams = orbit_cameras(ds, orbit);
          const auto sources = select_sources(ds, cfg.source_views, -1);
          for (int i = 0; i < orbit; ++i) {
            const RenderedView rv = render_frame_view(ckpt.model, ds, f, cams[i], sources, cfg);
            const Image rgb = use_blend ? blend_frame_view(ckpt.model, ds, f, cams[i], sources, rv, cfg) : rv.rgb;
            char stem[64];
            std::snprintf(stem, sizeof(stem), "frame_%04d/orbit_%03d", index, i);
            write_view(fs::path(render_out) / stem, rgb, rv);
            ++written;
          }
        } else {
          for (int v : views) {
            const auto sources = select_sources(ds, cfg.source_views, v);
            const Camera& cam = ds.cameras[v].camera;
            const RenderedView rv = render_frame_view(ckpt.model, ds, f, cam, sources, cfg);
            const Image rgb = use_blend ? blend_frame_view(ckpt.model, ds, f, cam, sources, rv, cfg) : rv.rgb;
            write_view(fs::path(render_out) / view_file_stem(index, v), rgb, rv);
            ++written;
          }
        }
      }
      std::printf("rendered %d views to %s\n", written, render_out.c_str());
      return 0;
    }
    if (*eval) {
      std::vector<fs::path> files;
      for (const auto& e : fs::recursive_directory_iterator(rendered_dir)) {
        const std::string name = e.path().filename().string();
        if (e.is_regular_file() && name.size() > 8 && name.ends_with(".rgb.png")) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      if (files.empty()) throw ImageError("no *.rgb.png files under " + rendered_dir);
      std::vector<ImageMetrics> metrics;
      for (const auto& p : files) {
        const fs::path rel = fs::relative(p, rendered_dir);
        const fs::path truth = fs::path(truth_dir) / rel;
        if (!fs::exists(truth)) throw ImageError("no ground truth for " + rel.string() + " (expected " + truth.string() + ")");
        const Image a = load_png8(p), b = load_png8(truth);
        std::optional<Image> mask;
        if (masked) {
          std::string m = truth.string();
          m.replace(m.size() - 8, 8, ".mask.png");
          if (!fs::exists(m)) throw ImageError("--masked: missing mask " + m);
          mask = load_png8(m);
        }
        metrics.push_back(compare_images(rel.string(), a, b, mask ? &*mask : nullptr));
      }
      print_report(summarize(std::move(metrics)), masked, json_out);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s: %s\n", error_name(e).c_str(), e.what());
    return 1;
  }
  return 0;
}
