#include "hrf/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace hrf {

using nlohmann::json;

namespace {

json model_json(const ModelConfig& m) {
  return {{"joints", m.joints},
          {"feature_channels", m.feature_channels},
          {"encoder_width", m.encoder_width},
          {"view_blend_width", m.view_blend_width},
          {"deform_width", m.deform_width},
          {"field_width", m.field_width},
          {"appearance_width", m.appearance_width},
          {"position_frequencies", m.position_frequencies},
          {"direction_frequencies", m.direction_frequencies},
          {"distance_frequencies", m.distance_frequencies},
          {"max_displacement", m.max_displacement},
          {"deform_uses_features", m.deform_uses_features}};
}

// Copies j[key] into out when present; records the key as consumed.
template <typename T>
void read(const json& j, const char* key, T& out, std::set<std::string>& seen) {
  seen.insert(key);
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, const std::set<std::string>& seen, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!seen.count(it.key())) throw ConfigError("unknown config key '" + where + it.key() + "'");
}

ModelConfig model_from(const json& j) {
  ModelConfig m;
  std::set<std::string> seen;
  read(j, "joints", m.joints, seen);
  read(j, "feature_channels", m.feature_channels, seen);
  read(j, "encoder_width", m.encoder_width, seen);
  read(j, "view_blend_width", m.view_blend_width, seen);
  read(j, "deform_width", m.deform_width, seen);
  read(j, "field_width", m.field_width, seen);
  read(j, "appearance_width", m.appearance_width, seen);
  read(j, "position_frequencies", m.position_frequencies, seen);
  read(j, "direction_frequencies", m.direction_frequencies, seen);
  read(j, "distance_frequencies", m.distance_frequencies, seen);
  read(j, "max_displacement", m.max_displacement, seen);
  read(j, "deform_uses_features", m.deform_uses_features, seen);
  reject_unknown(j, seen, "model.");
  if (m.joints < 1 || m.feature_channels < 1 || m.encoder_width < 1 || m.view_blend_width < 2 ||
      m.deform_width < 2 || m.field_width < 2 || m.appearance_width < 2)
    throw ConfigError("model widths must be positive");
  return m;
}

}  // namespace

std::string model_config_json(const ModelConfig& config) { return model_json(config).dump(); }

ModelConfig model_config_from_json(const std::string& text) {
  try {
    return model_from(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
}

std::uint64_t config_hash(const ModelConfig& config) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : model_config_json(config)) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

TrainConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  TrainConfig c;
  std::set<std::string> seen{"model", "render", "blend"};
  if (j.contains("model")) c.model = model_from(j["model"]);
  if (j.contains("render")) {
    const json& r = j["render"];
    std::set<std::string> rs;
    read(r, "coarse_samples", c.render.coarse_samples, rs);
    read(r, "fine_samples", c.render.fine_samples, rs);
    read(r, "bounds_margin", c.render.bounds_margin, rs);
    read(r, "importance_floor", c.render.importance_floor, rs);
    read(r, "background_alpha", c.render.background_alpha, rs);
    read(r, "chunk_rays", c.render.chunk_rays, rs);
    read(r, "skinning_tau", c.render.skinning.tau, rs);
    read(r, "skinning_bones", c.render.skinning.nearest, rs);
    reject_unknown(r, rs, "render.");
  }
  if (j.contains("blend")) {
    const json& b = j["blend"];
    std::set<std::string> bs;
    read(b, "visibility_threshold", c.blend.visibility_threshold, bs);
    read(b, "scene_scale", c.blend.scene_scale, bs);
    read(b, "residual_cap", c.blend.residual_cap, bs);
    read(b, "steps", c.blend_steps, bs);
    read(b, "batch", c.blend_batch, bs);
    read(b, "lr_start", c.blend_lr_start, bs);
    read(b, "lr_end", c.blend_lr_end, bs);
    read(b, "leave_one_out", c.blend_leave_one_out, bs);
    reject_unknown(b, bs, "blend.");
  }
  read(j, "seed", c.seed, seen);
  read(j, "steps", c.steps, seen);
  read(j, "batch_rays", c.batch_rays, seen);
  read(j, "mask_weight", c.mask_weight, seen);
  read(j, "foreground_fraction", c.foreground_fraction, seen);
  read(j, "mask_dilation", c.mask_dilation, seen);
  read(j, "lr_start", c.lr_start, seen);
  read(j, "lr_end", c.lr_end, seen);
  read(j, "log_every", c.log_every, seen);
  read(j, "source_views", c.source_views, seen);
  read(j, "finetune_steps", c.finetune_steps, seen);
  read(j, "finetune_encoder", c.finetune_encoder, seen);
  reject_unknown(j, seen, "");
  if (c.steps < 0 || c.batch_rays < 1 || c.render.coarse_samples < 1 || c.render.fine_samples < 0)
    throw ConfigError("steps, batch_rays and sample counts must be positive");
  if (c.foreground_fraction < 0 || c.foreground_fraction > 1) throw ConfigError("foreground_fraction must be in [0, 1]");
  if (c.lr_start <= 0 || c.lr_end <= 0) throw ConfigError("learning rates must be positive");
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const TrainConfig& c) {
  json j;
  j["model"] = model_json(c.model);
  j["render"] = {{"coarse_samples", c.render.coarse_samples},   {"fine_samples", c.render.fine_samples},
                 {"bounds_margin", c.render.bounds_margin},     {"importance_floor", c.render.importance_floor},
                 {"background_alpha", c.render.background_alpha}, {"chunk_rays", c.render.chunk_rays},
                 {"skinning_tau", c.render.skinning.tau},       {"skinning_bones", c.render.skinning.nearest}};
  j["blend"] = {{"visibility_threshold", c.blend.visibility_threshold},
                {"scene_scale", c.blend.scene_scale},
                {"residual_cap", c.blend.residual_cap},
                {"steps", c.blend_steps},
                {"batch", c.blend_batch},
                {"lr_start", c.blend_lr_start},
                {"lr_end", c.blend_lr_end},
                {"leave_one_out", c.blend_leave_one_out}};
  j["seed"] = c.seed;
  j["steps"] = c.steps;
  j["batch_rays"] = c.batch_rays;
  j["mask_weight"] = c.mask_weight;
  j["foreground_fraction"] = c.foreground_fraction;
  j["mask_dilation"] = c.mask_dilation;
  j["lr_start"] = c.lr_start;
  j["lr_end"] = c.lr_end;
  j["log_every"] = c.log_every;
  j["source_views"] = c.source_views;
  j["finetune_steps"] = c.finetune_steps;
  j["finetune_encoder"] = c.finetune_encoder;
  return j.dump(2);
}

}  // namespace hrf
