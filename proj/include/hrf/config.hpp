#pragma once

#include "hrf/blending.hpp"
#include "hrf/field_renderer.hpp"
#include "hrf/model_config.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace hrf {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  ModelConfig model;
  RenderSettings render;
  BlendSettings blend;

  std::uint64_t seed = 0;
  int steps = 2000;
  int batch_rays = 4096;
  double mask_weight = 0.1;
  double foreground_fraction = 0.5;
  int mask_dilation = 2;  // pixels
  double lr_start = 1e-4;
  double lr_end = 1e-5;
  int log_every = 10;
  int source_views = 0;  // K; 0 uses every training camera

  int finetune_steps = 200;
  bool finetune_encoder = false;

  int blend_steps = 500;
  int blend_batch = 1024;
  double blend_lr_start = 1e-3;
  double blend_lr_end = 1e-4;
  bool blend_leave_one_out = true;
};

/// Reads a JSON config; unknown keys are rejected, missing keys keep defaults.
TrainConfig load_config(const std::filesystem::path& path);
TrainConfig parse_config(const std::string& json_text);
std::string config_to_json(const TrainConfig& config);

/// Canonical text of the architecture fields.
std::string model_config_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);
/// FNV-1a over model_config_json.
std::uint64_t config_hash(const ModelConfig& config);

}  // namespace hrf
