#pragma once

#include "hrf/model.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace hrf {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointChecksumError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

constexpr std::uint32_t kCheckpointVersion = 1;

enum class Stage { Generalizable = 0, Finetune = 1, Blending = 2 };

/// Everything needed to resume or use a model.
struct Checkpoint {
  HumanModel<float> model;
  std::map<std::string, AdamState<float>> optimizer;  // keyed by network name
  Stage stage = Stage::Generalizable;
  std::int64_t stage_step = 0;
  std::string rng_state;  // textual std::mt19937_64 state
  bool appearance_trained = false;

  std::uint64_t config_hash() const;
};

/// Network parameter sets by name: encoder, view_blend, deform, field, appearance.
std::vector<std::pair<std::string, const ParameterSet<float>*>> named_networks(const HumanModel<float>& model);
ParameterSet<float>& network(HumanModel<float>& model, const std::string& name);

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

/// Atomic: writes a temporary file next to path and renames it.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a digest of a parameter set's names, shapes and raw bytes.
std::uint64_t parameter_digest(const ParameterSet<float>& params);

}  // namespace hrf
