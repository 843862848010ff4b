#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "arc/optimizer.hpp"
#include "arc/parameters.hpp"
#include "arc/policy_model.hpp"
#include "json.hpp"

namespace arc {

inline constexpr const char* kCheckpointFormat = "arc-ckpt-v1";

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::vector<std::string> variant_set;
  int epochs_completed = 0;
  std::int64_t steps = 0;
  /// Free-form extra fields (effective training config and the like).
  nlohmann::json extra = nlohmann::json::object();

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

struct OptimizerState {
  AdamConfig config;
  std::int64_t steps = 0;
  GradientSet first_moment;
  GradientSet second_moment;
};

struct Checkpoint {
  ModelConfig config;
  ParameterSet params;
  CheckpointMeta meta;
  std::optional<OptimizerState> optimizer;
};

nlohmann::json model_config_to_json(const ModelConfig& c);
/// Rejects unknown or mistyped keys; missing keys keep defaults.
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Writes atomically (temp file + rename). Throws std::runtime_error on I/O failure.
void save_checkpoint(const std::filesystem::path& path, const PolicyModel& model, const CheckpointMeta& meta,
                     const Adam* optimizer = nullptr);

/// Throws FormatError on a bad tag, truncated or corrupt payload, or
/// tensors that do not match the embedded config.
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Also rejects a checkpoint whose config differs from `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

PolicyModel model_from_checkpoint(const Checkpoint& c);
/// Rebuilds an optimizer for `params` from saved state.
Adam restore_optimizer(const ParameterSet& params, const OptimizerState& s);

}  // namespace arc
