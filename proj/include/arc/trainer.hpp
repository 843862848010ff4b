#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "arc/checkpoint.hpp"
#include "arc/objectives.hpp"
#include "arc/optimizer.hpp"
#include "arc/policy_model.hpp"
#include "arc/problem.hpp"

namespace arc {

struct TrainConfig {
  std::vector<std::string> variant_set = resolve_variant_set("all16");
  int instances_per_epoch = 1000;
  int epochs = 20;
  int batch_size = 64;
  int starts = 8;
  double learning_rate = 3e-4;
  /// The last ceil(decay_fraction * epochs) epochs run at lr * decay_factor.
  double decay_fraction = 0.1;
  double decay_factor = 0.1;
  double clip_norm = 1.0;
  double lambda = 0.8;
  double beta = 0.12;
  std::uint64_t seed = 0;
  int n = 50;
  int pool_cap = 0;
  int workers = 0;
  bool parallel = true;

  void validate() const;
  double lr_scale(int epoch) const;
  LossConfig loss_config() const;
};

nlohmann::json train_config_to_json(const TrainConfig& c);

/// Instance `index` of `epoch`: variant by round-robin over the set, seed
/// derived from (seed, epoch, index).
Instance training_instance(const TrainConfig& cfg, int epoch, int index);

struct TrainState {
  PolicyModel model;
  Adam optimizer;
  int epochs_completed = 0;
  std::int64_t steps = 0;

  TrainState(PolicyModel m, const TrainConfig& cfg);
};

struct EpochMetrics {
  int epoch = 0;
  int steps = 0;
  int skipped_steps = 0;
  double mean_reinforce = 0.0;
  double mean_comp_attr = 0.0;
  double mean_total = 0.0;
  std::map<std::string, VariantStats> per_variant;

  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

nlohmann::json epoch_metrics_to_json(const EpochMetrics& m);

/// One pass over instances_per_epoch instances. Writes one JSON line per
/// step to `log` when set. Slots flagged in `frozen` are not updated.
/// Steps whose loss or gradient is not finite are skipped and logged.
EpochMetrics train_epoch(TrainState& state, const TrainConfig& cfg, std::ostream* log = nullptr,
                         const std::vector<bool>* frozen = nullptr);

struct TrainRunOptions {
  std::ostream* log = nullptr;
  /// Saved after every epoch when set, optimizer state included.
  std::optional<std::filesystem::path> checkpoint;
  std::vector<bool> frozen;
  std::function<void(const EpochMetrics&)> on_epoch;
};

/// Runs epochs state.epochs_completed .. cfg.epochs - 1.
std::vector<EpochMetrics> train(TrainState& state, const TrainConfig& cfg, const TrainRunOptions& opts = {});

CheckpointMeta checkpoint_meta(const TrainState& state, const TrainConfig& cfg);
/// Restores model and optimizer from a checkpoint written by train().
TrainState resume_state(const Checkpoint& ckpt, const TrainConfig& cfg);

/// `per_variant` instances per variant, seeds derived from `seed`, ids
/// stable across calls.
std::vector<Instance> evaluation_instances(const std::vector<std::string>& variants, int n, int per_variant,
                                           std::uint64_t seed);

struct VariantEval {
  int instances = 0;
  double mean_cost = 0.0;
  /// Mean percentage gap to the exact optimum; NaN when not computed.
  double mean_gap = 0.0;
  double seconds = 0.0;
  bool all_feasible = true;
};

struct EvalOptions {
  DecodeOptions decode{};
  /// Compute gaps with the exact oracle for n up to this bound.
  int oracle_max_n = 0;
  bool parallel = true;
};

/// Per-variant mean cost of rollouts (best of the starts when multistart).
/// Never mutates the model.
std::map<std::string, VariantEval> evaluate(const PolicyModel& model, const std::vector<Instance>& instances,
                                            const EvalOptions& opts = {});

/// Mean cost over all instances with a single greedy rollout each.
double mean_greedy_cost(const PolicyModel& model, const std::vector<Instance>& instances);

/// Variants of `all_variants` not in `trained`, evaluated as-is. Throws
/// std::invalid_argument if one uses an attribute none of `trained` has.
std::map<std::string, VariantEval> zero_shot_eval(const PolicyModel& model, const std::vector<std::string>& trained,
                                                  const std::vector<std::string>& all_variants, int n,
                                                  int per_variant, std::uint64_t seed, const EvalOptions& opts = {});

/// Appends zero columns for the mixed-backhaul features (MB indicator and
/// mu) to the input projections. Other tensors are copied unchanged.
/// Throws std::invalid_argument when the model already has them.
PolicyModel eal_extend(const PolicyModel& base, Attribute attribute = Attribute::MB);

/// Frozen-slot mask leaving only the extended input projections trainable.
std::vector<bool> adapter_only_mask(const PolicyModel& model);

struct AdaptReport {
  std::map<std::string, VariantEval> pre;
  std::map<std::string, VariantEval> post;
  std::map<std::string, VariantEval> non_mb_pre;
  std::map<std::string, VariantEval> non_mb_post;
  std::vector<EpochMetrics> epochs;
};

struct AdaptOptions {
  bool freeze_base = false;
  int eval_per_variant = 20;
  std::vector<std::string> non_mb_variants;
  TrainRunOptions run;
};

/// Fine-tunes an extended model on cfg.variant_set (MB variants) and
/// reports costs before and after. Throws std::invalid_argument for a model
/// without the mixed-backhaul columns.
AdaptReport few_shot_adapt(TrainState& state, const TrainConfig& cfg, const AdaptOptions& opts = {});

}  // namespace arc
