#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "arc/autodiff.hpp"
#include "arc/parameters.hpp"
#include "arc/problem.hpp"
#include "arc/routing_env.hpp"

namespace arc {

struct ModelConfig {
  int embed_dim = 128;
  int heads = 8;
  int embedder_layers = 6;
  int mixer_layers = 3;
  int ff_hidden = 512;
  double logit_clip = 10.0;
  /// Whether the input projections carry the mixed-backhaul feature columns
  /// (the MB indicator and the mu flag). Off for base models; eal_extend()
  /// switches it on.
  bool mixed_backhaul_features = false;

  /// Throws std::invalid_argument on a broken invariant.
  void validate() const;

  int depot_feature_width() const { return mixed_backhaul_features ? 6 : 5; }
  static constexpr int customer_feature_width() { return 7; }
  int context_feature_width() const { return mixed_backhaul_features ? 8 : 6; }
  static constexpr int decoder_state_width() { return 5; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Per-node embeddings of one instance: intrinsic h, contextual m, and the
/// fused f = h + m.
struct EncodedInstance {
  Matrix h;
  Matrix m;
  Matrix f;
};

/// Parameters plus the slot layout the forward pass needs.
class PolicyModel {
 public:
  /// Fresh model, weights uniform in +-1/sqrt(fan_in), norm scales at 1.
  PolicyModel(ModelConfig config, std::uint64_t seed);
  /// Wraps existing parameters; throws if names or shapes do not match config.
  PolicyModel(ModelConfig config, ParameterSet params);

  const ModelConfig& config() const { return config_; }
  const ParameterSet& parameters() const { return params_; }
  ParameterSet& parameters() { return params_; }

  /// Tape leaf for a named parameter.
  ad::Var param(ad::Tape& t, int slot) const { return t.parameter(params_.value(slot), slot); }

  struct AttentionSlots {
    int wq, wk, wv, wo;
  };
  struct GatedMlpSlots {
    int w1, w2, w3;
  };
  struct EmbedderBlockSlots {
    int norm_attn;
    AttentionSlots attn;
    int norm_ffn;
    GatedMlpSlots ffn;
  };
  struct GlobalModuleSlots {
    AttentionSlots attn;
    int norm1;
    GatedMlpSlots ffn;
    int norm2;
  };
  struct MixerBlockSlots {
    GlobalModuleSlots global_stream;
    GlobalModuleSlots node_stream;
    int cross_to_global;  // W_g1
    int cross_to_node;    // W_g2
  };
  struct Layout {
    int depot_proj;
    int customer_proj;
    std::vector<EmbedderBlockSlots> embedder;
    int context_proj;
    int context_ln_gamma;
    int context_ln_beta;
    int context_out;
    std::vector<MixerBlockSlots> mixer;
    int decoder_context;
    AttentionSlots decoder_attn;
  };
  const Layout& layout() const { return layout_; }

  /// Expected (name, rows, cols) of every tensor for a config, in slot order.
  static std::vector<std::tuple<std::string, int, int>> tensor_shapes(const ModelConfig& config);

 private:
  void bind_layout();

  ModelConfig config_;
  ParameterSet params_;
  Layout layout_;
};

// Feature rows fed to the input projections. Unbounded windows appear as
// the horizon T, an inactive duration limit as kUnboundedDurationFeature.
Matrix depot_features(const Instance& x, const ModelConfig& config);
Matrix customer_features(const Instance& x);
Matrix context_features(const Instance& x, const ModelConfig& config);
/// [remaining linehaul, remaining backhaul, time, remaining length, open].
std::array<double, 5> decoder_state_features(const Instance& x, const EnvState& s);

/// Throws std::invalid_argument if x needs a feature the model lacks.
void check_supported(const PolicyModel& model, const Instance& x);

struct EncodedVars {
  ad::Var h;
  ad::Var m;
  ad::Var f;
};

ad::Var initial_embeddings(ad::Tape& t, const PolicyModel& model, const Instance& x);
ad::Var iae_forward(ad::Tape& t, const PolicyModel& model, ad::Var e0);
ad::Var cie_forward(ad::Tape& t, const PolicyModel& model, ad::Var h, const Instance& x);
EncodedVars encode(ad::Tape& t, const PolicyModel& model, const Instance& x);
/// IAE of x only (initial embeddings + embedder).
ad::Var encode_intrinsic(ad::Tape& t, const PolicyModel& model, const Instance& x);

EncodedInstance encode(const PolicyModel& model, const Instance& x);

/// Per-instance keys and values of the decoder glimpse.
struct DecoderCache {
  ad::Var f;
  ad::Var keys;
  ad::Var values;
};
DecoderCache prepare_decoder(ad::Tape& t, const PolicyModel& model, ad::Var f);

/// Logits for a batch of decoding states (one row each). `prev_nodes` holds
/// the last visited node per row, `state_features` the rows of dynamic
/// features, and `mask` the feasibility flags (rows * (n+1)). Infeasible
/// entries are left finite here; masking happens in the softmax.
ad::Var decoder_logits(ad::Tape& t, const PolicyModel& model, const DecoderCache& cache,
                       const std::vector<int>& prev_nodes, const Matrix& state_features,
                       std::span<const std::uint8_t> mask);

/// Single-state convenience: logits with -inf on infeasible entries.
std::vector<double> decoder_logits(const PolicyModel& model, const Instance& x, const EnvState& s);

enum class DecodeMode { Greedy, Sample };

struct DecodeOptions {
  DecodeMode mode = DecodeMode::Greedy;
  /// 0: a single rollout whose first step is chosen by the policy.
  /// M >= 1: POMO multistart, forcing M distinct first customers.
  int starts = 0;
};

struct Trajectory {
  std::vector<int> actions;  // every step, forced first action included
  Solution solution;
  double cost = 0.0;
  double log_prob = 0.0;  // sum over policy-chosen steps
};

struct RolloutRecord {
  std::vector<Trajectory> trajectories;
  /// One (rows x 1) log-probability node per decoding step; rows are starts.
  std::vector<ad::Var> step_log_probs;
};

/// Decodes on an existing tape. With `replay` set, the given action
/// sequences are followed instead of choosing (mode and rng are ignored).
RolloutRecord rollout(ad::Tape& t, const PolicyModel& model, const EncodedVars& enc, const RoutingEnv& env,
                      const DecodeOptions& options, std::mt19937_64* rng,
                      const std::vector<std::vector<int>>* replay = nullptr);

/// Self-contained inference rollout. `seed` drives sampling.
std::vector<Trajectory> rollout(const PolicyModel& model, const Instance& x, const DecodeOptions& options,
                                std::uint64_t seed = 0);

/// First customers used by a multistart rollout of `starts` lanes.
std::vector<int> multistart_nodes(const RoutingEnv& env, int starts);

}  // namespace arc
