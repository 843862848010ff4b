#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "arc/parameters.hpp"
#include "arc/policy_model.hpp"
#include "arc/problem.hpp"

namespace arc {

struct AttributeEntry {
  std::vector<double> alpha;
  Attribute label;
  int origin;  // index of the source instance in its batch
};

struct AttributePool {
  std::vector<AttributeEntry> entries;
  std::size_t size() const { return entries.size(); }
  int distinct_labels() const;
};

/// alpha = mean_rows(h(x)) - mean_rows(h(mask(x, a))) on tape t. `h` is
/// the IAE output of x already recorded on t. Zero when a is inactive.
ad::Var attribute_vector(ad::Tape& t, const PolicyModel& model, const Instance& x, ad::Var h, Attribute a);

/// One entry per (instance, active attribute), in batch order then in
/// attribute order B, MB, O, TW, L.
AttributePool build_attribute_pool(const PolicyModel& model, const std::vector<Instance>& batch);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// -log(exp(s+/beta) / (exp(s+/beta) + sum exp(s-/beta))) from raw similarities.
double info_nce_term(double positive_similarity, std::span<const double> negative_similarities, double beta);

struct CompositionalResult {
  double loss = 0.0;
  /// d loss / d alpha, one row per pool entry.
  std::vector<std::vector<double>> grad;
  /// Positive index used per anchor; -1 for skipped anchors.
  std::vector<int> positives;
  int used_anchors = 0;
  int skipped_anchors = 0;
  /// Set when the pool has fewer than two labels and the loss is 0.
  bool degenerate = false;
};

/// Mean InfoNCE over anchors with cosine similarity. Positives are drawn
/// uniformly among the other entries with the anchor's label.
CompositionalResult compositional_loss(const AttributePool& pool, double beta, std::uint64_t seed);
/// Same loss with the positive of every anchor fixed (-1 to skip).
CompositionalResult compositional_loss(const AttributePool& pool, double beta, const std::vector<int>& positives);

/// reward_i - mean(reward). Throws std::invalid_argument for fewer than 2.
std::vector<double> pomo_advantages(std::span<const double> rewards);

/// Divides each variant group by its population std + 1e-8. Groups holding
/// a single value pass through. `advantages[i]` belongs to `variants[i]`.
std::vector<std::vector<double>> per_variant_normalize(const std::vector<std::vector<double>>& advantages,
                                                       const std::vector<std::string>& variants);

struct VariantStats {
  int instances = 0;
  double mean_cost = 0.0;  // over all starts
  double mean_best_cost = 0.0;

  friend bool operator==(const VariantStats&, const VariantStats&) = default;
};

struct LossBreakdown {
  double reinforce_term = 0.0;
  double comp_attr_term = 0.0;
  double total = 0.0;
  int pool_size = 0;
  int skipped_anchors = 0;
  bool comp_attr_degenerate = false;
  std::map<std::string, VariantStats> per_variant_stats;
};

struct LossConfig {
  double lambda = 0.8;
  double beta = 0.12;
  int starts = 8;
  DecodeMode mode = DecodeMode::Sample;
  /// Run per-instance work across OpenMP threads.
  bool parallel = true;
  /// 0 leaves the OpenMP default.
  int workers = 0;
  /// Upper bound on pool entries, uniform subsample; 0 means no cap.
  int pool_cap = 0;
};

/// Fixed decisions for re-evaluating a batch: action sequences per instance
/// and start, and the positive index per pool entry.
struct BatchReplay {
  std::vector<std::vector<std::vector<int>>> actions;
  std::vector<int> kept_entries;
  std::vector<int> positives;
};

struct LossResult {
  LossBreakdown breakdown;
  GradientSet grads;
  std::vector<std::vector<Trajectory>> trajectories;
  BatchReplay replay;
};

/// Multistart rollouts, advantages, the attribute pool and
/// total = reinforce + lambda * comp_attr, with gradients for every
/// parameter. Results are identical with and without `parallel`.
/// Throws std::runtime_error naming the term when the loss is not finite.
LossResult total_loss(const PolicyModel& model, const std::vector<Instance>& batch, const LossConfig& cfg,
                      std::uint64_t seed, const BatchReplay* replay = nullptr, bool compute_grad = true);

}  // namespace arc
