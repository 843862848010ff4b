#include "arc/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include <omp.h>

#include "arc/seeding.hpp"

namespace arc {

using ad::Tape;
using ad::Var;

int AttributePool::distinct_labels() const {
  std::set<Attribute> labels;
  for (const auto& e : entries) labels.insert(e.label);
  return static_cast<int>(labels.size());
}

Var attribute_vector(Tape& t, const PolicyModel& model, const Instance& x, Var h, Attribute a) {
  const Instance masked = mask_attribute(x, a);
  const Var hm = encode_intrinsic(t, model, masked);
  return ad::sub(t, ad::mean_rows(t, h), ad::mean_rows(t, hm));
}

AttributePool build_attribute_pool(const PolicyModel& model, const std::vector<Instance>& batch) {
  if (batch.empty()) throw std::invalid_argument("build_attribute_pool: empty batch");
  std::vector<std::vector<AttributeEntry>> per(batch.size());
  std::vector<std::exception_ptr> errors(batch.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < batch.size(); ++i) {
    try {
      Tape t;
      const Var h = encode_intrinsic(t, model, batch[i]);
      for (Attribute a : batch[i].indicator.active()) {
        const Var alpha = attribute_vector(t, model, batch[i], h, a);
        per[i].push_back(AttributeEntry{t.value(alpha).storage(), a, static_cast<int>(i)});
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  AttributePool pool;
  for (auto& v : per)
    for (auto& e : v) pool.entries.push_back(std::move(e));
  return pool;
}

namespace {

double norm(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

constexpr double kNormFloor = 1e-12;

// Adds w * d cos(a, b) / d a into ga.
void add_cosine_grad(std::span<const double> a, std::span<const double> b, double w, std::vector<double>& ga) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na < kNormFloor || nb < kNormFloor) return;
  const double s = dot(a, b) / (na * nb);
  for (std::size_t k = 0; k < a.size(); ++k) ga[k] += w * (b[k] / (na * nb) - s * a[k] / (na * na));
}

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
  const double na = norm(a);
  const double nb = norm(b);
  if (na < kNormFloor || nb < kNormFloor) return 0.0;
  return dot(a, b) / (na * nb);
}

double info_nce_term(double positive_similarity, std::span<const double> negative_similarities, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("info_nce_term: beta must be > 0");
  const double zp = positive_similarity / beta;
  double zmax = zp;
  for (double s : negative_similarities) zmax = std::max(zmax, s / beta);
  double denom = std::exp(zp - zmax);
  double neg = 0.0;
  for (double s : negative_similarities) neg += std::exp(s / beta - zmax);
  denom += neg;
  // log1p keeps precision when the positive dominates.
  if (zp == zmax) return std::log1p(neg / std::exp(zp - zmax));
  return std::log(denom) - (zp - zmax);
}

CompositionalResult compositional_loss(const AttributePool& pool, double beta, const std::vector<int>& positives) {
  if (!(beta > 0.0)) throw std::invalid_argument("compositional_loss: beta must be > 0");
  const std::size_t n = pool.size();
  if (positives.size() != n)
    throw std::invalid_argument("compositional_loss: expected " + std::to_string(n) + " positives, got " +
                                std::to_string(positives.size()));
  CompositionalResult r;
  r.positives = positives;
  r.grad.assign(n, std::vector<double>(n ? pool.entries[0].alpha.size() : 0, 0.0));
  if (pool.distinct_labels() < 2) {
    r.degenerate = true;
    r.positives.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
      bool has_peer = false;
      for (std::size_t j = 0; j < n && !has_peer; ++j) has_peer = j != i && pool.entries[j].label == pool.entries[i].label;
      if (!has_peer) ++r.skipped_anchors;
    }
    return r;
  }

  std::vector<std::vector<double>> sim(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      sim[i][j] = sim[j][i] = cosine_similarity(pool.entries[i].alpha, pool.entries[j].alpha);

  // d loss_i / d sim(i, j) accumulated per anchor, then chained to alpha.
  std::vector<std::vector<double>> dsim(n, std::vector<double>(n, 0.0));
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int p = positives[i];
    if (p < 0) {
      ++r.skipped_anchors;
      continue;
    }
    const auto& ei = pool.entries[i];
    if (static_cast<std::size_t>(p) >= n || static_cast<std::size_t>(p) == i || pool.entries[p].label != ei.label ||
        pool.entries[p].origin == ei.origin)
      throw std::invalid_argument("compositional_loss: invalid positive " + std::to_string(p) + " for anchor " +
                                  std::to_string(i));
    std::vector<std::size_t> negs;
    std::vector<double> neg_sims;
    for (std::size_t j = 0; j < n; ++j) {
      if (pool.entries[j].label != ei.label) {
        negs.push_back(j);
        neg_sims.push_back(sim[i][j]);
      }
    }
    total += info_nce_term(sim[i][p], neg_sims, beta);
    ++r.used_anchors;

    double zmax = sim[i][p] / beta;
    for (double s : neg_sims) zmax = std::max(zmax, s / beta);
    const double ep = std::exp(sim[i][p] / beta - zmax);
    double z = ep;
    std::vector<double> en(negs.size());
    for (std::size_t k = 0; k < negs.size(); ++k) z += en[k] = std::exp(neg_sims[k] / beta - zmax);
    dsim[i][p] += (ep / z - 1.0) / beta;
    for (std::size_t k = 0; k < negs.size(); ++k) dsim[i][negs[k]] += en[k] / z / beta;
  }
  if (r.used_anchors == 0) return r;
  const double inv = 1.0 / r.used_anchors;
  r.loss = total * inv;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (dsim[i][j] == 0.0) continue;
      const double w = dsim[i][j] * inv;
      add_cosine_grad(pool.entries[i].alpha, pool.entries[j].alpha, w, r.grad[i]);
      add_cosine_grad(pool.entries[j].alpha, pool.entries[i].alpha, w, r.grad[j]);
    }
  }
  return r;
}

CompositionalResult compositional_loss(const AttributePool& pool, double beta, std::uint64_t seed) {
  const std::size_t n = pool.size();
  std::mt19937_64 rng(seed);
  std::vector<int> positives(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<int> peers;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && pool.entries[j].label == pool.entries[i].label &&
          pool.entries[j].origin != pool.entries[i].origin)
        peers.push_back(static_cast<int>(j));
    }
    if (peers.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, peers.size() - 1);
    positives[i] = peers[pick(rng)];
  }
  return compositional_loss(pool, beta, positives);
}

std::vector<double> pomo_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2)
    throw std::invalid_argument("pomo_advantages: need at least 2 starts for a shared baseline, got " +
                                std::to_string(rewards.size()));
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(rewards.size());
  std::vector<double> out(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = rewards[i] - mean;
  return out;
}

std::vector<std::vector<double>> per_variant_normalize(const std::vector<std::vector<double>>& advantages,
                                                       const std::vector<std::string>& variants) {
  if (advantages.size() != variants.size())
    throw std::invalid_argument("per_variant_normalize: advantages and variants differ in length");
  constexpr double kEps = 1e-8;
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < variants.size(); ++i) groups[variants[i]].push_back(i);
  std::vector<std::vector<double>> out = advantages;
  for (const auto& [name, members] : groups) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i : members)
      for (double a : advantages[i]) {
        sum += a;
        ++count;
      }
    if (count <= 1) continue;
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (std::size_t i : members)
      for (double a : advantages[i]) ss += (a - mean) * (a - mean);
    const double scale = 1.0 / (std::sqrt(ss / static_cast<double>(count)) + kEps);
    for (std::size_t i : members)
      for (double& a : out[i]) a *= scale;
  }
  return out;
}

namespace {

struct InstanceWork {
  Tape tape;
  RolloutRecord record;
  std::vector<Attribute> labels;
  std::vector<Var> alphas;
};

template <typename F>
void for_each_instance(std::size_t count, const LossConfig& cfg, F&& body) {
  std::vector<std::exception_ptr> errors(count);
  const int threads = cfg.workers > 0 ? cfg.workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) if (cfg.parallel) num_threads(threads)
  for (std::size_t i = 0; i < count; ++i) {
    try {
      body(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

LossResult total_loss(const PolicyModel& model, const std::vector<Instance>& batch, const LossConfig& cfg,
                      std::uint64_t seed, const BatchReplay* replay, bool compute_grad) {
  if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");
  if (cfg.starts < 2) throw std::invalid_argument("total_loss: POMO needs starts >= 2");
  if (cfg.lambda < 0.0) throw std::invalid_argument("total_loss: lambda must be >= 0");
  if (replay && replay->actions.size() != batch.size())
    throw std::invalid_argument("total_loss: replay does not match the batch size");
  const std::size_t B = batch.size();
  const int M = cfg.starts;
  const bool use_pool = cfg.lambda > 0.0;

  std::vector<InstanceWork> work(B);
  for_each_instance(B, cfg, [&](std::size_t i) {
    InstanceWork& w = work[i];
    const Instance& x = batch[i];
    if (M > x.n) throw std::invalid_argument("total_loss: starts exceeds n for " + x.variant_name);
    const EncodedVars enc = encode(w.tape, model, x);
    const RoutingEnv env(x);
    std::mt19937_64 rng(derive_seed(seed, i));
    w.record = rollout(w.tape, model, enc, env, DecodeOptions{cfg.mode, M}, &rng, replay ? &replay->actions[i] : nullptr);
    if (use_pool) {
      for (Attribute a : x.indicator.active()) {
        w.labels.push_back(a);
        w.alphas.push_back(attribute_vector(w.tape, model, x, enc.h, a));
      }
    }
  });

  LossResult out;
  LossBreakdown& br = out.breakdown;
  out.trajectories.resize(B);
  out.replay.actions.resize(B);

  std::vector<std::vector<double>> adv(B);
  std::vector<std::string> variants(B);
  for (std::size_t i = 0; i < B; ++i) {
    const auto& trs = work[i].record.trajectories;
    std::vector<double> rewards;
    VariantStats& vs = br.per_variant_stats[batch[i].variant_name];
    double best = trs.front().cost;
    double sum = 0.0;
    for (const auto& tr : trs) {
      rewards.push_back(-tr.cost);
      out.replay.actions[i].push_back(tr.actions);
      best = std::min(best, tr.cost);
      sum += tr.cost;
    }
    vs.instances += 1;
    vs.mean_cost += sum / static_cast<double>(trs.size());
    vs.mean_best_cost += best;
    adv[i] = pomo_advantages(rewards);
    variants[i] = batch[i].variant_name;
    out.trajectories[i] = trs;
  }
  for (auto& [name, vs] : br.per_variant_stats) {
    vs.mean_cost /= vs.instances;
    vs.mean_best_cost /= vs.instances;
  }
  const auto norm_adv = per_variant_normalize(adv, variants);
  const double coef = 1.0 / (static_cast<double>(B) * M);
  double reinforce = 0.0;
  for (std::size_t i = 0; i < B; ++i)
    for (int r = 0; r < M; ++r) reinforce -= coef * norm_adv[i][r] * out.trajectories[i][r].log_prob;
  br.reinforce_term = reinforce;
  if (!std::isfinite(reinforce)) throw std::runtime_error("total_loss: reinforce term is not finite");

  // Pool assembly in batch order; entry k maps back to (instance, alpha index).
  AttributePool pool;
  std::vector<std::pair<std::size_t, std::size_t>> where;
  CompositionalResult comp;
  if (use_pool) {
    AttributePool full;
    std::vector<std::pair<std::size_t, std::size_t>> full_where;
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t k = 0; k < work[i].alphas.size(); ++k) {
        full.entries.push_back(
            AttributeEntry{work[i].tape.value(work[i].alphas[k]).storage(), work[i].labels[k], static_cast<int>(i)});
        full_where.emplace_back(i, k);
      }
    std::vector<int> kept;
    if (replay) {
      kept = replay->kept_entries;
    } else {
      kept.resize(full.size());
      std::iota(kept.begin(), kept.end(), 0);
      if (cfg.pool_cap > 0 && static_cast<int>(kept.size()) > cfg.pool_cap) {
        std::mt19937_64 rng(derive_seed(seed, B, 1));
        std::shuffle(kept.begin(), kept.end(), rng);
        kept.resize(static_cast<std::size_t>(cfg.pool_cap));
        std::sort(kept.begin(), kept.end());
      }
    }
    for (int k : kept) {
      if (k < 0 || static_cast<std::size_t>(k) >= full.size())
        throw std::invalid_argument("total_loss: replay keeps unknown pool entry " + std::to_string(k));
      pool.entries.push_back(full.entries[k]);
      where.push_back(full_where[k]);
    }
    comp = replay ? compositional_loss(pool, cfg.beta, replay->positives)
                  : compositional_loss(pool, cfg.beta, derive_seed(seed, B, 2));
    out.replay.kept_entries = kept;
    out.replay.positives = comp.positives;
    br.comp_attr_term = comp.loss;
    br.pool_size = static_cast<int>(pool.size());
    br.skipped_anchors = comp.skipped_anchors;
    br.comp_attr_degenerate = comp.degenerate;
    if (!std::isfinite(comp.loss)) throw std::runtime_error("total_loss: compositional term is not finite");
  }
  br.total = br.reinforce_term + cfg.lambda * br.comp_attr_term;
  if (!std::isfinite(br.total)) throw std::runtime_error("total_loss: total is not finite");

  if (!compute_grad) return out;

  // Seeds per instance, backward per tape, then a fixed-order reduction.
  std::vector<std::vector<std::pair<std::size_t, const std::vector<double>*>>> alpha_seeds(B);
  for (std::size_t e = 0; e < where.size(); ++e) alpha_seeds[where[e].first].emplace_back(where[e].second, &comp.grad[e]);

  std::vector<GradientSet> partial(B);
  for_each_instance(B, cfg, [&](std::size_t i) {
    InstanceWork& w = work[i];
    Matrix g(M, 1);
    for (int r = 0; r < M; ++r) g(r, 0) = -coef * norm_adv[i][r];
    for (Var lp : w.record.step_log_probs) w.tape.seed(lp, g);
    for (const auto& [k, grad] : alpha_seeds[i]) {
      Matrix ga(1, static_cast<int>(grad->size()));
      for (std::size_t c = 0; c < grad->size(); ++c) ga[c] = cfg.lambda * (*grad)[c];
      w.tape.seed(w.alphas[k], ga);
    }
    w.tape.backward();
    partial[i] = GradientSet(model.parameters());
    w.tape.for_each_parameter_grad([&](int slot, const Matrix& grad) { partial[i][slot] = grad; });
    w.tape = Tape();
  });
  out.grads = GradientSet(model.parameters());
  for (std::size_t i = 0; i < B; ++i) out.grads.add(partial[i]);
  return out;
}

}  // namespace arc
