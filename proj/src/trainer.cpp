#include "arc/trainer.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <set>
#include <stdexcept>

#include "arc/exact_oracle.hpp"
#include "arc/seeding.hpp"

namespace arc {

using nlohmann::json;

namespace {

constexpr std::uint64_t kBatchStream = 0x6261746368ULL;
constexpr std::uint64_t kEvalStream = 0x6576616cULL;

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("invalid training config: " + what); };
  if (variant_set.empty()) fail("variant_set is empty");
  for (const auto& v : variant_set) variant_from_name(v);
  if (instances_per_epoch < 1) fail("instances_per_epoch must be >= 1");
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (n < 2) fail("n must be >= 2");
  if (starts < 2) fail("starts must be >= 2");
  if (starts > n) fail("starts must not exceed n");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (decay_fraction < 0.0 || decay_fraction > 1.0) fail("decay_fraction must lie in [0, 1]");
  if (!(decay_factor > 0.0)) fail("decay_factor must be > 0");
  if (lambda < 0.0) fail("lambda must be >= 0");
  if (!(beta > 0.0)) fail("beta must be > 0");
  if (pool_cap < 0) fail("pool_cap must be >= 0");
  if (workers < 0) fail("workers must be >= 0");
}

double TrainConfig::lr_scale(int epoch) const {
  const int decay_epochs = static_cast<int>(std::ceil(decay_fraction * epochs - 1e-9));
  return epoch >= epochs - decay_epochs ? decay_factor : 1.0;
}

LossConfig TrainConfig::loss_config() const {
  LossConfig c;
  c.lambda = lambda;
  c.beta = beta;
  c.starts = starts;
  c.mode = DecodeMode::Sample;
  c.parallel = parallel;
  c.workers = workers;
  c.pool_cap = pool_cap;
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"variant_set", c.variant_set},
              {"instances_per_epoch", c.instances_per_epoch},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"starts", c.starts},
              {"learning_rate", c.learning_rate},
              {"decay_fraction", c.decay_fraction},
              {"decay_factor", c.decay_factor},
              {"clip_norm", c.clip_norm},
              {"lambda", c.lambda},
              {"beta", c.beta},
              {"seed", c.seed},
              {"n", c.n},
              {"pool_cap", c.pool_cap}};
}

Instance training_instance(const TrainConfig& cfg, int epoch, int index) {
  GenerationConfig g;
  g.n = cfg.n;
  g.variant_name = cfg.variant_set[static_cast<std::size_t>(index) % cfg.variant_set.size()];
  g.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(index));
  return generate_instance(g);
}

TrainState::TrainState(PolicyModel m, const TrainConfig& cfg)
    : model(std::move(m)), optimizer(model.parameters(), AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.clip_norm}) {}

json epoch_metrics_to_json(const EpochMetrics& m) {
  json per = json::object();
  for (const auto& [name, s] : m.per_variant)
    per[name] = {{"instances", s.instances}, {"mean_cost", s.mean_cost}, {"mean_best_cost", s.mean_best_cost}};
  return json{{"epoch", m.epoch},
              {"steps", m.steps},
              {"skipped_steps", m.skipped_steps},
              {"reinforce", m.mean_reinforce},
              {"comp_attr", m.mean_comp_attr},
              {"total", m.mean_total},
              {"per_variant", per}};
}

EpochMetrics train_epoch(TrainState& state, const TrainConfig& cfg, std::ostream* log, const std::vector<bool>* frozen) {
  cfg.validate();
  const int epoch = state.epochs_completed;
  const LossConfig loss_cfg = cfg.loss_config();
  const double lr_scale = cfg.lr_scale(epoch);
  EpochMetrics metrics;
  metrics.epoch = epoch;

  for (int start = 0, b = 0; start < cfg.instances_per_epoch; start += cfg.batch_size, ++b) {
    const int count = std::min(cfg.batch_size, cfg.instances_per_epoch - start);
    std::vector<Instance> batch;
    batch.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) batch.push_back(training_instance(cfg, epoch, start + k));

    const std::int64_t step = state.steps;
    auto log_skip = [&](const std::string& reason) {
      ++metrics.skipped_steps;
      if (log) *log << json{{"step", step}, {"epoch", epoch}, {"event", "skipped_step"}, {"reason", reason}}.dump() << '\n';
    };
    LossResult res;
    try {
      res = total_loss(state.model, batch, loss_cfg, derive_seed(cfg.seed ^ kBatchStream, epoch, b));
    } catch (const std::runtime_error& e) {
      log_skip(e.what());
      ++state.steps;
      continue;
    }
    if (!res.grads.all_finite()) {
      log_skip("non-finite gradient");
      ++state.steps;
      continue;
    }
    const double grad_norm = state.optimizer.step(state.model.parameters(), res.grads, lr_scale, frozen);
    ++state.steps;
    ++metrics.steps;

    const LossBreakdown& br = res.breakdown;
    metrics.mean_reinforce += br.reinforce_term;
    metrics.mean_comp_attr += br.comp_attr_term;
    metrics.mean_total += br.total;
    for (const auto& [name, s] : br.per_variant_stats) {
      VariantStats& acc = metrics.per_variant[name];
      acc.instances += s.instances;
      acc.mean_cost += s.mean_cost * s.instances;
      acc.mean_best_cost += s.mean_best_cost * s.instances;
    }
    if (log) {
      *log << json{{"step", step},
                   {"epoch", epoch},
                   {"reinforce", br.reinforce_term},
                   {"comp_attr", br.comp_attr_term},
                   {"total", br.total},
                   {"pool_size", br.pool_size},
                   {"skipped_anchors", br.skipped_anchors},
                   {"grad_norm", grad_norm},
                   {"lr", cfg.learning_rate * lr_scale}}
                  .dump()
           << '\n';
    }
  }
  if (metrics.steps > 0) {
    metrics.mean_reinforce /= metrics.steps;
    metrics.mean_comp_attr /= metrics.steps;
    metrics.mean_total /= metrics.steps;
  }
  for (auto& [name, s] : metrics.per_variant) {
    s.mean_cost /= s.instances;
    s.mean_best_cost /= s.instances;
  }
  if (!state.model.parameters().all_finite()) throw std::runtime_error("train_epoch: parameters became non-finite");
  ++state.epochs_completed;
  return metrics;
}

CheckpointMeta checkpoint_meta(const TrainState& state, const TrainConfig& cfg) {
  CheckpointMeta m;
  m.seed = cfg.seed;
  m.variant_set = cfg.variant_set;
  m.epochs_completed = state.epochs_completed;
  m.steps = state.steps;
  m.extra = json{{"train_config", train_config_to_json(cfg)}};
  return m;
}

std::vector<EpochMetrics> train(TrainState& state, const TrainConfig& cfg, const TrainRunOptions& opts) {
  cfg.validate();
  const std::vector<bool>* frozen = opts.frozen.empty() ? nullptr : &opts.frozen;
  std::vector<EpochMetrics> out;
  while (state.epochs_completed < cfg.epochs) {
    out.push_back(train_epoch(state, cfg, opts.log, frozen));
    if (opts.log) opts.log->flush();
    if (opts.checkpoint) save_checkpoint(*opts.checkpoint, state.model, checkpoint_meta(state, cfg), &state.optimizer);
    if (opts.on_epoch) opts.on_epoch(out.back());
  }
  return out;
}

TrainState resume_state(const Checkpoint& ckpt, const TrainConfig& cfg) {
  TrainState s(model_from_checkpoint(ckpt), cfg);
  if (ckpt.optimizer) s.optimizer = restore_optimizer(s.model.parameters(), *ckpt.optimizer);
  s.epochs_completed = ckpt.meta.epochs_completed;
  s.steps = ckpt.meta.steps;
  return s;
}

std::vector<Instance> evaluation_instances(const std::vector<std::string>& variants, int n, int per_variant,
                                           std::uint64_t seed) {
  std::vector<Instance> out;
  out.reserve(variants.size() * static_cast<std::size_t>(std::max(per_variant, 0)));
  for (std::size_t v = 0; v < variants.size(); ++v) {
    for (int k = 0; k < per_variant; ++k) {
      GenerationConfig g;
      g.n = n;
      g.variant_name = variants[v];
      g.seed = derive_seed(seed ^ kEvalStream, v, static_cast<std::uint64_t>(k));
      out.push_back(generate_instance(g));
    }
  }
  return out;
}

std::map<std::string, VariantEval> evaluate(const PolicyModel& model, const std::vector<Instance>& instances,
                                            const EvalOptions& opts) {
  struct Row {
    double cost = 0.0;
    double gap = std::numeric_limits<double>::quiet_NaN();
    double seconds = 0.0;
    bool feasible = true;
  };
  std::vector<Row> rows(instances.size());
  std::vector<std::exception_ptr> errors(instances.size());
#pragma omp parallel for schedule(dynamic) if (opts.parallel)
  for (std::size_t i = 0; i < instances.size(); ++i) {
    try {
      const Instance& x = instances[i];
      const auto t0 = std::chrono::steady_clock::now();
      const auto trs = rollout(model, x, opts.decode, x.seed);
      const auto t1 = std::chrono::steady_clock::now();
      const Trajectory* best = &trs.front();
      for (const auto& tr : trs)
        if (tr.cost < best->cost) best = &tr;
      rows[i].cost = best->cost;
      rows[i].seconds = std::chrono::duration<double>(t1 - t0).count();
      rows[i].feasible = validate(x, best->solution).feasible;
      if (x.n <= opts.oracle_max_n) {
        const double opt = exact_oracle(x).cost;
        rows[i].gap = 100.0 * (best->cost - opt) / opt;
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::map<std::string, VariantEval> out;
  std::map<std::string, int> gap_counts;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    VariantEval& v = out[instances[i].variant_name];
    v.instances += 1;
    v.mean_cost += rows[i].cost;
    v.seconds += rows[i].seconds;
    v.all_feasible = v.all_feasible && rows[i].feasible;
    if (!std::isnan(rows[i].gap)) {
      v.mean_gap += rows[i].gap;
      ++gap_counts[instances[i].variant_name];
    }
  }
  for (auto& [name, v] : out) {
    v.mean_cost /= v.instances;
    const int g = gap_counts[name];
    v.mean_gap = g > 0 ? v.mean_gap / g : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

double mean_greedy_cost(const PolicyModel& model, const std::vector<Instance>& instances) {
  if (instances.empty()) throw std::invalid_argument("mean_greedy_cost: no instances");
  const auto per = evaluate(model, instances, EvalOptions{});
  double total = 0.0;
  for (const auto& [name, v] : per) total += v.mean_cost * v.instances;
  return total / static_cast<double>(instances.size());
}

std::map<std::string, VariantEval> zero_shot_eval(const PolicyModel& model, const std::vector<std::string>& trained,
                                                  const std::vector<std::string>& all_variants, int n,
                                                  int per_variant, std::uint64_t seed, const EvalOptions& opts) {
  std::set<Attribute> seen;
  std::set<std::string> trained_names;
  for (const auto& v : trained) {
    const AttributeIndicator ind = variant_from_name(v);
    for (Attribute a : ind.active()) seen.insert(a);
    trained_names.insert(std::string(name_of(ind)));
  }
  std::vector<std::string> held_out;
  for (const auto& v : all_variants) {
    const AttributeIndicator ind = variant_from_name(v);
    const std::string name(name_of(ind));
    if (trained_names.count(name)) continue;
    for (Attribute a : ind.active()) {
      if (!seen.count(a))
        throw std::invalid_argument("zero_shot_eval: " + name + " uses attribute " + std::string(attribute_name(a)) +
                                    " absent from every training variant");
    }
    held_out.push_back(name);
  }
  return evaluate(model, evaluation_instances(held_out, n, per_variant, seed), opts);
}

namespace {

Matrix insert_zero_columns(const Matrix& m, const std::vector<int>& new_positions) {
  Matrix out(m.rows(), m.cols() + static_cast<int>(new_positions.size()));
  for (int r = 0; r < m.rows(); ++r) {
    int src = 0;
    for (int c = 0; c < out.cols(); ++c) {
      if (std::find(new_positions.begin(), new_positions.end(), c) != new_positions.end()) continue;
      out(r, c) = m(r, src++);
    }
  }
  return out;
}

}  // namespace

PolicyModel eal_extend(const PolicyModel& base, Attribute attribute) {
  if (attribute != Attribute::MB)
    throw std::invalid_argument("eal_extend: only MB can be added, got " + std::string(attribute_name(attribute)));
  if (base.config().mixed_backhaul_features)
    throw std::invalid_argument("eal_extend: model already has the MB feature columns");
  ModelConfig cfg = base.config();
  cfg.mixed_backhaul_features = true;
  const ParameterSet& src = base.parameters();
  ParameterSet dst;
  for (int s = 0; s < src.size(); ++s) {
    const std::string& name = src.name(s);
    if (name == "init.depot") {
      // [x, y, o, dl, mu, l0]
      dst.add(name, insert_zero_columns(src.value(s), {4}));
    } else if (name == "cie.init.w1") {
      // [I_B, I_MB, I_O, I_TW, I_L, o, dl, mu]
      dst.add(name, insert_zero_columns(src.value(s), {1, 7}));
    } else {
      dst.add(name, src.value(s));
    }
  }
  return PolicyModel(cfg, std::move(dst));
}

std::vector<bool> adapter_only_mask(const PolicyModel& model) {
  const ParameterSet& p = model.parameters();
  std::vector<bool> frozen(static_cast<std::size_t>(p.size()), true);
  frozen[p.slot("init.depot")] = false;
  frozen[p.slot("cie.init.w1")] = false;
  return frozen;
}

AdaptReport few_shot_adapt(TrainState& state, const TrainConfig& cfg, const AdaptOptions& opts) {
  if (!state.model.config().mixed_backhaul_features)
    throw std::invalid_argument("few_shot_adapt: model lacks the MB feature columns; run eal_extend first");
  cfg.validate();
  AdaptReport report;
  const std::uint64_t eval_seed = derive_seed(cfg.seed, kEvalStream);
  const auto mb_eval = evaluation_instances(cfg.variant_set, cfg.n, opts.eval_per_variant, eval_seed);
  const auto other_eval = evaluation_instances(opts.non_mb_variants, cfg.n, opts.eval_per_variant, eval_seed);
  report.pre = evaluate(state.model, mb_eval);
  if (!other_eval.empty()) report.non_mb_pre = evaluate(state.model, other_eval);

  TrainRunOptions run = opts.run;
  if (opts.freeze_base) run.frozen = adapter_only_mask(state.model);
  report.epochs = train(state, cfg, run);

  report.post = evaluate(state.model, mb_eval);
  if (!other_eval.empty()) report.non_mb_post = evaluate(state.model, other_eval);
  return report;
}

}  // namespace arc
