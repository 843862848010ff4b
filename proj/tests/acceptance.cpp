// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "arc/autodiff.hpp"
#include "arc/exact_oracle.hpp"
#include "arc/objectives.hpp"
#include "arc/policy_model.hpp"
#include "arc/problem.hpp"
#include "arc/routing_env.hpp"
#include "arc/seeding.hpp"
#include "arc/trainer.hpp"
#include "arc/vrplib.hpp"
#include "test_support.hpp"

using namespace arc;
using arc::test::make_instance;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& detail) {
  std::printf("criterion %2d: %s  %s (%s)\n", id, pass ? "PASS" : "FAIL", what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ModelConfig smoke_model() {
  ModelConfig c;
  c.embed_dim = 64;
  c.heads = 4;
  c.embedder_layers = 3;
  c.mixer_layers = 1;
  c.ff_hidden = 128;
  return c;
}

TrainConfig smoke_schedule(std::vector<std::string> variants) {
  TrainConfig c;
  c.variant_set = std::move(variants);
  c.n = 10;
  c.epochs = 20;
  c.instances_per_epoch = 1000;
  c.batch_size = 64;
  c.starts = 8;
  c.seed = 1;
  return c;
}

// ---------------------------------------------------------------------------

void mask_soundness() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto variants = resolve_variant_set("all16");
  int checked = 0, passed = 0;
  std::mt19937_64 rng(2024);
  for (std::size_t v = 0; v < variants.size(); ++v) {
    for (int k = 0; k < 100; ++k) {
      const Instance x = make_instance(variants[v], 50, derive_seed(11, v, k));
      const RoutingEnv env(x);
      const Solution tau = arc::test::random_rollout(env, rng);
      ++checked;
      passed += validate(x, tau).feasible;
    }
  }
  const double secs = seconds_since(t0);
  report(1, passed == checked && secs < 300, "mask soundness fuzz",
         fmt("%.0f/%.0f rollouts valid, %.1f s", passed, checked, secs));
}

// Every order of the routes of every feasible route set.
std::set<std::vector<int>> feasible_sequences(const Instance& x) {
  std::set<std::vector<int>> out;
  for_each_route_set(x.n, [&](const Solution& tau) {
    if (!validate(x, tau).feasible) return;
    auto routes = tau.routes();
    std::sort(routes.begin(), routes.end());
    do {
      std::vector<int> seq{0};
      for (const auto& r : routes) {
        seq.insert(seq.end(), r.begin(), r.end());
        seq.push_back(0);
      }
      out.insert(seq);
    } while (std::next_permutation(routes.begin(), routes.end()));
  });
  return out;
}

std::set<std::vector<int>> reachable_sequences(const Instance& x) {
  const RoutingEnv env(x);
  std::set<std::vector<int>> out;
  std::function<void(const EnvState&)> dfs = [&](const EnvState& s) {
    if (env.is_done(s)) {
      out.insert(env.finalize(s).seq);
      return;
    }
    const auto mask = env.feasible_actions(s);
    for (std::size_t j = 0; j < mask.size(); ++j)
      if (mask[j]) dfs(env.step(s, static_cast<int>(j)));
  };
  try {
    dfs(env.reset());
  } catch (const std::runtime_error&) {
    // Dead end at the depot: some customer cannot be served at all.
    out.clear();
  }
  return out;
}

void mask_completeness() {
  const auto t0 = std::chrono::steady_clock::now();
  int instances = 0, matched = 0, unsolvable = 0;
  std::size_t sequences = 0;
  for (const std::string& v : variant_catalog()) {
    for (int k = 0; k < 50; ++k) {
      GenerationConfig g;
      g.variant_name = v;
      g.n = 4 + k % 3;
      g.seed = derive_seed(22, instances);
      if (k % 2 == 1) {
        g.capacity = 12;
        g.duration_limit = 1.6;
      }
      const Instance x = generate_instance(g);
      const auto reach = reachable_sequences(x);
      const auto valid = feasible_sequences(x);
      ++instances;
      matched += reach == valid;
      unsolvable += valid.empty();
      sequences += valid.size();
    }
  }
  report(2, matched == instances, "mask completeness",
         fmt("%.0f/%.0f instances exact (%.0f without any feasible solution), %.0f feasible sequences", matched,
             instances, unsolvable, static_cast<double>(sequences)) +
             fmt(", %.1f s", seconds_since(t0)));
}

void oracle_cross_check() {
  const auto variants = variant_catalog();
  int agree = 0;
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const Instance x = make_instance(variants[(k * 5) % variants.size()], 4, derive_seed(33, k));
    // Brute force: every permutation and cut pattern, compared in canonical form.
    std::vector<int> perm(x.n);
    std::iota(perm.begin(), perm.end(), 1);
    double best = kInfinity;
    std::vector<std::pair<double, Solution>> all;
    do {
      for (unsigned cuts = 0; cuts < (1u << (x.n - 1)); ++cuts) {
        Solution s{{0}};
        for (int i = 0; i < x.n; ++i) {
          s.seq.push_back(perm[i]);
          if (i + 1 < x.n && (cuts >> i & 1u)) s.seq.push_back(0);
        }
        s.seq.push_back(0);
        if (!validate(x, s).feasible) continue;
        const Solution c = canonicalize(s);
        const double cost = solution_cost(x, c);
        all.emplace_back(cost, c);
        best = std::min(best, cost);
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    Solution pick;
    bool have = false;
    for (const auto& [c, s] : all)
      if (c <= best + kOracleTieTolerance && (!have || s.seq < pick.seq)) {
        pick = s;
        have = true;
      }
    const OracleResult r = exact_oracle(x);
    worst = std::max(worst, std::abs(r.cost - best));
    agree += have && std::abs(r.cost - best) <= 1e-12 && r.solution == pick;
  }
  report(3, agree == 20, "oracle vs brute force", fmt("%.0f/20 fixtures, max cost diff %.2e", agree, worst));
}

void gradient_check() {
  PolicyModel model(arc::test::tiny_config(), 41);
  const std::vector<Instance> batch = {make_instance("OVRPTW", 5, 1), make_instance("VRPL", 5, 2),
                                       make_instance("OVRPL", 5, 3), make_instance("VRPBTW", 5, 4)};
  LossConfig cfg;
  cfg.starts = 2;
  const LossResult base = total_loss(model, batch, cfg, 7);
  std::mt19937_64 rng(5);
  const int slots = model.parameters().size();
  const double h = 1e-3;
  double worst = 0.0;
  int probes = 0;
  // Every tensor once, then random scalars.
  for (int p = 0; p < std::max(96, slots); ++p) {
    const int slot = p < slots ? p : std::uniform_int_distribution<int>(0, slots - 1)(rng);
    Matrix& w = model.parameters().value(slot);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(0, w.size() - 1)(rng);
    const double keep = w[k];
    w[k] = keep + h;
    const double up = total_loss(model, batch, cfg, 7, &base.replay, false).breakdown.total;
    w[k] = keep - h;
    const double down = total_loss(model, batch, cfg, 7, &base.replay, false).breakdown.total;
    w[k] = keep;
    const double numeric = (up - down) / (2 * h);
    const double a = base.grads[slot][k];
    worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-3}));
    ++probes;
  }
  report(4, probes >= 64 && worst < 1e-4 && base.breakdown.pool_size > 0, "total_loss gradient vs finite differences",
         fmt("%.0f parameters, max rel error %.2e, pool %.0f", probes, worst, base.breakdown.pool_size));
}

AttributeEntry entry(std::vector<double> alpha, Attribute a, int origin) { return {std::move(alpha), a, origin}; }

void info_nce_closed_forms() {
  double worst_uniform = 0.0;
  for (int negatives : {1, 3, 7, 31}) {
    for (double s : {-0.5, 0.0, 0.7}) {
      const std::vector<double> neg(negatives, s);
      worst_uniform = std::max(worst_uniform, std::abs(info_nce_term(s, neg, 0.12) - std::log1p(negatives)));
    }
  }
  // Same case through the pool loss: parallel alphas everywhere.
  AttributePool pool;
  for (int i = 0; i < 4; ++i) pool.entries.push_back(entry({1.0, 2.0}, i < 2 ? Attribute::O : Attribute::TW, i));
  const auto r = compositional_loss(pool, 0.12, 3);
  worst_uniform = std::max(worst_uniform, std::abs(r.loss - std::log1p(2.0)));

  const double expected = std::log1p(std::exp(-20.0));
  const std::vector<double> one_neg = {-1.0};
  double worst_sharp = std::abs(info_nce_term(1.0, one_neg, 0.1) - expected);
  AttributePool sharp;
  sharp.entries = {entry({1, 0}, Attribute::O, 0), entry({1, 0}, Attribute::O, 1), entry({-1, 0}, Attribute::L, 2)};
  const auto rs = compositional_loss(sharp, 0.1, std::vector<int>{1, 0, -1});
  worst_sharp = std::max(worst_sharp, std::abs(rs.loss - expected));
  report(5, worst_uniform <= 1e-9 && worst_sharp <= 1e-12, "InfoNCE closed forms",
         fmt("uniform max err %.2e, sharp max err %.2e", worst_uniform, worst_sharp));
}

PolicyModel smoke_training() {
  const TrainConfig cfg = smoke_schedule({"CVRP", "OVRP"});
  const PolicyModel init(smoke_model(), 1);
  const auto eval = evaluation_instances(cfg.variant_set, cfg.n, 200, 7);
  const double before = mean_greedy_cost(init, eval);
  const auto t0 = std::chrono::steady_clock::now();
  TrainState state(init, cfg);
  train(state, cfg);
  const double secs = seconds_since(t0);
  const double after = mean_greedy_cost(state.model, eval);
  const double improvement = (before - after) / before;
  report(6, improvement >= 0.15 && secs < 1800, "smoke training on CVRP/OVRP",
         fmt("greedy cost %.4f -> %.4f, improvement %.1f%%, %.0f s", before, after, 100 * improvement, secs));
  return state.model;
}

double alpha_margin(const PolicyModel& model, const std::vector<Instance>& eval, double* same_out = nullptr,
                    double* cross_out = nullptr) {
  const AttributePool pool = build_attribute_pool(model, eval);
  double same = 0.0, cross = 0.0;
  long ns = 0, nc = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (std::size_t j = i + 1; j < pool.size(); ++j) {
      const auto& a = pool.entries[i];
      const auto& b = pool.entries[j];
      // Different contexts: alphas come from different base variants.
      if (eval[a.origin].variant_name == eval[b.origin].variant_name) continue;
      const double s = cosine_similarity(a.alpha, b.alpha);
      if (a.label == b.label) {
        same += s;
        ++ns;
      } else {
        cross += s;
        ++nc;
      }
    }
  }
  if (same_out) *same_out = same / ns;
  if (cross_out) *cross_out = cross / nc;
  return same / ns - cross / nc;
}

void analogical_consistency() {
  const std::vector<std::string> variants = {"CVRP", "OVRP", "VRPL", "OVRPL"};
  const auto eval = evaluation_instances(variants, 10, 50, 7);
  double margins[2], same[2], cross[2];
  const double lambdas[2] = {0.8, 0.0};
  for (int r = 0; r < 2; ++r) {
    TrainConfig cfg = smoke_schedule(variants);
    cfg.lambda = lambdas[r];
    TrainState state(PolicyModel(smoke_model(), 1), cfg);
    train(state, cfg);
    margins[r] = alpha_margin(state.model, eval, &same[r], &cross[r]);
  }
  const double init = alpha_margin(PolicyModel(smoke_model(), 1), eval);
  report(7, margins[0] >= 0.1, "same vs cross attribute alpha similarity",
         fmt("lambda 0.8: same %.3f cross %.3f margin %.3f", same[0], cross[0], margins[0]) +
             fmt("; lambda 0: margin %.3f; untrained: margin %.3f", margins[1], init));
}

void eal_identity(const PolicyModel& base) {
  const PolicyModel extended = eal_extend(base);
  const auto variants = resolve_variant_set("all16");
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Instance x = make_instance(variants[k % variants.size()], 10 + k % 11, derive_seed(88, k));
    const EncodedInstance a = encode(base, x);
    const EncodedInstance b = encode(extended, x);
    for (const auto& [p, q] : {std::pair{&a.h, &b.h}, {&a.m, &b.m}, {&a.f, &b.f}})
      for (std::size_t i = 0; i < p->size(); ++i) worst = std::max(worst, std::abs((*p)[i] - (*q)[i]));
  }
  report(8, worst == 0.0, "adapter extension leaves non-MB encodings unchanged",
         fmt("100 instances, max abs diff %.1e", worst));
}

void decomposition_and_bounds(const PolicyModel& trained) {
  const auto variants = resolve_variant_set("all16");
  int exact = 0;
  for (int k = 0; k < 1000; ++k) {
    const PolicyModel& model = trained;
    const Instance x = make_instance(variants[k % variants.size()], 5 + k % 16, derive_seed(99, k));
    const EncodedInstance e = encode(model, x);
    bool ok = true;
    for (std::size_t i = 0; i < e.f.size(); ++i) ok = ok && e.f[i] == e.h[i] + e.m[i];
    exact += ok;
  }
  const double xi = trained.config().logit_clip;
  std::mt19937_64 rng(4);
  long states = 0, out_of_range = 0, leaked = 0;
  for (int k = 0; k < 64; ++k) {
    const Instance x = make_instance(variants[k % variants.size()], 10, derive_seed(77, k));
    const RoutingEnv env(x);
    EnvState s = env.reset();
    while (!env.is_done(s)) {
      const auto mask = env.feasible_actions(s);
      const auto logits = decoder_logits(trained, x, s);
      const auto probs = ad::masked_softmax(logits, mask);
      std::vector<int> options;
      for (std::size_t j = 0; j < mask.size(); ++j) {
        if (mask[j]) {
          options.push_back(static_cast<int>(j));
          out_of_range += !(logits[j] >= -xi && logits[j] <= xi);
        } else {
          leaked += probs[j] != 0.0;
        }
      }
      ++states;
      env.apply(s, options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)]);
    }
  }
  report(9, exact == 1000 && out_of_range == 0 && leaked == 0, "f = h + m, logit bounds, masked probabilities",
         fmt("%.0f/1000 exact encodes; %.0f states, %.0f logits out of range, %.0f nonzero masked", exact,
             static_cast<double>(states), static_cast<double>(out_of_range), static_cast<double>(leaked)));
}

const char* kMiniTsplib = R"(NAME : toy-n4
COMMENT : (hand-built square tour)
TYPE : CVRP
DIMENSION : 4
EDGE_WEIGHT_TYPE : EUC_2D
CAPACITY : 10
NODE_COORD_SECTION
1 0 0
2 0 5
3 5 5.4
4 5 0
DEMAND_SECTION
1 0
2 3
3 3
4 3
DEPOT_SECTION
 1
 -1
EOF
)";

void benchmark_plumbing() {
  const BenchmarkInstance b = parse_vrplib(kMiniTsplib);
  const bool round_trip = parse_vrplib(write_vrplib(b)) == b;
  // 0-1: 5, 1-2: round(5.016)=5, 2-3: round(5.4)=5, 3-0: 5.
  const long long cost = benchmark_cost(b, Solution{{0, 1, 2, 3, 0}});
  const double g = gap(28927, 27591);
  report(10, round_trip && cost == 20 && std::abs(g - 4.842) < 5e-4, "benchmark parsing and gap",
         fmt("round trip %.0f, tour cost %.0f, gap %.4f%%", round_trip, static_cast<double>(cost), g));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(ARC_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void determinism() {
  const fs::path dir = fs::temp_directory_path() / ("arc-accept-" + std::to_string(std::random_device{}()));
  fs::create_directories(dir);
  std::ofstream(dir / "small.json") << R"({"model": {"embed_dim": 16, "heads": 2, "embedder_layers": 1,
    "mixer_layers": 1, "ff_hidden": 32}, "train.variants": "all16", "train.n": 10, "train.epochs": 2,
    "train.instances_per_epoch": 64, "train.batch_size": 16, "train.starts": 4})";
  const fs::path log = dir / "log.txt";
  int codes = 0;
  for (const char* run : {"a", "b"}) {
    const fs::path out = dir / run;
    codes += run_cli("generate --variant all24 --n 20 --count 5 --seed 3 --out " + (out / "gen").string(), log);
    codes += run_cli("train --config " + (dir / "small.json").string() + " --seed 3 --out " + (out / "train").string(),
                     log);
  }
  int files = 0, identical = 0;
  for (const auto& e : fs::directory_iterator(dir / "a" / "gen")) {
    if (e.path().extension() != ".jsonl") continue;
    ++files;
    identical += slurp(e.path()) == slurp(dir / "b" / "gen" / e.path().filename());
  }
  const std::string m1 = slurp(dir / "a" / "train" / "epoch_metrics.jsonl");
  const std::string m2 = slurp(dir / "b" / "train" / "epoch_metrics.jsonl");
  const bool metrics = !m1.empty() && m1 == m2;
  const bool model = slurp(dir / "a" / "train" / "model.ckpt") == slurp(dir / "b" / "train" / "model.ckpt");
  fs::remove_all(dir);
  report(11, codes == 0 && files == 24 && identical == files && metrics && model, "re-runs are identical",
         fmt("%.0f/%.0f instance files identical, epoch metrics ", identical, files) +
             (metrics ? "identical" : "differ") + (model ? ", checkpoints identical" : ", checkpoints differ"));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  mask_soundness();
  mask_completeness();
  oracle_cross_check();
  gradient_check();
  info_nce_closed_forms();
  const PolicyModel trained = smoke_training();
  analogical_consistency();
  eal_identity(trained);
  decomposition_and_bounds(trained);
  benchmark_plumbing();
  determinism();
  std::printf("%d of 11 criteria failed, %.0f s total\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
