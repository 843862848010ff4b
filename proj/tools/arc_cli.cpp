// arc command-line interface.
//
//   arc_cli generate | train | eval | solve | validate | adapt | export-embed
//
// Every command reads an optional JSON config (flat dotted keys, nested
// objects are flattened), applies --set key=value overrides and the
// command's own flags, rejects unknown keys and writes the effective config
// to <out>/effective_config.json.

#include <omp.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "arc/checkpoint.hpp"
#include "arc/embedding_export.hpp"
#include "arc/instance_io.hpp"
#include "arc/seeding.hpp"
#include "arc/solution_io.hpp"
#include "arc/trainer.hpp"
#include "arc/vrplib.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace arc;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kInfeasible = 3 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Configuration

json default_config() {
  const ModelConfig m;
  const TrainConfig t;
  return json{
      {"seed", 0},
      {"workers", 0},
      {"out", "arc-out"},
      {"generate.variants", "all16"},
      {"generate.n", 50},
      {"generate.count", 1},
      {"model.embed_dim", m.embed_dim},
      {"model.heads", m.heads},
      {"model.embedder_layers", m.embedder_layers},
      {"model.mixer_layers", m.mixer_layers},
      {"model.ff_hidden", m.ff_hidden},
      {"model.logit_clip", m.logit_clip},
      {"train.variants", "all16"},
      {"train.n", t.n},
      {"train.epochs", t.epochs},
      {"train.instances_per_epoch", t.instances_per_epoch},
      {"train.batch_size", t.batch_size},
      {"train.starts", t.starts},
      {"train.learning_rate", t.learning_rate},
      {"train.decay_fraction", t.decay_fraction},
      {"train.decay_factor", t.decay_factor},
      {"train.clip_norm", t.clip_norm},
      {"train.lambda", t.lambda},
      {"train.beta", t.beta},
      {"train.pool_cap", t.pool_cap},
      {"train.resume", false},
      {"train.stop_after", 0},
      {"decode.mode", "greedy"},
      {"decode.starts", 8},
      {"eval.variants", "all16"},
      {"eval.n", 50},
      {"eval.count", 100},
      {"eval.oracle_max_n", 0},
      {"eval.instances", ""},
      {"checkpoint", ""},
      {"solve.input", ""},
      {"validate.instances", ""},
      {"validate.solutions", ""},
      {"adapt.variants", "mb8"},
      {"adapt.freeze_base", false},
      {"adapt.eval_count", 20},
      {"adapt.non_mb_variants", ""},
      {"embed.variants", "all16"},
      {"embed.n", 50},
      {"embed.count", 10},
      {"embed.instances", ""},
  };
}

void flatten(const json& j, const std::string& prefix, json& out) {
  for (const auto& [k, v] : j.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      flatten(v, key, out);
    } else {
      out[key] = v;
    }
  }
}

bool same_kind(const json& expected, const json& given) {
  if (expected.is_boolean()) return given.is_boolean();
  if (expected.is_number_integer()) return given.is_number_integer();
  if (expected.is_number()) return given.is_number();
  return given.is_string();
}

void set_key(json& cfg, const std::string& key, json value) {
  if (!cfg.contains(key)) throw UsageError("unknown config key '" + key + "'");
  const json& current = cfg[key];
  // Integers are accepted for float keys.
  if (current.is_number_float() && value.is_number()) value = value.get<double>();
  if (!same_kind(current, value))
    throw UsageError("config key '" + key + "' expects a " + std::string(current.type_name()) + ", got " +
                     value.dump());
  cfg[key] = std::move(value);
}

json parse_override_value(const std::string& text) {
  try {
    json v = json::parse(text);
    if (v.is_primitive() && !v.is_null()) return v;
  } catch (const json::exception&) {
  }
  return text;
}

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_file, "JSON config file (flat dotted keys)");
  cmd->add_option("--set", c.overrides, "Override a config key: key=value (repeatable)");
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_option("--workers", c.workers, "Cap on parallel worker threads (0: all cores)");
}

// Flag values given on the command line, applied after the file and --set.
using FlagMap = std::vector<std::pair<std::string, std::function<std::optional<json>()>>>;

template <typename T>
void flag(CLI::App* cmd, FlagMap& flags, std::optional<T>& slot, const std::string& name, const std::string& key,
          const std::string& help) {
  cmd->add_option(name, slot, help + " [" + key + "]");
  flags.emplace_back(key, [&slot]() -> std::optional<json> {
    if (!slot) return std::nullopt;
    return json(*slot);
  });
}

void flag(CLI::App* cmd, FlagMap& flags, std::optional<bool>&, const std::string& name, const std::string& key,
          const std::string& help) {
  CLI::Option* opt = cmd->add_flag(name)->description(help + " [" + key + "]");
  flags.emplace_back(key, [opt]() -> std::optional<json> {
    if (opt->count() == 0) return std::nullopt;
    return json(true);
  });
}

json build_config(const Common& c, const FlagMap& flags) {
  json cfg = default_config();
  if (!c.config_file.empty()) {
    std::ifstream in(c.config_file);
    if (!in) throw UsageError("cannot open config file '" + c.config_file + "'");
    json file;
    try {
      file = json::parse(in);
    } catch (const json::exception& e) {
      throw FormatError("config file '" + c.config_file + "': " + e.what());
    }
    if (!file.is_object()) throw FormatError("config file '" + c.config_file + "' must hold a JSON object");
    json flat = json::object();
    flatten(file, "", flat);
    for (const auto& [k, v] : flat.items()) set_key(cfg, k, v);
  }
  for (const auto& o : c.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + o + "'");
    set_key(cfg, o.substr(0, eq), parse_override_value(o.substr(eq + 1)));
  }
  for (const auto& [key, get] : flags)
    if (auto v = get()) set_key(cfg, key, *v);
  if (c.out) cfg["out"] = *c.out;
  if (c.seed) cfg["seed"] = *c.seed;
  if (c.workers) set_key(cfg, "workers", *c.workers);
  if (cfg["workers"].get<int>() < 0) throw UsageError("workers must be >= 0");
  return cfg;
}

fs::path prepare_out(const json& cfg) {
  const fs::path out = cfg["out"].get<std::string>();
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw std::runtime_error("cannot create output directory '" + out.string() + "'");
  std::ofstream f(out / "effective_config.json", std::ios::binary);
  if (!f) throw std::runtime_error("cannot write to output directory '" + out.string() + "'");
  f << cfg.dump(2) << '\n';
  return out;
}

void apply_workers(const json& cfg) {
  const int w = cfg["workers"].get<int>();
  if (w > 0) omp_set_num_threads(w);
}

std::uint64_t seed_of(const json& cfg) { return cfg["seed"].get<std::uint64_t>(); }

ModelConfig model_config(const json& cfg) {
  ModelConfig m;
  m.embed_dim = cfg["model.embed_dim"];
  m.heads = cfg["model.heads"];
  m.embedder_layers = cfg["model.embedder_layers"];
  m.mixer_layers = cfg["model.mixer_layers"];
  m.ff_hidden = cfg["model.ff_hidden"];
  m.logit_clip = cfg["model.logit_clip"];
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return m;
}

TrainConfig train_config(const json& cfg, const std::string& variants_key) {
  TrainConfig t;
  t.variant_set = resolve_variant_set(cfg[variants_key].get<std::string>());
  t.n = cfg["train.n"];
  t.epochs = cfg["train.epochs"];
  t.instances_per_epoch = cfg["train.instances_per_epoch"];
  t.batch_size = cfg["train.batch_size"];
  t.starts = cfg["train.starts"];
  t.learning_rate = cfg["train.learning_rate"];
  t.decay_fraction = cfg["train.decay_fraction"];
  t.decay_factor = cfg["train.decay_factor"];
  t.clip_norm = cfg["train.clip_norm"];
  t.lambda = cfg["train.lambda"];
  t.beta = cfg["train.beta"];
  t.pool_cap = cfg["train.pool_cap"];
  t.seed = seed_of(cfg);
  t.workers = cfg["workers"];
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return t;
}

DecodeOptions decode_options(const json& cfg) {
  const std::string mode = cfg["decode.mode"];
  const int starts = cfg["decode.starts"];
  if (mode == "greedy") return {DecodeMode::Greedy, 0};
  if (mode == "sample") return {DecodeMode::Sample, 0};
  if (mode == "multistart") {
    if (starts < 1) throw UsageError("decode.starts must be >= 1 for multistart");
    return {DecodeMode::Greedy, starts};
  }
  throw UsageError("decode.mode must be greedy, sample or multistart, got '" + mode + "'");
}

PolicyModel load_model(const json& cfg) {
  const std::string path = cfg["checkpoint"];
  if (path.empty()) throw UsageError("--checkpoint is required");
  return model_from_checkpoint(load_checkpoint(path));
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

// ---------------------------------------------------------------------------
// Commands

int cmd_generate(const json& cfg) {
  const auto variants = resolve_variant_set(cfg["generate.variants"].get<std::string>());
  const int n = cfg["generate.n"];
  const int count = cfg["generate.count"];
  if (n < 1) throw UsageError("generate.n must be >= 1");
  if (count < 0) throw UsageError("generate.count must be >= 0");
  const fs::path out = prepare_out(cfg);
  for (std::size_t v = 0; v < variants.size(); ++v) {
    std::vector<Instance> xs;
    for (int k = 0; k < count; ++k) {
      GenerationConfig g;
      g.n = n;
      g.variant_name = variants[v];
      g.seed = derive_seed(seed_of(cfg), v, static_cast<std::uint64_t>(k));
      xs.push_back(generate_instance(g));
    }
    write_instances(out / (variants[v] + ".jsonl"), xs);
    std::cout << variants[v] << '\t' << xs.size() << '\n';
  }
  return kOk;
}

int cmd_train(const json& cfg) {
  const TrainConfig tc = train_config(cfg, "train.variants");
  const ModelConfig mc = model_config(cfg);
  const fs::path out = prepare_out(cfg);
  apply_workers(cfg);
  const fs::path ckpt = out / "model.ckpt";
  const bool resume = cfg["train.resume"].get<bool>() && fs::exists(ckpt);

  std::optional<TrainState> state;
  if (resume) {
    state.emplace(resume_state(load_checkpoint(ckpt, mc), tc));
    std::cout << "resuming after epoch " << state->epochs_completed << '\n';
  } else {
    state.emplace(PolicyModel(mc, derive_seed(tc.seed, 0x6d6f64656cULL)), tc);
  }

  std::ofstream log(out / "train_log.jsonl", resume ? std::ios::app : std::ios::trunc);
  std::ofstream metrics(out / "epoch_metrics.jsonl", resume ? std::ios::app : std::ios::trunc);
  if (!log || !metrics) throw std::runtime_error("cannot write logs to '" + out.string() + "'");
  struct Pause {};
  const int stop_after = cfg["train.stop_after"];
  int ran = 0;
  TrainRunOptions opts;
  opts.log = &log;
  opts.checkpoint = ckpt;
  opts.on_epoch = [&](const EpochMetrics& m) {
    metrics << epoch_metrics_to_json(m).dump() << '\n';
    metrics.flush();
    std::cout << "epoch " << m.epoch << " total " << format_double(m.mean_total) << " reinforce "
              << format_double(m.mean_reinforce) << " comp_attr " << format_double(m.mean_comp_attr) << '\n';
    if (stop_after > 0 && ++ran == stop_after && state->epochs_completed < tc.epochs) throw Pause{};
  };
  try {
    train(*state, tc, opts);
  } catch (const Pause&) {
    std::cout << "paused after epoch " << state->epochs_completed - 1 << "; rerun with --resume to continue\n";
  }
  std::cout << "checkpoint " << ckpt.string() << '\n';
  return kOk;
}

std::vector<Instance> eval_instances(const json& cfg, const std::string& prefix) {
  const std::string file = cfg[prefix + ".instances"];
  if (!file.empty()) return read_instances(fs::path(file));
  const auto variants = resolve_variant_set(cfg[prefix + ".variants"].get<std::string>());
  return evaluation_instances(variants, cfg[prefix + ".n"], cfg[prefix + ".count"], seed_of(cfg));
}

void write_eval_csv(std::ostream& os, const std::map<std::string, VariantEval>& rows, const std::vector<Instance>& xs) {
  std::map<std::string, int> sizes;
  for (const auto& x : xs) sizes.emplace(x.variant_name, x.n);
  os << "variant,n,mean_cost,mean_gap,time\n";
  // Catalog order rather than alphabetical.
  for (const auto& name : variant_catalog()) {
    const auto it = rows.find(name);
    if (it == rows.end()) continue;
    os << name << ',' << sizes[name] << ',' << format_double(it->second.mean_cost) << ','
       << format_double(it->second.mean_gap) << ',' << format_double(it->second.seconds) << '\n';
  }
}

int cmd_eval(const json& cfg) {
  const fs::path out = prepare_out(cfg);
  apply_workers(cfg);
  const PolicyModel model = load_model(cfg);
  const auto xs = eval_instances(cfg, "eval");
  EvalOptions opts;
  opts.decode = decode_options(cfg);
  opts.oracle_max_n = cfg["eval.oracle_max_n"];
  const auto rows = evaluate(model, xs, opts);
  std::ofstream csv(out / "eval.csv", std::ios::binary);
  if (!csv) throw std::runtime_error("cannot write eval.csv");
  write_eval_csv(csv, rows, xs);
  write_eval_csv(std::cout, rows, xs);
  bool feasible = true;
  for (const auto& [name, r] : rows) feasible = feasible && r.all_feasible;
  return feasible ? kOk : kInfeasible;
}

const Trajectory& best_of(const std::vector<Trajectory>& trs) {
  const Trajectory* best = &trs.front();
  for (const auto& t : trs)
    if (t.cost < best->cost) best = &t;
  return *best;
}

bool is_vrplib_path(const fs::path& p) { return fs::is_directory(p) || p.extension() == ".vrp"; }

int cmd_solve(const json& cfg) {
  const fs::path out = prepare_out(cfg);
  apply_workers(cfg);
  const PolicyModel model = load_model(cfg);
  const fs::path input = cfg["solve.input"].get<std::string>();
  if (input.empty()) throw UsageError("--input is required");
  if (!fs::exists(input)) throw FormatError("input '" + input.string() + "' does not exist");
  const DecodeOptions dec = decode_options(cfg);
  std::vector<SolutionRecord> records;

  if (is_vrplib_path(input)) {
    const auto bs = fs::is_directory(input) ? load_vrplib_directory(input) : std::vector{load_vrplib_file(input)};
    std::ofstream csv(out / "benchmark.csv", std::ios::binary);
    csv << "instance,group,cost,best_known,gap\n";
    std::vector<std::pair<std::string, double>> gaps;
    for (std::size_t i = 0; i < bs.size(); ++i) {
      const NormalizedBenchmark nb = normalize_instance(bs[i]);
      const auto trs = rollout(model, nb.instance, dec, derive_seed(seed_of(cfg), i));
      const Trajectory& best = best_of(trs);
      const long long cost = benchmark_cost(bs[i], best.solution);
      records.push_back({bs[i].name, best.solution, static_cast<double>(cost),
                         validate(nb.instance, best.solution).feasible});
      csv << bs[i].name << ',' << benchmark_group(bs[i].name) << ',' << cost << ',';
      if (bs[i].best_known) {
        const double g = gap(static_cast<double>(cost), *bs[i].best_known);
        gaps.emplace_back(bs[i].name, g);
        csv << format_double(*bs[i].best_known) << ',' << format_double(g) << '\n';
      } else {
        csv << ",\n";
      }
    }
    for (const auto& [group, s] : group_gaps(gaps))
      std::cout << "group " << group << " instances " << s.instances << " mean_gap " << format_double(s.mean_gap)
                << '\n';
  } else {
    const auto xs = read_instances(input);
    const auto ids = default_instance_ids(xs);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const auto trs = rollout(model, xs[i], dec, derive_seed(seed_of(cfg), i));
      const Trajectory& best = best_of(trs);
      records.push_back({ids[i], best.solution, best.cost, validate(xs[i], best.solution).feasible});
    }
  }
  write_solutions(out / "solutions.jsonl", records);
  int infeasible = 0;
  for (const auto& r : records) infeasible += r.feasible ? 0 : 1;
  std::cout << "solved " << records.size() << " instances, " << infeasible << " infeasible\n";
  return infeasible == 0 ? kOk : kInfeasible;
}

int cmd_validate(const json& cfg) {
  const fs::path inst = cfg["validate.instances"].get<std::string>();
  const fs::path sols = cfg["validate.solutions"].get<std::string>();
  if (inst.empty() || sols.empty()) throw UsageError("--instances and --solutions are required");
  const auto records = read_solutions(sols);

  struct Target {
    Instance instance;
    std::optional<BenchmarkInstance> benchmark;
  };
  std::map<std::string, Target> targets;
  if (is_vrplib_path(inst)) {
    const auto bs = fs::is_directory(inst) ? load_vrplib_directory(inst) : std::vector{load_vrplib_file(inst)};
    for (const auto& b : bs) targets[b.name] = Target{normalize_instance(b).instance, b};
  } else {
    const auto xs = read_instances(inst);
    const auto ids = default_instance_ids(xs);
    for (std::size_t i = 0; i < xs.size(); ++i) targets[ids[i]] = Target{xs[i], std::nullopt};
  }

  int infeasible = 0;
  bool data_error = false;
  for (const auto& r : records) {
    const auto it = targets.find(r.instance_id);
    if (it == targets.end()) {
      std::cout << r.instance_id << ": unknown instance\n";
      data_error = true;
      continue;
    }
    const Verdict v = validate(it->second.instance, r.solution);
    if (!v.feasible) {
      ++infeasible;
      std::cout << r.instance_id << ": infeasible";
      for (const auto& why : v.violations) std::cout << "; " << why;
      std::cout << '\n';
      continue;
    }
    const double cost = it->second.benchmark ? static_cast<double>(benchmark_cost(*it->second.benchmark, r.solution))
                                             : solution_cost(it->second.instance, r.solution);
    if (std::abs(cost - r.cost) > 1e-9 * std::max(1.0, std::abs(cost))) {
      std::cout << r.instance_id << ": feasible but recorded cost " << format_double(r.cost) << " differs from "
                << format_double(cost) << '\n';
      data_error = true;
      continue;
    }
    std::cout << r.instance_id << ": ok cost " << format_double(cost) << '\n';
  }
  if (infeasible > 0) return kInfeasible;
  return data_error ? kData : kOk;
}

void print_eval_pair(std::ostream& os, const std::string& label, const std::map<std::string, VariantEval>& pre,
                     const std::map<std::string, VariantEval>& post) {
  for (const auto& [name, a] : pre) {
    const auto it = post.find(name);
    os << label << ',' << name << ',' << format_double(a.mean_cost) << ','
       << (it == post.end() ? std::string("nan") : format_double(it->second.mean_cost)) << '\n';
  }
}

int cmd_adapt(const json& cfg) {
  const fs::path out = prepare_out(cfg);
  apply_workers(cfg);
  const TrainConfig tc = train_config(cfg, "adapt.variants");
  PolicyModel base = load_model(cfg);
  PolicyModel model = base.config().mixed_backhaul_features ? std::move(base) : eal_extend(base);
  TrainState state(std::move(model), tc);
  AdaptOptions opts;
  opts.freeze_base = cfg["adapt.freeze_base"];
  opts.eval_per_variant = cfg["adapt.eval_count"];
  const std::string others = cfg["adapt.non_mb_variants"];
  if (!others.empty()) opts.non_mb_variants = resolve_variant_set(others);
  std::ofstream log(out / "adapt_log.jsonl", std::ios::trunc);
  opts.run.log = &log;
  opts.run.checkpoint = out / "adapted.ckpt";
  const AdaptReport rep = few_shot_adapt(state, tc, opts);
  std::ofstream csv(out / "adapt_report.csv", std::ios::binary);
  csv << "group,variant,cost_before,cost_after\n";
  print_eval_pair(csv, "target", rep.pre, rep.post);
  print_eval_pair(csv, "other", rep.non_mb_pre, rep.non_mb_post);
  std::cout << "group,variant,cost_before,cost_after\n";
  print_eval_pair(std::cout, "target", rep.pre, rep.post);
  print_eval_pair(std::cout, "other", rep.non_mb_pre, rep.non_mb_post);
  return kOk;
}

int cmd_export_embed(const json& cfg) {
  const fs::path out = prepare_out(cfg);
  apply_workers(cfg);
  const PolicyModel model = load_model(cfg);
  const auto xs = eval_instances(cfg, "embed");
  std::ofstream tsv(out / "embeddings.tsv", std::ios::binary);
  if (!tsv) throw std::runtime_error("cannot write embeddings.tsv");
  write_embedding_table(tsv, pooled_embeddings(model, xs, default_instance_ids(xs)));
  std::cout << "wrote " << xs.size() << " rows to " << (out / "embeddings.tsv").string() << '\n';
  return kOk;
}

std::string catalog_text() {
  std::ostringstream s;
  s << "Variants:";
  for (const auto& v : variant_catalog()) s << ' ' << v;
  s << "\nPresets:";
  for (const auto& p : preset_names()) s << ' ' << p;
  s << "\nVariant lists are comma-separated names or a preset.\n"
    << "Exit codes: 0 ok, 1 usage error, 2 data error, 3 infeasible solution.\n";
  return s.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-variant vehicle routing: instance generation, training, evaluation and solving"};
  app.footer(catalog_text());
  app.require_subcommand(1);

  struct Command {
    CLI::App* app;
    Common common;
    FlagMap flags;
    std::function<int(const json&)> run;
  };
  std::map<std::string, Command> commands;
  auto add = [&](const std::string& name, const std::string& help, std::function<int(const json&)> run) -> Command& {
    Command& c = commands[name];
    c.app = app.add_subcommand(name, help);
    c.app->footer(catalog_text());
    add_common(c.app, c.common);
    c.run = std::move(run);
    return c;
  };

  std::optional<std::string> g_variants, t_variants, e_variants, a_variants, x_variants, ckpt, mode, input, inst_file,
      sol_file, e_inst, x_inst;
  std::optional<int> t_stop, g_n, g_count, t_epochs, t_instances, t_n, e_n, e_count, starts, oracle_n, x_n, x_count;
  std::optional<double> lambda;
  std::optional<bool> resume, freeze;

  {
    Command& c = add("generate", "Write synthetic instances, one JSON-lines file per variant", cmd_generate);
    flag(c.app, c.flags, g_variants, "--variant", "generate.variants", "Variant name, list or preset");
    flag(c.app, c.flags, g_n, "--n", "generate.n", "Customers per instance");
    flag(c.app, c.flags, g_count, "--count", "generate.count", "Instances per variant");
  }
  {
    Command& c = add("train", "Train a policy; writes model.ckpt and JSON-lines logs", cmd_train);
    flag(c.app, c.flags, t_variants, "--preset,--variant", "train.variants", "Training variants");
    flag(c.app, c.flags, lambda, "--lambda", "train.lambda", "Weight of the compositional term");
    flag(c.app, c.flags, t_epochs, "--epochs", "train.epochs", "Epochs");
    flag(c.app, c.flags, t_instances, "--instances-per-epoch", "train.instances_per_epoch", "Instances per epoch");
    flag(c.app, c.flags, t_n, "--n", "train.n", "Customers per training instance");
    flag(c.app, c.flags, resume, "--resume", "train.resume", "Continue from <out>/model.ckpt when present");
    flag(c.app, c.flags, t_stop, "--stop-after", "train.stop_after", "Stop after this many epochs in this run");
  }
  {
    Command& c = add("eval", "Evaluate a checkpoint; writes eval.csv", cmd_eval);
    flag(c.app, c.flags, ckpt, "--checkpoint", "checkpoint", "Model checkpoint");
    flag(c.app, c.flags, e_variants, "--variant", "eval.variants", "Evaluation variants");
    flag(c.app, c.flags, e_n, "--n", "eval.n", "Customers per instance");
    flag(c.app, c.flags, e_count, "--count", "eval.count", "Instances per variant");
    flag(c.app, c.flags, e_inst, "--instances", "eval.instances", "Instance file instead of generated ones");
    flag(c.app, c.flags, mode, "--mode", "decode.mode", "greedy, sample or multistart");
    flag(c.app, c.flags, starts, "--starts", "decode.starts", "Multistart lanes");
    flag(c.app, c.flags, oracle_n, "--oracle-max-n", "eval.oracle_max_n", "Exact gaps up to this size");
  }
  {
    Command& c = add("solve", "Solve instances from a JSON-lines or VRPLib file", cmd_solve);
    flag(c.app, c.flags, ckpt, "--checkpoint", "checkpoint", "Model checkpoint");
    flag(c.app, c.flags, input, "--input", "solve.input", "Instance file, .vrp file or directory of .vrp files");
    flag(c.app, c.flags, mode, "--mode", "decode.mode", "greedy, sample or multistart");
    flag(c.app, c.flags, starts, "--starts", "decode.starts", "Multistart lanes");
  }
  {
    Command& c = add("validate", "Re-check a solution file against its instances", cmd_validate);
    flag(c.app, c.flags, inst_file, "--instances", "validate.instances", "Instance file or VRPLib path");
    flag(c.app, c.flags, sol_file, "--solutions", "validate.solutions", "Solution file");
  }
  {
    Command& c = add("adapt", "Extend a model with mixed-backhaul inputs and fine-tune it", cmd_adapt);
    flag(c.app, c.flags, ckpt, "--checkpoint", "checkpoint", "Base model checkpoint");
    flag(c.app, c.flags, a_variants, "--variant", "adapt.variants", "Adaptation variants");
    flag(c.app, c.flags, freeze, "--freeze-base", "adapt.freeze_base", "Train only the extended projections");
    flag(c.app, c.flags, t_epochs, "--epochs", "train.epochs", "Epochs");
    flag(c.app, c.flags, t_instances, "--instances-per-epoch", "train.instances_per_epoch", "Instances per epoch");
    flag(c.app, c.flags, t_n, "--n", "train.n", "Customers per instance");
  }
  {
    Command& c = add("export-embed", "Write pooled f, h and m embeddings as TSV", cmd_export_embed);
    flag(c.app, c.flags, ckpt, "--checkpoint", "checkpoint", "Model checkpoint");
    flag(c.app, c.flags, x_variants, "--variant", "embed.variants", "Variants");
    flag(c.app, c.flags, x_n, "--n", "embed.n", "Customers per instance");
    flag(c.app, c.flags, x_count, "--count", "embed.count", "Instances per variant");
    flag(c.app, c.flags, x_inst, "--instances", "embed.instances", "Instance file instead of generated ones");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  for (auto& [name, c] : commands) {
    if (!c.app->parsed()) continue;
    try {
      return c.run(build_config(c.common, c.flags));
    } catch (const InfeasibleAction& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kInfeasible;
    } catch (const UsageError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kUsage;
    } catch (const std::invalid_argument& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kUsage;
    } catch (const FormatError& e) {
      std::cerr << "data error: " << e.what() << '\n';
      return kData;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kData;
    }
  }
  return kUsage;
}
