#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <sstream>

#include "arc/trainer.hpp"
#include "doctest.h"
#include "json.hpp"
#include "test_support.hpp"

using namespace arc;
using arc::test::tiny_config;
namespace fs = std::filesystem;

namespace {

TrainConfig quick_config() {
  TrainConfig c;
  c.variant_set = {"CVRP", "VRPTW", "OVRPL"};
  c.instances_per_epoch = 12;
  c.epochs = 2;
  c.batch_size = 6;
  c.starts = 3;
  c.n = 6;
  c.seed = 17;
  c.learning_rate = 1e-3;
  return c;
}

}  // namespace

TEST_CASE("training config validation and schedule") {
  TrainConfig c = quick_config();
  CHECK_NOTHROW(c.validate());
  c.starts = 7;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = quick_config();
  c.variant_set = {"NOPE"};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = quick_config();
  c.lambda = -1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  c = quick_config();
  c.epochs = 20;
  for (int e = 0; e < 18; ++e) CHECK(c.lr_scale(e) == 1.0);
  CHECK(c.lr_scale(18) == 0.1);
  CHECK(c.lr_scale(19) == 0.1);
  c.epochs = 5;
  CHECK(c.lr_scale(3) == 1.0);
  CHECK(c.lr_scale(4) == 0.1);
}

TEST_CASE("training batches cover every variant in equal shares") {
  TrainConfig c;
  c.n = 10;
  c.seed = 1;
  std::map<std::string, int> counts;
  for (int i = 0; i < 64; ++i) counts[training_instance(c, 0, i).variant_name]++;
  CHECK(counts.size() == 16);
  for (const auto& [name, k] : counts) CHECK(k == 4);
  CHECK(training_instance(c, 0, 3) == training_instance(c, 0, 3));
  CHECK_FALSE(training_instance(c, 0, 3) == training_instance(c, 1, 3));
}

TEST_CASE("an epoch updates the model and logs every step") {
  const TrainConfig cfg = quick_config();
  TrainState state(PolicyModel(tiny_config(), 1), cfg);
  const auto before = state.model.parameters();
  std::ostringstream log;
  const EpochMetrics m = train_epoch(state, cfg, &log);
  CHECK(m.steps == 2);
  CHECK(m.skipped_steps == 0);
  CHECK(state.steps == 2);
  CHECK(state.epochs_completed == 1);
  CHECK_FALSE(state.model.parameters() == before);
  CHECK(m.per_variant.size() == 3);
  std::istringstream lines(log.str());
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"step", "epoch", "reinforce", "comp_attr", "total", "pool_size", "grad_norm", "lr"})
      CHECK(j.contains(key));
    CHECK(j["lr"].get<double>() == doctest::Approx(cfg.learning_rate));
    ++count;
  }
  CHECK(count == 2);
}

TEST_CASE("training is deterministic and independent of threading") {
  TrainConfig cfg = quick_config();
  TrainState a(PolicyModel(tiny_config(), 2), cfg);
  TrainState b(PolicyModel(tiny_config(), 2), cfg);
  const auto ma = train(a, cfg);
  cfg.parallel = false;
  const auto mb = train(b, cfg);
  CHECK(a.model.parameters() == b.model.parameters());
  CHECK(ma == mb);
}

TEST_CASE("resuming from a checkpoint matches an uninterrupted run") {
  const fs::path dir = fs::temp_directory_path() / ("arc-train-" + std::to_string(std::random_device{}()));
  fs::create_directories(dir);
  TrainConfig cfg = quick_config();
  cfg.epochs = 3;

  TrainState straight(PolicyModel(tiny_config(), 3), cfg);
  train(straight, cfg);

  TrainState part(PolicyModel(tiny_config(), 3), cfg);
  TrainRunOptions opts;
  opts.checkpoint = dir / "ckpt";
  struct Interrupted {};
  opts.on_epoch = [](const EpochMetrics&) { throw Interrupted{}; };
  CHECK_THROWS_AS(train(part, cfg, opts), Interrupted);
  const Checkpoint ckpt = load_checkpoint(dir / "ckpt");
  CHECK(ckpt.meta.epochs_completed == 1);
  CHECK(ckpt.meta.steps == 2);
  TrainState resumed = resume_state(ckpt, cfg);
  train(resumed, cfg);
  CHECK(resumed.epochs_completed == 3);
  CHECK(resumed.steps == straight.steps);
  CHECK(resumed.model.parameters() == straight.model.parameters());
  fs::remove_all(dir);
}

TEST_CASE("evaluation instances are stable and evaluation does not mutate") {
  const auto a = evaluation_instances({"CVRP", "VRPB"}, 7, 3, 5);
  const auto b = evaluation_instances({"CVRP", "VRPB"}, 7, 3, 5);
  CHECK(a == b);
  CHECK(a.size() == 6);
  const PolicyModel model(tiny_config(), 4);
  const auto fp = model.parameters().fingerprint();
  EvalOptions opts;
  opts.oracle_max_n = 7;
  const auto r = evaluate(model, a, opts);
  CHECK(model.parameters().fingerprint() == fp);
  REQUIRE(r.size() == 2);
  for (const auto& [name, v] : r) {
    CHECK(v.instances == 3);
    CHECK(v.all_feasible);
    CHECK(v.mean_gap >= -1e-9);
  }
  CHECK(std::isnan(evaluate(model, a).at("CVRP").mean_gap));
  CHECK(mean_greedy_cost(model, a) > 0.0);
}

TEST_CASE("zero-shot evaluation covers exactly the held-out variants") {
  const PolicyModel model(tiny_config(), 5);
  const auto fp = model.parameters().fingerprint();
  const auto trained = resolve_variant_set("zeroshot7");
  const auto r = zero_shot_eval(model, trained, resolve_variant_set("all16"), 6, 2, 1);
  CHECK(r.size() == 9);
  for (const auto& v : resolve_variant_set("heldout9")) CHECK(r.count(v) == 1);
  for (const auto& v : trained) CHECK(r.count(v) == 0);
  CHECK(model.parameters().fingerprint() == fp);
  CHECK_THROWS_AS(zero_shot_eval(model, trained, resolve_variant_set("all24"), 6, 2, 1), std::invalid_argument);
  CHECK_THROWS_AS(zero_shot_eval(model, {"CVRP", "VRPTW"}, {"VRPL"}, 6, 2, 1), std::invalid_argument);
}

TEST_CASE("extension keeps behaviour on existing variants") {
  const PolicyModel base(tiny_config(), 6);
  const PolicyModel ext = eal_extend(base);
  CHECK(ext.config().mixed_backhaul_features);
  CHECK(ext.parameters().scalar_count() == base.parameters().scalar_count() + 3 * 8);
  for (const std::string v : {"CVRP", "OVRPBLTW", "VRPBTW"}) {
    const Instance x = arc::test::make_instance(v, 7, 2);
    const EncodedInstance eb = encode(base, x);
    const EncodedInstance ee = encode(ext, x);
    CHECK(eb.f == ee.f);
    const auto tb = rollout(base, x, {DecodeMode::Greedy, 4});
    const auto te = rollout(ext, x, {DecodeMode::Greedy, 4});
    for (int r = 0; r < 4; ++r) CHECK(tb[r].actions == te[r].actions);
  }
  CHECK_NOTHROW(rollout(ext, arc::test::make_instance("OVRPMBLTW", 7, 3), {DecodeMode::Greedy, 0}));
  CHECK_THROWS_AS(eal_extend(ext), std::invalid_argument);
  CHECK_THROWS_AS(eal_extend(base, Attribute::TW), std::invalid_argument);

  const auto mask = adapter_only_mask(ext);
  int trainable = 0;
  for (bool f : mask) trainable += f ? 0 : 1;
  CHECK(trainable == 2);
}

TEST_CASE("few-shot adaptation") {
  TrainConfig cfg = quick_config();
  cfg.variant_set = {"VRPMB", "OVRPMBTW"};
  cfg.epochs = 1;
  {
    TrainState state(PolicyModel(tiny_config(), 7), cfg);
    CHECK_THROWS_AS(few_shot_adapt(state, cfg), std::invalid_argument);
  }
  TrainState state(eal_extend(PolicyModel(tiny_config(), 7)), cfg);
  const ParameterSet before = state.model.parameters();
  AdaptOptions opts;
  opts.freeze_base = true;
  opts.eval_per_variant = 2;
  opts.non_mb_variants = {"CVRP"};
  const AdaptReport rep = few_shot_adapt(state, cfg, opts);
  CHECK(rep.pre.size() == 2);
  CHECK(rep.post.size() == 2);
  CHECK(rep.non_mb_pre.size() == 1);
  CHECK(rep.epochs.size() == 1);
  const auto mask = adapter_only_mask(state.model);
  int changed = 0;
  for (int s = 0; s < before.size(); ++s) {
    if (mask[s]) {
      CHECK(state.model.parameters().value(s) == before.value(s));
    } else if (!(state.model.parameters().value(s) == before.value(s))) {
      ++changed;
    }
  }
  CHECK(changed == 2);
}
