#include <cmath>
#include <numeric>
#include <random>

#include "arc/objectives.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace arc;
using arc::test::make_instance;
using arc::test::tiny_config;

namespace {

AttributeEntry entry(std::vector<double> alpha, Attribute label, int origin) {
  return AttributeEntry{std::move(alpha), label, origin};
}

AttributePool random_pool(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> g;
  AttributePool pool;
  const Attribute labels[] = {Attribute::O, Attribute::TW, Attribute::O, Attribute::L, Attribute::TW, Attribute::O,
                              Attribute::L};
  int origin = 0;
  for (Attribute a : labels) {
    std::vector<double> v(dim);
    for (double& x : v) x = g(rng);
    pool.entries.push_back(entry(v, a, origin++));
  }
  return pool;
}

// Textbook InfoNCE for one anchor straight from the definition.
double naive_info_nce(double sp, const std::vector<double>& sn, double beta) {
  double denom = std::exp(sp / beta);
  for (double s : sn) denom += std::exp(s / beta);
  return -std::log(std::exp(sp / beta) / denom);
}

double naive_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

std::vector<Instance> mixed_batch(int n, std::uint64_t seed) {
  const std::vector<std::string> variants = {"OVRPTW", "VRPL", "CVRP", "VRPBTW", "OVRPL", "VRPTW"};
  std::vector<Instance> batch;
  for (std::size_t i = 0; i < variants.size(); ++i) batch.push_back(make_instance(variants[i], n, seed + i));
  return batch;
}

}  // namespace

TEST_CASE("cosine similarity") {
  const std::vector<double> a = {1, 0, 0};
  const std::vector<double> b = {0, 2, 0};
  const std::vector<double> c = {-3, 0, 0};
  const std::vector<double> z = {0, 0, 0};
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
  CHECK(cosine_similarity(a, b) == 0.0);
  CHECK(cosine_similarity(a, c) == doctest::Approx(-1.0));
  CHECK(cosine_similarity(a, z) == 0.0);
  CHECK(cosine_similarity(std::vector<double>{1, 2}, std::vector<double>{2, 1}) == doctest::Approx(0.8));
  CHECK_THROWS_AS(cosine_similarity(a, std::vector<double>{1, 2}), std::invalid_argument);
}

TEST_CASE("InfoNCE term against the definition") {
  CHECK(info_nce_term(0.5, std::vector<double>{}, 0.12) == doctest::Approx(0.0));
  CHECK(info_nce_term(0.3, std::vector<double>{0.3}, 1.0) == doctest::Approx(std::log(2.0)));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int rep = 0; rep < 50; ++rep) {
    const double sp = u(rng);
    std::vector<double> sn(5);
    for (double& s : sn) s = u(rng);
    for (double beta : {0.12, 0.5, 1.0}) CHECK(info_nce_term(sp, sn, beta) == doctest::Approx(naive_info_nce(sp, sn, beta)).epsilon(1e-12));
  }
  // Large logits stay finite where the textbook form overflows.
  CHECK(std::isfinite(info_nce_term(1.0, std::vector<double>{-1.0, 0.99}, 1e-4)));
  CHECK(info_nce_term(1.0, std::vector<double>{-1.0}, 1e-3) >= 0.0);
  CHECK_THROWS_AS(info_nce_term(0.1, std::vector<double>{}, 0.0), std::invalid_argument);
}

TEST_CASE("compositional loss equals the mean of per-anchor terms") {
  std::mt19937_64 rng(2);
  const AttributePool pool = random_pool(rng, 6);
  const auto r = compositional_loss(pool, 0.12, 7);
  REQUIRE(r.used_anchors > 0);
  double sum = 0.0;
  int used = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const int p = r.positives[i];
    if (p < 0) continue;
    CHECK(pool.entries[p].label == pool.entries[i].label);
    CHECK(pool.entries[p].origin != pool.entries[i].origin);
    std::vector<double> negs;
    for (const auto& e : pool.entries)
      if (e.label != pool.entries[i].label) negs.push_back(naive_cosine(pool.entries[i].alpha, e.alpha));
    sum += naive_info_nce(naive_cosine(pool.entries[i].alpha, pool.entries[p].alpha), negs, 0.12);
    ++used;
  }
  CHECK(used == r.used_anchors);
  CHECK(r.loss == doctest::Approx(sum / used).epsilon(1e-12));
  CHECK(r.loss >= 0.0);
}

TEST_CASE("compositional loss gradient matches finite differences") {
  std::mt19937_64 rng(3);
  AttributePool pool = random_pool(rng, 5);
  const auto r = compositional_loss(pool, 0.12, 11);
  const double h = 1e-6;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (std::size_t k = 0; k < 5; ++k) {
      const double keep = pool.entries[i].alpha[k];
      pool.entries[i].alpha[k] = keep + h;
      const double up = compositional_loss(pool, 0.12, r.positives).loss;
      pool.entries[i].alpha[k] = keep - h;
      const double down = compositional_loss(pool, 0.12, r.positives).loss;
      pool.entries[i].alpha[k] = keep;
      CHECK(r.grad[i][k] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5).scale(1e-6));
    }
  }
}

TEST_CASE("compositional loss is invariant to a common rotation and scaling") {
  std::mt19937_64 rng(4);
  const AttributePool pool = random_pool(rng, 3);
  const double c = std::cos(0.7), s = std::sin(0.7);
  AttributePool rotated = pool;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& a = pool.entries[i].alpha;
    rotated.entries[i].alpha = {3.0 * (c * a[0] - s * a[1]), 3.0 * (s * a[0] + c * a[1]), 3.0 * a[2]};
  }
  const auto r1 = compositional_loss(pool, 0.12, 5);
  const auto r2 = compositional_loss(rotated, 0.12, 5);
  CHECK(r1.positives == r2.positives);
  CHECK(r2.loss == doctest::Approx(r1.loss).epsilon(1e-12));
}

TEST_CASE("anchors without a cross-instance peer are skipped") {
  AttributePool pool;
  pool.entries.push_back(entry({1, 0}, Attribute::O, 0));
  pool.entries.push_back(entry({0, 1}, Attribute::TW, 0));
  pool.entries.push_back(entry({1, 1}, Attribute::O, 1));
  const auto r = compositional_loss(pool, 0.12, 1);
  CHECK(r.positives == std::vector<int>{2, -1, 0});
  CHECK(r.used_anchors == 2);
  CHECK(r.skipped_anchors == 1);
  CHECK_FALSE(r.degenerate);

  // Same-origin positives are rejected.
  pool.entries[2].origin = 0;
  CHECK_THROWS_AS(compositional_loss(pool, 0.12, std::vector<int>{2, -1, 0}), std::invalid_argument);
}

TEST_CASE("a pool with a single label is degenerate") {
  AttributePool pool;
  pool.entries.push_back(entry({1, 0}, Attribute::TW, 0));
  pool.entries.push_back(entry({0, 1}, Attribute::TW, 1));
  const auto r = compositional_loss(pool, 0.12, 1);
  CHECK(r.degenerate);
  CHECK(r.loss == 0.0);
  CHECK(r.used_anchors == 0);
  const auto empty = compositional_loss(AttributePool{}, 0.12, 1);
  CHECK(empty.degenerate);
  CHECK(empty.loss == 0.0);
}

TEST_CASE("attribute pool holds one entry per active attribute") {
  const PolicyModel model(tiny_config(), 1);
  const std::vector<Instance> batch = {make_instance("OVRPTW", 6, 1), make_instance("OVRPTW", 6, 2),
                                       make_instance("CVRP", 6, 3)};
  const AttributePool pool = build_attribute_pool(model, batch);
  REQUIRE(pool.size() == 4);
  CHECK(pool.entries[0].label == Attribute::O);
  CHECK(pool.entries[1].label == Attribute::TW);
  CHECK(pool.entries[2].origin == 1);
  CHECK(pool.distinct_labels() == 2);
  for (const auto& e : pool.entries) CHECK(e.alpha.size() == 8);
}

TEST_CASE("attribute vector is zero for an inactive attribute") {
  const PolicyModel model(tiny_config(), 2);
  const Instance x = make_instance("VRPTW", 6, 4);
  ad::Tape t;
  const ad::Var h = encode_intrinsic(t, model, x);
  for (double v : t.value(attribute_vector(t, model, x, h, Attribute::L)).storage()) CHECK(v == 0.0);
  double norm = 0.0;
  for (double v : t.value(attribute_vector(t, model, x, h, Attribute::TW)).storage()) norm += v * v;
  CHECK(norm > 0.0);
}

TEST_CASE("shared-baseline advantages") {
  const std::vector<double> r = {-3.0, -1.0, -2.0, -2.0};
  CHECK(pomo_advantages(r) == std::vector<double>{-1.0, 1.0, 0.0, 0.0});
  const auto z = pomo_advantages(std::vector<double>{-2.5, -2.5, -2.5});
  for (double a : z) CHECK(a == 0.0);
  CHECK_THROWS_AS(pomo_advantages(std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("per-variant normalisation") {
  const std::vector<std::vector<double>> adv = {{-1.0, 1.0}, {3.0, -3.0}, {2.0, -2.0}};
  const auto out = per_variant_normalize(adv, {"CVRP", "VRPTW", "CVRP"});
  // CVRP group {-1, 1, 2, -2}: population std sqrt(2.5).
  const double s = std::sqrt(2.5) + 1e-8;
  CHECK(out[0][0] == doctest::Approx(-1.0 / s));
  CHECK(out[2][0] == doctest::Approx(2.0 / s));
  CHECK(out[1][0] == doctest::Approx(3.0 / (3.0 + 1e-8)));
  const auto zero = per_variant_normalize({{0.0, 0.0}}, {"CVRP"});
  CHECK(zero[0] == std::vector<double>{0.0, 0.0});
  CHECK_THROWS_AS(per_variant_normalize(adv, {"CVRP"}), std::invalid_argument);
}

TEST_CASE("total loss composition") {
  const PolicyModel model(tiny_config(), 3);
  const auto batch = mixed_batch(6, 10);
  LossConfig cfg;
  cfg.starts = 4;
  const LossResult full = total_loss(model, batch, cfg, 5);
  const auto& b = full.breakdown;
  CHECK(b.total == doctest::Approx(b.reinforce_term + 0.8 * b.comp_attr_term).epsilon(1e-14));
  // OVRPTW 2, VRPL 1, CVRP 0, VRPBTW 2, OVRPL 2, VRPTW 1.
  CHECK(b.pool_size == 8);
  CHECK(b.comp_attr_term > 0.0);
  CHECK(b.per_variant_stats.size() == 6);
  CHECK(full.grads.all_finite());
  CHECK(full.grads.global_norm() > 0.0);

  cfg.lambda = 0.0;
  const LossResult plain = total_loss(model, batch, cfg, 5);
  CHECK(plain.breakdown.pool_size == 0);
  CHECK(plain.breakdown.comp_attr_term == 0.0);
  CHECK(plain.breakdown.total == plain.breakdown.reinforce_term);
  CHECK(plain.breakdown.reinforce_term == b.reinforce_term);
}

TEST_CASE("pool cap subsamples entries") {
  const PolicyModel model(tiny_config(), 4);
  LossConfig cfg;
  cfg.starts = 4;
  cfg.pool_cap = 5;
  const LossResult r = total_loss(model, mixed_batch(6, 20), cfg, 1);
  CHECK(r.breakdown.pool_size == 5);
  CHECK(r.replay.kept_entries.size() == 5);
  CHECK(std::is_sorted(r.replay.kept_entries.begin(), r.replay.kept_entries.end()));
}

TEST_CASE("total loss rejects bad configurations") {
  const PolicyModel model(tiny_config(), 5);
  const auto batch = mixed_batch(4, 1);
  LossConfig cfg;
  cfg.starts = 1;
  CHECK_THROWS_AS(total_loss(model, batch, cfg, 0), std::invalid_argument);
  cfg.starts = 5;
  CHECK_THROWS_AS(total_loss(model, batch, cfg, 0), std::invalid_argument);
  cfg.starts = 2;
  CHECK_THROWS_AS(total_loss(model, {}, cfg, 0), std::invalid_argument);
}

TEST_CASE("total loss gradient matches finite differences under replay") {
  PolicyModel model(tiny_config(), 6);
  const auto batch = mixed_batch(5, 30);
  LossConfig cfg;
  cfg.starts = 3;
  const LossResult base = total_loss(model, batch, cfg, 9);
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> pick_slot(0, model.parameters().size() - 1);
  const double h = 1e-3;
  double worst = 0.0;
  for (int probe = 0; probe < 64; ++probe) {
    const int slot = pick_slot(rng);
    Matrix& w = model.parameters().value(slot);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(0, w.size() - 1)(rng);
    const double keep = w[k];
    w[k] = keep + h;
    const double up = total_loss(model, batch, cfg, 9, &base.replay, false).breakdown.total;
    w[k] = keep - h;
    const double down = total_loss(model, batch, cfg, 9, &base.replay, false).breakdown.total;
    w[k] = keep;
    const double numeric = (up - down) / (2 * h);
    const double a = base.grads[slot][k];
    worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-3}));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("parallel and serial losses agree bit for bit") {
  const PolicyModel model(tiny_config(), 7);
  const auto batch = mixed_batch(7, 40);
  LossConfig cfg;
  cfg.starts = 4;
  cfg.parallel = true;
  cfg.workers = 3;
  const LossResult p = total_loss(model, batch, cfg, 2);
  cfg.parallel = false;
  const LossResult s = total_loss(model, batch, cfg, 2);
  CHECK(p.breakdown.total == s.breakdown.total);
  CHECK(p.replay.actions == s.replay.actions);
  for (int i = 0; i < p.grads.size(); ++i) CHECK(p.grads[i] == s.grads[i]);
}

TEST_CASE("same seed gives the same loss and different seeds differ") {
  const PolicyModel model(tiny_config(), 8);
  const auto batch = mixed_batch(6, 50);
  LossConfig cfg;
  cfg.starts = 4;
  CHECK(total_loss(model, batch, cfg, 1).breakdown.total == total_loss(model, batch, cfg, 1).breakdown.total);
  CHECK(total_loss(model, batch, cfg, 1).replay.actions != total_loss(model, batch, cfg, 2).replay.actions);
}
