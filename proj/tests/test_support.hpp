#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "arc/policy_model.hpp"
#include "arc/problem.hpp"
#include "arc/routing_env.hpp"

namespace arc::test {

inline Instance make_instance(const std::string& variant, int n, std::uint64_t seed) {
  GenerationConfig g;
  g.n = n;
  g.variant_name = variant;
  g.seed = seed;
  return generate_instance(g);
}

inline ModelConfig tiny_config() {
  ModelConfig c;
  c.embed_dim = 8;
  c.heads = 2;
  c.embedder_layers = 1;
  c.mixer_layers = 1;
  c.ff_hidden = 16;
  return c;
}

inline ModelConfig small_config() {
  ModelConfig c;
  c.embed_dim = 32;
  c.heads = 4;
  c.embedder_layers = 2;
  c.mixer_layers = 1;
  c.ff_hidden = 64;
  return c;
}

/// Uniformly random feasible action at every step until done.
inline Solution random_rollout(const RoutingEnv& env, std::mt19937_64& rng) {
  EnvState s = env.reset();
  while (!env.is_done(s)) {
    const auto mask = env.feasible_actions(s);
    std::vector<int> options;
    for (std::size_t j = 0; j < mask.size(); ++j)
      if (mask[j]) options.push_back(static_cast<int>(j));
    std::uniform_int_distribution<std::size_t> pick(0, options.size() - 1);
    env.apply(s, options[pick(rng)]);
  }
  return env.finalize(s);
}

}  // namespace arc::test
