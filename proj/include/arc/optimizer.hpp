#pragma once

#include <cstdint>

#include "arc/parameters.hpp"

namespace arc {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global-norm clip threshold; <= 0 disables clipping.
  double clip_norm = 1.0;
};

class Adam {
 public:
  Adam() = default;
  Adam(const ParameterSet& params, AdamConfig config);

  /// Clips g in place, then updates p. `lr_scale` multiplies the base rate.
  /// Returns the pre-clip gradient norm. Slots listed in `frozen` (true)
  /// are left untouched.
  double step(ParameterSet& p, GradientSet& g, double lr_scale = 1.0, const std::vector<bool>* frozen = nullptr);

  const AdamConfig& config() const { return config_; }
  std::int64_t steps() const { return t_; }
  const GradientSet& first_moment() const { return m_; }
  const GradientSet& second_moment() const { return v_; }
  GradientSet& first_moment() { return m_; }
  GradientSet& second_moment() { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  AdamConfig config_;
  GradientSet m_;
  GradientSet v_;
  std::int64_t t_ = 0;
};

/// Scales g so its global norm is at most max_norm. Returns the prior norm.
double clip_global_norm(GradientSet& g, double max_norm);

}  // namespace arc
