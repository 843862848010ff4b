#include "arc/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace arc {

Adam::Adam(const ParameterSet& params, AdamConfig config) : config_(config), m_(params), v_(params) {
  if (!(config.learning_rate > 0.0)) throw std::invalid_argument("Adam: learning_rate must be > 0");
  if (config.beta1 < 0.0 || config.beta1 >= 1.0 || config.beta2 < 0.0 || config.beta2 >= 1.0)
    throw std::invalid_argument("Adam: betas must lie in [0, 1)");
}

double clip_global_norm(GradientSet& g, double max_norm) {
  const double norm = g.global_norm();
  if (max_norm > 0.0 && norm > max_norm) g.scale(max_norm / norm);
  return norm;
}

double Adam::step(ParameterSet& p, GradientSet& g, double lr_scale, const std::vector<bool>* frozen) {
  if (g.size() != p.size() || m_.size() != p.size()) throw std::invalid_argument("Adam::step: slot count mismatch");
  if (frozen && static_cast<int>(frozen->size()) != p.size())
    throw std::invalid_argument("Adam::step: frozen mask size mismatch");
  const double norm = clip_global_norm(g, config_.clip_norm);
  ++t_;
  const double lr = config_.learning_rate * lr_scale;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (int s = 0; s < p.size(); ++s) {
    if (frozen && (*frozen)[s]) continue;
    Matrix& w = p.value(s);
    Matrix& m = m_[s];
    Matrix& v = v_[s];
    const Matrix& gs = g[s];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gs[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gs[i] * gs[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
  return norm;
}

}  // namespace arc
