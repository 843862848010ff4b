#include "arc/parameters.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace arc {

int ParameterSet::add(std::string name, Matrix value) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  const int slot = size();
  index_.emplace(name, slot);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return slot;
}

int ParameterSet::slot(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const Matrix& m : values_) n += m.size();
  return n;
}

bool ParameterSet::all_finite() const {
  for (const Matrix& m : values_)
    for (double v : m.storage())
      if (!std::isfinite(v)) return false;
  return true;
}

std::uint64_t ParameterSet::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (int s = 0; s < size(); ++s) {
    mix(names_[s].data(), names_[s].size());
    const int shape[2] = {values_[s].rows(), values_[s].cols()};
    mix(shape, sizeof(shape));
    mix(values_[s].data(), values_[s].size() * sizeof(double));
  }
  return h;
}

GradientSet::GradientSet(const ParameterSet& like) {
  grads_.reserve(static_cast<std::size_t>(like.size()));
  for (int s = 0; s < like.size(); ++s) grads_.emplace_back(like.value(s).rows(), like.value(s).cols());
}

void GradientSet::zero() {
  for (Matrix& g : grads_) g.fill(0.0);
}

void GradientSet::add(const GradientSet& other, double scale) {
  if (other.size() != size()) throw std::invalid_argument("GradientSet::add: size mismatch");
  for (int s = 0; s < size(); ++s) {
    Matrix& dst = grads_[s];
    const Matrix& src = other.grads_[s];
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
  }
}

void GradientSet::scale(double s) {
  for (Matrix& g : grads_)
    for (double& v : g.storage()) v *= s;
}

double GradientSet::global_norm() const {
  double ss = 0.0;
  for (const Matrix& g : grads_)
    for (double v : g.storage()) ss += v * v;
  return std::sqrt(ss);
}

bool GradientSet::all_finite() const {
  for (const Matrix& g : grads_)
    for (double v : g.storage())
      if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace arc
