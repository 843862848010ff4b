#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "arc/tensor.hpp"

namespace arc {

/// Ordered collection of named tensors. Slot indices are stable for the
/// lifetime of the set and double as autodiff parameter slots.
class ParameterSet {
 public:
  int add(std::string name, Matrix value);

  int size() const { return static_cast<int>(values_.size()); }
  const std::string& name(int slot) const { return names_[slot]; }
  const Matrix& value(int slot) const { return values_[slot]; }
  Matrix& value(int slot) { return values_[slot]; }
  const std::vector<std::string>& names() const { return names_; }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  /// Throws std::out_of_range for unknown names.
  int slot(const std::string& name) const;

  /// Total scalar count.
  std::size_t scalar_count() const;
  bool all_finite() const;
  /// FNV-1a over names, shapes and the raw bytes of every value.
  std::uint64_t fingerprint() const;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::unordered_map<std::string, int> index_;
};

/// One gradient matrix per parameter slot, same shapes as the parameters.
class GradientSet {
 public:
  GradientSet() = default;
  explicit GradientSet(const ParameterSet& like);

  int size() const { return static_cast<int>(grads_.size()); }
  Matrix& operator[](int slot) { return grads_[slot]; }
  const Matrix& operator[](int slot) const { return grads_[slot]; }

  void zero();
  /// this += scale * other, slot by slot in ascending order.
  void add(const GradientSet& other, double scale = 1.0);
  void scale(double s);
  double global_norm() const;
  bool all_finite() const;

 private:
  std::vector<Matrix> grads_;
};

}  // namespace arc
