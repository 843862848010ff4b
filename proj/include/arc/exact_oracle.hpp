#pragma once

#include <cstddef>
#include <functional>

#include "arc/problem.hpp"
#include "arc/routing_env.hpp"

namespace arc {

inline constexpr int kOracleMaxCustomers = 8;
/// Costs within this absolute distance count as ties.
inline constexpr double kOracleTieTolerance = 1e-12;

struct OracleResult {
  Solution solution;
  double cost = 0.0;
  std::size_t feasible_count = 0;
};

/// Routes reordered by first customer. Every route set has exactly one
/// canonical sequence, and it is the lexicographically smallest one.
Solution canonicalize(const Solution& tau);

/// Calls f once per route set of x's customers (canonical sequences, no
/// feasibility filtering).
void for_each_route_set(int n, const std::function<void(const Solution&)>& f);

/// Minimum-cost feasible solution by exhaustive enumeration filtered
/// through validate(); ties go to the lexicographically smallest sequence.
/// Throws std::invalid_argument for n > limit and std::runtime_error when
/// nothing is feasible.
OracleResult exact_oracle(const Instance& x, int limit = kOracleMaxCustomers);

}  // namespace arc
