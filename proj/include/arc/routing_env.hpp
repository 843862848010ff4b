#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "arc/problem.hpp"

namespace arc {

/// Slack on every <= feasibility comparison.
inline constexpr double kFeasibilityTolerance = 1e-9;

/// Node sequence starting and ending at the depot; depot tokens separate
/// routes.
struct Solution {
  std::vector<int> seq;

  /// Customer lists of each route, depot tokens stripped.
  std::vector<std::vector<int>> routes() const;

  friend bool operator==(const Solution&, const Solution&) = default;
  friend auto operator<=>(const Solution&, const Solution&) = default;
};

/// Dynamic decoding state. Capacities are fractions of Q, so a fresh
/// vehicle starts with 1.0 in both pools.
struct EnvState {
  std::vector<std::uint8_t> visited;  // indexed by node, depot slot unused
  int num_visited = 0;
  int position = 0;
  double cap_linehaul = 1.0;
  double cap_backhaul = 1.0;
  double time = 0.0;
  double length = 0.0;
  bool backhaul_on_route = false;
  std::vector<int> partial;
};

enum class Violation {
  None,
  Terminal,
  OutOfRange,
  DepotRepeat,
  Visited,
  LinehaulCapacity,
  BackhaulCapacity,
  BackhaulPrecedence,
  TimeWindow,
  DepotReturnTime,
  DurationLimit,
};

std::string_view violation_name(Violation v);

class InfeasibleAction : public std::invalid_argument {
 public:
  InfeasibleAction(int action, Violation v);
  Violation violation() const { return violation_; }

 private:
  Violation violation_;
};

/// Decoding environment bound to one instance. Cheap to copy (shared
/// immutable data); all methods are const and thread-safe.
class RoutingEnv {
 public:
  explicit RoutingEnv(Instance x);
  explicit RoutingEnv(std::shared_ptr<const Instance> x);

  const Instance& instance() const { return *instance_; }
  const DistanceMatrix& distances() const { return *distances_; }
  int num_nodes() const { return instance_->n + 1; }

  EnvState reset() const;
  bool is_done(const EnvState& s) const;

  /// Why action a is not allowed in state s (Violation::None when it is).
  Violation check_action(const EnvState& s, int a) const;

  /// One flag per node 0..n. Throws on a terminal state.
  std::vector<std::uint8_t> feasible_actions(const EnvState& s) const;
  void feasible_actions(const EnvState& s, std::span<std::uint8_t> mask) const;

  EnvState step(EnvState s, int a) const;
  /// Same as step() but mutates s; throws InfeasibleAction.
  void apply(EnvState& s, int a) const;

  /// Closes the sequence with a depot token. Throws unless is_done().
  Solution finalize(const EnvState& s) const;

 private:
  std::shared_ptr<const Instance> instance_;
  std::shared_ptr<const DistanceMatrix> distances_;
};

/// Total travel distance; arcs into the depot are free on open routes.
/// Throws std::invalid_argument if a customer is missing or repeated.
double solution_cost(const Instance& x, const Solution& tau);
inline double reward(const Instance& x, const Solution& tau) { return -solution_cost(x, tau); }

struct Verdict {
  bool feasible = true;
  std::vector<std::string> violations;
};

/// Re-checks a solution from its route-set view with its own distance and
/// timeline computations.
Verdict validate(const Instance& x, const Solution& tau);

}  // namespace arc
