#include "arc/routing_env.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace arc {

std::vector<std::vector<int>> Solution::routes() const {
  std::vector<std::vector<int>> out;
  std::vector<int> current;
  for (int v : seq) {
    if (v == 0) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(v);
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::string_view violation_name(Violation v) {
  switch (v) {
    case Violation::None: return "none";
    case Violation::Terminal: return "state is terminal";
    case Violation::OutOfRange: return "node index out of range";
    case Violation::DepotRepeat: return "consecutive depot visits";
    case Violation::Visited: return "customer already visited";
    case Violation::LinehaulCapacity: return "linehaul capacity";
    case Violation::BackhaulCapacity: return "backhaul capacity";
    case Violation::BackhaulPrecedence: return "backhaul precedence";
    case Violation::TimeWindow: return "time window";
    case Violation::DepotReturnTime: return "depot return time";
    case Violation::DurationLimit: return "duration limit";
  }
  return "?";
}

InfeasibleAction::InfeasibleAction(int action, Violation v)
    : std::invalid_argument("action " + std::to_string(action) +
                            " infeasible: " + std::string(violation_name(v))),
      violation_(v) {}

RoutingEnv::RoutingEnv(Instance x) : RoutingEnv(std::make_shared<const Instance>(std::move(x))) {}

RoutingEnv::RoutingEnv(std::shared_ptr<const Instance> x)
    : instance_(std::move(x)), distances_(std::make_shared<const DistanceMatrix>(*instance_)) {}

EnvState RoutingEnv::reset() const {
  EnvState s;
  s.visited.assign(static_cast<std::size_t>(num_nodes()), 0);
  return s;
}

bool RoutingEnv::is_done(const EnvState& s) const { return s.num_visited == instance_->n; }

Violation RoutingEnv::check_action(const EnvState& s, int a) const {
  if (is_done(s)) return Violation::Terminal;
  if (a < 0 || a >= num_nodes()) return Violation::OutOfRange;
  if (a == 0) return s.position == 0 ? Violation::DepotRepeat : Violation::None;
  if (s.visited[a]) return Violation::Visited;

  const Instance& x = *instance_;
  const NodeFeatures& c = x.customers[a - 1];
  const AttributeIndicator& ind = x.indicator;
  constexpr double tol = kFeasibilityTolerance;

  if (c.ql > 0.0 && c.ql > s.cap_linehaul + tol) return Violation::LinehaulCapacity;
  if (c.qb > 0.0 && c.qb > s.cap_backhaul + tol) return Violation::BackhaulCapacity;
  if (ind.b && s.backhaul_on_route && c.qb == 0.0) return Violation::BackhaulPrecedence;

  const DistanceMatrix& d = *distances_;
  const double leg = d(s.position, a);
  if (ind.tw) {
    const double arrival = s.time + leg;
    if (arrival > c.l + tol) return Violation::TimeWindow;
    if (!ind.o && std::max(arrival, c.e) + c.s + d(a, 0) > x.globals.horizon + tol)
      return Violation::DepotReturnTime;
  }
  if (ind.l) {
    const double needed = s.length + leg + (ind.o ? 0.0 : d(a, 0));
    if (needed > x.globals.duration_limit + tol) return Violation::DurationLimit;
  }
  return Violation::None;
}

void RoutingEnv::feasible_actions(const EnvState& s, std::span<std::uint8_t> mask) const {
  if (is_done(s)) throw std::invalid_argument("feasible_actions: state is terminal");
  if (mask.size() != static_cast<std::size_t>(num_nodes()))
    throw std::invalid_argument("feasible_actions: mask size mismatch");
  bool any_customer = false;
  for (int j = 1; j < num_nodes(); ++j) {
    mask[j] = check_action(s, j) == Violation::None;
    any_customer = any_customer || mask[j];
  }
  mask[0] = s.position != 0;
  if (!any_customer && s.position == 0) {
    // Unreachable customer from an empty vehicle: no action can make progress.
    throw std::runtime_error("feasible_actions: dead end at depot (an unvisited customer is "
                             "infeasible even for a fresh vehicle)");
  }
}

std::vector<std::uint8_t> RoutingEnv::feasible_actions(const EnvState& s) const {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(num_nodes()), 0);
  feasible_actions(s, mask);
  return mask;
}

void RoutingEnv::apply(EnvState& s, int a) const {
  const Violation v = check_action(s, a);
  if (v != Violation::None) throw InfeasibleAction(a, v);
  const DistanceMatrix& d = *distances_;
  s.partial.push_back(a);
  if (a == 0) {
    s.cap_linehaul = 1.0;
    s.cap_backhaul = 1.0;
    s.time = 0.0;
    s.length = 0.0;
    s.backhaul_on_route = false;
    s.position = 0;
    return;
  }
  const Instance& x = *instance_;
  const NodeFeatures& c = x.customers[a - 1];
  const double leg = d(s.position, a);
  if (c.ql > 0.0) s.cap_linehaul -= c.ql;
  if (c.qb > 0.0) {
    s.cap_backhaul -= c.qb;
    s.backhaul_on_route = true;
  }
  if (x.indicator.tw) s.time = std::max(s.time + leg, c.e) + c.s;
  s.length += leg;
  s.visited[a] = 1;
  ++s.num_visited;
  s.position = a;
}

EnvState RoutingEnv::step(EnvState s, int a) const {
  apply(s, a);
  return s;
}

Solution RoutingEnv::finalize(const EnvState& s) const {
  if (!is_done(s)) throw std::logic_error("finalize: customers remain unvisited");
  Solution out;
  out.seq.reserve(s.partial.size() + 2);
  out.seq.push_back(0);
  for (int v : s.partial) {
    if (v == 0 && out.seq.back() == 0) continue;
    out.seq.push_back(v);
  }
  if (out.seq.back() != 0) out.seq.push_back(0);
  return out;
}

namespace {

void check_cover(const Instance& x, const Solution& tau) {
  std::vector<int> count(static_cast<std::size_t>(x.n + 1), 0);
  for (int v : tau.seq) {
    if (v < 0 || v > x.n) throw std::invalid_argument("solution references node " + std::to_string(v));
    ++count[v];
  }
  for (int i = 1; i <= x.n; ++i) {
    if (count[i] != 1)
      throw std::invalid_argument("customer " + std::to_string(i) + " appears " +
                                  std::to_string(count[i]) + " times");
  }
}

}  // namespace

double solution_cost(const Instance& x, const Solution& tau) {
  check_cover(x, tau);
  double cost = 0.0;
  for (std::size_t k = 1; k < tau.seq.size(); ++k) {
    const int from = tau.seq[k - 1];
    const int to = tau.seq[k];
    if (to == 0 && x.globals.open) continue;
    const NodeFeatures& a = x.node(from);
    const NodeFeatures& b = x.node(to);
    cost += euclidean(a.x, a.y, b.x, b.y);
  }
  return cost;
}

Verdict validate(const Instance& x, const Solution& tau) {
  Verdict verdict;
  auto report = [&](const std::string& msg) {
    verdict.feasible = false;
    verdict.violations.push_back(msg);
  };
  constexpr double tol = kFeasibilityTolerance;

  if (tau.seq.empty() || tau.seq.front() != 0 || tau.seq.back() != 0)
    report("sequence must start and end at the depot");
  for (std::size_t k = 1; k < tau.seq.size(); ++k) {
    if (tau.seq[k] == 0 && tau.seq[k - 1] == 0) report("empty route at position " + std::to_string(k));
  }
  std::vector<int> seen(static_cast<std::size_t>(x.n + 1), 0);
  for (int v : tau.seq) {
    if (v < 0 || v > x.n) {
      report("unknown node " + std::to_string(v));
      return verdict;
    }
    ++seen[v];
  }
  for (int i = 1; i <= x.n; ++i) {
    if (seen[i] == 0) report("customer " + std::to_string(i) + " not visited");
    if (seen[i] > 1) report("customer " + std::to_string(i) + " visited " + std::to_string(seen[i]) + " times");
  }

  const auto& ind = x.indicator;
  const double Q = x.globals.capacity;
  auto dist = [&](int i, int j) {
    const NodeFeatures& a = x.node(i);
    return std::hypot(a.x - x.node(j).x, a.y - x.node(j).y);
  };

  const auto routes = tau.routes();
  for (std::size_t r = 0; r < routes.size(); ++r) {
    const auto& route = routes[r];
    const std::string tag = " on route " + std::to_string(r);
    int linehaul = 0;
    int backhaul = 0;
    double linehaul_frac = 0.0;
    double backhaul_frac = 0.0;
    for (int v : route) {
      linehaul += x.node(v).demand_linehaul;
      backhaul += x.node(v).demand_backhaul;
      linehaul_frac += x.node(v).ql;
      backhaul_frac += x.node(v).qb;
    }
    if (linehaul > Q || linehaul_frac > 1.0 + tol)
      report("linehaul load " + std::to_string(linehaul) + " exceeds capacity" + tag);
    if (backhaul > Q || backhaul_frac > 1.0 + tol)
      report("backhaul load " + std::to_string(backhaul) + " exceeds capacity" + tag);

    if (ind.b) {
      bool seen_backhaul = false;
      for (int v : route) {
        const bool is_backhaul = x.node(v).demand_backhaul > 0;
        if (!is_backhaul && seen_backhaul) {
          report("linehaul customer " + std::to_string(v) + " after a backhaul" + tag);
          break;
        }
        seen_backhaul = seen_backhaul || is_backhaul;
      }
    }

    if (ind.tw) {
      double clock = 0.0;
      int prev = 0;
      for (int v : route) {
        const NodeFeatures& c = x.node(v);
        const double arrive = clock + dist(prev, v);
        if (arrive > c.l + tol) {
          std::ostringstream os;
          os << "customer " << v << " reached at " << arrive << " after window close " << c.l << tag;
          report(os.str());
        }
        clock = std::max(arrive, c.e) + c.s;
        prev = v;
      }
      if (!ind.o && clock + dist(prev, 0) > x.globals.horizon + tol)
        report("depot reached after horizon" + tag);
    }

    if (ind.l) {
      double length = dist(0, route.front());
      for (std::size_t k = 1; k < route.size(); ++k) length += dist(route[k - 1], route[k]);
      if (!ind.o) length += dist(route.back(), 0);
      if (length > x.globals.duration_limit + tol) {
        std::ostringstream os;
        os << "route length " << length << " exceeds limit " << x.globals.duration_limit << tag;
        report(os.str());
      }
    }
  }
  return verdict;
}

}  // namespace arc
