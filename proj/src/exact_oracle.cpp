#include "arc/exact_oracle.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <vector>

namespace arc {

Solution canonicalize(const Solution& tau) {
  auto routes = tau.routes();
  std::sort(routes.begin(), routes.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  Solution out;
  out.seq.push_back(0);
  for (const auto& r : routes) {
    out.seq.insert(out.seq.end(), r.begin(), r.end());
    out.seq.push_back(0);
  }
  return out;
}

namespace {

// Depth-first over canonical sequences. `first` is the first customer of
// the open route; new routes must start above it.
struct Enumerator {
  int n;
  const std::function<void(const Solution&)>& emit;
  std::vector<std::uint8_t> used;
  Solution cur;

  void extend(int placed, int first) {
    if (placed == n) {
      cur.seq.push_back(0);
      emit(cur);
      cur.seq.pop_back();
      return;
    }
    for (int c = 1; c <= n; ++c) {
      if (used[c]) continue;
      used[c] = 1;
      cur.seq.push_back(c);
      extend(placed + 1, first);
      cur.seq.pop_back();
      used[c] = 0;
    }
    cur.seq.push_back(0);
    for (int c = first + 1; c <= n; ++c) {
      if (used[c]) continue;
      used[c] = 1;
      cur.seq.push_back(c);
      extend(placed + 1, c);
      cur.seq.pop_back();
      used[c] = 0;
    }
    cur.seq.pop_back();
  }

  void run_from(int first) {
    used.assign(static_cast<std::size_t>(n) + 1, 0);
    used[first] = 1;
    cur.seq = {0, first};
    extend(1, first);
  }
};

}  // namespace

void for_each_route_set(int n, const std::function<void(const Solution&)>& f) {
  if (n < 1) throw std::invalid_argument("for_each_route_set: n must be >= 1");
  for (int first = 1; first <= n; ++first) {
    Enumerator e{n, f, {}, {}};
    e.run_from(first);
  }
}

OracleResult exact_oracle(const Instance& x, int limit) {
  if (x.n > limit)
    throw std::invalid_argument("exact_oracle: n = " + std::to_string(x.n) + " exceeds the limit " +
                                std::to_string(limit));
  const int n = x.n;
  // Feasible solutions and their costs, one list per first customer.
  std::vector<std::vector<std::pair<double, Solution>>> feasible(static_cast<std::size_t>(n) + 1);
#pragma omp parallel for schedule(dynamic)
  for (int first = 1; first <= n; ++first) {
    auto& out = feasible[first];
    const std::function<void(const Solution&)> visit = [&](const Solution& s) {
      if (validate(x, s).feasible) out.emplace_back(solution_cost(x, s), s);
    };
    Enumerator e{n, visit, {}, {}};
    e.run_from(first);
  }

  OracleResult r;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& branch : feasible) {
    r.feasible_count += branch.size();
    for (const auto& [c, s] : branch) best = std::min(best, c);
  }
  if (r.feasible_count == 0) throw std::runtime_error("exact_oracle: no feasible solution exists");
  const Solution* pick = nullptr;
  for (const auto& branch : feasible)
    for (const auto& [c, s] : branch)
      if (c <= best + kOracleTieTolerance && (!pick || s.seq < pick->seq)) {
        pick = &s;
        r.cost = c;
      }
  r.solution = *pick;
  return r;
}

}  // namespace arc
