#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "arc/problem.hpp"
#include "arc/routing_env.hpp"

namespace arc {

/// A CVRPLib instance as written in its TSPLIB file. Nodes keep file order
/// (file id k is index k-1).
struct BenchmarkInstance {
  std::string name;
  std::string comment;
  std::string type = "CVRP";
  int dimension = 0;
  int capacity = 0;
  std::string edge_weight_type = "EUC_2D";
  std::vector<std::pair<double, double>> coords;
  std::vector<int> demands;
  int depot = 0;
  std::optional<double> best_known;

  friend bool operator==(const BenchmarkInstance&, const BenchmarkInstance&) = default;
};

/// Throws FormatError on a missing section or keyword, inconsistent
/// dimension, unknown node ids, several depots, or an EDGE_WEIGHT_TYPE other
/// than EUC_2D. A best-known value is picked up from COMMENT when it reads
/// "Optimal value: X" or "Best value: X".
BenchmarkInstance parse_vrplib(std::string_view text);
std::string write_vrplib(const BenchmarkInstance& b);

/// Reads `path` and, when present, the "Cost" line of the sibling .sol file
/// as best-known value.
BenchmarkInstance load_vrplib_file(const std::filesystem::path& path);
/// Every *.vrp file in `dir`, sorted by file name.
std::vector<BenchmarkInstance> load_vrplib_directory(const std::filesystem::path& dir);

/// Best-known cost from the text of a .sol file ("Cost <value>").
std::optional<double> parse_solution_cost(std::string_view text);

struct NormalizedBenchmark {
  /// Depot at node 0, customers in file order.
  Instance instance;
  /// Raw distance = normalized distance * scale.
  double scale = 1.0;
  double offset_x = 0.0;
  double offset_y = 0.0;
  /// File index (0-based) of every instance node.
  std::vector<int> file_index;
};

/// Shifts to the origin and divides both axes by the larger extent; demands
/// are divided by capacity. Throws std::invalid_argument on zero extent.
NormalizedBenchmark normalize_instance(const BenchmarkInstance& b);

/// Integer cost with each arc rounded to the nearest integer. `tau` uses
/// the node numbering of normalize_instance(). Throws std::invalid_argument
/// when tau misses or repeats a customer or overloads a route.
long long benchmark_cost(const BenchmarkInstance& b, const Solution& tau);

/// 100 * (obj - ref) / ref. Throws std::invalid_argument for ref <= 0.
double gap(double obj, double ref);

/// CVRPLib set letter (A, B, E, F, M, P, X) from an instance name, or "other".
std::string benchmark_group(std::string_view name);

struct GroupSummary {
  int instances = 0;
  double mean_gap = 0.0;
};

/// Mean gap per benchmark_group of (name, gap) rows.
std::map<std::string, GroupSummary> group_gaps(const std::vector<std::pair<std::string, double>>& rows);

}  // namespace arc
