#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "arc/instance_io.hpp"
#include "arc/vrplib.hpp"
#include "doctest.h"

using namespace arc;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"(NAME : P-n4-k2
COMMENT : (Toy, No of trucks: 2, Optimal value: 20)
TYPE : CVRP
DIMENSION : 4
EDGE_WEIGHT_TYPE : EUC_2D
CAPACITY : 10
NODE_COORD_SECTION
 1 5 5
 2 5 10
 3 10 5
 4 0 0
DEMAND_SECTION
1 4
2 0
3 7
4 3
DEPOT_SECTION
 2
 -1
EOF
)";

}  // namespace

TEST_CASE("parse a small instance") {
  const BenchmarkInstance b = parse_vrplib(kSmall);
  CHECK(b.name == "P-n4-k2");
  CHECK(b.dimension == 4);
  CHECK(b.capacity == 10);
  CHECK(b.depot == 1);
  CHECK(b.coords[3] == std::pair<double, double>{0.0, 0.0});
  CHECK(b.demands == std::vector<int>{4, 0, 7, 3});
  REQUIRE(b.best_known.has_value());
  CHECK(*b.best_known == 20.0);
}

TEST_CASE("write and parse round trip") {
  const BenchmarkInstance b = parse_vrplib(kSmall);
  CHECK(parse_vrplib(write_vrplib(b)) == b);
}

TEST_CASE("malformed files are rejected") {
  const std::string good = kSmall;
  auto replaced = [&](const std::string& from, const std::string& to) {
    std::string s = good;
    s.replace(s.find(from), from.size(), to);
    return s;
  };
  CHECK_THROWS_AS(parse_vrplib(replaced("EUC_2D", "GEO")), FormatError);
  CHECK_THROWS_AS(parse_vrplib(replaced("DIMENSION : 4", "DIMENSION : 5")), FormatError);
  CHECK_THROWS_AS(parse_vrplib(replaced(" 4 0 0\n", " 7 0 0\n")), FormatError);
  CHECK_THROWS_AS(parse_vrplib(replaced(" 2\n -1", " 2\n 3\n -1")), FormatError);
  CHECK_THROWS_AS(parse_vrplib(replaced("CAPACITY : 10\n", "")), FormatError);
  CHECK_THROWS_AS(parse_vrplib(replaced("DEMAND_SECTION", "WEIRD_SECTION")), FormatError);
  CHECK_NOTHROW(parse_vrplib(replaced("TYPE : CVRP", "TYPE : CVRP\nVEHICLES : 2")));
}

TEST_CASE("solution cost lines") {
  CHECK(parse_solution_cost("Route #1: 1 2\nCost 27591\n") == 27591.0);
  CHECK(parse_solution_cost("Route #1: 1 2\nCost 12.5") == 12.5);
  CHECK_FALSE(parse_solution_cost("Route #1: 1 2\n").has_value());
}

TEST_CASE("normalisation puts the depot first and keeps file order") {
  const BenchmarkInstance b = parse_vrplib(kSmall);
  const NormalizedBenchmark nb = normalize_instance(b);
  CHECK(nb.file_index == std::vector<int>{1, 0, 2, 3});
  CHECK(nb.scale == 10.0);
  const Instance& x = nb.instance;
  CHECK(x.n == 3);
  CHECK(x.depot.x == 0.5);
  CHECK(x.depot.y == 1.0);
  CHECK(x.customers[0].x == 0.5);
  CHECK(x.customers[0].ql == 0.4);
  CHECK(x.customers[2].x == 0.0);
  CHECK(x.variant_name == "CVRP");
  // Distances scale back to file units.
  const DistanceMatrix d(x);
  CHECK(d(0, 2) * nb.scale == doctest::Approx(std::hypot(5.0, 5.0)));
}

TEST_CASE("benchmark cost rounds each arc") {
  const BenchmarkInstance b = parse_vrplib(kSmall);
  // Nodes: 0 depot (5,10), 1 (5,5), 2 (10,5), 3 (0,0).
  // 0-1: 5, 1-3: round(7.07)=7, 3-0: round(11.18)=11, 0-2: round(7.07)=7, 2-0: 7.
  CHECK(benchmark_cost(b, Solution{{0, 1, 3, 0, 2, 0}}) == 37);
  CHECK_THROWS_AS(benchmark_cost(b, Solution{{0, 1, 2, 0, 3, 0}}), std::invalid_argument);
  CHECK_THROWS_AS(benchmark_cost(b, Solution{{0, 1, 3, 0}}), std::invalid_argument);
  CHECK_THROWS_AS(benchmark_cost(b, Solution{{0, 1, 1, 3, 0, 2, 0}}), std::invalid_argument);
}

TEST_CASE("gaps and groups") {
  CHECK(gap(110.0, 100.0) == doctest::Approx(10.0));
  CHECK(gap(100.0, 100.0) == 0.0);
  CHECK_THROWS_AS(gap(1.0, 0.0), std::invalid_argument);
  CHECK(benchmark_group("X-n101-k25") == "X");
  CHECK(benchmark_group("E-n22-k4") == "E");
  CHECK(benchmark_group("toy") == "other");
  const auto g = group_gaps({{"A-n32-k5", 2.0}, {"A-n33-k5", 4.0}, {"B-n31-k5", 1.0}});
  CHECK(g.at("A").instances == 2);
  CHECK(g.at("A").mean_gap == 3.0);
  CHECK(g.at("B").mean_gap == 1.0);
}

TEST_CASE("directory loading picks up solution files") {
  const fs::path dir = fs::temp_directory_path() / ("arc-vrplib-" + std::to_string(std::random_device{}()));
  fs::create_directories(dir);
  BenchmarkInstance b = parse_vrplib(kSmall);
  b.comment = "plain";
  b.best_known.reset();
  b.name = "B-n4";
  std::ofstream(dir / "b.vrp") << write_vrplib(b);
  std::ofstream(dir / "b.sol") << "Route #1: 1\nCost 41\n";
  b.name = "A-n4";
  std::ofstream(dir / "a.vrp") << write_vrplib(b);
  std::ofstream(dir / "notes.txt") << "ignore me";
  const auto all = load_vrplib_directory(dir);
  REQUIRE(all.size() == 2);
  CHECK(all[0].name == "A-n4");
  CHECK_FALSE(all[0].best_known.has_value());
  CHECK(all[1].best_known == 41.0);
  fs::remove_all(dir);
}
