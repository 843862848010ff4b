#include <algorithm>
#include <sstream>

#include "arc/embedding_export.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace arc;
using arc::test::make_instance;
using arc::test::tiny_config;

TEST_CASE("pooled embeddings are node means of f, h and m") {
  const PolicyModel model(tiny_config(), 1);
  const std::vector<Instance> xs = {make_instance("CVRP", 5, 1), make_instance("VRPTW", 5, 2)};
  const auto rows = pooled_embeddings(model, xs, default_instance_ids(xs));
  REQUIRE(rows.size() == 2);
  const EncodedInstance e = encode(model, xs[1]);
  for (int c = 0; c < 8; ++c) {
    double h = 0.0;
    for (int r = 0; r < e.h.rows(); ++r) h += e.h(r, c);
    CHECK(rows[1].h[c] == doctest::Approx(h / e.h.rows()).epsilon(1e-14));
    CHECK(rows[1].f[c] == doctest::Approx(rows[1].h[c] + rows[1].m[c]).epsilon(1e-12));
  }
  CHECK(rows[1].variant == "VRPTW");
  CHECK_THROWS_AS(pooled_embeddings(model, xs, {"only-one"}), std::invalid_argument);
}

TEST_CASE("instance ids count per variant") {
  const std::vector<Instance> xs = {make_instance("CVRP", 4, 1), make_instance("VRPL", 4, 2),
                                    make_instance("CVRP", 4, 3)};
  CHECK(default_instance_ids(xs) == std::vector<std::string>{"CVRP-0", "VRPL-0", "CVRP-1"});
}

TEST_CASE("table layout") {
  const PolicyModel model(tiny_config(), 2);
  const std::vector<Instance> xs = {make_instance("OVRP", 4, 1)};
  std::ostringstream out;
  write_embedding_table(out, pooled_embeddings(model, xs, default_instance_ids(xs)));
  std::istringstream in(out.str());
  std::string header, row, extra;
  std::getline(in, header);
  std::getline(in, row);
  CHECK_FALSE(static_cast<bool>(std::getline(in, extra)));
  CHECK(header.rfind("variant\tinstance_id\tf0\t", 0) == 0);
  CHECK(header.find("\th0\t") != std::string::npos);
  CHECK(header.substr(header.size() - 3) == "\tm7");
  CHECK(std::count(header.begin(), header.end(), '\t') == 2 + 24 - 1);
  CHECK(std::count(row.begin(), row.end(), '\t') == 2 + 24 - 1);
  CHECK(row.rfind("OVRP\tOVRP-0\t", 0) == 0);
}
