#include "arc/instance_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace arc {

namespace {

using nlohmann::json;

json bounded(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double unbounded_or(const json& v) { return v.is_null() ? kInfinity : v.get<double>(); }

const json& field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(std::string("instance record missing '") + key + "'");
  return *it;
}

}  // namespace

json instance_to_json(const Instance& x) {
  json customers = json::array();
  for (const NodeFeatures& c : x.customers) {
    customers.push_back({{"x", c.x},
                         {"y", c.y},
                         {"ql", c.demand_linehaul},
                         {"qb", c.demand_backhaul},
                         {"e", c.e},
                         {"l", bounded(c.l)},
                         {"s", c.s}});
  }
  json j;
  j["format"] = kInstanceFormat;
  j["variant"] = x.variant_name;
  j["n"] = x.n;
  j["depot"] = {{"x", x.depot.x}, {"y", x.depot.y}};
  j["customers"] = std::move(customers);
  j["globals"] = {{"o", x.globals.open},
                  {"dl", bounded(x.globals.duration_limit)},
                  {"mu", x.globals.mixed},
                  {"T", x.globals.horizon},
                  {"Q", x.globals.capacity}};
  j["seed"] = x.seed;
  return j;
}

Instance instance_from_json(const json& j) {
  try {
    if (!j.is_object()) throw FormatError("instance record is not a JSON object");
    const auto fmt = field(j, "format").get<std::string>();
    if (fmt != kInstanceFormat)
      throw FormatError("unsupported instance format '" + fmt + "' (expected " + kInstanceFormat + ")");
    Instance x;
    x.indicator = variant_from_name(field(j, "variant").get<std::string>());
    x.variant_name = name_of(x.indicator);
    x.n = field(j, "n").get<int>();
    x.seed = j.value("seed", std::uint64_t{0});
    const json& g = field(j, "globals");
    x.globals.open = field(g, "o").get<bool>();
    x.globals.duration_limit = unbounded_or(field(g, "dl"));
    x.globals.mixed = field(g, "mu").get<bool>();
    x.globals.horizon = field(g, "T").get<double>();
    x.globals.capacity = field(g, "Q").get<double>();
    const json& d = field(j, "depot");
    x.depot.x = field(d, "x").get<double>();
    x.depot.y = field(d, "y").get<double>();
    if (x.indicator.tw) x.depot.l = x.globals.horizon;
    const json& cs = field(j, "customers");
    if (!cs.is_array()) throw FormatError("'customers' is not an array");
    for (const json& c : cs) {
      NodeFeatures nd;
      nd.x = field(c, "x").get<double>();
      nd.y = field(c, "y").get<double>();
      nd.demand_linehaul = field(c, "ql").get<int>();
      nd.demand_backhaul = field(c, "qb").get<int>();
      nd.ql = nd.demand_linehaul / x.globals.capacity;
      nd.qb = nd.demand_backhaul / x.globals.capacity;
      nd.e = field(c, "e").get<double>();
      nd.l = unbounded_or(field(c, "l"));
      nd.s = field(c, "s").get<double>();
      x.customers.push_back(nd);
    }
    check_instance(x);
    return x;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed instance record: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
}

std::string instance_to_line(const Instance& x) { return instance_to_json(x).dump(); }

void write_instances(std::ostream& os, const std::vector<Instance>& xs) {
  for (const Instance& x : xs) os << instance_to_line(x) << '\n';
}

void write_instances(const std::filesystem::path& path, const std::vector<Instance>& xs) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_instances(os, xs);
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

std::vector<Instance> read_instances(std::istream& is) {
  std::vector<Instance> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(instance_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Instance> read_instances(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open instance file '" + path.string() + "'");
  return read_instances(is);
}

}  // namespace arc
