#include "arc/problem.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace arc {

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string catalog_listing() {
  std::ostringstream os;
  const auto& names = variant_catalog();
  for (std::size_t i = 0; i < names.size(); ++i) os << (i ? ", " : "") << names[i];
  return os.str();
}

}  // namespace

std::string_view attribute_name(Attribute a) {
  switch (a) {
    case Attribute::B: return "B";
    case Attribute::MB: return "MB";
    case Attribute::O: return "O";
    case Attribute::TW: return "TW";
    case Attribute::L: return "L";
  }
  return "?";
}

Attribute attribute_from_name(std::string_view name) {
  const std::string u = upper(trim(name));
  for (Attribute a : kAllAttributes) {
    if (u == attribute_name(a)) return a;
  }
  throw std::invalid_argument("unknown attribute '" + std::string(name) +
                              "' (expected one of B, MB, O, TW, L)");
}

bool AttributeIndicator::has(Attribute a) const {
  switch (a) {
    case Attribute::B: return b;
    case Attribute::MB: return mb;
    case Attribute::O: return o;
    case Attribute::TW: return tw;
    case Attribute::L: return l;
  }
  return false;
}

void AttributeIndicator::set(Attribute a, bool value) {
  switch (a) {
    case Attribute::B: b = value; break;
    case Attribute::MB: mb = value; break;
    case Attribute::O: o = value; break;
    case Attribute::TW: tw = value; break;
    case Attribute::L: l = value; break;
  }
}

std::vector<Attribute> AttributeIndicator::active() const {
  std::vector<Attribute> out;
  for (Attribute a : kAllAttributes) {
    if (has(a)) out.push_back(a);
  }
  return out;
}

std::array<double, 5> AttributeIndicator::as_features() const {
  return {b ? 1.0 : 0.0, mb ? 1.0 : 0.0, o ? 1.0 : 0.0, tw ? 1.0 : 0.0, l ? 1.0 : 0.0};
}

const std::vector<std::string>& variant_catalog() {
  static const std::vector<std::string> names = {
      "CVRP",     "OVRP",     "VRPB",      "VRPL",      "VRPTW",     "OVRPTW",
      "OVRPB",    "OVRPL",    "VRPBL",     "VRPBTW",    "VRPLTW",    "OVRPBL",
      "OVRPBTW",  "OVRPLTW",  "VRPBLTW",   "OVRPBLTW",  "VRPMB",     "OVRPMB",
      "VRPMBL",   "VRPMBTW",  "OVRPMBL",   "OVRPMBTW",  "VRPMBLTW",  "OVRPMBLTW"};
  return names;
}

std::string name_of(const AttributeIndicator& ind) {
  if (ind.b && ind.mb) throw std::invalid_argument("B and MB are mutually exclusive");
  if (!ind.b && !ind.mb && !ind.o && !ind.tw && !ind.l) return "CVRP";
  std::string name = ind.o ? "OVRP" : "VRP";
  if (ind.b) name += "B";
  if (ind.mb) name += "MB";
  if (ind.l) name += "L";
  if (ind.tw) name += "TW";
  return name;
}

AttributeIndicator variant_from_name(std::string_view name) {
  const std::string u = upper(trim(name));
  for (const std::string& candidate : variant_catalog()) {
    if (candidate != u) continue;
    AttributeIndicator ind;
    if (u == "CVRP") return ind;
    std::string_view rest = u;
    if (rest.starts_with("O")) {
      ind.o = true;
      rest.remove_prefix(1);
    }
    rest.remove_prefix(3);  // "VRP"
    if (rest.starts_with("MB")) {
      ind.mb = true;
      rest.remove_prefix(2);
    } else if (rest.starts_with("B")) {
      ind.b = true;
      rest.remove_prefix(1);
    }
    if (rest.starts_with("L")) {
      ind.l = true;
      rest.remove_prefix(1);
    }
    if (rest.starts_with("TW")) ind.tw = true;
    return ind;
  }
  throw std::invalid_argument("unknown variant '" + std::string(name) +
                              "'; valid names: " + catalog_listing());
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"all16", "zeroshot7", "heldout9", "mb8",
                                                 "all24"};
  return names;
}

std::vector<std::string> resolve_variant_set(std::string_view spec) {
  const auto& cat = variant_catalog();
  const std::string s = trim(spec);
  if (s == "all16") return {cat.begin(), cat.begin() + 16};
  if (s == "all24") return cat;
  if (s == "mb8") return {cat.begin() + 16, cat.end()};
  if (s == "zeroshot7") return {"CVRP", "OVRP", "VRPB", "VRPL", "VRPTW", "OVRPTW", "VRPBL"};
  if (s == "heldout9") {
    const auto train = resolve_variant_set("zeroshot7");
    std::vector<std::string> out;
    for (auto it = cat.begin(); it != cat.begin() + 16; ++it) {
      if (std::find(train.begin(), train.end(), *it) == train.end()) out.push_back(*it);
    }
    return out;
  }
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(name_of(variant_from_name(item)));
  }
  if (out.empty()) throw std::invalid_argument("empty variant set '" + s + "'");
  return out;
}

double euclidean(double x0, double y0, double x1, double y1) {
  const double dx = x0 - x1;
  const double dy = y0 - y1;
  return std::sqrt(dx * dx + dy * dy);
}

DistanceMatrix::DistanceMatrix(const Instance& x) : size_(x.n + 1) {
  data_.assign(static_cast<std::size_t>(size_) * size_, 0.0);
  for (int i = 0; i < size_; ++i) {
    const NodeFeatures& a = x.node(i);
    for (int j = i + 1; j < size_; ++j) {
      const NodeFeatures& b = x.node(j);
      const double d = euclidean(a.x, a.y, b.x, b.y);
      data_[static_cast<std::size_t>(i) * size_ + j] = d;
      data_[static_cast<std::size_t>(j) * size_ + i] = d;
    }
  }
}

DistanceMatrix distance_matrix(const Instance& x) { return DistanceMatrix(x); }

void check_instance(const Instance& x) {
  auto fail = [](const std::string& what) { throw std::invalid_argument("invalid instance: " + what); };
  if (x.n < 1) fail("n must be >= 1");
  if (static_cast<int>(x.customers.size()) != x.n) fail("customer count differs from n");
  const AttributeIndicator& ind = x.indicator;
  if (ind.b && ind.mb) fail("B and MB both active");
  if (!(x.globals.capacity > 0.0)) fail("capacity must be positive");
  if (!(x.globals.horizon > 0.0)) fail("horizon must be positive");
  if (x.globals.open != ind.o) fail("open flag disagrees with indicator");
  if (x.globals.mixed != ind.mb) fail("mixed flag disagrees with indicator");
  if (ind.l != std::isfinite(x.globals.duration_limit)) fail("duration limit disagrees with indicator");
  if (ind.l && !(x.globals.duration_limit > 0.0)) fail("duration limit must be positive");
  if (x.depot.demand_linehaul != 0 || x.depot.demand_backhaul != 0) fail("depot carries demand");
  for (int i = 1; i <= x.n; ++i) {
    const NodeFeatures& c = x.node(i);
    const std::string at = " at customer " + std::to_string(i);
    if (c.demand_linehaul < 0 || c.demand_backhaul < 0) fail("negative demand" + at);
    if (c.demand_linehaul > 0 && c.demand_backhaul > 0) fail("both linehaul and backhaul demand" + at);
    if (!ind.b && !ind.mb && c.demand_backhaul != 0) fail("backhaul demand without B/MB" + at);
    if (!(c.e >= 0.0) || !(c.e <= c.l) || !(c.s >= 0.0)) fail("time window out of order" + at);
    if (!ind.tw && (c.e != 0.0 || c.l != kInfinity || c.s != 0.0)) fail("window set without TW" + at);
    if (ind.tw && !std::isfinite(c.l)) fail("unbounded window under TW" + at);
  }
}

double default_capacity(int n) {
  if (n <= 10) return 20.0;
  if (n <= 20) return 30.0;
  if (n <= 50) return 40.0;
  return 50.0;
}

Instance generate_instance(const GenerationConfig& cfg) {
  if (cfg.n < 1) throw std::invalid_argument("generate_instance: n must be >= 1");
  if (cfg.demand_min < 1 || cfg.demand_max < cfg.demand_min)
    throw std::invalid_argument("generate_instance: empty demand range");
  if (!(cfg.backhaul_fraction >= 0.0 && cfg.backhaul_fraction <= 1.0))
    throw std::invalid_argument("generate_instance: backhaul_fraction outside [0,1]");
  if (cfg.service_time_min < 0.0 || cfg.service_time_max < cfg.service_time_min)
    throw std::invalid_argument("generate_instance: empty service time range");
  if (cfg.window_width_min < 0.0 || cfg.window_width_max < cfg.window_width_min)
    throw std::invalid_argument("generate_instance: empty window width range");
  if (!(cfg.horizon > 0.0)) throw std::invalid_argument("generate_instance: horizon must be positive");
  if (!(cfg.duration_limit > 0.0))
    throw std::invalid_argument("generate_instance: duration limit must be positive");

  Instance x;
  x.indicator = variant_from_name(cfg.variant_name);
  x.variant_name = name_of(x.indicator);
  x.n = cfg.n;
  x.seed = cfg.seed;
  x.globals.capacity = cfg.capacity > 0.0 ? cfg.capacity : default_capacity(cfg.n);
  x.globals.horizon = cfg.horizon;
  x.globals.open = x.indicator.o;
  x.globals.mixed = x.indicator.mb;
  x.globals.duration_limit = x.indicator.l ? cfg.duration_limit : kInfinity;
  if (cfg.demand_max > x.globals.capacity)
    throw std::invalid_argument("generate_instance: demand range exceeds capacity");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> demand(cfg.demand_min, cfg.demand_max);

  x.depot.x = unit(rng);
  x.depot.y = unit(rng);
  x.customers.resize(static_cast<std::size_t>(cfg.n));
  for (NodeFeatures& c : x.customers) {
    c.x = unit(rng);
    c.y = unit(rng);
  }
  for (NodeFeatures& c : x.customers) c.demand_linehaul = demand(rng);
  if (x.indicator.b || x.indicator.mb) {
    for (NodeFeatures& c : x.customers) {
      if (unit(rng) < cfg.backhaul_fraction) {
        c.demand_backhaul = c.demand_linehaul;
        c.demand_linehaul = 0;
      }
    }
  }
  for (NodeFeatures& c : x.customers) {
    c.ql = c.demand_linehaul / x.globals.capacity;
    c.qb = c.demand_backhaul / x.globals.capacity;
  }
  if (x.indicator.tw) {
    x.depot.l = cfg.horizon;
    std::uniform_real_distribution<double> service(cfg.service_time_min, cfg.service_time_max);
    std::uniform_real_distribution<double> width(cfg.window_width_min, cfg.window_width_max);
    for (NodeFeatures& c : x.customers) {
      const double d = euclidean(x.depot.x, x.depot.y, c.x, c.y);
      c.s = service(rng);
      const double t = width(rng);
      const double lo = d;
      const double hi = cfg.horizon - d - c.s - t;
      if (hi < lo)
        throw std::invalid_argument("generate_instance: horizon too small to host a feasible window");
      c.e = lo + (hi - lo) * unit(rng);
      c.l = c.e + t;
    }
  }
  return x;
}

Instance mask_attribute(const Instance& x, Attribute a) {
  Instance out = x;
  if (!x.indicator.has(a)) return out;
  switch (a) {
    case Attribute::O:
      out.globals.open = false;
      break;
    case Attribute::L:
      out.globals.duration_limit = kInfinity;
      break;
    case Attribute::TW:
      for (int i = 0; i <= out.n; ++i) {
        NodeFeatures& nd = i == 0 ? out.depot : out.customers[i - 1];
        nd.e = 0.0;
        nd.l = kInfinity;
        nd.s = 0.0;
      }
      break;
    case Attribute::B:
    case Attribute::MB:
      for (NodeFeatures& c : out.customers) {
        c.demand_backhaul = 0;
        c.qb = 0.0;
      }
      out.globals.mixed = false;
      break;
  }
  out.indicator.set(a, false);
  out.variant_name = name_of(out.indicator);
  return out;
}

}  // namespace arc
