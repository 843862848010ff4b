#include "arc/vrplib.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include "arc/instance_io.hpp"

namespace arc {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

[[noreturn]] void fail(const std::string& what) { throw FormatError("vrplib: " + what); }

int parse_int(const std::string& s, const std::string& what) {
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail("bad integer for " + what + ": '" + s + "'");
  return v;
}

std::optional<double> comment_best_known(const std::string& comment) {
  static const std::regex re(R"((?:Optimal|Best)\s+value\s*:\s*([0-9]+(?:\.[0-9]+)?))", std::regex::icase);
  std::smatch m;
  if (std::regex_search(comment, m, re)) return std::stod(m[1].str());
  return std::nullopt;
}

}  // namespace

BenchmarkInstance parse_vrplib(std::string_view text) {
  BenchmarkInstance b;
  std::istringstream in{std::string(text)};
  std::string line;
  bool have_name = false, have_dim = false, have_cap = false, have_ewt = false;
  bool have_coords = false, have_demands = false, have_depot = false;
  std::vector<std::optional<std::pair<double, double>>> coords;
  std::vector<std::optional<int>> demands;

  auto need_dim = [&](const char* section) {
    if (!have_dim) fail(std::string(section) + " before DIMENSION");
  };
  std::string pending;
  auto next_line = [&](std::string& out) -> bool {
    if (!pending.empty()) {
      out = std::move(pending);
      pending.clear();
      return true;
    }
    return static_cast<bool>(std::getline(in, out));
  };
  // Reads data lines until the next keyword line, which is pushed back.
  auto read_rows = [&](auto&& on_row) {
    std::string row;
    while (next_line(row)) {
      const std::string t = trim(row);
      if (t.empty()) continue;
      if (std::isalpha(static_cast<unsigned char>(t[0]))) {
        pending = t;
        return;
      }
      if (!on_row(t)) return;
    }
  };

  while (next_line(line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t == "EOF") break;
    const auto colon = t.find(':');
    std::string key = trim(colon == std::string::npos ? std::string_view(t) : std::string_view(t).substr(0, colon));
    const std::string value = colon == std::string::npos ? "" : trim(std::string_view(t).substr(colon + 1));
    if (key == "NAME") {
      b.name = value;
      have_name = true;
    } else if (key == "COMMENT") {
      b.comment = value;
    } else if (key == "TYPE") {
      b.type = value;
    } else if (key == "DIMENSION") {
      b.dimension = parse_int(value, "DIMENSION");
      if (b.dimension < 2) fail("DIMENSION must be >= 2");
      coords.assign(static_cast<std::size_t>(b.dimension), std::nullopt);
      demands.assign(static_cast<std::size_t>(b.dimension), std::nullopt);
      have_dim = true;
    } else if (key == "CAPACITY") {
      b.capacity = parse_int(value, "CAPACITY");
      if (b.capacity <= 0) fail("CAPACITY must be positive");
      have_cap = true;
    } else if (key == "EDGE_WEIGHT_TYPE") {
      if (value != "EUC_2D") fail("unsupported EDGE_WEIGHT_TYPE '" + value + "' (only EUC_2D)");
      b.edge_weight_type = value;
      have_ewt = true;
    } else if (key == "NODE_COORD_SECTION") {
      need_dim("NODE_COORD_SECTION");
      have_coords = true;
      read_rows([&](const std::string& row) {
        std::istringstream rs(row);
        int id;
        double x, y;
        if (!(rs >> id >> x >> y)) fail("bad NODE_COORD_SECTION line '" + row + "'");
        if (id < 1 || id > b.dimension) fail("node id " + std::to_string(id) + " outside 1.." + std::to_string(b.dimension));
        if (coords[id - 1]) fail("node id " + std::to_string(id) + " has two coordinates");
        coords[id - 1] = std::make_pair(x, y);
        return true;
      });
    } else if (key == "DEMAND_SECTION") {
      need_dim("DEMAND_SECTION");
      have_demands = true;
      read_rows([&](const std::string& row) {
        std::istringstream rs(row);
        int id, d;
        if (!(rs >> id >> d)) fail("bad DEMAND_SECTION line '" + row + "'");
        if (id < 1 || id > b.dimension) fail("demand id " + std::to_string(id) + " outside 1.." + std::to_string(b.dimension));
        if (demands[id - 1]) fail("node id " + std::to_string(id) + " has two demands");
        if (d < 0) fail("negative demand at node " + std::to_string(id));
        demands[id - 1] = d;
        return true;
      });
    } else if (key == "DEPOT_SECTION") {
      need_dim("DEPOT_SECTION");
      std::vector<int> depots;
      read_rows([&](const std::string& row) {
        const int id = parse_int(row, "DEPOT_SECTION");
        if (id == -1) return false;
        if (id < 1 || id > b.dimension) fail("depot id " + std::to_string(id) + " outside 1.." + std::to_string(b.dimension));
        depots.push_back(id);
        return true;
      });
      if (depots.size() != 1) fail("expected exactly one depot, found " + std::to_string(depots.size()));
      b.depot = depots.front() - 1;
      have_depot = true;
    } else if (colon == std::string::npos) {
      fail("unsupported section '" + key + "'");
    }
  }

  if (!have_name) fail("missing NAME");
  if (!have_dim) fail("missing DIMENSION");
  if (!have_cap) fail("missing CAPACITY");
  if (!have_ewt) fail("missing EDGE_WEIGHT_TYPE");
  if (!have_coords) fail("missing NODE_COORD_SECTION");
  if (!have_demands) fail("missing DEMAND_SECTION");
  if (!have_depot) fail("missing DEPOT_SECTION");
  for (int i = 0; i < b.dimension; ++i) {
    if (!coords[i])
      fail("DIMENSION " + std::to_string(b.dimension) + " but node " + std::to_string(i + 1) + " has no coordinates");
    if (!demands[i]) fail("DIMENSION " + std::to_string(b.dimension) + " but node " + std::to_string(i + 1) + " has no demand");
    b.coords.push_back(*coords[i]);
    b.demands.push_back(*demands[i]);
  }
  if (b.demands[b.depot] != 0) fail("depot has nonzero demand");
  b.best_known = comment_best_known(b.comment);
  return b;
}

std::string write_vrplib(const BenchmarkInstance& b) {
  std::ostringstream out;
  out << "NAME : " << b.name << '\n';
  if (!b.comment.empty()) out << "COMMENT : " << b.comment << '\n';
  out << "TYPE : " << b.type << '\n';
  out << "DIMENSION : " << b.dimension << '\n';
  out << "EDGE_WEIGHT_TYPE : " << b.edge_weight_type << '\n';
  out << "CAPACITY : " << b.capacity << '\n';
  out << "NODE_COORD_SECTION\n";
  for (int i = 0; i < b.dimension; ++i)
    out << (i + 1) << ' ' << format_number(b.coords[i].first) << ' ' << format_number(b.coords[i].second) << '\n';
  out << "DEMAND_SECTION\n";
  for (int i = 0; i < b.dimension; ++i) out << (i + 1) << ' ' << b.demands[i] << '\n';
  out << "DEPOT_SECTION\n" << (b.depot + 1) << "\n-1\nEOF\n";
  return out.str();
}

std::optional<double> parse_solution_cost(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.rfind("Cost", 0) == 0) {
      std::istringstream rs(t.substr(4));
      double v;
      if (rs >> v) return v;
      fail("bad Cost line '" + t + "'");
    }
  }
  return std::nullopt;
}

BenchmarkInstance load_vrplib_file(const std::filesystem::path& path) {
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  };
  BenchmarkInstance b = parse_vrplib(slurp(path));
  std::filesystem::path sol = path;
  sol.replace_extension(".sol");
  if (std::filesystem::exists(sol)) {
    if (auto c = parse_solution_cost(slurp(sol))) b.best_known = c;
  }
  return b;
}

std::vector<BenchmarkInstance> load_vrplib_directory(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".vrp") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<BenchmarkInstance> out;
  for (const auto& f : files) out.push_back(load_vrplib_file(f));
  return out;
}

NormalizedBenchmark normalize_instance(const BenchmarkInstance& b) {
  double min_x = b.coords[0].first, max_x = min_x, min_y = b.coords[0].second, max_y = min_y;
  for (const auto& [x, y] : b.coords) {
    min_x = std::min(min_x, x);
    max_x = std::max(max_x, x);
    min_y = std::min(min_y, y);
    max_y = std::max(max_y, y);
  }
  const double scale = std::max(max_x - min_x, max_y - min_y);
  if (!(scale > 0.0)) throw std::invalid_argument("normalize_instance: " + b.name + " has zero coordinate extent");

  NormalizedBenchmark out;
  out.scale = scale;
  out.offset_x = min_x;
  out.offset_y = min_y;
  out.file_index.push_back(b.depot);
  for (int i = 0; i < b.dimension; ++i)
    if (i != b.depot) out.file_index.push_back(i);

  Instance& x = out.instance;
  x.n = b.dimension - 1;
  x.variant_name = "CVRP";
  x.indicator = variant_from_name("CVRP");
  x.globals.capacity = b.capacity;
  auto node = [&](int file) {
    NodeFeatures nd;
    nd.x = (b.coords[file].first - min_x) / scale;
    nd.y = (b.coords[file].second - min_y) / scale;
    nd.demand_linehaul = b.demands[file];
    nd.ql = static_cast<double>(b.demands[file]) / b.capacity;
    return nd;
  };
  x.depot = node(b.depot);
  x.depot.ql = 0.0;
  for (std::size_t k = 1; k < out.file_index.size(); ++k) x.customers.push_back(node(out.file_index[k]));
  check_instance(x);
  return out;
}

long long benchmark_cost(const BenchmarkInstance& b, const Solution& tau) {
  const int n = b.dimension - 1;
  std::vector<int> file_index{b.depot};
  for (int i = 0; i < b.dimension; ++i)
    if (i != b.depot) file_index.push_back(i);

  std::vector<int> seen(static_cast<std::size_t>(n) + 1, 0);
  int load = 0;
  long long total = 0;
  for (std::size_t k = 0; k < tau.seq.size(); ++k) {
    const int v = tau.seq[k];
    if (v < 0 || v > n) throw std::invalid_argument("benchmark_cost: node " + std::to_string(v) + " out of range");
    if (v == 0) {
      load = 0;
    } else {
      if (seen[v]++) throw std::invalid_argument("benchmark_cost: customer " + std::to_string(v) + " repeated");
      load += b.demands[file_index[v]];
      if (load > b.capacity) throw std::invalid_argument("benchmark_cost: route overloads capacity at " + std::to_string(v));
    }
    if (k + 1 < tau.seq.size()) {
      const auto& [x0, y0] = b.coords[file_index[v]];
      const auto& [x1, y1] = b.coords[file_index[tau.seq[k + 1]]];
      total += static_cast<long long>(std::floor(std::hypot(x1 - x0, y1 - y0) + 0.5));
    }
  }
  if (tau.seq.empty() || tau.seq.front() != 0 || tau.seq.back() != 0)
    throw std::invalid_argument("benchmark_cost: sequence must start and end at the depot");
  for (int i = 1; i <= n; ++i)
    if (!seen[i]) throw std::invalid_argument("benchmark_cost: customer " + std::to_string(i) + " missing");
  return total;
}

double gap(double obj, double ref) {
  if (!(ref > 0.0)) throw std::invalid_argument("gap: reference must be positive");
  return 100.0 * (obj - ref) / ref;
}

std::string benchmark_group(std::string_view name) {
  static const std::string groups = "ABEFMPX";
  if (!name.empty()) {
    const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
    if (groups.find(c) != std::string::npos && (name.size() == 1 || name[1] == '-')) return std::string(1, c);
  }
  return "other";
}

std::map<std::string, GroupSummary> group_gaps(const std::vector<std::pair<std::string, double>>& rows) {
  std::map<std::string, GroupSummary> out;
  for (const auto& [name, g] : rows) {
    GroupSummary& s = out[benchmark_group(name)];
    s.instances += 1;
    s.mean_gap += g;
  }
  for (auto& [k, s] : out) s.mean_gap /= s.instances;
  return out;
}

}  // namespace arc
