#include "arc/solution_io.hpp"

#include <fstream>

#include "arc/instance_io.hpp"
#include "json.hpp"

namespace arc {

using nlohmann::json;

std::string solution_to_line(const SolutionRecord& r) {
  json j;
  j["instance_id"] = r.instance_id;
  j["seq"] = r.solution.seq;
  j["cost"] = r.cost;
  j["feasible"] = r.feasible;
  return j.dump();
}

SolutionRecord solution_from_line(const std::string& line) {
  try {
    const json j = json::parse(line);
    SolutionRecord r;
    const json& id = j.at("instance_id");
    r.instance_id = id.is_string() ? id.get<std::string>() : id.dump();
    r.solution.seq = j.at("seq").get<std::vector<int>>();
    r.cost = j.value("cost", 0.0);
    r.feasible = j.value("feasible", false);
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed solution record: ") + e.what());
  }
}

void write_solutions(const std::filesystem::path& path, const std::vector<SolutionRecord>& rs) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  for (const auto& r : rs) os << solution_to_line(r) << '\n';
}

std::vector<SolutionRecord> read_solutions(std::istream& is) {
  std::vector<SolutionRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(solution_from_line(line));
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<SolutionRecord> read_solutions(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open solution file '" + path.string() + "'");
  return read_solutions(is);
}

}  // namespace arc
