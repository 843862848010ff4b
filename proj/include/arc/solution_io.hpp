#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "arc/routing_env.hpp"

namespace arc {

/// One line of a solution file: {"instance_id","seq","cost","feasible"}.
struct SolutionRecord {
  std::string instance_id;
  Solution solution;
  double cost = 0.0;
  bool feasible = false;
};

std::string solution_to_line(const SolutionRecord& r);
SolutionRecord solution_from_line(const std::string& line);

void write_solutions(const std::filesystem::path& path, const std::vector<SolutionRecord>& rs);
std::vector<SolutionRecord> read_solutions(std::istream& is);
std::vector<SolutionRecord> read_solutions(const std::filesystem::path& path);

}  // namespace arc
