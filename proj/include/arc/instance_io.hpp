#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "arc/problem.hpp"
#include "json.hpp"

namespace arc {

inline constexpr const char* kInstanceFormat = "arc-instance-v1";

/// Malformed or inconsistent input data (files, records).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One JSON object per instance:
//   {"format":"arc-instance-v1","variant":..,"n":..,"depot":{x,y},
//    "customers":[{x,y,ql,qb,e,l,s}],"globals":{o,dl,mu,T,Q},"seed":..}
// Demands are raw integers. Unbounded values (l without TW, dl without L)
// are written as null.
nlohmann::json instance_to_json(const Instance& x);
Instance instance_from_json(const nlohmann::json& j);

std::string instance_to_line(const Instance& x);

void write_instances(std::ostream& os, const std::vector<Instance>& xs);
void write_instances(const std::filesystem::path& path, const std::vector<Instance>& xs);
std::vector<Instance> read_instances(std::istream& is);
std::vector<Instance> read_instances(const std::filesystem::path& path);

}  // namespace arc
