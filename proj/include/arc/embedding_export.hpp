#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "arc/policy_model.hpp"
#include "arc/problem.hpp"

namespace arc {

struct PooledEmbedding {
  std::string variant;
  std::string instance_id;
  std::vector<double> f;
  std::vector<double> h;
  std::vector<double> m;
};

/// Mean over the node rows of f, h and m, one entry per instance.
std::vector<PooledEmbedding> pooled_embeddings(const PolicyModel& model, const std::vector<Instance>& instances,
                                               const std::vector<std::string>& ids);

/// Tab-separated table with header: variant, instance_id, f0..f{E-1},
/// h0.., m0... Values are written with round-trip precision.
void write_embedding_table(std::ostream& out, const std::vector<PooledEmbedding>& rows);

/// Stable id "<variant>-<k>" for the k-th instance of its variant.
std::vector<std::string> default_instance_ids(const std::vector<Instance>& instances);

}  // namespace arc
