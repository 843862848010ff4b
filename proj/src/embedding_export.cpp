#include "arc/embedding_export.hpp"

#include <charconv>
#include <exception>
#include <map>
#include <stdexcept>

namespace arc {

namespace {

std::vector<double> mean_rows(const Matrix& x) {
  std::vector<double> out(static_cast<std::size_t>(x.cols()), 0.0);
  for (int r = 0; r < x.rows(); ++r)
    for (int c = 0; c < x.cols(); ++c) out[c] += x(r, c);
  for (double& v : out) v /= x.rows();
  return out;
}

void write_number(std::ostream& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, res.ptr - buf);
}

}  // namespace

std::vector<PooledEmbedding> pooled_embeddings(const PolicyModel& model, const std::vector<Instance>& instances,
                                               const std::vector<std::string>& ids) {
  if (ids.size() != instances.size()) throw std::invalid_argument("pooled_embeddings: one id per instance required");
  std::vector<PooledEmbedding> rows(instances.size());
  std::vector<std::exception_ptr> errors(instances.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < instances.size(); ++i) {
    try {
      const EncodedInstance e = encode(model, instances[i]);
      rows[i] = PooledEmbedding{instances[i].variant_name, ids[i], mean_rows(e.f), mean_rows(e.h), mean_rows(e.m)};
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return rows;
}

void write_embedding_table(std::ostream& out, const std::vector<PooledEmbedding>& rows) {
  const std::size_t dim = rows.empty() ? 0 : rows.front().f.size();
  out << "variant\tinstance_id";
  for (const char* p : {"f", "h", "m"})
    for (std::size_t k = 0; k < dim; ++k) out << '\t' << p << k;
  out << '\n';
  for (const auto& r : rows) {
    out << r.variant << '\t' << r.instance_id;
    for (const auto* v : {&r.f, &r.h, &r.m}) {
      if (v->size() != dim) throw std::invalid_argument("write_embedding_table: ragged rows");
      for (double x : *v) {
        out << '\t';
        write_number(out, x);
      }
    }
    out << '\n';
  }
}

std::vector<std::string> default_instance_ids(const std::vector<Instance>& instances) {
  std::map<std::string, int> counts;
  std::vector<std::string> ids;
  ids.reserve(instances.size());
  for (const auto& x : instances) ids.push_back(x.variant_name + "-" + std::to_string(counts[x.variant_name]++));
  return ids;
}

}  // namespace arc
