#include "arc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "arc/instance_io.hpp"

namespace arc {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes little-endian doubles");

nlohmann::json model_config_to_json(const ModelConfig& c) {
  return json{{"embed_dim", c.embed_dim},
              {"heads", c.heads},
              {"embedder_layers", c.embedder_layers},
              {"mixer_layers", c.mixer_layers},
              {"ff_hidden", c.ff_hidden},
              {"logit_clip", c.logit_clip},
              {"mixed_backhaul_features", c.mixed_backhaul_features}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("model config must be a JSON object");
  ModelConfig c;
  for (const auto& [key, v] : j.items()) {
    auto want_int = [&](int& dst) {
      if (!v.is_number_integer()) throw FormatError("model config '" + key + "' must be an integer");
      dst = v.get<int>();
    };
    if (key == "embed_dim") want_int(c.embed_dim);
    else if (key == "heads") want_int(c.heads);
    else if (key == "embedder_layers") want_int(c.embedder_layers);
    else if (key == "mixer_layers") want_int(c.mixer_layers);
    else if (key == "ff_hidden") want_int(c.ff_hidden);
    else if (key == "logit_clip") {
      if (!v.is_number()) throw FormatError("model config 'logit_clip' must be a number");
      c.logit_clip = v.get<double>();
    } else if (key == "mixed_backhaul_features") {
      if (!v.is_boolean()) throw FormatError("model config 'mixed_backhaul_features' must be a boolean");
      c.mixed_backhaul_features = v.get<bool>();
    } else {
      throw FormatError("unknown model config key '" + key + "'");
    }
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  return c;
}

namespace {

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

void append_matrix(std::string& out, const Matrix& m) {
  const auto* p = reinterpret_cast<const char*>(m.data());
  out.append(p, m.size() * sizeof(double));
}

json meta_to_json(const CheckpointMeta& m) {
  return json{{"seed", m.seed},
              {"variant_set", m.variant_set},
              {"epochs_completed", m.epochs_completed},
              {"steps", m.steps},
              {"extra", m.extra}};
}

CheckpointMeta meta_from_json(const json& j) {
  CheckpointMeta m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.variant_set = j.at("variant_set").get<std::vector<std::string>>();
  m.epochs_completed = j.at("epochs_completed").get<int>();
  m.steps = j.at("steps").get<std::int64_t>();
  m.extra = j.at("extra");
  return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const PolicyModel& model, const CheckpointMeta& meta,
                     const Adam* optimizer) {
  const ParameterSet& p = model.parameters();
  std::string payload;
  payload.reserve(p.scalar_count() * sizeof(double) * (optimizer ? 3 : 1));
  json tensors = json::array();
  for (int s = 0; s < p.size(); ++s) {
    tensors.push_back({{"name", p.name(s)}, {"rows", p.value(s).rows()}, {"cols", p.value(s).cols()}});
    append_matrix(payload, p.value(s));
  }
  json opt = nullptr;
  if (optimizer) {
    for (int s = 0; s < p.size(); ++s) append_matrix(payload, optimizer->first_moment()[s]);
    for (int s = 0; s < p.size(); ++s) append_matrix(payload, optimizer->second_moment()[s]);
    const AdamConfig& c = optimizer->config();
    opt = json{{"learning_rate", c.learning_rate}, {"beta1", c.beta1},       {"beta2", c.beta2},
               {"eps", c.eps},                     {"clip_norm", c.clip_norm}, {"steps", optimizer->steps()}};
  }
  const json header{{"model", model_config_to_json(model.config())},
                    {"meta", meta_to_json(meta)},
                    {"tensors", tensors},
                    {"optimizer", opt},
                    {"payload_bytes", payload.size()},
                    {"checksum", fnv1a(payload)}};

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << kCheckpointFormat << '\n' << header.dump() << '\n';
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string tag;
  std::getline(in, tag);
  if (tag != kCheckpointFormat)
    throw FormatError("checkpoint " + path.string() + ": expected format '" + kCheckpointFormat + "', found '" +
                      tag.substr(0, 32) + "'");
  std::string header_line;
  if (!std::getline(in, header_line)) throw FormatError("checkpoint " + path.string() + ": missing header");
  json header;
  try {
    header = json::parse(header_line);
  } catch (const json::parse_error& e) {
    throw FormatError("checkpoint " + path.string() + ": bad header: " + e.what());
  }
  std::ostringstream rest;
  rest << in.rdbuf();
  const std::string payload = rest.str();

  Checkpoint c;
  try {
    if (payload.size() != header.at("payload_bytes").get<std::size_t>())
      throw FormatError("checkpoint " + path.string() + ": payload is " + std::to_string(payload.size()) +
                        " bytes, header says " + std::to_string(header.at("payload_bytes").get<std::size_t>()));
    if (fnv1a(payload) != header.at("checksum").get<std::uint64_t>())
      throw FormatError("checkpoint " + path.string() + ": checksum mismatch (corrupt payload)");
    c.config = model_config_from_json(header.at("model"));
    c.meta = meta_from_json(header.at("meta"));

    const auto shapes = PolicyModel::tensor_shapes(c.config);
    const json& tensors = header.at("tensors");
    if (tensors.size() != shapes.size())
      throw FormatError("checkpoint " + path.string() + ": " + std::to_string(tensors.size()) +
                        " tensors, config expects " + std::to_string(shapes.size()));
    std::size_t offset = 0;
    auto take = [&](int rows, int cols) {
      Matrix m(rows, cols);
      const std::size_t bytes = m.size() * sizeof(double);
      if (offset + bytes > payload.size()) throw FormatError("checkpoint " + path.string() + ": payload truncated");
      std::memcpy(m.data(), payload.data() + offset, bytes);
      offset += bytes;
      return m;
    };
    for (std::size_t s = 0; s < shapes.size(); ++s) {
      const auto& [name, rows, cols] = shapes[s];
      const json& t = tensors[s];
      if (t.at("name") != name || t.at("rows") != rows || t.at("cols") != cols)
        throw FormatError("checkpoint " + path.string() + ": tensor " + std::to_string(s) + " is " +
                          t.at("name").get<std::string>() + " " + std::to_string(t.at("rows").get<int>()) + "x" +
                          std::to_string(t.at("cols").get<int>()) + ", config expects " + name + " " +
                          std::to_string(rows) + "x" + std::to_string(cols));
      c.params.add(name, take(rows, cols));
    }
    const json& opt = header.at("optimizer");
    if (!opt.is_null()) {
      OptimizerState st;
      st.config.learning_rate = opt.at("learning_rate").get<double>();
      st.config.beta1 = opt.at("beta1").get<double>();
      st.config.beta2 = opt.at("beta2").get<double>();
      st.config.eps = opt.at("eps").get<double>();
      st.config.clip_norm = opt.at("clip_norm").get<double>();
      st.steps = opt.at("steps").get<std::int64_t>();
      st.first_moment = GradientSet(c.params);
      st.second_moment = GradientSet(c.params);
      for (int s = 0; s < c.params.size(); ++s) st.first_moment[s] = take(c.params.value(s).rows(), c.params.value(s).cols());
      for (int s = 0; s < c.params.size(); ++s) st.second_moment[s] = take(c.params.value(s).rows(), c.params.value(s).cols());
      c.optimizer = std::move(st);
    }
    if (offset != payload.size()) throw FormatError("checkpoint " + path.string() + ": trailing payload bytes");
  } catch (const json::exception& e) {
    throw FormatError("checkpoint " + path.string() + ": bad header: " + e.what());
  }
  return c;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  Checkpoint c = load_checkpoint(path);
  if (!(c.config == expected))
    throw FormatError("checkpoint " + path.string() + " has model config " + model_config_to_json(c.config).dump() +
                      ", expected " + model_config_to_json(expected).dump());
  return c;
}

PolicyModel model_from_checkpoint(const Checkpoint& c) { return PolicyModel(c.config, c.params); }

Adam restore_optimizer(const ParameterSet& params, const OptimizerState& s) {
  Adam a(params, s.config);
  a.set_steps(s.steps);
  for (int i = 0; i < params.size(); ++i) {
    a.first_moment()[i] = s.first_moment[i];
    a.second_moment()[i] = s.second_moment[i];
  }
  return a;
}

}  // namespace arc
