#include "arc/policy_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

namespace arc {

using ad::Tape;
using ad::Var;

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("invalid model config: " + what); };
  if (embed_dim < 1) fail("embed_dim must be >= 1");
  if (heads < 1 || embed_dim % heads != 0) fail("embed_dim must be divisible by heads");
  if (embedder_layers < 1) fail("embedder_layers must be >= 1");
  if (mixer_layers < 1) fail("mixer_layers must be >= 1");
  if (ff_hidden < 1) fail("ff_hidden must be >= 1");
  if (!(logit_clip > 0.0)) fail("logit_clip must be > 0");
}

namespace {

void add_attention(std::vector<std::tuple<std::string, int, int>>& out, const std::string& p, int e) {
  for (const char* w : {"wq", "wk", "wv", "wo"}) out.emplace_back(p + "." + w, e, e);
}

void add_gated_mlp(std::vector<std::tuple<std::string, int, int>>& out, const std::string& p, int e, int f) {
  out.emplace_back(p + ".w1", f, e);
  out.emplace_back(p + ".w2", f, e);
  out.emplace_back(p + ".w3", e, f);
}

void add_global_module(std::vector<std::tuple<std::string, int, int>>& out, const std::string& p, int e, int f) {
  add_attention(out, p + ".attn", e);
  out.emplace_back(p + ".norm1.scale", 1, e);
  add_gated_mlp(out, p + ".ffn", e, f);
  out.emplace_back(p + ".norm2.scale", 1, e);
}

bool is_unit_init(const std::string& name) {
  return name.ends_with(".scale") || name.ends_with(".gamma");
}

}  // namespace

std::vector<std::tuple<std::string, int, int>> PolicyModel::tensor_shapes(const ModelConfig& c) {
  c.validate();
  const int e = c.embed_dim;
  const int f = c.ff_hidden;
  std::vector<std::tuple<std::string, int, int>> out;
  out.emplace_back("init.depot", e, c.depot_feature_width());
  out.emplace_back("init.customer", e, ModelConfig::customer_feature_width());
  for (int l = 0; l < c.embedder_layers; ++l) {
    const std::string p = "iae." + std::to_string(l);
    out.emplace_back(p + ".norm_attn.scale", 1, e);
    add_attention(out, p + ".attn", e);
    out.emplace_back(p + ".norm_ffn.scale", 1, e);
    add_gated_mlp(out, p + ".ffn", e, f);
  }
  out.emplace_back("cie.init.w1", e, c.context_feature_width());
  out.emplace_back("cie.init.ln.gamma", 1, e);
  out.emplace_back("cie.init.ln.beta", 1, e);
  out.emplace_back("cie.init.w2", e, e);
  for (int l = 0; l < c.mixer_layers; ++l) {
    const std::string p = "mixer." + std::to_string(l);
    add_global_module(out, p + ".global", e, f);
    add_global_module(out, p + ".node", e, f);
    out.emplace_back(p + ".wg1", e, e);
    out.emplace_back(p + ".wg2", e, e);
  }
  out.emplace_back("dec.context", e, e + ModelConfig::decoder_state_width());
  add_attention(out, "dec.attn", e);
  return out;
}

PolicyModel::PolicyModel(ModelConfig config, std::uint64_t seed) : config_(config) {
  std::mt19937_64 rng(seed);
  for (const auto& [name, rows, cols] : tensor_shapes(config_)) {
    Matrix m(rows, cols);
    if (is_unit_init(name)) {
      m.fill(1.0);
    } else if (!name.ends_with(".beta")) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (double& v : m.storage()) v = u(rng);
    }
    params_.add(name, std::move(m));
  }
  bind_layout();
}

PolicyModel::PolicyModel(ModelConfig config, ParameterSet params) : config_(config), params_(std::move(params)) {
  const auto shapes = tensor_shapes(config_);
  if (static_cast<int>(shapes.size()) != params_.size())
    throw std::invalid_argument("parameter set has " + std::to_string(params_.size()) + " tensors, config expects " +
                                std::to_string(shapes.size()));
  for (int s = 0; s < params_.size(); ++s) {
    const auto& [name, rows, cols] = shapes[s];
    if (params_.name(s) != name)
      throw std::invalid_argument("parameter " + std::to_string(s) + " is '" + params_.name(s) + "', expected '" +
                                  name + "'");
    const Matrix& v = params_.value(s);
    if (v.rows() != rows || v.cols() != cols)
      throw std::invalid_argument("parameter '" + name + "' has shape " + v.shape_string() + ", expected " +
                                  std::to_string(rows) + "x" + std::to_string(cols));
  }
  bind_layout();
}

void PolicyModel::bind_layout() {
  const ParameterSet& p = params_;
  auto attn = [&p](const std::string& prefix) {
    return AttentionSlots{p.slot(prefix + ".wq"), p.slot(prefix + ".wk"), p.slot(prefix + ".wv"),
                          p.slot(prefix + ".wo")};
  };
  auto mlp = [&p](const std::string& prefix) {
    return GatedMlpSlots{p.slot(prefix + ".w1"), p.slot(prefix + ".w2"), p.slot(prefix + ".w3")};
  };
  auto global = [&](const std::string& prefix) {
    return GlobalModuleSlots{attn(prefix + ".attn"), p.slot(prefix + ".norm1.scale"), mlp(prefix + ".ffn"),
                             p.slot(prefix + ".norm2.scale")};
  };
  layout_.depot_proj = p.slot("init.depot");
  layout_.customer_proj = p.slot("init.customer");
  layout_.embedder.clear();
  for (int l = 0; l < config_.embedder_layers; ++l) {
    const std::string pre = "iae." + std::to_string(l);
    layout_.embedder.push_back(EmbedderBlockSlots{p.slot(pre + ".norm_attn.scale"), attn(pre + ".attn"),
                                                  p.slot(pre + ".norm_ffn.scale"), mlp(pre + ".ffn")});
  }
  layout_.context_proj = p.slot("cie.init.w1");
  layout_.context_ln_gamma = p.slot("cie.init.ln.gamma");
  layout_.context_ln_beta = p.slot("cie.init.ln.beta");
  layout_.context_out = p.slot("cie.init.w2");
  layout_.mixer.clear();
  for (int l = 0; l < config_.mixer_layers; ++l) {
    const std::string pre = "mixer." + std::to_string(l);
    layout_.mixer.push_back(MixerBlockSlots{global(pre + ".global"), global(pre + ".node"), p.slot(pre + ".wg1"),
                                            p.slot(pre + ".wg2")});
  }
  layout_.decoder_context = p.slot("dec.context");
  layout_.decoder_attn = attn("dec.attn");
}

namespace {

double window_close_feature(const NodeFeatures& nd, double horizon) {
  return std::isfinite(nd.l) ? nd.l : horizon;
}

double duration_feature(const Instance& x) {
  return std::isfinite(x.globals.duration_limit) ? x.globals.duration_limit : kUnboundedDurationFeature;
}

}  // namespace

Matrix depot_features(const Instance& x, const ModelConfig& config) {
  Matrix out(1, config.depot_feature_width());
  int c = 0;
  out(0, c++) = x.depot.x;
  out(0, c++) = x.depot.y;
  out(0, c++) = x.globals.open ? 1.0 : 0.0;
  out(0, c++) = duration_feature(x);
  if (config.mixed_backhaul_features) out(0, c++) = x.globals.mixed ? 1.0 : 0.0;
  out(0, c++) = window_close_feature(x.depot, x.globals.horizon);
  return out;
}

Matrix customer_features(const Instance& x) {
  Matrix out(x.n, ModelConfig::customer_feature_width());
  for (int i = 0; i < x.n; ++i) {
    const NodeFeatures& c = x.customers[i];
    out(i, 0) = c.x;
    out(i, 1) = c.y;
    out(i, 2) = c.ql;
    out(i, 3) = c.qb;
    out(i, 4) = c.e;
    out(i, 5) = window_close_feature(c, x.globals.horizon);
    out(i, 6) = c.s;
  }
  return out;
}

Matrix context_features(const Instance& x, const ModelConfig& config) {
  Matrix out(1, config.context_feature_width());
  const auto& ind = x.indicator;
  int c = 0;
  out(0, c++) = ind.b ? 1.0 : 0.0;
  if (config.mixed_backhaul_features) out(0, c++) = ind.mb ? 1.0 : 0.0;
  out(0, c++) = ind.o ? 1.0 : 0.0;
  out(0, c++) = ind.tw ? 1.0 : 0.0;
  out(0, c++) = ind.l ? 1.0 : 0.0;
  out(0, c++) = x.globals.open ? 1.0 : 0.0;
  out(0, c++) = duration_feature(x);
  if (config.mixed_backhaul_features) out(0, c++) = x.globals.mixed ? 1.0 : 0.0;
  return out;
}

std::array<double, 5> decoder_state_features(const Instance& x, const EnvState& s) {
  const double remaining = std::isfinite(x.globals.duration_limit)
                               ? x.globals.duration_limit - s.length
                               : kUnboundedDurationFeature;
  return {s.cap_linehaul, s.cap_backhaul, s.time, remaining, x.globals.open ? 1.0 : 0.0};
}

void check_supported(const PolicyModel& model, const Instance& x) {
  if ((x.indicator.mb || x.globals.mixed) && !model.config().mixed_backhaul_features)
    throw std::invalid_argument("variant " + x.variant_name +
                                " uses mixed backhaul, which this model has no input features for");
}

namespace {

Var multi_head_attention(Tape& t, const PolicyModel& model, const PolicyModel::AttentionSlots& s, Var query_rows,
                         Var key_rows, std::span<const std::uint8_t> mask = {}) {
  const Var q = ad::matmul_nt(t, query_rows, model.param(t, s.wq));
  const Var k = ad::matmul_nt(t, key_rows, model.param(t, s.wk));
  const Var v = ad::matmul_nt(t, key_rows, model.param(t, s.wv));
  const Var o = ad::attention(t, q, k, v, model.config().heads, mask);
  return ad::matmul_nt(t, o, model.param(t, s.wo));
}

Var gated_mlp(Tape& t, const PolicyModel& model, const PolicyModel::GatedMlpSlots& s, Var x) {
  const Var gate = ad::silu(t, ad::matmul_nt(t, x, model.param(t, s.w1)));
  const Var lin = ad::matmul_nt(t, x, model.param(t, s.w2));
  return ad::matmul_nt(t, ad::mul(t, gate, lin), model.param(t, s.w3));
}

Var global_module(Tape& t, const PolicyModel& model, const PolicyModel::GlobalModuleSlots& s, Var primary,
                  Var auxiliary) {
  const Var keys = ad::concat_rows(t, primary, auxiliary);
  const Var attended = multi_head_attention(t, model, s.attn, primary, keys);
  const Var a1 = ad::rms_norm(t, ad::add(t, primary, attended), model.param(t, s.norm1));
  return ad::rms_norm(t, ad::add(t, a1, gated_mlp(t, model, s.ffn, a1)), model.param(t, s.norm2));
}

void require_finite(const Tape& t, Var v, const std::string& where) {
  for (double x : t.value(v).storage()) {
    if (!std::isfinite(x)) throw std::runtime_error("non-finite activation in " + where);
  }
}

}  // namespace

Var initial_embeddings(Tape& t, const PolicyModel& model, const Instance& x) {
  const auto& L = model.layout();
  const Matrix depot = depot_features(x, model.config());
  const Matrix customers = customer_features(x);
  const Matrix& wg = model.parameters().value(L.depot_proj);
  const Matrix& wn = model.parameters().value(L.customer_proj);
  if (wg.cols() != depot.cols() || wn.cols() != customers.cols())
    throw std::invalid_argument("initial_embeddings: feature width does not match projection");
  const Var e_depot = ad::matmul_nt(t, t.constant(depot), model.param(t, L.depot_proj));
  const Var e_cust = ad::matmul_nt(t, t.constant(customers), model.param(t, L.customer_proj));
  return ad::concat_rows(t, e_depot, e_cust);
}

Var iae_forward(Tape& t, const PolicyModel& model, Var e0) {
  Var e = e0;
  const auto& blocks = model.layout().embedder;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& s = blocks[b];
    const Var n1 = ad::rms_norm(t, e, model.param(t, s.norm_attn));
    const Var e_hat = ad::add(t, e, multi_head_attention(t, model, s.attn, n1, n1));
    const Var n2 = ad::rms_norm(t, e_hat, model.param(t, s.norm_ffn));
    e = ad::add(t, e_hat, gated_mlp(t, model, s.ffn, n2));
    require_finite(t, e, "embedder block " + std::to_string(b));
  }
  return e;
}

Var cie_forward(Tape& t, const PolicyModel& model, Var h, const Instance& x) {
  const auto& L = model.layout();
  const Matrix ctx = context_features(x, model.config());
  if (ctx.cols() != model.parameters().value(L.context_proj).cols())
    throw std::invalid_argument("cie_forward: context width does not match projection");
  const Var z = ad::matmul_nt(t, t.constant(ctx), model.param(t, L.context_proj));
  const Var zn = ad::layer_norm(t, z, model.param(t, L.context_ln_gamma), model.param(t, L.context_ln_beta));
  const Var m0 = ad::matmul_nt(t, zn, model.param(t, L.context_out));

  const int rows = t.value(h).rows();
  Var m = ad::repeat_rows(t, m0, rows);
  Var em = h;
  for (std::size_t b = 0; b < L.mixer.size(); ++b) {
    const auto& s = L.mixer[b];
    if (!t.value(m).same_shape(t.value(em)))
      throw std::invalid_argument("cie_forward: stream shapes differ in mixer block " + std::to_string(b));
    const Var m_hat = global_module(t, model, s.global_stream, m, em);
    const Var em_hat = global_module(t, model, s.node_stream, em, m);
    m = ad::add(t, m_hat, ad::matmul_nt(t, em_hat, model.param(t, s.cross_to_global)));
    em = ad::add(t, em_hat, ad::matmul_nt(t, m_hat, model.param(t, s.cross_to_node)));
    require_finite(t, em, "mixer block " + std::to_string(b));
  }
  return em;
}

Var encode_intrinsic(Tape& t, const PolicyModel& model, const Instance& x) {
  check_supported(model, x);
  return iae_forward(t, model, initial_embeddings(t, model, x));
}

EncodedVars encode(Tape& t, const PolicyModel& model, const Instance& x) {
  EncodedVars out;
  out.h = encode_intrinsic(t, model, x);
  out.m = cie_forward(t, model, out.h, x);
  out.f = ad::add(t, out.h, out.m);
  return out;
}

EncodedInstance encode(const PolicyModel& model, const Instance& x) {
  Tape t;
  const EncodedVars v = encode(t, model, x);
  EncodedInstance out{t.value(v.h), t.value(v.m), t.value(v.f)};
  for (std::size_t i = 0; i < out.f.size(); ++i) {
    if (out.f[i] != out.h[i] + out.m[i]) throw std::logic_error("encode: f != h + m");
  }
  return out;
}

DecoderCache prepare_decoder(Tape& t, const PolicyModel& model, Var f) {
  const auto& s = model.layout().decoder_attn;
  return DecoderCache{f, ad::matmul_nt(t, f, model.param(t, s.wk)), ad::matmul_nt(t, f, model.param(t, s.wv))};
}

Var decoder_logits(Tape& t, const PolicyModel& model, const DecoderCache& cache, const std::vector<int>& prev_nodes,
                   const Matrix& state_features, std::span<const std::uint8_t> mask) {
  const auto& L = model.layout();
  const Var prev = ad::gather_rows(t, cache.f, prev_nodes);
  const Var ctx = ad::concat_cols(t, prev, t.constant(state_features));
  const Var g = ad::matmul_nt(t, ctx, model.param(t, L.decoder_context));
  const Var q = ad::matmul_nt(t, g, model.param(t, L.decoder_attn.wq));
  const Var glimpse = ad::attention(t, q, cache.keys, cache.values, model.config().heads, mask);
  const Var qc = ad::matmul_nt(t, glimpse, model.param(t, L.decoder_attn.wo));
  return ad::clipped_logits(t, qc, cache.f, model.config().logit_clip);
}

std::vector<double> decoder_logits(const PolicyModel& model, const Instance& x, const EnvState& s) {
  const RoutingEnv env(x);
  const auto mask = env.feasible_actions(s);
  Tape t;
  const EncodedVars enc = encode(t, model, x);
  const DecoderCache cache = prepare_decoder(t, model, enc.f);
  const auto feats = decoder_state_features(x, s);
  Matrix state(1, ModelConfig::decoder_state_width());
  for (int c = 0; c < state.cols(); ++c) state(0, c) = feats[c];
  const Var u = decoder_logits(t, model, cache, {s.position}, state, mask);
  std::vector<double> out(t.value(u).storage());
  for (std::size_t j = 0; j < out.size(); ++j)
    if (!mask[j]) out[j] = -std::numeric_limits<double>::infinity();
  return out;
}

std::vector<int> multistart_nodes(const RoutingEnv& env, int starts) {
  const int n = env.instance().n;
  if (starts < 1 || starts > n)
    throw std::invalid_argument("multistart: starts must be in [1, n], got " + std::to_string(starts));
  const EnvState s0 = env.reset();
  std::vector<int> nodes;
  for (int j = 1; j <= n && static_cast<int>(nodes.size()) < starts; ++j) {
    if (env.check_action(s0, j) == Violation::None) nodes.push_back(j);
  }
  if (static_cast<int>(nodes.size()) < starts)
    throw std::invalid_argument("multistart: only " + std::to_string(nodes.size()) +
                                " customers are feasible first moves");
  return nodes;
}

namespace {

int pick_action(std::span<const double> logits, std::span<const std::uint8_t> mask, DecodeMode mode,
                std::mt19937_64* rng) {
  if (mode == DecodeMode::Greedy || rng == nullptr) {
    int best = -1;
    for (std::size_t j = 0; j < logits.size(); ++j) {
      if (mask[j] && (best < 0 || logits[j] > logits[best])) best = static_cast<int>(j);
    }
    return best;
  }
  const auto p = ad::masked_softmax(logits, mask);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(*rng);
  double acc = 0.0;
  int last = -1;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (!mask[j]) continue;
    last = static_cast<int>(j);
    acc += p[j];
    if (r < acc) return last;
  }
  return last;
}

}  // namespace

RolloutRecord rollout(Tape& t, const PolicyModel& model, const EncodedVars& enc, const RoutingEnv& env,
                      const DecodeOptions& options, std::mt19937_64* rng,
                      const std::vector<std::vector<int>>* replay) {
  const Instance& x = env.instance();
  const int nodes = env.num_nodes();
  const bool forced = options.starts >= 1;
  const int lanes = forced ? options.starts : 1;
  if (replay && static_cast<int>(replay->size()) != lanes)
    throw std::invalid_argument("rollout: replay has " + std::to_string(replay->size()) + " sequences, expected " +
                                std::to_string(lanes));

  std::vector<EnvState> states(static_cast<std::size_t>(lanes), env.reset());
  std::vector<std::size_t> cursor(static_cast<std::size_t>(lanes), 0);
  RolloutRecord record;
  record.trajectories.resize(static_cast<std::size_t>(lanes));

  if (forced) {
    const std::vector<int> first = replay ? std::vector<int>{} : multistart_nodes(env, lanes);
    for (int r = 0; r < lanes; ++r) {
      const int a = replay ? (*replay)[r].at(0) : first[r];
      env.apply(states[r], a);
      record.trajectories[r].actions.push_back(a);
      cursor[r] = 1;
    }
  }

  const DecoderCache cache = prepare_decoder(t, model, enc.f);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(lanes) * nodes);
  std::vector<int> prev(static_cast<std::size_t>(lanes));
  std::vector<int> actions(static_cast<std::size_t>(lanes));
  Matrix state_feats(lanes, ModelConfig::decoder_state_width());

  while (true) {
    bool any_active = false;
    for (int r = 0; r < lanes; ++r) {
      auto row = std::span<std::uint8_t>(mask).subspan(static_cast<std::size_t>(r) * nodes, nodes);
      prev[r] = states[r].position;
      if (env.is_done(states[r])) {
        std::fill(row.begin(), row.end(), std::uint8_t{1});
        actions[r] = -1;
      } else {
        env.feasible_actions(states[r], row);
        actions[r] = 0;
        any_active = true;
      }
      const auto feats = decoder_state_features(x, states[r]);
      for (int c = 0; c < state_feats.cols(); ++c) state_feats(r, c) = feats[c];
    }
    if (!any_active) break;

    const Var u = decoder_logits(t, model, cache, prev, state_feats, mask);
    const Matrix& uv = t.value(u);
    for (int r = 0; r < lanes; ++r) {
      if (actions[r] < 0) continue;
      const auto row = std::span<const std::uint8_t>(mask).subspan(static_cast<std::size_t>(r) * nodes, nodes);
      if (replay) {
        const auto& seq = (*replay)[r];
        if (cursor[r] >= seq.size()) throw std::invalid_argument("rollout: replay sequence ends early");
        actions[r] = seq[cursor[r]++];
        if (actions[r] < 0 || actions[r] >= nodes || !row[actions[r]])
          throw InfeasibleAction(actions[r], env.check_action(states[r], std::clamp(actions[r], 0, nodes - 1)));
      } else {
        actions[r] = pick_action(uv.row(r), row, options.mode, rng);
      }
    }
    const Var lp = ad::masked_log_softmax_pick(t, u, mask, actions);
    record.step_log_probs.push_back(lp);
    const Matrix& lpv = t.value(lp);
    for (int r = 0; r < lanes; ++r) {
      if (actions[r] < 0) continue;
      env.apply(states[r], actions[r]);
      record.trajectories[r].actions.push_back(actions[r]);
      record.trajectories[r].log_prob += lpv(r, 0);
    }
  }

  for (int r = 0; r < lanes; ++r) {
    Trajectory& tr = record.trajectories[r];
    tr.solution = env.finalize(states[r]);
    tr.cost = solution_cost(x, tr.solution);
  }
  return record;
}

std::vector<Trajectory> rollout(const PolicyModel& model, const Instance& x, const DecodeOptions& options,
                                std::uint64_t seed) {
  Tape t;
  const EncodedVars enc = encode(t, model, x);
  const RoutingEnv env(x);
  std::mt19937_64 rng(seed);
  return rollout(t, model, enc, env, options, &rng).trajectories;
}

}  // namespace arc
