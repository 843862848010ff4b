#include "arc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "arc/kernels.hpp"

namespace arc::ad {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void require_same(const Matrix& a, const Matrix& b, const char* op) {
  require(a.same_shape(b), std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var Tape::push(Matrix value, bool requires_grad, Backward fn) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::parameter(const Matrix& value, int slot) {
  if (auto it = param_slot_to_node_.find(slot); it != param_slot_to_node_.end()) return Var{it->second};
  Node node;
  node.external = &value;
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_slot_to_node_.emplace(slot, id);
  param_leaves_.emplace_back(slot, id);
  return Var{id};
}

const Matrix& Tape::value(Var v) const {
  const Node& n = nodes_[v.id];
  return n.external ? *n.external : n.value;
}

Matrix& Tape::grad(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.empty()) {
    const Matrix& val = n.external ? *n.external : n.value;
    n.grad = Matrix(val.rows(), val.cols());
  }
  return n.grad;
}

void Tape::seed(Var v, const Matrix& g) {
  require_same(value(v), g, "Tape::seed");
  if (!nodes_[v.id].requires_grad) return;
  Matrix& dst = grad(v);
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

void Tape::backward() {
  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

Var matmul_nt(Tape& t, Var x, Var w) {
  Matrix out;
  kernels::matmul_nt(t.value(x), t.value(w), out);
  const bool rg = t.requires_grad(x) || t.requires_grad(w);
  return t.push(std::move(out), rg, [x, w](Tape& t, const Matrix& g) {
    if (t.requires_grad(x)) kernels::matmul_nn(g, t.value(w), t.grad(x), true);
    if (t.requires_grad(w)) kernels::matmul_tn(g, t.value(x), t.grad(w), true);
  });
}

Var add(Tape& t, Var a, Var b) {
  const Matrix& va = t.value(a);
  const Matrix& vb = t.value(b);
  require_same(va, vb, "add");
  Matrix out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.push(std::move(out), rg, [a, b](Tape& t, const Matrix& g) {
    for (Var v : {a, b}) {
      if (!t.requires_grad(v)) continue;
      Matrix& d = t.grad(v);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

Var sub(Tape& t, Var a, Var b) {
  const Matrix& va = t.value(a);
  const Matrix& vb = t.value(b);
  require_same(va, vb, "sub");
  Matrix out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.push(std::move(out), rg, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) {
      Matrix& d = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    if (t.requires_grad(b)) {
      Matrix& d = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
    }
  });
}

Var mul(Tape& t, Var a, Var b) {
  const Matrix& va = t.value(a);
  const Matrix& vb = t.value(b);
  require_same(va, vb, "mul");
  Matrix out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.push(std::move(out), rg, [a, b](Tape& t, const Matrix& g) {
    const Matrix& va = t.value(a);
    const Matrix& vb = t.value(b);
    if (t.requires_grad(a)) {
      Matrix& d = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * vb[i];
    }
    if (t.requires_grad(b)) {
      Matrix& d = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * va[i];
    }
  });
}

Var silu(Tape& t, Var x) {
  const Matrix& vx = t.value(x);
  Matrix out(vx.rows(), vx.cols());
  for (std::size_t i = 0; i < vx.size(); ++i) out[i] = vx[i] * sigmoid(vx[i]);
  return t.push(std::move(out), t.requires_grad(x), [x](Tape& t, const Matrix& g) {
    const Matrix& vx = t.value(x);
    Matrix& d = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = sigmoid(vx[i]);
      d[i] += g[i] * s * (1.0 + vx[i] * (1.0 - s));
    }
  });
}

Var rms_norm(Tape& t, Var x, Var scale, double eps) {
  const Matrix& vx = t.value(x);
  const Matrix& vs = t.value(scale);
  require(vs.rows() == 1 && vs.cols() == vx.cols(), "rms_norm: scale must be 1x" + std::to_string(vx.cols()));
  const int m = vx.rows();
  const int k = vx.cols();
  Matrix out(m, k);
  std::vector<double> inv_rms(static_cast<std::size_t>(m));
  for (int r = 0; r < m; ++r) {
    double ss = 0.0;
    for (int c = 0; c < k; ++c) ss += vx(r, c) * vx(r, c);
    const double inv = 1.0 / std::sqrt(ss / k + eps);
    inv_rms[r] = inv;
    for (int c = 0; c < k; ++c) out(r, c) = vx(r, c) * inv * vs(0, c);
  }
  const bool rg = t.requires_grad(x) || t.requires_grad(scale);
  return t.push(std::move(out), rg, [x, scale, inv_rms = std::move(inv_rms)](Tape& t, const Matrix& g) {
    const Matrix& vx = t.value(x);
    const Matrix& vs = t.value(scale);
    const int m = vx.rows();
    const int k = vx.cols();
    if (t.requires_grad(scale)) {
      Matrix& ds = t.grad(scale);
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < k; ++c) ds(0, c) += g(r, c) * vx(r, c) * inv_rms[r];
    }
    if (t.requires_grad(x)) {
      Matrix& dx = t.grad(x);
      for (int r = 0; r < m; ++r) {
        const double inv = inv_rms[r];
        double dot = 0.0;
        for (int c = 0; c < k; ++c) dot += g(r, c) * vs(0, c) * vx(r, c) * inv;
        dot /= k;
        for (int c = 0; c < k; ++c) dx(r, c) += inv * (g(r, c) * vs(0, c) - vx(r, c) * inv * dot);
      }
    }
  });
}

Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps) {
  const Matrix& vx = t.value(x);
  const Matrix& vg = t.value(gamma);
  const Matrix& vb = t.value(beta);
  const int m = vx.rows();
  const int k = vx.cols();
  require(vg.rows() == 1 && vg.cols() == k && vb.rows() == 1 && vb.cols() == k,
          "layer_norm: affine parameters must be 1x" + std::to_string(k));
  Matrix xhat(m, k);
  std::vector<double> inv_sigma(static_cast<std::size_t>(m));
  Matrix out(m, k);
  for (int r = 0; r < m; ++r) {
    double mean = 0.0;
    for (int c = 0; c < k; ++c) mean += vx(r, c);
    mean /= k;
    double var = 0.0;
    for (int c = 0; c < k; ++c) var += (vx(r, c) - mean) * (vx(r, c) - mean);
    var /= k;
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_sigma[r] = inv;
    for (int c = 0; c < k; ++c) {
      xhat(r, c) = (vx(r, c) - mean) * inv;
      out(r, c) = xhat(r, c) * vg(0, c) + vb(0, c);
    }
  }
  const bool rg = t.requires_grad(x) || t.requires_grad(gamma) || t.requires_grad(beta);
  return t.push(std::move(out), rg,
                [x, gamma, beta, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](Tape& t, const Matrix& g) {
                  const Matrix& vg = t.value(gamma);
                  const int m = xhat.rows();
                  const int k = xhat.cols();
                  if (t.requires_grad(gamma)) {
                    Matrix& d = t.grad(gamma);
                    for (int r = 0; r < m; ++r)
                      for (int c = 0; c < k; ++c) d(0, c) += g(r, c) * xhat(r, c);
                  }
                  if (t.requires_grad(beta)) {
                    Matrix& d = t.grad(beta);
                    for (int r = 0; r < m; ++r)
                      for (int c = 0; c < k; ++c) d(0, c) += g(r, c);
                  }
                  if (t.requires_grad(x)) {
                    Matrix& dx = t.grad(x);
                    for (int r = 0; r < m; ++r) {
                      double mean_d = 0.0;
                      double mean_dx = 0.0;
                      for (int c = 0; c < k; ++c) {
                        const double dh = g(r, c) * vg(0, c);
                        mean_d += dh;
                        mean_dx += dh * xhat(r, c);
                      }
                      mean_d /= k;
                      mean_dx /= k;
                      for (int c = 0; c < k; ++c) {
                        const double dh = g(r, c) * vg(0, c);
                        dx(r, c) += inv_sigma[r] * (dh - mean_d - xhat(r, c) * mean_dx);
                      }
                    }
                  }
                });
}

Var attention(Tape& t, Var q, Var k, Var v, int heads, std::span<const std::uint8_t> mask) {
  const Matrix& vq = t.value(q);
  const Matrix& vk = t.value(k);
  const Matrix& vv = t.value(v);
  const int mq = vq.rows();
  const int mk = vk.rows();
  const int e = vq.cols();
  require(vk.cols() == e && vv.cols() == e && vv.rows() == mk, "attention: q/k/v shapes disagree");
  require(heads >= 1 && e % heads == 0, "attention: width not divisible by head count");
  require(mask.empty() || mask.size() == static_cast<std::size_t>(mq) * mk, "attention: mask size mismatch");
  const int dh = e / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // probs[h][i*mk + j]
  std::vector<double> probs(static_cast<std::size_t>(heads) * mq * mk, 0.0);
  Matrix out(mq, e);
  std::vector<double> row(static_cast<std::size_t>(mk));
  for (int h = 0; h < heads; ++h) {
    const int off = h * dh;
    for (int i = 0; i < mq; ++i) {
      const double* qi = vq.data() + static_cast<std::size_t>(i) * e + off;
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < mk; ++j) {
        if (!mask.empty() && !mask[static_cast<std::size_t>(i) * mk + j]) {
          row[j] = -std::numeric_limits<double>::infinity();
          continue;
        }
        const double* kj = vk.data() + static_cast<std::size_t>(j) * e + off;
        double s = 0.0;
        for (int c = 0; c < dh; ++c) s += qi[c] * kj[c];
        row[j] = s * scale;
        mx = std::max(mx, row[j]);
      }
      require(std::isfinite(mx), "attention: query row " + std::to_string(i) + " sees no key");
      double denom = 0.0;
      for (int j = 0; j < mk; ++j) {
        row[j] = std::isinf(row[j]) ? 0.0 : std::exp(row[j] - mx);
        denom += row[j];
      }
      double* p = probs.data() + (static_cast<std::size_t>(h) * mq + i) * mk;
      double* oi = out.data() + static_cast<std::size_t>(i) * e + off;
      for (int j = 0; j < mk; ++j) {
        p[j] = row[j] / denom;
        if (p[j] == 0.0) continue;
        const double* vj = vv.data() + static_cast<std::size_t>(j) * e + off;
        for (int c = 0; c < dh; ++c) oi[c] += p[j] * vj[c];
      }
    }
  }

  const bool rg = t.requires_grad(q) || t.requires_grad(k) || t.requires_grad(v);
  return t.push(std::move(out), rg, [q, k, v, heads, scale, probs = std::move(probs)](Tape& t, const Matrix& g) {
    const Matrix& vq = t.value(q);
    const Matrix& vk = t.value(k);
    const Matrix& vv = t.value(v);
    const int mq = vq.rows();
    const int mk = vk.rows();
    const int e = vq.cols();
    const int dh = e / heads;
    const bool gq = t.requires_grad(q);
    const bool gk = t.requires_grad(k);
    const bool gv = t.requires_grad(v);
    double* dq = gq ? t.grad(q).data() : nullptr;
    double* dk = gk ? t.grad(k).data() : nullptr;
    double* dv = gv ? t.grad(v).data() : nullptr;
    std::vector<double> dp(static_cast<std::size_t>(mk));
    for (int h = 0; h < heads; ++h) {
      const int off = h * dh;
      for (int i = 0; i < mq; ++i) {
        const double* p = probs.data() + (static_cast<std::size_t>(h) * mq + i) * mk;
        const double* gi = g.data() + static_cast<std::size_t>(i) * e + off;
        double rowdot = 0.0;
        for (int j = 0; j < mk; ++j) {
          if (p[j] == 0.0) {
            dp[j] = 0.0;
            continue;
          }
          const double* vj = vv.data() + static_cast<std::size_t>(j) * e + off;
          double s = 0.0;
          for (int c = 0; c < dh; ++c) s += gi[c] * vj[c];
          dp[j] = s;
          rowdot += p[j] * s;
          if (gv) {
            double* dvj = dv + static_cast<std::size_t>(j) * e + off;
            for (int c = 0; c < dh; ++c) dvj[c] += p[j] * gi[c];
          }
        }
        if (!gq && !gk) continue;
        const double* qi = vq.data() + static_cast<std::size_t>(i) * e + off;
        double* dqi = gq ? dq + static_cast<std::size_t>(i) * e + off : nullptr;
        for (int j = 0; j < mk; ++j) {
          if (p[j] == 0.0) continue;
          const double ds = p[j] * (dp[j] - rowdot) * scale;
          const double* kj = vk.data() + static_cast<std::size_t>(j) * e + off;
          if (gq)
            for (int c = 0; c < dh; ++c) dqi[c] += ds * kj[c];
          if (gk) {
            double* dkj = dk + static_cast<std::size_t>(j) * e + off;
            for (int c = 0; c < dh; ++c) dkj[c] += ds * qi[c];
          }
        }
      }
    }
  });
}

Var concat_rows(Tape& t, Var a, Var b) {
  const Matrix& va = t.value(a);
  const Matrix& vb = t.value(b);
  require(va.cols() == vb.cols(), "concat_rows: column mismatch " + va.shape_string() + " vs " + vb.shape_string());
  Matrix out(va.rows() + vb.rows(), va.cols());
  std::copy(va.storage().begin(), va.storage().end(), out.storage().begin());
  std::copy(vb.storage().begin(), vb.storage().end(), out.storage().begin() + static_cast<std::ptrdiff_t>(va.size()));
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.push(std::move(out), rg, [a, b](Tape& t, const Matrix& g) {
    const std::size_t na = t.value(a).size();
    if (t.requires_grad(a)) {
      Matrix& d = t.grad(a);
      for (std::size_t i = 0; i < na; ++i) d[i] += g[i];
    }
    if (t.requires_grad(b)) {
      Matrix& d = t.grad(b);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[na + i];
    }
  });
}

Var concat_cols(Tape& t, Var a, Var b) {
  const Matrix& va = t.value(a);
  const Matrix& vb = t.value(b);
  require(va.rows() == vb.rows(), "concat_cols: row mismatch " + va.shape_string() + " vs " + vb.shape_string());
  const int ca = va.cols();
  const int cb = vb.cols();
  Matrix out(va.rows(), ca + cb);
  for (int r = 0; r < va.rows(); ++r) {
    for (int c = 0; c < ca; ++c) out(r, c) = va(r, c);
    for (int c = 0; c < cb; ++c) out(r, ca + c) = vb(r, c);
  }
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.push(std::move(out), rg, [a, b](Tape& t, const Matrix& g) {
    const int ca = t.value(a).cols();
    const int cb = t.value(b).cols();
    if (t.requires_grad(a)) {
      Matrix& d = t.grad(a);
      for (int r = 0; r < g.rows(); ++r)
        for (int c = 0; c < ca; ++c) d(r, c) += g(r, c);
    }
    if (t.requires_grad(b)) {
      Matrix& d = t.grad(b);
      for (int r = 0; r < g.rows(); ++r)
        for (int c = 0; c < cb; ++c) d(r, c) += g(r, ca + c);
    }
  });
}

Var gather_rows(Tape& t, Var x, std::vector<int> rows) {
  const Matrix& vx = t.value(x);
  Matrix out(static_cast<int>(rows.size()), vx.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require(rows[r] >= 0 && rows[r] < vx.rows(), "gather_rows: index out of range");
    std::copy(vx.row(rows[r]).begin(), vx.row(rows[r]).end(), out.row(static_cast<int>(r)).begin());
  }
  return t.push(std::move(out), t.requires_grad(x), [x, rows = std::move(rows)](Tape& t, const Matrix& g) {
    Matrix& d = t.grad(x);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      auto src = g.row(static_cast<int>(r));
      auto dst = d.row(rows[r]);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  });
}

Var mean_rows(Tape& t, Var x) {
  const Matrix& vx = t.value(x);
  require(vx.rows() > 0, "mean_rows: empty input");
  Matrix out(1, vx.cols());
  for (int r = 0; r < vx.rows(); ++r)
    for (int c = 0; c < vx.cols(); ++c) out(0, c) += vx(r, c);
  for (int c = 0; c < vx.cols(); ++c) out(0, c) /= vx.rows();
  return t.push(std::move(out), t.requires_grad(x), [x](Tape& t, const Matrix& g) {
    Matrix& d = t.grad(x);
    const double inv = 1.0 / d.rows();
    for (int r = 0; r < d.rows(); ++r)
      for (int c = 0; c < d.cols(); ++c) d(r, c) += g(0, c) * inv;
  });
}

Var repeat_rows(Tape& t, Var x, int times) {
  const Matrix& vx = t.value(x);
  require(vx.rows() == 1 && times >= 1, "repeat_rows: expects a single row and times >= 1");
  Matrix out(times, vx.cols());
  for (int r = 0; r < times; ++r) std::copy(vx.storage().begin(), vx.storage().end(), out.row(r).begin());
  return t.push(std::move(out), t.requires_grad(x), [x](Tape& t, const Matrix& g) {
    Matrix& d = t.grad(x);
    for (int r = 0; r < g.rows(); ++r)
      for (int c = 0; c < g.cols(); ++c) d(0, c) += g(r, c);
  });
}

Var clipped_logits(Tape& t, Var q, Var k, double clip) {
  const Matrix& vq = t.value(q);
  const Matrix& vk = t.value(k);
  Matrix th;
  kernels::matmul_nt(vq, vk, th);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(vq.cols()));
  Matrix out(th.rows(), th.cols());
  for (std::size_t i = 0; i < th.size(); ++i) {
    th[i] = std::tanh(th[i] * inv_sqrt);
    out[i] = clip * th[i];
  }
  const bool rg = t.requires_grad(q) || t.requires_grad(k);
  return t.push(std::move(out), rg, [q, k, clip, inv_sqrt, th = std::move(th)](Tape& t, const Matrix& g) {
    Matrix da(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] * clip * (1.0 - th[i] * th[i]) * inv_sqrt;
    if (t.requires_grad(q)) kernels::matmul_nn(da, t.value(k), t.grad(q), true);
    if (t.requires_grad(k)) kernels::matmul_tn(da, t.value(q), t.grad(k), true);
  });
}

std::vector<double> masked_softmax(std::span<const double> logits, std::span<const std::uint8_t> mask) {
  require(logits.size() == mask.size(), "masked_softmax: mask size mismatch");
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < logits.size(); ++j)
    if (mask[j]) mx = std::max(mx, logits[j]);
  require(std::isfinite(mx), "masked_softmax: no feasible entry");
  std::vector<double> p(logits.size(), 0.0);
  double denom = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (!mask[j]) continue;
    p[j] = std::exp(logits[j] - mx);
    denom += p[j];
  }
  for (double& v : p) v /= denom;
  return p;
}

Var masked_log_softmax_pick(Tape& t, Var logits, std::span<const std::uint8_t> mask, std::vector<int> actions) {
  const Matrix& u = t.value(logits);
  const int m = u.rows();
  const int n = u.cols();
  require(mask.size() == static_cast<std::size_t>(m) * n, "masked_log_softmax_pick: mask size mismatch");
  require(actions.size() == static_cast<std::size_t>(m), "masked_log_softmax_pick: one action per row");
  Matrix out(m, 1);
  Matrix probs(m, n);
  for (int r = 0; r < m; ++r) {
    const int a = actions[r];
    if (a < 0) continue;
    const auto mrow = mask.subspan(static_cast<std::size_t>(r) * n, static_cast<std::size_t>(n));
    require(a < n && mrow[a], "masked_log_softmax_pick: action " + std::to_string(a) + " is masked");
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j)
      if (mrow[j]) mx = std::max(mx, u(r, j));
    double denom = 0.0;
    for (int j = 0; j < n; ++j)
      if (mrow[j]) denom += std::exp(u(r, j) - mx);
    const double lse = mx + std::log(denom);
    out(r, 0) = u(r, a) - lse;
    for (int j = 0; j < n; ++j)
      if (mrow[j]) probs(r, j) = std::exp(u(r, j) - lse);
  }
  return t.push(std::move(out), t.requires_grad(logits),
                [logits, actions = std::move(actions), probs = std::move(probs)](Tape& t, const Matrix& g) {
                  Matrix& d = t.grad(logits);
                  for (int r = 0; r < probs.rows(); ++r) {
                    const int a = actions[r];
                    if (a < 0 || g(r, 0) == 0.0) continue;
                    for (int j = 0; j < probs.cols(); ++j) d(r, j) -= g(r, 0) * probs(r, j);
                    d(r, a) += g(r, 0);
                  }
                });
}

}  // namespace arc::ad
