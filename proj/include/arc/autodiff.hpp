#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "arc/tensor.hpp"

// Reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every operation of one forward pass. Parameters enter as
// leaves that reference externally owned storage; their gradients are read
// back by slot index after backward(). A tape is single-threaded; parallel
// workers each own one.
namespace arc::ad {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var constant(Matrix value);
  /// Leaf bound to parameter storage `value` under `slot`. Repeated calls
  /// with the same slot return the same leaf. `value` must outlive the tape.
  Var parameter(const Matrix& value, int slot);

  const Matrix& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient buffer of v, zero-allocated on first use.
  Matrix& grad(Var v);
  bool has_grad(Var v) const { return !nodes_[v.id].grad.empty(); }

  /// Adds g to the gradient of v. Call for every output before backward().
  void seed(Var v, const Matrix& g);
  void backward();

  /// (slot, gradient) for every parameter leaf that received a gradient.
  template <typename F>
  void for_each_parameter_grad(F&& f) const {
    for (const auto& [slot, id] : param_leaves_) {
      if (!nodes_[id].grad.empty()) f(slot, nodes_[id].grad);
    }
  }

  /// Appends an op node. `fn` may be empty when no input requires a gradient.
  Var push(Matrix value, bool requires_grad, Backward fn);

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<int, int> param_slot_to_node_;
  std::vector<std::pair<int, int>> param_leaves_;  // (slot, node id), creation order
};

// Ops. Shapes in comments are rows x cols.

/// x (m x k) times w^T with w (n x k): the y = W x layer on row vectors.
Var matmul_nt(Tape& t, Var x, Var w);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var silu(Tape& t, Var x);
/// Row-wise RMS normalisation with a learned per-column scale (1 x k).
Var rms_norm(Tape& t, Var x, Var scale, double eps = 1e-6);
/// Row-wise layer normalisation with affine gamma, beta (1 x k).
Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps = 1e-5);
/// Scaled dot-product attention split into `heads` column blocks. q is
/// (mq x e), k and v are (mk x e). `mask`, when non-empty, is mq*mk flags
/// (row-major) with 1 meaning the key is visible; every row needs one.
Var attention(Tape& t, Var q, Var k, Var v, int heads, std::span<const std::uint8_t> mask = {});
Var concat_rows(Tape& t, Var a, Var b);
Var concat_cols(Tape& t, Var a, Var b);
Var gather_rows(Tape& t, Var x, std::vector<int> rows);
Var mean_rows(Tape& t, Var x);
Var repeat_rows(Tape& t, Var x, int times);
/// clip * tanh(q k^T / sqrt(cols)) for q (m x e), k (n x e).
Var clipped_logits(Tape& t, Var q, Var k, double clip);
/// Per row r with actions[r] >= 0: log softmax of logits[r] restricted to
/// mask[r], evaluated at actions[r]. Rows with actions[r] < 0 give 0.
/// Result is (m x 1).
Var masked_log_softmax_pick(Tape& t, Var logits, std::span<const std::uint8_t> mask,
                            std::vector<int> actions);

/// Softmax of one logits row restricted to the flagged entries; masked
/// entries get exactly 0.
std::vector<double> masked_softmax(std::span<const double> logits, std::span<const std::uint8_t> mask);

}  // namespace arc::ad
