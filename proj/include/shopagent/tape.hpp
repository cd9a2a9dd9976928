#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// tensors. A Tape records every operation of one forward pass; backward()
// replays them in reverse and accumulates parameter gradients into
// caller-owned buffers.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "shopagent/common.hpp"

namespace shopagent::model {

template <typename T>
using GradientBuffers = std::vector<std::vector<T>>;

template <typename T>
class Tape {
 public:
  struct Var {
    std::int32_t id = -1;
    std::uint32_t tape = 0;
    bool valid() const { return id >= 0; }
  };

  /// A non-recording tape computes values only; backward() on it is an error.
  explicit Tape(bool record = true);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t num_nodes() const { return nodes_.size(); }

  // Leaves ------------------------------------------------------------------
  Var constant(std::vector<T> values, int rows = 1);
  Var scalar(T v) { return constant({v}, 1); }
  /// Binds parameter tensor `index`; repeated calls return the same node.
  Var param(std::size_t index, const T* data, int rows, int cols);

  // Inspection --------------------------------------------------------------
  const T* data(Var v) const;
  std::span<const T> values(Var v) const;
  int rows(Var v) const { return node(v).rows; }
  int cols(Var v) const { return node(v).cols; }
  std::size_t size(Var v) const { return static_cast<std::size_t>(node(v).rows) * node(v).cols; }
  T item(Var v) const;

  // Operations --------------------------------------------------------------
  Var gather_rows(Var table, std::span<const int> ids);
  Var matmul(Var x, Var w);           // (n x in)(in x out)
  Var matmul_nt(Var a, Var b);        // (n x k)(m x k)^T -> n x m
  Var add_row_bias(Var x, Var bias);  // every row of x plus bias
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, T c);
  Var add_scalar(Var a, T c);
  Var tanh(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var square(Var a);
  Var minimum(Var a, Var b);
  Var clamp(Var a, T lo, T hi);
  Var sum(Var a);
  Var mean(Var a);
  Var dot(Var a, Var b);
  Var concat(Var a, Var b);  // row-wise: (n x p), (n x q) -> n x (p + q)
  Var stack(std::span<const Var> scalars);
  Var matvec(Var m, Var v);  // (L x d)(d) -> L
  Var vecmat(Var a, Var m);  // (L)(L x d) -> d
  // Row-wise over a matrix; a vector is a single row.
  Var softmax(Var a);
  Var log_softmax(Var a);
  Var pick(Var a, int index);
  /// Row vector of a[row_ids[i], col_ids[i]].
  Var pick_many(Var a, std::span<const int> row_ids, std::span<const int> col_ids);
  /// base + gate * scatter(weights -> ids), row by row: adds
  /// gate * weights[r, i] at base[r, ids[i]].
  Var scatter_add(Var base, Var weights, std::span<const int> ids, Var gate);

  /// Accumulates d(loss)/d(param) into grads[param index]. Buffers must be
  /// sized like the bound parameter tensors.
  void backward(Var loss, GradientBuffers<T>& grads);

 private:
  struct Node {
    std::vector<T> val;
    const T* ext = nullptr;
    std::vector<T> grad;
    T* ext_grad = nullptr;
    int rows = 0;
    int cols = 0;
    int param = -1;
    bool needs_grad = false;
    std::function<void()> back;
  };

  const Node& node(Var v) const;
  Node& node(Var v);
  Var push(std::vector<T> val, int rows, int cols, bool needs_grad);
  T* grad(std::int32_t id);
  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }
  template <typename F>
  void on_backward(Var out, F&& f) {
    if (record_ && nodes_[static_cast<std::size_t>(out.id)].needs_grad)
      nodes_[static_cast<std::size_t>(out.id)].back = std::forward<F>(f);
  }

  bool record_;
  std::uint32_t serial_;
  std::vector<Node> nodes_;
  std::vector<std::int32_t> param_nodes_;
};

}  // namespace shopagent::model
