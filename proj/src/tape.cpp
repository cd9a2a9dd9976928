#include "shopagent/tape.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "shopagent/kernels.hpp"

namespace shopagent::model {
namespace {
std::atomic<std::uint32_t> g_tape_serial{1};
}

template <typename T>
Tape<T>::Tape(bool record) : record_(record), serial_(g_tape_serial.fetch_add(1)) {
  nodes_.reserve(256);
}

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
  require(v.valid() && v.tape == serial_ && static_cast<std::size_t>(v.id) < nodes_.size(),
          "variable does not belong to this tape");
  return nodes_[static_cast<std::size_t>(v.id)];
}

template <typename T>
typename Tape<T>::Node& Tape<T>::node(Var v) {
  return const_cast<Node&>(static_cast<const Tape&>(*this).node(v));
}

template <typename T>
typename Tape<T>::Var Tape<T>::push(std::vector<T> val, int rows, int cols, bool needs_grad) {
  Node n;
  n.val = std::move(val);
  n.rows = rows;
  n.cols = cols;
  n.needs_grad = record_ && needs_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1), serial_};
}

template <typename T>
T* Tape<T>::grad(std::int32_t id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.ext_grad) return n.ext_grad;
  if (n.grad.empty()) n.grad.assign(static_cast<std::size_t>(n.rows) * n.cols, T(0));
  return n.grad.data();
}

template <typename T>
const T* Tape<T>::data(Var v) const {
  const Node& n = node(v);
  return n.ext ? n.ext : n.val.data();
}

template <typename T>
std::span<const T> Tape<T>::values(Var v) const {
  return {data(v), size(v)};
}

template <typename T>
T Tape<T>::item(Var v) const {
  require(size(v) == 1, "item() on a non-scalar");
  return data(v)[0];
}

template <typename T>
typename Tape<T>::Var Tape<T>::constant(std::vector<T> values, int rows) {
  const int n = static_cast<int>(values.size());
  const int cols = rows > 0 ? n / rows : n;
  return push(std::move(values), rows, cols, false);
}

template <typename T>
typename Tape<T>::Var Tape<T>::param(std::size_t index, const T* data, int rows, int cols) {
  if (param_nodes_.size() <= index) param_nodes_.resize(index + 1, -1);
  if (param_nodes_[index] >= 0) return Var{param_nodes_[index], serial_};
  Node n;
  n.ext = data;
  n.rows = rows;
  n.cols = cols;
  n.param = static_cast<int>(index);
  n.needs_grad = record_;
  nodes_.push_back(std::move(n));
  param_nodes_[index] = static_cast<std::int32_t>(nodes_.size() - 1);
  return Var{param_nodes_[index], serial_};
}

template <typename T>
typename Tape<T>::Var Tape<T>::gather_rows(Var table, std::span<const int> ids) {
  const int d = cols(table);
  const int vocab = rows(table);
  const T* src = data(table);
  std::vector<T> out(ids.size() * static_cast<std::size_t>(d));
  for (std::size_t r = 0; r < ids.size(); ++r) {
    require(ids[r] >= 0 && ids[r] < vocab, "gather_rows: id out of range");
    std::copy_n(src + static_cast<std::size_t>(ids[r]) * d, d, out.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  Var y = push(std::move(out), static_cast<int>(ids.size()), d, needs(table));
  on_backward(y, [this, y, table, idx = std::vector<int>(ids.begin(), ids.end()), d] {
    const T* g = grad(y.id);
    T* gt = grad(table.id);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      T* dst = gt + static_cast<std::size_t>(idx[r]) * d;
      const T* gr = g + r * d;
      for (int j = 0; j < d; ++j) dst[j] += gr[j];
    }
  });
  return y;
}

template <typename T>
typename Tape<T>::Var Tape<T>::matmul(Var x, Var w) {
  const auto n = static_cast<std::size_t>(rows(x));
  const auto in = static_cast<std::size_t>(cols(x));
  const auto out = static_cast<std::size_t>(cols(w));
  require(static_cast<std::size_t>(rows(w)) == in, "matmul: shape mismatch");
  std::vector<T> y(n * out, T(0));
  kernels::matmul_acc(data(x), data(w), y.data(), n, in, out);
  Var v = push(std::move(y), static_cast<int>(n), static_cast<int>(out), needs(x) || needs(w));
  on_backward(v, [this, v, x, w, n, in, out] {
    const T* g = grad(v.id);
    if (needs(x)) kernels::matmul_grad_input(g, data(w), grad(x.id), n, in, out);
    if (needs(w)) kernels::matmul_grad_weight(data(x), g, grad(w.id), n, in, out);
  });
  return v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::add_row_bias(Var x, Var bias) {
  const int n = rows(x), m = cols(x);
  require(size(bias) == static_cast<std::size_t>(m), "add_row_bias: shape mismatch");
  std::vector<T> y(values(x).begin(), values(x).end());
  const T* b = data(bias);
  for (int r = 0; r < n; ++r)
    for (int j = 0; j < m; ++j) y[static_cast<std::size_t>(r) * m + j] += b[j];
  Var v = push(std::move(y), n, m, needs(x) || needs(bias));
  on_backward(v, [this, v, x, bias, n, m] {
    const T* g = grad(v.id);
    if (needs(x)) {
      T* gx = grad(x.id);
      for (std::size_t i = 0; i < static_cast<std::size_t>(n) * m; ++i) gx[i] += g[i];
    }
    if (needs(bias)) {
      T* gb = grad(bias.id);
      for (int r = 0; r < n; ++r)
        for (int j = 0; j < m; ++j) gb[j] += g[static_cast<std::size_t>(r) * m + j];
    }
  });
  return v;
}

// Elementwise binary ops broadcast a size-1 operand.
#define SHOPAGENT_BINARY(NAME, FWD, DA, DB)                                                   \
  template <typename T>                                                                       \
  typename Tape<T>::Var Tape<T>::NAME(Var a, Var b) {                                         \
    const std::size_t na = size(a), nb = size(b);                                            \
    require(na == nb || na == 1 || nb == 1, #NAME ": shape mismatch");                        \
    const std::size_t n = std::max(na, nb);                                                   \
    const T* pa = data(a);                                                                    \
    const T* pb = data(b);                                                                    \
    std::vector<T> y(n);                                                                      \
    for (std::size_t i = 0; i < n; ++i) {                                                     \
      const T av = pa[na == 1 ? 0 : i];                                                       \
      const T bv = pb[nb == 1 ? 0 : i];                                                       \
      y[i] = FWD;                                                                             \
    }                                                                                         \
    const int r = na >= nb ? rows(a) : rows(b);                                               \
    const int c = na >= nb ? cols(a) : cols(b);                                               \
    Var v = push(std::move(y), r, c, needs(a) || needs(b));                                   \
    on_backward(v, [this, v, a, b, na, nb, n] {                                               \
      const T* g = grad(v.id);                                                                \
      const T* pa = data(a);                                                                  \
      const T* pb = data(b);                                                                  \
      T* ga = needs(a) ? grad(a.id) : nullptr;                                                \
      T* gb = needs(b) ? grad(b.id) : nullptr;                                                \
      for (std::size_t i = 0; i < n; ++i) {                                                   \
        const T av = pa[na == 1 ? 0 : i];                                                     \
        const T bv = pb[nb == 1 ? 0 : i];                                                     \
        (void)av;                                                                             \
        (void)bv;                                                                             \
        if (ga) ga[na == 1 ? 0 : i] += g[i] * (DA);                                           \
        if (gb) gb[nb == 1 ? 0 : i] += g[i] * (DB);                                           \
      }                                                                                       \
    });                                                                                       \
    return v;                                                                                 \
  }

SHOPAGENT_BINARY(add, av + bv, T(1), T(1))
SHOPAGENT_BINARY(sub, av - bv, T(1), T(-1))
SHOPAGENT_BINARY(mul, av * bv, bv, av)
SHOPAGENT_BINARY(minimum, av <= bv ? av : bv, (av <= bv ? T(1) : T(0)), (av <= bv ? T(0) : T(1)))
#undef SHOPAGENT_BINARY

// Elementwise unary ops; DX may use x (input) and y (output).
#define SHOPAGENT_UNARY(NAME, FWD, DX)                                     \
  template <typename T>                                                    \
  typename Tape<T>::Var Tape<T>::NAME(Var a) {                             \
    const std::size_t n = size(a);                                         \
    const T* pa = data(a);                                                 \
    std::vector<T> out(n);                                                 \
    for (std::size_t i = 0; i < n; ++i) {                                  \
      const T x = pa[i];                                                   \
      out[i] = FWD;                                                        \
    }                                                                      \
    Var v = push(std::move(out), rows(a), cols(a), needs(a));              \
    on_backward(v, [this, v, a, n] {                                       \
      const T* g = grad(v.id);                                             \
      const T* px = data(a);                                               \
      const T* py = data(v);                                               \
      T* ga = grad(a.id);                                                  \
      for (std::size_t i = 0; i < n; ++i) {                                \
        const T x = px[i];                                                 \
        const T y = py[i];                                                 \
        (void)x;                                                           \
        (void)y;                                                           \
        ga[i] += g[i] * (DX);                                              \
      }                                                                    \
    });                                                                    \
    return v;                                                              \
  }

SHOPAGENT_UNARY(tanh, std::tanh(x), T(1) - y * y)
SHOPAGENT_UNARY(exp, std::exp(x), y)
SHOPAGENT_UNARY(log, std::log(x), T(1) / x)
SHOPAGENT_UNARY(square, x * x, T(2) * x)
#undef SHOPAGENT_UNARY

template <typename T>
typename Tape<T>::Var Tape<T>::scale(Var a, T c) {
  const std::size_t n = size(a);
  std::vector<T> out(values(a).begin(), values(a).end());
  for (auto& x : out) x *= c;
  Var v = push(std::move(out), rows(a), cols(a), needs(a));
  on_backward(v, [this, v, a, n, c] {
    const T* g = grad(v.id);
    T* ga = grad(a.id);
    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * c;
  });
  return v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::add_scalar(Var a, T c) {
  const std::size_t n = size(a);
  std::vector<T> out(values(a).begin(), values(a).end());
  for (auto& x : out) x += c;
  Var v = push(std::move(out), rows(a), cols(a), needs(a));
  on_backward(v, [this, v, a, n] {
    const T* g = grad(v.id);
    T* ga = grad(a.id);
    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
  });
  return v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::clamp(Var a, T lo, T hi) {
  const std::size_t n = size(a);
  std::vector<T> out(values(a).begin(), values(a).end());
  for (auto& x : out) x = std::min(std::max(x, lo), hi);
  Var v = push(std::move(out), rows(a), cols(a), needs(a));
  on_backward(v, [this, v, a, n, lo, hi] {
    const T* g = grad(v.id);
    const T* x = data(a);
    T* ga = grad(a.id);
    for (std::size_t i = 0; i < n; ++i)
      if (x[i] >= lo && x[i] <= hi) ga[i] += g[i];
  });
  return v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::sum(Var a) {
  const std::size_t n = size(a);
  const T* pa = data(a);
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += pa[i];
  Var v = push({s}, 1, 1, needs(a));
  on_backward(v, [this, v, a, n] {
    const T g = grad(v.id)[0];
    T* ga = grad(a.id);
    for (std::size_t i = 0; i < n; ++i) ga[i] += g;
  });
  return v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::mean(Var a) {
  return scale(sum(a), T(1) / static_cast<T>(size(a)));
}

template <typename T>
typename Tape<T>::Var Tape<T>::dot(Var a, Var b) {
  require(size(a) == size(b), "dot: shape mismatch");
  return sum(mul(a, b));
}

template <typename T>
typename Tape<T>::Var Tape<T>::concat(Var a, Var b) {
  require(rows(a) == rows(b), "concat: row count mismatch");
  const auto R = static_cast<std::size_t>(rows(a));
  const auto ca = static_cast<std::size_t>(cols(a)), cb = static_cast<std::size_t>(cols(b));
  std::vector<T> out(R * (ca + cb));
  for (std::size_t r = 0; r < R; ++r) {
    std::copy_n(data(a) + r * ca, ca, out.begin() + static_cast<std::ptrdiff_t>(r * (ca + cb)));
    std::copy_n(data(b) + r * cb, cb, out.begin() + static_cast<std::ptrdiff_t>(r * (ca + cb) + ca));
  }
  Var v = push(std::move(out), rows(a), static_cast<int>(ca + cb), needs(a) || needs(b));
  on_backward(v, [this, v, a, b, R, ca, cb] {
    const T* g = grad(v.id);
    T* ga = needs(a) ? grad(a.id) : nullptr;
    T* gb = needs(b) ? grad(b.id) : nullptr;
    for (std::size_t r = 0; r < R; ++r) {
      const T* gr = g + r * (ca + cb);
      if (ga)
        for (std::size_t i = 0; i < ca; ++i) ga[r * ca + i] += gr[i];
      if (gb)
        for (std::size_t i = 0; i < cb; ++i) gb[r * cb + i] += gr[ca + i];
    }
  });
  return v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::matmul_nt(Var a, Var b) {
  const auto n = static_cast<std::size_t>(rows(a));
  const auto k = static_cast<std::size_t>(cols(a));
  const auto m = static_cast<std::size_t>(rows(b));
  require(static_cast<std::size_t>(cols(b)) == k, "matmul_nt: shape mismatch");
  std::vector<T> y(n * m, T(0));
  kernels::matmul_nt(data(a), data(b), y.data(), n, k, m);
  Var v = push(std::move(y), static_cast<int>(n), static_cast<int>(m), needs(a) || needs(b));
  on_backward(v, [this, v, a, b, n, k, m] {
    const T* g = grad(v.id);
    // dA(n x k) += dY(n x m) B(m x k);  dB(m x k) += dY^T A
    if (needs(a)) kernels::matmul_acc(g, data(b), grad(a.id), n, m, k);
    if (needs(b)) kernels::matmul_grad_weight(g, data(a), grad(b.id), n, m, k);
  });
  return v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::stack(std::span<const Var> scalars) {
  std::vector<T> out(scalars.size());
  bool any = false;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    out[i] = item(scalars[i]);
    any = any || needs(scalars[i]);
  }
  Var v = push(std::move(out), 1, static_cast<int>(scalars.size()), any);
  on_backward(v, [this, v, parts = std::vector<Var>(scalars.begin(), scalars.end())] {
    const T* g = grad(v.id);
    for (std::size_t i = 0; i < parts.size(); ++i)
      if (needs(parts[i])) grad(parts[i].id)[0] += g[i];
  });
  return v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::matvec(Var m, Var vec) {
  const auto L = static_cast<std::size_t>(rows(m));
  const auto d = static_cast<std::size_t>(cols(m));
  require(size(vec) == d, "matvec: shape mismatch");
  std::vector<T> out(L, T(0));
  // (L x d)(d x 1) through the shared kernel.
  kernels::matmul_acc(data(m), data(vec), out.data(), L, d, std::size_t{1});
  Var v = push(std::move(out), 1, static_cast<int>(L), needs(m) || needs(vec));
  on_backward(v, [this, v, m, vec, L, d] {
    const T* g = grad(v.id);
    if (needs(m)) kernels::matmul_grad_input(g, data(vec), grad(m.id), L, d, std::size_t{1});
    if (needs(vec)) kernels::matmul_grad_weight(data(m), g, grad(vec.id), L, d, std::size_t{1});
  });
  return v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::vecmat(Var a, Var m) {
  const auto L = static_cast<std::size_t>(rows(m));
  const auto d = static_cast<std::size_t>(cols(m));
  require(size(a) == L, "vecmat: shape mismatch");
  std::vector<T> out(d, T(0));
  kernels::matmul_acc(data(a), data(m), out.data(), std::size_t{1}, L, d);
  Var v = push(std::move(out), 1, static_cast<int>(d), needs(a) || needs(m));
  on_backward(v, [this, v, a, m, L, d] {
    const T* g = grad(v.id);
    if (needs(a)) kernels::matmul_grad_input(g, data(m), grad(a.id), std::size_t{1}, L, d);
    if (needs(m)) kernels::matmul_grad_weight(data(a), g, grad(m.id), std::size_t{1}, L, d);
  });
  return v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::softmax(Var a) {
  const auto R = static_cast<std::size_t>(rows(a));
  const auto C = static_cast<std::size_t>(cols(a));
  const T* x = data(a);
  std::vector<T> y(R * C);
  for (std::size_t r = 0; r < R; ++r) {
    const T* xr = x + r * C;
    T* yr = y.data() + r * C;
    const T mx = *std::max_element(xr, xr + C);
    T z = 0;
    for (std::size_t i = 0; i < C; ++i) z += (yr[i] = std::exp(xr[i] - mx));
    for (std::size_t i = 0; i < C; ++i) yr[i] /= z;
  }
  Var v = push(std::move(y), rows(a), cols(a), needs(a));
  on_backward(v, [this, v, a, R, C] {
    const T* g = grad(v.id);
    const T* y = data(v);
    T* ga = grad(a.id);
    for (std::size_t r = 0; r < R; ++r) {
      const T* gr = g + r * C;
      const T* yr = y + r * C;
      T s = 0;
      for (std::size_t i = 0; i < C; ++i) s += gr[i] * yr[i];
      for (std::size_t i = 0; i < C; ++i) ga[r * C + i] += yr[i] * (gr[i] - s);
    }
  });
  return v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::log_softmax(Var a) {
  const auto R = static_cast<std::size_t>(rows(a));
  const auto C = static_cast<std::size_t>(cols(a));
  const T* x = data(a);
  std::vector<T> y(R * C);
  for (std::size_t r = 0; r < R; ++r) {
    const T* xr = x + r * C;
    const T mx = *std::max_element(xr, xr + C);
    T z = 0;
    for (std::size_t i = 0; i < C; ++i) z += std::exp(xr[i] - mx);
    const T lse = mx + std::log(z);
    for (std::size_t i = 0; i < C; ++i) y[r * C + i] = xr[i] - lse;
  }
  Var v = push(std::move(y), rows(a), cols(a), needs(a));
  on_backward(v, [this, v, a, R, C] {
    const T* g = grad(v.id);
    const T* y = data(v);
    T* ga = grad(a.id);
    for (std::size_t r = 0; r < R; ++r) {
      const T* gr = g + r * C;
      T s = 0;
      for (std::size_t i = 0; i < C; ++i) s += gr[i];
      if (s == T(0)) {
        for (std::size_t i = 0; i < C; ++i) ga[r * C + i] += gr[i];
        continue;
      }
      for (std::size_t i = 0; i < C; ++i) ga[r * C + i] += gr[i] - std::exp(y[r * C + i]) * s;
    }
  });
  return v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::pick(Var a, int index) {
  require(index >= 0 && static_cast<std::size_t>(index) < size(a), "pick: index out of range");
  Var v = push({data(a)[index]}, 1, 1, needs(a));
  on_backward(v, [this, v, a, index] { grad(a.id)[index] += grad(v.id)[0]; });
  return v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::pick_many(Var a, std::span<const int> row_ids, std::span<const int> col_ids) {
  require(row_ids.size() == col_ids.size() && !row_ids.empty(), "pick_many: index lists mismatch");
  const int R = rows(a), C = cols(a);
  std::vector<std::size_t> flat(row_ids.size());
  std::vector<T> out(row_ids.size());
  const T* x = data(a);
  for (std::size_t i = 0; i < row_ids.size(); ++i) {
    require(row_ids[i] >= 0 && row_ids[i] < R && col_ids[i] >= 0 && col_ids[i] < C,
            "pick_many: index out of range");
    flat[i] = static_cast<std::size_t>(row_ids[i]) * C + col_ids[i];
    out[i] = x[flat[i]];
  }
  Var v = push(std::move(out), 1, static_cast<int>(flat.size()), needs(a));
  on_backward(v, [this, v, a, flat = std::move(flat)] {
    const T* g = grad(v.id);
    T* ga = grad(a.id);
    for (std::size_t i = 0; i < flat.size(); ++i) ga[flat[i]] += g[i];
  });
  return v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::scatter_add(Var base, Var weights, std::span<const int> ids, Var gate) {
  const auto R = static_cast<std::size_t>(rows(base));
  const auto C = static_cast<std::size_t>(cols(base));
  const std::size_t L = ids.size();
  require(static_cast<std::size_t>(rows(weights)) == R && size(weights) == R * L,
          "scatter_add: weights/ids mismatch");
  require(size(gate) == 1, "scatter_add: gate must be scalar");
  for (int id : ids) require(id >= 0 && static_cast<std::size_t>(id) < C, "scatter_add: id out of range");
  std::vector<T> y(values(base).begin(), values(base).end());
  const T gv = item(gate);
  const T* w = data(weights);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t i = 0; i < L; ++i) y[r * C + static_cast<std::size_t>(ids[i])] += gv * w[r * L + i];
  Var v = push(std::move(y), rows(base), cols(base), needs(base) || needs(weights) || needs(gate));
  on_backward(v, [this, v, base, weights, gate, R, C, idx = std::vector<int>(ids.begin(), ids.end())] {
    const T* g = grad(v.id);
    const std::size_t L = idx.size();
    if (needs(base)) {
      T* gb = grad(base.id);
      for (std::size_t i = 0; i < R * C; ++i) gb[i] += g[i];
    }
    const T gv = item(gate);
    const T* w = data(weights);
    if (needs(weights)) {
      T* gw = grad(weights.id);
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t i = 0; i < L; ++i) gw[r * L + i] += gv * g[r * C + static_cast<std::size_t>(idx[i])];
    }
    if (needs(gate)) {
      T acc = 0;
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t i = 0; i < L; ++i) acc += w[r * L + i] * g[r * C + static_cast<std::size_t>(idx[i])];
      grad(gate.id)[0] += acc;
    }
  });
  return v;
}

template <typename T>
void Tape<T>::backward(Var loss, GradientBuffers<T>& grads) {
  require(record_, "backward on a non-recording tape");
  require(loss.valid() && loss.tape == serial_, "loss was not recorded on this tape");
  require(size(loss) == 1, "backward needs a scalar loss");
  for (std::size_t i = 0; i < param_nodes_.size(); ++i) {
    if (param_nodes_[i] < 0) continue;
    Node& n = nodes_[static_cast<std::size_t>(param_nodes_[i])];
    require(i < grads.size() && grads[i].size() == static_cast<std::size_t>(n.rows) * n.cols,
            "gradient buffer shape mismatch");
    n.ext_grad = grads[i].data();
  }
  if (!nodes_[static_cast<std::size_t>(loss.id)].needs_grad) return;  // constant loss
  for (auto& n : nodes_)
    if (!n.ext_grad) n.grad.clear();
  grad(loss.id)[0] += T(1);
  for (std::int32_t id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.back) continue;
    if (n.grad.empty() && !n.ext_grad) continue;  // not reached from the loss
    n.back();
  }
  for (auto id : param_nodes_)
    if (id >= 0) nodes_[static_cast<std::size_t>(id)].ext_grad = nullptr;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace shopagent::model
