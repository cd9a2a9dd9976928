#pragma once

// Dense inner loops of the policy model. Every kernel has a serial reference
// and an OpenMP version. The parallel versions split work over independent
// output elements only, so each output is reduced in the same order and the
// two backends agree bit for bit.

#include <atomic>
#include <cstddef>

#include <omp.h>

namespace shopagent::kernels {

enum class Backend { Serial, Parallel };

namespace detail {
inline std::atomic<Backend>& backend_ref() {
  static std::atomic<Backend> b{Backend::Parallel};
  return b;
}
// Below this many multiply-adds a parallel region costs more than it saves.
inline constexpr std::size_t kParallelThreshold = 1 << 15;

// Dot product with eight independent partial sums combined in a fixed order.
// Breaking the single dependency chain lets the compiler vectorize without
// reassociating anything.
template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
  T p[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8)
    for (std::size_t k = 0; k < 8; ++k) p[k] += a[j + k] * b[j + k];
  for (; j < n; ++j) p[j % 8] += a[j] * b[j];
  return ((p[0] + p[1]) + (p[2] + p[3])) + ((p[4] + p[5]) + (p[6] + p[7]));
}
}  // namespace detail

inline void set_backend(Backend b) { detail::backend_ref().store(b); }
inline Backend backend() { return detail::backend_ref().load(); }

namespace serial {

/// Y(n x out) += X(n x in) * W(in x out)
template <typename T>
void matmul_acc(const T* X, const T* W, T* Y, std::size_t n, std::size_t in, std::size_t out) {
  for (std::size_t r = 0; r < n; ++r) {
    T* y = Y + r * out;
    for (std::size_t i = 0; i < in; ++i) {
      const T x = X[r * in + i];
      const T* w = W + i * out;
      for (std::size_t j = 0; j < out; ++j) y[j] += x * w[j];
    }
  }
}

/// dX(n x in) += dY(n x out) * W^T
template <typename T>
void matmul_grad_input(const T* dY, const T* W, T* dX, std::size_t n, std::size_t in, std::size_t out) {
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < in; ++i) {
      dX[r * in + i] += detail::dot(dY + r * out, W + i * out, out);
    }
  }
}

/// dW(in x out) += X^T * dY
template <typename T>
void matmul_grad_weight(const T* X, const T* dY, T* dW, std::size_t n, std::size_t in, std::size_t out) {
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < in; ++i) {
      const T x = X[r * in + i];
      const T* dy = dY + r * out;
      T* dw = dW + i * out;
      for (std::size_t j = 0; j < out; ++j) dw[j] += x * dy[j];
    }
  }
}

/// Y(n x m) += A(n x k) * B(m x k)^T
template <typename T>
void matmul_nt(const T* A, const T* B, T* Y, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) Y[r * m + c] += detail::dot(A + r * k, B + c * k, k);
}

}  // namespace serial

namespace parallel {

template <typename T>
void matmul_acc(const T* X, const T* W, T* Y, std::size_t n, std::size_t in, std::size_t out) {
  const bool big = n * in * out >= detail::kParallelThreshold;
  if (n > 1) {
#pragma omp parallel for schedule(static) if (big)
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(n); ++r) {
      T* y = Y + static_cast<std::size_t>(r) * out;
      for (std::size_t i = 0; i < in; ++i) {
        const T x = X[static_cast<std::size_t>(r) * in + i];
        const T* w = W + i * out;
        for (std::size_t j = 0; j < out; ++j) y[j] += x * w[j];
      }
    }
    return;
  }
  // Single row: split the output columns.
#pragma omp parallel if (big)
  {
    const auto nt = static_cast<std::size_t>(omp_get_num_threads());
    const auto tid = static_cast<std::size_t>(omp_get_thread_num());
    const std::size_t chunk = (out + nt - 1) / nt;
    const std::size_t lo = tid * chunk;
    const std::size_t hi = lo + chunk < out ? lo + chunk : out;
    for (std::size_t i = 0; i < in; ++i) {
      const T x = X[i];
      const T* w = W + i * out;
      for (std::size_t j = lo; j < hi; ++j) Y[j] += x * w[j];
    }
  }
}

template <typename T>
void matmul_grad_input(const T* dY, const T* W, T* dX, std::size_t n, std::size_t in, std::size_t out) {
  const bool big = n * in * out >= detail::kParallelThreshold;
  const auto cells = static_cast<std::ptrdiff_t>(n * in);
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t c = 0; c < cells; ++c) {
    const std::size_t r = static_cast<std::size_t>(c) / in;
    const std::size_t i = static_cast<std::size_t>(c) % in;
    dX[static_cast<std::size_t>(c)] += detail::dot(dY + r * out, W + i * out, out);
  }
}

template <typename T>
void matmul_grad_weight(const T* X, const T* dY, T* dW, std::size_t n, std::size_t in, std::size_t out) {
  const bool big = n * in * out >= detail::kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(in); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    T* dw = dW + i * out;
    for (std::size_t r = 0; r < n; ++r) {
      const T x = X[r * in + i];
      const T* dy = dY + r * out;
      for (std::size_t j = 0; j < out; ++j) dw[j] += x * dy[j];
    }
  }
}

template <typename T>
void matmul_nt(const T* A, const T* B, T* Y, std::size_t n, std::size_t k, std::size_t m) {
  const bool big = n * k * m >= detail::kParallelThreshold;
  const auto cells = static_cast<std::ptrdiff_t>(n * m);
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t c = 0; c < cells; ++c) {
    const std::size_t r = static_cast<std::size_t>(c) / m;
    const std::size_t j = static_cast<std::size_t>(c) % m;
    Y[static_cast<std::size_t>(c)] += detail::dot(A + r * k, B + j * k, k);
  }
}

}  // namespace parallel

template <typename T>
void matmul_acc(const T* X, const T* W, T* Y, std::size_t n, std::size_t in, std::size_t out) {
  if (backend() == Backend::Parallel) parallel::matmul_acc(X, W, Y, n, in, out);
  else serial::matmul_acc(X, W, Y, n, in, out);
}

template <typename T>
void matmul_grad_input(const T* dY, const T* W, T* dX, std::size_t n, std::size_t in, std::size_t out) {
  if (backend() == Backend::Parallel) parallel::matmul_grad_input(dY, W, dX, n, in, out);
  else serial::matmul_grad_input(dY, W, dX, n, in, out);
}

template <typename T>
void matmul_grad_weight(const T* X, const T* dY, T* dW, std::size_t n, std::size_t in, std::size_t out) {
  if (backend() == Backend::Parallel) parallel::matmul_grad_weight(X, dY, dW, n, in, out);
  else serial::matmul_grad_weight(X, dY, dW, n, in, out);
}

template <typename T>
void matmul_nt(const T* A, const T* B, T* Y, std::size_t n, std::size_t k, std::size_t m) {
  if (backend() == Backend::Parallel) parallel::matmul_nt(A, B, Y, n, k, m);
  else serial::matmul_nt(A, B, Y, n, k, m);
}

}  // namespace shopagent::kernels
