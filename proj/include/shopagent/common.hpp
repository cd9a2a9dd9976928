#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace shopagent {

/// Thrown when a caller breaks an operation's precondition. The callee's
/// state is left untouched.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Thrown when a training phase or a rollout cannot continue (non-finite
/// loss, dead workers, unreachable targets).
class RuntimeAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;
using Tokens = std::vector<std::string>;

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

// Distribution helpers with a fixed algorithm so streams do not depend on the
// standard library's distribution implementations.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_real(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Uniform integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return static_cast<std::size_t>(x % n);
}

/// Uniform integer in [lo, hi].
inline int uniform_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(hi - lo + 1)));
}

/// Fisher-Yates shuffle driven by uniform_index.
template <typename Vec>
void shuffle_in_place(Vec& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = uniform_index(rng, i);
    if (j != i - 1) std::swap(v[i - 1], v[j]);
  }
}

/// Derives an independent stream seed from a base seed and a tag.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace shopagent
