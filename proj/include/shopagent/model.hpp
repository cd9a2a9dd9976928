#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "shopagent/context.hpp"
#include "shopagent/tape.hpp"

namespace shopagent::model {

struct ModelConfig {
  int vocab_size = 0;
  int dim = 64;
  int value_hidden = 64;

  bool operator==(const ModelConfig&) const = default;
};

/// Parameter tensors in declaration order; the checkpoint layout follows it.
enum ParamIndex : std::size_t {
  kEmbedding,   // N x d token embeddings
  kSegmentEmb,  // 3 x d segment embeddings
  kEncW,        // d x d encoder projection
  kEncB,
  kEncQuery,    // d, pooling query of the encoder summary
  kDecInitW,    // d x d, summary -> initial decoder state
  kDecInitB,
  kDecStateW,   // d x d recurrent weights
  kDecInputW,   // d x d input-token weights
  kDecB,
  kDecQueryW,   // d x d cross-attention query
  kDecOutW,     // 2d x d readout over [state, attended context]
  kDecOutB,
  kLmW,         // d x N language-modeling head
  kLmB,         // N
  kCopyW,       // d x d, bilinear copy score of context tokens
  kValW1,       // d x H value MLP
  kValB1,
  kValW2,       // H x 1
  kValB2,
  kNumParams
};

inline constexpr std::array<ParamIndex, 3> kLmHeadParams = {kLmW, kLmB, kCopyW};
inline constexpr std::array<ParamIndex, 4> kValueHeadParams = {kValW1, kValB1, kValW2, kValB2};
inline constexpr double kInitScale = 0.08;

template <typename T>
struct Tensor {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  bool operator==(const Tensor&) const = default;
};

template <typename T>
struct ModelParameters {
  ModelConfig config;
  std::vector<Tensor<T>> tensors;

  Tensor<T>& operator[](ParamIndex i) { return tensors[i]; }
  const Tensor<T>& operator[](ParamIndex i) const { return tensors[i]; }

  std::size_t count() const;
  bool all_finite() const;
  GradientBuffers<T> zeros_like() const;
  std::uint64_t architecture_hash() const;

  template <typename U>
  ModelParameters<U> cast() const {
    ModelParameters<U> out;
    out.config = config;
    for (const auto& t : tensors)
      out.tensors.push_back(Tensor<U>{t.name, t.rows, t.cols, std::vector<U>(t.data.begin(), t.data.end())});
    return out;
  }

  bool operator==(const ModelParameters&) const = default;
};

/// Zero-filled tensors with the right names and shapes.
template <typename T>
ModelParameters<T> make_parameters(const ModelConfig& config);

/// Seeded uniform(-0.08, 0.08) initialization of every tensor.
template <typename T>
ModelParameters<T> initialize_parameters(const ModelConfig& config, std::uint64_t seed);

/// Builds the policy's computation graph on a tape.
template <typename T>
class Forward {
 public:
  using Var = typename Tape<T>::Var;

  struct Encoded {
    Var states;   // L x d
    Var summary;  // d
    std::vector<int> ids;
  };
  /// One decoder step over a batch of sequences, one per row.
  struct Step {
    Var state;     // rows x d, decoder state after consuming the last input
    Var logprobs;  // rows x N, next-token log-probabilities
  };

  Forward(const ModelParameters<T>& params, Tape<T>& tape);

  Encoded encode(const ContextEncoding& context);
  /// Decoder output for the first token of a fresh sequence.
  Step start(const Encoded& enc);
  /// Feeds `token` and returns the distribution of the following one.
  Step advance(const Encoded& enc, const Step& prev, int token);
  /// Batched continuation: row i continues row parents[i] of `prev` with
  /// tokens[i].
  Step advance_rows(const Encoded& enc, const Step& prev, std::span<const int> parents,
                    std::span<const int> tokens);
  Var value(const Encoded& enc);

  Tape<T>& tape() { return tape_; }
  const ModelParameters<T>& params() const { return params_; }

 private:
  Var p(ParamIndex i);
  Step decode(const Encoded& enc, Var state, std::span<const int> tokens);

  const ModelParameters<T>& params_;
  Tape<T>& tape_;
  Var unit_;  // constant 1
};

/// Next-token log-probabilities after `prefix` (teacher forced).
template <typename T>
std::vector<T> token_logprobs(const ModelParameters<T>& params, const ContextEncoding& context,
                              const std::vector<int>& prefix);

/// Scalar state-value estimate for a context.
template <typename T>
T estimate_value(const ModelParameters<T>& params, const ContextEncoding& context);

/// Scales every gradient so the global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(GradientBuffers<T>& grads, double max_norm);

template <typename T>
double grad_norm(const GradientBuffers<T>& grads);

}  // namespace shopagent::model
