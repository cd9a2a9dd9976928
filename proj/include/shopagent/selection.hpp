#pragma once

#include <optional>
#include <string_view>

#include "shopagent/model.hpp"

namespace shopagent::policy {

using env::ActionSpec;
using model::ContextEncoding;
using model::ModelParameters;
using model::Vocabulary;

/// Probability distribution over one page's action set.
struct ScoredActionSet {
  std::vector<ActionSpec> actions;    // query slot already materialized
  std::vector<double> mean_logprobs;  // token-averaged log-likelihood per action
  std::vector<double> probs;          // softmax over mean_logprobs

  std::size_t size() const { return actions.size(); }
  bool operator==(const ScoredActionSet&) const = default;
};

/// Surface token ids followed by EOS.
std::vector<int> action_token_ids(const Vocabulary& vocab, const ActionSpec& action);

/// Max-subtracted softmax in double precision.
std::vector<double> softmax(const std::vector<double>& logits);

/// Graph of per-action mean log-likelihoods and the action log-softmax.
template <typename T>
struct ActionGraph {
  using Var = typename model::Tape<T>::Var;
  typename model::Forward<T>::Encoded encoded;
  Var means;     // 1 x n token-averaged log-likelihoods
  Var logprobs;  // 1 x n, log P(a_i | o, g) over the action set
};

/// Records the scoring of a concrete action set (no open query slots).
template <typename T>
ActionGraph<T> build_action_graph(model::Forward<T>& fwd, const Vocabulary& vocab,
                                  const ContextEncoding& context, const std::vector<ActionSpec>& actions);

/// Teacher-forced mean of the action's token log-probabilities, EOS included.
template <typename T>
T action_mean_logprob(const ModelParameters<T>& params, const Vocabulary& vocab,
                      const ContextEncoding& context, const ActionSpec& action);

/// Samples a query of at most 8 tokens at temperature 1. Special tokens are
/// masked, and EOS is masked at the first position so the query is non-empty.
template <typename T>
Tokens sample_query(const ModelParameters<T>& params, const Vocabulary& vocab,
                    const ContextEncoding& context, Rng& rng);

/// Scores an action set. An open query slot is first filled by sample_query
/// using `query_rng`; passing no rng with a slot present is an error.
template <typename T>
ScoredActionSet action_distribution(const ModelParameters<T>& params, const Vocabulary& vocab,
                                    const ContextEncoding& context, const std::vector<ActionSpec>& actions,
                                    Rng* query_rng = nullptr);

/// Builds a ScoredActionSet from precomputed mean log-likelihoods.
ScoredActionSet distribution_from_means(std::vector<ActionSpec> actions, std::vector<double> means);

// Decoding strategies. All return an index into dist.actions; ties resolve
// to the lowest index.
std::size_t select_argmax(const ScoredActionSet& dist);
std::size_t select_sample(const ScoredActionSet& dist, Rng& rng);
std::size_t select_epsilon_greedy(const ScoredActionSet& dist, double epsilon, Rng& rng);
std::size_t select_top_p(const ScoredActionSet& dist, double p, Rng& rng);

enum class Decoding { EpsilonGreedy, TopP, Sample, Argmax };

struct DecodingConfig {
  Decoding kind = Decoding::EpsilonGreedy;
  double epsilon = 0.2;
  double top_p = 0.8;

  bool operator==(const DecodingConfig&) const = default;
};

std::size_t select(const ScoredActionSet& dist, const DecodingConfig& cfg, Rng& rng);

const char* to_string(Decoding d);
std::optional<Decoding> decoding_from_string(std::string_view s);

}  // namespace shopagent::policy
