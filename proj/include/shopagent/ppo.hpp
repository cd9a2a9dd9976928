#pragma once

#include "shopagent/adam.hpp"
#include "shopagent/selection.hpp"

namespace shopagent::ppo {

using env::ActionSpec;
using model::ContextEncoding;
using model::ModelParameters;
using model::Vocabulary;

struct PPOConfig {
  int transitions_per_update = 640;  // n_streams x steps_per_stream
  int n_streams = 16;
  int steps_per_stream = 40;
  int epochs_per_update = 1;
  int batch_size = 8;
  double learning_rate = 1e-6;
  double adam_eps = 1e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double discount = 0.99;
  double gae_lambda = 0.99;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  double clip_eps = 0.2;

  model::AdamConfig adam() const;
  void validate() const;
  bool operator==(const PPOConfig&) const = default;
};

/// One on-policy decision. The action set is stored with its query already
/// materialized, so the decision can be rescored exactly.
struct Transition {
  ContextEncoding context;
  std::vector<ActionSpec> action_set;
  int action_index = 0;
  double logprob_old = 0.0;
  double value_old = 0.0;
  double reward = 0.0;
  bool done = false;

  bool operator==(const Transition&) const = default;
};

/// Transitions grouped by environment stream, each in temporal order.
struct RolloutBuffer {
  std::vector<std::vector<Transition>> streams;
  std::vector<double> bootstrap_values;  // V(next observation), 0 after a terminal step
  std::vector<double> episode_rewards;   // episodes that finished during collection

  std::size_t size() const;
  bool operator==(const RolloutBuffer&) const = default;
};

struct GAEResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// delta_t = r_t + gamma V_{t+1} (1 - d_t) - V_t,
/// A_t = delta_t + gamma lambda (1 - d_t) A_{t+1}, returns = A + V.
/// V_{T} is `bootstrap_value`.
GAEResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      const std::vector<bool>& dones, double bootstrap_value, double discount, double lambda);

struct LossTerms {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
};

/// Scalar form of the per-item objective.
LossTerms ppo_losses(double logprob_new, double logprob_old, double advantage, double value_new,
                     double return_target, double entropy, const PPOConfig& cfg);

/// Recorded per-item objective over a rescored transition.
template <typename T>
struct ItemGraph {
  using Var = typename model::Tape<T>::Var;
  Var total, policy, value, entropy, logprob_new, value_new;
};

template <typename T>
ItemGraph<T> ppo_item_graph(model::Forward<T>& fwd, const Vocabulary& vocab, const Transition& tr,
                            double advantage, double return_target, const PPOConfig& cfg);

/// Mean and population standard deviation normalization.
std::vector<double> normalize_advantages(const std::vector<double>& adv, double eps = 1e-8);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double first_batch_max_ratio_error = 0.0;  // max |ratio - 1| on minibatch 0
  double first_batch_clip_fraction = 0.0;
  double max_grad_norm_after_clip = 0.0;
  double advantage_mean = 0.0;  // after normalization
  double advantage_std = 0.0;
  int minibatches = 0;
};

/// One PPO update over a full buffer. Mutates `params` and `adam`.
UpdateStats ppo_update(ModelParameters<float>& params, model::AdamState<float>& adam, const Vocabulary& vocab,
                       const RolloutBuffer& buffer, const PPOConfig& cfg, Rng& rng);

}  // namespace shopagent::ppo
