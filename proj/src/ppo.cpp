#include "shopagent/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace shopagent::ppo {

model::AdamConfig PPOConfig::adam() const {
  return {learning_rate, adam_beta1, adam_beta2, adam_eps, 0.0, 0};
}

void PPOConfig::validate() const {
  require(n_streams >= 1 && steps_per_stream >= 1, "ppo: streams and steps must be positive");
  require(transitions_per_update == n_streams * steps_per_stream,
          "ppo: transitions_per_update must equal n_streams * steps_per_stream");
  require(epochs_per_update >= 1 && batch_size >= 1, "ppo: epochs and batch size must be positive");
  require(learning_rate >= 0.0 && adam_eps > 0.0, "ppo: invalid optimizer settings");
  require(discount > 0.0 && discount <= 1.0 && gae_lambda >= 0.0 && gae_lambda <= 1.0,
          "ppo: discount must be in (0, 1] and lambda in [0, 1]");
  require(clip_eps > 0.0 && max_grad_norm > 0.0, "ppo: clip settings must be positive");
}

std::size_t RolloutBuffer::size() const {
  std::size_t n = 0;
  for (const auto& s : streams) n += s.size();
  return n;
}

GAEResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      const std::vector<bool>& dones, double bootstrap_value, double discount, double lambda) {
  require(rewards.size() == values.size() && values.size() == dones.size(), "gae: sequences differ in length");
  const std::size_t n = rewards.size();
  GAEResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_value = bootstrap_value;
  double next_adv = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double live = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + discount * next_value * live - values[i];
    next_adv = delta + discount * lambda * live * next_adv;
    out.advantages[i] = next_adv;
    out.returns[i] = next_adv + values[i];
    next_value = values[i];
  }
  return out;
}

LossTerms ppo_losses(double logprob_new, double logprob_old, double advantage, double value_new,
                     double return_target, double entropy, const PPOConfig& cfg) {
  const double ratio = std::exp(logprob_new - logprob_old);
  const double clipped = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
  LossTerms t;
  t.policy = -std::min(ratio * advantage, clipped * advantage);
  t.value = (value_new - return_target) * (value_new - return_target);
  t.entropy = entropy;
  t.total = t.policy + cfg.value_coef * t.value - cfg.entropy_coef * t.entropy;
  return t;
}

template <typename T>
ItemGraph<T> ppo_item_graph(model::Forward<T>& fwd, const Vocabulary& vocab, const Transition& tr,
                            double advantage, double return_target, const PPOConfig& cfg) {
  require(tr.action_index >= 0 && static_cast<std::size_t>(tr.action_index) < tr.action_set.size(),
          "ppo: action index outside the action set");
  auto& tape = fwd.tape();
  auto g = policy::build_action_graph(fwd, vocab, tr.context, tr.action_set);
  ItemGraph<T> out;
  out.logprob_new = tape.pick(g.logprobs, tr.action_index);
  auto ratio = tape.exp(tape.add_scalar(out.logprob_new, static_cast<T>(-tr.logprob_old)));
  const auto A = static_cast<T>(advantage);
  auto surr = tape.scale(ratio, A);
  auto clipped = tape.scale(tape.clamp(ratio, static_cast<T>(1.0 - cfg.clip_eps), static_cast<T>(1.0 + cfg.clip_eps)), A);
  out.policy = tape.scale(tape.minimum(surr, clipped), T(-1));

  out.value_new = fwd.value(g.encoded);
  out.value = tape.square(tape.add_scalar(out.value_new, static_cast<T>(-return_target)));

  out.entropy = tape.scale(tape.sum(tape.mul(tape.exp(g.logprobs), g.logprobs)), T(-1));
  out.total = tape.add(tape.add(out.policy, tape.scale(out.value, static_cast<T>(cfg.value_coef))),
                       tape.scale(out.entropy, static_cast<T>(-cfg.entropy_coef)));
  return out;
}

std::vector<double> normalize_advantages(const std::vector<double>& adv, double eps) {
  if (adv.empty()) return {};
  const double n = static_cast<double>(adv.size());
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> out(adv.size());
  for (std::size_t i = 0; i < adv.size(); ++i) out[i] = (adv[i] - mean) / (sd + eps);
  return out;
}

UpdateStats ppo_update(ModelParameters<float>& params, model::AdamState<float>& adam, const Vocabulary& vocab,
                       const RolloutBuffer& buffer, const PPOConfig& cfg, Rng& rng) {
  cfg.validate();
  require(buffer.bootstrap_values.size() == buffer.streams.size(), "ppo: one bootstrap value per stream");
  require(buffer.size() == static_cast<std::size_t>(cfg.transitions_per_update),
          "ppo: buffer holds " + std::to_string(buffer.size()) + " transitions, expected " +
              std::to_string(cfg.transitions_per_update));

  std::vector<const Transition*> items;
  std::vector<double> adv, ret;
  for (std::size_t s = 0; s < buffer.streams.size(); ++s) {
    const auto& stream = buffer.streams[s];
    std::vector<double> r, v;
    std::vector<bool> d;
    for (const auto& t : stream) {
      items.push_back(&t);
      r.push_back(t.reward);
      v.push_back(t.value_old);
      d.push_back(t.done);
    }
    auto gae = compute_gae(r, v, d, buffer.bootstrap_values[s], cfg.discount, cfg.gae_lambda);
    adv.insert(adv.end(), gae.advantages.begin(), gae.advantages.end());
    ret.insert(ret.end(), gae.returns.begin(), gae.returns.end());
  }
  adv = normalize_advantages(adv);

  UpdateStats stats;
  {
    const double n = static_cast<double>(adv.size());
    stats.advantage_mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
    double var = 0.0;
    for (double a : adv) var += (a - stats.advantage_mean) * (a - stats.advantage_mean);
    stats.advantage_std = std::sqrt(var / n);
  }

  const auto adam_cfg = cfg.adam();
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t counted = 0, clipped_count = 0;
  for (int epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
    shuffle_in_place(order, rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const float inv_batch = 1.0f / static_cast<float>(end - start);
      auto grads = params.zeros_like();
      std::size_t batch_clipped = 0;
      double batch_max_err = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        model::Tape<float> tape;
        model::Forward<float> fwd(params, tape);
        auto g = ppo_item_graph(fwd, vocab, *items[i], adv[i], ret[i], cfg);
        const float total = tape.item(g.total);
        if (!std::isfinite(total))
          throw RuntimeAbort("ppo: non-finite loss in minibatch " + std::to_string(stats.minibatches));
        const double ratio = std::exp(static_cast<double>(tape.item(g.logprob_new)) - items[i]->logprob_old);
        batch_max_err = std::max(batch_max_err, std::abs(ratio - 1.0));
        batch_clipped += std::abs(ratio - 1.0) > cfg.clip_eps;
        stats.policy_loss += tape.item(g.policy);
        stats.value_loss += tape.item(g.value);
        stats.entropy += tape.item(g.entropy);
        stats.approx_kl += items[i]->logprob_old - static_cast<double>(tape.item(g.logprob_new));
        tape.backward(tape.scale(g.total, inv_batch), grads);
      }
      if (stats.minibatches == 0) {
        stats.first_batch_max_ratio_error = batch_max_err;
        stats.first_batch_clip_fraction = static_cast<double>(batch_clipped) / static_cast<double>(end - start);
      }
      clipped_count += batch_clipped;
      counted += end - start;

      const double norm = model::grad_norm(grads);
      if (!std::isfinite(norm))
        throw RuntimeAbort("ppo: non-finite gradient in minibatch " + std::to_string(stats.minibatches));
      model::clip_grad_norm(grads, cfg.max_grad_norm);
      stats.max_grad_norm_after_clip = std::max(stats.max_grad_norm_after_clip, model::grad_norm(grads));
      model::adam_step(params, grads, adam, adam_cfg);
      ++stats.minibatches;
    }
  }
  const double n = static_cast<double>(counted);
  stats.policy_loss /= n;
  stats.value_loss /= n;
  stats.entropy /= n;
  stats.approx_kl /= n;
  stats.clip_fraction = static_cast<double>(clipped_count) / n;
  return stats;
}

#define SHOPAGENT_INSTANTIATE(T)                                                                      \
  template ItemGraph<T> ppo_item_graph<T>(model::Forward<T>&, const Vocabulary&, const Transition&,   \
                                          double, double, const PPOConfig&);

SHOPAGENT_INSTANTIATE(float)
SHOPAGENT_INSTANTIATE(double)
#undef SHOPAGENT_INSTANTIATE

}  // namespace shopagent::ppo
