#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "shopagent/ppo.hpp"
#include "shopagent/rollout.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace shopagent;
using namespace shopagent::ppo;
using shopagent::fixture::gae_by_definition;

namespace {

struct Collected {
  std::shared_ptr<const model::ModelParameters<float>> params;
  RolloutBuffer buffer;
};

// One full buffer from a narrow model, collected by sampling.
const Collected& collected() {
  static const Collected c = [] {
    const auto vocab = fixture::standard_vocab();
    Collected out;
    out.params = std::make_shared<const model::ModelParameters<float>>(
        model::initialize_parameters<float>(fixture::small_config(*vocab), 7));
    auto pool = rollout::make_local_pool(vocab, 1);
    pool->refresh_snapshot(out.params);
    rollout::Collector col(fixture::standard_catalog(), vocab, {}, 3);
    out.buffer = col.collect(*pool, 40, {policy::Decoding::Sample});
    return out;
  }();
  return c;
}

PPOConfig learning_config() {
  PPOConfig cfg;
  cfg.learning_rate = 1e-3;
  return cfg;
}

}  // namespace

TEST(GAE, MatchesTheDefinitionOnRandomEpisodes) {
  Rng rng(1);
  double worst = 0.0;
  for (int e = 0; e < 1000; ++e) {
    const std::size_t n = 1 + uniform_index(rng, 40);
    std::vector<double> r(n), v(n);
    std::vector<bool> d(n);
    for (std::size_t t = 0; t < n; ++t) {
      r[t] = uniform01(rng) < 0.2 ? uniform_real(rng, 0, 1) : 0.0;
      v[t] = uniform_real(rng, -1, 1);
      d[t] = uniform01(rng) < 0.1;
    }
    const double boot = d.back() ? 0.0 : uniform_real(rng, -1, 1);
    const double gamma = uniform_real(rng, 0.8, 1.0), lambda = uniform_real(rng, 0.0, 1.0);
    const auto fast = compute_gae(r, v, d, boot, gamma, lambda);
    const auto slow = gae_by_definition(r, v, d, boot, gamma, lambda);
    for (std::size_t t = 0; t < n; ++t) {
      worst = std::max(worst, std::abs(fast.advantages[t] - slow.advantages[t]));
      worst = std::max(worst, std::abs(fast.returns[t] - slow.returns[t]));
    }
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(GAE, TerminalRewardReturns) {
  // Reward 1 only at the terminal step of a 5-step episode.
  const std::vector<double> r{0, 0, 0, 0, 1};
  const std::vector<double> v{0.3, -0.2, 0.5, 0.1, 0.4};
  const std::vector<bool> d{false, false, false, false, true};
  const auto g = compute_gae(r, v, d, 0.7, 0.99, 1.0);
  for (std::size_t t = 0; t < 5; ++t) EXPECT_NEAR(g.returns[t], std::pow(0.99, 4 - t), 1e-12);
  const auto one = compute_gae({1.0}, {0.0}, {true}, 5.0, 0.99, 0.99);
  EXPECT_DOUBLE_EQ(one.advantages[0], 1.0);
  EXPECT_DOUBLE_EQ(one.returns[0], 1.0);
  EXPECT_THROW(compute_gae({1.0}, {0.0, 0.0}, {true}, 0.0, 0.99, 0.99), ContractViolation);
}

TEST(GAE, DoneCutsTheBootstrapAcrossEpisodes) {
  // Two episodes in one stream: the second episode's values must not leak back.
  const auto g = compute_gae({0, 1, 0, 0}, {0, 0, 9, 9}, {false, true, false, false}, 9, 0.5, 1.0);
  EXPECT_DOUBLE_EQ(g.returns[1], 1.0);
  EXPECT_DOUBLE_EQ(g.returns[0], 0.5);
  EXPECT_DOUBLE_EQ(g.returns[3], 4.5);
}

TEST(Losses, Examples) {
  const PPOConfig cfg;  // clip 0.2, value 0.5, entropy 0.01
  auto t = ppo_losses(-1.0, -1.0, 2.0, 0.5, 1.0, 1.5, cfg);
  EXPECT_DOUBLE_EQ(t.policy, -2.0);
  EXPECT_DOUBLE_EQ(t.value, 0.25);
  EXPECT_DOUBLE_EQ(t.entropy, 1.5);
  EXPECT_DOUBLE_EQ(t.total, -2.0 + 0.5 * 0.25 - 0.01 * 1.5);
  // Ratio e^0.5 above the clip range with a positive advantage.
  EXPECT_NEAR(ppo_losses(0.0, -0.5, 1.0, 0, 0, 0, cfg).policy, -1.2, 1e-12);
  // Ratio 0.5 below the range with a negative advantage.
  EXPECT_NEAR(ppo_losses(std::log(0.5), 0.0, -1.0, 0, 0, 0, cfg).policy, 0.8, 1e-12);
  // Inside the range the unclipped term is used.
  EXPECT_NEAR(ppo_losses(std::log(1.1), 0.0, -1.0, 0, 0, 0, cfg).policy, 1.1, 1e-12);
}

TEST(Losses, GraphAgreesWithScalarForm) {
  const auto vocab = fixture::standard_vocab();
  const auto params = collected().params->cast<double>();
  const PPOConfig cfg;
  int n = 0;
  for (const auto& stream : collected().buffer.streams)
    for (const auto& tr : stream) {
      if (++n > 40) break;
      model::Tape<double> tape;
      model::Forward<double> fwd(params, tape);
      const double adv = std::sin(n), ret = std::cos(n);
      auto g = ppo_item_graph(fwd, *vocab, tr, adv, ret, cfg);
      const auto s = ppo_losses(tape.item(g.logprob_new), tr.logprob_old, adv, tape.item(g.value_new), ret,
                                tape.item(g.entropy), cfg);
      EXPECT_NEAR(tape.item(g.total), s.total, 1e-12);
      EXPECT_NEAR(tape.item(g.policy), s.policy, 1e-12);
      // Entropy of the action distribution, computed from the scored set.
      const auto dist = policy::action_distribution(params, *vocab, tr.context, tr.action_set);
      double h = 0.0;
      for (double p : dist.probs) h -= p * std::log(p);
      EXPECT_NEAR(tape.item(g.entropy), h, 1e-9);
      EXPECT_NEAR(tape.item(g.value_new), model::estimate_value(params, tr.context), 1e-12);
    }
}

TEST(Advantages, NormalizedToZeroMeanUnitDeviation) {
  Rng rng(4);
  std::vector<double> a(640);
  for (auto& x : a) x = uniform_real(rng, -3, 5);
  const auto z = normalize_advantages(a);
  const double mean = std::accumulate(z.begin(), z.end(), 0.0) / z.size();
  double var = 0.0;
  for (double x : z) var += (x - mean) * (x - mean);
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(std::sqrt(var / z.size()), 1.0, 1e-6);
  for (double x : normalize_advantages(std::vector<double>(10, 2.5))) EXPECT_DOUBLE_EQ(x, 0.0);
}

TEST(Update, FirstMinibatchIsOnPolicy) {
  const auto vocab = fixture::standard_vocab();
  auto params = *collected().params;
  auto adam = model::AdamState<float>::for_params(params);
  Rng rng(5);
  const auto st = ppo_update(params, adam, *vocab, collected().buffer, learning_config(), rng);
  EXPECT_LT(st.first_batch_max_ratio_error, 1e-6);
  EXPECT_EQ(st.first_batch_clip_fraction, 0.0);
  EXPECT_EQ(st.minibatches, 80);
  EXPECT_LE(st.max_grad_norm_after_clip, 0.5 + 1e-6);
  EXPECT_NEAR(st.advantage_mean, 0.0, 1e-9);
  EXPECT_NEAR(st.advantage_std, 1.0, 1e-6);
  EXPECT_NE(params, *collected().params);
  EXPECT_TRUE(params.all_finite());
}

TEST(Update, ZeroLearningRateKeepsParameters) {
  const auto vocab = fixture::standard_vocab();
  auto params = *collected().params;
  auto adam = model::AdamState<float>::for_params(params);
  auto cfg = learning_config();
  cfg.learning_rate = 0.0;
  Rng rng(6);
  ppo_update(params, adam, *vocab, collected().buffer, cfg, rng);
  EXPECT_EQ(params, *collected().params);
}

TEST(Update, DeterministicForSeed) {
  const auto vocab = fixture::standard_vocab();
  auto a = *collected().params, b = a;
  auto sa = model::AdamState<float>::for_params(a), sb = model::AdamState<float>::for_params(b);
  Rng ra(8), rb(8);
  const auto x = ppo_update(a, sa, *vocab, collected().buffer, learning_config(), ra);
  const auto y = ppo_update(b, sb, *vocab, collected().buffer, learning_config(), rb);
  EXPECT_EQ(a, b);
  EXPECT_EQ(x.policy_loss, y.policy_loss);
}

TEST(Update, RejectsMalformedBuffersAndConfigs) {
  const auto vocab = fixture::standard_vocab();
  auto params = *collected().params;
  auto adam = model::AdamState<float>::for_params(params);
  Rng rng(9);
  auto short_buf = collected().buffer;
  short_buf.streams[0].pop_back();
  EXPECT_THROW(ppo_update(params, adam, *vocab, short_buf, learning_config(), rng), ContractViolation);
  auto cfg = learning_config();
  cfg.transitions_per_update = 600;
  EXPECT_THROW(cfg.validate(), ContractViolation);
  cfg = learning_config();
  cfg.clip_eps = 0.0;
  EXPECT_THROW(cfg.validate(), ContractViolation);
  EXPECT_EQ(collected().buffer.size(), 640u);
  EXPECT_EQ(collected().buffer.streams.size(), 16u);
}

TEST(Update, LearnsATwoArmedBandit) {
  // One decision per episode between two buttons; only the first pays.
  const auto vocab = fixture::standard_vocab();
  const auto catalog = fixture::standard_catalog();
  const auto goal = env::GoalStream(*catalog, 3, env::GoalPurpose::Train).next();
  const auto ctx = fixture::search_context(*catalog, *vocab, goal);
  const std::vector<env::ActionSpec> arms{env::buttons::buy_now(), env::buttons::reviews()};
  PPOConfig cfg;
  cfg.n_streams = 4;
  cfg.steps_per_stream = 8;
  cfg.transitions_per_update = 32;
  cfg.learning_rate = 3e-3;
  cfg.entropy_coef = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto params = model::initialize_parameters<float>(fixture::small_config(*vocab), seed);
    auto adam = model::AdamState<float>::for_params(params);
    Rng act(seed), upd(seed + 100);
    double p_good = 0.0;
    for (int u = 0; u < 200 && p_good <= 0.95; ++u) {
      const auto dist = policy::action_distribution(params, *vocab, ctx, arms);
      const double value = model::estimate_value(params, ctx);
      p_good = dist.probs[0];
      RolloutBuffer buf;
      buf.streams.resize(4);
      buf.bootstrap_values.assign(4, 0.0);
      for (auto& s : buf.streams)
        for (int k = 0; k < 8; ++k) {
          const auto i = policy::select_sample(dist, act);
          s.push_back({ctx, arms, static_cast<int>(i), std::log(dist.probs[i]), value, i == 0 ? 1.0 : 0.0, true});
        }
      ppo_update(params, adam, *vocab, buf, cfg, upd);
    }
    EXPECT_GT(policy::action_distribution(params, *vocab, ctx, arms).probs[0], 0.9) << "seed " << seed;
  }
}
