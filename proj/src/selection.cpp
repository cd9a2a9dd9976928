#include "shopagent/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace shopagent::policy {

std::vector<int> action_token_ids(const Vocabulary& vocab, const ActionSpec& action) {
  require(!action.surface.empty(), "action has an empty surface");
  std::vector<int> ids = vocab.encode(action.surface);
  ids.push_back(Vocabulary::kEos);
  return ids;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  require(!logits.empty(), "softmax of an empty vector");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (out[i] = std::exp(logits[i] - mx));
  for (auto& p : out) p /= z;
  return out;
}

ScoredActionSet distribution_from_means(std::vector<ActionSpec> actions, std::vector<double> means) {
  require(!actions.empty(), "empty action set");
  require(actions.size() == means.size(), "one mean log-probability per action");
  ScoredActionSet s;
  s.probs = softmax(means);
  s.actions = std::move(actions);
  s.mean_logprobs = std::move(means);
  return s;
}

template <typename T>
ActionGraph<T> build_action_graph(model::Forward<T>& fwd, const Vocabulary& vocab,
                                  const ContextEncoding& context, const std::vector<ActionSpec>& actions) {
  using Var = typename model::Tape<T>::Var;
  require(!actions.empty(), "empty action set");
  auto& tape = fwd.tape();
  const std::size_t n = actions.size();
  std::vector<std::vector<int>> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    require(!actions[i].is_query_slot(), "open query slot must be materialized before scoring");
    ids[i] = action_token_ids(vocab, actions[i]);
  }

  ActionGraph<T> g;
  g.encoded = fwd.encode(context);
  // All actions share the first decoder step. Afterwards the still-running
  // actions advance together, one row each.
  auto step = fwd.start(g.encoded);
  std::vector<std::size_t> active(n);
  for (std::size_t i = 0; i < n; ++i) active[i] = i;
  std::vector<int> rows(n, 0), cols(n);
  for (std::size_t i = 0; i < n; ++i) cols[i] = ids[i][0];

  std::vector<Var> picks{tape.pick_many(step.logprobs, rows, cols)};
  std::vector<std::size_t> owner(active);  // action of every picked entry, in order
  for (std::size_t k = 1;; ++k) {
    std::vector<int> parents, tokens;
    std::vector<std::size_t> next;
    for (std::size_t r = 0; r < active.size(); ++r) {
      const std::size_t a = active[r];
      if (ids[a].size() <= k) continue;
      parents.push_back(k == 1 ? 0 : static_cast<int>(r));
      tokens.push_back(ids[a][k - 1]);
      next.push_back(a);
    }
    if (next.empty()) break;
    step = fwd.advance_rows(g.encoded, step, parents, tokens);
    rows.resize(next.size());
    cols.resize(next.size());
    for (std::size_t r = 0; r < next.size(); ++r) {
      rows[r] = static_cast<int>(r);
      cols[r] = ids[next[r]][k];
    }
    picks.push_back(tape.pick_many(step.logprobs, rows, cols));
    owner.insert(owner.end(), next.begin(), next.end());
    active = std::move(next);
  }

  Var all = picks.front();
  for (std::size_t i = 1; i < picks.size(); ++i) all = tape.concat(all, picks[i]);
  std::vector<T> avg(n * owner.size(), T(0));
  for (std::size_t j = 0; j < owner.size(); ++j)
    avg[owner[j] * owner.size() + j] = T(1) / static_cast<T>(ids[owner[j]].size());
  g.means = tape.matvec(tape.constant(std::move(avg), static_cast<int>(n)), all);
  g.logprobs = tape.log_softmax(g.means);
  return g;
}

template <typename T>
T action_mean_logprob(const ModelParameters<T>& params, const Vocabulary& vocab,
                      const ContextEncoding& context, const ActionSpec& action) {
  require(!action.surface.empty(), "action has an empty surface");
  model::Tape<T> tape(false);
  model::Forward<T> fwd(params, tape);
  auto g = build_action_graph(fwd, vocab, context, {action});
  return tape.item(g.means);
}

template <typename T>
Tokens sample_query(const ModelParameters<T>& params, const Vocabulary& vocab,
                    const ContextEncoding& context, Rng& rng) {
  model::Tape<T> tape(false);
  model::Forward<T> fwd(params, tape);
  const auto enc = fwd.encode(context);
  auto step = fwd.start(enc);
  Tokens out;
  std::vector<double> w(static_cast<std::size_t>(vocab.size()));
  while (out.size() < env::kMaxQueryTokens) {
    const auto lp = tape.values(step.logprobs);
    double z = 0.0;
    for (int i = 0; i < vocab.size(); ++i) {
      const bool masked = i == Vocabulary::kPad || i == Vocabulary::kUnk || i == Vocabulary::kSep ||
                          (i == Vocabulary::kEos && out.empty());
      w[static_cast<std::size_t>(i)] = masked ? 0.0 : std::exp(static_cast<double>(lp[static_cast<std::size_t>(i)]));
      z += w[static_cast<std::size_t>(i)];
    }
    double u = uniform01(rng) * z;
    int tok = vocab.size() - 1;
    for (int i = 0; i < vocab.size(); ++i) {
      u -= w[static_cast<std::size_t>(i)];
      if (u < 0.0 && w[static_cast<std::size_t>(i)] > 0.0) {
        tok = i;
        break;
      }
    }
    while (w[static_cast<std::size_t>(tok)] == 0.0) --tok;  // rounding at the tail
    if (tok == Vocabulary::kEos) break;
    out.push_back(vocab.token(tok));
    if (out.size() < env::kMaxQueryTokens) step = fwd.advance(enc, step, tok);
  }
  return out;
}

template <typename T>
ScoredActionSet action_distribution(const ModelParameters<T>& params, const Vocabulary& vocab,
                                    const ContextEncoding& context, const std::vector<ActionSpec>& actions,
                                    Rng* query_rng) {
  require(!actions.empty(), "empty action set");
  std::vector<ActionSpec> concrete = actions;
  for (auto& a : concrete) {
    if (a.is_query_slot()) {
      require(query_rng != nullptr, "open query slot needs a sampling rng");
      a.surface = sample_query(params, vocab, context, *query_rng);
    }
  }
  model::Tape<T> tape(false);
  model::Forward<T> fwd(params, tape);
  auto g = build_action_graph(fwd, vocab, context, concrete);
  const auto mv = tape.values(g.means);
  std::vector<double> means(mv.begin(), mv.end());
  return distribution_from_means(std::move(concrete), std::move(means));
}

std::size_t select_argmax(const ScoredActionSet& dist) {
  require(!dist.probs.empty(), "empty distribution");
  std::size_t best = 0;
  for (std::size_t i = 1; i < dist.probs.size(); ++i)
    if (dist.probs[i] > dist.probs[best]) best = i;
  return best;
}

namespace {
std::size_t draw(const std::vector<double>& probs, const std::vector<std::size_t>& order, double total,
                 Rng& rng) {
  double u = uniform01(rng) * total;
  for (std::size_t k = 0; k < order.size(); ++k) {
    u -= probs[order[k]];
    if (u < 0.0) return order[k];
  }
  return order.back();
}
}  // namespace

std::size_t select_sample(const ScoredActionSet& dist, Rng& rng) {
  require(!dist.probs.empty(), "empty distribution");
  std::vector<std::size_t> order(dist.probs.size());
  std::iota(order.begin(), order.end(), 0);
  return draw(dist.probs, order, 1.0, rng);
}

std::size_t select_epsilon_greedy(const ScoredActionSet& dist, double epsilon, Rng& rng) {
  require(epsilon >= 0.0 && epsilon <= 1.0, "epsilon must be in [0, 1]");
  if (uniform01(rng) < epsilon) return select_sample(dist, rng);
  return select_argmax(dist);
}

std::size_t select_top_p(const ScoredActionSet& dist, double p, Rng& rng) {
  require(p > 0.0 && p <= 1.0, "top-p must be in (0, 1]");
  require(!dist.probs.empty(), "empty distribution");
  std::vector<std::size_t> order(dist.probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dist.probs[a] > dist.probs[b]; });
  double cum = 0.0;
  std::size_t keep = 0;
  while (keep < order.size()) {
    cum += dist.probs[order[keep++]];
    if (cum >= p - 1e-12) break;
  }
  order.resize(keep);
  return draw(dist.probs, order, cum, rng);
}

std::size_t select(const ScoredActionSet& dist, const DecodingConfig& cfg, Rng& rng) {
  switch (cfg.kind) {
    case Decoding::EpsilonGreedy: return select_epsilon_greedy(dist, cfg.epsilon, rng);
    case Decoding::TopP: return select_top_p(dist, cfg.top_p, rng);
    case Decoding::Sample: return select_sample(dist, rng);
    case Decoding::Argmax: return select_argmax(dist);
  }
  return select_argmax(dist);
}

const char* to_string(Decoding d) {
  switch (d) {
    case Decoding::EpsilonGreedy: return "egreedy";
    case Decoding::TopP: return "topp";
    case Decoding::Sample: return "sample";
    case Decoding::Argmax: return "argmax";
  }
  return "?";
}

std::optional<Decoding> decoding_from_string(std::string_view s) {
  for (auto d : {Decoding::EpsilonGreedy, Decoding::TopP, Decoding::Sample, Decoding::Argmax})
    if (s == to_string(d)) return d;
  return std::nullopt;
}

#define SHOPAGENT_INSTANTIATE(T)                                                                       \
  template ActionGraph<T> build_action_graph<T>(model::Forward<T>&, const Vocabulary&,                 \
                                                const ContextEncoding&, const std::vector<ActionSpec>&); \
  template T action_mean_logprob<T>(const ModelParameters<T>&, const Vocabulary&, const ContextEncoding&, \
                                    const ActionSpec&);                                                \
  template Tokens sample_query<T>(const ModelParameters<T>&, const Vocabulary&, const ContextEncoding&,  \
                                  Rng&);                                                               \
  template ScoredActionSet action_distribution<T>(const ModelParameters<T>&, const Vocabulary&,        \
                                                  const ContextEncoding&, const std::vector<ActionSpec>&, \
                                                  Rng*);

SHOPAGENT_INSTANTIATE(float)
SHOPAGENT_INSTANTIATE(double)
#undef SHOPAGENT_INSTANTIATE

}  // namespace shopagent::policy
