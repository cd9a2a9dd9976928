#include "shopagent/bc.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "shopagent/records.hpp"
#include "shopagent/text.hpp"

namespace shopagent::bc {

model::AdamConfig BCConfig::adam() const {
  return {learning_rate, adam_beta1, adam_beta2, adam_eps, weight_decay, warmup_steps};
}

namespace {

env::OptionChoice best_options(const env::Product& p, const Instruction& instruction) {
  env::OptionChoice chosen;
  for (const auto& [name, value] : instruction.required_options) {
    auto it = p.options.find(name);
    if (it != p.options.end() && std::find(it->second.begin(), it->second.end(), value) != it->second.end())
      chosen[name] = value;
  }
  return chosen;
}

env::EpisodeState initial_state(const Instruction& instruction) {
  env::EpisodeState s;
  s.instruction = instruction;
  return s;
}

}  // namespace

std::pair<int, double> best_purchase(const Catalog& catalog, const Instruction& instruction) {
  int best = instruction.target_product;
  double best_reward =
      env::compute_reward(catalog.at(best), best_options(catalog.at(best), instruction), instruction);
  for (const auto& p : catalog.products) {
    const double r = env::compute_reward(p, best_options(p, instruction), instruction);
    if (r > best_reward) {
      best = p.id;
      best_reward = r;
    }
  }
  return {best, best_reward};
}

Demonstration replay(const Catalog& catalog, const Instruction& instruction,
                     const std::vector<ActionSpec>& actions, int horizon) {
  Demonstration demo;
  demo.instruction = instruction;
  demo.source_category = instruction.source_category;
  env::EpisodeState state = initial_state(instruction);
  Observation obs = env::render(catalog, instruction, state.page);
  for (const auto& a : actions) {
    require(!state.done, "trajectory continues after the episode ended");
    demo.steps.push_back({state.page.kind, obs, a});
    auto [next, result] = env::transition(catalog, state, a, horizon);
    state = std::move(next);
    obs = std::move(result.observation);
    demo.final_reward = result.reward;
  }
  require(state.done && state.purchased.has_value(), "trajectory does not end in a purchase");
  return demo;
}

Demonstration oracle_demonstrate(const Catalog& catalog, const Instruction& instruction, Rng& rng,
                                 int horizon) {
  require(instruction.target_product >= 0 &&
              static_cast<std::size_t>(instruction.target_product) < catalog.products.size(),
          "instruction target is not in the catalog");
  const double best = best_purchase(catalog, instruction).second;
  const auto ranked = env::rank_products(catalog, instruction.target_type);
  const auto pos = std::find_if(ranked.begin(), ranked.end(), [&](int id) {
    const auto& q = catalog.at(id);
    return env::compute_reward(q, best_options(q, instruction), instruction) == best;
  });
  if (pos == ranked.end()) throw RuntimeAbort("oracle: no listed product earns the best reward");
  const int product = *pos;
  const env::Product& p = catalog.at(product);

  std::vector<ActionSpec> plan{env::query(instruction.target_type)};
  const auto pages = static_cast<std::size_t>(pos - ranked.begin()) / env::kResultsPerPage;
  for (std::size_t i = 0; i < pages; ++i) plan.push_back(env::buttons::next());
  plan.push_back(env::ActionSpec{env::ActionKind::Click, p.title});

  std::vector<std::string> values;
  for (const auto& [name, value] : best_options(p, instruction)) values.push_back(value);
  shuffle_in_place(values, rng);
  for (const auto& v : values) plan.push_back(env::click(v));
  plan.push_back(env::buttons::buy_now());

  if (plan.size() > static_cast<std::size_t>(horizon))
    throw RuntimeAbort("oracle: product " + std::to_string(product) + " needs " + std::to_string(plan.size()) +
                       " steps, horizon is " + std::to_string(horizon));
  return replay(catalog, instruction, plan, horizon);
}

std::vector<Demonstration> generate_demonstrations(const Catalog& catalog, std::uint64_t seed, std::size_t n,
                                                   const std::optional<std::string>& category, int horizon) {
  env::GoalStream goals(catalog, seed, env::GoalPurpose::Demo, category);
  Rng rng(mix_seed(seed, 0xde3));
  std::vector<Demonstration> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(oracle_demonstrate(catalog, goals.next(), rng, horizon));
  return out;
}

std::vector<Demonstration> filter_by_category(const std::vector<Demonstration>& demos,
                                              const std::string& category) {
  std::vector<Demonstration> out;
  std::copy_if(demos.begin(), demos.end(), std::back_inserter(out),
               [&](const Demonstration& d) { return d.source_category == category; });
  return out;
}

std::pair<std::vector<Demonstration>, std::vector<Demonstration>> split_holdout(
    const std::vector<Demonstration>& demos, double holdout_fraction, std::uint64_t seed) {
  require(holdout_fraction >= 0.0 && holdout_fraction <= 1.0, "holdout fraction must be in [0, 1]");
  std::vector<std::size_t> order(demos.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x5917));
  shuffle_in_place(order, rng);
  const auto n_hold = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(demos.size())));
  std::vector<std::size_t> held(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));
  std::vector<std::size_t> kept(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());
  std::sort(held.begin(), held.end());
  std::sort(kept.begin(), kept.end());
  std::pair<std::vector<Demonstration>, std::vector<Demonstration>> out;
  for (auto i : kept) out.first.push_back(demos[i]);
  for (auto i : held) out.second.push_back(demos[i]);
  return out;
}

std::pair<std::vector<ActionSpec>, std::size_t> scoring_set(const std::vector<ActionSpec>& offered,
                                                            const ActionSpec& demonstrated) {
  require(env::is_legal(offered, demonstrated),
          "demonstrated action '" + text::join(demonstrated.surface) + "' is not offered");
  std::vector<ActionSpec> set;
  std::size_t index = offered.size();
  for (const auto& a : offered) {
    if (a.is_query_slot()) {
      if (demonstrated.kind != env::ActionKind::SearchQuery) continue;
      index = set.size();
      set.push_back(demonstrated);
      continue;
    }
    if (a == demonstrated) index = set.size();
    set.push_back(a);
  }
  return {std::move(set), index};
}

template <typename T>
typename model::Tape<T>::Var bc_loss_graph(model::Forward<T>& fwd, const Vocabulary& vocab,
                                           const Demonstration& demo, const ContextOptions& ctx) {
  require(!demo.steps.empty(), "demonstration has no steps");
  auto& tape = fwd.tape();
  std::vector<typename model::Tape<T>::Var> terms;
  const Observation* prev = nullptr;
  for (const auto& step : demo.steps) {
    const auto [set, index] = scoring_set(step.observation.actions, step.action);
    const auto context = model::policy_context(vocab, demo.instruction.goal_text, prev, step.observation, ctx);
    auto g = policy::build_action_graph(fwd, vocab, context, set);
    terms.push_back(tape.pick(g.logprobs, static_cast<int>(index)));
    prev = &step.observation;
  }
  return tape.scale(tape.sum(tape.stack(terms)), T(-1));
}

template <typename T>
T bc_loss(const ModelParameters<T>& params, const Vocabulary& vocab, const Demonstration& demo,
          const ContextOptions& ctx) {
  model::Tape<T> tape(false);
  model::Forward<T> fwd(params, tape);
  return tape.item(bc_loss_graph(fwd, vocab, demo, ctx));
}

BCResult train_bc(ModelParameters<float>& params, const Vocabulary& vocab, const std::vector<Demonstration>& demos,
                  const BCConfig& cfg, std::uint64_t seed, const ContextOptions& ctx,
                  const std::function<void(int, double)>& on_epoch) {
  require(!demos.empty(), "behavioral cloning needs demonstrations");
  require(cfg.epochs >= 0 && cfg.batch_size >= 1, "invalid BC configuration");
  BCResult result;
  auto state = model::AdamState<float>::for_params(params);
  const auto adam = cfg.adam();
  Rng rng(mix_seed(seed, 0xbc));
  std::vector<std::size_t> order(demos.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_in_place(order, rng);
    double epoch_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const auto batch = static_cast<float>(end - start);
      auto grads = params.zeros_like();
      for (std::size_t k = start; k < end; ++k) {
        model::Tape<float> tape;
        model::Forward<float> fwd(params, tape);
        auto loss = bc_loss_graph(fwd, vocab, demos[order[k]], ctx);
        const float value = tape.item(loss);
        if (!std::isfinite(value))
          throw RuntimeAbort("bc: non-finite loss at epoch " + std::to_string(epoch) + ", demo " +
                             std::to_string(order[k]));
        epoch_sum += value;
        tape.backward(tape.scale(loss, 1.0f / batch), grads);
      }
      if (!std::isfinite(model::grad_norm(grads)))
        throw RuntimeAbort("bc: non-finite gradient at epoch " + std::to_string(epoch));
      model::adam_step(params, grads, state, adam);
      ++result.optimizer_steps;
    }
    const double mean = epoch_sum / static_cast<double>(demos.size());
    result.epoch_losses.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return result;
}

double next_action_agreement(const ModelParameters<float>& params, const Vocabulary& vocab,
                             const std::vector<Demonstration>& demos, const ContextOptions& ctx) {
  std::size_t hits = 0, total = 0;
  for (const auto& demo : demos) {
    const Observation* prev = nullptr;
    for (const auto& step : demo.steps) {
      const auto [set, index] = scoring_set(step.observation.actions, step.action);
      const auto context = model::policy_context(vocab, demo.instruction.goal_text, prev, step.observation, ctx);
      const auto dist = policy::action_distribution(params, vocab, context, set);
      hits += policy::select_argmax(dist) == index;
      ++total;
      prev = &step.observation;
    }
  }
  require(total > 0, "agreement needs at least one demonstrated step");
  return static_cast<double>(hits) / static_cast<double>(total);
}

void write_demonstrations(std::ostream& out, const std::vector<Demonstration>& demos) {
  using nlohmann::json;
  for (const auto& d : demos) {
    json steps = json::array();
    for (const auto& s : d.steps)
      steps.push_back(json{{"page", env::to_string(s.page)},
                           {"kind", s.action.kind == env::ActionKind::SearchQuery ? "query" : "click"},
                           {"surface", s.action.surface}});
    out << json{{"instruction", env::instruction_to_json(d.instruction)},
                {"steps", steps},
                {"final_reward", d.final_reward},
                {"category", d.source_category}}
               .dump()
        << '\n';
  }
}

std::vector<Demonstration> read_demonstrations(std::istream& in, const Catalog& catalog, int horizon) {
  using nlohmann::json;
  std::vector<Demonstration> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = "demonstration on line " + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ContractViolation("malformed " + where + ": " + e.what());
    }
    try {
      const Instruction instruction = env::instruction_from_json(j.at("instruction"));
      std::vector<ActionSpec> actions;
      std::vector<std::string> pages;
      for (const auto& s : j.at("steps")) {
        const auto kind = s.at("kind").get<std::string>();
        require(kind == "query" || kind == "click", where + ": unknown action kind '" + kind + "'");
        actions.push_back({kind == "query" ? env::ActionKind::SearchQuery : env::ActionKind::Click,
                           s.at("surface").get<Tokens>()});
        pages.push_back(s.at("page").get<std::string>());
      }
      Demonstration d = replay(catalog, instruction, actions, horizon);
      for (std::size_t i = 0; i < pages.size(); ++i) {
        const auto kind = env::page_kind_from_string(pages[i]);
        require(kind.has_value(), where + ": unknown page kind '" + pages[i] + "'");
        require(*kind == d.steps[i].page, where + ": step " + std::to_string(i) + " replays on a different page");
      }
      require(d.final_reward == j.at("final_reward").get<double>(), where + ": replayed reward differs");
      require(d.source_category == j.at("category").get<std::string>(), where + ": category differs");
      out.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw ContractViolation("malformed " + where + ": " + e.what());
    }
  }
  return out;
}

#define SHOPAGENT_INSTANTIATE(T)                                                                       \
  template model::Tape<T>::Var bc_loss_graph<T>(model::Forward<T>&, const Vocabulary&,                \
                                                const Demonstration&, const ContextOptions&);          \
  template T bc_loss<T>(const ModelParameters<T>&, const Vocabulary&, const Demonstration&,            \
                        const ContextOptions&);

SHOPAGENT_INSTANTIATE(float)
SHOPAGENT_INSTANTIATE(double)
#undef SHOPAGENT_INSTANTIATE

}  // namespace shopagent::bc
