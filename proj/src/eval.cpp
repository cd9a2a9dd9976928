#include "shopagent/eval.hpp"

#include <cmath>
#include <exception>
#include <iomanip>
#include <ostream>

#include "json.hpp"

namespace shopagent::eval {

ModelAgent::ModelAgent(const model::ModelParameters<float>& params, const model::Vocabulary& vocab,
                       policy::DecodingConfig decoding, model::ContextOptions context)
    : params_(&params), vocab_(&vocab), decoding_(decoding), context_(context) {}

std::size_t ModelAgent::act(const Tokens& goal, const Observation* prev, const Observation& cur, Rng& rng,
                            policy::ScoredActionSet& dist) const {
  const auto ctx = model::policy_context(*vocab_, goal, prev, cur, context_);
  dist = policy::action_distribution(*params_, *vocab_, ctx, cur.actions, &rng);
  return policy::select(dist, decoding_, rng);
}

std::string ModelAgent::label() const { return policy::to_string(decoding_.kind); }

std::size_t RandomAgent::act(const Tokens&, const Observation*, const Observation& cur, Rng& rng,
                             policy::ScoredActionSet& dist) const {
  dist.actions = cur.actions;
  for (auto& a : dist.actions) {
    if (!a.is_query_slot()) continue;
    const std::size_t len = 1 + uniform_index(rng, env::kMaxQueryTokens);
    for (std::size_t i = 0; i < len; ++i) {
      const int id = model::Vocabulary::kNumSpecials +
                     static_cast<int>(uniform_index(rng, vocab_->size() - model::Vocabulary::kNumSpecials));
      a.surface.push_back(vocab_->token(id));
    }
  }
  const std::size_t n = dist.actions.size();
  dist.probs.assign(n, 1.0 / static_cast<double>(n));
  dist.mean_logprobs.assign(n, 0.0);
  return uniform_index(rng, n);
}

Episode run_episode(const env::Catalog& catalog, const Instruction& instruction, const Agent& agent, Rng& rng,
                    int horizon, bool record) {
  Episode ep;
  ep.instruction = instruction;
  env::EpisodeState state;
  state.instruction = instruction;
  Observation cur = env::render(catalog, instruction, state.page);
  std::optional<Observation> prev;
  for (;;) {
    EpisodeStep step;
    step.chosen = agent.act(instruction.goal_text, prev ? &*prev : nullptr, cur, rng, step.dist);
    auto [next_state, result] = env::transition(catalog, state, step.dist.actions[step.chosen], horizon);
    state = std::move(next_state);
    step.reward = result.reward;
    if (record) {
      step.observation = cur;
      ep.steps.push_back(std::move(step));
    }
    if (result.done) {
      ep.reward = result.reward;
      return ep;
    }
    prev = std::move(cur);
    cur = std::move(result.observation);
  }
}

EvalReport report_from_rewards(const std::vector<std::vector<double>>& per_run, std::string strategy,
                               std::vector<std::uint64_t> seeds) {
  require(!per_run.empty(), "report needs at least one run");
  EvalReport rep;
  rep.strategy = std::move(strategy);
  rep.seeds = std::move(seeds);
  rep.n_runs = static_cast<int>(per_run.size());
  rep.n_episodes = static_cast<int>(per_run.front().size());
  require(rep.n_episodes > 0, "report needs at least one episode");
  for (const auto& rewards : per_run) {
    require(rewards.size() == per_run.front().size(), "runs differ in episode count");
    RunResult run;
    run.rewards = rewards;
    double sum = 0.0;
    int full = 0;
    for (double r : rewards) {
      sum += r;
      full += r == 1.0;
    }
    run.score = 100.0 * sum / static_cast<double>(rewards.size());
    run.success_rate = 100.0 * full / static_cast<double>(rewards.size());
    rep.score += run.score;
    rep.success_rate += run.success_rate;
    rep.runs.push_back(std::move(run));
  }
  rep.score /= rep.n_runs;
  rep.success_rate /= rep.n_runs;
  return rep;
}

std::uint64_t run_seed(std::uint64_t seed, int run) { return mix_seed(seed, 0xe7a1 + static_cast<std::uint64_t>(run)); }

EvalReport evaluate(const env::Catalog& catalog, const std::vector<Instruction>& goals, const Agent& agent,
                    int runs, std::uint64_t seed, int horizon) {
  require(runs >= 1, "evaluate needs at least one run");
  require(!goals.empty(), "evaluate needs goals");
  for (const auto& g : goals)
    require(env::purpose_of(g) != env::GoalPurpose::Train, "evaluation goal drawn from the training stream");

  std::vector<std::uint64_t> seeds;
  for (int r = 0; r < runs; ++r) seeds.push_back(run_seed(seed, r));
  std::vector<std::vector<double>> rewards(runs, std::vector<double>(goals.size()));
  const long total = static_cast<long>(runs) * static_cast<long>(goals.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (long k = 0; k < total; ++k) {
    const std::size_t r = static_cast<std::size_t>(k) / goals.size();
    const std::size_t g = static_cast<std::size_t>(k) % goals.size();
    try {
      Rng rng(mix_seed(seeds[r], g));
      rewards[r][g] = run_episode(catalog, goals[g], agent, rng, horizon).reward;
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return report_from_rewards(rewards, agent.label(), std::move(seeds));
}

std::vector<Instruction> eval_goals(const env::Catalog& catalog, std::uint64_t seed, std::size_t n) {
  env::GoalStream stream(catalog, seed, env::GoalPurpose::Eval);
  return stream.take(n);
}

void write_report_text(std::ostream& out, const EvalReport& report) {
  out << std::fixed << std::setprecision(2);
  out << "strategy      " << report.strategy << "\n";
  out << "episodes      " << report.n_episodes << " x " << report.n_runs << " runs\n";
  out << "score         " << report.score << "\n";
  out << "success rate  " << report.success_rate << "\n";
  for (std::size_t r = 0; r < report.runs.size(); ++r)
    out << "  run " << r << "  seed " << report.seeds[r] << "  score " << report.runs[r].score << "  success "
        << report.runs[r].success_rate << "\n";
  out << std::defaultfloat;
}

std::string report_json_line(const EvalReport& report) {
  nlohmann::json j;
  j["strategy"] = report.strategy;
  j["score"] = report.score;
  j["success_rate"] = report.success_rate;
  j["n_episodes"] = report.n_episodes;
  j["n_runs"] = report.n_runs;
  j["seeds"] = report.seeds;
  auto runs = nlohmann::json::array();
  for (const auto& r : report.runs)
    runs.push_back({{"score", r.score}, {"success_rate", r.success_rate}, {"rewards", r.rewards}});
  j["runs"] = std::move(runs);
  return j.dump();
}

EvalReport report_from_json_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    EvalReport rep;
    rep.strategy = j.at("strategy").get<std::string>();
    rep.score = j.at("score").get<double>();
    rep.success_rate = j.at("success_rate").get<double>();
    rep.n_episodes = j.at("n_episodes").get<int>();
    rep.n_runs = j.at("n_runs").get<int>();
    rep.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& r : j.at("runs"))
      rep.runs.push_back({r.at("score").get<double>(), r.at("success_rate").get<double>(),
                          r.at("rewards").get<std::vector<double>>()});
    return rep;
  } catch (const nlohmann::json::exception& e) {
    throw ContractViolation(std::string("malformed report record: ") + e.what());
  }
}

}  // namespace shopagent::eval
