#pragma once

#include <iosfwd>

#include "shopagent/context.hpp"
#include "shopagent/environment.hpp"
#include "shopagent/selection.hpp"

namespace shopagent::eval {

using env::ActionSpec;
using env::Instruction;
using env::Observation;

/// Anything that can choose an action on a page.
class Agent {
 public:
  virtual ~Agent() = default;
  /// Returns an index into `dist.actions` after filling `dist` with the
  /// concrete action set and the agent's probabilities.
  virtual std::size_t act(const Tokens& goal, const Observation* prev, const Observation& cur, Rng& rng,
                          policy::ScoredActionSet& dist) const = 0;
  virtual std::string label() const = 0;
};

/// Scores actions with the model and picks one with a decoding strategy.
class ModelAgent : public Agent {
 public:
  ModelAgent(const model::ModelParameters<float>& params, const model::Vocabulary& vocab,
             policy::DecodingConfig decoding, model::ContextOptions context = {});
  std::size_t act(const Tokens& goal, const Observation* prev, const Observation& cur, Rng& rng,
                  policy::ScoredActionSet& dist) const override;
  std::string label() const override;

 private:
  const model::ModelParameters<float>* params_;
  const model::Vocabulary* vocab_;
  policy::DecodingConfig decoding_;
  model::ContextOptions context_;
};

/// Uniform over the offered actions; the query slot becomes 1 to 8 uniformly
/// drawn non-special vocabulary tokens.
class RandomAgent : public Agent {
 public:
  explicit RandomAgent(const model::Vocabulary& vocab) : vocab_(&vocab) {}
  std::size_t act(const Tokens& goal, const Observation* prev, const Observation& cur, Rng& rng,
                  policy::ScoredActionSet& dist) const override;
  std::string label() const override { return "random"; }

 private:
  const model::Vocabulary* vocab_;
};

struct EpisodeStep {
  Observation observation;
  policy::ScoredActionSet dist;
  std::size_t chosen = 0;
  double reward = 0.0;
};

struct Episode {
  Instruction instruction;
  std::vector<EpisodeStep> steps;
  double reward = 0.0;
};

/// Plays one episode to completion. Steps are kept only when `record` is set.
Episode run_episode(const env::Catalog& catalog, const Instruction& instruction, const Agent& agent, Rng& rng,
                    int horizon = env::kDefaultHorizon, bool record = false);

struct RunResult {
  double score = 0.0;
  double success_rate = 0.0;
  std::vector<double> rewards;  // one per goal, in goal order

  bool operator==(const RunResult&) const = default;
};

struct EvalReport {
  double score = 0.0;         // 100 x mean reward, averaged over runs
  double success_rate = 0.0;  // percent of full-reward episodes, averaged over runs
  int n_episodes = 0;         // per run
  int n_runs = 0;
  std::vector<RunResult> runs;
  std::string strategy;
  std::vector<std::uint64_t> seeds;  // one per run

  bool operator==(const EvalReport&) const = default;
};

/// Builds a report from raw per-run reward logs.
EvalReport report_from_rewards(const std::vector<std::vector<double>>& per_run, std::string strategy,
                               std::vector<std::uint64_t> seeds);

/// Seed of run `r` under a base evaluation seed.
std::uint64_t run_seed(std::uint64_t seed, int run);

/// runs x goals episodes. Each episode draws from its own generator, so the
/// report does not depend on the order episodes are played in. Training goals
/// are rejected.
EvalReport evaluate(const env::Catalog& catalog, const std::vector<Instruction>& goals, const Agent& agent,
                    int runs, std::uint64_t seed, int horizon = env::kDefaultHorizon);

/// Held-out goals for a given evaluation seed.
std::vector<Instruction> eval_goals(const env::Catalog& catalog, std::uint64_t seed, std::size_t n);

void write_report_text(std::ostream& out, const EvalReport& report);
/// One JSON object on one line.
std::string report_json_line(const EvalReport& report);
EvalReport report_from_json_line(const std::string& line);

}  // namespace shopagent::eval
