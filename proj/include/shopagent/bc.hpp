#pragma once

#include <functional>
#include <iosfwd>

#include "shopagent/adam.hpp"
#include "shopagent/selection.hpp"

namespace shopagent::bc {

using env::ActionSpec;
using env::Catalog;
using env::Instruction;
using env::Observation;
using model::ContextOptions;
using model::ModelParameters;
using model::Vocabulary;

struct DemoStep {
  env::PageKind page = env::PageKind::Search;
  Observation observation;
  ActionSpec action;

  bool operator==(const DemoStep&) const = default;
};

/// A complete goal-conditioned trajectory ending in a purchase.
struct Demonstration {
  Instruction instruction;
  std::vector<DemoStep> steps;
  double final_reward = 0.0;
  std::string source_category;

  bool operator==(const Demonstration&) const = default;
};

struct BCConfig {
  int epochs = 10;
  double learning_rate = 2e-5;
  int warmup_steps = 100;
  double weight_decay = 0.01;
  int batch_size = 32;
  double adam_eps = 1e-8;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;

  model::AdamConfig adam() const;
  bool operator==(const BCConfig&) const = default;
};

/// Best reward any purchase can earn for `instruction`, with the matching
/// product (ties prefer the instruction's target, then the lowest id).
std::pair<int, double> best_purchase(const Catalog& catalog, const Instruction& instruction);

/// Scripted expert: searches with the goal's product type, pages forward to
/// the first listed product that earns the best attainable reward, opens it,
/// selects the required option values (in an rng-shuffled order) and buys. Throws RuntimeAbort when the
/// product cannot be reached within the horizon.
Demonstration oracle_demonstrate(const Catalog& catalog, const Instruction& instruction, Rng& rng,
                                 int horizon = env::kDefaultHorizon);

/// Oracle demonstrations for `n` goals of the demonstration goal stream.
std::vector<Demonstration> generate_demonstrations(const Catalog& catalog, std::uint64_t seed, std::size_t n,
                                                   const std::optional<std::string>& category = std::nullopt,
                                                   int horizon = env::kDefaultHorizon);

std::vector<Demonstration> filter_by_category(const std::vector<Demonstration>& demos,
                                              const std::string& category);

/// Seeded split into (train, held-out) with `holdout_fraction` held out.
std::pair<std::vector<Demonstration>, std::vector<Demonstration>> split_holdout(
    const std::vector<Demonstration>& demos, double holdout_fraction, std::uint64_t seed);

/// The set a demonstrated step is scored over: the page's actions with the
/// open query slot replaced by the demonstrated query, or dropped when the
/// step is a click. Returns the actions and the demonstrated index.
std::pair<std::vector<ActionSpec>, std::size_t> scoring_set(const std::vector<ActionSpec>& offered,
                                                            const ActionSpec& demonstrated);

/// Records the loss of one demonstration on `fwd`'s tape.
template <typename T>
typename model::Tape<T>::Var bc_loss_graph(model::Forward<T>& fwd, const Vocabulary& vocab,
                                           const Demonstration& demo, const ContextOptions& ctx);

/// Sum over steps of -log P(demonstrated action | goal, last pages).
template <typename T>
T bc_loss(const ModelParameters<T>& params, const Vocabulary& vocab, const Demonstration& demo,
          const ContextOptions& ctx = {});

struct BCResult {
  std::vector<double> epoch_losses;  // mean per-demo loss of every epoch
  long optimizer_steps = 0;
};

/// Minibatch Adam training. Mutates `params` in place.
BCResult train_bc(ModelParameters<float>& params, const Vocabulary& vocab, const std::vector<Demonstration>& demos,
                  const BCConfig& cfg, std::uint64_t seed, const ContextOptions& ctx = {},
                  const std::function<void(int epoch, double loss)>& on_epoch = {});

/// Fraction of demonstrated steps whose argmax action is the demonstrated one.
double next_action_agreement(const ModelParameters<float>& params, const Vocabulary& vocab,
                             const std::vector<Demonstration>& demos, const ContextOptions& ctx = {});

// One demonstration per line. Loading replays every trajectory through the
// environment and rejects any that does not reproduce.
void write_demonstrations(std::ostream& out, const std::vector<Demonstration>& demos);
std::vector<Demonstration> read_demonstrations(std::istream& in, const Catalog& catalog,
                                               int horizon = env::kDefaultHorizon);

/// Replays a demonstration and returns the regenerated trajectory.
Demonstration replay(const Catalog& catalog, const Instruction& instruction,
                     const std::vector<ActionSpec>& actions, int horizon = env::kDefaultHorizon);

}  // namespace shopagent::bc
