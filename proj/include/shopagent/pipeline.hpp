#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>

#include "shopagent/bc.hpp"
#include "shopagent/eval.hpp"
#include "shopagent/ppo.hpp"

namespace shopagent::pipeline {

/// Malformed or inconsistent run configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Pipeline { BC, PPO, Hybrid, UDA };
const char* to_string(Pipeline p);
std::optional<Pipeline> pipeline_from_string(std::string_view s);

enum class Transport { Local, Socket };

struct RunConfig {
  Pipeline pipeline = Pipeline::PPO;
  std::uint64_t seed = 1;
  std::string out_dir = "run";
  std::string init_checkpoint;  // empty: fresh initialization

  std::uint64_t catalog_seed = 1;
  int n_products = 50;
  int n_categories = 5;
  int horizon = env::kDefaultHorizon;
  int obs_history = 2;

  std::uint64_t demo_seed = 11;
  int n_demos = 200;
  std::string category;  // single-domain demonstrations, uda only

  bc::BCConfig bc;
  ppo::PPOConfig ppo;
  long total_env_steps = 50000;  // PPO phase budget in environment transitions
  policy::DecodingConfig collect_decoding{policy::Decoding::Sample, 0.2, 0.8};
  int workers = 1;
  Transport transport = Transport::Local;

  policy::DecodingConfig decoding;  // evaluation
  std::uint64_t eval_seed = 99;
  int eval_episodes = 200;
  int eval_runs = 4;
  long curve_every = 10000;
  int curve_goals = 50;

  model::ContextOptions context() const;
  /// Throws ConfigError.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// Settings sized for a desktop CPU. Learning rates are raised and the BC
/// warmup shortened so that a 200-demonstration budget trains at all.
RunConfig desk_scale_config();

// Flat text, one `section.key = value` per line, `#` comments. Every key has
// a default, so an empty file is valid.
void write_config(std::ostream& out, const RunConfig& cfg);
RunConfig read_config(std::istream& in, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
/// Applies one `section.key = value` assignment.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

/// Ordered phase descriptions; equal configs give equal plans.
std::vector<std::string> run_plan(const RunConfig& cfg);

struct CurvePoint {
  long env_steps = 0;
  double score = 0.0;
  double success_rate = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

struct UpdateRecord {
  int update = 0;
  long env_steps = 0;
  double mean_episode_reward = 0.0;  // episodes finished during this collection
  double score_so_far = 0.0;         // 100 x mean over every finished episode
  ppo::UpdateStats stats;
};

struct PPOPhaseOptions {
  long total_env_steps = 50000;
  int workers = 1;
  Transport transport = Transport::Local;
  policy::DecodingConfig collect_decoding{policy::Decoding::Sample, 0.2, 0.8};
  policy::DecodingConfig eval_decoding;
  long curve_every = 10000;
  std::vector<env::Instruction> curve_goals;  // empty: no learning curve
  std::uint64_t curve_seed = 0;
  model::ContextOptions context;
  int horizon = env::kDefaultHorizon;
  std::optional<std::string> goal_category;
};

struct PPOPhaseResult {
  std::vector<UpdateRecord> updates;
  std::vector<CurvePoint> curve;
  long env_steps = 0;
};

/// Collect and update until the budget is spent, rounded up to whole
/// updates. Mutates `params`.
PPOPhaseResult train_ppo(model::ModelParameters<float>& params, std::shared_ptr<const model::Vocabulary> vocab,
                         std::shared_ptr<const env::Catalog> catalog, const ppo::PPOConfig& cfg,
                         const PPOPhaseOptions& options, std::uint64_t seed,
                         const std::function<void(const UpdateRecord&)>& on_update = {});

struct PipelineResult {
  model::ModelParameters<float> params;
  eval::EvalReport report;
  std::optional<bc::BCResult> bc;
  PPOPhaseResult ppo;
};

/// Runs the configured phases and writes the checkpoint, learning curve,
/// training statistics and report into cfg.out_dir (skipped when empty).
/// Phase failures propagate with the phase name prefixed.
PipelineResult run_pipeline(const RunConfig& cfg, std::ostream* log = nullptr);

/// One evaluation per decoding strategy over shared goals and seeds.
std::vector<eval::EvalReport> compare_decodings(const model::ModelParameters<float>& params,
                                                const model::Vocabulary& vocab, const env::Catalog& catalog,
                                                const std::vector<env::Instruction>& goals, int runs,
                                                std::uint64_t seed, const policy::DecodingConfig& base = {},
                                                const model::ContextOptions& context = {},
                                                int horizon = env::kDefaultHorizon);

/// Plays one episode and prints every observation, the action distribution
/// and the chosen action.
eval::Episode inspect_episode(const model::ModelParameters<float>& params, const model::Vocabulary& vocab,
                              const env::Catalog& catalog, const env::Instruction& instruction,
                              const policy::DecodingConfig& decoding, std::uint64_t seed,
                              const model::ContextOptions& context, std::ostream& out,
                              int horizon = env::kDefaultHorizon);

void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve);
void write_stats_csv(std::ostream& out, const std::vector<UpdateRecord>& updates);

/// Seeds derived from a run seed, shared by every pipeline so phases compose.
namespace seeds {
std::uint64_t init(std::uint64_t run_seed);
std::uint64_t bc(std::uint64_t run_seed);
std::uint64_t ppo(std::uint64_t run_seed);
}  // namespace seeds

}  // namespace shopagent::pipeline
