// Command-line front end for the shopping agent.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "CLI11.hpp"
#include "shopagent/checkpoint.hpp"
#include "shopagent/pipeline.hpp"

namespace fs = std::filesystem;
using namespace shopagent;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitAbort = 2;

struct Common {
  std::string config_path;
  std::string preset = "default";
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string decoding;
  std::optional<double> epsilon;
  std::optional<double> top_p;
  std::optional<int> obs_history;
  std::string category;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key = value run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--preset", c.preset, "defaults before the config file is applied")
      ->check(CLI::IsMember({"default", "desk"}));
  cmd->add_option("--seed", c.seed, "run seed");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--decoding", c.decoding, "evaluation decoding")
      ->check(CLI::IsMember({"egreedy", "topp", "sample", "argmax"}));
  cmd->add_option("--epsilon", c.epsilon, "epsilon for egreedy decoding");
  cmd->add_option("--top-p", c.top_p, "nucleus mass for topp decoding");
  cmd->add_option("--obs-history", c.obs_history, "pages of history in the context")->check(CLI::IsMember({1, 2}));
  cmd->add_option("--category", c.category, "single demonstration category (uda)");
}

pipeline::RunConfig resolve(const Common& c, std::optional<pipeline::Pipeline> kind = std::nullopt) {
  pipeline::RunConfig cfg = c.preset == "desk" ? pipeline::desk_scale_config() : pipeline::RunConfig{};
  if (!c.config_path.empty()) cfg = pipeline::load_config(c.config_path, cfg);
  if (kind) cfg.pipeline = *kind;
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (!c.decoding.empty()) cfg.decoding.kind = *policy::decoding_from_string(c.decoding);
  if (c.epsilon) cfg.decoding.epsilon = *c.epsilon;
  if (c.top_p) cfg.decoding.top_p = *c.top_p;
  if (c.obs_history) cfg.obs_history = *c.obs_history;
  if (!c.category.empty()) cfg.category = c.category;
  return cfg;
}

struct World {
  std::shared_ptr<const env::Catalog> catalog;
  std::shared_ptr<const model::Vocabulary> vocab;
};

World make_world(const pipeline::RunConfig& cfg) {
  World w;
  w.catalog = std::make_shared<const env::Catalog>(
      env::generate_catalog(cfg.catalog_seed, cfg.n_products, cfg.n_categories));
  w.vocab = std::make_shared<const model::Vocabulary>(model::build_vocabulary(*w.catalog));
  return w;
}

model::ModelParameters<float> load_model(const std::string& path, const World& w) {
  auto params = model::load_checkpoint(path);
  if (params.config.vocab_size != w.vocab->size())
    throw pipeline::ConfigError("checkpoint " + path + " does not match the configured catalog");
  return params;
}

void print_report(const eval::EvalReport& rep) {
  std::cout << std::fixed << std::setprecision(2) << std::left << std::setw(10) << rep.strategy << " score "
            << std::setw(7) << rep.score << " success " << rep.success_rate << "\n"
            << std::defaultfloat;
}

template <typename W>
void write_file(const fs::path& path, W&& writer) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw RuntimeAbort("cannot write " + path.string());
  writer(out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Goal-conditioned shopping agent: environment, training and evaluation"};
  app.require_subcommand(1);

  Common common;
  std::string checkpoint;
  int n_products = 50, n_categories = 5, count = 200, goal_index = 0;
  std::optional<long> steps;
  std::optional<int> workers;
  std::optional<std::string> init;
  bool random_agent = false;
  bool print_plan = false;

  auto* gen_catalog = app.add_subcommand("gen-catalog", "write a catalog, its vocabulary and held-out goals");
  add_common(gen_catalog, common);
  gen_catalog->add_option("--products", n_products)->check(CLI::PositiveNumber);
  gen_catalog->add_option("--categories", n_categories)->check(CLI::Range(1, 5));

  auto* gen_demos = app.add_subcommand("gen-demos", "write oracle demonstrations");
  add_common(gen_demos, common);
  gen_demos->add_option("--count", count)->check(CLI::PositiveNumber);

  std::map<CLI::App*, pipeline::Pipeline> trainers;
  for (auto [name, kind, help] : {std::tuple{"train-bc", pipeline::Pipeline::BC, "behavior cloning only"},
                                  std::tuple{"train-ppo", pipeline::Pipeline::PPO, "PPO from scratch or --init"},
                                  std::tuple{"train-hybrid", pipeline::Pipeline::Hybrid, "behavior cloning then PPO"},
                                  std::tuple{"train-uda", pipeline::Pipeline::UDA,
                                             "single-category cloning then PPO on all categories"}}) {
    auto* cmd = app.add_subcommand(name, help);
    add_common(cmd, common);
    cmd->add_option("--steps", steps, "PPO environment steps");
    cmd->add_option("--workers", workers, "scoring workers")->check(CLI::PositiveNumber);
    cmd->add_option("--init", init, "starting checkpoint")->check(CLI::ExistingFile);
    cmd->add_flag("--plan", print_plan, "print the run plan and exit");
    trainers[cmd] = kind;
  }

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on held-out goals");
  add_common(eval_cmd, common);
  auto* ck = eval_cmd->add_option("--checkpoint", checkpoint)->check(CLI::ExistingFile);
  eval_cmd->add_flag("--random", random_agent, "evaluate the uniform random agent instead");
  ck->excludes("--random");

  auto* compare = app.add_subcommand("compare-decodings", "evaluate a checkpoint under every decoding");
  add_common(compare, common);
  compare->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);

  auto* inspect = app.add_subcommand("inspect-episode", "play one held-out goal and print every step");
  add_common(inspect, common);
  inspect->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  inspect->add_option("--goal", goal_index, "index into the held-out goals")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (gen_catalog->parsed()) {
      auto cfg = resolve(common);
      cfg.n_products = n_products;
      cfg.n_categories = n_categories;
      if (common.seed) cfg.catalog_seed = *common.seed;
      cfg.validate();
      const World w = make_world(cfg);
      const fs::path dir = cfg.out_dir;
      write_file(dir / "catalog.jsonl", [&](std::ostream& o) { env::write_catalog(o, *w.catalog); });
      write_file(dir / "vocab.txt", [&](std::ostream& o) { model::write_vocabulary(o, *w.vocab); });
      write_file(dir / "eval_goals.jsonl", [&](std::ostream& o) {
        env::write_instructions(o, eval::eval_goals(*w.catalog, cfg.eval_seed, cfg.eval_episodes));
      });
      std::cout << w.catalog->products.size() << " products, " << w.vocab->size() << " tokens -> " << dir << "\n";
      return 0;
    }
    if (gen_demos->parsed()) {
      auto cfg = resolve(common);
      if (common.seed) cfg.demo_seed = *common.seed;
      cfg.n_demos = count;
      cfg.validate();
      const World w = make_world(cfg);
      auto demos = bc::generate_demonstrations(*w.catalog, cfg.demo_seed, static_cast<std::size_t>(cfg.n_demos));
      if (!cfg.category.empty()) demos = bc::filter_by_category(demos, cfg.category);
      write_file(fs::path(cfg.out_dir) / "demos.jsonl", [&](std::ostream& o) { bc::write_demonstrations(o, demos); });
      std::cout << demos.size() << " demonstrations -> " << cfg.out_dir << "\n";
      return 0;
    }
    for (auto& [cmd, kind] : trainers) {
      if (!cmd->parsed()) continue;
      auto cfg = resolve(common, kind);
      if (steps) cfg.total_env_steps = *steps;
      if (workers) cfg.workers = *workers;
      if (init) cfg.init_checkpoint = *init;
      cfg.validate();
      if (print_plan) {
        for (const auto& line : pipeline::run_plan(cfg)) std::cout << line << "\n";
        return 0;
      }
      const auto result = pipeline::run_pipeline(cfg, &std::cout);
      print_report(result.report);
      return 0;
    }
    if (eval_cmd->parsed()) {
      auto cfg = resolve(common);
      cfg.validate();
      if (!random_agent && checkpoint.empty()) throw pipeline::ConfigError("eval needs --checkpoint or --random");
      const World w = make_world(cfg);
      const auto goals = eval::eval_goals(*w.catalog, cfg.eval_seed, cfg.eval_episodes);
      eval::EvalReport rep;
      if (random_agent) {
        eval::RandomAgent agent(*w.vocab);
        rep = eval::evaluate(*w.catalog, goals, agent, cfg.eval_runs, cfg.eval_seed, cfg.horizon);
      } else {
        const auto params = load_model(checkpoint, w);
        eval::ModelAgent agent(params, *w.vocab, cfg.decoding, cfg.context());
        rep = eval::evaluate(*w.catalog, goals, agent, cfg.eval_runs, cfg.eval_seed, cfg.horizon);
      }
      eval::write_report_text(std::cout, rep);
      if (!common.out.empty()) {
        write_file(fs::path(cfg.out_dir) / "report.txt", [&](std::ostream& o) { eval::write_report_text(o, rep); });
        write_file(fs::path(cfg.out_dir) / "report.jsonl",
                   [&](std::ostream& o) { o << eval::report_json_line(rep) << "\n"; });
      }
      return 0;
    }
    if (compare->parsed()) {
      auto cfg = resolve(common);
      cfg.validate();
      const World w = make_world(cfg);
      const auto params = load_model(checkpoint, w);
      const auto goals = eval::eval_goals(*w.catalog, cfg.eval_seed, cfg.eval_episodes);
      const auto reports = pipeline::compare_decodings(params, *w.vocab, *w.catalog, goals, cfg.eval_runs,
                                                       cfg.eval_seed, cfg.decoding, cfg.context(), cfg.horizon);
      for (const auto& r : reports) print_report(r);
      if (!common.out.empty())
        write_file(fs::path(cfg.out_dir) / "decodings.jsonl", [&](std::ostream& o) {
          for (const auto& r : reports) o << eval::report_json_line(r) << "\n";
        });
      return 0;
    }
    if (inspect->parsed()) {
      auto cfg = resolve(common);
      cfg.validate();
      const World w = make_world(cfg);
      const auto params = load_model(checkpoint, w);
      const auto goals = eval::eval_goals(*w.catalog, cfg.eval_seed, static_cast<std::size_t>(goal_index) + 1);
      pipeline::inspect_episode(params, *w.vocab, *w.catalog, goals.back(), cfg.decoding,
                                eval::run_seed(cfg.eval_seed, 0), cfg.context(), std::cout, cfg.horizon);
      return 0;
    }
  } catch (const pipeline::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "aborted: " << e.what() << "\n";
    return kExitAbort;
  }
  return 0;
}
