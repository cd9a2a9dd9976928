#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <omp.h>
#include <sstream>

#include "shopagent/checkpoint.hpp"
#include "shopagent/eval.hpp"
#include "shopagent/pipeline.hpp"
#include "support.hpp"

using namespace shopagent;
using namespace shopagent::eval;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("shopagent_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// A pipeline config small enough for a unit test.
pipeline::RunConfig tiny_config(pipeline::Pipeline p, const fs::path& out) {
  auto cfg = pipeline::desk_scale_config();
  cfg.pipeline = p;
  cfg.out_dir = out.string();
  cfg.n_demos = 12;
  cfg.bc.epochs = 2;
  cfg.bc.batch_size = 4;
  cfg.total_env_steps = 640;
  cfg.eval_episodes = 6;
  cfg.eval_runs = 2;
  cfg.curve_goals = 3;
  return cfg;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SHOPAGENT_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Metrics, ScoreAndSuccessExamples) {
  const auto rep = report_from_rewards({{1.0, 0.5, 0.0, 1.0}, {0.0, 0.0, 0.25, 0.75}}, "x", {1, 2});
  EXPECT_DOUBLE_EQ(rep.runs[0].score, 62.5);
  EXPECT_DOUBLE_EQ(rep.runs[0].success_rate, 50.0);
  EXPECT_DOUBLE_EQ(rep.runs[1].score, 25.0);
  EXPECT_DOUBLE_EQ(rep.runs[1].success_rate, 0.0);
  EXPECT_DOUBLE_EQ(rep.score, 43.75);
  EXPECT_DOUBLE_EQ(rep.success_rate, 25.0);
  EXPECT_EQ(rep.n_runs, 2);
  EXPECT_EQ(rep.n_episodes, 4);
  EXPECT_THROW(report_from_rewards({{1.0}, {1.0, 0.0}}, "x", {1, 2}), ContractViolation);
}

TEST(Metrics, ScoreBoundsSuccessFromAbove) {
  Rng rng(3);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> r(20);
    for (auto& x : r) x = uniform01(rng) < 0.3 ? 1.0 : uniform01(rng);
    const auto rep = report_from_rewards({r}, "x", {0});
    EXPECT_GE(rep.score + 1e-12, rep.success_rate);
    EXPECT_GE(rep.score, 0.0);
    EXPECT_LE(rep.score, 100.0);
  }
}

TEST(Report, JsonLineRoundTrip) {
  const auto rep = report_from_rewards({{1.0, 0.1, 1.0 / 3.0}, {0.2, 0.0, 0.7}}, "egreedy", {11, 12});
  const auto line = report_json_line(rep);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_EQ(report_from_json_line(line), rep);
  std::ostringstream text;
  write_report_text(text, rep);
  EXPECT_NE(text.str().find("egreedy"), std::string::npos);
}

TEST(Evaluate, IndependentOfThreadCountAndRejectsTrainingGoals) {
  const auto catalog = fixture::standard_catalog();
  const auto vocab = fixture::standard_vocab();
  const auto params = model::initialize_parameters<float>(fixture::full_config(*vocab), 2);
  ModelAgent agent(params, *vocab, {});
  const auto goals = eval_goals(*catalog, 99, 12);
  omp_set_num_threads(1);
  const auto a = evaluate(*catalog, goals, agent, 2, 5);
  omp_set_num_threads(4);
  const auto b = evaluate(*catalog, goals, agent, 2, 5);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.seeds, (std::vector<std::uint64_t>{run_seed(5, 0), run_seed(5, 1)}));
  for (const auto& g : goals) EXPECT_EQ(env::purpose_of(g), env::GoalPurpose::Eval);
  const auto train = env::GoalStream(*catalog, 1, env::GoalPurpose::Train).take(2);
  EXPECT_THROW(evaluate(*catalog, train, agent, 1, 5), ContractViolation);
}

TEST(Evaluate, RandomAgentPlaysLegalEpisodes) {
  const auto catalog = fixture::standard_catalog();
  const auto vocab = fixture::standard_vocab();
  RandomAgent agent(*vocab);
  for (const auto& g : eval_goals(*catalog, 99, 20)) {
    Rng rng(g.id);
    const auto ep = run_episode(*catalog, g, agent, rng, env::kDefaultHorizon, true);
    EXPECT_LE(ep.steps.size(), static_cast<std::size_t>(env::kDefaultHorizon));
    EXPECT_GE(ep.reward, 0.0);
    EXPECT_LE(ep.reward, 1.0);
    for (const auto& s : ep.steps) {
      double z = 0.0;
      for (double p : s.dist.probs) z += p;
      EXPECT_NEAR(z, 1.0, 1e-9);
    }
  }
}

TEST(Config, TextRoundTripAndPlans) {
  auto cfg = pipeline::desk_scale_config();
  cfg.pipeline = pipeline::Pipeline::UDA;
  cfg.category = fixture::standard_catalog()->categories[1];
  cfg.decoding.kind = policy::Decoding::TopP;
  cfg.ppo.clip_eps = 0.15;
  std::stringstream buf;
  pipeline::write_config(buf, cfg);
  const auto back = pipeline::read_config(buf);
  EXPECT_EQ(back, cfg);
  EXPECT_EQ(pipeline::run_plan(back), pipeline::run_plan(cfg));
  EXPECT_NE(pipeline::run_plan(cfg), pipeline::run_plan(pipeline::desk_scale_config()));

  std::stringstream empty;
  EXPECT_EQ(pipeline::read_config(empty), pipeline::RunConfig{});
  std::stringstream bad("ppo.learning_rate = fast\n");
  EXPECT_THROW(pipeline::read_config(bad), pipeline::ConfigError);
  std::stringstream unknown("ppo.warp = 9\n");
  EXPECT_THROW(pipeline::read_config(unknown), pipeline::ConfigError);
}

TEST(Config, ShippedDeskPresetMatchesCode) {
  const auto file = pipeline::load_config(SHOPAGENT_DESK_CONF);
  EXPECT_EQ(file, pipeline::desk_scale_config());
}

TEST(Config, ValidationRules) {
  auto cfg = pipeline::desk_scale_config();
  cfg.validate();
  cfg.pipeline = pipeline::Pipeline::UDA;
  EXPECT_THROW(cfg.validate(), pipeline::ConfigError);
  cfg.category = "no-such-category";
  EXPECT_THROW(cfg.validate(), pipeline::ConfigError);
  cfg.category = fixture::standard_catalog()->categories[0];
  cfg.validate();
  cfg.pipeline = pipeline::Pipeline::BC;
  EXPECT_THROW(cfg.validate(), pipeline::ConfigError);
}

TEST(Pipeline, ZeroBCEpochsKeepTheInitialModel) {
  const auto dir = scratch("bc0");
  auto cfg = tiny_config(pipeline::Pipeline::BC, dir);
  cfg.bc.epochs = 0;
  const auto r = pipeline::run_pipeline(cfg);
  const auto vocab = fixture::standard_vocab();
  EXPECT_EQ(r.params,
            model::initialize_parameters<float>(fixture::full_config(*vocab), pipeline::seeds::init(cfg.seed)));
  for (const char* f : {"config.conf", "bc.ckpt", "final.ckpt", "report.txt", "report.jsonl", "learning_curve.csv"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
}

TEST(Pipeline, HybridIsBCThenPPO) {
  const auto a = scratch("hybrid"), b = scratch("bc_then_ppo_bc"), c = scratch("bc_then_ppo_ppo");
  const auto hybrid = pipeline::run_pipeline(tiny_config(pipeline::Pipeline::Hybrid, a));
  pipeline::run_pipeline(tiny_config(pipeline::Pipeline::BC, b));
  auto second = tiny_config(pipeline::Pipeline::PPO, c);
  second.init_checkpoint = (b / "bc.ckpt").string();
  const auto composed = pipeline::run_pipeline(second);
  EXPECT_EQ(hybrid.params, composed.params);
  EXPECT_EQ(hybrid.report, composed.report);
  EXPECT_EQ(model::load_checkpoint(a / "bc.ckpt"), model::load_checkpoint(b / "bc.ckpt"));
  EXPECT_EQ(hybrid.ppo.env_steps, 640);
}

TEST(Pipeline, UDAClonesOnlyItsCategory) {
  const auto dir = scratch("uda");
  auto cfg = tiny_config(pipeline::Pipeline::UDA, dir);
  cfg.category = fixture::standard_catalog()->categories[2];
  cfg.total_env_steps = 1;  // rounds up to one update
  std::ostringstream log;
  const auto r = pipeline::run_pipeline(cfg, &log);
  const auto demos = bc::generate_demonstrations(*fixture::standard_catalog(), cfg.demo_seed, 12);
  const auto expected = bc::filter_by_category(demos, cfg.category).size();
  EXPECT_NE(log.str().find("bc: " + std::to_string(expected) + " demonstrations"), std::string::npos) << log.str();
  EXPECT_EQ(r.ppo.env_steps, 640);
}

TEST(Pipeline, BadInputsFailBeforeTraining) {
  const auto dir = scratch("badinit");
  auto cfg = tiny_config(pipeline::Pipeline::PPO, dir);
  cfg.init_checkpoint = (dir / "missing.ckpt").string();
  EXPECT_ANY_THROW(pipeline::run_pipeline(cfg));
  auto uda = tiny_config(pipeline::Pipeline::UDA, dir);
  // One demonstration, cloned for a category it does not belong to.
  uda.n_demos = 1;
  const auto only = bc::generate_demonstrations(*fixture::standard_catalog(), uda.demo_seed, 1);
  for (const auto& c : fixture::standard_catalog()->categories)
    if (c != only[0].instruction.source_category) uda.category = c;
  EXPECT_THROW(pipeline::run_pipeline(uda), pipeline::ConfigError);
}

TEST(Tools, CompareDecodingsAndInspect) {
  const auto catalog = fixture::standard_catalog();
  const auto vocab = fixture::standard_vocab();
  const auto params = model::initialize_parameters<float>(fixture::full_config(*vocab), 4);
  const auto goals = eval_goals(*catalog, 99, 4);
  const auto reps = pipeline::compare_decodings(params, *vocab, *catalog, goals, 2, 3);
  ASSERT_EQ(reps.size(), 4u);
  for (const auto& r : reps) EXPECT_EQ(r.seeds, reps.front().seeds);
  std::ostringstream out;
  const auto ep = pipeline::inspect_episode(params, *vocab, *catalog, goals[0], {}, 3, {}, out);
  EXPECT_FALSE(ep.steps.empty());
  for (const auto& s : ep.steps) {
    double z = 0.0;
    for (double p : s.dist.probs) z += p;
    EXPECT_NEAR(z, 1.0, 1e-9);
  }
  EXPECT_FALSE(out.str().empty());
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("train-ppo --bogus"), 1);
  EXPECT_EQ(run_cli("train-uda --preset desk --plan"), 1);
  EXPECT_EQ(run_cli("train-hybrid --preset desk --plan"), 0);
  EXPECT_EQ(run_cli("gen-catalog --out " + (dir / "cat").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "cat"));
  EXPECT_EQ(run_cli("eval --checkpoint " + (dir / "nothing.ckpt").string()), 1);
  {
    std::ofstream junk(dir / "junk.ckpt");
    junk << "not a checkpoint";
  }
  EXPECT_NE(run_cli("eval --checkpoint " + (dir / "junk.ckpt").string()), 0);
  {
    std::ofstream conf(dir / "small.conf");
    conf << "eval.episodes = 3\neval.runs = 1\n";
  }
  EXPECT_EQ(run_cli("eval --random --config " + (dir / "small.conf").string() + " --out " + (dir / "rand").string()),
            0);
}
