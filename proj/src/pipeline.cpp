#include "shopagent/pipeline.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "shopagent/checkpoint.hpp"
#include "shopagent/rollout.hpp"
#include "shopagent/text.hpp"

namespace shopagent::pipeline {

const char* to_string(Pipeline p) {
  switch (p) {
    case Pipeline::BC:
      return "bc";
    case Pipeline::PPO:
      return "ppo";
    case Pipeline::Hybrid:
      return "hybrid";
    case Pipeline::UDA:
      return "uda";
  }
  return "?";
}

std::optional<Pipeline> pipeline_from_string(std::string_view s) {
  for (Pipeline p : {Pipeline::BC, Pipeline::PPO, Pipeline::Hybrid, Pipeline::UDA})
    if (s == to_string(p)) return p;
  return std::nullopt;
}

namespace seeds {
std::uint64_t init(std::uint64_t run_seed) { return mix_seed(run_seed, 0x1417); }
std::uint64_t bc(std::uint64_t run_seed) { return mix_seed(run_seed, 0xbc); }
std::uint64_t ppo(std::uint64_t run_seed) { return mix_seed(run_seed, 0x990); }
}  // namespace seeds

model::ContextOptions RunConfig::context() const {
  model::ContextOptions c;
  c.obs_history = obs_history;
  return c;
}

void RunConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  check(n_products >= n_categories && n_categories >= 1, "catalog.products must be >= catalog.categories >= 1");
  check(n_categories <= 5, "catalog.categories must be at most 5");
  check(horizon >= 1, "run.horizon must be positive");
  check(obs_history == 1 || obs_history == 2, "run.obs_history must be 1 or 2");
  check(eval_episodes >= 1 && eval_runs >= 1, "eval.episodes and eval.runs must be positive");
  check(curve_every >= 1 && curve_goals >= 0, "eval.curve_every must be positive");
  check(workers >= 1, "ppo.workers must be positive");
  check(total_env_steps >= 0, "ppo.total_env_steps must be non-negative");
  check(bc.epochs >= 0 && bc.batch_size >= 1 && bc.learning_rate >= 0.0 && bc.warmup_steps >= 0,
        "bc settings out of range");
  for (const auto* d : {&decoding, &collect_decoding})
    check(d->epsilon >= 0.0 && d->epsilon <= 1.0 && d->top_p > 0.0 && d->top_p <= 1.0,
          "decoding epsilon must be in [0, 1] and top_p in (0, 1]");
  try {
    ppo.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
  const bool uses_demos = pipeline != Pipeline::PPO;
  check(!uses_demos || n_demos >= 1, std::string(to_string(pipeline)) + " pipeline requires demonstrations");
  if (pipeline == Pipeline::UDA) {
    check(!category.empty(), "uda pipeline requires demos.category");
    const auto cat = env::generate_catalog(catalog_seed, n_products, n_categories);
    bool known = false;
    for (const auto& c : cat.categories) known = known || c == category;
    check(known, "demos.category '" + category + "' is not a catalog category");
  } else {
    check(category.empty(), "demos.category is only used by the uda pipeline");
  }
}

RunConfig desk_scale_config() {
  RunConfig cfg;
  cfg.bc.learning_rate = 2e-3;
  cfg.bc.warmup_steps = 10;
  cfg.bc.epochs = 20;
  cfg.ppo.learning_rate = 1e-3;
  return cfg;
}

// ---------------------------------------------------------------------------
// Config text

namespace {

[[noreturn]] void bad_value(const std::string& v) { throw ConfigError("cannot parse '" + v + "'"); }

template <typename N>
void parse_number(const std::string& v, N& out) {
  N x{};
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || p != end) bad_value(v);
  out = x;
}

void parse_value(const std::string& v, int& out) { parse_number(v, out); }
void parse_value(const std::string& v, long& out) { parse_number(v, out); }
void parse_value(const std::string& v, std::uint64_t& out) { parse_number(v, out); }
void parse_value(const std::string& v, double& out) {
  parse_number(v, out);
  if (!std::isfinite(out)) bad_value(v);
}
void parse_value(const std::string& v, std::string& out) { out = v; }
void parse_value(const std::string& v, Pipeline& out) {
  auto p = pipeline_from_string(v);
  if (!p) bad_value(v);
  out = *p;
}
void parse_value(const std::string& v, policy::Decoding& out) {
  auto d = policy::decoding_from_string(v);
  if (!d) bad_value(v);
  out = *d;
}
void parse_value(const std::string& v, Transport& out) {
  if (v == "local")
    out = Transport::Local;
  else if (v == "socket")
    out = Transport::Socket;
  else
    bad_value(v);
}

std::string format_value(double x) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, p);
}
template <typename N>
  requires std::is_integral_v<N>
std::string format_value(N x) {
  return std::to_string(x);
}
std::string format_value(const std::string& s) { return s; }
std::string format_value(Pipeline p) { return to_string(p); }
std::string format_value(policy::Decoding d) { return policy::to_string(d); }
std::string format_value(Transport t) { return t == Transport::Local ? "local" : "socket"; }

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename Access>
Field field(std::string key, Access access) {
  return {std::move(key), [access](const RunConfig& c) { return format_value(access(c)); },
          [access](RunConfig& c, const std::string& v) { parse_value(v, access(c)); }};
}

#define SHOPAGENT_FIELD(key, member) field(key, [](auto& c) -> auto& { return c.member; })

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      SHOPAGENT_FIELD("run.pipeline", pipeline),
      SHOPAGENT_FIELD("run.seed", seed),
      SHOPAGENT_FIELD("run.out_dir", out_dir),
      SHOPAGENT_FIELD("run.init_checkpoint", init_checkpoint),
      SHOPAGENT_FIELD("run.horizon", horizon),
      SHOPAGENT_FIELD("run.obs_history", obs_history),
      SHOPAGENT_FIELD("catalog.seed", catalog_seed),
      SHOPAGENT_FIELD("catalog.products", n_products),
      SHOPAGENT_FIELD("catalog.categories", n_categories),
      SHOPAGENT_FIELD("demos.seed", demo_seed),
      SHOPAGENT_FIELD("demos.count", n_demos),
      SHOPAGENT_FIELD("demos.category", category),
      SHOPAGENT_FIELD("bc.epochs", bc.epochs),
      SHOPAGENT_FIELD("bc.learning_rate", bc.learning_rate),
      SHOPAGENT_FIELD("bc.warmup_steps", bc.warmup_steps),
      SHOPAGENT_FIELD("bc.weight_decay", bc.weight_decay),
      SHOPAGENT_FIELD("bc.batch_size", bc.batch_size),
      SHOPAGENT_FIELD("bc.adam_eps", bc.adam_eps),
      SHOPAGENT_FIELD("bc.adam_beta1", bc.adam_beta1),
      SHOPAGENT_FIELD("bc.adam_beta2", bc.adam_beta2),
      SHOPAGENT_FIELD("ppo.total_env_steps", total_env_steps),
      SHOPAGENT_FIELD("ppo.transitions_per_update", ppo.transitions_per_update),
      SHOPAGENT_FIELD("ppo.n_streams", ppo.n_streams),
      SHOPAGENT_FIELD("ppo.steps_per_stream", ppo.steps_per_stream),
      SHOPAGENT_FIELD("ppo.epochs_per_update", ppo.epochs_per_update),
      SHOPAGENT_FIELD("ppo.batch_size", ppo.batch_size),
      SHOPAGENT_FIELD("ppo.learning_rate", ppo.learning_rate),
      SHOPAGENT_FIELD("ppo.adam_eps", ppo.adam_eps),
      SHOPAGENT_FIELD("ppo.adam_beta1", ppo.adam_beta1),
      SHOPAGENT_FIELD("ppo.adam_beta2", ppo.adam_beta2),
      SHOPAGENT_FIELD("ppo.discount", ppo.discount),
      SHOPAGENT_FIELD("ppo.gae_lambda", ppo.gae_lambda),
      SHOPAGENT_FIELD("ppo.entropy_coef", ppo.entropy_coef),
      SHOPAGENT_FIELD("ppo.value_coef", ppo.value_coef),
      SHOPAGENT_FIELD("ppo.max_grad_norm", ppo.max_grad_norm),
      SHOPAGENT_FIELD("ppo.clip_eps", ppo.clip_eps),
      SHOPAGENT_FIELD("ppo.collect_decoding", collect_decoding.kind),
      SHOPAGENT_FIELD("ppo.collect_epsilon", collect_decoding.epsilon),
      SHOPAGENT_FIELD("ppo.collect_top_p", collect_decoding.top_p),
      SHOPAGENT_FIELD("ppo.workers", workers),
      SHOPAGENT_FIELD("ppo.transport", transport),
      SHOPAGENT_FIELD("eval.decoding", decoding.kind),
      SHOPAGENT_FIELD("eval.epsilon", decoding.epsilon),
      SHOPAGENT_FIELD("eval.top_p", decoding.top_p),
      SHOPAGENT_FIELD("eval.seed", eval_seed),
      SHOPAGENT_FIELD("eval.episodes", eval_episodes),
      SHOPAGENT_FIELD("eval.runs", eval_runs),
      SHOPAGENT_FIELD("eval.curve_every", curve_every),
      SHOPAGENT_FIELD("eval.curve_goals", curve_goals),
  };
  return table;
}

#undef SHOPAGENT_FIELD

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key != key) continue;
    try {
      f.set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(key + ": " + e.what());
    }
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void write_config(std::ostream& out, const RunConfig& cfg) {
  std::string section;
  for (const auto& f : fields()) {
    const std::string s = f.key.substr(0, f.key.find('.'));
    if (s != section) {
      if (!section.empty()) out << "\n";
      section = s;
    }
    out << f.key << " = " << f.get(cfg) << "\n";
  }
}

RunConfig read_config(std::istream& in, RunConfig base) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    try {
      set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return read_config(in, std::move(base));
}

std::vector<std::string> run_plan(const RunConfig& cfg) {
  std::vector<std::string> plan;
  std::ostringstream s;
  s << "catalog seed=" << cfg.catalog_seed << " products=" << cfg.n_products << " categories=" << cfg.n_categories;
  plan.push_back(s.str());
  s.str("");
  s << "init " << (cfg.init_checkpoint.empty() ? "seed=" + std::to_string(seeds::init(cfg.seed)) : cfg.init_checkpoint);
  plan.push_back(s.str());
  std::ostringstream cfg_text;
  write_config(cfg_text, cfg);
  if (cfg.pipeline != Pipeline::PPO) {
    s.str("");
    s << "bc demos=" << cfg.n_demos << " demo_seed=" << cfg.demo_seed
      << " category=" << (cfg.category.empty() ? "all" : cfg.category) << " epochs=" << cfg.bc.epochs
      << " lr=" << format_value(cfg.bc.learning_rate) << " warmup=" << cfg.bc.warmup_steps
      << " batch=" << cfg.bc.batch_size << " seed=" << seeds::bc(cfg.seed);
    plan.push_back(s.str());
  }
  if (cfg.pipeline != Pipeline::BC) {
    s.str("");
    s << "ppo env_steps=" << cfg.total_env_steps << " per_update=" << cfg.ppo.transitions_per_update
      << " lr=" << format_value(cfg.ppo.learning_rate) << " collect=" << policy::to_string(cfg.collect_decoding.kind)
      << " workers=" << cfg.workers << " goals=all seed=" << seeds::ppo(cfg.seed);
    plan.push_back(s.str());
  }
  s.str("");
  s << "eval goals=" << cfg.eval_episodes << " runs=" << cfg.eval_runs << " seed=" << cfg.eval_seed
    << " decoding=" << policy::to_string(cfg.decoding.kind) << " obs_history=" << cfg.obs_history;
  plan.push_back(s.str());
  plan.push_back("settings\n" + cfg_text.str());
  return plan;
}

// ---------------------------------------------------------------------------
// Training

PPOPhaseResult train_ppo(model::ModelParameters<float>& params, std::shared_ptr<const model::Vocabulary> vocab,
                         std::shared_ptr<const env::Catalog> catalog, const ppo::PPOConfig& cfg,
                         const PPOPhaseOptions& options, std::uint64_t seed,
                         const std::function<void(const UpdateRecord&)>& on_update) {
  cfg.validate();
  require(options.total_env_steps >= 0, "ppo: negative step budget");
  rollout::CollectorConfig cc;
  cc.n_streams = cfg.n_streams;
  cc.horizon = options.horizon;
  cc.context = options.context;
  cc.goal_category = options.goal_category;
  rollout::Collector collector(catalog, vocab, cc, mix_seed(seed, 0xc011));
  auto pool = options.transport == Transport::Local ? rollout::make_local_pool(vocab, options.workers)
                                                    : rollout::make_socket_pool(vocab, options.workers);
  auto adam = model::AdamState<float>::for_params(params);
  Rng update_rng(mix_seed(seed, 0x0dd));

  PPOPhaseResult out;
  auto curve_point = [&](const ppo::UpdateStats* st) {
    if (options.curve_goals.empty()) return;
    eval::ModelAgent agent(params, *vocab, options.eval_decoding, options.context);
    const auto rep = eval::evaluate(*catalog, options.curve_goals, agent, 1, options.curve_seed, options.horizon);
    CurvePoint p;
    p.env_steps = collector.env_steps();
    p.score = rep.score;
    p.success_rate = rep.success_rate;
    if (st) {
      p.policy_loss = st->policy_loss;
      p.value_loss = st->value_loss;
      p.entropy = st->entropy;
      p.clip_fraction = st->clip_fraction;
    }
    out.curve.push_back(p);
  };
  curve_point(nullptr);

  const long per_update = cfg.transitions_per_update;
  const long n_updates = (options.total_env_steps + per_update - 1) / per_update;
  double reward_sum = 0.0;
  long episodes = 0;
  for (long u = 0; u < n_updates; ++u) {
    pool->refresh_snapshot(std::make_shared<const model::ModelParameters<float>>(params));
    const auto buffer = collector.collect(*pool, cfg.steps_per_stream, options.collect_decoding);
    UpdateRecord rec;
    rec.update = static_cast<int>(u + 1);
    rec.stats = ppo::ppo_update(params, adam, *vocab, buffer, cfg, update_rng);
    rec.env_steps = collector.env_steps();
    double sum = 0.0;
    for (double r : buffer.episode_rewards) sum += r;
    if (!buffer.episode_rewards.empty()) rec.mean_episode_reward = sum / static_cast<double>(buffer.episode_rewards.size());
    reward_sum += sum;
    episodes += static_cast<long>(buffer.episode_rewards.size());
    rec.score_so_far = episodes > 0 ? 100.0 * reward_sum / static_cast<double>(episodes) : 0.0;
    out.updates.push_back(rec);
    if (on_update) on_update(rec);
    const bool crossed = rec.env_steps / options.curve_every != (rec.env_steps - per_update) / options.curve_every;
    if (crossed || u + 1 == n_updates) curve_point(&rec.stats);
  }
  out.env_steps = collector.env_steps();
  return out;
}

// ---------------------------------------------------------------------------
// Pipelines

namespace {

template <typename F>
auto in_phase(const char* phase, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const RuntimeAbort& e) {
    throw RuntimeAbort(std::string(phase) + " phase: " + e.what());
  } catch (const ContractViolation& e) {
    throw ContractViolation(std::string(phase) + " phase: " + e.what());
  }
}

template <typename W>
void write_file(const std::filesystem::path& path, W&& writer) {
  std::ofstream out(path);
  if (!out) throw RuntimeAbort("cannot write " + path.string());
  writer(out);
  if (!out) throw RuntimeAbort("failed writing " + path.string());
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  auto say = [&](const std::string& msg) {
    if (log) *log << msg << std::endl;
  };
  const std::filesystem::path out_dir = cfg.out_dir;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_file(out_dir / "config.conf", [&](std::ostream& o) { write_config(o, cfg); });
  }

  auto catalog = std::make_shared<const env::Catalog>(
      env::generate_catalog(cfg.catalog_seed, cfg.n_products, cfg.n_categories));
  auto vocab = std::make_shared<const model::Vocabulary>(model::build_vocabulary(*catalog));
  const model::ModelConfig mc{vocab->size(), 64, 64};

  PipelineResult result{
      cfg.init_checkpoint.empty() ? model::initialize_parameters<float>(mc, seeds::init(cfg.seed))
                                  : model::load_checkpoint(cfg.init_checkpoint),
      {}, std::nullopt, {}};
  if (!(result.params.config == mc))
    throw ConfigError("checkpoint " + cfg.init_checkpoint + " does not match this catalog's vocabulary");

  const auto ctx = cfg.context();
  const auto goals = eval::eval_goals(*catalog, cfg.eval_seed, static_cast<std::size_t>(cfg.eval_episodes));
  const std::vector<env::Instruction> curve_goals(
      goals.begin(), goals.begin() + std::min<std::size_t>(goals.size(), static_cast<std::size_t>(cfg.curve_goals)));
  const std::uint64_t curve_seed = mix_seed(cfg.eval_seed, 0xc7);

  if (cfg.pipeline != Pipeline::PPO) {
    result.bc = in_phase("bc", [&] {
      auto demos = bc::generate_demonstrations(*catalog, cfg.demo_seed, static_cast<std::size_t>(cfg.n_demos),
                                               std::nullopt, cfg.horizon);
      if (cfg.pipeline == Pipeline::UDA) demos = bc::filter_by_category(demos, cfg.category);
      if (demos.empty()) throw ConfigError("no demonstrations for category '" + cfg.category + "'");
      say("bc: " + std::to_string(demos.size()) + " demonstrations");
      return bc::train_bc(result.params, *vocab, demos, cfg.bc, seeds::bc(cfg.seed), ctx, [&](int e, double l) {
        std::ostringstream s;
        s << "bc: epoch " << e + 1 << " loss " << l;
        say(s.str());
      });
    });
    if (!cfg.out_dir.empty()) {
      model::save_checkpoint(out_dir / "bc.ckpt", result.params);
      write_file(out_dir / "bc_losses.csv", [&](std::ostream& o) {
        o << "epoch,loss\n";
        for (std::size_t e = 0; e < result.bc->epoch_losses.size(); ++e)
          o << e + 1 << "," << format_value(result.bc->epoch_losses[e]) << "\n";
      });
    }
  }

  if (cfg.pipeline == Pipeline::BC) {
    if (!curve_goals.empty()) {
      eval::ModelAgent agent(result.params, *vocab, cfg.decoding, ctx);
      const auto rep = eval::evaluate(*catalog, curve_goals, agent, 1, curve_seed, cfg.horizon);
      CurvePoint p;
      p.score = rep.score;
      p.success_rate = rep.success_rate;
      result.ppo.curve.push_back(p);
    }
  } else {
    PPOPhaseOptions po;
    po.total_env_steps = cfg.total_env_steps;
    po.workers = cfg.workers;
    po.transport = cfg.transport;
    po.collect_decoding = cfg.collect_decoding;
    po.eval_decoding = cfg.decoding;
    po.curve_every = cfg.curve_every;
    po.curve_goals = curve_goals;
    po.curve_seed = curve_seed;
    po.context = ctx;
    po.horizon = cfg.horizon;
    result.ppo = in_phase("ppo", [&] {
      return train_ppo(result.params, vocab, catalog, cfg.ppo, po, seeds::ppo(cfg.seed), [&](const UpdateRecord& r) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(4) << "ppo: update " << r.update << " steps " << r.env_steps
          << " reward " << r.mean_episode_reward << " policy " << r.stats.policy_loss << " value "
          << r.stats.value_loss << " entropy " << r.stats.entropy << " clip " << r.stats.clip_fraction;
        say(s.str());
      });
    });
  }

  result.report = in_phase("eval", [&] {
    eval::ModelAgent agent(result.params, *vocab, cfg.decoding, ctx);
    return eval::evaluate(*catalog, goals, agent, cfg.eval_runs, cfg.eval_seed, cfg.horizon);
  });
  {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << "eval: score " << result.report.score << " success "
      << result.report.success_rate;
    say(s.str());
  }

  if (!cfg.out_dir.empty()) {
    model::save_checkpoint(out_dir / "final.ckpt", result.params);
    write_file(out_dir / "learning_curve.csv", [&](std::ostream& o) { write_curve_csv(o, result.ppo.curve); });
    write_file(out_dir / "training_stats.csv", [&](std::ostream& o) { write_stats_csv(o, result.ppo.updates); });
    write_file(out_dir / "report.txt", [&](std::ostream& o) {
      o << "pipeline      " << to_string(cfg.pipeline) << "\n";
      eval::write_report_text(o, result.report);
    });
    write_file(out_dir / "report.jsonl", [&](std::ostream& o) { o << eval::report_json_line(result.report) << "\n"; });
  }
  return result;
}

std::vector<eval::EvalReport> compare_decodings(const model::ModelParameters<float>& params,
                                                const model::Vocabulary& vocab, const env::Catalog& catalog,
                                                const std::vector<env::Instruction>& goals, int runs,
                                                std::uint64_t seed, const policy::DecodingConfig& base,
                                                const model::ContextOptions& context, int horizon) {
  std::vector<eval::EvalReport> out;
  for (auto kind : {policy::Decoding::EpsilonGreedy, policy::Decoding::TopP, policy::Decoding::Sample,
                    policy::Decoding::Argmax}) {
    auto d = base;
    d.kind = kind;
    eval::ModelAgent agent(params, vocab, d, context);
    out.push_back(eval::evaluate(catalog, goals, agent, runs, seed, horizon));
  }
  return out;
}

eval::Episode inspect_episode(const model::ModelParameters<float>& params, const model::Vocabulary& vocab,
                              const env::Catalog& catalog, const env::Instruction& instruction,
                              const policy::DecodingConfig& decoding, std::uint64_t seed,
                              const model::ContextOptions& context, std::ostream& out, int horizon) {
  eval::ModelAgent agent(params, vocab, decoding, context);
  Rng rng(seed);
  auto ep = eval::run_episode(catalog, instruction, agent, rng, horizon, true);
  out << "goal: " << text::join(instruction.goal_text) << "\n";
  out << std::fixed << std::setprecision(6);
  for (std::size_t t = 0; t < ep.steps.size(); ++t) {
    const auto& st = ep.steps[t];
    out << "\nstep " << t + 1 << "\n";
    out << "  page: " << text::join(st.observation.text) << "\n";
    double total = 0.0;
    for (std::size_t i = 0; i < st.dist.size(); ++i) {
      total += st.dist.probs[i];
      out << (i == st.chosen ? "  * " : "    ") << st.dist.probs[i] << "  "
          << (st.dist.actions[i].kind == env::ActionKind::SearchQuery ? "search: " : "click: ")
          << text::join(st.dist.actions[i].surface) << "\n";
    }
    out << "  total probability " << std::setprecision(12) << total << std::setprecision(6) << "\n";
    out << "  chosen: " << text::join(st.dist.actions[st.chosen].surface) << "\n";
  }
  out << "\nreward " << ep.reward << "\n";
  out << std::defaultfloat;
  return ep;
}

void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve) {
  out << "env_steps,score,success_rate,policy_loss,value_loss,entropy,clip_fraction\n";
  for (const auto& p : curve)
    out << p.env_steps << "," << format_value(p.score) << "," << format_value(p.success_rate) << ","
        << format_value(p.policy_loss) << "," << format_value(p.value_loss) << "," << format_value(p.entropy)
        << "," << format_value(p.clip_fraction) << "\n";
}

void write_stats_csv(std::ostream& out, const std::vector<UpdateRecord>& updates) {
  out << "update,env_steps,mean_episode_reward,score_so_far,policy_loss,value_loss,entropy,clip_fraction,approx_kl\n";
  for (const auto& r : updates)
    out << r.update << "," << r.env_steps << "," << format_value(r.mean_episode_reward) << ","
        << format_value(r.score_so_far) << "," << format_value(r.stats.policy_loss) << ","
        << format_value(r.stats.value_loss) << "," << format_value(r.stats.entropy) << ","
        << format_value(r.stats.clip_fraction) << "," << format_value(r.stats.approx_kl) << "\n";
}

}  // namespace shopagent::pipeline
