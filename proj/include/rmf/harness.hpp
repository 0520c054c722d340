#pragma once

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rmf/agent.hpp"
#include "rmf/envs.hpp"
#include "rmf/metrics.hpp"
#include "rmf/replay.hpp"
#include "rmf/rng.hpp"

namespace rmf {

// Shortest decimal form that re-parses to the exact same double, so CSV
// round trips reproduce metrics bit-for-bit.
inline std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Run configuration and its flat key=value file format.

struct RunConfig {
  std::string env = "wind";
  AgentConfig agent;
  std::int64_t total_steps = 200000;
  double update_ratio = 0.25;  // gradient updates per env step
  std::int64_t eval_interval = 0;  // 0 selects every 2% of total_steps
  int eval_episodes = 20;
  std::int64_t replay_capacity = 1000000;
  std::uint64_t seed = 0;
  std::string out_dir;  // empty runs in memory without artifacts

  std::int64_t effective_eval_interval() const {
    return eval_interval > 0 ? eval_interval : std::max<std::int64_t>(1, total_steps / 50);
  }

  void validate() const {
    agent.validate();
    if (total_steps < 1) throw config_error("total_steps must be >= 1");
    if (!(update_ratio > 0.0)) throw config_error("update_ratio must be positive");
    if (eval_interval < 0) throw config_error("eval_interval must be >= 0 (0 = auto)");
    if (total_steps < effective_eval_interval())
      throw config_error("total_steps must cover at least one eval interval");
    if (eval_episodes < 1) throw config_error("eval_episodes must be >= 1");
    if (replay_capacity < 1) throw config_error("replay_capacity must be >= 1");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::int64_t parse_int_value(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw config_error("config key '" + key + "': cannot parse integer from '" + v + "'");
  }
}

inline double parse_real_value(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw config_error("config key '" + key + "': cannot parse real from '" + v + "'");
  }
}

}  // namespace detail

// Applies one key=value setting; unknown keys are errors so typos never
// silently fall back to defaults.
inline void apply_config_key(RunConfig& c, const std::string& key, const std::string& value) {
  auto as_int = [&](std::int64_t lo = std::numeric_limits<std::int64_t>::min()) {
    std::int64_t x = detail::parse_int_value(key, value);
    if (x < lo)
      throw config_error("config key '" + key + "': value " + value + " is below " +
                         std::to_string(lo));
    return x;
  };
  auto as_real = [&] { return detail::parse_real_value(key, value); };

  if (key == "env") c.env = value;
  else if (key == "total_steps") c.total_steps = as_int(1);
  else if (key == "update_ratio") c.update_ratio = as_real();
  else if (key == "eval_interval") c.eval_interval = as_int(0);
  else if (key == "eval_episodes") c.eval_episodes = static_cast<int>(as_int(1));
  else if (key == "replay_capacity") c.replay_capacity = as_int(1);
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(as_int(0));
  else if (key == "agent.rl") c.agent.rl = rl_from_string(value);
  else if (key == "agent.encoder") c.agent.encoder = encoder_from_string(value);
  else if (key == "agent.inputs") c.agent.inputs = InputSet::parse(value);
  else if (key == "agent.context_len") c.agent.context_len = static_cast<int>(as_int(1));
  else if (key == "agent.arch") c.agent.arch = arch_from_string(value);
  else if (key == "agent.rnn_hidden") c.agent.rnn_hidden = static_cast<int>(as_int(1));
  else if (key == "agent.mlp_hidden") c.agent.mlp_hidden = static_cast<int>(as_int(1));
  else if (key == "agent.embed_dim") c.agent.embed_dim = static_cast<int>(as_int(1));
  else if (key == "agent.actor_lr") c.agent.actor_lr = as_real();
  else if (key == "agent.critic_lr") c.agent.critic_lr = as_real();
  else if (key == "agent.alpha_lr") c.agent.alpha_lr = as_real();
  else if (key == "agent.gamma") c.agent.gamma = as_real();
  else if (key == "agent.tau") c.agent.tau = as_real();
  else if (key == "agent.batch_size") c.agent.batch_size = static_cast<int>(as_int(1));
  else if (key == "agent.explore_noise") c.agent.explore_noise = as_real();
  else if (key == "agent.target_noise") c.agent.target_noise = as_real();
  else if (key == "agent.noise_clip") c.agent.noise_clip = as_real();
  else if (key == "agent.policy_delay") c.agent.policy_delay = static_cast<int>(as_int(1));
  else if (key == "agent.target_entropy") c.agent.target_entropy = as_real();
  else if (key == "agent.alpha_init") c.agent.alpha_init = as_real();
  else if (key == "agent.warmup_steps") c.agent.warmup_steps = static_cast<int>(as_int(0));
  else throw config_error("unknown config key '" + key + "'");
}

inline RunConfig parse_run_config(std::istream& in) {
  RunConfig c;
  std::string line;
  while (std::getline(in, line)) {
    std::string s = detail::trim(line);
    if (s.empty() || s[0] == '#') continue;
    std::size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw config_error("config line '" + s + "' is not key=value");
    apply_config_key(c, detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1)));
  }
  return c;
}

inline RunConfig parse_run_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config file '" + path + "'");
  return parse_run_config(in);
}

// Every key in a fixed order; parsing this text reproduces the config.
inline void write_run_config(std::ostream& os, const RunConfig& c) {
  os << "env=" << c.env << '\n'
     << "total_steps=" << c.total_steps << '\n'
     << "update_ratio=" << fmt17(c.update_ratio) << '\n'
     << "eval_interval=" << c.eval_interval << '\n'
     << "eval_episodes=" << c.eval_episodes << '\n'
     << "replay_capacity=" << c.replay_capacity << '\n'
     << "seed=" << c.seed << '\n'
     << "agent.rl=" << to_string(c.agent.rl) << '\n'
     << "agent.encoder=" << to_string(c.agent.encoder) << '\n'
     << "agent.inputs=" << c.agent.inputs.to_string() << '\n'
     << "agent.context_len=" << c.agent.context_len << '\n'
     << "agent.arch=" << to_string(c.agent.arch) << '\n'
     << "agent.rnn_hidden=" << c.agent.rnn_hidden << '\n'
     << "agent.mlp_hidden=" << c.agent.mlp_hidden << '\n'
     << "agent.embed_dim=" << c.agent.embed_dim << '\n'
     << "agent.actor_lr=" << fmt17(c.agent.actor_lr) << '\n'
     << "agent.critic_lr=" << fmt17(c.agent.critic_lr) << '\n'
     << "agent.alpha_lr=" << fmt17(c.agent.alpha_lr) << '\n'
     << "agent.gamma=" << fmt17(c.agent.gamma) << '\n'
     << "agent.tau=" << fmt17(c.agent.tau) << '\n'
     << "agent.batch_size=" << c.agent.batch_size << '\n'
     << "agent.explore_noise=" << fmt17(c.agent.explore_noise) << '\n'
     << "agent.target_noise=" << fmt17(c.agent.target_noise) << '\n'
     << "agent.noise_clip=" << fmt17(c.agent.noise_clip) << '\n'
     << "agent.policy_delay=" << c.agent.policy_delay << '\n'
     << "agent.target_entropy=" << fmt17(c.agent.target_entropy) << '\n'
     << "agent.alpha_init=" << fmt17(c.agent.alpha_init) << '\n'
     << "agent.warmup_steps=" << c.agent.warmup_steps << '\n';
}

inline std::string run_config_text(const RunConfig& c) {
  std::ostringstream ss;
  write_run_config(ss, c);
  return ss.str();
}

// ---------------------------------------------------------------------------
// Evaluation protocol: fresh hidden state per episode, frames built from the
// channels the agent's input set consumes, no exploration noise.

inline double evaluate(const RecurrentActorCritic& agent, Env& env, int n_episodes,
                       std::uint64_t seed, std::vector<double>* per_episode = nullptr) {
  if (n_episodes < 1) throw config_error("evaluate: n_episodes must be >= 1");
  const EnvSpec& spec = env.spec();
  const std::size_t window = static_cast<std::size_t>(agent.config().context_len);
  if (per_episode) per_episode->clear();
  double total = 0.0;
  for (int ep = 0; ep < n_episodes; ++ep) {
    std::mt19937_64 rng = make_rng(seed, "eval-act", static_cast<std::uint64_t>(ep));
    Vec obs = env.reset(derive_seed(seed, "eval-episode", static_cast<std::uint64_t>(ep)));
    std::vector<PolicyInputFrame> hist;
    hist.push_back({obs, Vec::Zero(spec.act_dim), 0.0, 0.0});
    double ret = 0.0;
    while (env.episode_active()) {
      Vec a = agent.act(hist, ActMode::evaluate, rng);
      StepResult r = env.step(a);
      ret += r.reward;
      if (env.episode_active()) {
        hist.push_back({r.obs, a, r.reward, 0.0});
        if (hist.size() > window) hist.erase(hist.begin(), hist.end() - static_cast<std::ptrdiff_t>(window));
      }
    }
    total += ret;
    if (per_episode) per_episode->push_back(ret);
  }
  return total / static_cast<double>(n_episodes);
}

// ---------------------------------------------------------------------------
// Training loop.

struct DiagnosticsRow {
  std::int64_t update_index = 0;
  double critic_loss = 0.0;
  std::optional<double> actor_loss;
  std::optional<double> alpha;
  std::optional<double> critic_encoder_grad_norm;
  std::optional<double> actor_encoder_grad_norm;
};

struct TrainingRunRecord {
  std::vector<CurvePoint> curve;
  std::vector<DiagnosticsRow> diagnostics;
  std::vector<double> final_eval_returns;  // per-episode returns of the last eval
  std::string fingerprint;                 // the run's full config text
};

namespace detail {

inline std::string csv_cell(const std::optional<double>& v) {
  return v ? fmt17(*v) : std::string();
}

}  // namespace detail

// Interleaves env stepping with gradient updates at the configured ratio.
// The fractional accumulator starts charging after warm-up and drains only
// once a complete episode is stored, so the total update count still equals
// ratio * (steps - warmup) while the buffer can never be sampled empty.
// Artifacts flush row by row; a divergence aborts with the partial files
// already on disk and the env step appended to the error.
inline TrainingRunRecord train(const RunConfig& cfg) {
  cfg.validate();
  std::unique_ptr<Env> env = make_env(cfg.env);
  std::unique_ptr<Env> eval_env = make_env(cfg.env);
  const EnvSpec spec = env->spec();
  const std::int64_t interval = cfg.effective_eval_interval();
  const std::string stamp = "# seed=" + std::to_string(cfg.seed) + " env=" + cfg.env +
                            " variant=" + cfg.agent.variant_id() + "\n";

  TrainingRunRecord rec;
  rec.fingerprint = run_config_text(cfg);

  // Open every artifact before training starts so an unwritable directory
  // fails here and not hours in.
  const bool emit = !cfg.out_dir.empty();
  std::filesystem::path dir(cfg.out_dir);
  std::ofstream curve_os, diag_os;
  if (emit) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
      throw io_error("cannot create output directory '" + cfg.out_dir + "': " + ec.message());
    curve_os.open(dir / "curve.csv", std::ios::trunc);
    diag_os.open(dir / "diagnostics.csv", std::ios::trunc);
    std::ofstream cfg_os(dir / "config.txt", std::ios::trunc);
    std::ofstream tasks_probe(dir / "tasks.csv", std::ios::trunc);
    if (!curve_os || !diag_os || !cfg_os || !tasks_probe)
      throw io_error("output directory '" + cfg.out_dir + "' is not writable");
    cfg_os << stamp;
    write_run_config(cfg_os, cfg);
    cfg_os.flush();
    if (!cfg_os) throw io_error("failed writing config.txt under '" + cfg.out_dir + "'");
    curve_os << stamp << "env_step,eval_return\n";
    curve_os.flush();
    diag_os << stamp << "update_index,critic_loss,actor_loss,alpha,"
            << "critic_encoder_grad_norm,actor_encoder_grad_norm\n";
    diag_os.flush();
    tasks_probe << stamp << "episode,return\n";
  }

  RecurrentActorCritic agent(cfg.agent, spec, cfg.seed);
  SequenceReplayBuffer buffer(cfg.replay_capacity, spec.obs_dim, spec.act_dim);
  std::mt19937_64 warmup_rng = make_rng(cfg.seed, "warmup-actions");
  std::mt19937_64 explore_rng = make_rng(cfg.seed, "explore");
  std::mt19937_64 update_rng = make_rng(cfg.seed, "update");
  std::uniform_real_distribution<double> uniform_act(spec.action_low, spec.action_high);

  const std::size_t window = static_cast<std::size_t>(cfg.agent.context_len);
  std::vector<Transition> traj;
  std::vector<PolicyInputFrame> hist;
  std::uint64_t episode_idx = 0;
  Vec obs = env->reset(derive_seed(cfg.seed, "train-episode", episode_idx));
  hist.push_back({obs, Vec::Zero(spec.act_dim), 0.0, 0.0});

  double acc = 0.0;
  std::uint64_t eval_idx = 0;

  auto run_eval = [&](std::int64_t at_step) {
    std::vector<double> rets;
    double mean = evaluate(agent, *eval_env, cfg.eval_episodes,
                           derive_seed(cfg.seed, "eval", eval_idx), &rets);
    ++eval_idx;
    rec.curve.push_back({at_step, mean});
    rec.final_eval_returns = rets;
    if (emit) {
      curve_os << at_step << ',' << fmt17(mean) << '\n';
      curve_os.flush();
      std::ofstream tasks_os(dir / "tasks.csv", std::ios::trunc);
      tasks_os << stamp << "episode,return\n";
      for (std::size_t i = 0; i < rets.size(); ++i)
        tasks_os << i << ',' << fmt17(rets[i]) << '\n';
    }
  };

  for (std::int64_t step = 1; step <= cfg.total_steps; ++step) {
    Vec a(spec.act_dim);
    if (step <= cfg.agent.warmup_steps) {
      for (int d = 0; d < spec.act_dim; ++d) a[d] = uniform_act(warmup_rng);
    } else {
      a = agent.act(hist, ActMode::explore, explore_rng);
    }
    StepResult r = env->step(a);
    traj.push_back({obs, a, r.reward, r.done, r.obs});
    if (r.done == 1.0) {
      buffer.store_episode(traj);
      traj.clear();
      hist.clear();
      ++episode_idx;
      obs = env->reset(derive_seed(cfg.seed, "train-episode", episode_idx));
      hist.push_back({obs, Vec::Zero(spec.act_dim), 0.0, 0.0});
    } else {
      obs = r.obs;
      hist.push_back({obs, a, r.reward, 0.0});
      if (hist.size() > window)
        hist.erase(hist.begin(), hist.end() - static_cast<std::ptrdiff_t>(window));
    }

    if (step > cfg.agent.warmup_steps) {
      acc += cfg.update_ratio;
      while (acc >= 1.0 && buffer.num_episodes() > 0) {
        acc -= 1.0;
        SampledBatch batch =
            buffer.sample_subsequences(cfg.agent.batch_size, cfg.agent.context_len, update_rng);
        UpdateStats st;
        try {
          st = agent.update(batch, update_rng);
        } catch (const divergence_error& e) {
          divergence_error err(std::string(e.what()) + " at env step " + std::to_string(step));
          err.update_index = e.update_index;
          throw err;  // partial curve/diagnostics rows are already flushed
        }
        DiagnosticsRow row{st.update_index, st.critic_loss,          st.actor_loss,
                           st.alpha,        st.critic_encoder_grad_norm,
                           st.actor_encoder_grad_norm};
        rec.diagnostics.push_back(row);
        if (emit) {
          diag_os << row.update_index << ',' << fmt17(row.critic_loss) << ','
                  << detail::csv_cell(row.actor_loss) << ',' << detail::csv_cell(row.alpha) << ','
                  << detail::csv_cell(row.critic_encoder_grad_norm) << ','
                  << detail::csv_cell(row.actor_encoder_grad_norm) << '\n';
          diag_os.flush();
        }
      }
    }

    if (step % interval == 0 || step == cfg.total_steps) run_eval(step);
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Artifact readers (used by report and by the metric round-trip checks).

inline std::vector<CurvePoint> load_curve(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open curve file '" + path + "'");
  std::vector<CurvePoint> out;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    std::string s = detail::trim(line);
    if (s.empty() || s[0] == '#') continue;
    if (!header) {
      if (s != "env_step,eval_return")
        throw io_error("curve file '" + path + "': unexpected header '" + s + "'");
      header = true;
      continue;
    }
    std::size_t comma = s.find(',');
    if (comma == std::string::npos) throw io_error("curve file '" + path + "': bad row '" + s + "'");
    CurvePoint p;
    p.env_step = detail::parse_int_value("env_step", s.substr(0, comma));
    p.eval_return = detail::parse_real_value("eval_return", s.substr(comma + 1));
    out.push_back(p);
  }
  if (!header) throw io_error("curve file '" + path + "': missing header");
  return out;
}

inline std::vector<double> load_task_returns(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open task file '" + path + "'");
  std::vector<double> out;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    std::string s = detail::trim(line);
    if (s.empty() || s[0] == '#') continue;
    if (!header) {
      if (s != "episode,return")
        throw io_error("task file '" + path + "': unexpected header '" + s + "'");
      header = true;
      continue;
    }
    std::size_t comma = s.find(',');
    if (comma == std::string::npos) throw io_error("task file '" + path + "': bad row '" + s + "'");
    out.push_back(detail::parse_real_value("return", s.substr(comma + 1)));
  }
  if (!header) throw io_error("task file '" + path + "': missing header");
  return out;
}

// ---------------------------------------------------------------------------
// Factorial sweep over the five design factors.

struct SweepPlan {
  RunConfig base;
  // Factor value lists; empty means "use the base config's value".
  std::vector<std::string> rl, encoder, context_len, inputs, arch;
  int seeds = 4;
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

}  // namespace detail

// Grid files reuse the run-config key set; the five factor keys additionally
// accept comma-separated lists, and `seeds` sets how many seeds per variant.
inline SweepPlan parse_sweep_grid(std::istream& in) {
  SweepPlan plan;
  std::string line;
  while (std::getline(in, line)) {
    std::string s = detail::trim(line);
    if (s.empty() || s[0] == '#') continue;
    std::size_t eq = s.find('=');
    if (eq == std::string::npos) throw config_error("grid line '" + s + "' is not key=value");
    const std::string key = detail::trim(s.substr(0, eq));
    const std::string value = detail::trim(s.substr(eq + 1));
    std::vector<std::string>* list = nullptr;
    if (key == "agent.rl") list = &plan.rl;
    else if (key == "agent.encoder") list = &plan.encoder;
    else if (key == "agent.context_len") list = &plan.context_len;
    else if (key == "agent.inputs") list = &plan.inputs;
    else if (key == "agent.arch") list = &plan.arch;
    if (list) {
      *list = detail::split_list(value);
      RunConfig probe;  // validate every element eagerly
      for (const std::string& v : *list) apply_config_key(probe, key, v);
    } else if (key == "seeds") {
      plan.seeds = static_cast<int>(detail::parse_int_value(key, value));
      if (plan.seeds < 1) throw config_error("seeds must be >= 1");
    } else {
      apply_config_key(plan.base, key, value);
    }
  }
  return plan;
}

inline SweepPlan parse_sweep_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open grid file '" + path + "'");
  return parse_sweep_grid(in);
}

// Cartesian product of the factor lists; one RunConfig per variant and seed,
// laid out as <out_root>/<env>/<variant>/seed<k>.
inline std::vector<RunConfig> enumerate_sweep(const SweepPlan& plan, const std::string& out_root) {
  auto or_base = [](const std::vector<std::string>& list, const std::string& fallback) {
    return list.empty() ? std::vector<std::string>{fallback} : list;
  };
  const AgentConfig& b = plan.base.agent;
  std::vector<RunConfig> runs;
  for (const std::string& rl : or_base(plan.rl, to_string(b.rl)))
    for (const std::string& enc : or_base(plan.encoder, to_string(b.encoder)))
      for (const std::string& len : or_base(plan.context_len, std::to_string(b.context_len)))
        for (const std::string& inp : or_base(plan.inputs, b.inputs.to_string()))
          for (const std::string& arch : or_base(plan.arch, to_string(b.arch))) {
            RunConfig c = plan.base;
            apply_config_key(c, "agent.rl", rl);
            apply_config_key(c, "agent.encoder", enc);
            apply_config_key(c, "agent.context_len", len);
            apply_config_key(c, "agent.inputs", inp);
            apply_config_key(c, "agent.arch", arch);
            for (int s = 0; s < plan.seeds; ++s) {
              RunConfig rc = c;
              rc.seed = plan.base.seed + static_cast<std::uint64_t>(s);
              rc.out_dir = (std::filesystem::path(out_root) / rc.env / rc.agent.variant_id() /
                            ("seed" + std::to_string(rc.seed)))
                               .string();
              runs.push_back(rc);
            }
          }
  return runs;
}

struct SweepRunStatus {
  std::string dir;
  bool ok = false;
  std::string message;
};

// Launches the runs with at most `threads` in flight. Each run touches only
// its own directory, so workers share nothing; failures are collected rather
// than aborting the remaining runs.
inline std::vector<SweepRunStatus> run_sweep(const std::vector<RunConfig>& runs, int threads) {
  std::vector<SweepRunStatus> results(runs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= runs.size()) return;
      results[i].dir = runs[i].out_dir;
      try {
        train(runs[i]);
        results[i].ok = true;
      } catch (const std::exception& e) {
        results[i].ok = false;
        results[i].message = e.what();
      }
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(runs.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  return results;
}

// RMF_THREADS caps concurrent sweep runs; unset or invalid means 1.
inline int threads_from_env() {
  const char* s = std::getenv("RMF_THREADS");
  if (!s) return 1;
  try {
    int v = std::stoi(s);
    return v < 1 ? 1 : v;
  } catch (const std::exception&) {
    return 1;
  }
}

// ---------------------------------------------------------------------------
// Report: rebuild metrics from a sweep directory tree.

namespace detail {

inline std::vector<std::string> sorted_subdirs(const std::filesystem::path& p) {
  std::vector<std::string> names;
  if (!std::filesystem::is_directory(p)) return names;
  for (const auto& e : std::filesystem::directory_iterator(p))
    if (e.is_directory()) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace detail

inline VariantResultMatrix collect_matrix(const std::string& runs_root) {
  VariantResultMatrix m;
  const std::filesystem::path root(runs_root);
  for (const std::string& env : detail::sorted_subdirs(root))
    for (const std::string& variant : detail::sorted_subdirs(root / env))
      for (const std::string& seed_dir : detail::sorted_subdirs(root / env / variant)) {
        const std::filesystem::path curve = root / env / variant / seed_dir / "curve.csv";
        if (std::filesystem::exists(curve))
          m.add(variant, env, final_performance_single(load_curve(curve.string())));
      }
  if (m.cells.empty()) throw io_error("no curve.csv artifacts found under '" + runs_root + "'");
  return m;
}

// Pooled final-eval episode returns per (env, variant) across seeds.
inline std::map<std::string, std::map<std::string, std::vector<double>>> collect_task_returns(
    const std::string& runs_root) {
  std::map<std::string, std::map<std::string, std::vector<double>>> pooled;
  const std::filesystem::path root(runs_root);
  for (const std::string& env : detail::sorted_subdirs(root))
    for (const std::string& variant : detail::sorted_subdirs(root / env))
      for (const std::string& seed_dir : detail::sorted_subdirs(root / env / variant)) {
        const std::filesystem::path tasks = root / env / variant / seed_dir / "tasks.csv";
        if (!std::filesystem::exists(tasks)) continue;
        std::vector<double> r = load_task_returns(tasks.string());
        auto& dst = pooled[env][variant];
        dst.insert(dst.end(), r.begin(), r.end());
      }
  if (pooled.empty()) throw io_error("no tasks.csv artifacts found under '" + runs_root + "'");
  return pooled;
}

inline std::string report_final_csv(const VariantResultMatrix& m) {
  std::ostringstream os;
  os << "env,variant,final_performance,seeds\n";
  for (const std::string& env : m.envs())
    for (const std::string& variant : m.variants()) {
      auto vit = m.cells.find(variant);
      if (vit == m.cells.end() || !vit->second.count(env)) continue;
      const std::vector<double>& vals = vit->second.at(env);
      os << env << ',' << variant << ',' << fmt17(m.cell_mean(variant, env)) << ','
         << vals.size() << '\n';
    }
  return os.str();
}

inline std::string report_worst10_csv(const std::string& runs_root) {
  std::ostringstream os;
  os << "env,variant,worst10_return,tasks\n";
  for (const auto& [env, per_variant] : collect_task_returns(runs_root))
    for (const auto& [variant, returns] : per_variant)
      os << env << ',' << variant << ',' << fmt17(worst_case_return(returns)) << ','
         << returns.size() << '\n';
  return os.str();
}

inline std::string report_best_variant_csv(const VariantResultMatrix& m) {
  const std::string best = select_best_variant(m);
  const std::vector<std::string> envs = m.envs();
  std::map<std::string, double> score;
  for (const std::string& env : envs)
    for (const auto& [v, x] : detail::normalize_env_column(m, m.variants(), env)) score[v] += x;
  std::ostringstream os;
  os << "variant,mean_normalized,selected\n";
  for (const std::string& v : m.variants())
    os << v << ',' << fmt17(score[v] / static_cast<double>(envs.size())) << ','
       << (v == best ? 1 : 0) << '\n';
  return os.str();
}

inline std::string report_factor_csv(const VariantResultMatrix& m, const std::string& factor) {
  std::ostringstream os;
  os << "factor,value,mean_normalized,variants\n";
  for (const FactorMarginal& fm : single_factor_analysis(m, factor))
    os << factor << ',' << fm.value << ',' << fmt17(fm.mean_normalized) << ','
       << fm.variant_count << '\n';
  return os.str();
}

}  // namespace rmf
