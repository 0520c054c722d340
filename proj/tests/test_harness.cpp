#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rmf/harness.hpp"

using rmf::AgentConfig;
using rmf::CurvePoint;
using rmf::RunConfig;
using rmf::VariantResultMatrix;
using rmf::Vec;

namespace {

std::vector<CurvePoint> make_curve(const std::vector<double>& returns, std::int64_t spacing) {
  std::vector<CurvePoint> c;
  for (std::size_t i = 0; i < returns.size(); ++i)
    c.push_back({static_cast<std::int64_t>(i + 1) * spacing, returns[i]});
  return c;
}

RunConfig tiny_run(std::uint64_t seed) {
  RunConfig c;
  c.env = "wind";
  c.total_steps = 300;
  c.update_ratio = 0.25;
  c.eval_episodes = 4;
  c.replay_capacity = 5000;
  c.seed = seed;
  c.agent.rl = rmf::RlAlgo::td3;
  c.agent.encoder = rmf::EncoderKind::gru;
  c.agent.inputs = rmf::InputSet::parse("oar");
  c.agent.context_len = 3;
  c.agent.rnn_hidden = 4;
  c.agent.mlp_hidden = 4;
  c.agent.embed_dim = 2;
  c.agent.batch_size = 4;
  c.agent.warmup_steps = 60;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(p);
  return p;
}

// Zero-reward stand-in environment: constant observations, nothing to learn.
class ZeroRewardEnv : public rmf::Env {
 public:
  ZeroRewardEnv() : Env(make_spec()) {}

 private:
  static rmf::EnvSpec make_spec() {
    rmf::EnvSpec s;
    s.obs_dim = 2;
    s.act_dim = 1;
    s.action_low = -1.0;
    s.action_high = 1.0;
    s.horizon = 5;
    s.gamma = 0.9;
    return s;
  }
  Vec reset_impl(std::uint64_t) override { return Vec::Zero(2); }
  rmf::StepResult step_impl(const Vec&) override { return {Vec::Zero(2), 0.0, 0.0}; }
};

}  // namespace

TEST_CASE("metrics final performance averages the last fifth of the step range") {
  // Five evenly spaced evals: only the final one sits past the 80% mark.
  auto c5 = make_curve({10, 20, 30, 40, 50}, 100);
  REQUIRE(rmf::final_performance_single(c5) == 50.0);
  REQUIRE(rmf::final_performance({c5}) == 50.0);

  // Two seeds with finals 40 and 60 average to 50.
  auto a = make_curve({0, 0, 0, 0, 40}, 10);
  auto b = make_curve({0, 0, 0, 0, 60}, 10);
  REQUIRE(rmf::final_performance({a, b}) == 50.0);

  // A 50-point curve averages exactly its last 10 points.
  std::mt19937_64 rng(7);
  std::normal_distribution<double> dn(0.0, 5.0);
  std::vector<double> vals;
  for (int i = 0; i < 50; ++i) vals.push_back(dn(rng));
  auto c50 = make_curve(vals, 20);
  double expect = 0.0;
  for (int i = 40; i < 50; ++i) expect += vals[static_cast<std::size_t>(i)];
  expect /= 10.0;
  REQUIRE(rmf::final_performance_single(c50) == expect);

  // Values outside the window cannot move the metric.
  auto mangled = c50;
  for (int i = 0; i < 40; ++i) mangled[static_cast<std::size_t>(i)].eval_return = 1e9;
  REQUIRE(rmf::final_performance_single(mangled) == expect);

  REQUIRE_THROWS_AS(rmf::final_performance_single({}), rmf::metric_error);
  REQUIRE_THROWS_AS(rmf::final_performance_single(make_curve({1, 2, 3, 4}, 10)),
                    rmf::metric_error);
  REQUIRE_THROWS_AS(rmf::final_performance({}), rmf::metric_error);
  auto bad = c5;
  bad[2].env_step = bad[1].env_step;  // not strictly increasing
  REQUIRE_THROWS_AS(rmf::final_performance_single(bad), rmf::metric_error);
}

TEST_CASE("metrics worst-case return means the lowest tenth") {
  std::vector<double> r100;
  for (int i = 1; i <= 100; ++i) r100.push_back(i);
  REQUIRE(rmf::worst_case_return(r100) == 5.5);

  REQUIRE(rmf::worst_case_return(std::vector<double>(25, 3.25)) == 3.25);

  // Shuffled input matches an explicit sort-and-slice oracle; ceil(10%) on
  // 37 tasks keeps 4.
  std::mt19937_64 rng(11);
  std::vector<double> r37;
  std::normal_distribution<double> dn(0.0, 10.0);
  for (int i = 0; i < 37; ++i) r37.push_back(dn(rng));
  std::vector<double> sorted = r37;
  std::sort(sorted.begin(), sorted.end());
  double expect = (sorted[0] + sorted[1] + sorted[2] + sorted[3]) / 4.0;
  REQUIRE(rmf::worst_case_return(r37) == expect);

  // Ten tasks: the worst single task.
  std::vector<double> r10{5, 9, 1, 7, 3, 8, 2, 6, 4, 0};
  REQUIRE(rmf::worst_case_return(r10) == 0.0);
  REQUIRE_THROWS_AS(rmf::worst_case_return(std::vector<double>(9, 1.0)), rmf::metric_error);

  // worst <= mean, equal only for constant returns.
  double mean = 0.0;
  for (double x : r37) mean += x;
  mean /= 37.0;
  REQUIRE(rmf::worst_case_return(r37) < mean);
}

TEST_CASE("metrics best-variant selection normalizes per environment") {
  // One environment reduces to plain argmax.
  VariantResultMatrix m1;
  m1.add("td3-gru-5-o-shared", "wind", 2.0);
  m1.add("td3-lstm-5-o-shared", "wind", 5.0);
  m1.add("sac-gru-5-o-shared", "wind", 3.0);
  REQUIRE(rmf::select_best_variant(m1) == "td3-lstm-5-o-shared");

  // Hand computation on 3 variants x 2 environments:
  // wind raw (2, 5, 3) -> normalized (0, 1, 1/3)
  // semicircle raw (10, 0, 20) -> normalized (0.5, 0, 1)
  // means: A 0.25, B 0.5, C 2/3 -> C wins.
  VariantResultMatrix m2 = m1;
  m2.add("td3-gru-5-o-shared", "semicircle", 10.0);
  m2.add("td3-lstm-5-o-shared", "semicircle", 0.0);
  m2.add("sac-gru-5-o-shared", "semicircle", 20.0);
  REQUIRE(rmf::select_best_variant(m2) == "sac-gru-5-o-shared");

  // Affine rescaling of one environment's raw scores cannot change the pick.
  VariantResultMatrix m3 = m2;
  for (auto& [variant, row] : m3.cells)
    for (double& x : row["wind"]) x = 7.0 * x - 123.0;
  REQUIRE(rmf::select_best_variant(m3) == rmf::select_best_variant(m2));

  // A constant column contributes 0.5 to everyone and cannot break ranking.
  VariantResultMatrix m4 = m2;
  for (auto& [variant, row] : m4.cells) row["pendulum-full"].push_back(-100.0);
  REQUIRE(rmf::select_best_variant(m4) == "sac-gru-5-o-shared");

  // Exact ties break toward the lexicographically smaller id.
  VariantResultMatrix tie;
  tie.add("td3-gru-5-o-shared", "wind", 1.0);
  tie.add("sac-gru-5-o-shared", "wind", 1.0);
  tie.add("td3-gru-5-o-shared", "semicircle", 4.0);
  tie.add("sac-gru-5-o-shared", "semicircle", 4.0);
  REQUIRE(rmf::select_best_variant(tie) == "sac-gru-5-o-shared");

  VariantResultMatrix solo;
  solo.add("td3-gru-5-o-shared", "wind", 1.0);
  REQUIRE_THROWS_AS(rmf::select_best_variant(solo), rmf::metric_error);

  VariantResultMatrix holey = m2;
  holey.cells["td3-gru-5-o-shared"].erase("semicircle");
  REQUIRE_THROWS_AS(rmf::select_best_variant(holey), rmf::metric_error);
}

TEST_CASE("metrics factor parsing and marginals") {
  REQUIRE(rmf::variant_factor("sac-gru-64-oard-shared", "rl") == "sac");
  REQUIRE(rmf::variant_factor("sac-gru-64-oard-shared", "encoder") == "gru");
  REQUIRE(rmf::variant_factor("sac-gru-64-oard-shared", "len") == "64");
  REQUIRE(rmf::variant_factor("sac-gru-64-oard-shared", "inputs") == "oard");
  REQUIRE(rmf::variant_factor("sac-gru-64-oard-shared", "arch") == "shared");
  REQUIRE_THROWS_AS(rmf::variant_factor("sac-gru-64-oard-shared", "depth"), rmf::config_error);
  REQUIRE_THROWS_AS(rmf::variant_factor("sac-gru-64", "rl"), rmf::config_error);

  // 2x2 grid over rl x encoder on one environment. Raw scores:
  //   td3-lstm 0, td3-gru 4, sac-lstm 8, sac-gru 16
  // normalized: 0, 0.25, 0.5, 1 (exact binary fractions, so the expected
  // means below are exact regardless of summation order).
  VariantResultMatrix m;
  m.add("td3-lstm-5-o-shared", "wind", 0.0);
  m.add("td3-gru-5-o-shared", "wind", 4.0);
  m.add("sac-lstm-5-o-shared", "wind", 8.0);
  m.add("sac-gru-5-o-shared", "wind", 16.0);

  auto rl = rmf::single_factor_analysis(m, "rl");
  REQUIRE(rl.size() == 2);  // sorted: sac, td3
  REQUIRE(rl[0].value == "sac");
  REQUIRE(rl[0].mean_normalized == 0.75);
  REQUIRE(rl[0].variant_count == 2);
  REQUIRE(rl[1].value == "td3");
  REQUIRE(rl[1].mean_normalized == 0.125);

  auto enc = rmf::single_factor_analysis(m, "encoder");
  REQUIRE(enc[0].value == "gru");
  REQUIRE(enc[0].mean_normalized == 0.625);
  REQUIRE(enc[1].value == "lstm");
  REQUIRE(enc[1].mean_normalized == 0.25);

  // A factor with a single value reduces to the grand mean.
  auto arch = rmf::single_factor_analysis(m, "arch");
  REQUIRE(arch.size() == 1);
  REQUIRE(arch[0].value == "shared");
  REQUIRE(arch[0].mean_normalized == 0.4375);
  REQUIRE(arch[0].variant_count == 4);

  // Permuting identical scores between two values keeps their means equal.
  VariantResultMatrix sym;
  sym.add("td3-lstm-5-o-shared", "wind", 1.0);
  sym.add("td3-gru-5-o-shared", "wind", 9.0);
  sym.add("sac-lstm-5-o-shared", "wind", 9.0);
  sym.add("sac-gru-5-o-shared", "wind", 1.0);
  auto marg = rmf::single_factor_analysis(sym, "encoder");
  REQUIRE(marg[0].mean_normalized == marg[1].mean_normalized);
}

TEST_CASE("harness config files round trip and reject junk") {
  RunConfig c;
  c.env = "pendulum-v";
  c.total_steps = 12345;
  c.update_ratio = 0.125;
  c.eval_interval = 500;
  c.eval_episodes = 7;
  c.replay_capacity = 77777;
  c.seed = 42;
  c.agent.rl = rmf::RlAlgo::sac;
  c.agent.encoder = rmf::EncoderKind::gru;
  c.agent.inputs = rmf::InputSet::parse("oard");
  c.agent.context_len = 9;
  c.agent.arch = rmf::Arch::shared;
  c.agent.rnn_hidden = 11;
  c.agent.mlp_hidden = 13;
  c.agent.embed_dim = 5;
  c.agent.actor_lr = 1e-3;
  c.agent.critic_lr = 2e-3;
  c.agent.alpha_lr = 3e-3;
  c.agent.gamma = 0.97;
  c.agent.tau = 0.01;
  c.agent.batch_size = 6;
  c.agent.explore_noise = 0.3;
  c.agent.target_noise = 0.4;
  c.agent.noise_clip = 0.6;
  c.agent.policy_delay = 3;
  c.agent.target_entropy = -2.5;
  c.agent.alpha_init = 0.2;
  c.agent.warmup_steps = 17;

  std::istringstream in(rmf::run_config_text(c));
  RunConfig back = rmf::parse_run_config(in);
  REQUIRE(rmf::run_config_text(back) == rmf::run_config_text(c));
  REQUIRE(back.agent.variant_id() == "sac-gru-9-oard-shared");

  // Comments and blank lines are ignored; defaults hold for missing keys.
  std::istringstream sparse("# a comment\n\n  env = semicircle \n agent.encoder=gru\n");
  RunConfig s = rmf::parse_run_config(sparse);
  REQUIRE(s.env == "semicircle");
  REQUIRE(s.agent.encoder == rmf::EncoderKind::gru);
  REQUIRE(s.total_steps == 200000);
  REQUIRE(s.effective_eval_interval() == 4000);  // auto: every 2%

  std::istringstream unknown("typo_key=3\n");
  REQUIRE_THROWS_AS(rmf::parse_run_config(unknown), rmf::config_error);
  std::istringstream badint("total_steps=12x\n");
  REQUIRE_THROWS_AS(rmf::parse_run_config(badint), rmf::config_error);
  std::istringstream badline("just some words\n");
  REQUIRE_THROWS_AS(rmf::parse_run_config(badline), rmf::config_error);
  std::istringstream badenum("agent.arch=solo\n");
  REQUIRE_THROWS_AS(rmf::parse_run_config(badenum), rmf::config_error);

  RunConfig shortrun;
  shortrun.total_steps = 10;
  shortrun.eval_interval = 50;
  REQUIRE_THROWS_AS(shortrun.validate(), rmf::config_error);
  RunConfig badratio;
  badratio.update_ratio = 0.0;
  REQUIRE_THROWS_AS(badratio.validate(), rmf::config_error);
  REQUIRE_THROWS_AS(rmf::parse_run_config_file("/nonexistent/run.cfg"), rmf::io_error);
}

TEST_CASE("harness evaluation is deterministic and faithful to the env") {
  AgentConfig acfg;
  acfg.context_len = 4;
  acfg.rnn_hidden = 4;
  acfg.mlp_hidden = 4;
  acfg.embed_dim = 2;

  // Reward-free env: the mean return is exactly zero with zero variance.
  {
    ZeroRewardEnv env;
    rmf::RecurrentActorCritic agent(acfg, env.spec(), 5);
    std::vector<double> per;
    REQUIRE(rmf::evaluate(agent, env, 6, 123, &per) == 0.0);
    REQUIRE(per.size() == 6);
    for (double r : per) REQUIRE(r == 0.0);
  }

  // Wind: an independent rollout loop reproduces evaluate() bit for bit.
  {
    auto env = rmf::make_env("wind");
    auto env2 = rmf::make_env("wind");
    rmf::RecurrentActorCritic agent(acfg, env->spec(), 9);
    std::vector<double> per;
    double mean = rmf::evaluate(agent, *env, 4, 777, &per);

    double total = 0.0;
    for (int ep = 0; ep < 4; ++ep) {
      std::mt19937_64 rng = rmf::make_rng(777, "eval-act", static_cast<std::uint64_t>(ep));
      Vec obs = env2->reset(rmf::derive_seed(777, "eval-episode", static_cast<std::uint64_t>(ep)));
      std::vector<rmf::PolicyInputFrame> hist;
      hist.push_back({obs, Vec::Zero(env2->spec().act_dim), 0.0, 0.0});
      double ret = 0.0;
      while (env2->episode_active()) {
        Vec a = agent.act(hist, rmf::ActMode::evaluate, rng);
        rmf::StepResult r = env2->step(a);
        ret += r.reward;
        hist.push_back({r.obs, a, r.reward, 0.0});
      }
      REQUIRE(ret == per[static_cast<std::size_t>(ep)]);
      total += ret;
    }
    REQUIRE(mean == total / 4.0);

    // Same seed, same numbers; evaluation never mutates the agent.
    std::vector<double> per2;
    REQUIRE(rmf::evaluate(agent, *env, 4, 777, &per2) == mean);
    REQUIRE(per2 == per);
  }
}

TEST_CASE("harness training maintains the update ratio") {
  // ratio 1.0 with no warm-up: one update per env step, exactly.
  RunConfig c = tiny_run(1);
  c.update_ratio = 1.0;
  c.agent.warmup_steps = 0;
  rmf::TrainingRunRecord r = rmf::train(c);
  REQUIRE(r.diagnostics.size() == 300);
  for (std::size_t i = 0; i < r.diagnostics.size(); ++i)
    REQUIRE(r.diagnostics[i].update_index == static_cast<std::int64_t>(i));

  // ratio 0.25: a quarter as many.
  RunConfig q = tiny_run(1);
  q.update_ratio = 0.25;
  q.agent.warmup_steps = 0;
  REQUIRE(rmf::train(q).diagnostics.size() == 75);

  // Warm-up steps never charge the accumulator.
  RunConfig w = tiny_run(1);
  w.update_ratio = 1.0;
  w.agent.warmup_steps = 100;
  REQUIRE(rmf::train(w).diagnostics.size() == 200);

  // Evals land every 2% of total steps plus the final step.
  REQUIRE(r.curve.size() == 50);
  for (std::size_t i = 0; i < r.curve.size(); ++i) {
    REQUIRE(r.curve[i].env_step == static_cast<std::int64_t>(i + 1) * 6);
    if (i > 0) REQUIRE(r.curve[i].env_step > r.curve[i - 1].env_step);
  }
  REQUIRE(r.curve.back().env_step == 300);

  // A total that is not a multiple of the interval still evaluates at the end.
  RunConfig odd = tiny_run(2);
  odd.total_steps = 101;
  odd.update_ratio = 0.1;
  odd.agent.warmup_steps = 50;
  rmf::TrainingRunRecord ro = rmf::train(odd);
  REQUIRE(ro.curve.back().env_step == 101);
  REQUIRE(ro.curve.size() == 51);  // 50 interval evals + the final step
}

TEST_CASE("harness training is deterministic and artifacts round trip") {
  auto d1 = fresh_dir("rmf_run_a");
  auto d2 = fresh_dir("rmf_run_b");
  RunConfig c = tiny_run(3);
  c.out_dir = d1.string();
  rmf::TrainingRunRecord r1 = rmf::train(c);
  c.out_dir = d2.string();
  rmf::TrainingRunRecord r2 = rmf::train(c);

  REQUIRE(r1.curve.size() == r2.curve.size());
  for (std::size_t i = 0; i < r1.curve.size(); ++i) {
    REQUIRE(r1.curve[i].env_step == r2.curve[i].env_step);
    REQUIRE(r1.curve[i].eval_return == r2.curve[i].eval_return);
  }
  REQUIRE(r1.diagnostics.size() == r2.diagnostics.size());
  for (std::size_t i = 0; i < r1.diagnostics.size(); ++i) {
    REQUIRE(r1.diagnostics[i].critic_loss == r2.diagnostics[i].critic_loss);
    REQUIRE(r1.diagnostics[i].actor_loss == r2.diagnostics[i].actor_loss);
  }

  // Byte-identical artifacts, independent of where they were written.
  REQUIRE(slurp(d1 / "curve.csv") == slurp(d2 / "curve.csv"));
  REQUIRE(slurp(d1 / "diagnostics.csv") == slurp(d2 / "diagnostics.csv"));
  REQUIRE(slurp(d1 / "tasks.csv") == slurp(d2 / "tasks.csv"));
  REQUIRE(slurp(d1 / "config.txt") == slurp(d2 / "config.txt"));

  // Re-parsing the curve reproduces the in-memory metric exactly.
  auto curve = rmf::load_curve((d1 / "curve.csv").string());
  REQUIRE(curve.size() == r1.curve.size());
  REQUIRE(rmf::final_performance_single(curve) == rmf::final_performance_single(r1.curve));

  // tasks.csv holds the last eval's per-episode returns.
  auto tasks = rmf::load_task_returns((d1 / "tasks.csv").string());
  REQUIRE(tasks.size() == static_cast<std::size_t>(c.eval_episodes));
  REQUIRE(tasks == r1.final_eval_returns);

  // config.txt parses back to the same run configuration.
  RunConfig back = rmf::parse_run_config_file((d1 / "config.txt").string());
  REQUIRE(rmf::run_config_text(back) == rmf::run_config_text(c));
  REQUIRE(r1.fingerprint == rmf::run_config_text(c));

  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST_CASE("harness training checks the output directory before starting") {
  auto blocker = std::filesystem::temp_directory_path() / "rmf_blocker_file";
  std::ofstream(blocker) << "x";
  RunConfig c = tiny_run(4);
  c.out_dir = (blocker / "sub").string();  // path through a regular file
  REQUIRE_THROWS_AS(rmf::train(c), rmf::io_error);
  std::filesystem::remove(blocker);
}

TEST_CASE("harness training propagates divergence with step context and partial artifacts") {
  auto dir = fresh_dir("rmf_diverge");
  RunConfig c = tiny_run(5);
  c.out_dir = dir.string();
  c.agent.warmup_steps = 0;
  c.update_ratio = 1.0;
  // Adam step sizes track the learning rate, so one update puts the head
  // weights near 1e100 and the next squared TD error overflows to inf.
  c.agent.critic_lr = 1e100;
  c.agent.actor_lr = 1e100;
  bool threw = false;
  try {
    rmf::train(c);
  } catch (const rmf::divergence_error& e) {
    threw = true;
    REQUIRE(std::string(e.what()).find("at env step") != std::string::npos);
  }
  REQUIRE(threw);
  // Partial artifacts are on disk: headers plus whatever flushed before.
  REQUIRE(std::filesystem::exists(dir / "config.txt"));
  std::string curve = slurp(dir / "curve.csv");
  REQUIRE(curve.find("env_step,eval_return") != std::string::npos);
  std::string diag = slurp(dir / "diagnostics.csv");
  REQUIRE(diag.find("update_index") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("harness sweep enumerates the factor grid deterministically") {
  std::istringstream grid(
      "env=wind\n"
      "total_steps=200\n"
      "update_ratio=0.1\n"
      "eval_episodes=12\n"
      "replay_capacity=4000\n"
      "seeds=2\n"
      "agent.encoder=lstm,gru\n"
      "agent.inputs=o,oar\n"
      "agent.context_len=3\n"
      "agent.rnn_hidden=3\n"
      "agent.mlp_hidden=3\n"
      "agent.embed_dim=2\n"
      "agent.batch_size=4\n"
      "agent.warmup_steps=60\n");
  rmf::SweepPlan plan = rmf::parse_sweep_grid(grid);
  REQUIRE(plan.seeds == 2);
  REQUIRE(plan.encoder == std::vector<std::string>{"lstm", "gru"});
  REQUIRE(plan.inputs == std::vector<std::string>{"o", "oar"});

  auto runs = rmf::enumerate_sweep(plan, "/tmp/rmf_sweep_root");
  REQUIRE(runs.size() == 8);  // 2 encoders x 2 input sets x 2 seeds
  REQUIRE(runs[0].agent.variant_id() == "td3-lstm-3-o-separate");
  REQUIRE(runs[0].seed == 0);
  REQUIRE(runs[1].seed == 1);
  REQUIRE(runs[0].out_dir == "/tmp/rmf_sweep_root/wind/td3-lstm-3-o-separate/seed0");
  REQUIRE(runs.back().agent.variant_id() == "td3-gru-3-oar-separate");

  // Factor lists validate eagerly; unknown keys and bad values are refused.
  std::istringstream badval("agent.encoder=lstm,transformer\n");
  REQUIRE_THROWS_AS(rmf::parse_sweep_grid(badval), rmf::config_error);
  std::istringstream badkey("grid.encoder=lstm\n");
  REQUIRE_THROWS_AS(rmf::parse_sweep_grid(badkey), rmf::config_error);
  std::istringstream badseeds("seeds=0\n");
  REQUIRE_THROWS_AS(rmf::parse_sweep_grid(badseeds), rmf::config_error);
}

TEST_CASE("harness sweep runs concurrently with identical results") {
  std::string grid_text =
      "env=wind\n"
      "total_steps=200\n"
      "update_ratio=0.1\n"
      "eval_episodes=12\n"
      "replay_capacity=4000\n"
      "seeds=2\n"
      "agent.encoder=lstm,gru\n"
      "agent.context_len=3\n"
      "agent.rnn_hidden=3\n"
      "agent.mlp_hidden=3\n"
      "agent.embed_dim=2\n"
      "agent.batch_size=4\n"
      "agent.warmup_steps=60\n";
  auto root1 = fresh_dir("rmf_sweep_serial");
  auto root2 = fresh_dir("rmf_sweep_threads");

  std::istringstream g1(grid_text), g2(grid_text);
  auto runs1 = rmf::enumerate_sweep(rmf::parse_sweep_grid(g1), root1.string());
  auto runs2 = rmf::enumerate_sweep(rmf::parse_sweep_grid(g2), root2.string());
  REQUIRE(runs1.size() == 4);

  auto st1 = rmf::run_sweep(runs1, 1);
  auto st2 = rmf::run_sweep(runs2, 3);
  for (const auto& s : st1) REQUIRE(s.ok);
  for (const auto& s : st2) REQUIRE(s.ok);

  for (std::size_t i = 0; i < runs1.size(); ++i) {
    auto rel = std::filesystem::relative(runs1[i].out_dir, root1);
    REQUIRE(slurp(runs1[i].out_dir + "/curve.csv") ==
            slurp((root2 / rel / "curve.csv").string()));
    REQUIRE(slurp(runs1[i].out_dir + "/diagnostics.csv") ==
            slurp((root2 / rel / "diagnostics.csv").string()));
  }

  // The report pipeline rebuilds metrics from the tree.
  VariantResultMatrix m = rmf::collect_matrix(root1.string());
  REQUIRE(m.variants() ==
          std::vector<std::string>{"td3-gru-3-oar-separate", "td3-lstm-3-oar-separate"});
  REQUIRE(m.envs() == std::vector<std::string>{"wind"});
  REQUIRE(m.cell("td3-gru-3-oar-separate", "wind").size() == 2);

  std::string fin = rmf::report_final_csv(m);
  REQUIRE(fin.rfind("env,variant,final_performance,seeds\n", 0) == 0);
  REQUIRE(std::count(fin.begin(), fin.end(), '\n') == 3);  // header + 2 variants

  std::string best = rmf::report_best_variant_csv(m);
  REQUIRE(best.rfind("variant,mean_normalized,selected\n", 0) == 0);
  REQUIRE(best.find(",1\n") != std::string::npos);

  std::string fac = rmf::report_factor_csv(m, "encoder");
  REQUIRE(fac.find("encoder,gru,") != std::string::npos);
  REQUIRE(fac.find("encoder,lstm,") != std::string::npos);

  // worst10 pools 2 seeds x 12 episodes = 24 tasks per variant.
  std::string w10 = rmf::report_worst10_csv(root1.string());
  REQUIRE(w10.find(",24\n") != std::string::npos);

  // Matching trees yield byte-identical reports.
  REQUIRE(rmf::report_final_csv(rmf::collect_matrix(root2.string())) == fin);

  std::filesystem::remove_all(root1);
  std::filesystem::remove_all(root2);
}

TEST_CASE("harness thread cap comes from the environment") {
  unsetenv("RMF_THREADS");
  REQUIRE(rmf::threads_from_env() == 1);
  setenv("RMF_THREADS", "5", 1);
  REQUIRE(rmf::threads_from_env() == 5);
  setenv("RMF_THREADS", "0", 1);
  REQUIRE(rmf::threads_from_env() == 1);
  setenv("RMF_THREADS", "bogus", 1);
  REQUIRE(rmf::threads_from_env() == 1);
  unsetenv("RMF_THREADS");
}
