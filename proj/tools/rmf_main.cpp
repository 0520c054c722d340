// Command-line front end: train a single run, launch a factorial sweep, or
// rebuild metrics from a finished sweep's artifacts.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <string>

#include "rmf/harness.hpp"

namespace {

int cmd_train(const std::string& config_path, long long seed, const std::string& out) {
  rmf::RunConfig cfg = rmf::parse_run_config_file(config_path);
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.out_dir = out;
  rmf::TrainingRunRecord rec = rmf::train(cfg);
  std::printf("run complete: %lld env steps, %zu updates, %zu evals, final eval return %.6g\n",
              static_cast<long long>(cfg.total_steps), rec.diagnostics.size(), rec.curve.size(),
              rec.curve.back().eval_return);
  std::printf("artifacts: %s\n", cfg.out_dir.c_str());
  return 0;
}

int cmd_sweep(const std::string& grid_path, const std::string& out) {
  rmf::SweepPlan plan = rmf::parse_sweep_grid_file(grid_path);
  std::vector<rmf::RunConfig> runs = rmf::enumerate_sweep(plan, out);
  const int threads = rmf::threads_from_env();
  std::fprintf(stderr, "sweep: %zu runs, %d concurrent\n", runs.size(), threads);
  std::vector<rmf::SweepRunStatus> status = rmf::run_sweep(runs, threads);
  int failures = 0;
  for (const rmf::SweepRunStatus& s : status) {
    if (s.ok) {
      std::fprintf(stderr, "ok   %s\n", s.dir.c_str());
    } else {
      ++failures;
      std::fprintf(stderr, "FAIL %s: %s\n", s.dir.c_str(), s.message.c_str());
    }
  }
  std::fprintf(stderr, "sweep complete: %zu ok, %d failed\n", status.size() - failures,
               failures);
  return failures == 0 ? 0 : 1;
}

int cmd_report(const std::string& runs_root, const std::string& metric) {
  if (metric == "final") {
    std::cout << rmf::report_final_csv(rmf::collect_matrix(runs_root));
  } else if (metric == "worst10") {
    std::cout << rmf::report_worst10_csv(runs_root);
  } else if (metric == "best-variant") {
    std::cout << rmf::report_best_variant_csv(rmf::collect_matrix(runs_root));
  } else if (metric.rfind("factor:", 0) == 0) {
    std::cout << rmf::report_factor_csv(rmf::collect_matrix(runs_root),
                                        metric.substr(std::string("factor:").size()));
  } else {
    throw rmf::config_error("unknown metric '" + metric +
                            "' (expected final, worst10, best-variant, factor:<name>)");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"recurrent model-free RL experiment runner"};
  app.require_subcommand(1);

  std::string config_path, grid_path, out, runs_root, metric = "final";
  long long seed = -1;

  CLI::App* train = app.add_subcommand("train", "train one run from a config file");
  train->add_option("--config", config_path, "key=value run config file")->required();
  train->add_option("--seed", seed, "override the config's seed");
  train->add_option("--out", out, "output directory for run artifacts")->required();

  CLI::App* sweep = app.add_subcommand("sweep", "run a factorial grid of variants");
  sweep->add_option("--grid", grid_path, "grid file (factor keys accept comma lists)")->required();
  sweep->add_option("--out", out, "root directory for <env>/<variant>/seed<k> trees")->required();

  CLI::App* report = app.add_subcommand("report", "emit metrics CSV from finished runs");
  report->add_option("--runs", runs_root, "sweep output root")->required();
  report->add_option("--metric", metric, "final | worst10 | best-variant | factor:<name>");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_path, seed, out);
    if (sweep->parsed()) return cmd_sweep(grid_path, out);
    if (report->parsed()) return cmd_report(runs_root, metric);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
