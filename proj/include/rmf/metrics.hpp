#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rmf/error.hpp"

namespace rmf {

// One evaluation checkpoint: undiscounted mean return measured after
// env_step environment steps.
struct CurvePoint {
  std::int64_t env_step = 0;
  double eval_return = 0.0;
};

// Mean of the eval points inside the final 20% of the step range, taking the
// curve's last recorded step as the range end. Strictly-greater keeps a point
// sitting exactly at the 80% mark out of the window, so an evenly spaced
// curve of n points averages its last n/5.
inline double final_performance_single(const std::vector<CurvePoint>& curve) {
  if (curve.empty()) throw metric_error("final_performance: empty curve");
  if (curve.size() < 5)
    throw metric_error("final_performance: need at least 5 eval points, got " +
                       std::to_string(curve.size()));
  for (std::size_t i = 1; i < curve.size(); ++i)
    if (curve[i].env_step <= curve[i - 1].env_step)
      throw metric_error("final_performance: env_step must increase strictly");
  const double cutoff = 0.8 * static_cast<double>(curve.back().env_step);
  double sum = 0.0;
  std::int64_t n = 0;
  for (const CurvePoint& p : curve)
    if (static_cast<double>(p.env_step) > cutoff) {
      sum += p.eval_return;
      ++n;
    }
  return sum / static_cast<double>(n);  // the last point always qualifies
}

// Per-seed final performance, then the plain mean across seeds.
inline double final_performance(const std::vector<std::vector<CurvePoint>>& per_seed) {
  if (per_seed.empty()) throw metric_error("final_performance: no seeds");
  double sum = 0.0;
  for (const auto& curve : per_seed) sum += final_performance_single(curve);
  return sum / static_cast<double>(per_seed.size());
}

// Mean return over the worst ceil(10%) of tasks.
inline double worst_case_return(std::vector<double> per_task_returns) {
  const std::size_t n = per_task_returns.size();
  if (n < 10)
    throw metric_error("worst_case_return: need at least 10 tasks, got " + std::to_string(n));
  const std::size_t k = (n + 9) / 10;
  std::sort(per_task_returns.begin(), per_task_returns.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += per_task_returns[i];
  return sum / static_cast<double>(k);
}

// Final performance per (variant, environment, seed). Cells hold the
// per-seed values so every aggregate can report how many seeds back it.
struct VariantResultMatrix {
  std::map<std::string, std::map<std::string, std::vector<double>>> cells;

  void add(const std::string& variant, const std::string& env, double final_perf) {
    cells[variant][env].push_back(final_perf);
  }

  std::vector<std::string> variants() const {
    std::vector<std::string> v;
    for (const auto& [name, row] : cells) v.push_back(name);
    return v;
  }

  // Union of environments across variants, sorted.
  std::vector<std::string> envs() const {
    std::map<std::string, bool> seen;
    for (const auto& [name, row] : cells)
      for (const auto& [env, vals] : row) seen[env] = true;
    std::vector<std::string> v;
    for (const auto& [env, flag] : seen) v.push_back(env);
    return v;
  }

  const std::vector<double>& cell(const std::string& variant, const std::string& env) const {
    auto vit = cells.find(variant);
    if (vit == cells.end() || vit->second.find(env) == vit->second.end())
      throw metric_error("variant '" + variant + "' has no result on environment '" + env + "'");
    return vit->second.at(env);
  }

  double cell_mean(const std::string& variant, const std::string& env) const {
    const std::vector<double>& v = cell(variant, env);
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  }
};

namespace detail {

// Per-environment min-max normalization of the variants' mean finals.
// A zero-range column maps every variant to 0.5.
inline std::map<std::string, double> normalize_env_column(const VariantResultMatrix& m,
                                                          const std::vector<std::string>& variants,
                                                          const std::string& env) {
  double lo = 0.0, hi = 0.0;
  bool first = true;
  std::map<std::string, double> raw;
  for (const std::string& v : variants) {
    double x = m.cell_mean(v, env);
    raw[v] = x;
    lo = first ? x : std::min(lo, x);
    hi = first ? x : std::max(hi, x);
    first = false;
  }
  std::map<std::string, double> out;
  const double range = hi - lo;
  for (const auto& [v, x] : raw) out[v] = range == 0.0 ? 0.5 : (x - lo) / range;
  return out;
}

}  // namespace detail

// Argmax of the per-variant mean of per-environment min-max normalized
// finals; ties break toward the lexicographically smallest variant id.
inline std::string select_best_variant(const VariantResultMatrix& m) {
  const std::vector<std::string> variants = m.variants();
  const std::vector<std::string> envs = m.envs();
  if (variants.size() < 2)
    throw metric_error("select_best_variant: need at least 2 variants, got " +
                       std::to_string(variants.size()));
  if (envs.empty()) throw metric_error("select_best_variant: need at least 1 environment");

  std::string best;
  double best_score = 0.0;
  std::map<std::string, double> score;
  for (const std::string& env : envs)
    for (const auto& [v, x] : detail::normalize_env_column(m, variants, env)) score[v] += x;
  bool first = true;
  for (const std::string& v : variants) {  // sorted: first strict max wins ties
    double s = score[v] / static_cast<double>(envs.size());
    if (first || s > best_score) {
      best = v;
      best_score = s;
      first = false;
    }
  }
  return best;
}

// Factor accessors over the canonical variant id rl-encoder-len-inputs-arch.
inline std::string variant_factor(const std::string& variant_id, const std::string& factor) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : variant_id) {
    if (c == '-') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  if (parts.size() != 5)
    throw config_error("variant id '" + variant_id + "' is not rl-encoder-len-inputs-arch");
  if (factor == "rl") return parts[0];
  if (factor == "encoder") return parts[1];
  if (factor == "len") return parts[2];
  if (factor == "inputs") return parts[3];
  if (factor == "arch") return parts[4];
  throw config_error("unknown factor '" + factor + "' (expected rl, encoder, len, inputs, arch)");
}

// Marginal scores for one design factor: mean of the normalized finals over
// every (variant, environment) pair sharing the factor value. Counts report
// how many variants back each value, so sparse grids stay visible.
struct FactorMarginal {
  std::string value;
  double mean_normalized = 0.0;
  int variant_count = 0;
};

inline std::vector<FactorMarginal> single_factor_analysis(const VariantResultMatrix& m,
                                                          const std::string& factor) {
  const std::vector<std::string> variants = m.variants();
  if (variants.empty()) throw metric_error("single_factor_analysis: empty matrix");
  std::map<std::string, double> sum;
  std::map<std::string, int> terms;
  std::map<std::string, std::map<std::string, bool>> members;
  for (const std::string& env : m.envs()) {
    // Normalize over the variants present on this environment only.
    std::vector<std::string> present;
    for (const std::string& v : variants) {
      auto vit = m.cells.find(v);
      if (vit != m.cells.end() && vit->second.count(env)) present.push_back(v);
    }
    auto norm = detail::normalize_env_column(m, present, env);
    for (const auto& [v, x] : norm) {
      const std::string value = variant_factor(v, factor);
      sum[value] += x;
      terms[value] += 1;
      members[value][v] = true;
    }
  }
  std::vector<FactorMarginal> out;
  for (const auto& [value, s] : sum) {
    FactorMarginal fm;
    fm.value = value;
    fm.mean_normalized = s / static_cast<double>(terms[value]);
    fm.variant_count = static_cast<int>(members[value].size());
    out.push_back(fm);
  }
  return out;
}

}  // namespace rmf
