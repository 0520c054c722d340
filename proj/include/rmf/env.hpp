#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstdio>
#include <string>

#include "rmf/error.hpp"

namespace rmf {

using Vec = Eigen::VectorXd;

struct EnvSpec {
  int obs_dim = 0;
  int act_dim = 0;
  double action_low = -1.0;
  double action_high = 1.0;
  int horizon = 1;
  double gamma = 0.99;
};

struct StepResult {
  Vec obs;
  double reward = 0.0;
  double done = 0.0;  // 1 exactly at episode termination
};

// Episodic POMDP with a per-episode hidden task. The stepping interface
// exposes observations, rewards, and done flags only; whatever hidden state
// the episode carries influences those and nothing else.
//
// The base class owns horizon accounting and action clipping. All three
// bundled environments terminate exactly at the horizon, never earlier.
class Env {
 public:
  virtual ~Env() = default;

  const EnvSpec& spec() const { return spec_; }

  Vec reset(std::uint64_t seed) {
    t_ = 0;
    active_ = true;
    return reset_impl(seed);
  }

  StepResult step(const Vec& action) {
    if (!active_)
      throw state_error("env step: episode finished (t = " + std::to_string(t_) +
                        "); call reset first");
    if (action.size() != spec_.act_dim)
      throw config_error("env step: action has " + std::to_string(action.size()) +
                         " dims, expected " + std::to_string(spec_.act_dim));
    Vec clipped = action.cwiseMax(spec_.action_low).cwiseMin(spec_.action_high);
    if (!warned_clip_ && (clipped - action).cwiseAbs().maxCoeff() > 0.0) {
      std::fprintf(stderr, "[rmf] warning: action outside [%g, %g] clipped (reported once)\n",
                   spec_.action_low, spec_.action_high);
      warned_clip_ = true;
    }
    StepResult r = step_impl(clipped);
    ++t_;
    if (t_ >= spec_.horizon) {
      r.done = 1.0;
      active_ = false;
    } else {
      r.done = 0.0;
    }
    return r;
  }

  int steps_taken() const { return t_; }
  bool episode_active() const { return active_; }

 protected:
  explicit Env(EnvSpec spec) : spec_(spec) {
    if (spec_.horizon < 1) throw config_error("env: horizon must be >= 1");
    if (!(spec_.action_low < spec_.action_high) || !std::isfinite(spec_.action_low) ||
        !std::isfinite(spec_.action_high))
      throw config_error("env: action bounds must be finite with low < high");
    if (!(spec_.gamma >= 0.0 && spec_.gamma < 1.0))
      throw config_error("env: discount must lie in [0, 1)");
    if (spec_.obs_dim < 1 || spec_.act_dim < 1)
      throw config_error("env: observation and action dims must be positive");
  }

  virtual Vec reset_impl(std::uint64_t seed) = 0;
  virtual StepResult step_impl(const Vec& clipped_action) = 0;

 private:
  EnvSpec spec_;
  int t_ = 0;
  bool active_ = false;
  bool warned_clip_ = false;
};

}  // namespace rmf
