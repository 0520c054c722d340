#pragma once

#include <cmath>
#include <random>

#include "rmf/env.hpp"

namespace rmf {

// Shared chassis for the two goal-inference point robots: position starts at
// the origin, moves by v * action per step (v = 0.1), and earns an indicator
// reward when the post-move position lies within radius r = 0.2 of the
// episode's hidden goal. The goal never appears in the observation; only the
// reward channel carries information about it. No early termination: the
// robot can sit inside the goal region and keep collecting reward.
class PointRobotEnv : public Env {
 public:
  static constexpr double kSpeed = 0.1;
  static constexpr double kGoalRadius = 0.2;
  static constexpr int kHorizon = 60;

  // Diagnostic hooks for tests; not part of the stepping interface.
  const Eigen::Vector2d& goal() const { return goal_; }
  const Eigen::Vector2d& position() const { return pos_; }

 protected:
  PointRobotEnv() : Env(make_spec()) {}

  Eigen::Vector2d pos_ = Eigen::Vector2d::Zero();
  Eigen::Vector2d goal_ = Eigen::Vector2d::Zero();
  std::mt19937_64 rng_;

  Vec observe() const {
    Vec o(2);
    o << pos_(0), pos_(1);
    return o;
  }

  double goal_reward() const {
    return (pos_ - goal_).norm() <= kGoalRadius ? 1.0 : 0.0;
  }

 private:
  static EnvSpec make_spec() {
    EnvSpec s;
    s.obs_dim = 2;
    s.act_dim = 2;
    s.action_low = -1.0;
    s.action_high = 1.0;
    s.horizon = kHorizon;
    s.gamma = 0.99;
    return s;
  }
};

// Goal sampled uniformly on the upper unit semicircle; dynamics are
// noiseless, so the only way to locate the goal is to probe with the reward.
class SemiCircleEnv : public PointRobotEnv {
 public:
  static constexpr double kRadius = 1.0;

  SemiCircleEnv() = default;

 protected:
  Vec reset_impl(std::uint64_t seed) override {
    rng_.seed(seed);
    double phi = std::uniform_real_distribution<double>(0.0, M_PI)(rng_);
    goal_ = Eigen::Vector2d(kRadius * std::cos(phi), kRadius * std::sin(phi));
    pos_.setZero();
    return observe();
  }

  StepResult step_impl(const Vec& a) override {
    pos_ += kSpeed * Eigen::Vector2d(a(0), a(1));
    StepResult r;
    r.obs = observe();
    r.reward = goal_reward();
    return r;
  }
};

// Fixed goal one unit straight ahead, but every move is pushed by a hidden
// per-episode wind drawn uniformly from [-0.08, 0.08]^2. The policy must
// infer the wind from how its position responds and steer against it.
class WindEnv : public PointRobotEnv {
 public:
  static constexpr double kWindBound = 0.08;

  WindEnv() { goal_ = Eigen::Vector2d(0.0, 1.0); }

  const Eigen::Vector2d& wind() const { return wind_; }

  // Diagnostic hook for exact-dynamics tests.
  void set_wind(const Eigen::Vector2d& w) { wind_ = w; }

 protected:
  Vec reset_impl(std::uint64_t seed) override {
    rng_.seed(seed);
    std::uniform_real_distribution<double> d(-kWindBound, kWindBound);
    double wx = d(rng_);
    double wy = d(rng_);
    wind_ = Eigen::Vector2d(wx, wy);
    goal_ = Eigen::Vector2d(0.0, 1.0);
    pos_.setZero();
    return observe();
  }

  StepResult step_impl(const Vec& a) override {
    pos_ += kSpeed * Eigen::Vector2d(a(0), a(1)) + wind_;
    StepResult r;
    r.obs = observe();
    r.reward = goal_reward();
    return r;
  }

 private:
  Eigen::Vector2d wind_ = Eigen::Vector2d::Zero();
};

}  // namespace rmf
