#pragma once

#include <cmath>
#include <random>

#include "rmf/env.hpp"

namespace rmf {

enum class OcclusionMode { full, position_only, velocity_only };

// Torque-controlled pendulum swing-up with the classic constants
// (g=10, m=1, l=1, dt=0.05, torque in [-2,2], angular velocity in [-8,8],
// horizon 200) and quadratic cost on angle, velocity, and torque.
//
// The full observation is (cos th, sin th, thdot). The occluded variants
// partition it: position_only keeps (cos th, sin th), velocity_only keeps
// (thdot); concatenating the two reconstructs the full vector.
class PendulumEnv : public Env {
 public:
  static constexpr double kG = 10.0, kM = 1.0, kL = 1.0, kDt = 0.05;
  static constexpr double kMaxTorque = 2.0, kMaxSpeed = 8.0;
  static constexpr int kHorizon = 200;

  explicit PendulumEnv(OcclusionMode mode)
      : Env(make_spec(mode)), mode_(mode) {}

  // Diagnostic hook for exact-state tests; not part of the stepping interface.
  void set_state(double theta, double theta_dot) {
    theta_ = theta;
    theta_dot_ = theta_dot;
  }
  double theta() const { return theta_; }
  double theta_dot() const { return theta_dot_; }

 protected:
  Vec reset_impl(std::uint64_t seed) override {
    rng_.seed(seed);
    theta_ = std::uniform_real_distribution<double>(-M_PI, M_PI)(rng_);
    theta_dot_ = std::uniform_real_distribution<double>(-1.0, 1.0)(rng_);
    return observe();
  }

  StepResult step_impl(const Vec& a) override {
    double u = a(0);
    double cost = wrap_angle(theta_) * wrap_angle(theta_) + 0.1 * theta_dot_ * theta_dot_ +
                  0.001 * u * u;
    double accel = 3.0 * kG / (2.0 * kL) * std::sin(theta_) + 3.0 / (kM * kL * kL) * u;
    theta_dot_ = std::clamp(theta_dot_ + accel * kDt, -kMaxSpeed, kMaxSpeed);
    theta_ += theta_dot_ * kDt;
    StepResult r;
    r.obs = observe();
    r.reward = -cost;
    return r;
  }

 private:
  OcclusionMode mode_;
  double theta_ = 0.0, theta_dot_ = 0.0;
  std::mt19937_64 rng_;

  static EnvSpec make_spec(OcclusionMode mode) {
    EnvSpec s;
    s.obs_dim = mode == OcclusionMode::full ? 3 : (mode == OcclusionMode::position_only ? 2 : 1);
    s.act_dim = 1;
    s.action_low = -kMaxTorque;
    s.action_high = kMaxTorque;
    s.horizon = kHorizon;
    s.gamma = 0.99;
    return s;
  }

  // Maps any angle into (-pi, pi].
  static double wrap_angle(double th) {
    double w = std::fmod(th + M_PI, 2.0 * M_PI);
    if (w <= 0.0) w += 2.0 * M_PI;
    return w - M_PI;
  }

  Vec observe() const {
    switch (mode_) {
      case OcclusionMode::full: {
        Vec o(3);
        o << std::cos(theta_), std::sin(theta_), theta_dot_;
        return o;
      }
      case OcclusionMode::position_only: {
        Vec o(2);
        o << std::cos(theta_), std::sin(theta_);
        return o;
      }
      case OcclusionMode::velocity_only: {
        Vec o(1);
        o << theta_dot_;
        return o;
      }
    }
    throw state_error("pendulum: unreachable occlusion mode");
  }
};

}  // namespace rmf
