#pragma once

// Five-factor design point for the recurrent agent: actor-critic wiring,
// recurrent cell, policy input channels, context length, and the update
// rule, plus every training hyperparameter as explicit config.

#include <cmath>
#include <limits>
#include <string>

#include "rmf/error.hpp"
#include "rmf/layers.hpp"

namespace rmf {

enum class Arch { shared, separate };
enum class RlAlgo { td3, sac };

inline std::string to_string(Arch a) { return a == Arch::shared ? "shared" : "separate"; }
inline std::string to_string(RlAlgo r) { return r == RlAlgo::td3 ? "td3" : "sac"; }
inline std::string to_string(EncoderKind k) { return k == EncoderKind::lstm ? "lstm" : "gru"; }

inline Arch arch_from_string(const std::string& s) {
  if (s == "shared") return Arch::shared;
  if (s == "separate") return Arch::separate;
  throw config_error("unknown arch '" + s + "' (use shared or separate)");
}

inline RlAlgo rl_from_string(const std::string& s) {
  if (s == "td3") return RlAlgo::td3;
  if (s == "sac") return RlAlgo::sac;
  throw config_error("unknown rl algorithm '" + s + "' (use td3 or sac)");
}

inline EncoderKind encoder_from_string(const std::string& s) {
  if (s == "lstm") return EncoderKind::lstm;
  if (s == "gru") return EncoderKind::gru;
  throw config_error("unknown encoder '" + s + "' (use lstm or gru)");
}

// Policy input channels. The current observation is always consumed; the
// previous action, reward, and done flags are opt-in, written in the fixed
// canonical order o, a, r, d.
struct InputSet {
  bool prev_action = false;
  bool reward = false;
  bool done = false;

  static InputSet parse(const std::string& s) {
    InputSet in;
    if (s.empty() || s[0] != 'o')
      throw config_error("input set '" + s + "' must start with the mandatory o channel");
    std::size_t pos = 1;
    auto take = [&](char c, bool& flag) {
      if (pos < s.size() && s[pos] == c) {
        flag = true;
        ++pos;
      }
    };
    take('a', in.prev_action);
    take('r', in.reward);
    take('d', in.done);
    if (pos != s.size())
      throw config_error("input set '" + s + "' is not a subset of oard in canonical order");
    return in;
  }

  std::string to_string() const {
    std::string s = "o";
    if (prev_action) s += 'a';
    if (reward) s += 'r';
    if (done) s += 'd';
    return s;
  }

  int num_channels() const {
    return 1 + (prev_action ? 1 : 0) + (reward ? 1 : 0) + (done ? 1 : 0);
  }
};

struct AgentConfig {
  Arch arch = Arch::separate;
  EncoderKind encoder = EncoderKind::lstm;
  InputSet inputs = InputSet::parse("oar");
  int context_len = 64;
  RlAlgo rl = RlAlgo::td3;

  int rnn_hidden = 128;
  int mlp_hidden = 128;
  int embed_dim = 32;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  double alpha_lr = 3e-4;
  double gamma = 0.99;
  double tau = 0.005;
  int batch_size = 32;
  double explore_noise = 0.1;  // TD3 action-space exploration sigma
  double target_noise = 0.2;   // TD3 target policy smoothing sigma
  double noise_clip = 0.5;     // TD3 smoothing noise clip
  int policy_delay = 2;        // TD3 critic updates per actor update
  // NaN selects the -act_dim convention at agent construction.
  double target_entropy = std::numeric_limits<double>::quiet_NaN();
  double alpha_init = 0.1;
  int warmup_steps = 1000;  // uniform random actions before the policy acts

  void validate() const {
    if (context_len < 1) throw config_error("context_len must be >= 1");
    if (rnn_hidden < 1 || mlp_hidden < 1 || embed_dim < 1)
      throw config_error("hidden and embedding sizes must be >= 1");
    if (actor_lr <= 0 || critic_lr <= 0 || alpha_lr <= 0)
      throw config_error("learning rates must be positive");
    if (gamma < 0.0 || gamma >= 1.0) throw config_error("gamma must lie in [0, 1)");
    if (tau <= 0.0 || tau > 1.0) throw config_error("tau must lie in (0, 1]");
    if (batch_size < 1) throw config_error("batch_size must be >= 1");
    if (explore_noise < 0 || target_noise < 0 || noise_clip < 0)
      throw config_error("noise scales must be nonnegative");
    if (policy_delay < 1) throw config_error("policy_delay must be >= 1");
    if (alpha_init <= 0) throw config_error("alpha_init must be positive");
    if (warmup_steps < 0) throw config_error("warmup_steps must be >= 0");
  }

  // Canonical run label: algorithm, cell, context, inputs, architecture.
  std::string variant_id() const {
    return rmf::to_string(rl) + "-" + rmf::to_string(encoder) + "-" +
           std::to_string(context_len) + "-" + inputs.to_string() + "-" + rmf::to_string(arch);
  }
};

}  // namespace rmf
