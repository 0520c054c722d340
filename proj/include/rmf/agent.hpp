#pragma once

// Recurrent TD3 and recurrent SAC over the five-factor design space:
// shared or separate encoder stacks, lstm/gru cells, selectable input
// channels, context length, and the update rule. Recurrent state is always
// rebuilt from zero over the relevant window, both when acting and when
// training on sampled subsequences, so there is no hidden-state replay.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rmf/adam.hpp"
#include "rmf/agent_config.hpp"
#include "rmf/binio.hpp"
#include "rmf/env.hpp"
#include "rmf/gaussian.hpp"
#include "rmf/layers.hpp"
#include "rmf/replay.hpp"
#include "rmf/rng.hpp"
#include "rmf/tape.hpp"

namespace rmf {

// One step of policy input: the current observation plus the previous
// action, the reward observed on arrival, and the done flag. Channels
// outside the configured input set are carried but never consumed.
struct PolicyInputFrame {
  Vec obs;
  Vec prev_act;
  double reward = 0.0;
  double done = 0.0;
};

enum class ActMode { explore, evaluate };

struct UpdateStats {
  std::int64_t update_index = 0;
  double critic_loss = 0.0;
  std::optional<double> actor_loss;  // empty on delayed-policy skip rounds
  std::optional<double> alpha;       // temperature after the round (sac only)
  // RNN-cell gradient norms. The shared architecture has one encoder and
  // reports it in the critic slot (critic gradients, plus actor gradients on
  // rounds where the actor updates); the actor slot stays empty. The
  // separate architecture fills the critic slot every round and the actor
  // slot only on actor rounds.
  std::optional<double> critic_encoder_grad_norm;
  std::optional<double> actor_encoder_grad_norm;
};

// Embedders plus recurrent cell for one encoder path. Enabled channels pass
// through one small ReLU layer each, are concatenated in fixed o,a,r,d
// order, zeroed at masked positions, and fed to the cell.
class EncoderStack {
 public:
  EncoderStack() = default;

  static EncoderStack make(const AgentConfig& cfg, int obs_dim, int act_dim,
                           const std::string& name, std::mt19937_64& rng) {
    EncoderStack s;
    s.inputs_ = cfg.inputs;
    s.width_ = cfg.inputs.num_channels() * cfg.embed_dim;
    s.embed_o_ = Linear::make(obs_dim, cfg.embed_dim, name + ".embed_o", rng);
    if (cfg.inputs.prev_action)
      s.embed_a_ = Linear::make(act_dim, cfg.embed_dim, name + ".embed_a", rng);
    if (cfg.inputs.reward) s.embed_r_ = Linear::make(1, cfg.embed_dim, name + ".embed_r", rng);
    if (cfg.inputs.done) s.embed_d_ = Linear::make(1, cfg.embed_dim, name + ".embed_d", rng);
    s.enc_ = RnnEncoder::make(cfg.encoder, s.width_, cfg.rnn_hidden, name + ".rnn", rng);
    return s;
  }

  int hidden_dim() const { return enc_.hidden_dim(); }

  // Unrolls from zero state over the per-timestep channel sequences. The
  // mask (rows x T) zeroes embedded inputs at padded positions; disabled
  // channel sequences are ignored entirely.
  std::vector<Mat> rollout(const std::vector<Mat>& o, const std::vector<Mat>& a,
                           const std::vector<Mat>& r, const std::vector<Mat>& d,
                           const Mat& mask) const {
    check_lengths(o, a, r, d, mask);
    RnnState s = enc_.initial_state(o[0].rows());
    std::vector<Mat> hs;
    hs.reserve(o.size());
    for (std::size_t j = 0; j < o.size(); ++j) {
      Mat x = embed_step(o[j], a[j], r[j], d[j]);
      x = x.cwiseProduct(mask.col(static_cast<Eigen::Index>(j)).replicate(1, x.cols()));
      enc_.step(x, s);
      hs.push_back(s.hidden);
    }
    return hs;
  }

  std::vector<Var> rollout(Tape& t, const std::vector<Mat>& o, const std::vector<Mat>& a,
                           const std::vector<Mat>& r, const std::vector<Mat>& d,
                           const Mat& mask) {
    check_lengths(o, a, r, d, mask);
    RnnStateVar s = enc_.initial_state(t, o[0].rows());
    std::vector<Var> hs;
    hs.reserve(o.size());
    for (std::size_t j = 0; j < o.size(); ++j) {
      Var x = embed_step(t, o[j], a[j], r[j], d[j]);
      Mat m = mask.col(static_cast<Eigen::Index>(j)).replicate(1, width_);
      x = t.hadamard_const(x, m);
      enc_.step(t, x, s);
      hs.push_back(s.hidden);
    }
    return hs;
  }

  void collect(std::vector<Parameter*>& out) {
    embed_o_.collect(out);
    if (embed_a_) embed_a_->collect(out);
    if (embed_r_) embed_r_->collect(out);
    if (embed_d_) embed_d_->collect(out);
    enc_.collect(out);
  }

  // The recurrent cell's parameters only, for gradient-norm diagnostics.
  void collect_rnn(std::vector<Parameter*>& out) { enc_.collect(out); }

 private:
  InputSet inputs_;
  int width_ = 0;
  Linear embed_o_;
  std::optional<Linear> embed_a_, embed_r_, embed_d_;
  RnnEncoder enc_;

  Mat embed_step(const Mat& o, const Mat& a, const Mat& r, const Mat& d) const {
    Mat x(o.rows(), width_);
    Eigen::Index c = 0;
    auto put = [&](const Mat& e) {
      x.middleCols(c, e.cols()) = e;
      c += e.cols();
    };
    put(k_relu(embed_o_.fwd(o)));
    if (inputs_.prev_action) put(k_relu(embed_a_->fwd(a)));
    if (inputs_.reward) put(k_relu(embed_r_->fwd(r)));
    if (inputs_.done) put(k_relu(embed_d_->fwd(d)));
    return x;
  }

  Var embed_step(Tape& t, const Mat& o, const Mat& a, const Mat& r, const Mat& d) {
    std::vector<Var> parts;
    parts.push_back(t.relu(embed_o_.fwd(t, t.constant(o))));
    if (inputs_.prev_action) parts.push_back(t.relu(embed_a_->fwd(t, t.constant(a))));
    if (inputs_.reward) parts.push_back(t.relu(embed_r_->fwd(t, t.constant(r))));
    if (inputs_.done) parts.push_back(t.relu(embed_d_->fwd(t, t.constant(d))));
    return parts.size() == 1 ? parts[0] : t.concat_cols(parts);
  }

  void check_lengths(const std::vector<Mat>& o, const std::vector<Mat>& a,
                     const std::vector<Mat>& r, const std::vector<Mat>& d,
                     const Mat& mask) const {
    if (o.empty()) throw state_error("encoder rollout: empty sequence");
    if (a.size() != o.size() || r.size() != o.size() || d.size() != o.size())
      throw config_error("encoder rollout: channel sequences differ in length");
    if (mask.cols() != static_cast<Eigen::Index>(o.size()) || mask.rows() != o[0].rows())
      throw config_error("encoder rollout: mask shape does not match the sequence");
  }
};

class RecurrentActorCritic {
 public:
  RecurrentActorCritic(const AgentConfig& cfg, const EnvSpec& spec, std::uint64_t seed)
      : cfg_(cfg), obs_dim_(spec.obs_dim), act_dim_(spec.act_dim) {
    cfg_.validate();
    if (spec.action_high <= 0.0 || spec.action_low != -spec.action_high)
      throw config_error("agent requires symmetric action bounds");
    bound_ = spec.action_high;
    if (std::isnan(cfg_.target_entropy))
      cfg_.target_entropy = -static_cast<double>(act_dim_);

    const bool sep = cfg_.arch == Arch::separate;
    const bool td3 = cfg_.rl == RlAlgo::td3;
    std::mt19937_64 init = make_rng(seed, "agent-init");

    critic_stack_ = EncoderStack::make(cfg_, obs_dim_, act_dim_, sep ? "critic_enc" : "enc", init);
    if (sep) actor_stack_opt_ = EncoderStack::make(cfg_, obs_dim_, act_dim_, "actor_enc", init);
    const int H = cfg_.rnn_hidden;
    actor_head_ = Mlp::make(H, cfg_.mlp_hidden, td3 ? act_dim_ : 2 * act_dim_, "actor_head", init);
    q1_ = Mlp::make(H + act_dim_, cfg_.mlp_hidden, 1, "q1", init);
    q2_ = Mlp::make(H + act_dim_, cfg_.mlp_hidden, 1, "q2", init);

    target_critic_stack_ =
        EncoderStack::make(cfg_, obs_dim_, act_dim_, sep ? "target_critic_enc" : "target_enc", init);
    if (sep && td3)
      target_actor_stack_ = EncoderStack::make(cfg_, obs_dim_, act_dim_, "target_actor_enc", init);
    if (td3)
      target_actor_head_ = Mlp::make(H, cfg_.mlp_hidden, act_dim_, "target_actor_head", init);
    target_q1_ = Mlp::make(H + act_dim_, cfg_.mlp_hidden, 1, "target_q1", init);
    target_q2_ = Mlp::make(H + act_dim_, cfg_.mlp_hidden, 1, "target_q2", init);

    if (cfg_.rl == RlAlgo::sac)
      log_alpha_ = Parameter("log_alpha", Mat::Constant(1, 1, std::log(cfg_.alpha_init)));

    // Polyak pairs: every target tracks its live twin, nothing else.
    collect_into(polyak_live_, critic_stack_);
    collect_into(polyak_target_, target_critic_stack_);
    if (sep && td3) {
      collect_into(polyak_live_, *actor_stack_opt_);
      collect_into(polyak_target_, *target_actor_stack_);
    }
    if (td3) {
      actor_head_.collect(polyak_live_);
      target_actor_head_->collect(polyak_target_);
    }
    q1_.collect(polyak_live_);
    q2_.collect(polyak_live_);
    target_q1_.collect(polyak_target_);
    target_q2_.collect(polyak_target_);
    for (std::size_t i = 0; i < polyak_live_.size(); ++i)
      polyak_target_[i]->value = polyak_live_[i]->value;

    // Optimizer groups. Separate: one per path. Shared: the trunk steps in
    // its own group exactly once per round so its parameters are never
    // double-stepped when both losses feed it; the trunk uses the critic lr.
    if (sep) {
      std::vector<Parameter*> cp, ap;
      collect_into(cp, critic_stack_);
      q1_.collect(cp);
      q2_.collect(cp);
      collect_into(ap, *actor_stack_opt_);
      actor_head_.collect(ap);
      opt_critic_ = Adam(cp, cfg_.critic_lr);
      opt_actor_ = Adam(ap, cfg_.actor_lr);
    } else {
      std::vector<Parameter*> qp, ap, tp;
      q1_.collect(qp);
      q2_.collect(qp);
      actor_head_.collect(ap);
      collect_into(tp, critic_stack_);
      opt_critic_ = Adam(qp, cfg_.critic_lr);
      opt_actor_ = Adam(ap, cfg_.actor_lr);
      opt_trunk_ = Adam(tp, cfg_.critic_lr);
    }
    if (cfg_.rl == RlAlgo::sac) opt_alpha_ = Adam({&log_alpha_}, cfg_.alpha_lr);

    critic_stack_.collect_rnn(critic_rnn_params_);
    if (sep) actor_stack_opt_->collect_rnn(actor_rnn_params_);

    // Archive registry: all live parameters, then all targets.
    collect_into(live_params_, critic_stack_);
    if (sep) collect_into(live_params_, *actor_stack_opt_);
    actor_head_.collect(live_params_);
    q1_.collect(live_params_);
    q2_.collect(live_params_);
    if (cfg_.rl == RlAlgo::sac) live_params_.push_back(&log_alpha_);
    archive_params_ = live_params_;
    for (Parameter* p : polyak_target_) archive_params_.push_back(p);

    opts_.push_back(&opt_critic_);
    opts_.push_back(&opt_actor_);
    if (opt_trunk_) opts_.push_back(&*opt_trunk_);
    if (opt_alpha_) opts_.push_back(&*opt_alpha_);
  }

  // Optimizer groups and registries hold pointers into this object.
  RecurrentActorCritic(const RecurrentActorCritic&) = delete;
  RecurrentActorCritic& operator=(const RecurrentActorCritic&) = delete;

  const AgentConfig& config() const { return cfg_; }
  int obs_dim() const { return obs_dim_; }
  int act_dim() const { return act_dim_; }
  double action_bound() const { return bound_; }
  std::int64_t update_count() const { return update_count_; }
  double alpha() const {
    return cfg_.rl == RlAlgo::sac ? std::exp(log_alpha_.value(0, 0)) : 0.0;
  }

  // Live trainable parameters (includes log_alpha for sac).
  const std::vector<Parameter*>& trainable_parameters() { return live_params_; }
  const std::vector<Parameter*>& target_parameters() { return polyak_target_; }

  // Rolls the actor path over the last context window of the history and
  // emits one action in env units. Explore adds gaussian noise (td3) or
  // samples the squashed policy (sac); evaluate is the deterministic mean.
  Vec act(const std::vector<PolicyInputFrame>& history, ActMode mode,
          std::mt19937_64& rng) const {
    if (history.empty()) throw state_error("act: history holds no frames");
    const std::size_t T =
        std::min<std::size_t>(history.size(), static_cast<std::size_t>(cfg_.context_len));
    const std::size_t first = history.size() - T;
    std::vector<Mat> o(T), a(T), r(T), d(T);
    for (std::size_t j = 0; j < T; ++j) {
      const PolicyInputFrame& f = history[first + j];
      if (f.obs.size() != obs_dim_ || f.prev_act.size() != act_dim_)
        throw config_error("act: frame dimensions do not match the env spec");
      o[j] = f.obs.transpose();
      a[j] = f.prev_act.transpose() / bound_;
      r[j] = Mat::Constant(1, 1, f.reward);
      // The window starts from zero recurrent state, so its first position
      // is treated as fresh, matching the training-batch convention.
      d[j] = Mat::Constant(1, 1, j == 0 ? 0.0 : f.done);
    }
    Mat mask = Mat::Ones(1, static_cast<Eigen::Index>(T));
    Mat h = actor_stack().rollout(o, a, r, d, mask).back();
    Mat out = actor_head_.fwd(h);
    Mat action;
    if (cfg_.rl == RlAlgo::td3) {
      action = k_tanh(out);
      if (mode == ActMode::explore)
        action = k_clamp(action + cfg_.explore_noise * randn(1, act_dim_, rng), -1.0, 1.0);
    } else {
      Mat mean = out.leftCols(act_dim_);
      if (mode == ActMode::explore) {
        Mat eps = randn(1, act_dim_, rng);
        action = squashed_gaussian_sample(mean, out.rightCols(act_dim_), eps).action;
      } else {
        action = squashed_mean_action(mean);
      }
    }
    return bound_ * action.row(0).transpose();
  }

  UpdateStats update(const SampledBatch& batch, std::mt19937_64& rng) {
    try {
      return cfg_.rl == RlAlgo::td3 ? td3_update(batch, rng) : sac_update(batch, rng);
    } catch (const divergence_error& e) {
      if (e.update_index >= 0) throw;
      throw divergence_error(e.what(), update_count_);
    }
  }

  // Bootstrapped TD targets (batch x context), computed without gradients.
  // Consumes target-noise / next-action draws from rng in fixed order, one
  // draw of shape (batch, act_dim) per timestep.
  Mat targets(const SampledBatch& b, std::mt19937_64& rng) const {
    return cfg_.rl == RlAlgo::td3 ? td3_targets(b, rng) : sac_targets(b, rng);
  }

  // Loss probes for diagnostics and derivative checks: build the update's
  // tape against precomputed targets (or the algorithm's own target draw)
  // and optionally deposit gradients, without stepping any optimizer.
  double probe_critic_loss(const SampledBatch& b, const Mat& y, bool backward = false) {
    Tape tp;
    Var loss = build_critic_loss(tp, b, y);
    if (backward) tp.backward(loss);
    return tp.val(loss)(0, 0);
  }
  double probe_critic_loss(const SampledBatch& b, std::mt19937_64& rng, bool backward = false) {
    return probe_critic_loss(b, targets(b, rng), backward);
  }
  double probe_actor_loss(const SampledBatch& b, std::mt19937_64& rng, bool backward = false) {
    Tape tp;
    Var loss = cfg_.rl == RlAlgo::td3 ? build_td3_actor_loss(tp, b)
                                      : build_sac_actor_loss(tp, b, rng, nullptr);
    if (backward) tp.backward(loss);
    return tp.val(loss)(0, 0);
  }

  // Deterministic per-timestep policy means over a batch's current frames,
  // in normalized units; rollout diagnostics for causality checks.
  std::vector<Mat> policy_means(const SampledBatch& b) const {
    auto hs = actor_stack().rollout(current_obs(b), current_prev_act(b), b.prev_rew,
                                    b.prev_done, b.mask);
    std::vector<Mat> ms;
    ms.reserve(hs.size());
    for (const Mat& h : hs) {
      Mat out = actor_head_.fwd(h);
      ms.push_back(k_tanh(out.leftCols(act_dim_)));
    }
    return ms;
  }

  void zero_all_grads() {
    for (Parameter* p : live_params_) p->zero_grad();
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("agent save: cannot open " + path);
    binio::write_u64(os, kMagic);
    binio::write_string(os, fingerprint());
    binio::write_u64(os, static_cast<std::uint64_t>(update_count_));
    binio::write_u64(os, archive_params_.size());
    for (const Parameter* p : archive_params_) {
      binio::write_string(os, p->name);
      binio::write_mat(os, p->value);
    }
    binio::write_u64(os, opts_.size());
    for (const Adam* opt : opts_) {
      binio::write_u64(os, static_cast<std::uint64_t>(opt->step_count()));
      binio::write_u64(os, opt->params().size());
      for (std::size_t i = 0; i < opt->params().size(); ++i) {
        binio::write_mat(os, opt->first_moment(i));
        binio::write_mat(os, opt->second_moment(i));
      }
    }
    if (!os) throw io_error("agent save: write failed for " + path);
  }

  void load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("agent load: cannot open " + path);
    if (binio::read_u64(is, "agent archive magic") != kMagic)
      throw io_error("agent load: " + path + " is not an agent archive");
    std::string fp = binio::read_string(is, "config fingerprint");
    if (fp != fingerprint())
      throw io_error("agent load: config fingerprint mismatch (archive: " + fp + ")");
    std::int64_t count = static_cast<std::int64_t>(binio::read_u64(is, "update counter"));
    if (binio::read_u64(is, "parameter count") != archive_params_.size())
      throw io_error("agent load: parameter count mismatch");
    for (Parameter* p : archive_params_) {
      std::string name = binio::read_string(is, "parameter name");
      if (name != p->name)
        throw io_error("agent load: expected parameter " + p->name + ", archive has " + name);
      Mat m = binio::read_mat(is, p->name.c_str());
      if (m.rows() != p->value.rows() || m.cols() != p->value.cols())
        throw io_error("agent load: shape mismatch for " + p->name + " (" +
                       std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + " vs " +
                       std::to_string(p->value.rows()) + "x" +
                       std::to_string(p->value.cols()) + ")");
      p->value = m;
    }
    if (binio::read_u64(is, "optimizer count") != opts_.size())
      throw io_error("agent load: optimizer count mismatch");
    for (Adam* opt : opts_) {
      long long t = static_cast<long long>(binio::read_u64(is, "optimizer step count"));
      if (binio::read_u64(is, "optimizer parameter count") != opt->params().size())
        throw io_error("agent load: optimizer parameter count mismatch");
      std::vector<Mat> m, v;
      for (std::size_t i = 0; i < opt->params().size(); ++i) {
        m.push_back(binio::read_mat(is, "optimizer first moment"));
        v.push_back(binio::read_mat(is, "optimizer second moment"));
      }
      opt->restore(t, std::move(m), std::move(v));
    }
    update_count_ = count;
  }

  // Config-plus-shape identity of the archive format.
  std::string fingerprint() const {
    std::ostringstream ss;
    ss << cfg_.variant_id() << "|obs=" << obs_dim_ << "|act=" << act_dim_
       << "|bound=" << fmt17(bound_) << "|rnn=" << cfg_.rnn_hidden << "|mlp=" << cfg_.mlp_hidden
       << "|embed=" << cfg_.embed_dim << "|alr=" << fmt17(cfg_.actor_lr)
       << "|clr=" << fmt17(cfg_.critic_lr) << "|tlr=" << fmt17(cfg_.alpha_lr)
       << "|gamma=" << fmt17(cfg_.gamma) << "|tau=" << fmt17(cfg_.tau)
       << "|batch=" << cfg_.batch_size << "|en=" << fmt17(cfg_.explore_noise)
       << "|tn=" << fmt17(cfg_.target_noise) << "|nc=" << fmt17(cfg_.noise_clip)
       << "|pd=" << cfg_.policy_delay << "|te=" << fmt17(cfg_.target_entropy)
       << "|a0=" << fmt17(cfg_.alpha_init) << "|warm=" << cfg_.warmup_steps;
    return ss.str();
  }

 private:
  static constexpr std::uint64_t kMagic = 0x31544741464d52ull;  // "RMFAGT1"

  AgentConfig cfg_;
  int obs_dim_ = 0, act_dim_ = 0;
  double bound_ = 1.0;
  std::int64_t update_count_ = 0;

  EncoderStack critic_stack_;
  std::optional<EncoderStack> actor_stack_opt_;  // separate arch only
  Mlp actor_head_, q1_, q2_;
  EncoderStack target_critic_stack_;
  std::optional<EncoderStack> target_actor_stack_;  // separate td3 only
  std::optional<Mlp> target_actor_head_;            // td3 only
  Mlp target_q1_, target_q2_;
  Parameter log_alpha_;

  Adam opt_critic_, opt_actor_;
  std::optional<Adam> opt_trunk_;  // shared arch: the single encoder stack
  std::optional<Adam> opt_alpha_;
  std::vector<Adam*> opts_;

  std::vector<Parameter*> polyak_live_, polyak_target_;
  std::vector<Parameter*> critic_rnn_params_, actor_rnn_params_;
  std::vector<Parameter*> live_params_, archive_params_;

  static void collect_into(std::vector<Parameter*>& out, EncoderStack& s) { s.collect(out); }

  static std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  }

  const EncoderStack& actor_stack() const {
    return actor_stack_opt_ ? *actor_stack_opt_ : critic_stack_;
  }
  EncoderStack& actor_stack_mut() {
    return actor_stack_opt_ ? *actor_stack_opt_ : critic_stack_;
  }

  const std::vector<Mat>& current_obs(const SampledBatch& b) const { return b.obs; }
  std::vector<Mat> current_prev_act(const SampledBatch& b) const {
    std::vector<Mat> a;
    a.reserve(b.prev_act.size());
    for (const Mat& m : b.prev_act) a.push_back(m / bound_);
    return a;
  }

  // Channel sequences for the bootstrap rollout: window frames 2..T followed
  // by one frame built from the final transition, encoded from zero state
  // over T steps. Hidden j of this shifted rollout is the next-step encoding
  // of position j and summarizes exactly j+1 frames, the same count as the
  // live encoding of position j. Matching the zero-start depth on both sides
  // keeps the bootstrap contraction intact; with the one-frame-longer
  // next-window convention the target hidden runs systematically hotter than
  // the live one and Q diverges at short context. A short row's final
  // position reads one padded frame here, but that row is terminal (done
  // sits only on a window's last valid step), so its bootstrap term is cut
  // by the (1-d) factor and the hidden never reaches y.
  struct NextSeq {
    std::vector<Mat> o, a, r, d;
    Mat mask;
  };
  NextSeq next_sequences(const SampledBatch& b) const {
    const int T = b.context;
    NextSeq s;
    s.o.reserve(T);
    s.a.reserve(T);
    s.r.reserve(T);
    s.d.reserve(T);
    for (int j = 1; j < T; ++j) {
      s.o.push_back(b.obs[j]);
      s.a.push_back(b.prev_act[j] / bound_);
      s.r.push_back(b.prev_rew[j]);
      s.d.push_back(b.prev_done[j]);
    }
    s.o.push_back(b.next_obs[T - 1]);
    s.a.push_back(b.act[T - 1] / bound_);
    s.r.push_back(b.rew[T - 1]);
    s.d.push_back(b.done[T - 1]);
    s.mask = b.mask;
    return s;
  }

  Mat td3_targets(const SampledBatch& b, std::mt19937_64& rng) const {
    const int T = b.context;
    const Eigen::Index n = b.mask.rows();
    NextSeq s = next_sequences(b);
    auto hs = target_critic_stack_.rollout(s.o, s.a, s.r, s.d, s.mask);
    std::vector<Mat> pi_hs_sep;
    if (target_actor_stack_) pi_hs_sep = target_actor_stack_->rollout(s.o, s.a, s.r, s.d, s.mask);
    const std::vector<Mat>& pi_hs = target_actor_stack_ ? pi_hs_sep : hs;
    Mat y(n, T);
    for (int j = 0; j < T; ++j) {
      Mat a2 = k_tanh(target_actor_head_->fwd(pi_hs[j]));
      Mat eps = k_clamp(cfg_.target_noise * randn(n, act_dim_, rng), -cfg_.noise_clip,
                        cfg_.noise_clip);
      a2 = k_clamp(a2 + eps, -1.0, 1.0);
      Mat qin(n, hs[0].cols() + act_dim_);
      qin << hs[j], a2;
      Mat q = target_q1_.fwd(qin).cwiseMin(target_q2_.fwd(qin));
      y.col(j) = b.rew[j] + cfg_.gamma * (Mat::Ones(n, 1) - b.done[j]).cwiseProduct(q);
    }
    return y;
  }

  Mat sac_targets(const SampledBatch& b, std::mt19937_64& rng) const {
    const int T = b.context;
    const Eigen::Index n = b.mask.rows();
    NextSeq s = next_sequences(b);
    auto hs_q = target_critic_stack_.rollout(s.o, s.a, s.r, s.d, s.mask);
    // Next actions come from the live actor; only the critic path is
    // target-tracked under sac.
    auto hs_pi = actor_stack().rollout(s.o, s.a, s.r, s.d, s.mask);
    const double a = std::exp(log_alpha_.value(0, 0));
    Mat y(n, T);
    for (int j = 0; j < T; ++j) {
      Mat out = actor_head_.fwd(hs_pi[j]);
      SquashedSample ss = squashed_gaussian_sample(out.leftCols(act_dim_),
                                                   out.rightCols(act_dim_),
                                                   randn(n, act_dim_, rng));
      Mat qin(n, hs_q[0].cols() + act_dim_);
      qin << hs_q[j], ss.action;
      Mat q = target_q1_.fwd(qin).cwiseMin(target_q2_.fwd(qin)) - a * ss.log_prob;
      y.col(j) = b.rew[j] + cfg_.gamma * (Mat::Ones(n, 1) - b.done[j]).cwiseProduct(q);
    }
    return y;
  }

  Var build_critic_loss(Tape& tp, const SampledBatch& b, const Mat& y) {
    auto hs = critic_stack_.rollout(tp, current_obs(b), current_prev_act(b), b.prev_rew,
                                    b.prev_done, b.mask);
    std::vector<Var> q1s, q2s;
    q1s.reserve(hs.size());
    q2s.reserve(hs.size());
    for (std::size_t j = 0; j < hs.size(); ++j) {
      Var qin = tp.concat_cols({hs[j], tp.constant(b.act[j] / bound_)});
      q1s.push_back(q1_.fwd(tp, qin));
      q2s.push_back(q2_.fwd(tp, qin));
    }
    Var yv = tp.constant(y);
    // Sum of the two critics' masked mean squared TD errors.
    return tp.add(tp.masked_mean(tp.square(tp.sub(tp.concat_cols(q1s), yv)), b.mask),
                  tp.masked_mean(tp.square(tp.sub(tp.concat_cols(q2s), yv)), b.mask));
  }

  // Actor objective: maximize Q1 of the policy's action (td3). The shared
  // trunk stays on the tape so actor gradients flow into it; the separate
  // critic encoder enters as constants, leaving it untouched by this loss.
  Var build_td3_actor_loss(Tape& tp, const SampledBatch& b) {
    std::vector<Var> hs_pi, hs_q;
    rollout_actor_paths(tp, b, hs_pi, hs_q);
    std::vector<Var> qs;
    qs.reserve(hs_pi.size());
    for (std::size_t j = 0; j < hs_pi.size(); ++j) {
      Var pi = tp.tanh(actor_head_.fwd(tp, hs_pi[j]));
      qs.push_back(q1_.fwd(tp, tp.concat_cols({hs_q[j], pi})));
    }
    return tp.scale(tp.masked_mean(tp.concat_cols(qs), b.mask), -1.0);
  }

  // Actor objective (sac): masked mean of alpha*logpi - min(Q1,Q2) with the
  // reparameterized action; alpha enters detached. Optionally emits the
  // masked mean log-probability for the temperature update.
  Var build_sac_actor_loss(Tape& tp, const SampledBatch& b, std::mt19937_64& rng,
                           double* masked_logp) {
    std::vector<Var> hs_pi, hs_q;
    rollout_actor_paths(tp, b, hs_pi, hs_q);
    const double a = std::exp(log_alpha_.value(0, 0));
    const Eigen::Index n = b.mask.rows();
    std::vector<Var> terms;
    terms.reserve(hs_pi.size());
    double lp_sum = 0.0;
    for (std::size_t j = 0; j < hs_pi.size(); ++j) {
      Var out = actor_head_.fwd(tp, hs_pi[j]);
      auto ss = squashed_gaussian_sample(tp, tp.slice_cols(out, 0, act_dim_),
                                         tp.slice_cols(out, act_dim_, act_dim_),
                                         randn(n, act_dim_, rng));
      Var qin = tp.concat_cols({hs_q[j], ss.action});
      Var q = tp.minimum(q1_.fwd(tp, qin), q2_.fwd(tp, qin));
      terms.push_back(tp.sub(tp.scale(ss.log_prob, a), q));
      lp_sum += tp.val(ss.log_prob)
                    .cwiseProduct(b.mask.col(static_cast<Eigen::Index>(j)))
                    .sum();
    }
    if (masked_logp) *masked_logp = lp_sum / b.mask.sum();
    return tp.masked_mean(tp.concat_cols(terms), b.mask);
  }

  void rollout_actor_paths(Tape& tp, const SampledBatch& b, std::vector<Var>& hs_pi,
                           std::vector<Var>& hs_q) {
    auto o = current_obs(b);
    auto a = current_prev_act(b);
    if (actor_stack_opt_) {
      hs_pi = actor_stack_opt_->rollout(tp, o, a, b.prev_rew, b.prev_done, b.mask);
      auto hc = critic_stack_.rollout(o, a, b.prev_rew, b.prev_done, b.mask);
      hs_q.reserve(hc.size());
      for (const Mat& h : hc) hs_q.push_back(tp.constant(h));
    } else {
      hs_pi = critic_stack_.rollout(tp, o, a, b.prev_rew, b.prev_done, b.mask);
      hs_q = hs_pi;
    }
  }

  UpdateStats td3_update(const SampledBatch& b, std::mt19937_64& rng) {
    UpdateStats st;
    st.update_index = update_count_;
    Mat y = td3_targets(b, rng);
    {
      Tape tp;
      Var loss = build_critic_loss(tp, b, y);
      tp.backward(loss);
      st.critic_loss = tp.val(loss)(0, 0);
    }
    if (actor_stack_opt_) st.critic_encoder_grad_norm = grad_norm(critic_rnn_params_);
    opt_critic_.step();

    const bool actor_round = update_count_ % cfg_.policy_delay == 0;
    if (actor_round) {
      Tape tp;
      Var loss = build_td3_actor_loss(tp, b);
      tp.backward(loss);
      st.actor_loss = tp.val(loss)(0, 0);
      if (actor_stack_opt_) st.actor_encoder_grad_norm = grad_norm(actor_rnn_params_);
      opt_actor_.step();
    }
    finish_round(st);
    return st;
  }

  UpdateStats sac_update(const SampledBatch& b, std::mt19937_64& rng) {
    UpdateStats st;
    st.update_index = update_count_;
    Mat y = sac_targets(b, rng);
    {
      Tape tp;
      Var loss = build_critic_loss(tp, b, y);
      tp.backward(loss);
      st.critic_loss = tp.val(loss)(0, 0);
    }
    if (actor_stack_opt_) st.critic_encoder_grad_norm = grad_norm(critic_rnn_params_);
    opt_critic_.step();

    double masked_logp = 0.0;
    {
      Tape tp;
      Var loss = build_sac_actor_loss(tp, b, rng, &masked_logp);
      tp.backward(loss);
      st.actor_loss = tp.val(loss)(0, 0);
    }
    if (actor_stack_opt_) st.actor_encoder_grad_norm = grad_norm(actor_rnn_params_);
    opt_actor_.step();

    // Temperature moves toward the entropy target: log-alpha descends
    // -(E[logpi] + target), so entropy below target raises alpha.
    log_alpha_.grad(0, 0) += -(masked_logp + cfg_.target_entropy);
    opt_alpha_->step();
    st.alpha = std::exp(log_alpha_.value(0, 0));
    finish_round(st);
    return st;
  }

  // Shared-trunk step (single encoder: critic gradients, plus actor
  // gradients on actor rounds), polyak tracking, spillover cleanup.
  void finish_round(UpdateStats& st) {
    if (opt_trunk_) {
      st.critic_encoder_grad_norm = grad_norm(critic_rnn_params_);
      opt_trunk_->step();
    }
    for (std::size_t i = 0; i < polyak_live_.size(); ++i)
      polyak_target_[i]->value =
          (1.0 - cfg_.tau) * polyak_target_[i]->value + cfg_.tau * polyak_live_[i]->value;
    zero_all_grads();
    ++update_count_;
  }
};

}  // namespace rmf
