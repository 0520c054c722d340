#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "rmf/binio.hpp"
#include "rmf/env.hpp"
#include "rmf/error.hpp"
#include "rmf/kernels.hpp"

namespace rmf {

struct Transition {
  Vec obs;
  Vec act;
  double rew = 0.0;
  double done = 0.0;
  Vec next_obs;
};

// One training minibatch of fixed-width subsequences. Channel c at timestep
// t lives in c[t], a (batch x dim) matrix; mask is (batch x context) with a
// 1s-then-0s prefix pattern per row and every masked-out entry zero-filled.
//
// The "previous" channels feed the policy input at each position; the plain
// channels describe the transition taken there, and next_obs its successor
// observation (zero where done = 1, where no bootstrap ever reads it).
struct SampledBatch {
  int batch = 0;
  int context = 0;
  std::vector<Mat> obs, prev_act, prev_rew, prev_done;
  std::vector<Mat> act, rew, done, next_obs;
  Mat mask;
};

// Sequence replay over flat 2-D storage: capacity counts transitions, not
// episodes, so short episodes waste nothing. Episodes stay contiguous; an
// index of (start, length) records their boundaries. Eviction drops whole
// oldest episodes and compacts the arrays so the layout stays packed.
class SequenceReplayBuffer {
 public:
  struct EpisodeRef {
    std::int64_t start = 0;
    std::int64_t len = 0;
  };

  SequenceReplayBuffer(std::int64_t capacity, int obs_dim, int act_dim)
      : capacity_(capacity), obs_dim_(obs_dim), act_dim_(act_dim) {
    if (capacity < 1) throw config_error("replay: capacity must be >= 1");
    if (obs_dim < 1 || act_dim < 1) throw config_error("replay: dims must be positive");
    obs_.resize(static_cast<std::size_t>(capacity) * obs_dim);
    act_.resize(static_cast<std::size_t>(capacity) * act_dim);
    rew_.resize(static_cast<std::size_t>(capacity));
    done_.resize(static_cast<std::size_t>(capacity));
  }

  std::int64_t capacity() const { return capacity_; }
  int obs_dim() const { return obs_dim_; }
  int act_dim() const { return act_dim_; }
  std::int64_t size() const { return total_; }
  std::size_t num_episodes() const { return episodes_.size(); }
  const std::vector<EpisodeRef>& episodes() const { return episodes_; }

  double obs_at(std::int64_t row, int j) const { return obs_[idx(row, j, obs_dim_)]; }
  double act_at(std::int64_t row, int j) const { return act_[idx(row, j, act_dim_)]; }
  double rew_at(std::int64_t row) const { return rew_[static_cast<std::size_t>(row)]; }
  double done_at(std::int64_t row) const { return done_[static_cast<std::size_t>(row)]; }

  // Appends one whole episode, evicting oldest episodes first if the free
  // tail cannot hold it. The trajectory must be internally consistent:
  // done = 0 everywhere except the last transition, and each next_obs must
  // equal the following transition's obs (that is what makes next
  // observations derivable from flat storage).
  void store_episode(const std::vector<Transition>& traj) {
    const std::int64_t L = static_cast<std::int64_t>(traj.size());
    if (L < 1) throw config_error("replay store: empty trajectory");
    if (L > capacity_)
      throw state_error("replay store: episode length " + std::to_string(L) +
                        " exceeds capacity " + std::to_string(capacity_));
    for (std::int64_t k = 0; k < L; ++k) {
      const Transition& tr = traj[static_cast<std::size_t>(k)];
      if (tr.obs.size() != obs_dim_ || tr.next_obs.size() != obs_dim_)
        throw config_error("replay store: observation dim mismatch at position " +
                           std::to_string(k));
      if (tr.act.size() != act_dim_)
        throw config_error("replay store: action dim mismatch at position " + std::to_string(k));
      double want_done = (k == L - 1) ? 1.0 : 0.0;
      if (tr.done != want_done)
        throw config_error("replay store: done flag must be 1 exactly at the final transition");
      if (k + 1 < L &&
          (traj[static_cast<std::size_t>(k)].next_obs - traj[static_cast<std::size_t>(k + 1)].obs)
                  .cwiseAbs()
                  .maxCoeff() != 0.0)
        throw config_error("replay store: next_obs does not chain to the following obs at " +
                           std::to_string(k));
    }

    while (total_ + L > capacity_) evict_oldest();

    for (std::int64_t k = 0; k < L; ++k) {
      const Transition& tr = traj[static_cast<std::size_t>(k)];
      std::int64_t row = total_ + k;
      for (int j = 0; j < obs_dim_; ++j) obs_[idx(row, j, obs_dim_)] = tr.obs(j);
      for (int j = 0; j < act_dim_; ++j) act_[idx(row, j, act_dim_)] = tr.act(j);
      rew_[static_cast<std::size_t>(row)] = tr.rew;
      done_[static_cast<std::size_t>(row)] = tr.done;
    }
    episodes_.push_back({total_, L});
    total_ += L;
  }

  // Each row: one episode uniformly, one start position uniformly within it,
  // then up to context_len transitions never crossing the episode end. Valid
  // prefix marked by the mask; everything past it stays zero.
  SampledBatch sample_subsequences(int batch_size, int context_len, std::mt19937_64& rng) const {
    if (episodes_.empty()) throw state_error("replay sample: buffer holds no episodes");
    if (batch_size < 1 || context_len < 1)
      throw config_error("replay sample: batch and context must be >= 1");

    SampledBatch b;
    b.batch = batch_size;
    b.context = context_len;
    auto zeros = [&](int dim) { return std::vector<Mat>(context_len, Mat::Zero(batch_size, dim)); };
    b.obs = zeros(obs_dim_);
    b.prev_act = zeros(act_dim_);
    b.prev_rew = zeros(1);
    b.prev_done = zeros(1);
    b.act = zeros(act_dim_);
    b.rew = zeros(1);
    b.done = zeros(1);
    b.next_obs = zeros(obs_dim_);
    b.mask = Mat::Zero(batch_size, context_len);

    std::uniform_int_distribution<std::size_t> pick_ep(0, episodes_.size() - 1);
    for (int row = 0; row < batch_size; ++row) {
      const EpisodeRef ep = episodes_[pick_ep(rng)];
      std::int64_t s =
          std::uniform_int_distribution<std::int64_t>(0, ep.len - 1)(rng);
      std::int64_t valid = std::min<std::int64_t>(context_len, ep.len - s);
      for (std::int64_t j = 0; j < valid; ++j) {
        std::int64_t g = ep.start + s + j;
        for (int d = 0; d < obs_dim_; ++d) b.obs[j](row, d) = obs_[idx(g, d, obs_dim_)];
        for (int d = 0; d < act_dim_; ++d) b.act[j](row, d) = act_[idx(g, d, act_dim_)];
        b.rew[j](row, 0) = rew_[static_cast<std::size_t>(g)];
        b.done[j](row, 0) = done_[static_cast<std::size_t>(g)];
        if (done_[static_cast<std::size_t>(g)] == 0.0)
          for (int d = 0; d < obs_dim_; ++d)
            b.next_obs[j](row, d) = obs_[idx(g + 1, d, obs_dim_)];
        if (s + j > 0) {
          for (int d = 0; d < act_dim_; ++d)
            b.prev_act[j](row, d) = act_[idx(g - 1, d, act_dim_)];
          b.prev_rew[j](row, 0) = rew_[static_cast<std::size_t>(g - 1)];
          // Previous-done stays 0 at the subsequence start: the zero initial
          // recurrent state treats position 0 as a fresh context window.
          if (j > 0) b.prev_done[j](row, 0) = done_[static_cast<std::size_t>(g - 1)];
        }
        b.mask(row, j) = 1.0;
      }
    }
    return b;
  }

  // Bytes held, dominated by capacity x per-transition width; episode
  // bookkeeping rides on top but never scales with max episode length.
  std::size_t memory_footprint() const {
    std::size_t arrays = (obs_.capacity() + act_.capacity() + rew_.capacity() +
                          done_.capacity()) *
                         sizeof(double);
    return sizeof(*this) + arrays + episodes_.capacity() * sizeof(EpisodeRef);
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("replay save: cannot open " + path);
    binio::write_u64(os, kMagic);
    binio::write_u64(os, static_cast<std::uint64_t>(capacity_));
    binio::write_u64(os, static_cast<std::uint64_t>(obs_dim_));
    binio::write_u64(os, static_cast<std::uint64_t>(act_dim_));
    binio::write_u64(os, static_cast<std::uint64_t>(total_));
    binio::write_u64(os, episodes_.size());
    for (const EpisodeRef& e : episodes_) {
      binio::write_u64(os, static_cast<std::uint64_t>(e.start));
      binio::write_u64(os, static_cast<std::uint64_t>(e.len));
    }
    auto dump = [&](const std::vector<double>& v, std::int64_t n) {
      for (std::int64_t i = 0; i < n; ++i) binio::write_f64(os, v[static_cast<std::size_t>(i)]);
    };
    dump(obs_, total_ * obs_dim_);
    dump(act_, total_ * act_dim_);
    dump(rew_, total_);
    dump(done_, total_);
    if (!os) throw io_error("replay save: write failed for " + path);
  }

  static SequenceReplayBuffer load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("replay load: cannot open " + path);
    if (binio::read_u64(is, "magic") != kMagic)
      throw io_error("replay load: " + path + " is not a replay snapshot");
    std::int64_t capacity = static_cast<std::int64_t>(binio::read_u64(is, "capacity"));
    int obs_dim = static_cast<int>(binio::read_u64(is, "obs_dim"));
    int act_dim = static_cast<int>(binio::read_u64(is, "act_dim"));
    if (capacity < 1 || obs_dim < 1 || act_dim < 1 || capacity > (1ll << 40))
      throw io_error("replay load: implausible header in " + path);
    SequenceReplayBuffer buf(capacity, obs_dim, act_dim);
    buf.total_ = static_cast<std::int64_t>(binio::read_u64(is, "size"));
    std::uint64_t n_eps = binio::read_u64(is, "episode count");
    if (buf.total_ < 0 || buf.total_ > capacity || n_eps > static_cast<std::uint64_t>(capacity))
      throw io_error("replay load: corrupt counts in " + path);
    std::int64_t expect_start = 0;
    for (std::uint64_t i = 0; i < n_eps; ++i) {
      EpisodeRef e;
      e.start = static_cast<std::int64_t>(binio::read_u64(is, "episode start"));
      e.len = static_cast<std::int64_t>(binio::read_u64(is, "episode length"));
      if (e.start != expect_start || e.len < 1)
        throw io_error("replay load: episode table not packed in " + path);
      expect_start += e.len;
      buf.episodes_.push_back(e);
    }
    if (expect_start != buf.total_)
      throw io_error("replay load: episode table does not cover stored data in " + path);
    auto slurp = [&](std::vector<double>& v, std::int64_t n, const char* what) {
      for (std::int64_t i = 0; i < n; ++i)
        v[static_cast<std::size_t>(i)] = binio::read_f64(is, what);
    };
    slurp(buf.obs_, buf.total_ * obs_dim, "obs body");
    slurp(buf.act_, buf.total_ * act_dim, "act body");
    slurp(buf.rew_, buf.total_, "rew body");
    slurp(buf.done_, buf.total_, "done body");
    return buf;
  }

 private:
  static constexpr std::uint64_t kMagic = 0x31465542464d52ull;  // "RMFBUF1\0" LE

  std::int64_t capacity_;
  int obs_dim_, act_dim_;
  std::vector<double> obs_, act_, rew_, done_;
  std::vector<EpisodeRef> episodes_;
  std::int64_t total_ = 0;

  static std::size_t idx(std::int64_t row, int col, int width) {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(col);
  }

  void evict_oldest() {
    if (episodes_.empty()) throw state_error("replay evict: nothing to evict");
    std::int64_t f = episodes_.front().len;
    std::int64_t keep = total_ - f;
    auto shift = [&](std::vector<double>& v, int width) {
      std::memmove(v.data(), v.data() + f * width,
                   static_cast<std::size_t>(keep) * width * sizeof(double));
    };
    shift(obs_, obs_dim_);
    shift(act_, act_dim_);
    shift(rew_, 1);
    shift(done_, 1);
    episodes_.erase(episodes_.begin());
    for (EpisodeRef& e : episodes_) e.start -= f;
    total_ = keep;
  }
};

}  // namespace rmf
