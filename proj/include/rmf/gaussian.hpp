#pragma once

#include <cmath>
#include <utility>

#include "rmf/kernels.hpp"
#include "rmf/tape.hpp"

namespace rmf {

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2*pi)
inline constexpr double kLog2 = 0.69314718055994530942;

// Sample from tanh(Normal(mean, exp(log_std))) with externally supplied
// standard-normal noise, plus the log-density of the squashed sample.
//
// Per dimension, with u = mean + std .* eps the pre-squash draw:
//   log p(a) = -0.5*((u - mean)/std)^2 - log_std - 0.5*log(2*pi)
//              - 2*(log 2 - u - softplus(-2u))
// summed over action dimensions. The last term is log(1 - tanh(u)^2) in a
// form that stays finite for large |u|. log_std is clamped to [-20, 2]
// before use. Actions land strictly inside (-1, 1).
struct SquashedSample {
  Mat pre;       // n x d pre-squash draw
  Mat action;    // n x d, tanh(pre)
  Mat log_prob;  // n x 1
};

inline SquashedSample squashed_gaussian_sample(const Mat& mean, const Mat& log_std,
                                               const Mat& eps) {
  if (mean.rows() != log_std.rows() || mean.cols() != log_std.cols() ||
      mean.rows() != eps.rows() || mean.cols() != eps.cols())
    throw config_error("squashed_gaussian_sample: shape mismatch");
  Mat ls = k_clamp(log_std, kLogStdMin, kLogStdMax);
  Mat sd = k_exp(ls);
  Mat pre = mean + sd.cwiseProduct(eps);
  Mat z = (pre - mean).cwiseQuotient(sd);
  Mat corr = k_softplus(-2.0 * pre);
  Mat per_dim = (-0.5 * z.array().square() - ls.array() - kHalfLog2Pi -
                 2.0 * (kLog2 - pre.array() - corr.array()))
                    .matrix();
  SquashedSample out;
  out.pre = std::move(pre);
  out.action = k_tanh(out.pre);
  out.log_prob = per_dim.rowwise().sum();
  return out;
}

// Tape twin. Gradients flow into mean and log_std through both the sample
// and the density (reparameterization), with eps held constant.
struct SquashedSampleVar {
  Var pre;
  Var action;
  Var log_prob;
};

inline SquashedSampleVar squashed_gaussian_sample(Tape& t, Var mean, Var log_std,
                                                  const Mat& eps) {
  if (t.val(mean).rows() != eps.rows() || t.val(mean).cols() != eps.cols())
    throw config_error("squashed_gaussian_sample: eps shape mismatch");
  Var ls = t.clamp(log_std, kLogStdMin, kLogStdMax);
  Var sd = t.exp(ls);
  Var pre = t.add(mean, t.hadamard_const(sd, eps));
  Var z = t.div(t.sub(pre, mean), sd);
  Var corr = t.softplus(t.scale(pre, -2.0));
  // -0.5 z^2 - ls - 0.5 log(2pi) - 2*(log2 - pre - corr)
  Var per_dim = t.sub(t.sub(t.scale(t.square(z), -0.5), t.offset(ls, kHalfLog2Pi)),
                      t.offset(t.scale(t.add(pre, corr), -2.0), 2.0 * kLog2));
  SquashedSampleVar out;
  out.pre = pre;
  out.action = t.tanh(pre);
  out.log_prob = t.sum_cols(per_dim);
  return out;
}

// Deterministic head output used for evaluation rollouts.
inline Mat squashed_mean_action(const Mat& mean) { return k_tanh(mean); }

}  // namespace rmf
