#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>

namespace rmf {

// Batched value type used throughout: rows = batch, cols = features.
using Mat = Eigen::MatrixXd;

// Elementwise kernels shared by the recorded (tape) and plain (lean) forward
// paths so both produce bit-identical values for the same inputs.

inline Mat k_sigmoid(const Mat& x) {
  return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

inline Mat k_tanh(const Mat& x) { return x.array().tanh().matrix(); }

inline Mat k_relu(const Mat& x) { return x.cwiseMax(0.0); }

inline Mat k_exp(const Mat& x) { return x.array().exp().matrix(); }

// log(1 + e^x) without overflow for large |x|.
inline Mat k_softplus(const Mat& x) {
  return (x.cwiseMax(0.0).array() + (-x.array().abs()).exp().log1p()).matrix();
}

inline Mat k_clamp(const Mat& x, double lo, double hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

inline Mat randn(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = d(rng);
  return m;
}

inline Mat rand_uniform(Eigen::Index rows, Eigen::Index cols, double lo, double hi,
                        std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(lo, hi);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = d(rng);
  return m;
}

}  // namespace rmf
