#pragma once

#include <string>
#include <vector>

#include "rmf/error.hpp"
#include "rmf/kernels.hpp"
#include "rmf/tape.hpp"

namespace rmf {

// Adam with bias correction over a fixed group of parameters.
// step() consumes Parameter::grad and zeroes it afterward; accumulators and
// the step counter are serialized with agent snapshots so training resumes
// identically.
class Adam {
 public:
  Adam() = default;

  Adam(std::vector<Parameter*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (Parameter* p : params_) {
      m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Parameter& p = *params_[i];
      if (!p.grad.allFinite())
        throw divergence_error("adam: non-finite gradient in " + p.name);
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
      Mat mhat = m_[i] / bc1;
      Mat vhat = v_[i] / bc2;
      p.value.array() -= lr_ * mhat.array() / (vhat.array().sqrt() + eps_);
      p.grad.setZero();
    }
  }

  void zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
  }

  long long step_count() const { return t_; }
  double lr() const { return lr_; }
  const std::vector<Parameter*>& params() const { return params_; }
  const Mat& first_moment(std::size_t i) const { return m_[i]; }
  const Mat& second_moment(std::size_t i) const { return v_[i]; }

  // Snapshot restore hooks; shapes must already match.
  void restore(long long t, std::vector<Mat> m, std::vector<Mat> v) {
    if (m.size() != params_.size() || v.size() != params_.size())
      throw io_error("adam restore: accumulator count mismatch");
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (m[i].rows() != m_[i].rows() || m[i].cols() != m_[i].cols() ||
          v[i].rows() != v_[i].rows() || v[i].cols() != v_[i].cols())
        throw io_error("adam restore: accumulator shape mismatch for " + params_[i]->name);
    }
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  std::vector<Parameter*> params_;
  std::vector<Mat> m_, v_;
  long long t_ = 0;
  double lr_ = 0.0, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
};

// Global L2 norm over a parameter group's current gradients.
inline double grad_norm(const std::vector<Parameter*>& params) {
  double sq = 0.0;
  for (const Parameter* p : params) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

}  // namespace rmf
