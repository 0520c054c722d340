#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "rmf/tape.hpp"

namespace rmftest {

// Central difference of f with respect to one parameter entry, h = 1e-5.
// f must rebuild the scalar loss from scratch (it sees the perturbed value).
inline double fd_entry(rmf::Parameter& p, Eigen::Index i, Eigen::Index j,
                       const std::function<double()>& f, double h = 1e-5) {
  double orig = p.value(i, j);
  p.value(i, j) = orig + h;
  double fp = f();
  p.value(i, j) = orig - h;
  double fm = f();
  p.value(i, j) = orig;
  return (fp - fm) / (2.0 * h);
}

// |a - b| / max(|a|, |b|, 1): relative for large values, absolute near zero.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

// Sweeps every entry of every listed parameter: analytic gradient must
// already sit in Parameter::grad (one backward pass before the call).
// Returns the worst relative error seen.
inline double max_grad_err(const std::vector<rmf::Parameter*>& params,
                           const std::function<double()>& f, double h = 1e-5) {
  double worst = 0.0;
  for (rmf::Parameter* p : params) {
    for (Eigen::Index i = 0; i < p->value.rows(); ++i) {
      for (Eigen::Index j = 0; j < p->value.cols(); ++j) {
        double fd = fd_entry(*p, i, j, f, h);
        worst = std::max(worst, rel_err(p->grad(i, j), fd));
      }
    }
  }
  return worst;
}

}  // namespace rmftest
