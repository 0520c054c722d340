#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rmf/error.hpp"
#include "rmf/kernels.hpp"

namespace rmf {

// Trainable tensor. `grad` accumulates across backward passes until the
// optimizer consumes and zeroes it.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;

  Parameter() = default;
  Parameter(std::string n, Mat v)
      : name(std::move(n)), value(std::move(v)), grad(Mat::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(); }
};

// Handle into a Tape. Valid only for the tape that produced it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Record-then-replay reverse-mode tape. Nodes are appended in forward order;
// backward() walks them in reverse, so every node's gradient is complete
// before its backward closure fires. Closures address parents by id, never by
// reference: the node vector may reallocate during recording.
class Tape {
 public:
  // Untracked input. Gradient never flows into it.
  Var constant(Mat v) { return push(std::move(v), false); }

  // Tracked leaf. Snapshots p.value; backward() adds the leaf gradient into
  // p.grad. Memoized per tape, so reuse across timesteps hits one node.
  Var leaf(Parameter& p) {
    auto it = leaf_cache_.find(&p);
    if (it != leaf_cache_.end()) return it->second;
    Var v = push(p.value, true);
    nodes_[v.id].param = &p;
    leaf_cache_.emplace(&p, v);
    return v;
  }

  const Mat& val(Var v) const { return nodes_.at(v.id).value; }
  const Mat& grad_of(Var v) const { return nodes_.at(v.id).grad; }
  std::size_t size() const { return nodes_.size(); }

  Var add(Var a, Var b) {
    check_same_shape(a, b, "add");
    Var out = push(val(a) + val(b), tracked(a) || tracked(b));
    record(out, [a, b](Tape& t, const Mat& g) {
      t.accum(a, g);
      t.accum(b, g);
    });
    return out;
  }

  Var sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    Var out = push(val(a) - val(b), tracked(a) || tracked(b));
    record(out, [a, b](Tape& t, const Mat& g) {
      t.accum(a, g);
      t.accum(b, -g);
    });
    return out;
  }

  Var mul(Var a, Var b) {
    check_same_shape(a, b, "mul");
    Var out = push(val(a).cwiseProduct(val(b)), tracked(a) || tracked(b));
    record(out, [a, b](Tape& t, const Mat& g) {
      t.accum(a, g.cwiseProduct(t.val(b)));
      t.accum(b, g.cwiseProduct(t.val(a)));
    });
    return out;
  }

  Var div(Var a, Var b) {
    check_same_shape(a, b, "div");
    Var out = push(val(a).cwiseQuotient(val(b)), tracked(a) || tracked(b));
    record(out, [a, b, out](Tape& t, const Mat& g) {
      t.accum(a, g.cwiseQuotient(t.val(b)));
      t.accum(b, -g.cwiseProduct(t.val(out)).cwiseQuotient(t.val(b)));
    });
    return out;
  }

  Var matmul(Var a, Var b) {
    if (val(a).cols() != val(b).rows())
      throw config_error("matmul: inner dimensions disagree (" + shape_str(a) + " vs " +
                         shape_str(b) + ")");
    Var out = push(val(a) * val(b), tracked(a) || tracked(b));
    record(out, [a, b](Tape& t, const Mat& g) {
      t.accum(a, g * t.val(b).transpose());
      t.accum(b, t.val(a).transpose() * g);
    });
    return out;
  }

  // a: n x c, bias: 1 x c, broadcast over rows.
  Var add_rowwise(Var a, Var bias) {
    if (val(bias).rows() != 1 || val(bias).cols() != val(a).cols())
      throw config_error("add_rowwise: bias must be 1 x cols(a)");
    Mat v = val(a);
    v.rowwise() += val(bias).row(0);
    Var out = push(std::move(v), tracked(a) || tracked(bias));
    record(out, [a, bias](Tape& t, const Mat& g) {
      t.accum(a, g);
      t.accum(bias, g.colwise().sum());
    });
    return out;
  }

  Var sigmoid(Var a) {
    Var out = push(k_sigmoid(val(a)), tracked(a));
    record(out, [a, out](Tape& t, const Mat& g) {
      const Mat& s = t.val(out);
      t.accum(a, (g.array() * s.array() * (1.0 - s.array())).matrix());
    });
    return out;
  }

  Var tanh(Var a) {
    Var out = push(k_tanh(val(a)), tracked(a));
    record(out, [a, out](Tape& t, const Mat& g) {
      const Mat& y = t.val(out);
      t.accum(a, (g.array() * (1.0 - y.array().square())).matrix());
    });
    return out;
  }

  Var relu(Var a) {
    Var out = push(k_relu(val(a)), tracked(a));
    record(out, [a](Tape& t, const Mat& g) {
      t.accum(a, (g.array() * (t.val(a).array() > 0.0).cast<double>()).matrix());
    });
    return out;
  }

  Var exp(Var a) {
    Var out = push(k_exp(val(a)), tracked(a));
    record(out, [a, out](Tape& t, const Mat& g) { t.accum(a, g.cwiseProduct(t.val(out))); });
    return out;
  }

  Var softplus(Var a) {
    Var out = push(k_softplus(val(a)), tracked(a));
    record(out, [a](Tape& t, const Mat& g) { t.accum(a, g.cwiseProduct(k_sigmoid(t.val(a)))); });
    return out;
  }

  Var square(Var a) {
    Var out = push(val(a).array().square().matrix(), tracked(a));
    record(out, [a](Tape& t, const Mat& g) { t.accum(a, 2.0 * g.cwiseProduct(t.val(a))); });
    return out;
  }

  Var scale(Var a, double k) {
    Var out = push(k * val(a), tracked(a));
    record(out, [a, k](Tape& t, const Mat& g) { t.accum(a, k * g); });
    return out;
  }

  Var offset(Var a, double k) {
    Var out = push((val(a).array() + k).matrix(), tracked(a));
    record(out, [a](Tape& t, const Mat& g) { t.accum(a, g); });
    return out;
  }

  // Subgradient 0 where the input sits at or beyond a bound.
  Var clamp(Var a, double lo, double hi) {
    Var out = push(k_clamp(val(a), lo, hi), tracked(a));
    record(out, [a, lo, hi](Tape& t, const Mat& g) {
      const auto& x = t.val(a).array();
      t.accum(a, (g.array() * (x > lo && x < hi).cast<double>()).matrix());
    });
    return out;
  }

  // Elementwise min; ties route the gradient to `a`.
  Var minimum(Var a, Var b) {
    check_same_shape(a, b, "minimum");
    Var out = push(val(a).cwiseMin(val(b)), tracked(a) || tracked(b));
    record(out, [a, b](Tape& t, const Mat& g) {
      Mat take_a = (t.val(a).array() <= t.val(b).array()).cast<double>();
      t.accum(a, g.cwiseProduct(take_a));
      t.accum(b, g.cwiseProduct((1.0 - take_a.array()).matrix()));
    });
    return out;
  }

  // Elementwise multiply by a fixed matrix (masks, (1-d) factors).
  Var hadamard_const(Var a, const Mat& m) {
    if (m.rows() != val(a).rows() || m.cols() != val(a).cols())
      throw config_error("hadamard_const: shape mismatch");
    Var out = push(val(a).cwiseProduct(m), tracked(a));
    record(out, [a, m](Tape& t, const Mat& g) { t.accum(a, g.cwiseProduct(m)); });
    return out;
  }

  Var concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw config_error("concat_cols: empty input");
    Eigen::Index rows = val(xs[0]).rows(), cols = 0;
    bool need = false;
    for (Var x : xs) {
      if (val(x).rows() != rows) throw config_error("concat_cols: row mismatch");
      cols += val(x).cols();
      need = need || tracked(x);
    }
    Mat v(rows, cols);
    Eigen::Index at = 0;
    for (Var x : xs) {
      v.middleCols(at, val(x).cols()) = val(x);
      at += val(x).cols();
    }
    Var out = push(std::move(v), need);
    record(out, [xs](Tape& t, const Mat& g) {
      Eigen::Index at = 0;
      for (Var x : xs) {
        Eigen::Index w = t.val(x).cols();
        t.accum(x, g.middleCols(at, w));
        at += w;
      }
    });
    return out;
  }

  Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count) {
    if (begin < 0 || count < 0 || begin + count > val(a).cols())
      throw config_error("slice_cols: range out of bounds");
    Var out = push(val(a).middleCols(begin, count), tracked(a));
    record(out, [a, begin, count](Tape& t, const Mat& g) {
      Mat full = Mat::Zero(t.val(a).rows(), t.val(a).cols());
      full.middleCols(begin, count) = g;
      t.accum(a, full);
    });
    return out;
  }

  // n x c -> n x 1 row sums.
  Var sum_cols(Var a) {
    Var out = push(val(a).rowwise().sum(), tracked(a));
    record(out, [a](Tape& t, const Mat& g) {
      t.accum(a, g.replicate(1, t.val(a).cols()));
    });
    return out;
  }

  Var sum_all(Var a) {
    Mat v(1, 1);
    v(0, 0) = val(a).sum();
    Var out = push(std::move(v), tracked(a));
    record(out, [a](Tape& t, const Mat& g) {
      t.accum(a, Mat::Constant(t.val(a).rows(), t.val(a).cols(), g(0, 0)));
    });
    return out;
  }

  Var mean_all(Var a) {
    double n = static_cast<double>(val(a).size());
    return scale(sum_all(a), 1.0 / n);
  }

  // sum(a .* mask) / sum(mask). Mask entries are 0/1 validity weights.
  Var masked_mean(Var a, const Mat& mask) {
    if (mask.rows() != val(a).rows() || mask.cols() != val(a).cols())
      throw config_error("masked_mean: mask shape mismatch");
    double denom = mask.sum();
    if (!(denom > 0.0)) throw state_error("masked_mean: mask selects nothing");
    return scale(sum_all(hadamard_const(a, mask)), 1.0 / denom);
  }

  // Seeds d(loss)/d(loss) = 1, sweeps the tape in reverse, then deposits leaf
  // gradients into their Parameters. `loss` must be 1 x 1 and finite.
  void backward(Var loss) {
    Node& ln = nodes_.at(loss.id);
    if (ln.value.rows() != 1 || ln.value.cols() != 1)
      throw state_error("backward: loss must be a scalar");
    if (!std::isfinite(ln.value(0, 0)))
      throw divergence_error("backward: loss is not finite");
    ensure_grad(loss.id);
    ln.grad(0, 0) += 1.0;
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.requires_grad || n.grad.size() == 0 || !n.back) continue;
      n.back(*this, n.grad);
    }
    for (Node& n : nodes_) {
      if (n.param && n.grad.size() != 0) n.param->grad += n.grad;
    }
  }

 private:
  struct Node {
    Mat value;
    Mat grad;  // empty until the node is reached by backward
    bool requires_grad = false;
    Parameter* param = nullptr;
    std::function<void(Tape&, const Mat&)> back;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, Var> leaf_cache_;

  bool tracked(Var v) const { return nodes_.at(v.id).requires_grad; }

  Var push(Mat v, bool req) {
    Node n;
    n.value = std::move(v);
    n.requires_grad = req;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  void record(Var out, std::function<void(Tape&, const Mat&)> fn) {
    if (nodes_[out.id].requires_grad) nodes_[out.id].back = std::move(fn);
  }

  void ensure_grad(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  }

  template <class Expr>
  void accum(Var v, const Expr& delta) {
    Node& n = nodes_.at(v.id);
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.grad += delta;
  }

  void check_same_shape(Var a, Var b, const char* op) const {
    if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
      throw config_error(std::string(op) + ": shape mismatch (" + shape_str(a) + " vs " +
                         shape_str(b) + ")");
  }

  std::string shape_str(Var v) const {
    return std::to_string(val(v).rows()) + "x" + std::to_string(val(v).cols());
  }
};

}  // namespace rmf
