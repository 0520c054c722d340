#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "rmf/kernels.hpp"
#include "rmf/tape.hpp"

namespace rmf {

// Dense layer, y = x * W + b with x of shape n x in, W in x out, b 1 x out.
// Weights and bias init uniform(-1/sqrt(in), 1/sqrt(in)).
struct Linear {
  Parameter W;
  Parameter b;

  static Linear make(int in, int out, const std::string& name, std::mt19937_64& rng) {
    if (in <= 0 || out <= 0) throw config_error("linear " + name + ": dims must be positive");
    double s = 1.0 / std::sqrt(static_cast<double>(in));
    Linear l;
    l.W = Parameter(name + ".W", rand_uniform(in, out, -s, s, rng));
    l.b = Parameter(name + ".b", rand_uniform(1, out, -s, s, rng));
    return l;
  }

  int in_dim() const { return static_cast<int>(W.value.rows()); }
  int out_dim() const { return static_cast<int>(W.value.cols()); }

  Mat fwd(const Mat& x) const {
    if (x.cols() != W.value.rows())
      throw config_error("linear " + W.name + ": input has " + std::to_string(x.cols()) +
                         " features, expected " + std::to_string(W.value.rows()));
    Mat y = x * W.value;
    y.rowwise() += b.value.row(0);
    return y;
  }

  Var fwd(Tape& t, Var x) {
    if (t.val(x).cols() != W.value.rows())
      throw config_error("linear " + W.name + ": input has " + std::to_string(t.val(x).cols()) +
                         " features, expected " + std::to_string(W.value.rows()));
    return t.add_rowwise(t.matmul(x, t.leaf(W)), t.leaf(b));
  }

  void collect(std::vector<Parameter*>& out) {
    out.push_back(&W);
    out.push_back(&b);
  }
};

// Recurrent state threaded through an episode or subsequence. `cell` is
// engaged for LSTM and must be absent for GRU; both carry n x hidden values.
struct RnnState {
  Mat hidden;
  std::optional<Mat> cell;
};

// Tape-side twin of RnnState.
struct RnnStateVar {
  Var hidden;
  std::optional<Var> cell;
};

// LSTM cell. Gate order inside the fused matrices is [i f g o]:
//   i = sigmoid(.)  f = sigmoid(.)  g = tanh(.)  o = sigmoid(.)
//   c' = f .* c + i .* g
//   h' = o .* tanh(c')
struct LstmCell {
  Parameter Wx;  // in x 4H
  Parameter Wh;  // H x 4H
  Parameter b;   // 1 x 4H
  int hidden = 0;

  static LstmCell make(int in, int hidden, const std::string& name, std::mt19937_64& rng) {
    if (in <= 0 || hidden <= 0) throw config_error("lstm " + name + ": dims must be positive");
    LstmCell c;
    c.hidden = hidden;
    double sx = 1.0 / std::sqrt(static_cast<double>(in));
    double sh = 1.0 / std::sqrt(static_cast<double>(hidden));
    c.Wx = Parameter(name + ".Wx", rand_uniform(in, 4 * hidden, -sx, sx, rng));
    c.Wh = Parameter(name + ".Wh", rand_uniform(hidden, 4 * hidden, -sh, sh, rng));
    c.b = Parameter(name + ".b", rand_uniform(1, 4 * hidden, -sh, sh, rng));
    return c;
  }

  void step(const Mat& x, Mat& h, Mat& c) const {
    Mat pre = x * Wx.value + h * Wh.value;
    pre.rowwise() += b.value.row(0);
    Mat i = k_sigmoid(pre.middleCols(0, hidden));
    Mat f = k_sigmoid(pre.middleCols(hidden, hidden));
    Mat g = k_tanh(pre.middleCols(2 * hidden, hidden));
    Mat o = k_sigmoid(pre.middleCols(3 * hidden, hidden));
    c = f.cwiseProduct(c) + i.cwiseProduct(g);
    h = o.cwiseProduct(k_tanh(c));
  }

  void step(Tape& t, Var x, RnnStateVar& s) {
    Var pre = t.add_rowwise(t.add(t.matmul(x, t.leaf(Wx)), t.matmul(s.hidden, t.leaf(Wh))),
                            t.leaf(b));
    Var i = t.sigmoid(t.slice_cols(pre, 0, hidden));
    Var f = t.sigmoid(t.slice_cols(pre, hidden, hidden));
    Var g = t.tanh(t.slice_cols(pre, 2 * hidden, hidden));
    Var o = t.sigmoid(t.slice_cols(pre, 3 * hidden, hidden));
    Var c = t.add(t.mul(f, *s.cell), t.mul(i, g));
    s.cell = c;
    s.hidden = t.mul(o, t.tanh(c));
  }

  void collect(std::vector<Parameter*>& out) {
    out.push_back(&Wx);
    out.push_back(&Wh);
    out.push_back(&b);
  }
};

// GRU cell. Gate order inside the fused matrices is [z r n]:
//   z = sigmoid(.)  r = sigmoid(.)
//   n  = tanh(Wn x + r .* (Un h) + bn)   (single bias, outside the r product)
//   h' = (1 - z) .* n + z .* h
struct GruCell {
  Parameter Wx;  // in x 3H
  Parameter Wh;  // H x 3H
  Parameter b;   // 1 x 3H
  int hidden = 0;

  static GruCell make(int in, int hidden, const std::string& name, std::mt19937_64& rng) {
    if (in <= 0 || hidden <= 0) throw config_error("gru " + name + ": dims must be positive");
    GruCell c;
    c.hidden = hidden;
    double sx = 1.0 / std::sqrt(static_cast<double>(in));
    double sh = 1.0 / std::sqrt(static_cast<double>(hidden));
    c.Wx = Parameter(name + ".Wx", rand_uniform(in, 3 * hidden, -sx, sx, rng));
    c.Wh = Parameter(name + ".Wh", rand_uniform(hidden, 3 * hidden, -sh, sh, rng));
    c.b = Parameter(name + ".b", rand_uniform(1, 3 * hidden, -sh, sh, rng));
    return c;
  }

  void step(const Mat& x, Mat& h) const {
    Mat px = x * Wx.value;
    px.rowwise() += b.value.row(0);
    Mat ph = h * Wh.value;
    Mat z = k_sigmoid(px.middleCols(0, hidden) + ph.middleCols(0, hidden));
    Mat r = k_sigmoid(px.middleCols(hidden, hidden) + ph.middleCols(hidden, hidden));
    Mat n = k_tanh(px.middleCols(2 * hidden, hidden) +
                   r.cwiseProduct(ph.middleCols(2 * hidden, hidden)));
    h = (1.0 - z.array()).matrix().cwiseProduct(n) + z.cwiseProduct(h);
  }

  void step(Tape& t, Var x, RnnStateVar& s) {
    Var px = t.add_rowwise(t.matmul(x, t.leaf(Wx)), t.leaf(b));
    Var ph = t.matmul(s.hidden, t.leaf(Wh));
    Var z = t.sigmoid(t.add(t.slice_cols(px, 0, hidden), t.slice_cols(ph, 0, hidden)));
    Var r = t.sigmoid(t.add(t.slice_cols(px, hidden, hidden), t.slice_cols(ph, hidden, hidden)));
    Var n = t.tanh(t.add(t.slice_cols(px, 2 * hidden, hidden),
                         t.mul(r, t.slice_cols(ph, 2 * hidden, hidden))));
    Var one_minus_z = t.offset(t.scale(z, -1.0), 1.0);
    s.hidden = t.add(t.mul(one_minus_z, n), t.mul(z, s.hidden));
  }

  void collect(std::vector<Parameter*>& out) {
    out.push_back(&Wx);
    out.push_back(&Wh);
    out.push_back(&b);
  }
};

enum class EncoderKind { lstm, gru };

// Dispatching wrapper over the two cell types. Owns initial-state creation
// and validates the hidden/cell pairing before every step.
class RnnEncoder {
 public:
  RnnEncoder() = default;

  static RnnEncoder make(EncoderKind kind, int in, int hidden, const std::string& name,
                         std::mt19937_64& rng) {
    RnnEncoder e;
    e.kind_ = kind;
    e.hidden_ = hidden;
    if (kind == EncoderKind::lstm)
      e.cell_.emplace<LstmCell>(LstmCell::make(in, hidden, name, rng));
    else
      e.cell_.emplace<GruCell>(GruCell::make(in, hidden, name, rng));
    return e;
  }

  EncoderKind kind() const { return kind_; }
  int hidden_dim() const { return hidden_; }

  RnnState initial_state(Eigen::Index batch) const {
    RnnState s;
    s.hidden = Mat::Zero(batch, hidden_);
    if (kind_ == EncoderKind::lstm) s.cell = Mat::Zero(batch, hidden_);
    return s;
  }

  RnnStateVar initial_state(Tape& t, Eigen::Index batch) const {
    RnnStateVar s;
    s.hidden = t.constant(Mat::Zero(batch, hidden_));
    if (kind_ == EncoderKind::lstm) s.cell = t.constant(Mat::Zero(batch, hidden_));
    return s;
  }

  void step(const Mat& x, RnnState& s) const {
    validate(s.hidden.rows(), s.hidden.cols(), s.cell.has_value());
    if (kind_ == EncoderKind::lstm)
      std::get<LstmCell>(cell_).step(x, s.hidden, *s.cell);
    else
      std::get<GruCell>(cell_).step(x, s.hidden);
  }

  void step(Tape& t, Var x, RnnStateVar& s) {
    validate(t.val(s.hidden).rows(), t.val(s.hidden).cols(), s.cell.has_value());
    if (kind_ == EncoderKind::lstm)
      std::get<LstmCell>(cell_).step(t, x, s);
    else
      std::get<GruCell>(cell_).step(t, x, s);
  }

  void collect(std::vector<Parameter*>& out) {
    if (kind_ == EncoderKind::lstm)
      std::get<LstmCell>(cell_).collect(out);
    else
      std::get<GruCell>(cell_).collect(out);
  }

 private:
  EncoderKind kind_ = EncoderKind::lstm;
  int hidden_ = 0;
  std::variant<LstmCell, GruCell> cell_;

  void validate(Eigen::Index rows, Eigen::Index cols, bool has_cell) const {
    (void)rows;
    if (cols != hidden_)
      throw state_error("rnn step: state width " + std::to_string(cols) + " != hidden " +
                        std::to_string(hidden_));
    if (kind_ == EncoderKind::lstm && !has_cell)
      throw state_error("rnn step: lstm state requires a cell component");
    if (kind_ == EncoderKind::gru && has_cell)
      throw state_error("rnn step: gru state must not carry a cell component");
  }
};

// Unrolls the encoder from zero state over per-timestep inputs, collecting
// the hidden output at each step. Gradient flows through the whole chain
// when inputs/parameters are tracked; a loss built from masked outputs is
// exactly truncated backprop with that mask.
inline std::vector<Mat> unroll(const RnnEncoder& enc, const std::vector<Mat>& inputs) {
  if (inputs.empty()) throw state_error("unroll: empty input sequence");
  RnnState s = enc.initial_state(inputs[0].rows());
  std::vector<Mat> hs;
  hs.reserve(inputs.size());
  for (const Mat& x : inputs) {
    enc.step(x, s);
    hs.push_back(s.hidden);
  }
  return hs;
}

inline std::vector<Var> unroll(Tape& t, RnnEncoder& enc, const std::vector<Var>& inputs) {
  if (inputs.empty()) throw state_error("unroll: empty input sequence");
  RnnStateVar s = enc.initial_state(t, t.val(inputs[0]).rows());
  std::vector<Var> hs;
  hs.reserve(inputs.size());
  for (Var x : inputs) {
    enc.step(t, x, s);
    hs.push_back(s.hidden);
  }
  return hs;
}

// One-hidden-layer perceptron, ReLU inside, linear output.
struct Mlp {
  Linear l1, l2;

  static Mlp make(int in, int hidden, int out, const std::string& name, std::mt19937_64& rng) {
    Mlp m;
    m.l1 = Linear::make(in, hidden, name + ".l1", rng);
    m.l2 = Linear::make(hidden, out, name + ".l2", rng);
    return m;
  }

  Mat fwd(const Mat& x) const { return l2.fwd(k_relu(l1.fwd(x))); }
  Var fwd(Tape& t, Var x) { return l2.fwd(t, t.relu(l1.fwd(t, x))); }

  void collect(std::vector<Parameter*>& out) {
    l1.collect(out);
    l2.collect(out);
  }
};

}  // namespace rmf
