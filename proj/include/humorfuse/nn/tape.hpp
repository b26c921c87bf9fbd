#pragma once

// Reverse-mode automatic differentiation over dense double matrices.
//
// A Tape records every operation of one forward pass. Values live in the
// tape's nodes and are addressed by Var handles; calling backward() on a 1x1
// node accumulates gradients into every Parameter that took part.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "humorfuse/error.hpp"

namespace humorfuse::nn {

using Matrix = Eigen::MatrixXd;

/// A trainable tensor together with its accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

struct Var {
  std::size_t id = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value) { return push(std::move(value), false, nullptr); }

  Var parameter(Parameter& p) {
    Var v = push(p.value, true, nullptr);
    nodes_[v.id].param = &p;
    return v;
  }

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const { return nodes_[v.id].value(0, 0); }
  std::size_t size() const { return nodes_.size(); }

  /// Back-propagates from a 1x1 node, scaled by `seed`.
  void backward(Var out, double seed = 1.0) {
    auto& root = nodes_[out.id];
    if (root.value.rows() != 1 || root.value.cols() != 1) throw NumericalError("backward() needs a scalar output");
    root.grad = Matrix::Constant(1, 1, seed);
    for (std::size_t i = out.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.grad.size() == 0) continue;
      if (n.backward) n.backward();
      if (n.param) n.param->grad += n.grad;
    }
  }

  // -- linear algebra -------------------------------------------------------

  Var matmul(Var a, Var b) {
    check(value(a).cols() == value(b).rows(), "matmul: inner dimension mismatch");
    Var out = unary_like(value(a) * value(b), {a, b});
    backward_for(out, [this, a, b, out] {
      const Matrix& g = grad(out);
      if (needs(a)) acc(a, g * value(b).transpose());
      if (needs(b)) acc(b, value(a).transpose() * g);
    });
    return out;
  }

  /// a * b^T
  Var matmul_nt(Var a, Var b) {
    check(value(a).cols() == value(b).cols(), "matmul_nt: dimension mismatch");
    Var out = unary_like(value(a) * value(b).transpose(), {a, b});
    backward_for(out, [this, a, b, out] {
      const Matrix& g = grad(out);
      if (needs(a)) acc(a, g * value(b));
      if (needs(b)) acc(b, g.transpose() * value(a));
    });
    return out;
  }

  Var add(Var a, Var b) {
    check_same(a, b, "add");
    Var out = unary_like(value(a) + value(b), {a, b});
    backward_for(out, [this, a, b, out] {
      if (needs(a)) acc(a, grad(out));
      if (needs(b)) acc(b, grad(out));
    });
    return out;
  }

  Var sub(Var a, Var b) {
    check_same(a, b, "sub");
    Var out = unary_like(value(a) - value(b), {a, b});
    backward_for(out, [this, a, b, out] {
      if (needs(a)) acc(a, grad(out));
      if (needs(b)) acc(b, -grad(out));
    });
    return out;
  }

  /// a + 1 * row, broadcasting a 1 x n row over every row of a.
  Var add_row(Var a, Var row) {
    check(value(row).rows() == 1 && value(row).cols() == value(a).cols(), "add_row: shape mismatch");
    Matrix v = value(a);
    v.rowwise() += value(row).row(0);
    Var out = unary_like(std::move(v), {a, row});
    backward_for(out, [this, a, row, out] {
      if (needs(a)) acc(a, grad(out));
      if (needs(row)) acc(row, grad(out).colwise().sum());
    });
    return out;
  }

  Var mul(Var a, Var b) {
    check_same(a, b, "mul");
    Var out = unary_like(value(a).cwiseProduct(value(b)), {a, b});
    backward_for(out, [this, a, b, out] {
      if (needs(a)) acc(a, grad(out).cwiseProduct(value(b)));
      if (needs(b)) acc(b, grad(out).cwiseProduct(value(a)));
    });
    return out;
  }

  Var scale(Var a, double s) {
    Var out = unary_like(value(a) * s, {a});
    backward_for(out, [this, a, s, out] { acc(a, grad(out) * s); });
    return out;
  }

  // -- elementwise nonlinearities ---------------------------------------------

  Var tanh(Var a) {
    Var out = unary_like(value(a).array().tanh().matrix(), {a});
    backward_for(out, [this, a, out] {
      acc(a, (grad(out).array() * (1.0 - value(out).array().square())).matrix());
    });
    return out;
  }

  Var sigmoid(Var a) {
    Matrix v = value(a).unaryExpr([](double x) { return logistic(x); });
    Var out = unary_like(std::move(v), {a});
    backward_for(out, [this, a, out] {
      const auto& y = value(out).array();
      acc(a, (grad(out).array() * y * (1.0 - y)).matrix());
    });
    return out;
  }

  Var relu(Var a) {
    Var out = unary_like(value(a).cwiseMax(0.0), {a});
    backward_for(out, [this, a, out] {
      acc(a, grad(out).cwiseProduct((value(a).array() > 0.0).cast<double>().matrix()));
    });
    return out;
  }

  // -- shape ------------------------------------------------------------------

  Var concat_cols(const std::vector<Var>& parts) {
    check(!parts.empty(), "concat_cols: nothing to concatenate");
    const auto rows = value(parts.front()).rows();
    Eigen::Index cols = 0;
    for (Var p : parts) {
      check(value(p).rows() == rows, "concat_cols: row mismatch");
      cols += value(p).cols();
    }
    Matrix v(rows, cols);
    Eigen::Index c = 0;
    for (Var p : parts) {
      v.middleCols(c, value(p).cols()) = value(p);
      c += value(p).cols();
    }
    Var out = unary_like(std::move(v), parts);
    backward_for(out, [this, parts, out] {
      Eigen::Index c = 0;
      for (Var p : parts) {
        const auto w = value(p).cols();
        if (needs(p)) acc(p, grad(out).middleCols(c, w));
        c += w;
      }
    });
    return out;
  }

  Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
    check(start >= 0 && start + count <= value(a).cols(), "slice_cols: out of range");
    Var out = unary_like(value(a).middleCols(start, count), {a});
    backward_for(out, [this, a, start, count, out] {
      Matrix g = Matrix::Zero(value(a).rows(), value(a).cols());
      g.middleCols(start, count) = grad(out);
      acc(a, g);
    });
    return out;
  }

  // -- fused layers -------------------------------------------------------------

  /// Row-wise layer normalization with population variance.
  Var layer_norm(Var a, Var gamma, Var beta, double eps = 1e-5) {
    const Matrix& x = value(a);
    check(value(gamma).rows() == 1 && value(gamma).cols() == x.cols(), "layer_norm: gamma shape");
    check(value(beta).rows() == 1 && value(beta).cols() == x.cols(), "layer_norm: beta shape");
    const auto n = static_cast<double>(x.cols());
    Matrix xhat(x.rows(), x.cols());
    Eigen::VectorXd inv_std(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double mean = x.row(r).mean();
      const double var = (x.row(r).array() - mean).square().sum() / n;
      inv_std(r) = 1.0 / std::sqrt(var + eps);
      xhat.row(r) = (x.row(r).array() - mean) * inv_std(r);
    }
    Matrix y = xhat;
    y.array().rowwise() *= value(gamma).row(0).array();
    y.rowwise() += value(beta).row(0);
    Var out = unary_like(std::move(y), {a, gamma, beta});
    backward_for(out, [this, a, gamma, beta, out, xhat = std::move(xhat), inv_std = std::move(inv_std), n] {
      const Matrix& g = grad(out);
      if (needs(gamma)) acc(gamma, g.cwiseProduct(xhat).colwise().sum());
      if (needs(beta)) acc(beta, g.colwise().sum());
      if (needs(a)) {
        Matrix dxhat = g;
        dxhat.array().rowwise() *= value(gamma).row(0).array();
        Matrix dx(g.rows(), g.cols());
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          const double m1 = dxhat.row(r).sum() / n;
          const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).sum() / n;
          dx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2).matrix();
        }
        acc(a, dx);
      }
    });
    return out;
  }

  /// Row-wise softmax over entries where `allowed` is nonzero; other entries are 0.
  /// Masked logits are treated as -infinity.
  Var masked_softmax_rows(Var a, const Matrix& allowed) {
    const Matrix& s = value(a);
    check(allowed.rows() == s.rows() && allowed.cols() == s.cols(), "masked_softmax_rows: mask shape");
    Matrix y = Matrix::Zero(s.rows(), s.cols());
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < s.cols(); ++c)
        if (allowed(r, c) != 0.0) mx = std::max(mx, s(r, c));
      check(std::isfinite(mx), "masked_softmax_rows: a row has no allowed entries");
      double total = 0.0;
      for (Eigen::Index c = 0; c < s.cols(); ++c)
        if (allowed(r, c) != 0.0) total += (y(r, c) = std::exp(s(r, c) - mx));
      y.row(r) /= total;
    }
    Var out = unary_like(std::move(y), {a});
    backward_for(out, [this, a, out] {
      const Matrix& yv = value(out);
      const Matrix& g = grad(out);
      const Eigen::VectorXd dot = yv.cwiseProduct(g).rowwise().sum();
      Matrix d = yv.cwiseProduct(g);
      d -= yv.cwiseProduct(dot.replicate(1, yv.cols()));
      acc(a, d);
    });
    return out;
  }

  /// Inverted dropout; an identity when rate is 0.
  Var dropout(Var a, double rate, std::mt19937_64& rng) {
    if (rate <= 0.0) return a;
    std::bernoulli_distribution keep(1.0 - rate);
    Matrix mask(value(a).rows(), value(a).cols());
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask(i) = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
    return mul(a, constant(std::move(mask)));
  }

  // -- losses ---------------------------------------------------------------------

  /// Weighted mean binary cross-entropy of probabilities `p` (n x 1) against targets.
  /// The loss is sum_i w_i * bce_i; pass w_i = 1/n for a plain mean.
  Var bce(Var p, const Eigen::VectorXd& targets, const Eigen::VectorXd& weights) {
    const Matrix& pv = value(p);
    check(pv.cols() == 1 && pv.rows() == targets.size() && weights.size() == targets.size(), "bce: shape mismatch");
    constexpr double kMin = 1e-12;
    Eigen::VectorXd pc = pv.col(0).cwiseMax(kMin).cwiseMin(1.0 - kMin);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < pc.size(); ++i)
      loss -= weights(i) * (targets(i) * std::log(pc(i)) + (1.0 - targets(i)) * std::log(1.0 - pc(i)));
    Var out = unary_like(Matrix::Constant(1, 1, loss), {p});
    backward_for(out, [this, p, out, pc, targets, weights] {
      const double g = grad(out)(0, 0);
      Matrix d(pc.size(), 1);
      for (Eigen::Index i = 0; i < pc.size(); ++i)
        d(i, 0) = -g * weights(i) * (targets(i) / pc(i) - (1.0 - targets(i)) / (1.0 - pc(i)));
      acc(p, d);
    });
    return out;
  }

  /// Weighted binary cross-entropy on logits (n x 1), computed stably.
  Var bce_with_logits(Var logits, const Eigen::VectorXd& targets, const Eigen::VectorXd& weights) {
    const Matrix& z = value(logits);
    check(z.cols() == 1 && z.rows() == targets.size() && weights.size() == targets.size(), "bce_with_logits: shape mismatch");
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double x = z(i, 0);
      // log(1 + exp(x)) - y x
      const double softplus = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
      loss += weights(i) * (softplus - targets(i) * x);
    }
    Var out = unary_like(Matrix::Constant(1, 1, loss), {logits});
    backward_for(out, [this, logits, out, targets, weights] {
      const double g = grad(out)(0, 0);
      const Matrix& zv = value(logits);
      Matrix d(zv.rows(), 1);
      for (Eigen::Index i = 0; i < zv.rows(); ++i) d(i, 0) = g * weights(i) * (logistic(zv(i, 0)) - targets(i));
      acc(logits, d);
    });
    return out;
  }

  static double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    std::function<void()> backward;
  };

  Var push(Matrix value, bool requires_grad, std::function<void()> fn) {
    nodes_.push_back({std::move(value), Matrix(), requires_grad, nullptr, std::move(fn)});
    return {nodes_.size() - 1};
  }

  Var unary_like(Matrix value, std::initializer_list<Var> inputs) {
    bool rg = false;
    for (Var v : inputs) rg = rg || nodes_[v.id].requires_grad;
    return push(std::move(value), rg, nullptr);
  }

  Var unary_like(Matrix value, const std::vector<Var>& inputs) {
    bool rg = false;
    for (Var v : inputs) rg = rg || nodes_[v.id].requires_grad;
    return push(std::move(value), rg, nullptr);
  }

  void backward_for(Var out, std::function<void()> fn) {
    if (nodes_[out.id].requires_grad) nodes_[out.id].backward = std::move(fn);
  }

  bool needs(Var v) const { return nodes_[v.id].requires_grad; }
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }

  template <typename Expr>
  void acc(Var v, const Expr& g) {
    auto& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = g;
    else n.grad += g;
  }

  static void check(bool ok, const char* msg) {
    if (!ok) throw ValidationError(msg);
  }
  void check_same(Var a, Var b, const char* op) const {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
      throw ValidationError(std::string(op) + ": shape mismatch");
  }

  std::vector<Node> nodes_;
};

}  // namespace humorfuse::nn
