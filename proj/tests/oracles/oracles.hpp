#pragma once

// Independent reference implementations used only by tests. They follow the
// textbook definitions directly (pair enumeration, explicit loops) and share
// no code path with the library routines they check.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "humorfuse/nn/gru.hpp"
#include "humorfuse/nn/vfmm.hpp"

namespace oracle {

/// Counts wins and ties over every (positive, negative) pair.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<double>& labels) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!(labels[i] > 0.0)) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] > 0.0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

/// Nominal alpha from an explicitly accumulated coincidence matrix: every ordered pair
/// of values from different raters in a unit adds 1 / (m_u - 1).
inline double coincidence_alpha(const std::vector<std::vector<int>>& rows) {
  std::map<std::pair<int, int>, double> o;
  std::set<int> values;
  const std::size_t raters = rows.size(), units = rows.front().size();
  for (std::size_t u = 0; u < units; ++u)
    for (std::size_t i = 0; i < raters; ++i)
      for (std::size_t j = 0; j < raters; ++j) {
        if (i == j) continue;
        o[{rows[i][u], rows[j][u]}] += 1.0 / static_cast<double>(raters - 1);
        values.insert(rows[i][u]);
      }
  std::map<int, double> n_c;
  double n = 0.0;
  for (const auto& [ck, v] : o) {
    n_c[ck.first] += v;
    n += v;
  }
  double d_o = 0.0, d_e = 0.0;
  for (int c : values)
    for (int k : values) {
      if (c == k) continue;
      d_o += o[{c, k}];
      d_e += n_c[c] * n_c[k];
    }
  d_o /= n;
  d_e /= n * (n - 1.0);
  if (d_e == 0.0) return 1.0;
  return 1.0 - d_o / d_e;
}

/// Lin's CCC evaluated in long double from the raw sums.
inline double ccc(const std::vector<double>& x, const std::vector<double>& y) {
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  const long double n = static_cast<long double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += static_cast<long double>(x[i]) * x[i];
    syy += static_cast<long double>(y[i]) * y[i];
    sxy += static_cast<long double>(x[i]) * y[i];
  }
  const long double mx = sx / n, my = sy / n;
  const long double vx = sxx / n - mx * mx, vy = syy / n - my * my, cov = sxy / n - mx * my;
  const long double den = vx + vy + (mx - my) * (mx - my);
  if (den == 0) return 0.0;
  return static_cast<double>(2 * cov / den);
}

/// Weights straight from the defining sums over annotator pairs.
inline std::vector<double> annotator_weights(const std::vector<std::vector<double>>& signals) {
  const std::size_t n = signals.size();
  std::vector<double> sums(n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    double w1 = 0.0, w2 = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      if (a == b) continue;
      std::vector<double> xa = signals[a], xb = signals[b];
      w1 += ccc(xa, xb);
      for (auto& v : xa) v = std::abs(v);
      for (auto& v : xb) v = std::abs(v);
      w2 += ccc(xa, xb);
    }
    sums[a] = std::max(0.0, w1 / static_cast<double>(n - 1) + w2 / static_cast<double>(n - 1));
  }
  double total = 0.0;
  for (double s : sums) total += s;
  for (auto& s : sums) s /= total;
  return sums;
}

/// Platt parameters (A, B) by plain gradient descent on the smoothed-target negative
/// log-likelihood of p(s) = 1 / (1 + exp(A s + B)).
inline std::pair<double, double> platt_descent(const std::vector<double>& scores, const std::vector<double>& labels,
                                               int iterations = 200000, double rate = 0.05) {
  double n_pos = 0, n_neg = 0;
  for (double l : labels) (l > 0.0 ? n_pos : n_neg) += 1.0;
  const double hi = (n_pos + 1.0) / (n_pos + 2.0), lo = 1.0 / (n_neg + 2.0);
  const double n = static_cast<double>(scores.size());
  double a = 0.0, b = 0.0;
  for (int it = 0; it < iterations; ++it) {
    double ga = 0.0, gb = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(a * scores[i] + b));
      const double t = labels[i] > 0.0 ? hi : lo;
      ga += (t - p) * scores[i];
      gb += t - p;
    }
    a -= rate * ga / n;
    b -= rate * gb / n;
  }
  return {a, b};
}

/// Enumerates window start positions explicitly.
inline std::size_t enumerate_windows(std::size_t length, std::size_t frame, std::size_t hop) {
  std::size_t count = 0;
  for (std::size_t start = 0; start + frame <= length; start += hop) ++count;
  return count;
}

// ---------------------------------------------------------------------------
// Neural oracles (plain Eigen, explicit loops)

using Mat = Eigen::MatrixXd;

inline double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Mat layer_norm(const Mat& x, const Mat& gamma, const Mat& beta) {
  Mat y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mean = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) mean += x(r, c);
    mean /= static_cast<double>(x.cols());
    double var = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
    var /= static_cast<double>(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) y(r, c) = gamma(0, c) * (x(r, c) - mean) / std::sqrt(var + 1e-5) + beta(0, c);
  }
  return y;
}

inline Mat affine(const Mat& x, const humorfuse::nn::Linear& l) {
  Mat y(x.rows(), l.weight.value.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < y.cols(); ++c) {
      double s = l.bias.value(0, c);
      for (Eigen::Index k = 0; k < x.cols(); ++k) s += x(r, k) * l.weight.value(k, c);
      y(r, c) = s;
    }
  return y;
}

/// Same-length convolution written as an explicit sum over taps.
inline Mat conv(const Mat& x, const humorfuse::nn::Conv1dProjection& p) {
  const int k = p.kernel, half = k / 2;
  const auto& w = p.linear.weight.value;
  Mat y(x.rows(), w.cols());
  for (Eigen::Index t = 0; t < x.rows(); ++t)
    for (Eigen::Index o = 0; o < w.cols(); ++o) {
      double s = p.linear.bias.value(0, o);
      for (int tap = 0; tap < k; ++tap) {
        const Eigen::Index src = t + tap - half;
        if (src < 0 || src >= x.rows()) continue;
        for (Eigen::Index i = 0; i < x.cols(); ++i) s += x(src, i) * w(tap * x.cols() + i, o);
      }
      y(t, o) = s;
    }
  return y;
}

inline Mat positional(Eigen::Index length, Eigen::Index d) {
  Mat pe(length, d);
  for (Eigen::Index p = 0; p < length; ++p)
    for (Eigen::Index j = 0; j < d; ++j) {
      const double i2 = static_cast<double>(j - j % 2);
      const double angle = static_cast<double>(p) / std::pow(10000.0, i2 / static_cast<double>(d));
      pe(p, j) = j % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  return pe;
}

inline Mat gmu(const Mat& a, const Mat& t, const humorfuse::nn::Gmu& g) {
  const Mat ha = affine(a, g.proj_a).array().tanh().matrix();
  const Mat ht = affine(t, g.proj_t).array().tanh().matrix();
  Mat at(a.rows(), a.cols() + t.cols());
  at << a, t;
  const Mat z = affine(at, g.gate).unaryExpr([](double v) { return sigm(v); });
  Mat out(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = z(i) * ha(i) + (1.0 - z(i)) * ht(i);
  return out;
}

/// Explicit-loop local multi-head cross attention block.
inline Mat cmt(const Mat& s1, const Mat& s2, const humorfuse::nn::CrossModalBlock& b,
               std::vector<Mat>* attention = nullptr) {
  const Eigen::Index length = s1.rows(), d = s1.cols(), dh = d / b.heads;
  const Mat q = affine(layer_norm(s1, b.norm_attn.gamma.value, b.norm_attn.beta.value), b.query);
  const Mat kv_in = layer_norm(s2, b.norm_attn.gamma.value, b.norm_attn.beta.value);
  const Mat k = affine(kv_in, b.key), v = affine(kv_in, b.value);
  Mat heads = Mat::Zero(length, d);
  for (int h = 0; h < b.heads; ++h) {
    Mat weights = Mat::Zero(length, length);
    for (Eigen::Index i = 0; i < length; ++i) {
      double mx = -1e300;
      std::vector<double> logits(static_cast<std::size_t>(length), 0.0);
      for (Eigen::Index j = 0; j < length; ++j) {
        if (std::abs(i - j) > b.local_window) continue;
        double s = 0.0;
        for (Eigen::Index c = 0; c < dh; ++c) s += q(i, h * dh + c) * k(j, h * dh + c);
        logits[static_cast<std::size_t>(j)] = s / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, logits[static_cast<std::size_t>(j)]);
      }
      double z = 0.0;
      for (Eigen::Index j = 0; j < length; ++j)
        if (std::abs(i - j) <= b.local_window) z += std::exp(logits[static_cast<std::size_t>(j)] - mx);
      for (Eigen::Index j = 0; j < length; ++j)
        if (std::abs(i - j) <= b.local_window) weights(i, j) = std::exp(logits[static_cast<std::size_t>(j)] - mx) / z;
    }
    if (attention) attention->push_back(weights);
    for (Eigen::Index i = 0; i < length; ++i)
      for (Eigen::Index c = 0; c < dh; ++c) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < length; ++j) s += weights(i, j) * v(j, h * dh + c);
        heads(i, h * dh + c) = s;
      }
  }
  const Mat x = s1 + affine(heads, b.output);
  const Mat hidden = affine(layer_norm(x, b.norm_ffn.gamma.value, b.norm_ffn.beta.value), b.ffn_in).cwiseMax(0.0);
  return x + affine(hidden, b.ffn_out);
}

/// Step-by-step composition: projections, positional encoding, GMU, both cross-modal
/// blocks, concatenation and the logistic head.
inline Eigen::VectorXd vfmm(const Mat& text, const Mat& audio, const Mat& video, const humorfuse::nn::VfmmModel& m) {
  const Eigen::Index length = video.rows(), d = m.config().d;
  const Mat pe = positional(length, d);
  const Mat t2 = conv(text, m.conv_text) + pe;
  const Mat a2 = conv(audio, m.conv_audio) + pe;
  const Mat v2 = conv(video, m.conv_video) + pe;
  const Mat at = gmu(a2, t2, m.gmu);
  const Mat v_at = cmt(v2, at, m.video_to_at);
  const Mat at_v = cmt(at, v2, m.at_to_video);
  Mat cat(length, 4 * d);
  cat << v2, at, v_at, at_v;
  const Mat logits = affine(cat, m.head);
  Eigen::VectorXd out(length);
  for (Eigen::Index t = 0; t < length; ++t) out(t) = sigm(logits(t, 0));
  return out;
}

/// Scalar recurrence for a one-unit, one-input, single-layer unidirectional GRU.
inline double scalar_gru_score(const std::vector<double>& xs, const humorfuse::nn::GruModel& m) {
  const auto& c = m.cells.front();
  const auto& wi = c.w_input.value;
  const auto& wh = c.w_hidden.value;
  const auto& bi = c.b_input.value;
  const auto& bh = c.b_hidden.value;
  double h = 0.0;
  for (double x : xs) {
    const double r = sigm(x * wi(0, 0) + bi(0, 0) + h * wh(0, 0) + bh(0, 0));
    const double z = sigm(x * wi(0, 1) + bi(0, 1) + h * wh(0, 1) + bh(0, 1));
    const double n = std::tanh(x * wi(0, 2) + bi(0, 2) + r * (h * wh(0, 2) + bh(0, 2)));
    h = (1.0 - z) * h + z * n;
  }
  return sigm(h * m.head.weight.value(0, 0) + m.head.bias.value(0, 0));
}

// ---------------------------------------------------------------------------
// Finite differences

struct GradCheck {
  std::string name;
  double relative_error;
};

/// Central differences of `loss` w.r.t. every entry of every parameter, compared per tensor
/// with the analytic gradients already stored in `params[i]->grad`:
/// ||g_analytic - g_numeric|| / max(||g_analytic||, ||g_numeric||, 1e-6).
/// Each tensor reports the smaller error over the given step sizes: a ReLU kink inside
/// one step spoils that estimate only, while a wrong analytic gradient disagrees with all.
/// The norm floor keeps tensors with an exactly zero gradient (key biases under softmax)
/// from turning round-off into a large ratio.
inline std::vector<GradCheck> check_gradients(const std::vector<humorfuse::nn::Parameter*>& params,
                                              const std::function<double()>& loss,
                                              std::vector<double> steps = {1e-5, 1e-6}) {
  std::vector<GradCheck> out;
  for (auto* p : params) {
    double best = std::numeric_limits<double>::infinity();
    for (double step : steps) {
      Mat numeric(p->value.rows(), p->value.cols());
      for (Eigen::Index i = 0; i < p->value.size(); ++i) {
        const double saved = p->value(i);
        p->value(i) = saved + step;
        const double up = loss();
        p->value(i) = saved - step;
        const double down = loss();
        p->value(i) = saved;
        numeric(i) = (up - down) / (2.0 * step);
      }
      const double scale = std::max({p->grad.norm(), numeric.norm(), 1e-6});
      best = std::min(best, (p->grad - numeric).norm() / scale);
    }
    out.push_back({p->name, best});
  }
  return out;
}

}  // namespace oracle
