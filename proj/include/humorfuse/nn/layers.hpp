#pragma once

// Building blocks shared by the recurrent baseline and the multimodal
// Transformer: dense and convolutional projections, layer normalization,
// positional encodings, gated multimodal fusion and the cross-modal block.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "humorfuse/error.hpp"
#include "humorfuse/nn/tape.hpp"

namespace humorfuse::nn {

/// Xavier/Glorot uniform initialization.
inline Matrix xavier(Eigen::Index fan_in, Eigen::Index fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix m(fan_in, fan_out);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = u(rng);
  return m;
}

/// y = x W + b, with W stored as (in x out).
struct Linear {
  Parameter weight;
  Parameter bias;

  Linear() = default;
  Linear(const std::string& name, Eigen::Index in, Eigen::Index out, std::mt19937_64& rng)
      : weight(name + ".weight", xavier(in, out, rng)), bias(name + ".bias", Matrix::Zero(1, out)) {}

  Var operator()(Tape& tape, Var x) { return tape.add_row(tape.matmul(x, tape.parameter(weight)), tape.parameter(bias)); }

  void collect(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
  Eigen::Index in_features() const { return weight.value.rows(); }
  Eigen::Index out_features() const { return weight.value.cols(); }
};

/// Stacks the `kernel` zero-padded neighbours of every row side by side, so that a
/// same-length 1-D convolution becomes a single matrix product.
inline Matrix im2col(const Matrix& x, int kernel) {
  const Eigen::Index t = x.rows(), d = x.cols();
  const int half = kernel / 2;
  Matrix out = Matrix::Zero(t, d * kernel);
  for (Eigen::Index i = 0; i < t; ++i)
    for (int k = 0; k < kernel; ++k) {
      const Eigen::Index src = i + k - half;
      if (src >= 0 && src < t) out.block(i, d * k, 1, d) = x.row(src);
    }
  return out;
}

/// Same-length 1-D convolution along time; weight rows are ordered (tap, input channel).
struct Conv1dProjection {
  int kernel = 1;
  Linear linear;

  Conv1dProjection() = default;
  Conv1dProjection(const std::string& name, Eigen::Index in, Eigen::Index out, int kernel_size, std::mt19937_64& rng)
      : kernel(kernel_size), linear(name, in * kernel_size, out, rng) {
    if (kernel_size < 1 || kernel_size % 2 == 0) throw ValidationError("convolution kernel must be odd and positive");
  }

  Var operator()(Tape& tape, const Matrix& x) {
    if (x.cols() * kernel != linear.in_features())
      throw ValidationError("conv_project: expected " + std::to_string(linear.in_features() / kernel) +
                            " input channels, got " + std::to_string(x.cols()));
    return linear(tape, tape.constant(im2col(x, kernel)));
  }

  void collect(std::vector<Parameter*>& out) { linear.collect(out); }
};

struct LayerNorm {
  Parameter gamma;
  Parameter beta;

  LayerNorm() = default;
  LayerNorm(const std::string& name, Eigen::Index d)
      : gamma(name + ".gamma", Matrix::Ones(1, d)), beta(name + ".beta", Matrix::Zero(1, d)) {}

  Var operator()(Tape& tape, Var x) { return tape.layer_norm(x, tape.parameter(gamma), tape.parameter(beta)); }

  void collect(std::vector<Parameter*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

/// PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(pos / 10000^(2i/d)).
inline Matrix sinusoidal_pe(Eigen::Index length, Eigen::Index d) {
  if (d <= 0 || d % 2 != 0) throw ValidationError("sinusoidal_pe: d must be even and positive");
  Matrix pe(length, d);
  for (Eigen::Index pos = 0; pos < length; ++pos)
    for (Eigen::Index i = 0; i < d / 2; ++i) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(d));
      pe(pos, 2 * i) = std::sin(angle);
      pe(pos, 2 * i + 1) = std::cos(angle);
    }
  return pe;
}

/// Gated multimodal unit: z * tanh(a Wa) + (1 - z) * tanh(t Wt), z = logistic([a t] Wz).
struct Gmu {
  Linear proj_a;
  Linear proj_t;
  Linear gate;

  Gmu() = default;
  Gmu(const std::string& name, Eigen::Index d, std::mt19937_64& rng)
      : proj_a(name + ".proj_a", d, d, rng), proj_t(name + ".proj_t", d, d, rng), gate(name + ".gate", 2 * d, d, rng) {}

  Var operator()(Tape& tape, Var a, Var t) {
    if (tape.value(a).rows() != tape.value(t).rows() || tape.value(a).cols() != tape.value(t).cols())
      throw ValidationError("gmu: input shapes differ");
    Var ha = tape.tanh(proj_a(tape, a));
    Var ht = tape.tanh(proj_t(tape, t));
    Var z = tape.sigmoid(gate(tape, tape.concat_cols({a, t})));
    return tape.add(ht, tape.mul(z, tape.sub(ha, ht)));
  }

  void collect(std::vector<Parameter*>& out) {
    proj_a.collect(out);
    proj_t.collect(out);
    gate.collect(out);
  }
};

/// allowed(i, j) = 1 iff |i - j| <= window.
inline Matrix local_attention_mask(Eigen::Index queries, Eigen::Index keys, int window) {
  if (window < 0) throw ValidationError("local attention window must be >= 0");
  Matrix m(queries, keys);
  for (Eigen::Index i = 0; i < queries; ++i)
    for (Eigen::Index j = 0; j < keys; ++j) m(i, j) = std::abs(i - j) <= window ? 1.0 : 0.0;
  return m;
}

/// One pre-norm cross-modal Transformer encoder layer. The first sequence provides the
/// queries, the second the keys and values; attention is restricted to a local band.
///
///   x   = s1 + Wo * MultiHeadAttention(LN(s1), LN(s2), LN(s2))
///   out = x + FFN(LN2(x))
///
/// LN is shared between queries and keys/values.
struct CrossModalBlock {
  int heads = 1;
  int local_window = 8;
  double dropout = 0.0;
  LayerNorm norm_attn;
  Linear query, key, value, output;
  LayerNorm norm_ffn;
  Linear ffn_in, ffn_out;

  CrossModalBlock() = default;
  CrossModalBlock(const std::string& name, Eigen::Index d, int n_heads, int window, Eigen::Index ffn_dim, double drop,
                  std::mt19937_64& rng)
      : heads(n_heads),
        local_window(window),
        dropout(drop),
        norm_attn(name + ".norm_attn", d),
        query(name + ".query", d, d, rng),
        key(name + ".key", d, d, rng),
        value(name + ".value", d, d, rng),
        output(name + ".output", d, d, rng),
        norm_ffn(name + ".norm_ffn", d),
        ffn_in(name + ".ffn_in", d, ffn_dim, rng),
        ffn_out(name + ".ffn_out", ffn_dim, d, rng) {
    if (n_heads < 1 || d % n_heads != 0) throw ValidationError("model width must be divisible by the head count");
    if (window < 0) throw ValidationError("local attention window must be >= 0");
  }

  /// When `attention` is non-null the per-head attention matrices are appended to it.
  Var operator()(Tape& tape, Var s1, Var s2, bool training, std::mt19937_64* rng,
                 std::vector<Matrix>* attention = nullptr) {
    const auto& v1 = tape.value(s1);
    const auto& v2 = tape.value(s2);
    if (v1.rows() != v2.rows() || v1.cols() != v2.cols()) throw ValidationError("cmt: sequences differ in shape");
    if (local_window < 0) throw ValidationError("local attention window must be >= 0");
    const Eigen::Index length = v1.rows();
    const Eigen::Index d = v1.cols();
    const Eigen::Index dh = d / heads;
    const bool drop = training && dropout > 0.0 && rng != nullptr;

    Var q_in = norm_attn(tape, s1);
    Var kv_in = norm_attn(tape, s2);
    Var q = query(tape, q_in);
    Var k = key(tape, kv_in);
    Var v = value(tape, kv_in);
    const Matrix allowed = local_attention_mask(length, length, local_window);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> head_out;
    for (int h = 0; h < heads; ++h) {
      Var qh = tape.slice_cols(q, h * dh, dh);
      Var kh = tape.slice_cols(k, h * dh, dh);
      Var vh = tape.slice_cols(v, h * dh, dh);
      Var weights = tape.masked_softmax_rows(tape.scale(tape.matmul_nt(qh, kh), scale), allowed);
      if (attention) attention->push_back(tape.value(weights));
      if (drop) weights = tape.dropout(weights, dropout, *rng);
      head_out.push_back(tape.matmul(weights, vh));
    }
    Var attn = output(tape, heads == 1 ? head_out.front() : tape.concat_cols(head_out));
    if (drop) attn = tape.dropout(attn, dropout, *rng);
    Var x = tape.add(s1, attn);

    Var hidden = tape.relu(ffn_in(tape, norm_ffn(tape, x)));
    if (drop) hidden = tape.dropout(hidden, dropout, *rng);
    Var ff = ffn_out(tape, hidden);
    if (drop) ff = tape.dropout(ff, dropout, *rng);
    return tape.add(x, ff);
  }

  void collect(std::vector<Parameter*>& out) {
    norm_attn.collect(out);
    query.collect(out);
    key.collect(out);
    value.collect(out);
    output.collect(out);
    norm_ffn.collect(out);
    ffn_in.collect(out);
    ffn_out.collect(out);
  }
};

inline Eigen::Index count_parameters(const std::vector<Parameter*>& params) {
  Eigen::Index n = 0;
  for (const auto* p : params) n += p->size();
  return n;
}

}  // namespace humorfuse::nn
