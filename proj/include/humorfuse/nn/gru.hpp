#pragma once

// Gated recurrent baseline for 2 s segment classification.
//
// Per step: r = logistic(x Wxr + bxr + h Whr + bhr), z = logistic(x Wxz + bxz + h Whz + bhz),
// n = tanh(x Wxn + bxn + r * (h Whn + bhn)), h' = (1 - z) * h + z * n.
// The segment logit is a linear read-out of the last layer's final state(s).

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "humorfuse/error.hpp"
#include "humorfuse/nn/layers.hpp"
#include "humorfuse/nn/tape.hpp"

namespace humorfuse::nn {

struct GruConfig {
  Eigen::Index input_dim = 1;
  Eigen::Index hidden = 32;
  int layers = 1;
  bool bidirectional = false;
  std::uint64_t seed = 0;

  int directions() const { return bidirectional ? 2 : 1; }

  void validate() const {
    if (input_dim < 1 || hidden < 1) throw ValidationError("gru: sizes must be positive");
    if (layers < 1) throw ValidationError("gru: layers must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const GruConfig& c) {
  j = {{"input_dim", c.input_dim}, {"hidden", c.hidden}, {"layers", c.layers}, {"bidirectional", c.bidirectional}, {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, GruConfig& c) {
  c.input_dim = j.value("input_dim", c.input_dim);
  c.hidden = j.value("hidden", c.hidden);
  c.layers = j.value("layers", c.layers);
  c.bidirectional = j.value("bidirectional", c.bidirectional);
  c.seed = j.value("seed", c.seed);
}

/// Weights of one direction of one layer; gate blocks are ordered [r, z, n].
struct GruCell {
  Parameter w_input;   // in x 3h
  Parameter w_hidden;  // h x 3h
  Parameter b_input;   // 1 x 3h
  Parameter b_hidden;  // 1 x 3h

  GruCell() = default;
  GruCell(const std::string& name, Eigen::Index in, Eigen::Index h, std::mt19937_64& rng)
      : w_input(name + ".w_input", xavier(in, 3 * h, rng)),
        w_hidden(name + ".w_hidden", xavier(h, 3 * h, rng)),
        b_input(name + ".b_input", Matrix::Zero(1, 3 * h)),
        b_hidden(name + ".b_hidden", Matrix::Zero(1, 3 * h)) {}

  Eigen::Index hidden() const { return w_hidden.value.rows(); }

  Var step(Tape& tape, Var x, Var h, Var wi, Var wh, Var bi, Var bh) const {
    const Eigen::Index n = hidden();
    Var gx = tape.add_row(tape.matmul(x, wi), bi);
    Var gh = tape.add_row(tape.matmul(h, wh), bh);
    Var r = tape.sigmoid(tape.add(tape.slice_cols(gx, 0, n), tape.slice_cols(gh, 0, n)));
    Var z = tape.sigmoid(tape.add(tape.slice_cols(gx, n, n), tape.slice_cols(gh, n, n)));
    Var cand = tape.tanh(tape.add(tape.slice_cols(gx, 2 * n, n), tape.mul(r, tape.slice_cols(gh, 2 * n, n))));
    return tape.add(h, tape.mul(z, tape.sub(cand, h)));
  }

  void collect(std::vector<Parameter*>& out) {
    out.push_back(&w_input);
    out.push_back(&w_hidden);
    out.push_back(&b_input);
    out.push_back(&b_hidden);
  }
};

class GruModel {
 public:
  explicit GruModel(const GruConfig& config) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(config_.seed);
    for (int l = 0; l < config_.layers; ++l) {
      const Eigen::Index in = l == 0 ? config_.input_dim : config_.hidden * config_.directions();
      for (int dir = 0; dir < config_.directions(); ++dir)
        cells.emplace_back("gru.l" + std::to_string(l) + (dir ? ".backward" : ".forward"), in, config_.hidden, rng);
    }
    head = Linear("head", config_.hidden * config_.directions(), 1, rng);
  }

  const GruConfig& config() const { return config_; }

  /// `steps[t]` holds time step t for the whole batch (B x input_dim). Returns B x 1 logits.
  Var forward(Tape& tape, const std::vector<Matrix>& steps) {
    if (steps.empty()) throw ValidationError("gru_forward: need at least one time step");
    const Eigen::Index batch = steps.front().rows();
    std::vector<Var> inputs;
    for (const auto& s : steps) {
      if (s.rows() != batch || s.cols() != config_.input_dim) throw ValidationError("gru_forward: input shape mismatch");
      inputs.push_back(tape.constant(s));
    }
    std::vector<Var> finals;
    const std::size_t length = inputs.size();
    for (int l = 0; l < config_.layers; ++l) {
      std::vector<std::vector<Var>> outputs(static_cast<std::size_t>(config_.directions()), std::vector<Var>(length));
      finals.clear();
      for (int dir = 0; dir < config_.directions(); ++dir) {
        auto& cell = cells[static_cast<std::size_t>(l * config_.directions() + dir)];
        Var wi = tape.parameter(cell.w_input), wh = tape.parameter(cell.w_hidden);
        Var bi = tape.parameter(cell.b_input), bh = tape.parameter(cell.b_hidden);
        Var h = tape.constant(Matrix::Zero(batch, config_.hidden));
        for (std::size_t i = 0; i < length; ++i) {
          const std::size_t t = dir == 0 ? i : length - 1 - i;
          h = cell.step(tape, inputs[t], h, wi, wh, bi, bh);
          outputs[static_cast<std::size_t>(dir)][t] = h;
        }
        finals.push_back(h);
      }
      if (config_.directions() == 1) {
        inputs = outputs[0];
      } else {
        for (std::size_t t = 0; t < length; ++t) inputs[t] = tape.concat_cols({outputs[0][t], outputs[1][t]});
      }
    }
    return head(tape, finals.size() == 1 ? finals.front() : tape.concat_cols(finals));
  }

  /// Logistic segment scores for a batch.
  Eigen::VectorXd predict(const std::vector<Matrix>& steps) {
    Tape tape;
    return tape.value(forward(tape, steps)).col(0).unaryExpr([](double x) { return Tape::logistic(x); });
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& c : cells) c.collect(out);
    head.collect(out);
    return out;
  }

  std::vector<GruCell> cells;  // layer-major, then direction
  Linear head;

 private:
  GruConfig config_;
};

}  // namespace humorfuse::nn
