#pragma once

// Mini-batch training with decoupled weight decay, dev-AUC early stopping and
// best-epoch restoration. Everything random flows from TrainConfig::seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "humorfuse/error.hpp"
#include "humorfuse/nn/tape.hpp"

namespace humorfuse::nn {

struct TrainConfig {
  int max_epochs = 20;
  int patience = 5;
  double learning_rate = 1e-3;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 32;
  std::uint64_t seed = 101;
  std::vector<std::uint64_t> seeds{101, 202, 303, 404, 505};

  void validate() const {
    if (max_epochs < 1) throw ValidationError("train: max_epochs must be >= 1");
    if (patience < 1 || patience >= max_epochs) throw ValidationError("train: need 1 <= patience < max_epochs");
    if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
    if (!(learning_rate >= 0.0) || !(weight_decay >= 0.0)) throw ValidationError("train: rates must be nonnegative");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"max_epochs", c.max_epochs}, {"patience", c.patience},   {"learning_rate", c.learning_rate},
       {"weight_decay", c.weight_decay}, {"beta1", c.beta1},     {"beta2", c.beta2},
       {"epsilon", c.epsilon},       {"batch_size", c.batch_size}, {"seed", c.seed},
       {"seeds", c.seeds}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.seeds = j.value("seeds", c.seeds);
}

/// Whole-clip models see few, long examples: smaller batches and a larger step.
inline TrainConfig clip_train_defaults() {
  TrainConfig c;
  c.batch_size = 2;
  c.learning_rate = 2e-3;
  return c;
}

/// Adam with decoupled weight decay: p <- p - lr * (wd * p + m_hat / (sqrt(v_hat) + eps)).
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, const TrainConfig& config) : params_(std::move(params)), config_(config) {
    for (auto* p : params_) {
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    const double lr = config_.learning_rate;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * p.grad;
      v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * p.grad.cwiseAbs2();
      p.value *= 1.0 - lr * config_.weight_decay;
      p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.epsilon);
    }
  }

  long steps() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  TrainConfig config_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

/// Tracks the best dev score; signals a stop after `patience` epochs without strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// Returns true when the score improved on the best so far.
  bool observe(double score) {
    if (!seen_ || score > best_) {
      best_ = score;
      seen_ = true;
      stale_ = 0;
      return true;
    }
    ++stale_;
    return false;
  }

  bool should_stop() const { return stale_ >= patience_; }
  double best() const { return best_; }
  int stale_epochs() const { return stale_; }

 private:
  int patience_;
  double best_ = 0.0;
  bool seen_ = false;
  int stale_ = 0;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_auc = 0.0;
  bool improved = false;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_dev_auc = 0.0;
  int epochs_run() const { return static_cast<int>(history.size()); }
};

/// What `train` needs from a model bound to its data.
template <typename T>
concept TrainingTask = requires(T task, std::span<const std::size_t> batch, std::mt19937_64& rng) {
  { task.parameters() } -> std::convertible_to<std::vector<Parameter*>>;
  { task.train_size() } -> std::convertible_to<std::size_t>;
  // Accumulates gradients of the mean batch loss; returns that loss.
  { task.accumulate(batch, rng) } -> std::convertible_to<double>;
  { task.dev_auc() } -> std::convertible_to<double>;
};

/// Trains `task` in place and leaves it holding the parameters of its best dev epoch.
template <TrainingTask Task>
TrainResult train(Task& task, const TrainConfig& config) {
  config.validate();
  if (task.train_size() == 0) throw ValidationError("train: empty training split");
  auto params = task.parameters();
  AdamW optimizer(params, config);
  EarlyStopping stopper(config.patience);
  std::mt19937_64 rng(config.seed);
  std::vector<Matrix> best;
  for (auto* p : params) best.push_back(p->value);

  TrainResult result;
  std::vector<std::size_t> order(task.train_size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const auto len = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), order.size() - start);
      optimizer.zero_grad();
      const double loss = task.accumulate(std::span<const std::size_t>(order.data() + start, len), rng);
      if (!std::isfinite(loss))
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batches) + " (step " + std::to_string(optimizer.steps()) + ")");
      optimizer.step();
      loss_sum += loss;
      ++batches;
    }
    const double auc = task.dev_auc();
    EpochRecord rec{epoch, loss_sum / static_cast<double>(batches), auc, stopper.observe(auc)};
    if (rec.improved) {
      for (std::size_t i = 0; i < params.size(); ++i) best[i] = params[i]->value;
      result.best_epoch = epoch;
      result.best_dev_auc = auc;
    }
    result.history.push_back(rec);
    if (stopper.should_stop()) break;
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
  return result;
}

}  // namespace humorfuse::nn
