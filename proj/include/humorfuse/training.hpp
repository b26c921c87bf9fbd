#pragma once

// Binds the neural models to segment datasets: the recurrent baseline consumes
// the 4 feature rows of each 2 s segment, the multimodal Transformer consumes
// whole videos and its per-timestep probabilities are mean-pooled per segment.

#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "humorfuse/dataset_io.hpp"
#include "humorfuse/eval_fusion.hpp"
#include "humorfuse/gold_standard.hpp"
#include "humorfuse/nn/gru.hpp"
#include "humorfuse/nn/train.hpp"
#include "humorfuse/nn/vfmm.hpp"

namespace humorfuse {

inline std::map<SegmentKey, const Segment*> index_segments(const SegmentTable& table) {
  std::map<SegmentKey, const Segment*> out;
  for (const auto& s : table)
    if (!out.emplace(key_of(s), &s).second)
      throw ValidationError("duplicate segment " + s.video_id + "#" + std::to_string(s.segment_index));
  return out;
}

class GruSegmentTask {
 public:
  GruSegmentTask(nn::GruModel& model, const FeatureStore& features, const SegmentTable& table,
                 const ModelDataset& dataset, Modality modality)
      : model_(model) {
    const auto segments = index_segments(table);
    for (const auto& e : dataset.examples) {
      auto it = segments.find(e.key);
      if (it == segments.end()) throw ValidationError("dataset example without segment: " + e.key.video_id);
      const auto& f = find_features(features, e.key.video_id, modality);
      auto window = segment_sequences(f, SegmentTable{*it->second}).front();
      if (window_rows_ == 0) window_rows_ = window.rows();
      if (window.rows() != window_rows_) throw ValidationError("gru: segments must have equal length");
      auto& bucket = e.role == SplitRole::train ? train_ : e.role == SplitRole::dev ? dev_ : test_;
      bucket.push_back({e.key, std::move(window), e.label > 0.0 ? 1.0 : 0.0});
    }
  }

  std::vector<nn::Parameter*> parameters() { return model_.parameters(); }
  std::size_t train_size() const { return train_.size(); }

  double accumulate(std::span<const std::size_t> batch, std::mt19937_64&) {
    std::vector<const Item*> items;
    for (auto i : batch) items.push_back(&train_[i]);
    nn::Tape tape;
    Eigen::VectorXd y(static_cast<Eigen::Index>(items.size()));
    for (std::size_t i = 0; i < items.size(); ++i) y(static_cast<Eigen::Index>(i)) = items[i]->label;
    const Eigen::VectorXd w = Eigen::VectorXd::Constant(y.size(), 1.0 / static_cast<double>(y.size()));
    auto loss = tape.bce_with_logits(model_.forward(tape, steps(items)), y, w);
    tape.backward(loss);
    return tape.scalar(loss);
  }

  double dev_auc() {
    auto [scores, labels] = score(dev_);
    return roc_auc(scores, labels);
  }

  PredictionSet predict_test(const std::string& source, double quality) {
    PredictionSet out{Task::humor, source, {}, quality};
    auto [scores, labels] = score(test_);
    for (std::size_t i = 0; i < test_.size(); ++i) out.rows.push_back({test_[i].key, scores[i]});
    return out;
  }

 private:
  struct Item {
    SegmentKey key;
    Eigen::MatrixXd window;
    double label;
  };

  std::vector<nn::Matrix> steps(const std::vector<const Item*>& items) const {
    std::vector<nn::Matrix> out(static_cast<std::size_t>(window_rows_),
                                nn::Matrix(static_cast<Eigen::Index>(items.size()), model_.config().input_dim));
    for (std::size_t b = 0; b < items.size(); ++b)
      for (Eigen::Index t = 0; t < window_rows_; ++t) out[static_cast<std::size_t>(t)].row(static_cast<Eigen::Index>(b)) = items[b]->window.row(t);
    return out;
  }

  std::pair<std::vector<double>, std::vector<double>> score(const std::vector<Item>& items) {
    std::vector<double> scores, labels;
    constexpr std::size_t kChunk = 256;
    for (std::size_t start = 0; start < items.size(); start += kChunk) {
      std::vector<const Item*> chunk;
      for (std::size_t i = start; i < std::min(items.size(), start + kChunk); ++i) chunk.push_back(&items[i]);
      const auto s = model_.predict(steps(chunk));
      for (std::size_t i = 0; i < chunk.size(); ++i) {
        scores.push_back(s(static_cast<Eigen::Index>(i)));
        labels.push_back(chunk[i]->label);
      }
    }
    return {scores, labels};
  }

  nn::GruModel& model_;
  Eigen::Index window_rows_ = 0;
  std::vector<Item> train_, dev_, test_;
};

/// A whole video with the pooling matrix mapping its timesteps onto its segments.
struct Clip {
  std::string video_id;
  nn::Matrix text, audio, video;
  nn::Matrix pooling;  // segments x T, each row averages that segment's timesteps
  Eigen::VectorXd labels;
  std::vector<SegmentKey> keys;
};

class VfmmClipTask {
 public:
  VfmmClipTask(nn::VfmmModel& model, const FeatureStore& features, const SegmentTable& table, const ModelDataset& dataset)
      : model_(model) {
    const auto segments = index_segments(table);
    std::map<std::string, std::vector<const Example*>> by_video;
    for (const auto& e : dataset.examples) by_video[e.key.video_id].push_back(&e);
    for (const auto& [video, examples] : by_video) {
      Clip clip;
      clip.video_id = video;
      clip.text = find_features(features, video, Modality::text).vectors;
      clip.audio = find_features(features, video, Modality::audio).vectors;
      clip.video = find_features(features, video, Modality::video).vectors;
      const auto length = clip.video.rows();
      if (clip.text.rows() != length || clip.audio.rows() != length)
        throw ValidationError("vfmm: modalities of video " + video + " differ in length");
      clip.pooling = nn::Matrix::Zero(static_cast<Eigen::Index>(examples.size()), length);
      clip.labels.resize(static_cast<Eigen::Index>(examples.size()));
      const SplitRole role = examples.front()->role;
      for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto* e = examples[i];
        if (e->role != role) throw ValidationError("vfmm: video " + video + " is split across roles; use a video-level split");
        auto it = segments.find(e->key);
        if (it == segments.end()) throw ValidationError("dataset example without segment: " + video);
        const auto [first, last] = segment_rows(*it->second);
        if (last > length) throw ValidationError("segment " + video + "#" + std::to_string(e->key.segment_index) + " exceeds features");
        clip.pooling.row(static_cast<Eigen::Index>(i)).segment(first, last - first).setConstant(1.0 / static_cast<double>(last - first));
        clip.labels(static_cast<Eigen::Index>(i)) = e->label > 0.0 ? 1.0 : 0.0;
        clip.keys.push_back(e->key);
      }
      (role == SplitRole::train ? train_ : role == SplitRole::dev ? dev_ : test_).push_back(std::move(clip));
    }
  }

  std::vector<nn::Parameter*> parameters() { return model_.parameters(); }
  std::size_t train_size() const { return train_.size(); }

  double accumulate(std::span<const std::size_t> batch, std::mt19937_64& rng) {
    double total_segments = 0.0;
    for (auto i : batch) total_segments += static_cast<double>(train_[i].labels.size());
    double loss = 0.0;
    for (auto i : batch) {
      const auto& clip = train_[i];
      nn::Tape tape;
      auto probs = model_.forward(tape, clip.text, clip.audio, clip.video, true, &rng);
      auto pooled = tape.matmul(tape.constant(clip.pooling), probs);
      const Eigen::VectorXd w = Eigen::VectorXd::Constant(clip.labels.size(), 1.0 / total_segments);
      auto l = tape.bce(pooled, clip.labels, w);
      tape.backward(l);
      loss += tape.scalar(l);
    }
    return loss;
  }

  double dev_auc() {
    auto [scores, labels] = score(dev_);
    return roc_auc(scores, labels);
  }

  PredictionSet predict_test(const std::string& source, double quality) {
    PredictionSet out{Task::humor, source, {}, quality};
    for (const auto& clip : test_) {
      const Eigen::VectorXd pooled = clip.pooling * model_.predict(clip.text, clip.audio, clip.video);
      for (Eigen::Index i = 0; i < pooled.size(); ++i) out.rows.push_back({clip.keys[static_cast<std::size_t>(i)], pooled(i)});
    }
    return out;
  }

  const std::vector<Clip>& train_clips() const { return train_; }

 private:
  std::pair<std::vector<double>, std::vector<double>> score(const std::vector<Clip>& clips) {
    std::vector<double> scores, labels;
    for (const auto& clip : clips) {
      const Eigen::VectorXd pooled = clip.pooling * model_.predict(clip.text, clip.audio, clip.video);
      for (Eigen::Index i = 0; i < pooled.size(); ++i) {
        scores.push_back(pooled(i));
        labels.push_back(clip.labels(i));
      }
    }
    return {scores, labels};
  }

  nn::VfmmModel& model_;
  std::vector<Clip> train_, dev_, test_;
};

}  // namespace humorfuse
