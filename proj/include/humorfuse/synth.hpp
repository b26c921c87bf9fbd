#pragma once

// Synthetic corpus generator. Plants ground-truth humor episodes with styles
// drawn from a 2x2 (direction x sentiment) distribution, simulates raters as
// noisy copies of the ground truth, and emits 2 Hz features whose humor signal
// is strongest in the video channel, weaker in text and weakest in audio.
//
// Rater model, scaled by `rater_noise` (0 gives exact copies of the ground truth):
//   - amplitude scale drawn per rater from [1 - scale_jitter, 1 + scale_jitter]
//   - constant lag of 0..max_lag frames per rater
//   - each episode missed with probability miss_prob
//   - per-frame Gaussian amplitude jitter, sign flips per episode and dimension
//   - spurious episodes started with probability false_rate per frame
// `unreliable_raters` raters per coach use unreliable_factor times the
// miss / flip / spurious rates.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "humorfuse/csv.hpp"
#include "humorfuse/dataset_io.hpp"
#include "humorfuse/error.hpp"
#include "humorfuse/gold_standard.hpp"
#include "humorfuse/signal_prep.hpp"

namespace humorfuse {

struct SynthConfig {
  int coaches = 4;
  int annotators = 9;
  int minutes = 5;  ///< per coach
  int video_seconds = 60;
  std::uint64_t seed = 7;

  double episode_rate = 0.02;  ///< probability per frame of starting an episode
  int min_episode_frames = 2;
  int max_episode_frames = 6;
  /// Style proportions in the order self/negative, self/positive, other/negative, other/positive.
  std::array<double, 4> style_weights{0.0427, 0.2229, 0.2560, 0.4759};

  double rater_noise = 1.0;
  double scale_jitter = 0.2;
  int max_lag = 1;
  double miss_prob = 0.1;
  double amplitude_jitter = 0.05;
  double flip_prob = 0.05;
  double false_rate = 0.002;
  int unreliable_raters = 2;
  double unreliable_factor = 4.0;

  Eigen::Index text_dim = 6;
  Eigen::Index audio_dim = 6;
  Eigen::Index video_dim = 8;
  double video_strength = 3.5;
  double text_strength = 1.0;
  double audio_strength = 0.5;
  double coach_offset = 0.3;

  void validate() const {
    if (coaches < 1 || annotators < 1 || minutes < 1) throw ValidationError("synth: counts must be >= 1");
    if (video_seconds < 2 || (minutes * 60) % video_seconds != 0)
      throw ValidationError("synth: video_seconds must divide the per-coach duration");
    if (min_episode_frames < 1 || max_episode_frames < min_episode_frames)
      throw ValidationError("synth: invalid episode length range");
    if (rater_noise < 0.0) throw ValidationError("synth: rater_noise must be >= 0");
    if (unreliable_raters < 0 || unreliable_raters > annotators)
      throw ValidationError("synth: unreliable_raters out of range");
  }
};

struct GroundTruthVideo {
  std::string coach_id;
  std::string video_id;
  std::vector<double> sentiment;
  std::vector<double> direction;
  std::vector<int> humor;
};

struct SynthCorpus {
  std::vector<AnnotationSignal> annotations;
  std::vector<GroundTruthVideo> ground_truth;
  FeatureStore features;  ///< audio, video and sentence-aligned text
  std::map<std::string, std::vector<SentenceFeatureSpan>> sentences;
  std::map<std::string, std::vector<std::string>> unreliable;  ///< coach -> unreliable annotator ids
};

inline std::string numbered(const std::string& prefix, int i) {
  std::ostringstream os;
  os << prefix << std::setw(2) << std::setfill('0') << i;
  return os.str();
}

namespace detail {

struct Episode {
  int start;
  int length;
  double sentiment;
  double direction;
};

inline Eigen::VectorXd unit_vector(Eigen::Index dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v(i) = n(rng);
  return v / v.norm();
}

inline Episode draw_style(int start, int length, const std::array<double, 4>& weights, std::mt19937_64& rng) {
  std::discrete_distribution<int> style(weights.begin(), weights.end());
  std::uniform_real_distribution<double> mag(0.4, 1.0);
  const int s = style(rng);
  const double dir = s < 2 ? -1.0 : 1.0;
  const double sen = s % 2 == 0 ? -1.0 : 1.0;
  return {start, length, sen * mag(rng), dir * mag(rng)};
}

}  // namespace detail

inline SynthCorpus synth_corpus(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Modality patterns shared by all coaches.
  const Eigen::VectorXd video_humor = detail::unit_vector(config.video_dim, rng);
  const Eigen::VectorXd video_style = detail::unit_vector(config.video_dim, rng);
  const Eigen::VectorXd audio_humor = detail::unit_vector(config.audio_dim, rng);
  const Eigen::VectorXd text_humor = detail::unit_vector(config.text_dim, rng);

  SynthCorpus corpus;
  const int frames = config.video_seconds * 2;
  const int videos_per_coach = config.minutes * 60 / config.video_seconds;
  const double noise = config.rater_noise;

  for (int c = 1; c <= config.coaches; ++c) {
    const auto coach = numbered("c", c);
    std::vector<std::string> annotators;
    for (int a = 1; a <= config.annotators; ++a) annotators.push_back(numbered("a", a));
    std::vector<std::string> shuffled = annotators;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    std::vector<bool> unreliable(static_cast<std::size_t>(config.annotators), false);
    for (int u = 0; u < config.unreliable_raters; ++u) {
      const auto idx = static_cast<std::size_t>(std::stoi(shuffled[static_cast<std::size_t>(u)].substr(1)) - 1);
      unreliable[idx] = true;
      corpus.unreliable[coach].push_back(shuffled[static_cast<std::size_t>(u)]);
    }
    std::sort(corpus.unreliable[coach].begin(), corpus.unreliable[coach].end());

    std::vector<double> scale(annotators.size()), lag(annotators.size());
    for (std::size_t a = 0; a < annotators.size(); ++a) {
      scale[a] = 1.0 + noise * config.scale_jitter * (2.0 * unit(rng) - 1.0);
      lag[a] = std::floor(unit(rng) * (config.max_lag + 1) * std::min(noise, 1.0));
    }
    Eigen::VectorXd offset_v(config.video_dim), offset_a(config.audio_dim), offset_t(config.text_dim);
    for (auto* o : {&offset_v, &offset_a, &offset_t})
      for (Eigen::Index i = 0; i < o->size(); ++i) (*o)(i) = config.coach_offset * gauss(rng);

    for (int v = 1; v <= videos_per_coach; ++v) {
      const auto video = coach + "_" + numbered("v", v);
      GroundTruthVideo gt{coach, video, std::vector<double>(frames, 0.0), std::vector<double>(frames, 0.0),
                          std::vector<int>(frames, 0)};
      std::vector<detail::Episode> episodes;
      std::uniform_int_distribution<int> ep_len(config.min_episode_frames, config.max_episode_frames);
      for (int t = 0; t < frames;) {
        if (unit(rng) < config.episode_rate) {
          const int len = std::min(ep_len(rng), frames - t);
          episodes.push_back(detail::draw_style(t, len, config.style_weights, rng));
          for (int k = t; k < t + len; ++k) {
            gt.sentiment[static_cast<std::size_t>(k)] = episodes.back().sentiment;
            gt.direction[static_cast<std::size_t>(k)] = episodes.back().direction;
            gt.humor[static_cast<std::size_t>(k)] = 1;
          }
          t += len + 1;
        } else {
          ++t;
        }
      }

      for (std::size_t a = 0; a < annotators.size(); ++a) {
        AnnotationSignal sen{coach, video, annotators[a], Dimension::sentiment, std::vector<double>(frames, 0.0)};
        AnnotationSignal dir{coach, video, annotators[a], Dimension::direction, std::vector<double>(frames, 0.0)};
        const double factor = unreliable[a] ? config.unreliable_factor : 1.0;
        const double miss = std::min(1.0, noise * config.miss_prob * factor);
        const double flip = std::min(1.0, noise * config.flip_prob * factor);
        const double spurious = std::min(1.0, noise * config.false_rate * factor);
        auto paint = [&](const detail::Episode& e, int shift) {
          const double s_sign = unit(rng) < flip ? -1.0 : 1.0;
          const double d_sign = unit(rng) < flip ? -1.0 : 1.0;
          for (int k = e.start + shift; k < e.start + shift + e.length; ++k) {
            if (k < 0 || k >= frames) continue;
            const double js = noise * config.amplitude_jitter * gauss(rng);
            const double jd = noise * config.amplitude_jitter * gauss(rng);
            auto amp = [&](double value, double sign, double jitter) {
              if (noise == 0.0) return value;
              const double m = std::clamp(std::abs(value) * scale[a] + jitter, 0.05, 1.0);
              return std::copysign(m, value * sign);
            };
            sen.values[static_cast<std::size_t>(k)] = amp(e.sentiment, s_sign, js);
            dir.values[static_cast<std::size_t>(k)] = amp(e.direction, d_sign, jd);
          }
        };
        for (const auto& e : episodes) {
          if (noise > 0.0 && unit(rng) < miss) continue;
          paint(e, static_cast<int>(lag[a]));
        }
        if (spurious > 0.0) {
          for (int t = 0; t < frames; ++t)
            if (unit(rng) < spurious) paint(detail::draw_style(t, ep_len(rng), config.style_weights, rng), 0);
        }
        corpus.annotations.push_back(std::move(sen));
        corpus.annotations.push_back(std::move(dir));
      }

      // Features.
      FeatureSequence fv{video, Modality::video, Eigen::MatrixXd(frames, config.video_dim)};
      FeatureSequence fa{video, Modality::audio, Eigen::MatrixXd(frames, config.audio_dim)};
      for (int t = 0; t < frames; ++t) {
        const auto ts = static_cast<std::size_t>(t);
        const double h = gt.humor[ts];
        const double style = gt.sentiment[ts] > 0.0 ? 1.0 : gt.sentiment[ts] < 0.0 ? -1.0 : 0.0;
        for (Eigen::Index i = 0; i < config.video_dim; ++i)
          fv.vectors(t, i) = gauss(rng) + offset_v(i) + config.video_strength * h * video_humor(i) +
                             0.5 * config.video_strength * style * video_style(i);
        for (Eigen::Index i = 0; i < config.audio_dim; ++i)
          fa.vectors(t, i) = gauss(rng) + offset_a(i) + config.audio_strength * h * audio_humor(i);
      }
      std::vector<SentenceFeatureSpan> spans;
      std::uniform_int_distribution<int> sent_len(8, 24), gap(0, 2);
      for (int t = gap(rng); t < frames;) {
        const int len = std::min(sent_len(rng), frames - t);
        double humorous = 0.0;
        for (int k = t; k < t + len; ++k) humorous += gt.humor[static_cast<std::size_t>(k)];
        SentenceFeatureSpan s{video, static_cast<long long>(t) * kFrameMs, static_cast<long long>(t + len) * kFrameMs,
                              Eigen::VectorXd(config.text_dim)};
        for (Eigen::Index i = 0; i < config.text_dim; ++i)
          s.vector(i) = gauss(rng) + offset_t(i) + config.text_strength * (humorous / len) * 4.0 * text_humor(i);
        spans.push_back(std::move(s));
        t += len + gap(rng);
      }
      corpus.features.emplace(std::make_pair(video, Modality::text),
                              align_sentences(video, spans, frames, config.text_dim));
      corpus.sentences[video] = std::move(spans);
      corpus.features.emplace(std::make_pair(video, Modality::video), std::move(fv));
      corpus.features.emplace(std::make_pair(video, Modality::audio), std::move(fa));
      corpus.ground_truth.push_back(std::move(gt));
    }
  }
  return corpus;
}

inline void write_ground_truth(const std::string& path, const std::vector<GroundTruthVideo>& videos) {
  csv::Writer w(path);
  w.row("coach_id", "video_id", "t_ms", "humor", "sentiment", "direction");
  for (const auto& g : videos)
    for (std::size_t t = 0; t < g.humor.size(); ++t)
      w.row(g.coach_id, g.video_id, static_cast<long long>(t) * kFrameMs, g.humor[t], g.sentiment[t], g.direction[t]);
}

/// Segment table labelled directly by the planted episodes: a window is humorous iff it
/// overlaps an episode, with the ground-truth sentiment and direction mean-pooled.
inline SegmentTable ground_truth_segments(const std::vector<GroundTruthVideo>& videos, GoldConfig config = {}) {
  config.humor_quorum = 1;
  SegmentTable out;
  for (const auto& g : videos) {
    BinarySequence labels(g.humor.begin(), g.humor.end());
    const auto humor = segment_binary({labels}, config);
    auto rows = segment_dimensions(g.coach_id, g.video_id, g.sentiment, g.direction, humor, config);
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

/// Writes annotations.csv, ground_truth.csv, ground_truth_segments.csv, sentences.csv and
/// features/<video>.<modality>.csv.
inline void write_corpus(const std::string& dir, const SynthCorpus& corpus) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "features");
  write_annotations((fs::path(dir) / "annotations.csv").string(), corpus.annotations);
  write_ground_truth((fs::path(dir) / "ground_truth.csv").string(), corpus.ground_truth);
  write_segments((fs::path(dir) / "ground_truth_segments.csv").string(), ground_truth_segments(corpus.ground_truth));
  write_sentences((fs::path(dir) / "sentences.csv").string(), corpus.sentences);
  for (const auto& [key, f] : corpus.features)
    write_features_csv((fs::path(dir) / "features" / (key.first + "." + to_string(key.second) + ".csv")).string(), f);
}

}  // namespace humorfuse
