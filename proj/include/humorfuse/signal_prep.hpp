#pragma once

// Per-annotator preprocessing of continuous 2 Hz humor annotations:
// amplitude thresholding, outlier clipping and min-max normalisation.
// Zero frames mean "no humor" and are excluded from all statistics.

#include <algorithm>
#include <cmath>
#include <compare>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "humorfuse/csv.hpp"
#include "humorfuse/error.hpp"

namespace humorfuse {

inline constexpr int kFrameMs = 500;

enum class Dimension { sentiment, direction };

inline std::string to_string(Dimension d) { return d == Dimension::sentiment ? "sentiment" : "direction"; }

inline Dimension parse_dimension(const std::string& s) {
  if (s == "sentiment") return Dimension::sentiment;
  if (s == "direction") return Dimension::direction;
  throw ValidationError("unknown dimension '" + s + "'");
}

struct SignalKey {
  std::string coach_id;
  std::string video_id;
  std::string annotator_id;
  Dimension dimension = Dimension::sentiment;

  auto operator<=>(const SignalKey&) const = default;
};

/// One rater's continuous signal for one video and one dimension, one value per 500 ms.
struct AnnotationSignal {
  std::string coach_id;
  std::string video_id;
  std::string annotator_id;
  Dimension dimension = Dimension::sentiment;
  std::vector<double> values;

  SignalKey key() const { return {coach_id, video_id, annotator_id, dimension}; }
};

enum class NormalizeMode {
  signed_separate,  ///< positives scaled by max positive, negatives by |min negative|
  global,           ///< nonzero values mapped affinely from [min, max] onto [-1, 1]
};

struct PreprocessConfig {
  double amplitude_threshold = 0.05;
  double outlier_sigma = 2.5;
  NormalizeMode normalize_mode = NormalizeMode::signed_separate;

  void validate() const {
    if (!(amplitude_threshold >= 0.0) || !std::isfinite(amplitude_threshold))
      throw ValidationError("amplitude_threshold must be a finite nonnegative number");
    if (!(outlier_sigma > 0.0) || !std::isfinite(outlier_sigma))
      throw ValidationError("outlier_sigma must be positive");
  }
};

inline void validate_signal(const AnnotationSignal& s) {
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    if (!std::isfinite(s.values[i])) {
      throw ValidationError("signal " + s.coach_id + "/" + s.video_id + "/" + s.annotator_id + "/" +
                            to_string(s.dimension) + ": non-finite value at frame " + std::to_string(i));
    }
  }
}

namespace detail {

struct NonzeroMoments {
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population
};

inline NonzeroMoments nonzero_moments(const std::vector<std::vector<double>*>& group) {
  NonzeroMoments m;
  double sum = 0.0;
  for (const auto* values : group)
    for (double v : *values)
      if (v != 0.0) {
        sum += v;
        ++m.count;
      }
  if (m.count == 0) return m;
  m.mean = sum / static_cast<double>(m.count);
  double ss = 0.0;
  for (const auto* values : group)
    for (double v : *values)
      if (v != 0.0) ss += (v - m.mean) * (v - m.mean);
  m.stddev = std::sqrt(ss / static_cast<double>(m.count));
  return m;
}

inline void threshold_group(const std::vector<std::vector<double>*>& group, double eps) {
  for (auto* values : group)
    for (double& v : *values)
      if (std::abs(v) < eps) v = 0.0;
}

inline void clip_group(const std::vector<std::vector<double>*>& group, double sigma) {
  const auto m = nonzero_moments(group);
  if (m.count < 2) return;
  const double lo = m.mean - sigma * m.stddev;
  const double hi = m.mean + sigma * m.stddev;
  for (auto* values : group)
    for (double& v : *values)
      if (v != 0.0) v = std::clamp(v, lo, hi);
}

inline void normalize_group(const std::vector<std::vector<double>*>& group, NormalizeMode mode) {
  double max_pos = 0.0;
  double min_neg = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto* values : group)
    for (double v : *values) {
      if (v == 0.0) continue;
      max_pos = std::max(max_pos, v);
      min_neg = std::min(min_neg, v);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (mode == NormalizeMode::signed_separate) {
    for (auto* values : group)
      for (double& v : *values) {
        if (v > 0.0) v /= max_pos;
        else if (v < 0.0) v /= -min_neg;
      }
    return;
  }
  if (!(hi > lo)) return;
  for (auto* values : group)
    for (double& v : *values)
      if (v != 0.0) v = 2.0 * (v - lo) / (hi - lo) - 1.0;
}

}  // namespace detail

/// Zeroes every value with |v| < eps.
inline AnnotationSignal threshold_small_amplitudes(AnnotationSignal signal, double eps) {
  if (!(eps >= 0.0)) throw ValidationError("threshold must be nonnegative");
  validate_signal(signal);
  detail::threshold_group({&signal.values}, eps);
  return signal;
}

/// Clamps nonzero values to mean +- sigma * std, both computed over nonzero values only.
inline AnnotationSignal clip_outliers(AnnotationSignal signal, double sigma) {
  if (!(sigma > 0.0)) throw ValidationError("outlier sigma must be positive");
  detail::clip_group({&signal.values}, sigma);
  return signal;
}

inline AnnotationSignal minmax_normalize(AnnotationSignal signal,
                                         NormalizeMode mode = NormalizeMode::signed_separate) {
  detail::normalize_group({&signal.values}, mode);
  return signal;
}

/// Applies threshold, clip and normalize, in that order, per (annotator, dimension) group.
/// Statistics of a group are pooled over all videos that annotator rated.
inline std::vector<AnnotationSignal> preprocess_all(std::vector<AnnotationSignal> signals,
                                                    const PreprocessConfig& config) {
  config.validate();
  std::set<SignalKey> seen;
  for (const auto& s : signals) {
    validate_signal(s);
    if (!seen.insert(s.key()).second) {
      throw ValidationError("duplicate signal " + s.coach_id + "/" + s.video_id + "/" + s.annotator_id +
                            "/" + to_string(s.dimension));
    }
  }
  std::map<std::pair<std::string, Dimension>, std::vector<std::vector<double>*>> groups;
  for (auto& s : signals) groups[{s.annotator_id, s.dimension}].push_back(&s.values);
  for (auto& [key, group] : groups) {
    detail::threshold_group(group, config.amplitude_threshold);
    detail::clip_group(group, config.outlier_sigma);
    detail::normalize_group(group, config.normalize_mode);
  }
  return signals;
}

/// Reads `coach_id,video_id,annotator_id,dimension,t_ms,value`. Frames not listed are zero.
/// A video's length is its largest listed frame index + 1 across all of its rows.
inline std::vector<AnnotationSignal> read_annotations(const std::string& path) {
  const auto table = csv::Table::read(path);
  table.require_exact({"coach_id", "video_id", "annotator_id", "dimension", "t_ms", "value"});

  struct Entry {
    std::size_t frame;
    double value;
    std::size_t line;
  };
  std::map<SignalKey, std::vector<Entry>> entries;
  std::map<std::pair<std::string, std::string>, std::size_t> video_frames;
  std::map<std::string, std::set<std::string>> coach_annotators;
  std::map<std::string, std::string> video_coach;

  for (const auto& row : table.rows()) {
    SignalKey key{table.text(row, 0), table.text(row, 1), table.text(row, 2), Dimension::sentiment};
    try {
      key.dimension = parse_dimension(table.text(row, 3));
    } catch (const ValidationError& e) {
      throw ValidationError(table.where(row) + ": " + e.what());
    }
    const auto t_ms = table.integer(row, 4);
    if (t_ms < 0 || t_ms % kFrameMs != 0) {
      throw ValidationError(table.where(row) + ": t_ms must be a nonnegative multiple of 500");
    }
    const double value = table.real(row, 5);
    const auto frame = static_cast<std::size_t>(t_ms / kFrameMs);
    auto [it, inserted] = video_coach.emplace(key.video_id, key.coach_id);
    if (!inserted && it->second != key.coach_id) {
      throw ValidationError(table.where(row) + ": video '" + key.video_id + "' belongs to two coaches");
    }
    auto& n = video_frames[{key.coach_id, key.video_id}];
    n = std::max(n, frame + 1);
    coach_annotators[key.coach_id].insert(key.annotator_id);
    entries[key].push_back({frame, value, row.line});
  }

  std::vector<AnnotationSignal> out;
  for (const auto& [video, frames] : video_frames) {
    for (const auto& annotator : coach_annotators[video.first]) {
      for (auto dim : {Dimension::sentiment, Dimension::direction}) {
        AnnotationSignal s{video.first, video.second, annotator, dim, std::vector<double>(frames, 0.0)};
        std::vector<bool> set(frames, false);
        if (auto it = entries.find(s.key()); it != entries.end()) {
          for (const auto& e : it->second) {
            if (set[e.frame]) {
              throw ValidationError(path + ":" + std::to_string(e.line) + ": duplicate frame " +
                                    std::to_string(e.frame));
            }
            set[e.frame] = true;
            s.values[e.frame] = e.value;
          }
        }
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

/// Writes every frame of every signal, sorted by key then time.
inline void write_annotations(const std::string& path, std::vector<AnnotationSignal> signals) {
  std::sort(signals.begin(), signals.end(),
            [](const AnnotationSignal& a, const AnnotationSignal& b) { return a.key() < b.key(); });
  csv::Writer w(path);
  w.row("coach_id", "video_id", "annotator_id", "dimension", "t_ms", "value");
  for (const auto& s : signals)
    for (std::size_t t = 0; t < s.values.size(); ++t)
      w.row(s.coach_id, s.video_id, s.annotator_id, to_string(s.dimension),
            static_cast<long long>(t) * kFrameMs, s.values[t]);
}

}  // namespace humorfuse
