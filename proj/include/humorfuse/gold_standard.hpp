#pragma once

// Gold-standard creation: agreement-weighted fusion of annotator signals per
// coach, annotator dropping, 2 s / 1 s windowing into humor segments and the
// distribution statistics over the resulting segment table.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "humorfuse/agreement.hpp"
#include "humorfuse/csv.hpp"
#include "humorfuse/error.hpp"
#include "humorfuse/signal_prep.hpp"

namespace humorfuse {

/// annotator -> video -> values, for one coach and one dimension.
using CoachSignals = std::map<std::string, std::map<std::string, std::vector<double>>>;

/// annotator -> concatenated values at active frames.
using ActiveFrameSignals = std::map<std::string, std::vector<double>>;

struct AnnotatorWeight {
  std::string annotator_id;
  double w_prime = 0.0;         ///< mean CCC of raw signals against every other annotator
  double w_double_prime = 0.0;  ///< mean CCC of absolute signals
  double w = 0.0;               ///< normalized final weight
};

struct AnnotatorWeights {
  std::string coach_id;
  Dimension dimension = Dimension::sentiment;
  std::vector<AnnotatorWeight> entries;  // sorted by annotator_id

  double sum() const {
    double s = 0.0;
    for (const auto& e : entries) s += e.w;
    return s;
  }
  std::optional<double> weight_of(const std::string& annotator) const {
    for (const auto& e : entries)
      if (e.annotator_id == annotator) return e.w;
    return std::nullopt;
  }
};

struct Segment {
  std::string coach_id;
  std::string video_id;
  int segment_index = 0;
  long long start_ms = 0;
  long long end_ms = 0;
  int humor = 0;
  double sentiment = 0.0;
  double direction = 0.0;
};

using SegmentTable = std::vector<Segment>;

struct GoldConfig {
  int humor_quorum = 3;
  int drop_count = 3;
  bool per_video_drop = false;
  int frame_ms = 2000;
  int hop_ms = 1000;

  int frame_len() const { return frame_ms / kFrameMs; }
  int hop_len() const { return hop_ms / kFrameMs; }

  void validate() const {
    if (frame_ms <= 0 || hop_ms <= 0 || frame_ms % kFrameMs != 0 || hop_ms % kFrameMs != 0)
      throw ValidationError("window frame and hop must be positive multiples of 500 ms");
    if (humor_quorum < 1) throw ValidationError("humor quorum must be >= 1");
    if (drop_count < 0) throw ValidationError("drop count must be >= 0");
  }
};

/// Keeps frames where at least one annotator is nonzero, concatenated in (video, frame) order.
inline ActiveFrameSignals active_frames(const CoachSignals& signals) {
  ActiveFrameSignals out;
  if (signals.empty()) return out;
  const auto& reference = signals.begin()->second;
  for (const auto& [annotator, videos] : signals) {
    out[annotator];
    if (videos.size() != reference.size())
      throw ValidationError("active_frames: annotator '" + annotator + "' does not cover every video");
    for (const auto& [video, values] : videos) {
      auto ref = reference.find(video);
      if (ref == reference.end())
        throw ValidationError("active_frames: annotator '" + annotator + "' has unexpected video '" + video + "'");
      if (ref->second.size() != values.size())
        throw ValidationError("active_frames: inconsistent length for video '" + video + "'");
    }
  }
  for (const auto& [video, ref_values] : reference) {
    for (std::size_t t = 0; t < ref_values.size(); ++t) {
      bool active = false;
      for (const auto& [annotator, videos] : signals) active = active || videos.at(video)[t] != 0.0;
      if (!active) continue;
      for (const auto& [annotator, videos] : signals) out[annotator].push_back(videos.at(video)[t]);
    }
  }
  return out;
}

/// Normalizes per-annotator agreement sums into weights. Negative sums count as zero;
/// an all-zero total falls back to uniform weights.
inline std::vector<double> normalize_weights(const std::vector<double>& sums) {
  std::vector<double> w(sums.size(), 0.0);
  if (sums.empty()) return w;
  double total = 0.0;
  for (double s : sums) total += std::max(s, 0.0);
  if (!(total > 0.0) || !std::isfinite(total)) {
    warn("annotator agreement sums are not positive; using uniform weights");
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(sums.size()));
    return w;
  }
  for (std::size_t i = 0; i < sums.size(); ++i) w[i] = std::max(sums[i], 0.0) / total;
  return w;
}

inline AnnotatorWeights uniform_weights(const std::vector<std::string>& annotators) {
  AnnotatorWeights out;
  for (const auto& a : annotators) out.entries.push_back({a, 0.0, 0.0, 1.0 / static_cast<double>(annotators.size())});
  return out;
}

/// Agreement-based annotator weights: mean pairwise CCC on raw and on absolute signals,
/// summed and normalized over annotators.
inline AnnotatorWeights compute_weights(const ActiveFrameSignals& active) {
  if (active.size() < 2) throw ValidationError("compute_weights: need >= 2 annotators");
  const std::size_t len = active.begin()->second.size();
  for (const auto& [a, x] : active)
    if (x.size() != len) throw ValidationError("compute_weights: active signals differ in length");
  if (len < 2) throw ValidationError("compute_weights: need >= 2 active frames");

  std::vector<std::string> ids;
  std::vector<std::vector<double>> raw, absolute;
  for (const auto& [a, x] : active) {
    ids.push_back(a);
    raw.push_back(x);
    std::vector<double> ax(x.size());
    std::transform(x.begin(), x.end(), ax.begin(), [](double v) { return std::abs(v); });
    absolute.push_back(std::move(ax));
  }
  const std::size_t n = ids.size();
  std::vector<std::vector<double>> c_raw(n, std::vector<double>(n, 0.0)), c_abs = c_raw;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      c_raw[i][j] = c_raw[j][i] = ccc(raw[i], raw[j]);
      c_abs[i][j] = c_abs[j][i] = ccc(absolute[i], absolute[j]);
    }

  AnnotatorWeights out;
  std::vector<double> sums;
  for (std::size_t i = 0; i < n; ++i) {
    double wp = 0.0, wpp = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      wp += c_raw[i][j];
      wpp += c_abs[i][j];
    }
    wp /= static_cast<double>(n - 1);
    wpp /= static_cast<double>(n - 1);
    out.entries.push_back({ids[i], wp, wpp, 0.0});
    sums.push_back(wp + wpp);
  }
  const auto w = normalize_weights(sums);
  for (std::size_t i = 0; i < n; ++i) out.entries[i].w = w[i];
  return out;
}

/// fused[t] = sum_a w_a x_a[t].
///
/// Evaluated as x_0[t] + sum_a w_a (x_a[t] - x_0[t]), which equals the weighted sum
/// when the weights sum to one and reproduces identical inputs bit-exactly.
inline std::vector<double> fuse(const std::map<std::string, std::vector<double>>& signals,
                                const AnnotatorWeights& weights) {
  if (signals.empty()) throw ValidationError("fuse: no signals");
  for (const auto& e : weights.entries)
    if (!signals.contains(e.annotator_id))
      throw ValidationError("fuse: weighted annotator '" + e.annotator_id + "' has no signal");
  const auto& anchor = signals.begin()->second;
  std::vector<double> out(anchor);
  for (const auto& [a, x] : signals) {
    const auto w = weights.weight_of(a);
    if (!w) throw ValidationError("fuse: annotator '" + a + "' missing from weights");
    if (x.size() != anchor.size()) throw ValidationError("fuse: signal length mismatch");
  }
  for (std::size_t t = 0; t < anchor.size(); ++t) {
    double delta = 0.0;
    for (const auto& [a, x] : signals) delta += *weights.weight_of(a) * (x[t] - anchor[t]);
    out[t] = anchor[t] + delta;
  }
  return out;
}

/// video -> annotator -> binary humor labels.
using VideoLabels = std::map<std::string, std::map<std::string, BinarySequence>>;

/// Mean pairwise Jaccard agreement of each annotator, averaged over videos.
inline std::map<std::string, double> mean_jaccard_agreement(const VideoLabels& labels) {
  std::map<std::string, double> sum;
  std::map<std::string, std::size_t> count;
  for (const auto& [video, per_annotator] : labels) {
    if (per_annotator.size() < 2) continue;
    for (const auto& [a, la] : per_annotator) {
      double s = 0.0;
      for (const auto& [b, lb] : per_annotator)
        if (a != b) s += jaccard(la, lb);
      sum[a] += s / static_cast<double>(per_annotator.size() - 1);
      ++count[a];
    }
  }
  std::map<std::string, double> out;
  for (const auto& [a, s] : sum) out[a] = s / static_cast<double>(count[a]);
  return out;
}

/// Drops the k annotators with lowest mean Jaccard agreement; ties drop the smaller id first.
/// Returns the retained annotator ids in ascending order.
inline std::vector<std::string> drop_low_agreement(const VideoLabels& labels, int k) {
  std::set<std::string> annotators;
  for (const auto& [video, per_annotator] : labels)
    for (const auto& [a, l] : per_annotator) annotators.insert(a);
  if (k < 0 || static_cast<std::size_t>(k) >= annotators.size())
    throw ValidationError("drop_low_agreement: cannot drop " + std::to_string(k) + " of " +
                          std::to_string(annotators.size()) + " annotators");
  const auto agreement = mean_jaccard_agreement(labels);
  std::vector<std::pair<double, std::string>> ranked;
  for (const auto& a : annotators) {
    auto it = agreement.find(a);
    ranked.emplace_back(it == agreement.end() ? 0.0 : it->second, a);
  }
  std::sort(ranked.begin(), ranked.end());
  std::vector<std::string> retained;
  for (std::size_t i = static_cast<std::size_t>(k); i < ranked.size(); ++i) retained.push_back(ranked[i].second);
  std::sort(retained.begin(), retained.end());
  return retained;
}

/// Number of full windows of `frame` samples with hop `hop` over `length` samples.
inline std::size_t window_count(std::size_t length, std::size_t frame, std::size_t hop) {
  if (length < frame) return 0;
  return (length - frame) / hop + 1;
}

/// Humor label per window: 1 iff at least `quorum` annotators have a nonzero frame inside it.
inline std::vector<int> segment_binary(const std::vector<BinarySequence>& retained_labels, const GoldConfig& config) {
  config.validate();
  if (retained_labels.size() < static_cast<std::size_t>(config.humor_quorum))
    throw ValidationError("segment_binary: fewer retained annotators than the humor quorum");
  const std::size_t len = retained_labels.empty() ? 0 : retained_labels.front().size();
  for (const auto& l : retained_labels)
    if (l.size() != len) throw ValidationError("segment_binary: label length mismatch");
  const auto frame = static_cast<std::size_t>(config.frame_len());
  const auto hop = static_cast<std::size_t>(config.hop_len());
  const auto n = window_count(len, frame, hop);
  if (n == 0) warn("video shorter than one window (" + std::to_string(len) + " frames) yields no segments");
  std::vector<int> humor(n, 0);
  for (std::size_t w = 0; w < n; ++w) {
    int active = 0;
    for (const auto& l : retained_labels)
      active += std::any_of(l.begin() + static_cast<std::ptrdiff_t>(w * hop),
                            l.begin() + static_cast<std::ptrdiff_t>(w * hop + frame), [](auto v) { return v != 0; });
    humor[w] = active >= config.humor_quorum ? 1 : 0;
  }
  return humor;
}

/// Mean-pools fused signals per window and zeroes windows without humor.
inline SegmentTable segment_dimensions(const std::string& coach_id, const std::string& video_id,
                                       const std::vector<double>& sentiment, const std::vector<double>& direction,
                                       const std::vector<int>& humor, const GoldConfig& config) {
  if (sentiment.size() != direction.size()) throw ValidationError("segment_dimensions: fused length mismatch");
  const auto frame = static_cast<std::size_t>(config.frame_len());
  const auto hop = static_cast<std::size_t>(config.hop_len());
  if (window_count(sentiment.size(), frame, hop) != humor.size())
    throw ValidationError("segment_dimensions: humor column does not match the window grid");
  SegmentTable out;
  for (std::size_t w = 0; w < humor.size(); ++w) {
    double s = 0.0, d = 0.0;
    for (std::size_t t = w * hop; t < w * hop + frame; ++t) {
      s += sentiment[t];
      d += direction[t];
    }
    Segment seg;
    seg.coach_id = coach_id;
    seg.video_id = video_id;
    seg.segment_index = static_cast<int>(w);
    seg.start_ms = static_cast<long long>(w) * config.hop_ms;
    seg.end_ms = seg.start_ms + config.frame_ms;
    seg.humor = humor[w];
    seg.sentiment = humor[w] ? s / static_cast<double>(frame) : 0.0;
    seg.direction = humor[w] ? d / static_cast<double>(frame) : 0.0;
    out.push_back(std::move(seg));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus-level pipeline

struct GoldSignals {
  std::vector<double> sentiment;
  std::vector<double> direction;
};

struct GoldResult {
  std::vector<AnnotatorWeights> weights;                                   // per (coach, dimension)
  std::map<std::pair<std::string, std::string>, GoldSignals> gold;       // (coach, video)
};

namespace detail {

struct CoachView {
  std::map<Dimension, CoachSignals> signals;  // dimension -> annotator -> video -> values
};

inline std::map<std::string, CoachView> by_coach(const std::vector<AnnotationSignal>& signals) {
  std::map<std::string, CoachView> out;
  for (const auto& s : signals) {
    auto& slot = out[s.coach_id].signals[s.dimension][s.annotator_id][s.video_id];
    if (!slot.empty()) throw ValidationError("duplicate signal for " + s.coach_id + "/" + s.video_id + "/" + s.annotator_id);
    slot = s.values;
  }
  return out;
}

}  // namespace detail

/// Computes per-coach weights for both dimensions and the fused signals of every video.
inline GoldResult fuse_gold(const std::vector<AnnotationSignal>& signals) {
  GoldResult result;
  for (const auto& [coach, view] : detail::by_coach(signals)) {
    for (auto dim : {Dimension::sentiment, Dimension::direction}) {
      auto it = view.signals.find(dim);
      if (it == view.signals.end()) throw ValidationError("coach " + coach + " lacks " + to_string(dim) + " signals");
      const auto& per_annotator = it->second;
      std::vector<std::string> ids;
      for (const auto& [a, v] : per_annotator) ids.push_back(a);
      AnnotatorWeights weights;
      if (ids.size() == 1) {
        weights = uniform_weights(ids);
      } else {
        const auto active = active_frames(per_annotator);
        if (active.begin()->second.size() < 2) {
          warn("coach " + coach + " has fewer than two active " + to_string(dim) + " frames; using uniform weights");
          weights = uniform_weights(ids);
        } else {
          weights = compute_weights(active);
        }
      }
      weights.coach_id = coach;
      weights.dimension = dim;

      std::map<std::string, std::map<std::string, std::vector<double>>> per_video;
      for (const auto& [a, videos] : per_annotator)
        for (const auto& [video, values] : videos) per_video[video][a] = values;
      for (const auto& [video, sigs] : per_video) {
        auto fused = fuse(sigs, weights);
        auto& g = result.gold[{coach, video}];
        (dim == Dimension::sentiment ? g.sentiment : g.direction) = std::move(fused);
      }
      result.weights.push_back(std::move(weights));
    }
  }
  return result;
}

/// Builds the segment table from preprocessed annotations and fused gold signals.
inline SegmentTable segment_gold(const std::vector<AnnotationSignal>& signals,
                                 const std::map<std::pair<std::string, std::string>, GoldSignals>& gold,
                                 const GoldConfig& config) {
  config.validate();
  std::map<std::string, VideoLabels> labels;  // coach -> video -> annotator -> labels
  {
    std::map<SignalKey, const AnnotationSignal*> index;
    for (const auto& s : signals) index[s.key()] = &s;
    for (const auto& s : signals) {
      if (s.dimension != Dimension::sentiment) continue;
      auto dir_key = s.key();
      dir_key.dimension = Dimension::direction;
      auto it = index.find(dir_key);
      if (it == index.end())
        throw ValidationError("missing direction signal for " + s.coach_id + "/" + s.video_id + "/" + s.annotator_id);
      labels[s.coach_id][s.video_id][s.annotator_id] = binary_humor(s, *it->second);
    }
  }

  SegmentTable table;
  for (const auto& [coach, videos] : labels) {
    std::vector<std::string> retained_global;
    if (!config.per_video_drop) retained_global = drop_low_agreement(videos, config.drop_count);
    for (const auto& [video, per_annotator] : videos) {
      std::vector<std::string> retained = retained_global;
      if (config.per_video_drop) retained = drop_low_agreement(VideoLabels{{video, per_annotator}}, config.drop_count);
      std::vector<BinarySequence> retained_labels;
      for (const auto& a : retained) retained_labels.push_back(per_annotator.at(a));
      const auto humor = segment_binary(retained_labels, config);
      auto g = gold.find({coach, video});
      if (g == gold.end()) throw ValidationError("no gold signal for " + coach + "/" + video);
      auto rows = segment_dimensions(coach, video, g->second.sentiment, g->second.direction, humor, config);
      table.insert(table.end(), std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end()));
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Distribution statistics

/// Shares among classified humorous segments; index [direction][sentiment],
/// 0 = self/negative, 1 = other/positive.
struct StyleShares {
  double cell[2][2] = {{0.0, 0.0}, {0.0, 0.0}};

  double direction_total(int d) const { return cell[d][0] + cell[d][1]; }
  double sentiment_total(int s) const { return cell[0][s] + cell[1][s]; }
};

struct CoachStats {
  std::string coach_id;
  std::size_t segments = 0;
  std::size_t humorous = 0;
  std::size_t unclassified = 0;  ///< humorous segments with a zero pooled sentiment or direction
  std::optional<StyleShares> shares;
};

struct CorpusStats {
  std::size_t segments = 0;
  std::size_t humorous = 0;
  std::size_t unclassified = 0;
  double humor_rate = 0.0;
  std::optional<StyleShares> shares;
  std::vector<CoachStats> per_coach;
  std::optional<StyleShares> coach_mean;  ///< mean over coaches with humorous segments
  std::optional<StyleShares> coach_std;   ///< population std over the same coaches
};

namespace detail {

inline std::optional<StyleShares> style_shares(const std::vector<const Segment*>& rows, std::size_t& unclassified) {
  double counts[2][2] = {{0, 0}, {0, 0}};
  double total = 0.0;
  for (const auto* s : rows) {
    if (!s->humor) continue;
    if (s->sentiment == 0.0 || s->direction == 0.0) {
      ++unclassified;
      continue;
    }
    counts[s->direction > 0.0][s->sentiment > 0.0] += 1.0;
    total += 1.0;
  }
  if (total == 0.0) return std::nullopt;
  StyleShares out;
  for (int d = 0; d < 2; ++d)
    for (int s = 0; s < 2; ++s) out.cell[d][s] = counts[d][s] / total;
  return out;
}

}  // namespace detail

inline CorpusStats corpus_stats(const SegmentTable& table) {
  if (table.empty()) throw ValidationError("corpus_stats: empty segment table");
  CorpusStats out;
  std::map<std::string, std::vector<const Segment*>> by_coach;
  std::vector<const Segment*> all;
  for (const auto& s : table) {
    by_coach[s.coach_id].push_back(&s);
    all.push_back(&s);
    out.humorous += s.humor ? 1 : 0;
  }
  out.segments = table.size();
  out.humor_rate = static_cast<double>(out.humorous) / static_cast<double>(out.segments);
  out.shares = detail::style_shares(all, out.unclassified);
  if (!out.shares) warn("no classified humorous segments; style shares undefined");

  std::vector<StyleShares> coach_shares;
  for (const auto& [coach, rows] : by_coach) {
    CoachStats cs;
    cs.coach_id = coach;
    cs.segments = rows.size();
    for (const auto* r : rows) cs.humorous += r->humor ? 1 : 0;
    cs.shares = detail::style_shares(rows, cs.unclassified);
    if (cs.shares) coach_shares.push_back(*cs.shares);
    out.per_coach.push_back(std::move(cs));
  }
  if (!coach_shares.empty()) {
    StyleShares mean, sd;
    const double n = static_cast<double>(coach_shares.size());
    for (int d = 0; d < 2; ++d)
      for (int s = 0; s < 2; ++s) {
        double m = 0.0;
        for (const auto& c : coach_shares) m += c.cell[d][s];
        m /= n;
        double v = 0.0;
        for (const auto& c : coach_shares) v += (c.cell[d][s] - m) * (c.cell[d][s] - m);
        mean.cell[d][s] = m;
        sd.cell[d][s] = std::sqrt(v / n);
      }
    out.coach_mean = mean;
    out.coach_std = sd;
  }
  return out;
}

// ---------------------------------------------------------------------------
// File interfaces

inline void write_weights(const std::string& path, const std::vector<AnnotatorWeights>& weights) {
  csv::Writer w(path);
  w.row("coach_id", "dimension", "annotator_id", "w_prime", "w_double_prime", "w");
  for (const auto& cw : weights)
    for (const auto& e : cw.entries) w.row(cw.coach_id, to_string(cw.dimension), e.annotator_id, e.w_prime, e.w_double_prime, e.w);
}

inline void write_gold(const std::string& path, const std::map<std::pair<std::string, std::string>, GoldSignals>& gold) {
  csv::Writer w(path);
  w.row("coach_id", "video_id", "t_ms", "sentiment", "direction");
  for (const auto& [key, g] : gold)
    for (std::size_t t = 0; t < g.sentiment.size(); ++t)
      w.row(key.first, key.second, static_cast<long long>(t) * kFrameMs, g.sentiment[t], g.direction[t]);
}

inline std::map<std::pair<std::string, std::string>, GoldSignals> read_gold(const std::string& path) {
  const auto table = csv::Table::read(path);
  table.require_exact({"coach_id", "video_id", "t_ms", "sentiment", "direction"});
  std::map<std::pair<std::string, std::string>, GoldSignals> out;
  for (const auto& row : table.rows()) {
    auto& g = out[{table.text(row, 0), table.text(row, 1)}];
    const auto t_ms = table.integer(row, 2);
    if (t_ms != static_cast<long long>(g.sentiment.size()) * kFrameMs)
      throw ValidationError(table.where(row) + ": gold frames must be contiguous and ordered");
    g.sentiment.push_back(table.real(row, 3));
    g.direction.push_back(table.real(row, 4));
  }
  return out;
}

inline void write_segments(const std::string& path, const SegmentTable& table) {
  csv::Writer w(path);
  w.row("coach_id", "video_id", "segment_index", "start_ms", "end_ms", "humor", "sentiment", "direction");
  for (const auto& s : table)
    w.row(s.coach_id, s.video_id, s.segment_index, s.start_ms, s.end_ms, s.humor, s.sentiment, s.direction);
}

inline SegmentTable read_segments(const std::string& path) {
  const auto table = csv::Table::read(path);
  table.require_exact({"coach_id", "video_id", "segment_index", "start_ms", "end_ms", "humor", "sentiment", "direction"});
  SegmentTable out;
  for (const auto& row : table.rows()) {
    Segment s;
    s.coach_id = table.text(row, 0);
    s.video_id = table.text(row, 1);
    s.segment_index = static_cast<int>(table.integer(row, 2));
    s.start_ms = table.integer(row, 3);
    s.end_ms = table.integer(row, 4);
    s.humor = static_cast<int>(table.integer(row, 5));
    s.sentiment = table.real(row, 6);
    s.direction = table.real(row, 7);
    if (s.humor != 0 && s.humor != 1) throw ValidationError(table.where(row) + ": humor must be 0 or 1");
    if (s.end_ms <= s.start_ms) throw ValidationError(table.where(row) + ": end_ms must exceed start_ms");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace humorfuse
