#pragma once

// Scoring and fusion: Mann-Whitney ROC-AUC, Platt calibration, z-standardized
// quality-weighted late fusion, and leave-one-coach-out result tables.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "humorfuse/csv.hpp"
#include "humorfuse/dataset_io.hpp"
#include "humorfuse/error.hpp"

namespace humorfuse {

/// Probability that a random positive outranks a random negative; ties count one half.
/// Labels > 0 are positive.
inline double roc_auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw ValidationError("roc_auc: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::uint64_t positives = 0, negatives = 0;
  std::uint64_t twice_wins = 0;  // 2 * (wins + ties / 2)
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::uint64_t p = 0, q = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] > 0.0 ? p : q) += 1;
      ++j;
    }
    twice_wins += 2 * p * negatives + p * q;
    positives += p;
    negatives += q;
    i = j;
  }
  if (positives == 0 || negatives == 0) throw ValidationError("roc_auc: undefined for single-class labels");
  return static_cast<double>(twice_wins) * 0.5 / static_cast<double>(positives * negatives);
}

inline bool has_both_classes(std::span<const double> labels) {
  bool pos = false, neg = false;
  for (double l : labels) (l > 0.0 ? pos : neg) = true;
  return pos && neg;
}

/// Logistic calibration p(s) = 1 / (1 + exp(A s + B)), fitted by regularized maximum
/// likelihood with smoothed targets using a damped Newton method with backtracking.
struct PlattScaler {
  double a = 0.0;
  double b = 0.0;
  int iterations = 0;

  static constexpr int kMaxIterations = 100;
  static constexpr double kTolerance = 1e-10;

  static PlattScaler fit(std::span<const double> scores, std::span<const double> labels) {
    if (scores.size() != labels.size()) throw ValidationError("platt: length mismatch");
    double n_pos = 0, n_neg = 0;
    for (double l : labels) (l > 0.0 ? n_pos : n_neg) += 1.0;
    if (n_pos == 0 || n_neg == 0) throw ValidationError("platt: training labels need both classes");
    const double hi = (n_pos + 1.0) / (n_pos + 2.0);
    const double lo = 1.0 / (n_neg + 2.0);
    std::vector<double> target(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) target[i] = labels[i] > 0.0 ? hi : lo;

    auto objective = [&](double a, double b) {
      double f = 0.0;
      for (std::size_t i = 0; i < scores.size(); ++i) {
        const double z = scores[i] * a + b;
        f += z >= 0.0 ? target[i] * z + std::log1p(std::exp(-z)) : (target[i] - 1.0) * z + std::log1p(std::exp(z));
      }
      return f;
    };

    PlattScaler out;
    out.a = 0.0;
    out.b = std::log((n_neg + 1.0) / (n_pos + 1.0));
    double f = objective(out.a, out.b);
    constexpr double kSigma = 1e-12;
    constexpr double kMinStep = 1e-10;
    for (out.iterations = 0; out.iterations < kMaxIterations; ++out.iterations) {
      double h11 = kSigma, h22 = kSigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
      for (std::size_t i = 0; i < scores.size(); ++i) {
        const double z = scores[i] * out.a + out.b;
        double p, q;  // p = 1 / (1 + exp(z)), q = 1 - p
        if (z >= 0.0) {
          p = std::exp(-z) / (1.0 + std::exp(-z));
          q = 1.0 / (1.0 + std::exp(-z));
        } else {
          p = 1.0 / (1.0 + std::exp(z));
          q = std::exp(z) / (1.0 + std::exp(z));
        }
        const double d2 = p * q;
        h11 += scores[i] * scores[i] * d2;
        h22 += d2;
        h21 += scores[i] * d2;
        const double d1 = target[i] - p;
        g1 += scores[i] * d1;
        g2 += d1;
      }
      if (std::abs(g1) < kTolerance && std::abs(g2) < kTolerance) return out;
      const double det = h11 * h22 - h21 * h21;
      const double da = -(h22 * g1 - h21 * g2) / det;
      const double db = -(-h21 * g1 + h11 * g2) / det;
      const double gd = g1 * da + g2 * db;
      double step = 1.0;
      bool moved = false;
      while (step >= kMinStep) {
        const double na = out.a + step * da, nb = out.b + step * db;
        const double nf = objective(na, nb);
        if (nf < f + 1e-4 * step * gd) {
          out.a = na;
          out.b = nb;
          f = nf;
          moved = true;
          break;
        }
        step /= 2.0;
      }
      if (!moved) {
        // No representable descent step is left: accept if the gradient is at rounding level.
        if (std::abs(g1) + std::abs(g2) < 1e-8 * static_cast<double>(scores.size())) return out;
        throw NumericalError("platt: line search failed at iteration " + std::to_string(out.iterations) +
                             " (|g| = " + std::to_string(std::abs(g1) + std::abs(g2)) + ")");
      }
    }
    throw NumericalError("platt: no convergence after " + std::to_string(kMaxIterations) + " iterations (A = " +
                         std::to_string(out.a) + ", B = " + std::to_string(out.b) + ")");
  }

  double operator()(double score) const {
    const double z = a * score + b;
    return z >= 0.0 ? std::exp(-z) / (1.0 + std::exp(-z)) : 1.0 / (1.0 + std::exp(z));
  }
};

// ---------------------------------------------------------------------------
// Prediction sets and late fusion

enum class Task { humor, sentiment, direction };

inline std::string to_string(Task t) {
  switch (t) {
    case Task::humor: return "humor";
    case Task::sentiment: return "sentiment";
    case Task::direction: return "direction";
  }
  return "humor";
}

inline Task parse_task(const std::string& s) {
  if (s == "humor") return Task::humor;
  if (s == "sentiment") return Task::sentiment;
  if (s == "direction") return Task::direction;
  throw ValidationError("unknown task '" + s + "'");
}

struct ScoredSegment {
  SegmentKey key;
  double score = 0.0;
};

struct PredictionSet {
  Task task = Task::humor;
  std::string source;
  std::vector<ScoredSegment> rows;
  double training_quality = 0.5;  ///< train AUC (SVM path) or best dev AUC (neural path)

  std::vector<double> scores() const {
    std::vector<double> s;
    s.reserve(rows.size());
    for (const auto& r : rows) s.push_back(r.score);
    return s;
  }
};

inline std::vector<double> z_standardize(std::span<const double> scores) {
  if (scores.size() < 2) throw ValidationError("z_standardize: need at least two scores");
  const double n = static_cast<double>(scores.size());
  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= n;
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> out(scores.size(), 0.0);
  if (sd == 0.0) {
    warn("z_standardize: constant scores map to zero");
    return out;
  }
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - mean) / sd;
  return out;
}

inline PredictionSet z_standardize(PredictionSet p) {
  const auto z = z_standardize(p.scores());
  for (std::size_t i = 0; i < z.size(); ++i) p.rows[i].score = z[i];
  return p;
}

/// Weight of a set: training quality above chance, floored at zero.
inline double fusion_weight(double training_quality) { return std::max(training_quality - 0.5, 0.0); }

/// Sum of z-standardized scores weighted by max(quality - 0.5, 0). Falls back to the
/// unweighted mean when every weight is zero. Rows of the result are sorted by key;
/// its training quality is the best input quality.
inline PredictionSet late_fuse(const std::vector<PredictionSet>& sets) {
  if (sets.empty()) throw ValidationError("late_fuse: no prediction sets");
  std::vector<std::map<SegmentKey, double>> standardized;
  for (const auto& s : sets) {
    if (s.task != sets.front().task) throw ValidationError("late_fuse: sets belong to different tasks");
    const auto z = z_standardize(s.scores());
    std::map<SegmentKey, double> m;
    for (std::size_t i = 0; i < z.size(); ++i)
      if (!m.emplace(s.rows[i].key, z[i]).second)
        throw ValidationError("late_fuse: duplicate segment in set '" + s.source + "'");
    standardized.push_back(std::move(m));
  }
  for (std::size_t i = 1; i < standardized.size(); ++i) {
    if (standardized[i].size() != standardized[0].size() ||
        !std::equal(standardized[i].begin(), standardized[i].end(), standardized[0].begin(),
                    [](const auto& x, const auto& y) { return x.first == y.first; }))
      throw ValidationError("late_fuse: set '" + sets[i].source + "' covers different segments than '" +
                            sets[0].source + "'");
  }
  std::vector<double> weights;
  double total = 0.0;
  for (const auto& s : sets) {
    weights.push_back(fusion_weight(s.training_quality));
    total += weights.back();
  }
  if (total == 0.0) {
    warn("late_fuse: all sets are at or below chance; using the unweighted mean");
    std::fill(weights.begin(), weights.end(), 1.0 / static_cast<double>(sets.size()));
  }
  PredictionSet out;
  out.task = sets.front().task;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    out.source += (i ? "+" : "") + sets[i].source;
    out.training_quality = std::max(i ? out.training_quality : 0.0, sets[i].training_quality);
  }
  for (const auto& [key, z0] : standardized.front()) {
    double fused = 0.0;
    for (std::size_t i = 0; i < sets.size(); ++i) fused += weights[i] * standardized[i].at(key);
    out.rows.push_back({key, fused});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prediction files

struct PredictionRow {
  Task task;
  std::string source;
  SegmentKey key;
  double score;
  double training_quality;
};

/// CSV `task,source,coach_id,video_id,segment_index,score,training_quality`.
inline void write_predictions(const std::string& path, const std::vector<PredictionSet>& sets) {
  csv::Writer w(path);
  w.row("task", "source", "coach_id", "video_id", "segment_index", "score", "training_quality");
  for (const auto& s : sets)
    for (const auto& r : s.rows)
      w.row(to_string(s.task), s.source, r.key.coach_id, r.key.video_id, r.key.segment_index, r.score, s.training_quality);
}

/// Groups rows into one set per (task, source, coach); quality must be constant per group.
inline std::vector<PredictionSet> read_predictions(const std::string& path) {
  const auto table = csv::Table::read(path);
  table.require_exact({"task", "source", "coach_id", "video_id", "segment_index", "score", "training_quality"});
  std::map<std::tuple<Task, std::string, std::string>, PredictionSet> groups;
  for (const auto& row : table.rows()) {
    Task task;
    try {
      task = parse_task(table.text(row, 0));
    } catch (const ValidationError& e) {
      throw ValidationError(table.where(row) + ": " + e.what());
    }
    const auto& source = table.text(row, 1);
    SegmentKey key{table.text(row, 2), table.text(row, 3), static_cast<int>(table.integer(row, 4))};
    const double score = table.real(row, 5);
    const double quality = table.real(row, 6);
    if (quality < 0.0 || quality > 1.0) throw ValidationError(table.where(row) + ": training_quality outside [0, 1]");
    auto [it, fresh] = groups.try_emplace({task, source, key.coach_id});
    auto& set = it->second;
    if (fresh) {
      set.task = task;
      set.source = source;
      set.training_quality = quality;
    } else if (set.training_quality != quality) {
      throw ValidationError(table.where(row) + ": training_quality varies within source '" + source + "' for coach " +
                            key.coach_id);
    }
    set.rows.push_back({std::move(key), score});
  }
  std::vector<PredictionSet> out;
  for (auto& [k, s] : groups) out.push_back(std::move(s));
  return out;
}

// ---------------------------------------------------------------------------
// Leave-one-coach-out results

struct CoachResult {
  std::string coach_id;
  std::vector<double> aucs;  ///< one per seed with a defined AUC
  double mean = 0.0;
  double std = 0.0;  ///< population std over seeds
};

struct ResultsTable {
  std::string source;
  std::vector<CoachResult> coaches;  // sorted by coach id
  std::size_t cells = 0;             ///< (coach, seed) cells evaluated, including flagged ones
  std::vector<std::pair<std::string, std::uint64_t>> flagged;  ///< single-class test folds
  double mean = 0.0;
  double std = 0.0;  ///< population std of per-coach means
  double min = 0.0;
  double max = 0.0;
  double above_chance = 0.0;  ///< percentage of coaches with mean AUC > 0.5
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

}  // namespace detail

/// Test scores and labels for one held-out coach and seed.
struct FoldOutcome {
  std::vector<double> scores;
  std::vector<double> labels;
};

/// Aggregates per-(coach, seed) outcomes: mean over seeds per coach, then mean, std,
/// min, max and percentage above chance over coaches.
inline ResultsTable aggregate_results(const std::string& source,
                                      const std::map<std::pair<std::string, std::uint64_t>, FoldOutcome>& outcomes) {
  ResultsTable table;
  table.source = source;
  std::map<std::string, CoachResult> per_coach;
  for (const auto& [cell, outcome] : outcomes) {
    ++table.cells;
    if (!has_both_classes(outcome.labels)) {
      warn("fold " + cell.first + " / seed " + std::to_string(cell.second) + " has single-class test labels; excluded");
      table.flagged.push_back(cell);
      continue;
    }
    auto& c = per_coach[cell.first];
    c.coach_id = cell.first;
    c.aucs.push_back(roc_auc(outcome.scores, outcome.labels));
  }
  if (per_coach.empty()) throw ValidationError("aggregate_results: no evaluable folds");
  std::vector<double> means;
  for (auto& [id, c] : per_coach) {
    std::tie(c.mean, c.std) = detail::mean_std(c.aucs);
    means.push_back(c.mean);
    table.coaches.push_back(c);
  }
  std::tie(table.mean, table.std) = detail::mean_std(means);
  table.min = *std::min_element(means.begin(), means.end());
  table.max = *std::max_element(means.begin(), means.end());
  const auto above = std::count_if(means.begin(), means.end(), [](double m) { return m > 0.5; });
  table.above_chance = 100.0 * static_cast<double>(above) / static_cast<double>(means.size());
  return table;
}

/// Runs `fold(coach, seed) -> FoldOutcome` for every held-out coach and seed.
template <typename FoldRunner>
ResultsTable loso_harness(const std::string& source, const std::vector<std::string>& coaches,
                          const std::vector<std::uint64_t>& seeds, FoldRunner&& fold) {
  if (coaches.size() < 2) throw ValidationError("loso_harness: need at least two coaches");
  if (seeds.empty()) throw ValidationError("loso_harness: need at least one seed");
  std::map<std::pair<std::string, std::uint64_t>, FoldOutcome> outcomes;
  for (const auto& coach : coaches)
    for (auto seed : seeds) outcomes[{coach, seed}] = fold(coach, seed);
  return aggregate_results(source, outcomes);
}

/// Outcomes from prediction sets (one vector per seed run) against segment labels.
inline ResultsTable results_from_predictions(const std::string& source,
                                             const std::vector<std::vector<PredictionSet>>& runs,
                                             const std::map<SegmentKey, double>& labels) {
  std::map<std::pair<std::string, std::uint64_t>, FoldOutcome> outcomes;
  for (std::size_t run = 0; run < runs.size(); ++run)
    for (const auto& set : runs[run]) {
      if (set.source != source) continue;
      for (const auto& row : set.rows) {
        auto it = labels.find(row.key);
        if (it == labels.end())
          throw ValidationError("prediction for unknown segment " + row.key.video_id + "#" + std::to_string(row.key.segment_index));
        auto& o = outcomes[{row.key.coach_id, static_cast<std::uint64_t>(run)}];
        o.scores.push_back(row.score);
        o.labels.push_back(it->second);
      }
    }
  return aggregate_results(source, outcomes);
}

/// Per coach, the source with the highest mean AUC.
struct CoachComparison {
  std::string coach_id;
  std::map<std::string, double> mean_auc;  // source -> mean AUC
  std::string best_source;
};

inline std::vector<CoachComparison> compare_sources(const std::vector<ResultsTable>& tables) {
  std::map<std::string, CoachComparison> rows;
  for (const auto& t : tables)
    for (const auto& c : t.coaches) {
      auto& r = rows[c.coach_id];
      r.coach_id = c.coach_id;
      r.mean_auc[t.source] = c.mean;
    }
  std::vector<CoachComparison> out;
  for (auto& [id, r] : rows) {
    double best = -1.0;
    for (const auto& [src, auc] : r.mean_auc)
      if (auc > best) {
        best = auc;
        r.best_source = src;
      }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::string fixed4(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  auto s = os.str();
  if (s.rfind("0.", 0) == 0) s.erase(0, 1);
  return s;
}

/// Plain-text table: one row per source with Mean (Std), Min, Max and > Chance.
inline std::string format_results(const std::vector<ResultsTable>& tables) {
  std::size_t width = 6;
  for (const auto& t : tables) width = std::max(width, t.source.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "Source" << "  " << std::setw(15) << "Mean (Std)"
     << std::setw(8) << "Min" << std::setw(8) << "Max" << "> Chance\n";
  for (const auto& t : tables) {
    os << std::left << std::setw(static_cast<int>(width)) << t.source << "  " << std::setw(15)
       << (fixed4(t.mean) + " (" + fixed4(t.std) + ")") << std::setw(8) << fixed4(t.min) << std::setw(8) << fixed4(t.max)
       << std::fixed << std::setprecision(0) << t.above_chance << " %\n";
  }
  return os.str();
}

inline std::string format_comparison(const std::vector<CoachComparison>& rows) {
  std::set<std::string> sources;
  for (const auto& r : rows)
    for (const auto& [s, v] : r.mean_auc) sources.insert(s);
  std::ostringstream os;
  os << std::left << std::setw(8) << "Coach";
  for (const auto& s : sources) os << std::setw(static_cast<int>(std::max<std::size_t>(8, s.size() + 2))) << s;
  os << "Best\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(8) << r.coach_id;
    for (const auto& s : sources) {
      auto it = r.mean_auc.find(s);
      os << std::setw(static_cast<int>(std::max<std::size_t>(8, s.size() + 2))) << (it == r.mean_auc.end() ? "-" : fixed4(it->second));
    }
    os << r.best_source << '\n';
  }
  return os.str();
}

inline void write_results_csv(const std::string& path, const std::vector<ResultsTable>& tables) {
  csv::Writer w(path);
  w.row("source", "coach_id", "mean_auc", "std_auc", "seeds");
  for (const auto& t : tables) {
    for (const auto& c : t.coaches) w.row(t.source, c.coach_id, c.mean, c.std, c.aucs.size());
    w.row(t.source, std::string("ALL_MEAN"), t.mean, t.std, t.coaches.size());
    w.row(t.source, std::string("ALL_MIN"), t.min, 0.0, t.coaches.size());
    w.row(t.source, std::string("ALL_MAX"), t.max, 0.0, t.coaches.size());
    w.row(t.source, std::string("ABOVE_CHANCE_PCT"), t.above_chance, 0.0, t.coaches.size());
  }
}

}  // namespace humorfuse
