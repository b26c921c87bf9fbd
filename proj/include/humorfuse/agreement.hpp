#pragma once

// Inter-rater agreement: Lin's concordance correlation, nominal Krippendorff's
// alpha, Jaccard overlap of binary humor labels and per-coach agreement matrices.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "humorfuse/error.hpp"
#include "humorfuse/signal_prep.hpp"

namespace humorfuse {

/// Sign class of a frame. For direction, negative = self-directed, positive = other-directed.
enum class Polarity : std::int8_t { negative = -1, none = 0, positive = 1 };

using ClassSequence = std::vector<Polarity>;
using BinarySequence = std::vector<std::uint8_t>;

inline std::string class_name(Polarity p, Dimension d) {
  switch (p) {
    case Polarity::none: return "none";
    case Polarity::negative: return d == Dimension::sentiment ? "negative" : "self_directed";
    case Polarity::positive: return d == Dimension::sentiment ? "positive" : "other_directed";
  }
  return "none";
}

/// Rows are annotators, columns are units (time steps); every cell is rated.
struct ReliabilityMatrix {
  std::vector<std::vector<int>> rows;

  std::size_t raters() const { return rows.size(); }
  std::size_t units() const { return rows.empty() ? 0 : rows.front().size(); }
};

/// Lin's concordance correlation coefficient with population moments.
/// Returns 0 when the denominator vanishes (both sequences constant and equal).
inline double ccc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("ccc: length mismatch");
  if (x.size() < 2) throw ValidationError("ccc: need at least two values");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    vx += dx * dx;
    vy += dy * dy;
    cov += dx * dy;
  }
  vx /= n;
  vy /= n;
  cov /= n;
  const double denom = vx + vy + (mx - my) * (mx - my);
  if (denom == 0.0) return 0.0;
  return 2.0 * cov / denom;
}

inline ClassSequence discretize(std::span<const double> values) {
  ClassSequence out;
  out.reserve(values.size());
  for (double v : values) out.push_back(v > 0.0 ? Polarity::positive : v < 0.0 ? Polarity::negative : Polarity::none);
  return out;
}

inline ClassSequence discretize(const AnnotationSignal& signal) { return discretize(signal.values); }

/// A frame is humorous when either dimension carries any amplitude.
inline BinarySequence binary_humor(std::span<const double> sentiment, std::span<const double> direction) {
  if (sentiment.size() != direction.size()) throw ValidationError("binary_humor: length mismatch");
  BinarySequence out(sentiment.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (sentiment[i] != 0.0 || direction[i] != 0.0) ? 1 : 0;
  return out;
}

inline BinarySequence binary_humor(const AnnotationSignal& sentiment, const AnnotationSignal& direction) {
  return binary_humor(sentiment.values, direction.values);
}

/// Nominal Krippendorff's alpha without missing values.
///
/// Uses the per-unit value counts n_uc: the observed disagreement is
/// D_o = 1/n * sum_u 1/(m_u - 1) * sum_c n_uc (m_u - n_uc) and the expected one
/// D_e = (n^2 - sum_c n_c^2) / (n (n - 1)). Returns 1 when D_e = 0.
inline double krippendorff_alpha(const ReliabilityMatrix& m) {
  if (m.raters() < 2 || m.units() == 0) throw ValidationError("krippendorff_alpha: need >= 2 raters and >= 1 unit");
  for (const auto& r : m.rows)
    if (r.size() != m.units()) throw ValidationError("krippendorff_alpha: ragged reliability matrix");

  const std::size_t raters = m.raters();
  const double pairable = static_cast<double>(raters - 1);
  std::map<int, double> totals;
  std::map<int, std::size_t> unit_counts;
  double observed = 0.0;
  for (std::size_t u = 0; u < m.units(); ++u) {
    unit_counts.clear();
    for (std::size_t r = 0; r < raters; ++r) ++unit_counts[m.rows[r][u]];
    for (const auto& [value, count] : unit_counts) {
      const double c = static_cast<double>(count);
      observed += c * (static_cast<double>(raters) - c) / pairable;
      totals[value] += c;
    }
  }
  const double n = static_cast<double>(raters * m.units());
  double sum_sq = 0.0;
  for (const auto& [value, total] : totals) sum_sq += total * total;
  const double d_o = observed / n;
  const double d_e = (n * n - sum_sq) / (n * (n - 1.0));
  if (d_e == 0.0) return 1.0;
  return 1.0 - d_o / d_e;
}

inline double krippendorff_alpha(const std::vector<ClassSequence>& raters) {
  ReliabilityMatrix m;
  for (const auto& r : raters) {
    std::vector<int> row;
    row.reserve(r.size());
    for (auto p : r) row.push_back(static_cast<int>(p));
    m.rows.push_back(std::move(row));
  }
  return krippendorff_alpha(m);
}

inline double krippendorff_alpha(const std::vector<BinarySequence>& raters) {
  ReliabilityMatrix m;
  for (const auto& r : raters) m.rows.emplace_back(r.begin(), r.end());
  return krippendorff_alpha(m);
}

/// |a AND b| / |a OR b|; 1 when both are all zero.
inline double jaccard(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) throw ValidationError("jaccard: length mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    inter += (x && y);
    uni += (x || y);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Coach x annotator matrix; a cell is empty when the annotator has no data for that coach.
struct AgreementMatrix {
  std::vector<std::string> coaches;
  std::vector<std::string> annotators;
  std::vector<std::vector<std::optional<double>>> cells;  // [coach][annotator]
};

/// Binary humor labels per coach, per annotator, concatenated over the coach's videos.
using CoachLabels = std::map<std::string, std::map<std::string, BinarySequence>>;

/// Cell (c, a) is the mean pairwise two-rater alpha between a and every other
/// annotator with data for coach c.
inline AgreementMatrix mean_agreement_matrix(const CoachLabels& labels) {
  AgreementMatrix out;
  std::set<std::string> annotators;
  for (const auto& [coach, per_annotator] : labels) {
    out.coaches.push_back(coach);
    for (const auto& [a, seq] : per_annotator) annotators.insert(a);
  }
  if (annotators.size() < 2) throw ValidationError("mean_agreement_matrix: need >= 2 annotators");
  out.annotators.assign(annotators.begin(), annotators.end());

  for (const auto& coach : out.coaches) {
    const auto& per_annotator = labels.at(coach);
    std::vector<std::optional<double>> row(out.annotators.size());
    for (std::size_t i = 0; i < out.annotators.size(); ++i) {
      auto self = per_annotator.find(out.annotators[i]);
      if (self == per_annotator.end()) continue;
      double sum = 0.0;
      std::size_t count = 0;
      for (const auto& [other, seq] : per_annotator) {
        if (other == self->first) continue;
        if (seq.size() != self->second.size())
          throw ValidationError("mean_agreement_matrix: label length mismatch for coach " + coach);
        if (seq.empty()) continue;
        sum += krippendorff_alpha(std::vector<BinarySequence>{self->second, seq});
        ++count;
      }
      if (count > 0) row[i] = sum / static_cast<double>(count);
    }
    out.cells.push_back(std::move(row));
  }
  return out;
}

}  // namespace humorfuse
