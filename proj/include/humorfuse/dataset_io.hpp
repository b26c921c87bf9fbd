#pragma once

// Feature ingestion and dataset assembly: 2 Hz feature files, sentence-level
// feature alignment, per-segment windows and leave-one-coach-out splits.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "humorfuse/csv.hpp"
#include "humorfuse/error.hpp"
#include "humorfuse/gold_standard.hpp"
#include "humorfuse/signal_prep.hpp"

namespace humorfuse {

enum class Modality { audio, text, video };

inline std::string to_string(Modality m) {
  switch (m) {
    case Modality::audio: return "audio";
    case Modality::text: return "text";
    case Modality::video: return "video";
  }
  return "audio";
}

inline Modality parse_modality(const std::string& s) {
  if (s == "audio") return Modality::audio;
  if (s == "text") return Modality::text;
  if (s == "video") return Modality::video;
  throw ValidationError("unknown modality '" + s + "'");
}

/// One row per 500 ms step.
struct FeatureSequence {
  std::string video_id;
  Modality modality = Modality::audio;
  Eigen::MatrixXd vectors;

  Eigen::Index frames() const { return vectors.rows(); }
  Eigen::Index dim() const { return vectors.cols(); }
};

struct SentenceFeatureSpan {
  std::string video_id;
  long long start_ms = 0;
  long long end_ms = 0;
  Eigen::VectorXd vector;
};

struct SegmentKey {
  std::string coach_id;
  std::string video_id;
  int segment_index = 0;

  auto operator<=>(const SegmentKey&) const = default;
};

inline SegmentKey key_of(const Segment& s) { return {s.coach_id, s.video_id, s.segment_index}; }

enum class SplitRole { train, dev, test };

inline std::string to_string(SplitRole r) {
  switch (r) {
    case SplitRole::train: return "train";
    case SplitRole::dev: return "dev";
    case SplitRole::test: return "test";
  }
  return "train";
}

struct Example {
  SegmentKey key;
  double label = 0.0;  ///< {0, 1} for humor, {-1, 1} for style tasks
  SplitRole role = SplitRole::train;
};

struct ModelDataset {
  std::string held_out_coach;
  std::vector<Example> examples;

  std::vector<const Example*> with_role(SplitRole role) const {
    std::vector<const Example*> out;
    for (const auto& e : examples)
      if (e.role == role) out.push_back(&e);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Feature files

inline void validate_features(const FeatureSequence& f) {
  if (f.dim() <= 0) throw ValidationError("feature sequence for " + f.video_id + " has no dimensions");
  if (!f.vectors.allFinite()) throw ValidationError("feature sequence for " + f.video_id + " contains non-finite values");
}

/// CSV with header `t_ms,f0..f{dim-1}`; one contiguous row per 500 ms step.
inline void write_features_csv(const std::string& path, const FeatureSequence& f) {
  csv::Writer w(path);
  std::vector<std::string> header{"t_ms"};
  for (Eigen::Index j = 0; j < f.dim(); ++j) header.push_back("f" + std::to_string(j));
  w.row(header);
  for (Eigen::Index t = 0; t < f.frames(); ++t) {
    std::vector<std::string> row{std::to_string(t * kFrameMs)};
    for (Eigen::Index j = 0; j < f.dim(); ++j) row.push_back(csv::format_double(f.vectors(t, j)));
    w.row(row);
  }
}

inline FeatureSequence read_features_csv(const std::string& path, const std::string& video_id, Modality modality) {
  const auto table = csv::Table::read(path);
  const auto& header = table.header();
  if (header.size() < 2 || header[0] != "t_ms")
    throw ValidationError(path + ":1: schema mismatch, expected 't_ms,f0..'");
  for (std::size_t j = 1; j < header.size(); ++j)
    if (header[j] != "f" + std::to_string(j - 1))
      throw ValidationError(path + ":1: schema mismatch at column " + std::to_string(j));
  FeatureSequence f{video_id, modality, Eigen::MatrixXd(static_cast<Eigen::Index>(table.rows().size()),
                                                       static_cast<Eigen::Index>(header.size() - 1))};
  Eigen::Index t = 0;
  for (const auto& row : table.rows()) {
    if (table.integer(row, 0) != t * kFrameMs)
      throw ValidationError(table.where(row) + ": expected t_ms " + std::to_string(t * kFrameMs));
    for (std::size_t j = 1; j < header.size(); ++j) f.vectors(t, static_cast<Eigen::Index>(j - 1)) = table.real(row, j);
    ++t;
  }
  return f;
}

inline constexpr char kFeatureMagic[4] = {'H', 'F', 'Z', '1'};

/// Packed format: magic `HFZ1`, a header line `video_id,modality,dim,T`, then T*dim
/// little-endian float32 values in row-major order.
inline void write_features_binary(const std::string& path, const FeatureSequence& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(path + ": cannot open for writing");
  out.write(kFeatureMagic, 4);
  out << f.video_id << ',' << to_string(f.modality) << ',' << f.dim() << ',' << f.frames() << '\n';
  for (Eigen::Index t = 0; t < f.frames(); ++t)
    for (Eigen::Index j = 0; j < f.dim(); ++j) {
      auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(f.vectors(t, j)));
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
      out.write(reinterpret_cast<const char*>(&bits), 4);
    }
}

inline FeatureSequence read_features_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path + ": cannot open file");
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kFeatureMagic, 4) != 0) throw ValidationError(path + ": bad magic, expected HFZ1");
  std::string header;
  std::getline(in, header);
  const auto parts = csv::split(header);
  if (parts.size() != 4) throw ValidationError(path + ": malformed header line");
  long long dim = 0, frames = 0;
  try {
    dim = std::stoll(parts[2]);
    frames = std::stoll(parts[3]);
  } catch (const std::exception&) {
    throw ValidationError(path + ": malformed header line");
  }
  if (dim <= 0 || frames < 0) throw ValidationError(path + ": invalid dim/T in header");
  FeatureSequence f{parts[0], parse_modality(parts[1]), Eigen::MatrixXd(frames, dim)};
  for (Eigen::Index t = 0; t < frames; ++t)
    for (Eigen::Index j = 0; j < dim; ++j) {
      std::uint32_t bits = 0;
      in.read(reinterpret_cast<char*>(&bits), 4);
      if (!in) throw ValidationError(path + ": truncated at row " + std::to_string(t));
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
      f.vectors(t, j) = static_cast<double>(std::bit_cast<float>(bits));
    }
  if (in.peek() != std::ifstream::traits_type::eof()) throw ValidationError(path + ": trailing bytes after data");
  validate_features(f);
  return f;
}

/// (video_id, modality) -> features.
using FeatureStore = std::map<std::pair<std::string, Modality>, FeatureSequence>;

/// Loads every `<video_id>.<modality>.csv` and `<video_id>.<modality>.hfz` in `dir`.
inline FeatureStore load_feature_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ValidationError(dir + ": not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  FeatureStore store;
  for (const auto& p : files) {
    const auto ext = p.extension().string();
    if (ext != ".csv" && ext != ".hfz") continue;
    const auto stem = p.stem().string();
    const auto dot = stem.rfind('.');
    if (dot == std::string::npos) continue;
    const auto video = stem.substr(0, dot);
    Modality modality;
    try {
      modality = parse_modality(stem.substr(dot + 1));
    } catch (const ValidationError&) {
      continue;
    }
    auto f = ext == ".csv" ? read_features_csv(p.string(), video, modality) : read_features_binary(p.string());
    if (f.video_id != video || f.modality != modality)
      throw ValidationError(p.string() + ": header does not match file name");
    if (!store.emplace(std::make_pair(video, modality), std::move(f)).second)
      throw ValidationError(p.string() + ": duplicate features for " + video + "/" + to_string(modality));
  }
  return store;
}

// ---------------------------------------------------------------------------
// Sentence alignment

/// CSV `video_id,start_ms,end_ms,f0..`.
inline std::map<std::string, std::vector<SentenceFeatureSpan>> read_sentences(const std::string& path) {
  const auto table = csv::Table::read(path);
  table.require_prefix({"video_id", "start_ms", "end_ms"});
  const auto dim = static_cast<Eigen::Index>(table.header().size() - 3);
  if (dim <= 0) throw ValidationError(path + ":1: sentence file has no feature columns");
  std::map<std::string, std::vector<SentenceFeatureSpan>> out;
  for (const auto& row : table.rows()) {
    SentenceFeatureSpan s{table.text(row, 0), table.integer(row, 1), table.integer(row, 2), Eigen::VectorXd(dim)};
    if (s.start_ms < 0 || s.start_ms >= s.end_ms) throw ValidationError(table.where(row) + ": need 0 <= start_ms < end_ms");
    for (Eigen::Index j = 0; j < dim; ++j) s.vector(j) = table.real(row, static_cast<std::size_t>(j) + 3);
    out[s.video_id].push_back(std::move(s));
  }
  return out;
}

inline void write_sentences(const std::string& path, const std::map<std::string, std::vector<SentenceFeatureSpan>>& spans) {
  csv::Writer w(path);
  Eigen::Index dim = 0;
  for (const auto& [v, list] : spans)
    if (!list.empty()) dim = list.front().vector.size();
  std::vector<std::string> header{"video_id", "start_ms", "end_ms"};
  for (Eigen::Index j = 0; j < dim; ++j) header.push_back("f" + std::to_string(j));
  w.row(header);
  for (const auto& [v, list] : spans)
    for (const auto& s : list) {
      if (s.vector.size() != dim) throw ValidationError("write_sentences: dimension mismatch");
      std::vector<std::string> row{s.video_id, std::to_string(s.start_ms), std::to_string(s.end_ms)};
      for (Eigen::Index j = 0; j < dim; ++j) row.push_back(csv::format_double(s.vector(j)));
      w.row(row);
    }
}

/// Row t is the mean of all spans intersecting [500t, 500t + 500); zero if none does.
inline FeatureSequence align_sentences(const std::string& video_id, const std::vector<SentenceFeatureSpan>& spans,
                                       Eigen::Index frame_count, Eigen::Index dim) {
  for (const auto& s : spans)
    if (s.vector.size() != dim) throw ValidationError("align_sentences: span dimension mismatch in " + video_id);
  FeatureSequence out{video_id, Modality::text, Eigen::MatrixXd::Zero(frame_count, dim)};
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(frame_count);
  for (const auto& s : spans) {
    if (s.start_ms >= s.end_ms) throw ValidationError("align_sentences: empty span in " + video_id);
    const Eigen::Index first = s.start_ms / kFrameMs;
    const Eigen::Index last = (s.end_ms - 1) / kFrameMs;  // inclusive
    for (Eigen::Index t = std::max<Eigen::Index>(first, 0); t <= std::min(last, frame_count - 1); ++t) {
      out.vectors.row(t) += s.vector.transpose();
      counts(t) += 1.0;
    }
  }
  for (Eigen::Index t = 0; t < frame_count; ++t)
    if (counts(t) > 0.0) out.vectors.row(t) /= counts(t);
  return out;
}

// ---------------------------------------------------------------------------
// Segment windows

/// First and one-past-last feature rows of a segment.
inline std::pair<Eigen::Index, Eigen::Index> segment_rows(const Segment& s) {
  const Eigen::Index first = (s.start_ms + kFrameMs - 1) / kFrameMs;
  const Eigen::Index last = (s.end_ms + kFrameMs - 1) / kFrameMs;
  return {first, last};
}

inline const FeatureSequence& find_features(const FeatureStore& store, const std::string& video, Modality m) {
  auto it = store.find({video, m});
  if (it == store.end()) throw ValidationError("no " + to_string(m) + " features for video " + video);
  return it->second;
}

/// The feature rows of each segment (4 rows for a full 2 s window).
inline std::vector<Eigen::MatrixXd> segment_sequences(const FeatureSequence& features, const SegmentTable& table) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(table.size());
  for (const auto& s : table) {
    if (s.video_id != features.video_id)
      throw ValidationError("segment " + s.video_id + "#" + std::to_string(s.segment_index) + " does not belong to " +
                            features.video_id);
    const auto [first, last] = segment_rows(s);
    if (first < 0 || last > features.frames() || last <= first)
      throw ValidationError("segment " + s.video_id + "#" + std::to_string(s.segment_index) + " [" +
                            std::to_string(s.start_ms) + "," + std::to_string(s.end_ms) +
                            ") ms exceeds feature range of " + std::to_string(features.frames()) + " frames");
    out.push_back(features.vectors.middleRows(first, last - first));
  }
  return out;
}

/// Mean of each segment's feature rows; one row per segment.
inline Eigen::MatrixXd segment_pool(const FeatureSequence& features, const SegmentTable& table) {
  const auto windows = segment_sequences(features, table);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(windows.size()), features.dim());
  for (std::size_t i = 0; i < windows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = windows[i].colwise().mean();
  return out;
}

// ---------------------------------------------------------------------------
// Dataset assembly

inline ModelDataset humor_dataset(const SegmentTable& table) {
  ModelDataset out;
  for (const auto& s : table) out.examples.push_back({key_of(s), static_cast<double>(s.humor), SplitRole::train});
  return out;
}

/// Humorous segments labelled by the sign of the pooled dimension value.
/// Segments whose value is exactly zero are excluded.
inline ModelDataset style_dataset(const SegmentTable& table, Dimension dimension) {
  ModelDataset out;
  std::size_t zeros = 0;
  for (const auto& s : table) {
    if (!s.humor) continue;
    const double v = dimension == Dimension::sentiment ? s.sentiment : s.direction;
    if (v == 0.0) {
      ++zeros;
      continue;
    }
    out.examples.push_back({key_of(s), v > 0.0 ? 1.0 : -1.0, SplitRole::train});
  }
  if (zeros > 0) warn(std::to_string(zeros) + " humorous segments have zero " + to_string(dimension) + " and were excluded");
  if (out.examples.empty()) throw ValidationError("style_dataset: no humorous segments with a nonzero " + to_string(dimension));
  return out;
}

/// Held-out coach -> test; the remaining examples are shuffled with `seed` and the first
/// floor(dev_fraction * n) become dev.
inline ModelDataset loso_split(ModelDataset dataset, const std::string& held_out, double dev_fraction, std::uint64_t seed) {
  if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) throw ValidationError("dev_fraction must lie in (0, 1)");
  bool found = false;
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    auto& e = dataset.examples[i];
    if (e.key.coach_id == held_out) {
      e.role = SplitRole::test;
      found = true;
    } else {
      e.role = SplitRole::train;
      rest.push_back(i);
    }
  }
  if (!found) throw ValidationError("unknown held-out coach '" + held_out + "'");
  std::mt19937_64 rng(seed);
  std::shuffle(rest.begin(), rest.end(), rng);
  const auto n_dev = static_cast<std::size_t>(std::floor(dev_fraction * static_cast<double>(rest.size())));
  for (std::size_t i = 0; i < n_dev; ++i) dataset.examples[rest[i]].role = SplitRole::dev;
  dataset.held_out_coach = held_out;
  return dataset;
}

inline ModelDataset loso_split(const SegmentTable& table, const std::string& held_out, double dev_fraction, std::uint64_t seed) {
  return loso_split(humor_dataset(table), held_out, dev_fraction, seed);
}

/// Like loso_split but assigns whole videos to train or dev, for models that consume
/// entire clips. At least one training video is kept.
inline ModelDataset loso_split_videos(ModelDataset dataset, const std::string& held_out, double dev_fraction,
                                      std::uint64_t seed) {
  if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) throw ValidationError("dev_fraction must lie in (0, 1)");
  std::set<std::string> videos;
  bool found = false;
  for (auto& e : dataset.examples) {
    if (e.key.coach_id == held_out) {
      found = true;
      e.role = SplitRole::test;
    } else {
      videos.insert(e.key.video_id);
    }
  }
  if (!found) throw ValidationError("unknown held-out coach '" + held_out + "'");
  std::vector<std::string> order(videos.begin(), videos.end());
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_dev = static_cast<std::size_t>(std::floor(dev_fraction * static_cast<double>(order.size())));
  if (n_dev >= order.size() && !order.empty()) n_dev = order.size() - 1;
  const std::set<std::string> dev(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_dev));
  for (auto& e : dataset.examples)
    if (e.key.coach_id != held_out) e.role = dev.contains(e.key.video_id) ? SplitRole::dev : SplitRole::train;
  dataset.held_out_coach = held_out;
  return dataset;
}

inline void write_split(const std::string& path, const ModelDataset& dataset) {
  csv::Writer w(path);
  w.row("coach_id", "video_id", "segment_index", "role");
  for (const auto& e : dataset.examples) w.row(e.key.coach_id, e.key.video_id, e.key.segment_index, to_string(e.role));
}

}  // namespace humorfuse
