// humorfuse: command-line driver for the annotation-fusion and humor-detection pipeline.
//
//   synth      generate a synthetic corpus (annotations, features, ground truth)
//   preprocess threshold, clip and normalize raw annotations
//   agree      agreement statistics and the coach x annotator agreement matrix
//   fuse       annotator weights and fused gold-standard signals
//   segment    2 s / 1 s segment table from annotations and gold signals
//   train      leave-one-coach-out training of the GRU or VFMM model
//   eval       AUC results over prediction files (one file per seed)
//   latefuse   quality-weighted late fusion of prediction sets
//   stats      humor rate and style distribution of a segment table
//
// Exit codes: 0 success, 2 validation failure, 3 numerical failure.

#include <openssl/evp.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "humorfuse/agreement.hpp"
#include "humorfuse/dataset_io.hpp"
#include "humorfuse/error.hpp"
#include "humorfuse/eval_fusion.hpp"
#include "humorfuse/gold_standard.hpp"
#include "humorfuse/nn/checkpoint.hpp"
#include "humorfuse/signal_prep.hpp"
#include "humorfuse/synth.hpp"
#include "humorfuse/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace humorfuse;

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path.string() + ": cannot open file");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return os.str();
}

struct Global {
  std::uint64_t seed = 101;
  int jobs = 1;
  std::string config_path;
  std::string out = ".";
  json config = json::object();

  json section(const std::string& name) const { return config.contains(name) ? config.at(name) : json::object(); }
};

/// Records input hashes and the effective configuration of one run. Inputs are keyed by
/// file name (directory-relative for directories), so manifests of two runs on equal
/// inputs compare equal regardless of where the files live.
class Manifest {
 public:
  Manifest(std::string subcommand, const Global& g) : subcommand_(std::move(subcommand)) {
    doc_ = {{"tool", "humorfuse"}, {"version", kToolVersion}, {"subcommand", subcommand_}, {"seed", g.seed},
            {"inputs", json::object()}, {"config", json::object()}};
  }

  void input(const std::string& path) {
    const fs::path p(path);
    if (!fs::exists(p)) throw ValidationError(path + ": no such file or directory");
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file()) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) doc_["inputs"][(p.filename() / fs::relative(f, p)).generic_string()] = sha256_file(f);
    } else {
      doc_["inputs"][p.filename().string()] = sha256_file(p);
    }
  }

  json& config() { return doc_["config"]; }

  void write(const std::string& out_dir) const {
    std::ofstream f(fs::path(out_dir) / ("manifest." + subcommand_ + ".json"), std::ios::binary);
    f << doc_.dump(2) << '\n';
  }

 private:
  std::string subcommand_;
  json doc_;
};

std::string out_path(const Global& g, const std::string& name) { return (fs::path(g.out) / name).string(); }

// ---------------------------------------------------------------------------
// Configuration sections

PreprocessConfig preprocess_config(const json& j) {
  PreprocessConfig c;
  c.amplitude_threshold = j.value("amplitude_threshold", c.amplitude_threshold);
  c.outlier_sigma = j.value("outlier_sigma", c.outlier_sigma);
  const auto mode = j.value("normalize_mode", std::string("signed_separate"));
  if (mode == "signed_separate") c.normalize_mode = NormalizeMode::signed_separate;
  else if (mode == "global") c.normalize_mode = NormalizeMode::global;
  else throw ValidationError("normalize_mode must be signed_separate or global");
  return c;
}

json to_json(const PreprocessConfig& c) {
  return {{"amplitude_threshold", c.amplitude_threshold}, {"outlier_sigma", c.outlier_sigma},
          {"normalize_mode", c.normalize_mode == NormalizeMode::global ? "global" : "signed_separate"}};
}

GoldConfig gold_config(const json& j) {
  GoldConfig c;
  c.humor_quorum = j.value("humor_quorum", c.humor_quorum);
  c.drop_count = j.value("drop_count", c.drop_count);
  c.per_video_drop = j.value("per_video_drop", c.per_video_drop);
  c.frame_ms = j.value("frame_ms", c.frame_ms);
  c.hop_ms = j.value("hop_ms", c.hop_ms);
  return c;
}

json to_json(const GoldConfig& c) {
  return {{"humor_quorum", c.humor_quorum}, {"drop_count", c.drop_count}, {"per_video_drop", c.per_video_drop},
          {"frame_ms", c.frame_ms}, {"hop_ms", c.hop_ms}};
}

SynthConfig synth_config(const json& j) {
  SynthConfig c;
  c.coaches = j.value("coaches", c.coaches);
  c.annotators = j.value("annotators", c.annotators);
  c.minutes = j.value("minutes", c.minutes);
  c.video_seconds = j.value("video_seconds", c.video_seconds);
  c.episode_rate = j.value("episode_rate", c.episode_rate);
  c.min_episode_frames = j.value("min_episode_frames", c.min_episode_frames);
  c.max_episode_frames = j.value("max_episode_frames", c.max_episode_frames);
  if (j.contains("style_weights")) c.style_weights = j.at("style_weights").get<std::array<double, 4>>();
  c.rater_noise = j.value("rater_noise", c.rater_noise);
  c.scale_jitter = j.value("scale_jitter", c.scale_jitter);
  c.max_lag = j.value("max_lag", c.max_lag);
  c.miss_prob = j.value("miss_prob", c.miss_prob);
  c.amplitude_jitter = j.value("amplitude_jitter", c.amplitude_jitter);
  c.flip_prob = j.value("flip_prob", c.flip_prob);
  c.false_rate = j.value("false_rate", c.false_rate);
  c.unreliable_raters = j.value("unreliable_raters", c.unreliable_raters);
  c.unreliable_factor = j.value("unreliable_factor", c.unreliable_factor);
  c.text_dim = j.value("text_dim", c.text_dim);
  c.audio_dim = j.value("audio_dim", c.audio_dim);
  c.video_dim = j.value("video_dim", c.video_dim);
  c.video_strength = j.value("video_strength", c.video_strength);
  c.text_strength = j.value("text_strength", c.text_strength);
  c.audio_strength = j.value("audio_strength", c.audio_strength);
  c.coach_offset = j.value("coach_offset", c.coach_offset);
  return c;
}

json to_json(const SynthConfig& c) {
  return {{"coaches", c.coaches},
          {"annotators", c.annotators},
          {"minutes", c.minutes},
          {"video_seconds", c.video_seconds},
          {"seed", c.seed},
          {"episode_rate", c.episode_rate},
          {"min_episode_frames", c.min_episode_frames},
          {"max_episode_frames", c.max_episode_frames},
          {"style_weights", c.style_weights},
          {"rater_noise", c.rater_noise},
          {"scale_jitter", c.scale_jitter},
          {"max_lag", c.max_lag},
          {"miss_prob", c.miss_prob},
          {"amplitude_jitter", c.amplitude_jitter},
          {"flip_prob", c.flip_prob},
          {"false_rate", c.false_rate},
          {"unreliable_raters", c.unreliable_raters},
          {"unreliable_factor", c.unreliable_factor},
          {"text_dim", c.text_dim},
          {"audio_dim", c.audio_dim},
          {"video_dim", c.video_dim},
          {"video_strength", c.video_strength},
          {"text_strength", c.text_strength},
          {"audio_strength", c.audio_strength},
          {"coach_offset", c.coach_offset}};
}

// ---------------------------------------------------------------------------
// Stages

struct SynthArgs {
  std::optional<int> coaches, annotators, minutes, video_seconds;
  std::optional<double> noise;
};

void run_synth(const Global& g, const SynthArgs& a) {
  auto c = synth_config(g.section("synth"));
  if (a.coaches) c.coaches = *a.coaches;
  if (a.annotators) c.annotators = *a.annotators;
  if (a.minutes) c.minutes = *a.minutes;
  if (a.video_seconds) c.video_seconds = *a.video_seconds;
  if (a.noise) c.rater_noise = *a.noise;
  c.seed = g.seed;
  const auto corpus = synth_corpus(c);
  write_corpus(g.out, corpus);
  Manifest m("synth", g);
  m.config() = to_json(c);
  m.write(g.out);
  std::cout << "synth: " << corpus.ground_truth.size() << " videos, " << corpus.annotations.size() / 2
            << " annotator tracks written to " << g.out << '\n';
}

struct PreprocessArgs {
  std::string annotations;
  std::optional<double> threshold, sigma;
  std::optional<std::string> normalize;
};

void run_preprocess(const Global& g, const PreprocessArgs& a) {
  auto section = g.section("preprocess");
  if (a.normalize) section["normalize_mode"] = *a.normalize;
  auto c = preprocess_config(section);
  if (a.threshold) c.amplitude_threshold = *a.threshold;
  if (a.sigma) c.outlier_sigma = *a.sigma;
  c.validate();
  Manifest m("preprocess", g);
  m.input(a.annotations);
  m.config() = to_json(c);
  const auto signals = preprocess_all(read_annotations(a.annotations), c);
  write_annotations(out_path(g, "preprocessed.csv"), signals);
  m.write(g.out);
  std::cout << "preprocess: " << signals.size() << " signals\n";
}

struct AgreeArgs {
  std::string annotations;
};

void run_agree(const Global& g, const AgreeArgs& a) {
  Manifest m("agree", g);
  m.input(a.annotations);
  const auto signals = read_annotations(a.annotations);

  // coach -> annotator -> dimension -> concatenated values over the coach's videos (video order)
  std::map<std::string, std::map<std::string, std::map<Dimension, std::vector<double>>>> concat;
  std::map<SignalKey, const AnnotationSignal*> sorted;
  for (const auto& s : signals) sorted[s.key()] = &s;
  for (const auto& [key, s] : sorted) {
    auto& v = concat[key.coach_id][key.annotator_id][key.dimension];
    v.insert(v.end(), s->values.begin(), s->values.end());
  }

  csv::Writer out(out_path(g, "agreement.csv"));
  out.row("metric", "dimension", "coach_id", "annotator_id", "value");
  CoachLabels humor_labels;
  std::map<std::string, std::set<std::string>> annotator_sets;
  for (const auto& [coach, per_annotator] : concat) {
    std::vector<ClassSequence> sen, dir;
    std::vector<BinarySequence> hum;
    for (const auto& [annotator, dims] : per_annotator) {
      sen.push_back(discretize(dims.at(Dimension::sentiment)));
      dir.push_back(discretize(dims.at(Dimension::direction)));
      hum.push_back(binary_humor(dims.at(Dimension::sentiment), dims.at(Dimension::direction)));
      humor_labels[coach][annotator] = hum.back();
      annotator_sets[coach].insert(annotator);
    }
    if (per_annotator.size() < 2) {
      warn("coach " + coach + " has a single annotator; agreement skipped");
      continue;
    }
    out.row("alpha", "sentiment", coach, "ALL", krippendorff_alpha(sen));
    out.row("alpha", "direction", coach, "ALL", krippendorff_alpha(dir));
    out.row("alpha", "humor", coach, "ALL", krippendorff_alpha(hum));
    VideoLabels by_video;
    for (const auto& s : signals) {
      if (s.coach_id != coach || s.dimension != Dimension::sentiment) continue;
      auto d = sorted.at({s.coach_id, s.video_id, s.annotator_id, Dimension::direction});
      by_video[s.video_id][s.annotator_id] = binary_humor(s, *d);
    }
    for (const auto& [annotator, j] : mean_jaccard_agreement(by_video)) out.row("jaccard", "humor", coach, annotator, j);
  }

  // Corpus-wide alpha over all coaches when every coach shares one annotator pool.
  const bool shared = !annotator_sets.empty() &&
                      std::all_of(annotator_sets.begin(), annotator_sets.end(),
                                  [&](const auto& kv) { return kv.second == annotator_sets.begin()->second; }) &&
                      annotator_sets.begin()->second.size() >= 2;
  if (shared) {
    std::map<std::string, std::map<Dimension, std::vector<double>>> all;
    for (const auto& [coach, per_annotator] : concat)
      for (const auto& [annotator, dims] : per_annotator)
        for (const auto& [dim, values] : dims) {
          auto& v = all[annotator][dim];
          v.insert(v.end(), values.begin(), values.end());
        }
    std::vector<ClassSequence> sen, dir;
    std::vector<BinarySequence> hum;
    for (const auto& [annotator, dims] : all) {
      sen.push_back(discretize(dims.at(Dimension::sentiment)));
      dir.push_back(discretize(dims.at(Dimension::direction)));
      hum.push_back(binary_humor(dims.at(Dimension::sentiment), dims.at(Dimension::direction)));
    }
    out.row("alpha", "sentiment", "ALL", "ALL", krippendorff_alpha(sen));
    out.row("alpha", "direction", "ALL", "ALL", krippendorff_alpha(dir));
    out.row("alpha", "humor", "ALL", "ALL", krippendorff_alpha(hum));
  } else {
    warn("coaches have different annotator pools; corpus-wide alpha skipped");
  }

  const auto matrix = mean_agreement_matrix(humor_labels);
  csv::Writer mw(out_path(g, "agreement_matrix.csv"));
  std::vector<std::string> header{"coach_id"};
  header.insert(header.end(), matrix.annotators.begin(), matrix.annotators.end());
  mw.row(header);
  for (std::size_t c = 0; c < matrix.coaches.size(); ++c) {
    std::vector<std::string> row{matrix.coaches[c]};
    for (std::size_t i = 0; i < matrix.annotators.size(); ++i) {
      const auto& cell = matrix.cells[c][i];
      row.push_back(cell ? csv::format_double(*cell) : "");
      if (cell) out.row("pairwise_alpha", "humor", matrix.coaches[c], matrix.annotators[i], *cell);
    }
    mw.row(row);
  }
  m.write(g.out);
  std::cout << "agree: " << matrix.coaches.size() << " coaches x " << matrix.annotators.size() << " annotators\n";
}

struct FuseArgs {
  std::string annotations;
};

void run_fuse(const Global& g, const FuseArgs& a) {
  Manifest m("fuse", g);
  m.input(a.annotations);
  const auto result = fuse_gold(read_annotations(a.annotations));
  write_weights(out_path(g, "weights.csv"), result.weights);
  write_gold(out_path(g, "gold.csv"), result.gold);
  m.write(g.out);
  std::cout << "fuse: " << result.weights.size() << " weight sets, " << result.gold.size() << " videos\n";
}

struct SegmentArgs {
  std::string annotations, gold;
  std::optional<int> quorum, drop;
  bool per_video_drop = false;
  std::optional<std::string> held_out;
  double dev_fraction = 0.2;
};

void run_segment(const Global& g, const SegmentArgs& a) {
  auto c = gold_config(g.section("gold"));
  if (a.quorum) c.humor_quorum = *a.quorum;
  if (a.drop) c.drop_count = *a.drop;
  if (a.per_video_drop) c.per_video_drop = true;
  c.validate();
  Manifest m("segment", g);
  m.input(a.annotations);
  m.input(a.gold);
  m.config() = to_json(c);
  const auto table = segment_gold(read_annotations(a.annotations), read_gold(a.gold), c);
  write_segments(out_path(g, "segments.csv"), table);
  if (a.held_out) {
    m.config()["held_out"] = *a.held_out;
    m.config()["dev_fraction"] = a.dev_fraction;
    write_split(out_path(g, "split.csv"), loso_split(table, *a.held_out, a.dev_fraction, g.seed));
  }
  m.write(g.out);
  std::size_t humorous = 0;
  for (const auto& s : table) humorous += static_cast<std::size_t>(s.humor);
  std::cout << "segment: " << table.size() << " segments, " << humorous << " humorous\n";
}

struct TrainArgs {
  std::string model, held_out = "all", features, segments;
  std::string modality = "audio";
  std::optional<std::string> source;
  std::optional<double> dev_fraction;
};

struct FoldResult {
  PredictionSet predictions;
  nn::TrainResult history;
};

void run_train(const Global& g, const TrainArgs& a) {
  if (a.model != "gru" && a.model != "vfmm") throw ValidationError("--model must be gru or vfmm");
  auto tc = a.model == "vfmm" ? nn::clip_train_defaults() : nn::TrainConfig{};
  nn::from_json(g.section("train"), tc);
  tc.seed = g.seed;
  tc.validate();
  const double dev_fraction = a.dev_fraction.value_or(g.config.value("dev_fraction", 0.2));
  const Modality modality = parse_modality(a.modality);
  const std::string source = a.source.value_or(a.model == "gru" ? "gru_" + a.modality : "vfmm");

  Manifest m("train." + source, g);
  m.input(a.features);
  m.input(a.segments);
  const auto store = load_feature_dir(a.features);
  const auto table = read_segments(a.segments);

  std::vector<std::string> coaches;
  for (const auto& s : table)
    if (coaches.empty() || coaches.back() != s.coach_id) coaches.push_back(s.coach_id);
  std::sort(coaches.begin(), coaches.end());
  coaches.erase(std::unique(coaches.begin(), coaches.end()), coaches.end());
  if (a.held_out != "all") {
    if (!std::binary_search(coaches.begin(), coaches.end(), a.held_out))
      throw ValidationError("unknown held-out coach '" + a.held_out + "'");
    coaches = {a.held_out};
  }

  auto dim_of = [&](Modality mod) {
    for (const auto& [key, f] : store)
      if (key.second == mod) return f.dim();
    throw ValidationError("no " + to_string(mod) + " features in " + a.features);
  };
  nn::GruConfig gru_cfg = g.section("gru").get<nn::GruConfig>();
  nn::VfmmConfig vfmm_cfg = g.section("vfmm").get<nn::VfmmConfig>();
  gru_cfg.seed = vfmm_cfg.seed = g.seed;
  if (a.model == "gru") {
    gru_cfg.input_dim = dim_of(modality);
    gru_cfg.validate();
  } else {
    vfmm_cfg.text_dim = dim_of(Modality::text);
    vfmm_cfg.audio_dim = dim_of(Modality::audio);
    vfmm_cfg.video_dim = dim_of(Modality::video);
    vfmm_cfg.validate();
  }
  m.config() = {{"model", a.model}, {"source", source}, {"held_out", a.held_out}, {"dev_fraction", dev_fraction},
                {"train", tc}, {"modality", a.modality}};
  m.config()["architecture"] = a.model == "gru" ? json(gru_cfg) : json(vfmm_cfg);

  const fs::path ckpt_dir = fs::path(g.out) / "checkpoints";
  fs::create_directories(ckpt_dir);
  const auto seed_tag = ".s" + std::to_string(g.seed);

  auto fold = [&](const std::string& coach) -> FoldResult {
    const auto dataset = humor_dataset(table);
    const std::string ckpt = (ckpt_dir / (source + "." + coach + seed_tag + ".ckpt")).string();
    if (a.model == "gru") {
      nn::GruModel model(gru_cfg);
      GruSegmentTask task(model, store, table, loso_split(dataset, coach, dev_fraction, g.seed), modality);
      auto result = nn::train(task, tc);
      nn::save_checkpoint(ckpt, {"gru", json(gru_cfg), g.seed, result.best_epoch, result.best_dev_auc}, model.parameters());
      return {task.predict_test(source, result.best_dev_auc), result};
    }
    nn::VfmmModel model(vfmm_cfg);
    VfmmClipTask task(model, store, table, loso_split_videos(dataset, coach, dev_fraction, g.seed));
    auto result = nn::train(task, tc);
    nn::save_checkpoint(ckpt, {"vfmm", json(vfmm_cfg), g.seed, result.best_epoch, result.best_dev_auc}, model.parameters());
    return {task.predict_test(source, result.best_dev_auc), result};
  };

  // Folds are independent; results are collected in coach order so output is
  // identical for any --jobs value.
  std::vector<FoldResult> results(coaches.size());
  const std::size_t jobs = static_cast<std::size_t>(std::max(1, g.jobs));
  for (std::size_t start = 0; start < coaches.size(); start += jobs) {
    std::vector<std::future<FoldResult>> running;
    for (std::size_t i = start; i < std::min(coaches.size(), start + jobs); ++i)
      running.push_back(std::async(jobs == 1 ? std::launch::deferred : std::launch::async, fold, coaches[i]));
    for (std::size_t i = 0; i < running.size(); ++i) results[start + i] = running[i].get();
  }

  std::vector<PredictionSet> sets;
  csv::Writer log(out_path(g, "training_log." + source + seed_tag + ".csv"));
  log.row("held_out", "epoch", "train_loss", "dev_auc", "improved");
  for (std::size_t i = 0; i < coaches.size(); ++i) {
    for (const auto& r : results[i].history.history)
      log.row(coaches[i], r.epoch, r.train_loss, r.dev_auc, r.improved ? 1 : 0);
    std::cout << "train " << source << " held-out " << coaches[i] << ": best epoch " << results[i].history.best_epoch
              << " of " << results[i].history.epochs_run() << ", dev AUC " << fixed4(results[i].history.best_dev_auc)
              << '\n';
    sets.push_back(std::move(results[i].predictions));
  }
  write_predictions(out_path(g, "predictions." + source + seed_tag + ".csv"), sets);
  m.write(g.out);
}

std::map<SegmentKey, double> task_labels(const SegmentTable& table, Task task) {
  std::map<SegmentKey, double> out;
  for (const auto& s : table) {
    if (task == Task::humor) {
      out[key_of(s)] = s.humor;
    } else {
      const double v = task == Task::sentiment ? s.sentiment : s.direction;
      if (s.humor && v != 0.0) out[key_of(s)] = v > 0.0 ? 1.0 : -1.0;
    }
  }
  return out;
}

struct EvalArgs {
  std::vector<std::string> predictions;
  std::string segments;
};

void run_eval(const Global& g, const EvalArgs& a) {
  Manifest m("eval", g);
  m.input(a.segments);
  for (const auto& p : a.predictions) m.input(p);
  const auto table = read_segments(a.segments);
  std::vector<std::vector<PredictionSet>> runs;
  std::set<std::pair<Task, std::string>> sources;
  for (const auto& p : a.predictions) {
    runs.push_back(read_predictions(p));
    for (const auto& s : runs.back()) sources.insert({s.task, s.source});
  }
  std::vector<ResultsTable> tables;
  for (const auto& [task, source] : sources) {
    std::vector<std::vector<PredictionSet>> task_runs;
    for (const auto& run : runs) {
      task_runs.emplace_back();
      for (const auto& s : run)
        if (s.task == task) task_runs.back().push_back(s);
    }
    auto t = results_from_predictions(source, task_runs, task_labels(table, task));
    if (task != Task::humor) t.source = to_string(task) + ":" + source;
    tables.push_back(std::move(t));
  }
  write_results_csv(out_path(g, "results.csv"), tables);
  const auto text = format_results(tables) + "\n" + format_comparison(compare_sources(tables));
  std::ofstream(out_path(g, "results.txt"), std::ios::binary) << text;
  m.write(g.out);
  std::cout << text;
}

struct LatefuseArgs {
  std::vector<std::string> predictions;
  std::string name = "late_fusion";
  std::string output;
};

void run_latefuse(const Global& g, const LatefuseArgs& a) {
  if (a.predictions.size() < 2) throw ValidationError("latefuse: need at least two prediction files");
  Manifest m("latefuse." + a.name, g);
  for (const auto& p : a.predictions) m.input(p);
  std::map<std::pair<Task, std::string>, std::vector<PredictionSet>> groups;  // (task, coach) -> sets
  for (const auto& p : a.predictions)
    for (auto& s : read_predictions(p)) {
      const auto coach = s.rows.front().key.coach_id;
      groups[{s.task, coach}].push_back(std::move(s));
    }
  std::vector<PredictionSet> fused;
  for (auto& [key, sets] : groups) {
    if (sets.size() < 2) {
      warn("latefuse: coach " + key.second + " has a single " + to_string(key.first) + " source; passed through");
    }
    auto f = late_fuse(sets);
    f.source = a.name;
    fused.push_back(std::move(f));
  }
  const auto file = a.output.empty() ? "predictions." + a.name + ".csv" : a.output;
  write_predictions(out_path(g, file), fused);
  m.config() = {{"name", a.name}};
  m.write(g.out);
  std::cout << "latefuse: " << fused.size() << " fused sets -> " << file << '\n';
}

struct StatsArgs {
  std::string segments;
};

void run_stats(const Global& g, const StatsArgs& a) {
  Manifest m("stats", g);
  m.input(a.segments);
  const auto stats = corpus_stats(read_segments(a.segments));
  static const char* kStyle[2][2] = {{"self_negative", "self_positive"}, {"other_negative", "other_positive"}};
  csv::Writer w(out_path(g, "stats.csv"));
  w.row("scope", "statistic", "value");
  w.row(std::string("ALL"), std::string("segments"), stats.segments);
  w.row(std::string("ALL"), std::string("humorous"), stats.humorous);
  w.row(std::string("ALL"), std::string("humor_rate"), stats.humor_rate);
  w.row(std::string("ALL"), std::string("unclassified"), stats.unclassified);
  std::ostringstream text;
  text << "segments " << stats.segments << ", humorous " << stats.humorous << " (" << std::fixed << std::setprecision(2)
       << 100.0 * stats.humor_rate << " %)\n";
  auto emit = [&](const std::string& scope, const std::optional<StyleShares>& s, const std::string& suffix) {
    if (!s) return;
    for (int d = 0; d < 2; ++d)
      for (int n = 0; n < 2; ++n) w.row(scope, std::string(kStyle[d][n]) + suffix, s->cell[d][n]);
  };
  emit("ALL", stats.shares, "");
  emit("COACH_MEAN", stats.coach_mean, "");
  emit("COACH_STD", stats.coach_std, "");
  for (const auto& c : stats.per_coach) {
    w.row(c.coach_id, std::string("segments"), c.segments);
    w.row(c.coach_id, std::string("humorous"), c.humorous);
    emit(c.coach_id, c.shares, "");
  }
  if (stats.shares) {
    text << std::left << std::setw(10) << "" << std::setw(10) << "Negative" << std::setw(10) << "Positive" << "Total\n";
    const char* rows[2] = {"Self", "Other"};
    for (int d = 0; d < 2; ++d)
      text << std::left << std::setw(10) << rows[d] << std::setw(10) << fixed4(stats.shares->cell[d][0]) << std::setw(10)
           << fixed4(stats.shares->cell[d][1]) << fixed4(stats.shares->direction_total(d)) << '\n';
    text << std::left << std::setw(10) << "Total" << std::setw(10) << fixed4(stats.shares->sentiment_total(0))
         << std::setw(10) << fixed4(stats.shares->sentiment_total(1)) << '\n';
  } else {
    text << "style shares undefined (no classified humorous segments)\n";
  }
  std::ofstream(out_path(g, "stats.txt"), std::ios::binary) << text.str();
  m.write(g.out);
  std::cout << text.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"humorfuse: multimodal humor annotation fusion and detection"};
  app.require_subcommand(1);
  app.fallthrough();

  Global g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--jobs", g.jobs, "Parallel workers for independent folds")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--config", g.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory")->capture_default_str();

  SynthArgs synth;
  auto* cmd_synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  cmd_synth->add_option("--coaches", synth.coaches);
  cmd_synth->add_option("--annotators", synth.annotators);
  cmd_synth->add_option("--minutes", synth.minutes, "Minutes of video per coach");
  cmd_synth->add_option("--video-seconds", synth.video_seconds);
  cmd_synth->add_option("--noise", synth.noise, "Rater noise scale (0 = exact copies of the ground truth)");

  PreprocessArgs pre;
  auto* cmd_pre = app.add_subcommand("preprocess", "Threshold, clip and normalize annotations");
  cmd_pre->add_option("--annotations", pre.annotations)->required()->check(CLI::ExistingFile);
  cmd_pre->add_option("--threshold", pre.threshold, "Amplitude threshold");
  cmd_pre->add_option("--sigma", pre.sigma, "Outlier clipping bound in standard deviations");
  cmd_pre->add_option("--normalize", pre.normalize)->check(CLI::IsMember({"signed_separate", "global"}));

  AgreeArgs agree;
  auto* cmd_agree = app.add_subcommand("agree", "Inter-rater agreement statistics");
  cmd_agree->add_option("--annotations", agree.annotations)->required()->check(CLI::ExistingFile);

  FuseArgs fuse_args;
  auto* cmd_fuse = app.add_subcommand("fuse", "Annotator weights and fused gold signals");
  cmd_fuse->add_option("--annotations", fuse_args.annotations)->required()->check(CLI::ExistingFile);

  SegmentArgs seg;
  auto* cmd_seg = app.add_subcommand("segment", "Build the segment table");
  cmd_seg->add_option("--annotations", seg.annotations)->required()->check(CLI::ExistingFile);
  cmd_seg->add_option("--gold", seg.gold)->required()->check(CLI::ExistingFile);
  cmd_seg->add_option("--quorum", seg.quorum);
  cmd_seg->add_option("--drop", seg.drop, "Annotators dropped for low agreement");
  cmd_seg->add_flag("--per-video-drop", seg.per_video_drop);
  cmd_seg->add_option("--held-out", seg.held_out, "Also write split.csv for this held-out coach");
  cmd_seg->add_option("--dev-fraction", seg.dev_fraction)->capture_default_str();

  TrainArgs tr;
  auto* cmd_train = app.add_subcommand("train", "Leave-one-coach-out training");
  cmd_train->add_option("--model", tr.model)->required()->check(CLI::IsMember({"gru", "vfmm"}));
  cmd_train->add_option("--held-out", tr.held_out, "Coach id or 'all'")->capture_default_str();
  cmd_train->add_option("--features", tr.features)->required()->check(CLI::ExistingDirectory);
  cmd_train->add_option("--segments", tr.segments)->required()->check(CLI::ExistingFile);
  cmd_train->add_option("--modality", tr.modality, "GRU input modality")
      ->check(CLI::IsMember({"audio", "text", "video"}))
      ->capture_default_str();
  cmd_train->add_option("--source", tr.source, "Name of the prediction source");
  cmd_train->add_option("--dev-fraction", tr.dev_fraction);

  EvalArgs ev;
  auto* cmd_eval = app.add_subcommand("eval", "AUC results from prediction files (one per seed)");
  cmd_eval->add_option("--predictions", ev.predictions)->required()->check(CLI::ExistingFile);
  cmd_eval->add_option("--segments", ev.segments)->required()->check(CLI::ExistingFile);

  LatefuseArgs lf;
  auto* cmd_lf = app.add_subcommand("latefuse", "Quality-weighted late fusion of prediction files");
  cmd_lf->add_option("--predictions", lf.predictions)->required()->check(CLI::ExistingFile);
  cmd_lf->add_option("--name", lf.name)->capture_default_str();
  cmd_lf->add_option("--output", lf.output, "Output file name inside --out");

  StatsArgs st;
  auto* cmd_stats = app.add_subcommand("stats", "Segment distribution statistics");
  cmd_stats->add_option("--segments", st.segments)->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (!g.config_path.empty()) {
      std::ifstream in(g.config_path);
      try {
        g.config = json::parse(in);
      } catch (const json::exception& e) {
        throw ValidationError(g.config_path + ": malformed JSON: " + e.what());
      }
      if (!g.config.is_object()) throw ValidationError(g.config_path + ": configuration must be a JSON object");
    }
    fs::create_directories(g.out);
    if (*cmd_synth) run_synth(g, synth);
    else if (*cmd_pre) run_preprocess(g, pre);
    else if (*cmd_agree) run_agree(g, agree);
    else if (*cmd_fuse) run_fuse(g, fuse_args);
    else if (*cmd_seg) run_segment(g, seg);
    else if (*cmd_train) run_train(g, tr);
    else if (*cmd_eval) run_eval(g, ev);
    else if (*cmd_lf) run_latefuse(g, lf);
    else if (*cmd_stats) run_stats(g, st);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "error: configuration: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
