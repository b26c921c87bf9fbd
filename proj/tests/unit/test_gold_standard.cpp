#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "humorfuse/gold_standard.hpp"
#include "oracles/oracles.hpp"

using namespace humorfuse;

namespace {

std::string numbered_id(int a) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "a%02d", a);
  return buf;
}

AnnotatorWeights weights_of(std::vector<std::pair<std::string, double>> w) {
  AnnotatorWeights out;
  for (auto& [a, v] : w) out.entries.push_back({a, 0.0, 0.0, v});
  return out;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("humorfuse_gs_" + name)).string();
}

}  // namespace

TEST(ActiveFrames, HandExample) {
  CoachSignals s{{"a1", {{"v1", {0, 0.5, 0, 0}}}}, {"a2", {{"v1", {0, 0, 0.2, 0}}}}};
  const auto active = active_frames(s);
  EXPECT_EQ(active.at("a1"), (std::vector<double>{0.5, 0}));
  EXPECT_EQ(active.at("a2"), (std::vector<double>{0, 0.2}));
}

TEST(ActiveFrames, SilentAndFullyActive) {
  CoachSignals silent{{"a1", {{"v1", {0, 0}}}}, {"a2", {{"v1", {0, 0}}}}};
  for (const auto& [a, v] : active_frames(silent)) EXPECT_TRUE(v.empty());
  CoachSignals full{{"a1", {{"v1", {1, 2}}, {"v2", {3}}}}, {"a2", {{"v1", {4, 5}}, {"v2", {6}}}}};
  const auto active = active_frames(full);
  EXPECT_EQ(active.at("a1"), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(active.at("a2"), (std::vector<double>{4, 5, 6}));
}

TEST(ActiveFrames, InconsistentLengthsRejected) {
  CoachSignals s{{"a1", {{"v1", {0, 1}}}}, {"a2", {{"v1", {0, 1, 0}}}}};
  EXPECT_THROW(active_frames(s), ValidationError);
  CoachSignals missing{{"a1", {{"v1", {0, 1}}, {"v2", {1}}}}, {"a2", {{"v1", {0, 1}}}}};
  EXPECT_THROW(active_frames(missing), ValidationError);
}

TEST(Weights, IdenticalAnnotatorsGetUniformWeights) {
  ActiveFrameSignals s;
  for (int a = 1; a <= 9; ++a) s[numbered_id(a)] = {0.1, -0.4, 0.9, 0.3, -0.2};
  const auto w = compute_weights(s);
  for (const auto& e : w.entries) EXPECT_NEAR(e.w, 1.0 / 9.0, 1e-15);
  EXPECT_NEAR(w.sum(), 1.0, 1e-12);
}

TEST(Weights, NormalizationHandExample) {
  const auto w = normalize_weights({0.6, 0.4});
  EXPECT_DOUBLE_EQ(w[0], 0.6);
  EXPECT_DOUBLE_EQ(w[1], 0.4);
}

TEST(Weights, NegatedAnnotatorGetsSmallestWeight) {
  const std::vector<double> x{0.2, 0.8, -0.5, 0.1, 0.6};
  std::vector<double> neg(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) neg[i] = -x[i];
  const auto w = compute_weights({{"a1", x}, {"a2", x}, {"a3", neg}});
  const auto ref = oracle::annotator_weights({x, x, neg});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(w.entries[i].w, ref[i], 1e-12);
  EXPECT_LT(w.entries[2].w, w.entries[0].w);
  EXPECT_LT(w.entries[2].w, w.entries[1].w);
}

TEST(Weights, MatchOracleAndSumToOne) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + trial % 8;
    const std::size_t len = 2 + static_cast<std::size_t>(trial % 25);
    std::vector<double> base(len);
    for (auto& v : base) v = g(rng);
    ActiveFrameSignals s;
    std::vector<std::vector<double>> raw;
    for (int a = 0; a < n; ++a) {
      std::vector<double> x(len);
      for (std::size_t t = 0; t < len; ++t) x[t] = base[t] + 0.8 * g(rng);
      s[numbered_id(a)] = x;
      raw.push_back(x);
    }
    ScopedWarningCapture capture;
    const auto w = compute_weights(s);
    if (!capture.messages().empty()) continue;
    ++checked;
    EXPECT_NEAR(w.sum(), 1.0, 1e-12);
    const auto ref = oracle::annotator_weights(raw);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      EXPECT_NEAR(w.entries[i].w, ref[i], 1e-12);
      EXPECT_GE(w.entries[i].w, 0.0);
      EXPECT_LE(w.entries[i].w, 1.0);
    }
  }
  EXPECT_GT(checked, 250);
}

TEST(Weights, NonPositiveTotalFallsBackToUniformWithWarning) {
  ScopedWarningCapture capture;
  const auto w = normalize_weights({-0.3, -0.1, 0.0});
  for (double v : w) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
  EXPECT_EQ(capture.messages().size(), 1u);
}

TEST(Weights, NegativeSumsFlooredAtZero) {
  const auto w = normalize_weights({0.5, -0.2, 1.5});
  EXPECT_DOUBLE_EQ(w[0], 0.25);
  EXPECT_DOUBLE_EQ(w[1], 0.0);
  EXPECT_DOUBLE_EQ(w[2], 0.75);
}

TEST(Weights, Preconditions) {
  EXPECT_THROW(compute_weights({{"a1", {1, 2}}}), ValidationError);
  EXPECT_THROW(compute_weights({{"a1", {1}}, {"a2", {2}}}), ValidationError);
  EXPECT_THROW(compute_weights({{"a1", {1, 2}}, {"a2", {2, 3, 4}}}), ValidationError);
}

TEST(Fuse, HandExamples) {
  EXPECT_EQ(fuse({{"a1", {1, 0}}, {"a2", {0, 1}}}, weights_of({{"a1", 0.6}, {"a2", 0.4}})),
            (std::vector<double>{0.6, 0.4}));
  EXPECT_EQ(fuse({{"a1", {0.3, -0.2}}}, weights_of({{"a1", 1.0}})), (std::vector<double>{0.3, -0.2}));
  EXPECT_EQ(fuse({{"a1", {0, 0}}, {"a2", {0, 0}}}, weights_of({{"a1", 0.5}, {"a2", 0.5}})),
            (std::vector<double>{0, 0}));
}

TEST(Fuse, IdenticalSignalsRecoveredExactly) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> x(100);
  for (auto& v : x) v = u(rng);
  std::map<std::string, std::vector<double>> s;
  ActiveFrameSignals active;
  for (int a = 1; a <= 9; ++a) s[numbered_id(a)] = active[numbered_id(a)] = x;
  EXPECT_EQ(fuse(s, compute_weights(active)), x);
}

TEST(Fuse, Linearity) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::map<std::string, std::vector<double>> s, scaled;
  for (int a = 1; a <= 4; ++a) {
    std::vector<double> x(30);
    for (auto& v : x) v = u(rng);
    s[numbered_id(a)] = x;
    for (auto& v : x) v *= -2.5;
    scaled[numbered_id(a)] = x;
  }
  const auto w = weights_of({{"a01", 0.1}, {"a02", 0.2}, {"a03", 0.3}, {"a04", 0.4}});
  const auto f = fuse(s, w), fs = fuse(scaled, w);
  for (std::size_t t = 0; t < f.size(); ++t) EXPECT_NEAR(fs[t], -2.5 * f[t], 1e-12);
}

TEST(Fuse, AnnotatorMismatchRejected) {
  EXPECT_THROW(fuse({{"a1", {1}}, {"a3", {1}}}, weights_of({{"a1", 0.5}, {"a2", 0.5}})), ValidationError);
  EXPECT_THROW(fuse({{"a1", {1}}, {"a2", {1, 2}}}, weights_of({{"a1", 0.5}, {"a2", 0.5}})), ValidationError);
}

TEST(Drop, NineAnnotatorsKeepSix) {
  std::mt19937_64 rng(10);
  std::bernoulli_distribution bit(0.3);
  VideoLabels labels;
  for (const std::string v : {"v1", "v2"})
    for (int a = 1; a <= 9; ++a) {
      BinarySequence l(40);
      for (auto& x : l) x = bit(rng);
      labels[v][numbered_id(a)] = l;
    }
  EXPECT_EQ(drop_low_agreement(labels, 3).size(), 6u);
}

TEST(Drop, SilentAnnotatorIsDropped) {
  BinarySequence shared{1, 1, 0, 0, 1, 0, 1, 0};
  VideoLabels labels{{"v1", {{"a1", shared}, {"a2", shared}, {"a3", shared}, {"a4", BinarySequence(8, 0)}}}};
  EXPECT_EQ(drop_low_agreement(labels, 1), (std::vector<std::string>{"a1", "a2", "a3"}));
}

TEST(Drop, ZeroIsIdentityAndTiesDropSmallerIdFirst) {
  BinarySequence l{1, 0, 1};
  VideoLabels labels{{"v1", {{"a3", l}, {"a1", l}, {"a2", l}}}};
  EXPECT_EQ(drop_low_agreement(labels, 0), (std::vector<std::string>{"a1", "a2", "a3"}));
  EXPECT_EQ(drop_low_agreement(labels, 1), (std::vector<std::string>{"a2", "a3"}));
  EXPECT_THROW(drop_low_agreement(labels, 3), ValidationError);
}

TEST(Drop, AgreementMatchesJaccardOracle) {
  VideoLabels labels{{"v1", {{"a1", {1, 1, 0, 0}}, {"a2", {0, 1, 1, 0}}, {"a3", {1, 1, 1, 0}}}}};
  const auto m = mean_jaccard_agreement(labels);
  EXPECT_DOUBLE_EQ(m.at("a1"), (1.0 / 3.0 + 2.0 / 3.0) / 2.0);
}

TEST(Windows, CountFormula) {
  EXPECT_EQ(window_count(120, 4, 2), 59u);
  EXPECT_EQ(window_count(3, 4, 2), 0u);
  for (std::size_t len = 4; len <= 1000; ++len) {
    EXPECT_EQ(window_count(len, 4, 2), (len - 4) / 2 + 1);
    EXPECT_EQ(window_count(len, 4, 2), oracle::enumerate_windows(len, 4, 2));
  }
}

TEST(SegmentBinary, QuorumBoundary) {
  GoldConfig cfg;
  std::vector<BinarySequence> three(6, BinarySequence(4, 0)), two = three;
  for (int a = 0; a < 3; ++a) three[static_cast<std::size_t>(a)][static_cast<std::size_t>(a)] = 1;
  for (int a = 0; a < 2; ++a) two[static_cast<std::size_t>(a)][3] = 1;
  EXPECT_EQ(segment_binary(three, cfg), (std::vector<int>{1}));
  EXPECT_EQ(segment_binary(two, cfg), (std::vector<int>{0}));
}

TEST(SegmentBinary, SilentAndShortVideos) {
  GoldConfig cfg;
  EXPECT_EQ(segment_binary(std::vector<BinarySequence>(6, BinarySequence(120, 0)), cfg), std::vector<int>(59, 0));
  ScopedWarningCapture capture;
  EXPECT_TRUE(segment_binary(std::vector<BinarySequence>(6, BinarySequence(3, 1)), cfg).empty());
  EXPECT_EQ(capture.messages().size(), 1u);
  EXPECT_THROW(segment_binary(std::vector<BinarySequence>(2, BinarySequence(8, 1)), cfg), ValidationError);
}

TEST(SegmentBinary, WindowsUseHopAndFrame) {
  GoldConfig cfg;
  cfg.humor_quorum = 1;
  BinarySequence l(10, 0);
  l[5] = 1;  // frame 5 lies in windows starting at frames 2 and 4
  EXPECT_EQ(segment_binary({l}, cfg), (std::vector<int>{0, 1, 1, 0}));
}

TEST(SegmentBinary, QuorumMonotone) {
  std::mt19937_64 rng(11);
  std::bernoulli_distribution bit(0.1);
  std::vector<BinarySequence> labels(6, BinarySequence(200));
  for (auto& l : labels)
    for (auto& x : l) x = bit(rng);
  int previous = 1 << 30;
  for (int q = 1; q <= 6; ++q) {
    GoldConfig cfg;
    cfg.humor_quorum = q;
    const auto h = segment_binary(labels, cfg);
    const int count = std::accumulate(h.begin(), h.end(), 0);
    EXPECT_LE(count, previous);
    previous = count;
  }
}

TEST(SegmentDimensions, MeanPoolingAndZeroing) {
  GoldConfig cfg;
  const auto rows = segment_dimensions("c01", "v1", {0.2, 0.4, 0, 0.2, 0.9, 0.9}, {0, 0, 0, 0, 0.5, 0.5}, {1, 0}, cfg);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_NEAR(rows[0].sentiment, 0.2, 1e-15);
  EXPECT_EQ(rows[0].start_ms, 0);
  EXPECT_EQ(rows[0].end_ms, 2000);
  EXPECT_EQ(rows[1].start_ms, 1000);
  EXPECT_EQ(rows[1].end_ms, 3000);
  EXPECT_EQ(rows[1].sentiment, 0.0);
  EXPECT_EQ(rows[1].direction, 0.0);
  const auto silent = segment_dimensions("c01", "v1", {0, 0, 0, 0}, {0, 0, 0, 0}, {1}, cfg);
  EXPECT_EQ(silent[0].sentiment, 0.0);
  EXPECT_THROW(segment_dimensions("c01", "v1", {0, 0, 0, 0}, {0, 0, 0, 0}, {1, 1}, cfg), ValidationError);
}

TEST(Stats, BalancedComposition) {
  SegmentTable t;
  const double sd[4][2] = {{-0.5, -0.5}, {0.5, -0.5}, {-0.5, 0.5}, {0.5, 0.5}};
  for (int i = 0; i < 8; ++i) t.push_back({"c01", "v1", i, i * 1000, i * 1000 + 2000, 1, sd[i % 4][0], sd[i % 4][1]});
  t.push_back({"c01", "v1", 8, 8000, 10000, 0, 0, 0});
  const auto s = corpus_stats(t);
  EXPECT_DOUBLE_EQ(s.humor_rate, 8.0 / 9.0);
  for (int d = 0; d < 2; ++d)
    for (int n = 0; n < 2; ++n) EXPECT_DOUBLE_EQ(s.shares->cell[d][n], 0.25);
}

TEST(Stats, SingleSegmentAndUndefined) {
  SegmentTable t{{"c01", "v1", 0, 0, 2000, 1, 0.4, -0.3}};
  const auto s = corpus_stats(t);
  EXPECT_DOUBLE_EQ(s.shares->cell[0][1], 1.0);  // self-directed, positive
  SegmentTable none{{"c01", "v1", 0, 0, 2000, 0, 0, 0}};
  ScopedWarningCapture capture;
  EXPECT_FALSE(corpus_stats(none).shares.has_value());
  EXPECT_THROW(corpus_stats(SegmentTable{}), ValidationError);
}

TEST(Stats, SharesSumToOneAndCoachSpread) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::bernoulli_distribution humor(0.3);
  SegmentTable t;
  for (int c = 1; c <= 5; ++c)
    for (int i = 0; i < 100; ++i) {
      const bool h = humor(rng);
      t.push_back({"c0" + std::to_string(c), "v", i, i * 1000, i * 1000 + 2000, h ? 1 : 0, h ? u(rng) : 0.0,
                   h ? u(rng) : 0.0});
    }
  const auto s = corpus_stats(t);
  double total = 0.0;
  for (int d = 0; d < 2; ++d)
    for (int n = 0; n < 2; ++n) total += s.shares->cell[d][n];
  EXPECT_NEAR(total, 1.0, 1e-12);
  ASSERT_EQ(s.per_coach.size(), 5u);
  double mean00 = 0.0;
  for (const auto& c : s.per_coach) mean00 += c.shares->cell[0][0] / 5.0;
  EXPECT_NEAR(s.coach_mean->cell[0][0], mean00, 1e-12);
}

TEST(Files, GoldAndSegmentsRoundTrip) {
  std::map<std::pair<std::string, std::string>, GoldSignals> gold{{{"c01", "v1"}, {{0.1, 0.2}, {-0.3, 0.4}}}};
  write_gold(temp_path("gold.csv"), gold);
  const auto g = read_gold(temp_path("gold.csv"));
  EXPECT_EQ(g.at({"c01", "v1"}).sentiment, (std::vector<double>{0.1, 0.2}));
  EXPECT_EQ(g.at({"c01", "v1"}).direction, (std::vector<double>{-0.3, 0.4}));

  SegmentTable t{{"c01", "v1", 0, 0, 2000, 1, 0.1234567890123, -0.5}, {"c01", "v1", 1, 1000, 3000, 0, 0, 0}};
  write_segments(temp_path("seg.csv"), t);
  const auto back = read_segments(temp_path("seg.csv"));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].sentiment, t[0].sentiment);
  EXPECT_EQ(back[1].start_ms, 1000);

  std::ofstream(temp_path("bad_seg.csv")) << "coach_id,video_id,segment_index,start_ms,end_ms,humor,sentiment,direction\n"
                                          << "c01,v1,0,0,2000,2,0,0\n";
  EXPECT_THROW(read_segments(temp_path("bad_seg.csv")), ValidationError);
}
