#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "humorfuse/signal_prep.hpp"

using namespace humorfuse;

namespace {

AnnotationSignal make(std::vector<double> values, std::string annotator = "a01", std::string video = "c01_v01",
                      Dimension dim = Dimension::sentiment) {
  return {"c01", std::move(video), std::move(annotator), dim, std::move(values)};
}

// Population mean/std over nonzero values, evaluated in long double.
std::pair<double, double> nonzero_stats(const std::vector<double>& v) {
  long double sum = 0, n = 0;
  for (double x : v)
    if (x != 0.0) {
      sum += x;
      n += 1;
    }
  const long double mean = sum / n;
  long double ss = 0;
  for (double x : v)
    if (x != 0.0) ss += (x - mean) * (x - mean);
  return {static_cast<double>(mean), static_cast<double>(std::sqrt(ss / n))};
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("humorfuse_sp_" + name)).string();
}

}  // namespace

TEST(Threshold, ZeroesSmallAmplitudes) {
  EXPECT_EQ(threshold_small_amplitudes(make({0, 0.01, 0.5}), 0.05).values, (std::vector<double>{0, 0, 0.5}));
  EXPECT_EQ(threshold_small_amplitudes(make({0, 0, 0}), 0.05).values, (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(threshold_small_amplitudes(make({-0.04, 0.06, -0.2}), 0.05).values,
            (std::vector<double>{0, 0.06, -0.2}));
}

TEST(Threshold, ValueAtThresholdIsKept) {
  EXPECT_EQ(threshold_small_amplitudes(make({0.05, -0.05}), 0.05).values, (std::vector<double>{0.05, -0.05}));
}

TEST(Threshold, RejectsNonFiniteNamingTheFrame) {
  try {
    threshold_small_amplitudes(make({0.1, std::numeric_limits<double>::quiet_NaN()}), 0.05);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("frame 1"), std::string::npos);
  }
  EXPECT_THROW(threshold_small_amplitudes(make({0.1}), -1.0), ValidationError);
}

TEST(Clip, SingleOutlierReplacedByUpperBound) {
  std::vector<double> v(19, 0.5);
  v.push_back(10.0);
  const auto [mean, sd] = nonzero_stats(v);
  EXPECT_NEAR(mean, 0.975, 1e-15);
  const double bound = mean + 2.5 * sd;
  EXPECT_NEAR(bound, 6.151, 1e-3);
  const auto out = clip_outliers(make(v), 2.5).values;
  for (int i = 0; i < 19; ++i) EXPECT_EQ(out[static_cast<std::size_t>(i)], 0.5);
  EXPECT_NEAR(out[19], bound, 1e-12);
}

TEST(Clip, ZerosIgnoredAndUntouched) {
  std::vector<double> v(19, 0.5);
  v.push_back(10.0);
  std::vector<double> padded;
  for (double x : v) {
    padded.push_back(0.0);
    padded.push_back(x);
  }
  const auto out = clip_outliers(make(padded), 2.5).values;
  const auto ref = clip_outliers(make(v), 2.5).values;
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_EQ(out[2 * i], 0.0);
    EXPECT_EQ(out[2 * i + 1], ref[i]);
  }
}

TEST(Clip, DegenerateInputsPassThrough) {
  EXPECT_EQ(clip_outliers(make({0, 0, 0}), 2.5).values, (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(clip_outliers(make({0.3, 0.3, 0, 0.3}), 2.5).values, (std::vector<double>{0.3, 0.3, 0, 0.3}));
  EXPECT_EQ(clip_outliers(make({0, 7.0, 0}), 2.5).values, (std::vector<double>{0, 7.0, 0}));
  EXPECT_THROW(clip_outliers(make({1.0}), 0.0), ValidationError);
}

TEST(Clip, LowerOutlierReplacedByLowerBound) {
  std::vector<double> v(19, -0.5);
  v.push_back(-10.0);
  const auto [mean, sd] = nonzero_stats(v);
  const auto out = clip_outliers(make(v), 2.5).values;
  EXPECT_NEAR(out[19], mean - 2.5 * sd, 1e-12);
}

TEST(Normalize, SignedSeparate) {
  EXPECT_EQ(minmax_normalize(make({0.2, 0.4, -0.5, 0})).values, (std::vector<double>{0.5, 1.0, -1.0, 0}));
  EXPECT_EQ(minmax_normalize(make({1.0, -1.0, 0})).values, (std::vector<double>{1.0, -1.0, 0}));
  EXPECT_EQ(minmax_normalize(make({0.3, 0.3})).values, (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(minmax_normalize(make({-0.2, -0.1})).values, (std::vector<double>{-1.0, -0.5}));
  EXPECT_EQ(minmax_normalize(make({0, 0})).values, (std::vector<double>{0, 0}));
}

TEST(Normalize, GlobalMapsNonzeroRangeOntoUnitInterval) {
  const auto out = minmax_normalize(make({0.2, 0.4, -0.6, 0}), NormalizeMode::global).values;
  EXPECT_DOUBLE_EQ(out[0], 2.0 * 0.8 / 1.0 - 1.0);
  EXPECT_DOUBLE_EQ(out[1], 1.0);
  EXPECT_DOUBLE_EQ(out[2], -1.0);
  EXPECT_EQ(out[3], 0.0);
  EXPECT_EQ(minmax_normalize(make({0.4, 0.4}), NormalizeMode::global).values, (std::vector<double>{0.4, 0.4}));
}

TEST(PreprocessAll, StatisticsPooledAcrossVideos) {
  PreprocessConfig cfg;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<double> v1(30), v2(40);
  for (auto& x : v1) x = u(rng);
  for (auto& x : v2) x = u(rng);
  v2[5] = 40.0;  // outlier that only the pooled statistics see in context
  const auto out = preprocess_all({make(v1, "a01", "c01_v01"), make(v2, "a01", "c01_v02")}, cfg);

  std::vector<double> joined = v1;
  joined.insert(joined.end(), v2.begin(), v2.end());
  auto ref = make(joined);
  ref = threshold_small_amplitudes(ref, cfg.amplitude_threshold);
  ref = clip_outliers(ref, cfg.outlier_sigma);
  ref = minmax_normalize(ref);
  std::vector<double> got = out[0].values;
  got.insert(got.end(), out[1].values.begin(), out[1].values.end());
  EXPECT_EQ(got, ref.values);
}

TEST(PreprocessAll, AnnotatorsAndDimensionsAreIndependent) {
  PreprocessConfig cfg;
  const auto a = make({0.2, 0.4, -0.5}, "a01");
  const auto b = make({2.0, 8.0, -1.0}, "a02");
  const auto c = make({0.1, 0.9, 0.3}, "a01", "c01_v01", Dimension::direction);
  const auto out = preprocess_all({a, b, c}, cfg);
  EXPECT_EQ(out[0].values, minmax_normalize(clip_outliers(a, 2.5)).values);
  EXPECT_EQ(out[1].values, minmax_normalize(clip_outliers(b, 2.5)).values);
  EXPECT_EQ(out[2].values, minmax_normalize(clip_outliers(c, 2.5)).values);
}

TEST(PreprocessAll, EmptyAndDuplicates) {
  EXPECT_TRUE(preprocess_all({}, PreprocessConfig{}).empty());
  EXPECT_THROW(preprocess_all({make({0.1}), make({0.2})}, PreprocessConfig{}), ValidationError);
  PreprocessConfig bad;
  bad.outlier_sigma = 0.0;
  EXPECT_THROW(preprocess_all({}, bad), ValidationError);
}

TEST(PreprocessAll, PipelineEqualsCompositionAndPreservesZerosAndBounds) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 2.0);
  std::bernoulli_distribution silent(0.4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(60);
    for (auto& x : v) x = silent(rng) ? 0.0 : n(rng);
    const auto out = preprocess_all({make(v)}, PreprocessConfig{}).front().values;
    const auto ref = minmax_normalize(clip_outliers(threshold_small_amplitudes(make(v), 0.05), 2.5)).values;
    ASSERT_EQ(out, ref);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] == 0.0) {
        EXPECT_EQ(out[i], 0.0);
      }
      EXPECT_LE(std::abs(out[i]), 1.0);
    }
  }
}

TEST(PreprocessAll, IdempotentWhenNothingIsClippedOrThresholded) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> mag(0.5, 1.0);
  std::bernoulli_distribution sign(0.5), silent(0.3);
  PreprocessConfig cfg;
  cfg.outlier_sigma = 100.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(40);
    for (auto& x : v) x = silent(rng) ? 0.0 : (sign(rng) ? 1.0 : -1.0) * mag(rng) * 3.0;
    const auto once = preprocess_all({make(v)}, cfg);
    const auto twice = preprocess_all(once, cfg);
    EXPECT_EQ(once.front().values, twice.front().values);
  }
}

TEST(PreprocessAll, ClippingMakesTheDefaultPipelineNonIdempotent) {
  std::vector<double> v(19, 0.5);
  v.push_back(10.0);
  const auto once = preprocess_all({make(v)}, PreprocessConfig{});
  const auto twice = preprocess_all(once, PreprocessConfig{});
  EXPECT_EQ(once.front().values[19], 1.0);
  EXPECT_NE(once.front().values, twice.front().values);
}

TEST(AnnotationFile, RoundTripWithImplicitZeros) {
  const auto path = temp_path("ann.csv");
  {
    std::ofstream f(path);
    f << "coach_id,video_id,annotator_id,dimension,t_ms,value\n"
      << "c01,c01_v01,a01,sentiment,0,0.5\n"
      << "c01,c01_v01,a02,direction,1500,-0.25\n";
  }
  const auto signals = read_annotations(path);
  ASSERT_EQ(signals.size(), 4u);  // 2 annotators x 2 dimensions
  for (const auto& s : signals) EXPECT_EQ(s.values.size(), 4u);
  EXPECT_EQ(signals[0].values, (std::vector<double>{0.5, 0, 0, 0}));
  EXPECT_EQ(signals[3].values, (std::vector<double>{0, 0, 0, -0.25}));
  const auto copy = temp_path("ann2.csv");
  write_annotations(copy, signals);
  const auto again = read_annotations(copy);
  ASSERT_EQ(again.size(), signals.size());
  for (std::size_t i = 0; i < again.size(); ++i) EXPECT_EQ(again[i].values, signals[i].values);
}

TEST(AnnotationFile, MalformedRowsReportFileAndLine) {
  const auto path = temp_path("bad.csv");
  auto expect_error = [&](const std::string& body, const std::string& needle) {
    std::ofstream(path) << "coach_id,video_id,annotator_id,dimension,t_ms,value\n" << body;
    try {
      read_annotations(path);
      ADD_FAILURE() << "no error for " << body;
    } catch (const ValidationError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_error("c01,c01_v01,a01,sentiment,250,0.5\n", path + ":2");
  expect_error("c01,c01_v01,a01,mood,0,0.5\n", path + ":2");
  expect_error("c01,c01_v01,a01,sentiment,0,abc\n", path + ":2");
  expect_error("c01,c01_v01,a01,sentiment,0,0.5\nc01,c01_v01,a01\n", path + ":3");
  expect_error("c01,c01_v01,a01,sentiment,0,0.5\nc01,c01_v01,a01,sentiment,0,0.1\n", "duplicate frame");
  std::ofstream(path) << "coach,video,annotator,dimension,t_ms,value\n";
  EXPECT_THROW(read_annotations(path), ValidationError);
}
