#include <gtest/gtest.h>

#include <cmath>

#include "biomstat/features.hpp"
#include "biomstat/synth.hpp"
#include "oracles.hpp"

using namespace biomstat;

namespace {

SimilarityStats stats_from_values(std::size_t frame_count, const std::vector<double>& values) {
  const auto sums = oracle::power_sums(values);
  std::vector<float> buffer;
  for (double v : values) buffer.push_back(static_cast<float>(v));
  std::sort(buffer.begin(), buffer.end());
  return SimilarityStats(frame_count, {sums[0], sums[1], sums[2], sums[3]},
                         ExactBuffer{std::move(buffer)});
}

// Unit vectors whose pairwise similarities all equal c.
EmbeddingSequence equiangular(std::size_t n, double c) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> r(n + 1, 0.0);
    r[0] = std::sqrt(c);
    r[i + 1] = std::sqrt(1.0 - c);
    rows.push_back(r);
  }
  return oracle::sequence_from_rows(rows);
}

}  // namespace

TEST(Features, NamesAndOrder) {
  EXPECT_EQ(kFeatureNames[0], "mean");
  EXPECT_EQ(kFeatureNames[8], "kurt_var_ratio");
  EXPECT_EQ(feature_index("q75"), 6u);
  EXPECT_EQ(feature_index("skew"), feature_index("skewness"));
  EXPECT_THROW(feature_index("entropy"), Error);
}

TEST(Features, ConstantSimilarities) {
  const auto f = extract_features(pairwise_stats(equiangular(6, 0.9)));
  EXPECT_NEAR(f[Feature::kMean], 0.9, 1e-6);
  EXPECT_NEAR(f[Feature::kMedian], 0.9, 1e-6);
  EXPECT_NEAR(f[Feature::kQ25], 0.9, 1e-6);
  EXPECT_EQ(f[Feature::kVariance], 0.0);
  EXPECT_EQ(f[Feature::kSkewness], 0.0);
  EXPECT_EQ(f[Feature::kKurtosis], 0.0);
  EXPECT_EQ(f[Feature::kVarMeanRatio], 0.0);
  EXPECT_EQ(f[Feature::kKurtVarRatio], 0.0);
}

TEST(Features, ZeroMeanDegenerate) {
  const auto seq = oracle::sequence_from_rows({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}});
  const auto f = extract_features(pairwise_stats(seq));
  for (double v : f.values) EXPECT_EQ(v, 0.0);
}

TEST(Features, ThreeValueExample) {
  const auto f = extract_features(stats_from_values(3, {0.8, 0.9, 1.0}));
  // Population moments: var = 0.02/3, m4 = 2e-4/3, kurtosis = 1.5.
  EXPECT_NEAR(f[Feature::kMean], 0.9, 1e-12);
  EXPECT_NEAR(f[Feature::kVariance], 0.02 / 3, 1e-12);
  EXPECT_NEAR(f[Feature::kSkewness], 0.0, 1e-6);
  EXPECT_NEAR(f[Feature::kKurtosis], 1.5, 1e-6);
  EXPECT_NEAR(f[Feature::kVarMeanRatio], 0.02 / 3 / 0.9, 1e-12);
  EXPECT_NEAR(f[Feature::kKurtVarRatio], 225.0, 1e-3);
  EXPECT_NEAR(f[Feature::kMedian], 0.9, 1e-7);
  EXPECT_NEAR(f[Feature::kQ25], 0.85, 1e-7);
  EXPECT_NEAR(f[Feature::kQ75], 0.95, 1e-7);
}

TEST(Features, SymmetricSampleHasZeroSkew) {
  const auto f = extract_features(stats_from_values(4, {0.2, 0.4, 0.5, 0.6, 0.8, 0.5}));
  EXPECT_NEAR(f[Feature::kSkewness], 0.0, 1e-9);
}

TEST(Features, RejectsFewerThanThreePairs) {
  const SimilarityStats stats(2, {0.5, 0.25, 0.125, 0.0625}, ExactBuffer{{0.5f}});
  EXPECT_THROW(extract_features(stats), Error);
}

// Every feature of a small sequence agrees with the two-pass oracle.
TEST(Features, FuzzAgainstOracle) {
  Rng rng(123);
  for (int trial = 0; trial < 150; ++trial) {
    const auto seq = oracle::random_sequence(3 + rng.below(58), 1 + rng.below(40), rng);
    const auto f = extract_features(pairwise_stats(seq));
    const auto sims = oracle::pairwise_similarities(seq);
    const auto m = oracle::central_moments(sims);
    const auto stored = oracle::as_float32(sims);
    EXPECT_TRUE(oracle::close(f[Feature::kMean], m.mean, 1e-8, 1e-12));
    EXPECT_EQ(f[Feature::kMedian], oracle::quantile(stored, 0.5));
    EXPECT_EQ(f[Feature::kQ25], oracle::quantile(stored, 0.25));
    EXPECT_EQ(f[Feature::kQ75], oracle::quantile(stored, 0.75));
    if (m.variance < kDegenerateEpsilon) continue;
    EXPECT_TRUE(oracle::close(f[Feature::kVariance], m.variance, 1e-8, 1e-16));
    EXPECT_TRUE(oracle::close(f[Feature::kSkewness], m.skewness, 1e-8, 1e-8))
        << f[Feature::kSkewness] << " vs " << m.skewness;
    EXPECT_TRUE(oracle::close(f[Feature::kKurtosis], m.kurtosis, 1e-8, 1e-12));
    // Pearson: kurtosis >= skewness^2 + 1.
    EXPECT_GE(f[Feature::kKurtosis], f[Feature::kSkewness] * f[Feature::kSkewness] + 1.0 - 1e-9);
    for (double v : f.values) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(Features, StreamingAgreesWithExact) {
  SynthParams p;
  p.dim = 64;
  p.n_frames = 400;
  const auto seq = generate_video(p, Label::kDeepfake);
  PairwiseOptions streaming;
  streaming.mode = StatsMode::kStreaming;
  const auto a = extract_features(pairwise_stats(seq));
  const auto b = extract_features(pairwise_stats(seq, streaming));
  for (std::size_t i : {0u, 2u, 3u, 4u, 7u, 8u}) EXPECT_EQ(a.values[i], b.values[i]);
  for (std::size_t i : {1u, 5u, 6u}) EXPECT_LE(std::abs(a.values[i] - b.values[i]), 2.0 / 4096);
}

TEST(FeatureMask, ParseAndApply) {
  const FeatureMask all = FeatureMask::parse("all");
  EXPECT_EQ(all.size(), 9u);
  const FeatureMask m = FeatureMask::parse("kurtosis, mean,skew");
  EXPECT_EQ(m.bits(), 0b11001u);
  EXPECT_EQ(m.names(), (std::vector<std::string>{"mean", "skewness", "kurtosis"}));
  EXPECT_EQ(m.to_string(), "mean, skewness, kurtosis");
  FeatureVector v;
  for (std::size_t i = 0; i < 9; ++i) v.values[i] = static_cast<double>(i);
  EXPECT_EQ(m.apply(v), (std::vector<double>{0, 3, 4}));
  EXPECT_THROW(FeatureMask::parse(""), Error);
  EXPECT_THROW(FeatureMask::parse("mean,bogus"), Error);
  EXPECT_THROW(FeatureMask::from_bits(0), Error);
  EXPECT_THROW(FeatureMask::from_bits(512), Error);
}

// A tight cluster far from zero: raw power sums would cancel badly here.
TEST(Features, TightDistributionKeepsPrecision) {
  SynthParams p;
  p.dim = 64;
  p.n_frames = 60;
  p.authentic_concentration = 400.0;
  const auto seq = generate_video(p, Label::kAuthentic);
  const auto f = extract_features(pairwise_stats(seq));
  const auto m = oracle::central_moments(oracle::pairwise_similarities(seq));
  EXPECT_TRUE(oracle::close(f[Feature::kVariance], m.variance, 1e-9, 0.0));
  EXPECT_TRUE(oracle::close(f[Feature::kSkewness], m.skewness, 1e-8, 1e-9));
  EXPECT_TRUE(oracle::close(f[Feature::kKurtosis], m.kurtosis, 1e-8, 0.0));
}
