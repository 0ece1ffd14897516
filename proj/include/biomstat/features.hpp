#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "biomstat/error.hpp"
#include "biomstat/similarity_stats.hpp"

namespace biomstat {

inline constexpr std::size_t kFeatureCount = 9;

// Column order is frozen; CSV files and models depend on it.
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "mean", "median", "variance", "skewness", "kurtosis",
    "q25",  "q75",    "var_mean_ratio", "kurt_var_ratio"};

enum class Feature : std::size_t {
  kMean,
  kMedian,
  kVariance,
  kSkewness,
  kKurtosis,
  kQ25,
  kQ75,
  kVarMeanRatio,
  kKurtVarRatio,
};

// Below this, mean or variance counts as zero and dependent ratios are 0.
inline constexpr double kDegenerateEpsilon = 1e-12;

inline std::size_t feature_index(std::string_view name) {
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (kFeatureNames[i] == name) return i;
  }
  // "skew" is how the name is often abbreviated in reports.
  if (name == "skew") return static_cast<std::size_t>(Feature::kSkewness);
  fail(ErrorKind::kInvalidArgument, "unknown feature '" + std::string(name) + "'");
}

struct FeatureVector {
  std::array<double, kFeatureCount> values{};

  double operator[](Feature f) const { return values[static_cast<std::size_t>(f)]; }
  double& operator[](Feature f) { return values[static_cast<std::size_t>(f)]; }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

// Non-empty subset of the nine features, stored as a bit set where bit i is
// feature i in canonical order.
class FeatureMask {
 public:
  static constexpr std::uint32_t kAllBits = (1u << kFeatureCount) - 1;

  static FeatureMask all() { return FeatureMask(kAllBits); }

  static FeatureMask from_bits(std::uint32_t bits) {
    if (bits == 0 || (bits & ~kAllBits) != 0) {
      fail(ErrorKind::kInvalidArgument,
           "feature mask must be a non-empty subset of the 9 features");
    }
    return FeatureMask(bits);
  }

  // Comma-separated feature names, or "all".
  static FeatureMask parse(std::string_view text) {
    if (text == "all") return all();
    std::uint32_t bits = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
      const std::size_t comma = std::min(text.find(',', start), text.size());
      std::string_view name = text.substr(start, comma - start);
      while (!name.empty() && name.front() == ' ') name.remove_prefix(1);
      while (!name.empty() && name.back() == ' ') name.remove_suffix(1);
      if (!name.empty()) bits |= 1u << feature_index(name);
      start = comma + 1;
    }
    return from_bits(bits);
  }

  std::uint32_t bits() const noexcept { return bits_; }
  std::size_t size() const noexcept {
    return static_cast<std::size_t>(std::popcount(bits_));
  }
  bool contains(std::size_t feature) const noexcept {
    return (bits_ >> feature) & 1u;
  }

  std::vector<std::size_t> indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < kFeatureCount; ++i)
      if (contains(i)) out.push_back(i);
    return out;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (std::size_t i : indices()) out.emplace_back(kFeatureNames[i]);
    return out;
  }

  std::string to_string() const {
    std::string out;
    for (std::size_t i : indices()) {
      if (!out.empty()) out += ", ";
      out += kFeatureNames[i];
    }
    return out;
  }

  std::vector<double> apply(const FeatureVector& v) const {
    std::vector<double> out;
    out.reserve(size());
    for (std::size_t i : indices()) out.push_back(v.values[i]);
    return out;
  }

  friend bool operator==(const FeatureMask&, const FeatureMask&) = default;

 private:
  explicit FeatureMask(std::uint32_t bits) : bits_(bits) {}
  std::uint32_t bits_;
};

// Central moments from float64 sums of (s - c)^k over n values, where c is
// any fixed shift (0 for raw power sums). With d = s - c:
//   mean = c + mu, mu = E[d]
//   m2 = E[d^2] - mu^2
//   m3 = E[d^3] - 3 mu E[d^2] + 2 mu^3
//   m4 = E[d^4] - 4 mu E[d^3] + 6 mu^2 E[d^2] - 3 mu^4
struct CentralMoments {
  double mean = 0.0;
  double m2 = 0.0;
  double m3 = 0.0;
  double m4 = 0.0;
};

inline CentralMoments central_moments(const std::array<double, 4>& sums,
                                      std::uint64_t n, double shift = 0.0) {
  const double count = static_cast<double>(n);
  const double mu = sums[0] / count;  // mean of d
  const double e2 = sums[1] / count;
  const double e3 = sums[2] / count;
  const double e4 = sums[3] / count;
  const double mu2 = mu * mu;
  CentralMoments m;
  m.mean = shift + mu;
  m.m2 = e2 - mu2;
  m.m3 = e3 - 3.0 * mu * e2 + 2.0 * mu2 * mu;
  m.m4 = e4 - 4.0 * mu * e3 + 6.0 * mu2 * e2 - 3.0 * mu2 * mu2;
  return m;
}

// Nine-number summary of the pairwise similarity distribution. Population
// moments, Pearson (non-excess) kurtosis. When the variance is below
// kDegenerateEpsilon the variance and every entry divided by it are 0; when
// |mean| is below it var_mean_ratio is 0.
inline FeatureVector extract_features(const SimilarityStats& stats) {
  if (stats.pair_count() < 3) {
    fail(ErrorKind::kInsufficientData,
         "insufficient pairs: " + std::to_string(stats.pair_count()) +
             " (need at least 3)");
  }
  const CentralMoments m = central_moments(stats.shifted_sums(), stats.pair_count(), stats.shift());

  FeatureVector f;
  f[Feature::kMean] = m.mean;
  f[Feature::kMedian] = quantile(stats, 0.5);
  f[Feature::kQ25] = quantile(stats, 0.25);
  f[Feature::kQ75] = quantile(stats, 0.75);

  if (m.m2 >= kDegenerateEpsilon) {
    const double skewness = m.m3 / std::pow(m.m2, 1.5);
    const double kurtosis = m.m4 / (m.m2 * m.m2);
    f[Feature::kVariance] = m.m2;
    f[Feature::kSkewness] = skewness;
    f[Feature::kKurtosis] = kurtosis;
    f[Feature::kKurtVarRatio] = kurtosis / m.m2;
    f[Feature::kVarMeanRatio] =
        std::abs(m.mean) >= kDegenerateEpsilon ? m.m2 / m.mean : 0.0;
  }

  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (!std::isfinite(f.values[i])) {
      fail(ErrorKind::kValidation,
           "non-finite feature " + std::string(kFeatureNames[i]));
    }
  }
  return f;
}

}  // namespace biomstat
