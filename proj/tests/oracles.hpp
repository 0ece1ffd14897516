#pragma once

// Slow, direct reference computations used only by tests. Nothing here
// calls into the code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "biomstat/embedding_store.hpp"
#include "biomstat/gbtree.hpp"
#include "biomstat/random.hpp"

namespace biomstat::oracle {

// Similarities of every pair i < j by a plain double loop, clamped to [-1, 1].
inline std::vector<double> pairwise_similarities(const EmbeddingSequence& seq,
                                                 std::optional<std::size_t> max_frames = {}) {
  const std::size_t n = max_frames ? std::min(*max_frames, seq.frame_count()) : seq.frame_count();
  const auto data = seq.embeddings();
  const std::size_t dim = seq.dim();
  std::vector<double> out;
  out.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        dot += static_cast<double>(data[i * dim + k]) * static_cast<double>(data[j * dim + k]);
      }
      out.push_back(std::min(1.0, std::max(-1.0, dot)));
    }
  }
  return out;
}

inline std::vector<double> power_sums(const std::vector<double>& values) {
  std::vector<double> sums(4, 0.0);
  for (double s : values) {
    double p = 1.0;
    for (int k = 0; k < 4; ++k) {
      p *= s;
      sums[static_cast<std::size_t>(k)] += p;
    }
  }
  return sums;
}

// Pair values as stored by the exact buffer: rounded to float32.
inline std::vector<double> as_float32(const std::vector<double>& values) {
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(static_cast<double>(static_cast<float>(v)));
  return out;
}

// Interpolated quantile at rank h = q (n - 1) of an unsorted sample.
inline double quantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(h));
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

struct Moments {
  double mean, variance, skewness, kurtosis;
};

// Two-pass population central moments.
inline Moments central_moments(const std::vector<double>& values) {
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : values) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  return {mean, m2, m3 / std::pow(m2, 1.5), m4 / (m2 * m2)};
}

inline double relative_error(double actual, double expected) {
  const double scale = std::max(std::abs(expected), 1e-300);
  return std::abs(actual - expected) / scale;
}

// Relative error with an absolute floor, for quantities that can be ~0.
inline bool close(double actual, double expected, double rel, double abs_floor) {
  return std::abs(actual - expected) <= std::max(rel * std::abs(expected), abs_floor);
}

// Per-sample logistic loss in extended precision, from the probability.
// softplus(raw) - label * raw, evaluated without forming 1 - p.
inline long double logloss(long double raw, int label) {
  const long double softplus =
      raw > 0 ? raw + std::log1p(std::exp(-raw)) : std::log1p(std::exp(raw));
  return softplus - (label == 1 ? raw : 0.0L);
}

inline long double fd_gradient(double raw, int label, long double step = 1e-4L) {
  return (logloss(raw + step, label) - logloss(raw - step, label)) / (2.0L * step);
}

inline long double fd_hessian(double raw, int label, long double step = 1e-4L) {
  return (logloss(raw + step, label) - 2.0L * logloss(raw, label) + logloss(raw - step, label)) /
         (step * step);
}

// Evaluates every threshold between distinct values by summing each side
// from scratch. Returns the first threshold with the largest positive gain.
inline std::optional<SplitCandidate> brute_force_split(std::vector<SplitPoint> rows,
                                                       const SplitParams& p) {
  std::sort(rows.begin(), rows.end(),
            [](const SplitPoint& a, const SplitPoint& b) { return a.value < b.value; });
  std::vector<double> thresholds;
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    if (rows[i].value < rows[i + 1].value) {
      thresholds.push_back(split_threshold(rows[i].value, rows[i + 1].value));
    }
  }
  std::optional<SplitCandidate> best;
  for (double t : thresholds) {
    double gl = 0, hl = 0, gr = 0, hr = 0;
    for (const SplitPoint& r : rows) {
      if (r.value < t) {
        gl += r.gradient;
        hl += r.hessian;
      } else {
        gr += r.gradient;
        hr += r.hessian;
      }
    }
    if (hl < p.min_child_weight || hr < p.min_child_weight) continue;
    const double gain = 0.5 * (gl * gl / (hl + p.lambda) + gr * gr / (hr + p.lambda) -
                               (gl + gr) * (gl + gr) / (hl + hr + p.lambda)) -
                        p.gamma;
    if (gain > 0.0 && (!best || gain > best->gain)) best = SplitCandidate{t, gain};
  }
  return best;
}

// Unit vectors: a few random cluster centres plus Gaussian jitter, so the
// similarity distribution has structure in both low and high dimension.
inline EmbeddingSequence random_sequence(std::size_t n, std::size_t dim, Rng& rng,
                                         std::string video_id = "fuzz") {
  const std::size_t clusters = 1 + static_cast<std::size_t>(rng.below(3));
  const double spread = rng.uniform(0.05, 1.5);
  std::vector<std::vector<double>> centres(clusters, std::vector<double>(dim));
  for (auto& c : centres)
    for (double& x : c) x = rng.normal();
  std::vector<float> data;
  data.reserve(n * dim);
  std::vector<double> v(dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = centres[static_cast<std::size_t>(rng.below(clusters))];
    double sum = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      v[k] = c[k] + spread * rng.normal();
      sum += v[k] * v[k];
    }
    const double inv = 1.0 / std::sqrt(sum);
    for (std::size_t k = 0; k < dim; ++k) data.push_back(static_cast<float>(v[k] * inv));
  }
  std::vector<std::uint32_t> frames(n);
  for (std::size_t i = 0; i < n; ++i) frames[i] = static_cast<std::uint32_t>(3 * i + 1);
  return EmbeddingSequence::create(std::move(video_id), dim, std::move(frames), std::move(data));
}

// Sequence whose rows are the given unit vectors (converted to float).
inline EmbeddingSequence sequence_from_rows(const std::vector<std::vector<double>>& rows) {
  std::vector<float> data;
  for (const auto& r : rows)
    for (double x : r) data.push_back(static_cast<float>(x));
  std::vector<std::uint32_t> frames(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) frames[i] = static_cast<std::uint32_t>(i);
  return EmbeddingSequence::create("rows", rows.front().size(), std::move(frames), std::move(data));
}

}  // namespace biomstat::oracle
