#pragma once

// All-pairs cosine similarity of a video's embeddings, reduced to power sums
// plus either the full sorted pair buffer (exact mode) or a fixed-bin
// histogram over [-1, 1] (streaming mode).

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "biomstat/embedding_store.hpp"
#include "biomstat/error.hpp"
#include "biomstat/parallel.hpp"

namespace biomstat {

enum class StatsMode { kExact, kStreaming };

inline const char* to_string(StatsMode mode) {
  return mode == StatsMode::kExact ? "exact" : "streaming";
}

inline StatsMode parse_stats_mode(const std::string& text) {
  if (text == "exact") return StatsMode::kExact;
  if (text == "streaming") return StatsMode::kStreaming;
  fail(ErrorKind::kInvalidArgument,
       "mode must be 'exact' or 'streaming', got '" + text + "'");
}

// Slack allowed on float32 dot products of unit vectors.
inline constexpr double kSimilaritySlack = 5e-4;
inline constexpr std::size_t kDefaultBinCount = 4096;
inline constexpr std::size_t kMinFrames = 3;

class BinnedHistogram {
 public:
  explicit BinnedHistogram(std::size_t bin_count = kDefaultBinCount,
                           double lo = -1.0, double hi = 1.0)
      : lo_(lo), hi_(hi), counts_(bin_count, 0) {
    if (bin_count == 0) fail(ErrorKind::kInvalidArgument, "bin_count must be positive");
    if (!(hi > lo)) fail(ErrorKind::kInvalidArgument, "histogram needs hi > lo");
  }

  std::size_t bin_count() const noexcept { return counts_.size(); }
  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  double bin_width() const noexcept {
    return (hi_ - lo_) / static_cast<double>(counts_.size());
  }
  double bin_lo(std::size_t b) const noexcept {
    return lo_ + bin_width() * static_cast<double>(b);
  }
  double bin_hi(std::size_t b) const noexcept {
    return b + 1 == counts_.size() ? hi_ : bin_lo(b + 1);
  }
  std::span<const std::uint64_t> counts() const noexcept { return counts_; }

  std::size_t bin_of(double value) const noexcept {
    const double clamped = std::clamp(value, lo_, hi_);
    const auto b = static_cast<std::size_t>((clamped - lo_) / bin_width());
    return std::min(b, counts_.size() - 1);
  }

  void add(double value) noexcept { ++counts_[bin_of(value)]; }

  void merge(const BinnedHistogram& other) {
    if (other.counts_.size() != counts_.size() || other.lo_ != lo_ ||
        other.hi_ != hi_) {
      fail(ErrorKind::kInvalidArgument, "histogram layouts differ");
    }
    for (std::size_t b = 0; b < counts_.size(); ++b) counts_[b] += other.counts_[b];
  }

  std::uint64_t total() const noexcept {
    std::uint64_t sum = 0;
    for (std::uint64_t c : counts_) sum += c;
    return sum;
  }

  // Estimated value of the element with 0-based rank `rank`: the ranks that
  // fall in a bin are spread evenly across it, so the estimate always lies
  // in the same bin as the true value.
  double value_at_rank(std::uint64_t rank) const {
    std::uint64_t before = 0;
    for (std::size_t b = 0; b < counts_.size(); ++b) {
      if (rank < before + counts_[b]) {
        const double within = (static_cast<double>(rank - before) + 0.5) /
                              static_cast<double>(counts_[b]);
        return bin_lo(b) + within * (bin_hi(b) - bin_lo(b));
      }
      before += counts_[b];
    }
    fail(ErrorKind::kInvalidArgument, "rank beyond histogram total");
  }

  friend bool operator==(const BinnedHistogram&, const BinnedHistogram&) = default;

 private:
  double lo_;
  double hi_;
  std::vector<std::uint64_t> counts_;
};

// Sorted float32 similarities of every unordered pair.
struct ExactBuffer {
  std::vector<float> sorted_values;
  friend bool operator==(const ExactBuffer&, const ExactBuffer&) = default;
};

class SimilarityStats {
 public:
  using QuantileSource = std::variant<ExactBuffer, BinnedHistogram>;

  SimilarityStats(std::size_t frame_count, std::array<double, 4> power_sums,
                  QuantileSource source)
      : SimilarityStats(frame_count, power_sums, std::move(source), 0.0, power_sums) {}

  // `shifted_sums` holds sum over pairs of (s - shift)^k, k = 1..4.
  SimilarityStats(std::size_t frame_count, std::array<double, 4> power_sums,
                  QuantileSource source, double shift, std::array<double, 4> shifted_sums)
      : frame_count_(frame_count),
        power_sums_(power_sums),
        shift_(shift),
        shifted_sums_(shifted_sums),
        source_(std::move(source)) {}

  std::size_t frame_count() const noexcept { return frame_count_; }
  std::uint64_t pair_count() const noexcept {
    return std::uint64_t{frame_count_} * (frame_count_ - 1) / 2;
  }
  StatsMode mode() const noexcept {
    return std::holds_alternative<ExactBuffer>(source_) ? StatsMode::kExact
                                                        : StatsMode::kStreaming;
  }
  // S_k = sum over pairs of s^k, k = 1..4, accumulated in float64.
  double power_sum(int k) const { return power_sums_.at(static_cast<std::size_t>(k - 1)); }
  const std::array<double, 4>& power_sums() const noexcept { return power_sums_; }
  // Sums of (s - shift)^k for a shift near the mean; central moments taken
  // from these avoid the cancellation of raw sums on tight distributions.
  double shift() const noexcept { return shift_; }
  const std::array<double, 4>& shifted_sums() const noexcept { return shifted_sums_; }
  const QuantileSource& quantile_source() const noexcept { return source_; }

  const ExactBuffer* exact_buffer() const noexcept {
    return std::get_if<ExactBuffer>(&source_);
  }
  const BinnedHistogram* histogram() const noexcept {
    return std::get_if<BinnedHistogram>(&source_);
  }

  friend bool operator==(const SimilarityStats&, const SimilarityStats&) = default;

 private:
  std::size_t frame_count_;
  std::array<double, 4> power_sums_;
  double shift_ = 0.0;
  std::array<double, 4> shifted_sums_;
  QuantileSource source_;
};

// Dot product of two unit vectors, clamped to [-1, 1].
inline double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    fail(ErrorKind::kInvalidArgument,
         "dimension mismatch: " + std::to_string(a.size()) + " vs " +
             std::to_string(b.size()));
  }
  double dot = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += static_cast<double>(a[k]) * static_cast<double>(b[k]);
  }
  return std::clamp(dot, -1.0, 1.0);
}

// Linear-interpolation quantile: rank h = q*(n-1), interpolated between the
// order statistics at floor(h) and ceil(h).
inline double quantile(const SimilarityStats& stats, double q) {
  if (!(q >= 0.0 && q <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "quantile fraction must lie in [0, 1]");
  }
  if (stats.pair_count() == 0) {
    fail(ErrorKind::kInsufficientData, "quantile of empty statistics");
  }
  const double h = q * static_cast<double>(stats.pair_count() - 1);
  const auto lo_rank = static_cast<std::uint64_t>(std::floor(h));
  const auto hi_rank = static_cast<std::uint64_t>(std::ceil(h));
  const double frac = h - static_cast<double>(lo_rank);

  double lo_value;
  double hi_value;
  if (const ExactBuffer* exact = stats.exact_buffer()) {
    lo_value = exact->sorted_values[lo_rank];
    hi_value = exact->sorted_values[hi_rank];
  } else {
    const BinnedHistogram& hist = *stats.histogram();
    lo_value = hist.value_at_rank(lo_rank);
    hi_value = hi_rank == lo_rank ? lo_value : hist.value_at_rank(hi_rank);
  }
  return lo_value + frac * (hi_value - lo_value);
}

struct PairwiseOptions {
  StatsMode mode = StatsMode::kExact;
  std::optional<std::size_t> max_frames;  // use only the first K frames
  std::size_t bin_count = kDefaultBinCount;
  unsigned threads = 1;                   // 0 = auto
  std::size_t block_rows = 64;            // results are reproducible per block size
};

namespace detail {

// Eight float64 lanes; maps onto one AVX-512 register, two AVX2 registers,
// or scalar code, with the same lane-wise summation order everywhere.
using Lanes = double __attribute__((vector_size(64)));
inline constexpr std::size_t kLaneWidth = 8;
inline constexpr std::size_t kTile = 4;

inline Lanes load_lanes(const double* p) {
  Lanes v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

inline double reduce_lanes(Lanes v) {
  return ((v[0] + v[4]) + (v[2] + v[6])) + ((v[1] + v[5]) + (v[3] + v[7]));
}

// Rows x Cols dot products between row tiles of a padded row-major matrix.
// The per-pair arithmetic is identical for every tile shape, so a pair's
// similarity does not depend on where it falls in the blocking.
template <std::size_t Rows, std::size_t Cols>
inline void dot_tile(const double* a, const double* b, std::size_t stride,
                     double (&out)[kTile][kTile]) {
  Lanes acc[Rows][Cols];
  for (std::size_t r = 0; r < Rows; ++r)
    for (std::size_t c = 0; c < Cols; ++c) acc[r][c] = Lanes{};
  for (std::size_t k = 0; k < stride; k += kLaneWidth) {
    Lanes av[Rows];
    Lanes bv[Cols];
    for (std::size_t r = 0; r < Rows; ++r) av[r] = load_lanes(a + r * stride + k);
    for (std::size_t c = 0; c < Cols; ++c) bv[c] = load_lanes(b + c * stride + k);
    for (std::size_t r = 0; r < Rows; ++r)
      for (std::size_t c = 0; c < Cols; ++c) acc[r][c] += av[r] * bv[c];
  }
  for (std::size_t r = 0; r < Rows; ++r)
    for (std::size_t c = 0; c < Cols; ++c) out[r][c] = reduce_lanes(acc[r][c]);
}

template <std::size_t Rows>
inline void dot_tile_cols(const double* a, const double* b, std::size_t stride,
                          std::size_t cols, double (&out)[kTile][kTile]) {
  switch (cols) {
    case 4: dot_tile<Rows, 4>(a, b, stride, out); break;
    case 3: dot_tile<Rows, 3>(a, b, stride, out); break;
    case 2: dot_tile<Rows, 2>(a, b, stride, out); break;
    default: dot_tile<Rows, 1>(a, b, stride, out); break;
  }
}

inline void dot_tile_any(const double* a, const double* b, std::size_t stride,
                         std::size_t rows, std::size_t cols,
                         double (&out)[kTile][kTile]) {
  switch (rows) {
    case 4: dot_tile_cols<4>(a, b, stride, cols, out); break;
    case 3: dot_tile_cols<3>(a, b, stride, cols, out); break;
    case 2: dot_tile_cols<2>(a, b, stride, cols, out); break;
    default: dot_tile_cols<1>(a, b, stride, cols, out); break;
  }
}

struct BlockPartial {
  std::array<double, 4> sums{};
  std::array<double, 4> shifted{};
};

inline constexpr std::size_t kPilotFrames = 32;

// Mean similarity over the pairs of the first few frames.
inline double pilot_mean(const double* rows, std::size_t stride, std::size_t n) {
  const std::size_t m = std::min(n, kPilotFrames);
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < stride; ++k) dot += rows[i * stride + k] * rows[j * stride + k];
      sum += std::clamp(dot, -1.0, 1.0);
    }
  }
  return sum / static_cast<double>(m * (m - 1) / 2);
}

// In-place LSD radix sort of float32 values (4 passes of 8 bits on the
// order-preserving integer image of each float).
inline void radix_sort_floats(std::vector<float>& values) {
  const std::size_t n = values.size();
  if (n < 2) return;
  std::vector<std::uint32_t> keys(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    keys[i] = (bits & 0x80000000u) ? ~bits : (bits | 0x80000000u);
  }
  std::vector<std::uint32_t> scratch(n);
  for (int shift = 0; shift < 32; shift += 8) {
    std::array<std::size_t, 257> offsets{};
    for (std::uint32_t key : keys) ++offsets[((key >> shift) & 0xff) + 1];
    if (offsets[1] == n) continue;  // every key shares this digit
    for (std::size_t d = 1; d < offsets.size(); ++d) offsets[d] += offsets[d - 1];
    for (std::uint32_t key : keys) scratch[offsets[(key >> shift) & 0xff]++] = key;
    keys.swap(scratch);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t key = keys[i];
    const std::uint32_t bits = (key & 0x80000000u) ? (key & 0x7fffffffu) : ~key;
    values[i] = std::bit_cast<float>(bits);
  }
}

}  // namespace detail

// Similarities of all N(N-1)/2 unordered frame pairs, reduced to float64
// power sums and a quantile source. The pair set is split into block pairs
// processed in parallel; partial sums are merged in block order, so the
// result is bitwise identical for any thread count.
inline SimilarityStats pairwise_stats(const EmbeddingSequence& seq,
                                      const PairwiseOptions& options = {}) {
  std::size_t n = seq.frame_count();
  if (options.max_frames) {
    if (*options.max_frames == 0) {
      fail(ErrorKind::kInvalidArgument, "max_frames must be positive");
    }
    n = std::min(n, *options.max_frames);
  }
  if (n < kMinFrames) {
    fail(ErrorKind::kInsufficientData,
         "insufficient frames: " + std::to_string(n) + " (need at least " +
             std::to_string(kMinFrames) + ")");
  }
  if (options.block_rows == 0 || options.block_rows % detail::kTile != 0) {
    fail(ErrorKind::kInvalidArgument, "block_rows must be a positive multiple of 4");
  }

  const std::size_t dim = seq.dim();
  const std::size_t stride =
      (dim + detail::kLaneWidth - 1) / detail::kLaneWidth * detail::kLaneWidth;
  std::vector<double> rows(n * stride, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = seq.row(i);
    std::copy(src.begin(), src.end(), rows.begin() + static_cast<std::ptrdiff_t>(i * stride));
  }

  const double shift = detail::pilot_mean(rows.data(), stride, n);
  const std::size_t block = options.block_rows;
  const std::size_t block_count = (n + block - 1) / block;
  auto block_size = [&](std::size_t b) { return std::min(block, n - b * block); };

  struct BlockPair {
    std::size_t bi, bj;
    std::size_t offset;  // first slot in the exact buffer
  };
  std::vector<BlockPair> tasks;
  tasks.reserve(block_count * (block_count + 1) / 2);
  std::size_t offset = 0;
  for (std::size_t bi = 0; bi < block_count; ++bi) {
    for (std::size_t bj = bi; bj < block_count; ++bj) {
      tasks.push_back({bi, bj, offset});
      const std::size_t si = block_size(bi);
      offset += bi == bj ? si * (si - 1) / 2 : si * block_size(bj);
    }
  }
  const std::size_t pair_count = n * (n - 1) / 2;

  const bool exact = options.mode == StatsMode::kExact;
  std::vector<float> buffer(exact ? pair_count : 0);
  const unsigned threads =
      std::min<unsigned>(resolve_threads(options.threads),
                         static_cast<unsigned>(std::max<std::size_t>(1, tasks.size())));
  std::vector<detail::BlockPartial> partials(tasks.size());
  // Integer histogram merges commute, so one histogram per worker slot is
  // enough; tasks are striped over slots by index.
  std::vector<BinnedHistogram> histograms;
  if (!exact) histograms.assign(threads, BinnedHistogram(options.bin_count));

  auto run_task = [&](std::size_t t) {
    const BlockPair& task = tasks[t];
    const std::size_t row0 = task.bi * block;
    const std::size_t col0 = task.bj * block;
    const std::size_t rows_in = block_size(task.bi);
    const std::size_t cols_in = block_size(task.bj);
    const bool diagonal = task.bi == task.bj;
    BinnedHistogram* hist = exact ? nullptr : &histograms[t % threads];
    float* out = exact ? buffer.data() + task.offset : nullptr;

    double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;
    double d1 = 0.0, d2 = 0.0, d3 = 0.0, d4 = 0.0;
    double tile[detail::kTile][detail::kTile];
    for (std::size_t r = 0; r < rows_in; r += detail::kTile) {
      const std::size_t tr = std::min(detail::kTile, rows_in - r);
      const std::size_t c_begin = diagonal ? r : 0;
      for (std::size_t c = c_begin; c < cols_in; c += detail::kTile) {
        const std::size_t tc = std::min(detail::kTile, cols_in - c);
        detail::dot_tile_any(rows.data() + (row0 + r) * stride,
                             rows.data() + (col0 + c) * stride, stride, tr, tc, tile);
        for (std::size_t i = 0; i < tr; ++i) {
          for (std::size_t j = 0; j < tc; ++j) {
            if (diagonal && c + j <= r + i) continue;
            const double s = std::clamp(tile[i][j], -1.0, 1.0);
            const double sq = s * s;
            s1 += s;
            s2 += sq;
            s3 += sq * s;
            s4 += sq * sq;
            const double d = s - shift;
            const double dsq = d * d;
            d1 += d;
            d2 += dsq;
            d3 += dsq * d;
            d4 += dsq * dsq;
            const float stored = static_cast<float>(s);
            if (out != nullptr) {
              *out++ = stored;
            } else {
              hist->add(static_cast<double>(stored));
            }
          }
        }
      }
    }
    partials[t].sums = {s1, s2, s3, s4};
    partials[t].shifted = {d1, d2, d3, d4};
  };

  if (exact || threads == 1) {
    parallel_for(tasks.size(), threads, run_task);
  } else {
    // Streaming mode: each worker slot owns a histogram, so tasks sharing a
    // slot must run on the same thread.
    parallel_for(threads, threads, [&](std::size_t slot) {
      for (std::size_t t = slot; t < tasks.size(); t += threads) run_task(t);
    });
  }

  std::array<double, 4> sums{};
  std::array<double, 4> shifted{};
  for (const detail::BlockPartial& p : partials) {
    for (std::size_t k = 0; k < 4; ++k) {
      sums[k] += p.sums[k];
      shifted[k] += p.shifted[k];
    }
  }

  if (exact) {
    detail::radix_sort_floats(buffer);
    return SimilarityStats(n, sums, ExactBuffer{std::move(buffer)}, shift, shifted);
  }
  BinnedHistogram merged(options.bin_count);
  for (const BinnedHistogram& h : histograms) merged.merge(h);
  return SimilarityStats(n, sums, std::move(merged), shift, shifted);
}

}  // namespace biomstat
