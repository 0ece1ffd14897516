#pragma once

// Synthetic embedding sequences with controlled pairwise-similarity shapes:
// authentic videos are one tight cluster around an identity direction,
// deepfakes mix frames from that cluster with frames around a second
// direction rotated away from it, which yields a bimodal similarity
// distribution.
//
// A frame is c + sigma * z renormalised, with z standard normal and
// sigma = 1 / sqrt(concentration * dim). Two frames of one cluster then
// have similarity close to concentration / (concentration + 1).

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "biomstat/embedding_store.hpp"
#include "biomstat/error.hpp"
#include "biomstat/parallel.hpp"
#include "biomstat/random.hpp"

namespace biomstat {

struct DeepfakeMix {
  double primary_weight = 0.75;          // probability a frame sits near the identity
  double primary_concentration = 12.0;
  double secondary_offset_angle = 0.5;   // radians between the two directions
  double secondary_concentration = 12.0;
};

struct SynthParams {
  std::size_t dim = kDefaultEmbeddingDim;
  std::size_t n_frames = 2000;
  double authentic_concentration = 9.0;  // mean pairwise similarity ~0.9
  DeepfakeMix deepfake_mix;
  std::uint64_t rng_seed = 0;
};

inline void validate(const SynthParams& p) {
  auto bad = [](const std::string& what) { fail(ErrorKind::kInvalidArgument, "synth: " + what); };
  if (p.dim < 2) bad("dim must be at least 2");
  if (p.n_frames == 0) bad("n_frames must be positive");
  if (p.n_frames > std::numeric_limits<std::uint32_t>::max()) bad("n_frames too large");
  if (!(p.authentic_concentration > 0.0)) bad("authentic_concentration must be positive");
  const DeepfakeMix& m = p.deepfake_mix;
  // A weight of exactly 1 is allowed: the mixture collapses to one cluster.
  if (!(m.primary_weight > 0.0 && m.primary_weight <= 1.0)) bad("primary_weight must lie in (0, 1]");
  if (!(m.primary_concentration > 0.0)) bad("primary_concentration must be positive");
  if (!(m.secondary_concentration > 0.0)) bad("secondary_concentration must be positive");
  if (!(m.secondary_offset_angle >= 0.0 && m.secondary_offset_angle <= 3.14159265358979)) {
    bad("secondary_offset_angle must lie in [0, pi]");
  }
}

namespace detail {

inline double noise_scale(double concentration, std::size_t dim) {
  if (std::isinf(concentration)) return 0.0;
  return 1.0 / std::sqrt(concentration * static_cast<double>(dim));
}

inline void normalize(std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  const double inv = 1.0 / std::sqrt(sum);
  for (double& x : v) x *= inv;
}

inline std::vector<double> random_unit_vector(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  double sum;
  do {
    sum = 0.0;
    for (double& x : v) {
      x = rng.normal();
      sum += x * x;
    }
  } while (sum == 0.0);
  normalize(v);
  return v;
}

// Unit vector at `angle` radians from `base` in a random direction.
inline std::vector<double> rotated_direction(std::span<const double> base, double angle,
                                             Rng& rng) {
  std::vector<double> r = random_unit_vector(base.size(), rng);
  double proj = 0.0;
  for (std::size_t k = 0; k < base.size(); ++k) proj += r[k] * base[k];
  for (std::size_t k = 0; k < base.size(); ++k) r[k] -= proj * base[k];
  normalize(r);
  std::vector<double> out(base.size());
  for (std::size_t k = 0; k < base.size(); ++k) {
    out[k] = std::cos(angle) * base[k] + std::sin(angle) * r[k];
  }
  normalize(out);
  return out;
}

inline void append_frame(std::span<const double> center, double sigma, Rng& rng,
                         std::vector<double>& scratch, std::vector<float>& out) {
  for (std::size_t k = 0; k < center.size(); ++k) {
    scratch[k] = center[k] + (sigma > 0.0 ? sigma * rng.normal() : 0.0);
  }
  normalize(scratch);
  for (double x : scratch) out.push_back(static_cast<float>(x));
}

}  // namespace detail

// Video around a given identity direction, drawn from its own seed.
inline EmbeddingSequence generate_video(const SynthParams& params, Label label,
                                        std::span<const double> base, std::uint64_t seed,
                                        std::string video_id) {
  validate(params);
  if (base.size() != params.dim) {
    fail(ErrorKind::kInvalidArgument, "synth: base vector dimension differs from dim");
  }
  Rng rng(seed);
  std::vector<float> embeddings;
  embeddings.reserve(params.n_frames * params.dim);
  std::vector<double> scratch(params.dim);

  if (label == Label::kAuthentic) {
    const double sigma = detail::noise_scale(params.authentic_concentration, params.dim);
    for (std::size_t f = 0; f < params.n_frames; ++f) {
      detail::append_frame(base, sigma, rng, scratch, embeddings);
    }
  } else {
    const DeepfakeMix& mix = params.deepfake_mix;
    const std::vector<double> secondary =
        detail::rotated_direction(base, mix.secondary_offset_angle, rng);
    const double sigma_primary = detail::noise_scale(mix.primary_concentration, params.dim);
    const double sigma_secondary = detail::noise_scale(mix.secondary_concentration, params.dim);
    for (std::size_t f = 0; f < params.n_frames; ++f) {
      if (rng.bernoulli(mix.primary_weight)) {
        detail::append_frame(base, sigma_primary, rng, scratch, embeddings);
      } else {
        detail::append_frame(secondary, sigma_secondary, rng, scratch, embeddings);
      }
    }
  }

  std::vector<std::uint32_t> frame_indices(params.n_frames);
  for (std::size_t f = 0; f < params.n_frames; ++f) {
    frame_indices[f] = static_cast<std::uint32_t>(f);
  }
  return EmbeddingSequence::create(std::move(video_id), params.dim, std::move(frame_indices),
                                   std::move(embeddings));
}

// Standalone video: the identity direction is drawn from params.rng_seed.
inline EmbeddingSequence generate_video(const SynthParams& params, Label label,
                                        std::string video_id = "synthetic") {
  validate(params);
  Rng rng(derive_seed(params.rng_seed, "identity"));
  const std::vector<double> base = detail::random_unit_vector(params.dim, rng);
  return generate_video(params, label, base, derive_seed(params.rng_seed, video_id),
                        std::move(video_id));
}

struct SynthDatasetSpec {
  std::size_t n_identities = 25;
  std::size_t videos_per_identity = 2;
  SynthParams params;  // carries both the authentic and the deepfake settings
  std::uint64_t rng_seed = 0;
  std::string generator_tag = "synthetic";
  double fps = 30.0;
  unsigned threads = 1;
};

inline constexpr double kMaxIdentitySimilarity = 0.5;

// Identity directions with pairwise cosine similarity below
// kMaxIdentitySimilarity, drawn by rejection.
inline std::vector<std::vector<double>> generate_identity_bases(std::size_t count,
                                                                std::size_t dim,
                                                                std::uint64_t seed) {
  Rng rng(derive_seed(seed, "identities"));
  std::vector<std::vector<double>> bases;
  bases.reserve(count);
  std::size_t attempts = 0;
  while (bases.size() < count) {
    if (++attempts > 1000 * (count + 1)) {
      fail(ErrorKind::kInvalidArgument, "synth: cannot place identities at this dimension");
    }
    std::vector<double> candidate = detail::random_unit_vector(dim, rng);
    bool accepted = true;
    for (const auto& other : bases) {
      double dot = 0.0;
      for (std::size_t k = 0; k < dim; ++k) dot += candidate[k] * other[k];
      if (dot >= kMaxIdentitySimilarity) {
        accepted = false;
        break;
      }
    }
    if (accepted) bases.push_back(std::move(candidate));
  }
  return bases;
}

inline std::string synth_identity_id(std::size_t i) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "id%04zu", i);
  return buffer;
}

// Writes <out_dir>/manifest.json and <out_dir>/videos/<video_id>.bmsq.
// Video j of identity i is a deepfake when (i + j) is odd, so labels are
// balanced whenever the video count is even. Each video draws from a stream
// seeded by (rng_seed, video_id); output is identical for any thread count.
inline DatasetManifest generate_dataset(const std::filesystem::path& out_dir,
                                        const SynthDatasetSpec& spec) {
  validate(spec.params);
  if (spec.n_identities == 0 || spec.videos_per_identity == 0) {
    fail(ErrorKind::kInvalidArgument, "synth: need at least one identity and one video");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "videos", ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + (out_dir / "videos").string() + ": " + ec.message());

  const auto bases = generate_identity_bases(spec.n_identities, spec.params.dim, spec.rng_seed);

  DatasetManifest manifest;
  manifest.base_dir = out_dir;
  for (std::size_t i = 0; i < spec.n_identities; ++i) {
    for (std::size_t j = 0; j < spec.videos_per_identity; ++j) {
      VideoRecord r;
      r.identity_id = synth_identity_id(i);
      r.video_id = r.identity_id + "_v" + std::to_string(j);
      r.label = (i + j) % 2 == 1 ? Label::kDeepfake : Label::kAuthentic;
      r.generator_tag = spec.generator_tag;
      r.embedding_path = "videos/" + r.video_id + ".bmsq";
      r.resolved_path = out_dir / r.embedding_path;
      r.fps = spec.fps;
      manifest.records.push_back(std::move(r));
    }
  }

  parallel_for(manifest.records.size(), resolve_threads(spec.threads), [&](std::size_t v) {
    const VideoRecord& r = manifest.records[v];
    const std::size_t identity = v / spec.videos_per_identity;
    const EmbeddingSequence seq = generate_video(
        spec.params, r.label, bases[identity], derive_seed(spec.rng_seed, r.video_id), r.video_id);
    write_sequence_file(seq, r.resolved_path);
  });

  save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

}  // namespace biomstat
