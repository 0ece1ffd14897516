#pragma once

// On-disk representation of per-video face-embedding sequences and of the
// dataset manifest that ties videos to identities and labels.
//
// Embedding file layout (all integers and floats little-endian):
//
//   offset  size            field
//   0       4               magic "BMSQ"
//   4       4               format version (u32, = 1)
//   8       4               dim (u32)
//   12      4               frame_count N (u32)
//   16      4*N             frame_indices (u32, strictly increasing)
//   16+4N   4*N*dim         embeddings (f32, row-major)

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "biomstat/error.hpp"

namespace biomstat {

inline constexpr std::array<char, 4> kSequenceMagic = {'B', 'M', 'S', 'Q'};
inline constexpr std::uint32_t kSequenceFormatVersion = 1;
inline constexpr std::size_t kSequenceHeaderBytes = 16;
inline constexpr std::size_t kDefaultEmbeddingDim = 512;
inline constexpr double kUnitNormTolerance = 1e-4;
inline constexpr int kManifestVersion = 1;

namespace detail {

inline std::string format_number(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%g", value);
  return buffer;
}

inline void put_u32(std::ostream& out, std::uint32_t value) {
  const char bytes[4] = {static_cast<char>(value & 0xff),
                         static_cast<char>((value >> 8) & 0xff),
                         static_cast<char>((value >> 16) & 0xff),
                         static_cast<char>((value >> 24) & 0xff)};
  out.write(bytes, 4);
}

inline std::uint32_t get_u32(const unsigned char* bytes) {
  return static_cast<std::uint32_t>(bytes[0]) |
         (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) |
         (static_cast<std::uint32_t>(bytes[3]) << 24);
}

// Reads exactly `size` bytes or reports how many were available.
inline std::size_t read_bytes(std::istream& in, unsigned char* dest,
                              std::size_t size) {
  in.read(reinterpret_cast<char*>(dest), static_cast<std::streamsize>(size));
  return static_cast<std::size_t>(in.gcount());
}

}  // namespace detail

// Ordered unit-norm embeddings for one video. Immutable once constructed;
// the only way to obtain one is through a validating factory.
class EmbeddingSequence {
 public:
  // Validates every invariant and throws Error(kValidation) naming the
  // offending row or frame index.
  static EmbeddingSequence create(std::string video_id, std::size_t dim,
                                  std::vector<std::uint32_t> frame_indices,
                                  std::vector<float> embeddings) {
    if (dim == 0) fail(ErrorKind::kValidation, "dim must be positive");
    if (frame_indices.empty()) {
      fail(ErrorKind::kValidation, "frame_count must be positive");
    }
    if (embeddings.size() != frame_indices.size() * dim) {
      fail(ErrorKind::kValidation,
           "embedding array holds " + std::to_string(embeddings.size()) +
               " values, expected frame_count*dim = " +
               std::to_string(frame_indices.size() * dim));
    }
    for (std::size_t i = 1; i < frame_indices.size(); ++i) {
      if (frame_indices[i] <= frame_indices[i - 1]) {
        fail(ErrorKind::kValidation,
             "frame_indices not strictly increasing at position " +
                 std::to_string(i));
      }
    }
    for (std::size_t row = 0; row < frame_indices.size(); ++row) {
      double sum = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double v = embeddings[row * dim + k];
        sum += v * v;
      }
      const double norm = std::sqrt(sum);
      if (!(std::abs(norm - 1.0) <= kUnitNormTolerance)) {
        fail(ErrorKind::kValidation,
             "row " + std::to_string(row) + " norm " +
                 detail::format_number(norm) + " outside tolerance");
      }
    }
    return EmbeddingSequence(std::move(video_id), dim, std::move(frame_indices),
                             std::move(embeddings));
  }

  const std::string& video_id() const noexcept { return video_id_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t frame_count() const noexcept { return frame_indices_.size(); }
  std::span<const std::uint32_t> frame_indices() const noexcept {
    return frame_indices_;
  }
  std::span<const float> embeddings() const noexcept { return embeddings_; }
  std::span<const float> row(std::size_t i) const noexcept {
    return std::span<const float>(embeddings_).subspan(i * dim_, dim_);
  }

  // Same sequence under a different identifier.
  EmbeddingSequence with_video_id(std::string video_id) const {
    EmbeddingSequence copy = *this;
    copy.video_id_ = std::move(video_id);
    return copy;
  }

  friend bool operator==(const EmbeddingSequence&,
                         const EmbeddingSequence&) = default;

 private:
  EmbeddingSequence(std::string video_id, std::size_t dim,
                    std::vector<std::uint32_t> frame_indices,
                    std::vector<float> embeddings)
      : video_id_(std::move(video_id)),
        dim_(dim),
        frame_indices_(std::move(frame_indices)),
        embeddings_(std::move(embeddings)) {}

  std::string video_id_;
  std::size_t dim_ = 0;
  std::vector<std::uint32_t> frame_indices_;
  std::vector<float> embeddings_;
};

// Emits the binary format and returns the number of bytes written.
inline std::size_t write_sequence(const EmbeddingSequence& seq,
                                  std::ostream& out) {
  out.write(kSequenceMagic.data(), kSequenceMagic.size());
  detail::put_u32(out, kSequenceFormatVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(seq.dim()));
  detail::put_u32(out, static_cast<std::uint32_t>(seq.frame_count()));
  for (std::uint32_t index : seq.frame_indices()) detail::put_u32(out, index);
  for (float value : seq.embeddings()) {
    detail::put_u32(out, std::bit_cast<std::uint32_t>(value));
  }
  if (!out) fail(ErrorKind::kIo, "failed writing embedding sequence");
  return kSequenceHeaderBytes + 4 * seq.frame_count() +
         4 * seq.frame_count() * seq.dim();
}

inline std::size_t write_sequence_file(const EmbeddingSequence& seq,
                                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  try {
    const std::size_t written = write_sequence(seq, out);
    out.flush();
    if (!out) fail(ErrorKind::kIo, "write failed");
    return written;
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

// Parses one sequence from the stream. Never returns a partially valid
// value: any defect raises Error(kFormat) or Error(kValidation).
inline EmbeddingSequence read_sequence(std::istream& in,
                                       std::string video_id = {}) {
  unsigned char header[kSequenceHeaderBytes];
  if (detail::read_bytes(in, header, 4) < 4 ||
      !std::equal(kSequenceMagic.begin(), kSequenceMagic.end(), header)) {
    fail(ErrorKind::kFormat, "unrecognized format (bad magic)");
  }
  if (detail::read_bytes(in, header + 4, 12) < 12) {
    fail(ErrorKind::kFormat, "truncated payload (incomplete header)");
  }
  const std::uint32_t version = detail::get_u32(header + 4);
  if (version != kSequenceFormatVersion) {
    fail(ErrorKind::kFormat, "unsupported version " + std::to_string(version));
  }
  const std::uint32_t dim = detail::get_u32(header + 8);
  const std::uint32_t frame_count = detail::get_u32(header + 12);
  if (dim == 0) fail(ErrorKind::kValidation, "dim must be positive");
  if (frame_count == 0) {
    fail(ErrorKind::kValidation, "frame_count must be positive");
  }

  // Read in bounded chunks so a corrupt header cannot force a huge
  // allocation before the truncation is noticed.
  constexpr std::size_t kChunk = std::size_t{1} << 20;
  auto read_words = [&](std::uint64_t count, auto convert, auto& dest) {
    std::vector<unsigned char> bytes;
    std::uint64_t remaining = count;
    while (remaining > 0) {
      const std::size_t words =
          static_cast<std::size_t>(std::min<std::uint64_t>(remaining, kChunk));
      bytes.resize(4 * words);
      if (detail::read_bytes(in, bytes.data(), bytes.size()) < bytes.size()) {
        fail(ErrorKind::kFormat, "truncated payload");
      }
      for (std::size_t w = 0; w < words; ++w) {
        dest.push_back(convert(detail::get_u32(bytes.data() + 4 * w)));
      }
      remaining -= words;
    }
  };

  std::vector<std::uint32_t> frame_indices;
  frame_indices.reserve(std::min<std::size_t>(frame_count, kChunk));
  read_words(frame_count, [](std::uint32_t w) { return w; }, frame_indices);

  const std::uint64_t values = std::uint64_t{frame_count} * dim;
  std::vector<float> embeddings;
  embeddings.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(values, kChunk)));
  read_words(values, [](std::uint32_t w) { return std::bit_cast<float>(w); },
             embeddings);

  return EmbeddingSequence::create(std::move(video_id), dim,
                                   std::move(frame_indices),
                                   std::move(embeddings));
}

// Reads a file; the video id defaults to the file stem. Trailing bytes after
// the declared payload are rejected.
inline EmbeddingSequence read_sequence_file(const std::filesystem::path& path,
                                            std::string video_id = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  if (video_id.empty()) video_id = path.stem().string();
  try {
    EmbeddingSequence seq = read_sequence(in, std::move(video_id));
    if (in.peek() != std::char_traits<char>::eof()) {
      fail(ErrorKind::kFormat, "trailing bytes after payload");
    }
    return seq;
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

enum class Label : int { kAuthentic = 0, kDeepfake = 1 };

inline const char* label_name(Label label) {
  return label == Label::kDeepfake ? "deepfake" : "authentic";
}

struct VideoRecord {
  std::string video_id;
  std::string identity_id;
  Label label = Label::kAuthentic;
  std::string generator_tag = "unknown";
  std::string embedding_path;            // as written in the manifest
  std::filesystem::path resolved_path;   // relative to the manifest directory
  double fps = 30.0;

  friend bool operator==(const VideoRecord&, const VideoRecord&) = default;
};

struct DatasetManifest {
  int version = kManifestVersion;
  std::vector<VideoRecord> records;
  std::filesystem::path base_dir;
};

inline nlohmann::json manifest_to_json(const DatasetManifest& manifest) {
  nlohmann::json records = nlohmann::json::array();
  for (const VideoRecord& r : manifest.records) {
    records.push_back({{"video_id", r.video_id},
                       {"identity_id", r.identity_id},
                       {"label", static_cast<int>(r.label)},
                       {"generator_tag", r.generator_tag},
                       {"embedding_path", r.embedding_path},
                       {"fps", r.fps}});
  }
  return {{"version", manifest.version}, {"records", std::move(records)}};
}

inline void save_manifest(const DatasetManifest& manifest,
                          const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out << manifest_to_json(manifest).dump(2) << '\n';
  if (!out) fail(ErrorKind::kIo, "failed writing " + path.string());
}

enum class ManifestCheck {
  kFilesExist,  // embedding files must exist
  kFilesParse,  // embedding files must also parse and validate
};

// Builds a manifest from JSON text. `base_dir` anchors relative
// embedding paths.
inline DatasetManifest parse_manifest(const std::string& text,
                                      const std::filesystem::path& base_dir,
                                      ManifestCheck check = ManifestCheck::kFilesExist) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kSchema, std::string("manifest is not valid JSON: ") + e.what());
  }
  auto schema_error = [](const std::string& what) {
    fail(ErrorKind::kSchema, "manifest: " + what);
  };
  if (!doc.is_object()) schema_error("top level must be an object");
  if (!doc.contains("version") || !doc["version"].is_number_integer()) {
    schema_error("missing integer field 'version'");
  }
  if (doc["version"].get<int>() != kManifestVersion) {
    schema_error("unsupported version " + doc["version"].dump());
  }
  if (!doc.contains("records") || !doc["records"].is_array()) {
    schema_error("missing array field 'records'");
  }

  DatasetManifest manifest;
  manifest.base_dir = base_dir;
  std::size_t index = 0;
  for (const auto& item : doc["records"]) {
    const std::string where = "record " + std::to_string(index++);
    if (!item.is_object()) schema_error(where + " is not an object");
    auto string_field = [&](const char* name) {
      if (!item.contains(name) || !item[name].is_string()) {
        schema_error(where + ": missing string field '" + name + "'");
      }
      return item[name].get<std::string>();
    };
    VideoRecord record;
    record.video_id = string_field("video_id");
    record.identity_id = string_field("identity_id");
    record.generator_tag = string_field("generator_tag");
    record.embedding_path = string_field("embedding_path");
    if (record.video_id.empty()) schema_error(where + ": empty video_id");
    if (record.identity_id.empty()) {
      schema_error(where + " (" + record.video_id + "): empty identity_id");
    }
    if (!item.contains("label") || !item["label"].is_number_integer() ||
        (item["label"].get<long long>() != 0 && item["label"].get<long long>() != 1)) {
      schema_error(where + " (" + record.video_id + "): label must be integer 0 or 1");
    }
    record.label = static_cast<Label>(item["label"].get<int>());
    if (!item.contains("fps") || !item["fps"].is_number() ||
        !(item["fps"].get<double>() > 0.0)) {
      schema_error(where + " (" + record.video_id + "): fps must be a positive number");
    }
    record.fps = item["fps"].get<double>();
    record.resolved_path = base_dir / record.embedding_path;
    manifest.records.push_back(std::move(record));
  }

  std::map<std::string, int> seen;
  for (const VideoRecord& r : manifest.records) ++seen[r.video_id];
  std::string duplicates;
  for (const auto& [id, count] : seen) {
    if (count > 1) duplicates += (duplicates.empty() ? "" : ", ") + id;
  }
  if (!duplicates.empty()) {
    fail(ErrorKind::kValidation, "duplicate video_id: " + duplicates);
  }

  std::string missing;
  for (const VideoRecord& r : manifest.records) {
    if (!std::filesystem::is_regular_file(r.resolved_path)) {
      missing += (missing.empty() ? "" : ", ") + r.resolved_path.string();
    }
  }
  if (!missing.empty()) {
    fail(ErrorKind::kValidation, "missing embedding files: " + missing);
  }

  if (check == ManifestCheck::kFilesParse) {
    for (const VideoRecord& r : manifest.records) {
      try {
        (void)read_sequence_file(r.resolved_path, r.video_id);
      } catch (const Error& e) {
        fail(e.kind(), "video " + r.video_id + ": " + e.what());
      }
    }
  }
  return manifest;
}

inline DatasetManifest load_manifest(const std::filesystem::path& path,
                                     ManifestCheck check = ManifestCheck::kFilesExist) {
  std::filesystem::path file = path;
  if (std::filesystem::is_directory(file)) file /= "manifest.json";
  std::ifstream in(file);
  if (!in) fail(ErrorKind::kIo, "cannot open manifest " + file.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_manifest(buffer.str(), file.parent_path(), check);
  } catch (const Error& e) {
    fail(e.kind(), file.string() + ": " + e.what());
  }
}

inline EmbeddingSequence load_video(const VideoRecord& record) {
  return read_sequence_file(record.resolved_path, record.video_id);
}

}  // namespace biomstat
