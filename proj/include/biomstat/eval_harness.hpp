#pragma once

// Grouped cross-validation, classification metrics, train/evaluate
// experiments with identity-disjoint partitions, video-length sweeps and the
// exhaustive feature-subset study.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "biomstat/embedding_store.hpp"
#include "biomstat/error.hpp"
#include "biomstat/features.hpp"
#include "biomstat/gbtree.hpp"
#include "biomstat/parallel.hpp"
#include "biomstat/random.hpp"
#include "biomstat/similarity_stats.hpp"

namespace biomstat {

// ---------------------------------------------------------------------------
// Metrics

// Positive class is deepfake.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const noexcept { return tp + fp + tn + fn; }

  void add(int label, bool predicted_deepfake) {
    if (label == 1) {
      ++(predicted_deepfake ? tp : fn);
    } else {
      ++(predicted_deepfake ? fp : tn);
    }
  }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }

  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct MetricsReport {
  double accuracy = 0.0;        // balanced: mean of TPR and TNR
  double plain_accuracy = 0.0;  // (TP + TN) / total
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double weighted_f1 = 0.0;     // support-weighted mean of per-class F1
  std::uint64_t support_authentic = 0;
  std::uint64_t support_deepfake = 0;
  ConfusionCounts counts;
};

namespace detail {

// Non-negative rational with a zero denominator standing for the value 0.
struct Rational {
  unsigned __int128 num = 0;
  unsigned __int128 den = 1;

  static Rational of(std::uint64_t n, std::uint64_t d) { return d == 0 ? Rational{0, 1} : Rational{n, d}; }

  friend Rational operator+(const Rational& a, const Rational& b) {
    return reduce({a.num * b.den + b.num * a.den, a.den * b.den});
  }
  friend Rational operator*(const Rational& a, const Rational& b) {
    return reduce({a.num * b.num, a.den * b.den});
  }

  static Rational reduce(Rational r) {
    unsigned __int128 x = r.num, y = r.den;
    while (y != 0) {
      const unsigned __int128 t = x % y;
      x = y;
      y = t;
    }
    if (x > 1) {
      r.num /= x;
      r.den /= x;
    }
    return r;
  }

  // Correctly rounded while numerator and denominator fit in 53 bits.
  double value() const {
    constexpr unsigned __int128 kExact = static_cast<unsigned __int128>(1) << 53;
    if (num <= kExact && den <= kExact) return static_cast<double>(num) / static_cast<double>(den);
    return static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den));
  }
};

}  // namespace detail

// Any rate whose denominator is zero is defined as 0. Each reported value is
// the exact rational rounded once to double.
inline MetricsReport compute_metrics(const ConfusionCounts& c) {
  using detail::Rational;
  if (c.total() == 0) fail(ErrorKind::kInvalidArgument, "compute_metrics: no evaluated videos");

  MetricsReport m;
  m.counts = c;
  m.support_deepfake = c.tp + c.fn;
  m.support_authentic = c.tn + c.fp;
  const Rational precision = Rational::of(c.tp, c.tp + c.fp);
  const Rational recall = Rational::of(c.tp, c.tp + c.fn);
  const Rational specificity = Rational::of(c.tn, c.tn + c.fp);
  // Harmonic mean of precision and recall, 0 when both are 0.
  const Rational f1 = Rational::of(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  const Rational f1_authentic = Rational::of(2 * c.tn, 2 * c.tn + c.fn + c.fp);

  m.precision = precision.value();
  m.recall = recall.value();
  m.accuracy = (Rational{1, 2} * (recall + specificity)).value();
  m.plain_accuracy = Rational::of(c.tp + c.tn, c.total()).value();
  m.f1 = f1.value();
  m.weighted_f1 = ((Rational::of(m.support_deepfake, 1) * f1 +
                    Rational::of(m.support_authentic, 1) * f1_authentic) *
                   Rational::of(1, c.total()))
                      .value();
  return m;
}

// ---------------------------------------------------------------------------
// Grouped folds

struct GroupMember {
  std::string item_id;   // video id
  std::string group_id;  // identity id
};

struct FoldPlan {
  int k = 5;
  std::map<std::string, int> assignments;     // video_id -> fold
  std::map<std::string, int> identity_folds;  // identity_id -> fold

  int fold_of(const std::string& video_id) const { return assignments.at(video_id); }
};

// Shuffles identities with the seeded RNG, orders them by descending video
// count (stable, so equal counts keep their shuffled order) and deals them
// round-robin to k folds. All videos of an identity share a fold.
inline FoldPlan group_k_fold(const std::vector<GroupMember>& members, int k,
                             std::uint64_t rng_seed) {
  if (k < 2) fail(ErrorKind::kInvalidArgument, "group_k_fold: k must be >= 2");
  std::map<std::string, std::size_t> counts;
  for (const GroupMember& m : members) {
    if (m.group_id.empty()) {
      fail(ErrorKind::kValidation, "group_k_fold: video " + m.item_id + " has no identity");
    }
    ++counts[m.group_id];
  }
  if (counts.size() < static_cast<std::size_t>(k)) {
    fail(ErrorKind::kInsufficientData,
         "group_k_fold: " + std::to_string(counts.size()) + " identities cannot fill " +
             std::to_string(k) + " folds");
  }
  std::vector<std::pair<std::string, std::size_t>> groups(counts.begin(), counts.end());
  Rng rng(derive_seed(rng_seed, "group_k_fold"));
  rng.shuffle(std::span(groups));
  std::stable_sort(groups.begin(), groups.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  FoldPlan plan;
  plan.k = k;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    plan.identity_folds[groups[i].first] = static_cast<int>(i % static_cast<std::size_t>(k));
  }
  for (const GroupMember& m : members) {
    if (!plan.assignments.emplace(m.item_id, plan.identity_folds.at(m.group_id)).second) {
      fail(ErrorKind::kValidation, "group_k_fold: duplicate video id " + m.item_id);
    }
  }
  return plan;
}

inline FoldPlan group_k_fold(const DatasetManifest& manifest, int k, std::uint64_t rng_seed) {
  std::vector<GroupMember> members;
  members.reserve(manifest.records.size());
  for (const VideoRecord& r : manifest.records) members.push_back({r.video_id, r.identity_id});
  return group_k_fold(members, k, rng_seed);
}

// ---------------------------------------------------------------------------
// Feature tables

struct FeatureRow {
  std::string video_id;
  std::string identity_id;
  std::string generator_tag = "unknown";
  Label label = Label::kAuthentic;
  std::size_t frames_used = 0;
  FeatureVector features;
};

using FeatureTable = std::vector<FeatureRow>;

struct FeaturizeOptions {
  StatsMode mode = StatsMode::kExact;
  std::optional<std::size_t> max_frames;
  std::size_t bin_count = kDefaultBinCount;
  unsigned threads = 1;  // videos processed in parallel; 0 = auto
};

inline FeatureRow featurize_video(const VideoRecord& record, const FeaturizeOptions& options) {
  try {
    const EmbeddingSequence seq = load_video(record);
    PairwiseOptions pw;
    pw.mode = options.mode;
    pw.max_frames = options.max_frames;
    pw.bin_count = options.bin_count;
    const SimilarityStats stats = pairwise_stats(seq, pw);
    return {record.video_id, record.identity_id, record.generator_tag, record.label,
            stats.frame_count(), extract_features(stats)};
  } catch (const Error& e) {
    fail(e.kind(), "video " + record.video_id + ": " + e.what());
  }
}

inline FeatureTable featurize(const std::vector<VideoRecord>& records,
                              const FeaturizeOptions& options) {
  FeatureTable table(records.size());
  parallel_for(records.size(), resolve_threads(options.threads),
               [&](std::size_t i) { table[i] = featurize_video(records[i], options); });
  return table;
}

inline FeatureTable featurize(const DatasetManifest& manifest, const FeaturizeOptions& options) {
  return featurize(manifest.records, options);
}

inline constexpr const char* kFeatureCsvPrefix = "video_id,identity_id,label";

inline std::string feature_csv_header() {
  std::string header = kFeatureCsvPrefix;
  for (std::string_view name : kFeatureNames) {
    header += ',';
    header += name;
  }
  return header;
}

// 17 significant digits: parsing restores the exact double.
inline std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

inline void write_features_csv(std::ostream& out, const FeatureTable& table) {
  out << feature_csv_header() << '\n';
  for (const FeatureRow& row : table) {
    out << row.video_id << ',' << row.identity_id << ',' << static_cast<int>(row.label);
    for (double v : row.features.values) out << ',' << format_double(v);
    out << '\n';
  }
}

inline FeatureTable read_features_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::kSchema, "features CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != feature_csv_header()) {
    fail(ErrorKind::kSchema, "features CSV header must be: " + feature_csv_header());
  }
  FeatureTable table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 3 + kFeatureCount) {
      fail(ErrorKind::kSchema, "features CSV line " + std::to_string(line_no) + ": expected " +
                                   std::to_string(3 + kFeatureCount) + " columns");
    }
    FeatureRow row;
    row.video_id = cells[0];
    row.identity_id = cells[1];
    if (cells[2] != "0" && cells[2] != "1") {
      fail(ErrorKind::kSchema, "features CSV line " + std::to_string(line_no) + ": label must be 0 or 1");
    }
    row.label = cells[2] == "1" ? Label::kDeepfake : Label::kAuthentic;
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      try {
        std::size_t used = 0;
        row.features.values[f] = std::stod(cells[3 + f], &used);
        if (used != cells[3 + f].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        fail(ErrorKind::kSchema, "features CSV line " + std::to_string(line_no) +
                                     ": bad number in column " + std::string(kFeatureNames[f]));
      }
    }
    table.push_back(std::move(row));
  }
  return table;
}

inline TrainingData make_training_data(const FeatureTable& table,
                                       const std::vector<std::size_t>& rows,
                                       const FeatureMask& mask) {
  TrainingData data;
  data.feature_names = mask.names();
  data.features = FeatureMatrix(0, mask.size());
  for (std::size_t r : rows) {
    data.features.append_row(mask.apply(table[r].features));
    data.labels.push_back(static_cast<int>(table[r].label));
  }
  return data;
}

// ---------------------------------------------------------------------------
// Training with a grouped early-stopping holdout

inline constexpr double kDefaultValidationFraction = 0.2;

// Splits row indices by identity: ceil(fraction * identities) identities,
// chosen by the seeded RNG, go to the second list.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_by_identity(
    const FeatureTable& table, const std::vector<std::size_t>& rows, double fraction,
    std::uint64_t seed) {
  std::set<std::string> identity_set;
  for (std::size_t r : rows) identity_set.insert(table[r].identity_id);
  std::vector<std::string> identities(identity_set.begin(), identity_set.end());
  Rng rng(seed);
  rng.shuffle(std::span(identities));
  const auto held = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(identities.size()) - 1e-9));
  const std::set<std::string> held_out(identities.begin(),
                                       identities.begin() + static_cast<std::ptrdiff_t>(held));
  std::vector<std::size_t> kept;
  std::vector<std::size_t> out;
  for (std::size_t r : rows) (held_out.count(table[r].identity_id) ? out : kept).push_back(r);
  return {kept, out};
}

// Trains on `rows`, holding out a fraction of their identities for early
// stopping. Falls back to training without early stopping when the holdout
// would leave fewer than two rows of a class for training.
inline TrainResult train_with_holdout(const FeatureTable& table, const std::vector<std::size_t>& rows,
                                      const FeatureMask& mask, const TrainConfig& config,
                                      double validation_fraction = kDefaultValidationFraction) {
  auto class_counts = [&](const std::vector<std::size_t>& subset) {
    std::pair<std::size_t, std::size_t> c{0, 0};
    for (std::size_t r : subset) ++(table[r].label == Label::kDeepfake ? c.second : c.first);
    return c;
  };
  std::vector<std::size_t> fit_rows = rows;
  std::vector<std::size_t> val_rows;
  if (validation_fraction > 0.0) {
    auto [kept, held] =
        split_by_identity(table, rows, validation_fraction, derive_seed(config.rng_seed, "validation"));
    const auto counts = class_counts(kept);
    if (!held.empty() && counts.first >= 2 && counts.second >= 2) {
      fit_rows = std::move(kept);
      val_rows = std::move(held);
    }
  }
  return train(make_training_data(table, fit_rows, mask), make_training_data(table, val_rows, mask),
               config);
}

// ---------------------------------------------------------------------------
// Cross-validation

struct CvResult {
  ConfusionCounts counts;  // pooled out-of-fold predictions
  MetricsReport metrics;
  std::vector<ConfusionCounts> fold_counts;
};

inline void require_both_classes(const FeatureTable& table, const std::vector<std::size_t>& rows,
                                 const std::string& role) {
  std::size_t positives = 0;
  for (std::size_t r : rows) positives += table[r].label == Label::kDeepfake ? 1 : 0;
  if (positives == 0 || positives == rows.size()) {
    fail(ErrorKind::kDegenerateLabels,
         "degenerate labels: " + role + " has " + std::to_string(rows.size() - positives) +
             " authentic and " + std::to_string(positives) + " deepfake videos");
  }
}

inline CvResult cross_validate(const FeatureTable& table, const std::vector<std::size_t>& rows,
                               const FeatureMask& mask, const TrainConfig& config, int k,
                               double validation_fraction = kDefaultValidationFraction) {
  require_both_classes(table, rows, "cross-validation set");
  std::vector<GroupMember> members;
  for (std::size_t r : rows) members.push_back({table[r].video_id, table[r].identity_id});
  const FoldPlan plan = group_k_fold(members, k, config.rng_seed);

  CvResult result;
  for (int fold = 0; fold < k; ++fold) {
    std::vector<std::size_t> fit;
    std::vector<std::size_t> test;
    for (std::size_t r : rows) (plan.fold_of(table[r].video_id) == fold ? test : fit).push_back(r);
    const TrainResult trained = train_with_holdout(table, fit, mask, config, validation_fraction);
    ConfusionCounts counts;
    for (std::size_t r : test) {
      const Prediction p = predict(trained.model, mask.apply(table[r].features));
      counts.add(static_cast<int>(table[r].label), is_deepfake(p));
    }
    result.fold_counts.push_back(counts);
    result.counts += counts;
  }
  result.metrics = compute_metrics(result.counts);
  return result;
}

inline std::vector<std::size_t> all_rows(const FeatureTable& table) {
  std::vector<std::size_t> rows(table.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return rows;
}

struct GridSearchResult {
  TrainConfig best;
  std::vector<double> weighted_f1;  // one per grid point, in grid order
};

// Picks the grid point with the highest pooled out-of-fold weighted F1
// (first one on ties).
inline GridSearchResult grid_search(const FeatureTable& table, const std::vector<std::size_t>& rows,
                                    const FeatureMask& mask, const std::vector<TrainConfig>& grid,
                                    int k, unsigned threads = 1) {
  if (grid.empty()) fail(ErrorKind::kInvalidArgument, "grid_search: empty grid");
  GridSearchResult result;
  result.weighted_f1.resize(grid.size());
  parallel_for(grid.size(), resolve_threads(threads), [&](std::size_t i) {
    result.weighted_f1[i] = cross_validate(table, rows, mask, grid[i], k).metrics.weighted_f1;
  });
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (result.weighted_f1[i] > result.weighted_f1[best]) best = i;
  }
  result.best = grid[best];
  return result;
}

// ---------------------------------------------------------------------------
// Experiments

// Matches videos whose generator_tag is listed; "*" matches every video.
struct TagSelector {
  std::vector<std::string> tags;

  static TagSelector parse(const std::string& text) {
    TagSelector s;
    std::stringstream ss(text);
    std::string tag;
    while (std::getline(ss, tag, ',')) {
      if (!tag.empty()) s.tags.push_back(tag);
    }
    if (s.tags.empty()) fail(ErrorKind::kInvalidArgument, "empty tag selector");
    return s;
  }

  bool matches(const std::string& tag) const {
    return std::find(tags.begin(), tags.end(), "*") != tags.end() ||
           std::find(tags.begin(), tags.end(), tag) != tags.end();
  }

  std::string to_string() const {
    std::string out;
    for (const std::string& t : tags) out += (out.empty() ? "" : ",") + t;
    return out;
  }
};

struct ExperimentSpec {
  TagSelector train_selector{{"*"}};
  TagSelector eval_selector{{"*"}};
  std::optional<std::size_t> max_frames;
  StatsMode mode = StatsMode::kExact;
  FeatureMask feature_mask = FeatureMask::all();
  TrainConfig config;
  // Share of identities held out for evaluation when training and
  // evaluation videos come from the same manifest.
  double eval_fraction = 0.3;
  double validation_fraction = kDefaultValidationFraction;
};

struct ExperimentResult {
  std::string train_name;
  std::string eval_name;
  std::optional<std::size_t> max_frames;
  StatsMode mode = StatsMode::kExact;
  FeatureMask feature_mask = FeatureMask::all();
  std::size_t train_videos = 0;
  std::size_t train_identities = 0;
  std::size_t eval_videos = 0;
  std::size_t eval_identities = 0;
  MetricsReport metrics;
  GbtModel model;
};

namespace detail {

inline std::set<std::string> identities_of(const FeatureTable& table,
                                           const std::vector<std::size_t>& rows) {
  std::set<std::string> ids;
  for (std::size_t r : rows) ids.insert(table[r].identity_id);
  return ids;
}

}  // namespace detail

// Throws Error(kLeakage) if any identity appears in both partitions.
inline void assert_identity_disjoint(const std::set<std::string>& train_ids,
                                     const std::set<std::string>& eval_ids) {
  std::vector<std::string> shared;
  std::set_intersection(train_ids.begin(), train_ids.end(), eval_ids.begin(), eval_ids.end(),
                        std::back_inserter(shared));
  if (shared.empty()) return;
  std::string listed;
  for (std::size_t i = 0; i < shared.size() && i < 5; ++i) listed += (i ? ", " : "") + shared[i];
  if (shared.size() > 5) listed += ", ...";
  fail(ErrorKind::kLeakage, "identity leakage: " + std::to_string(shared.size()) +
                                " evaluation identities also appear in training (" + listed + ")");
}

// Trains on `train_rows` of `train_table` and evaluates on `eval_rows` of
// `eval_table`. The two row sets must be identity-disjoint.
inline ExperimentResult run_experiment_on_tables(const FeatureTable& train_table,
                                                 const std::vector<std::size_t>& train_rows,
                                                 const FeatureTable& eval_table,
                                                 const std::vector<std::size_t>& eval_rows,
                                                 const ExperimentSpec& spec) {
  const auto train_ids = detail::identities_of(train_table, train_rows);
  const auto eval_ids = detail::identities_of(eval_table, eval_rows);
  assert_identity_disjoint(train_ids, eval_ids);
  require_both_classes(train_table, train_rows, "training selection");
  require_both_classes(eval_table, eval_rows, "evaluation selection");

  ExperimentResult result;
  result.train_name = spec.train_selector.to_string();
  result.eval_name = spec.eval_selector.to_string();
  result.max_frames = spec.max_frames;
  result.mode = spec.mode;
  result.feature_mask = spec.feature_mask;
  result.train_videos = train_rows.size();
  result.train_identities = train_ids.size();
  result.eval_videos = eval_rows.size();
  result.eval_identities = eval_ids.size();

  result.model = train_with_holdout(train_table, train_rows, spec.feature_mask, spec.config,
                                    spec.validation_fraction)
                     .model;
  ConfusionCounts counts;
  for (std::size_t r : eval_rows) {
    const Prediction p = predict(result.model, spec.feature_mask.apply(eval_table[r].features));
    counts.add(static_cast<int>(eval_table[r].label), is_deepfake(p));
  }
  result.metrics = compute_metrics(counts);
  return result;
}

namespace detail {

inline std::vector<std::size_t> select_rows(const FeatureTable& table, const TagSelector& selector) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (selector.matches(table[i].generator_tag)) rows.push_back(i);
  }
  return rows;
}

inline FeaturizeOptions featurize_options(const ExperimentSpec& spec, unsigned threads) {
  FeaturizeOptions o;
  o.mode = spec.mode;
  o.max_frames = spec.max_frames;
  o.threads = threads;
  return o;
}

}  // namespace detail

// Single-manifest experiment on an already featurized table: identities are
// split once (seeded by config.rng_seed) into a training side and an
// evaluation side; each side keeps only videos its selector matches.
inline ExperimentResult run_experiment(const FeatureTable& table, const ExperimentSpec& spec) {
  if (!(spec.eval_fraction > 0.0 && spec.eval_fraction < 1.0)) {
    fail(ErrorKind::kInvalidArgument, "eval_fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (spec.train_selector.matches(table[i].generator_tag) ||
        spec.eval_selector.matches(table[i].generator_tag)) {
      candidates.push_back(i);
    }
  }
  auto [train_side, eval_side] = split_by_identity(
      table, candidates, spec.eval_fraction, derive_seed(spec.config.rng_seed, "experiment"));
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> eval_rows;
  for (std::size_t r : train_side)
    if (spec.train_selector.matches(table[r].generator_tag)) train_rows.push_back(r);
  for (std::size_t r : eval_side)
    if (spec.eval_selector.matches(table[r].generator_tag)) eval_rows.push_back(r);
  return run_experiment_on_tables(table, train_rows, table, eval_rows, spec);
}

// Featurizes only the videos either selector can use, then runs the
// single-manifest experiment.
inline ExperimentResult run_experiment(const DatasetManifest& manifest, const ExperimentSpec& spec,
                                       unsigned threads = 1) {
  std::vector<VideoRecord> used;
  for (const VideoRecord& r : manifest.records) {
    if (spec.train_selector.matches(r.generator_tag) || spec.eval_selector.matches(r.generator_tag)) {
      used.push_back(r);
    }
  }
  return run_experiment(featurize(used, detail::featurize_options(spec, threads)), spec);
}

// Cross-dataset experiment: train on one manifest, evaluate on another.
// Rejects any identity present in both.
inline ExperimentResult run_experiment(const DatasetManifest& train_manifest,
                                       const DatasetManifest& eval_manifest,
                                       const ExperimentSpec& spec, unsigned threads = 1) {
  auto pick = [](const DatasetManifest& m, const TagSelector& s) {
    std::vector<VideoRecord> out;
    for (const VideoRecord& r : m.records)
      if (s.matches(r.generator_tag)) out.push_back(r);
    return out;
  };
  const std::vector<VideoRecord> train_records = pick(train_manifest, spec.train_selector);
  const std::vector<VideoRecord> eval_records = pick(eval_manifest, spec.eval_selector);
  std::set<std::string> train_ids;
  std::set<std::string> eval_ids;
  for (const VideoRecord& r : train_records) train_ids.insert(r.identity_id);
  for (const VideoRecord& r : eval_records) eval_ids.insert(r.identity_id);
  assert_identity_disjoint(train_ids, eval_ids);  // before any featurization

  const FeaturizeOptions options = detail::featurize_options(spec, threads);
  const FeatureTable train_table = featurize(train_records, options);
  const FeatureTable eval_table = featurize(eval_records, options);
  return run_experiment_on_tables(train_table, all_rows(train_table), eval_table,
                                  all_rows(eval_table), spec);
}

// One experiment per video length, each truncating every video to its first
// `frames` frames.
inline std::vector<ExperimentResult> sweep_frames(const DatasetManifest& manifest,
                                                  const ExperimentSpec& base,
                                                  const std::vector<std::size_t>& frames,
                                                  unsigned threads = 1) {
  std::vector<ExperimentResult> results;
  for (std::size_t f : frames) {
    ExperimentSpec spec = base;
    spec.max_frames = f;
    results.push_back(run_experiment(manifest, spec, threads));
  }
  return results;
}

// ---------------------------------------------------------------------------
// Feature-subset study

struct SubsetScore {
  FeatureMask mask = FeatureMask::all();
  double cv_accuracy = 0.0;  // balanced accuracy of pooled out-of-fold predictions
  MetricsReport metrics;
};

struct SubsetStudy {
  std::vector<SubsetScore> ranking;  // best first

  std::vector<SubsetScore> top(std::size_t n) const {
    return {ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(std::min(n, ranking.size()))};
  }
  std::vector<SubsetScore> bottom(std::size_t n) const {
    return {ranking.end() - static_cast<std::ptrdiff_t>(std::min(n, ranking.size())), ranking.end()};
  }
};

// Higher accuracy first; ties go to fewer features, then to the lower mask
// bit pattern.
inline bool ranks_before(const SubsetScore& a, const SubsetScore& b) {
  if (a.cv_accuracy != b.cv_accuracy) return a.cv_accuracy > b.cv_accuracy;
  if (a.mask.size() != b.mask.size()) return a.mask.size() < b.mask.size();
  return a.mask.bits() < b.mask.bits();
}

// Grouped k-fold CV for every one of the 511 non-empty feature subsets.
// Cells run in parallel; the ranking depends only on the inputs.
inline SubsetStudy feature_subset_study(const FeatureTable& table, const std::vector<std::size_t>& rows,
                                        const TrainConfig& config, int k, unsigned threads = 1) {
  require_both_classes(table, rows, "subset-study selection");
  std::vector<SubsetScore> scores(FeatureMask::kAllBits);
  parallel_for(scores.size(), resolve_threads(threads), [&](std::size_t i) {
    const FeatureMask mask = FeatureMask::from_bits(static_cast<std::uint32_t>(i + 1));
    const CvResult cv = cross_validate(table, rows, mask, config, k);
    scores[i] = {mask, cv.metrics.accuracy, cv.metrics};
  });
  std::sort(scores.begin(), scores.end(), ranks_before);
  return {std::move(scores)};
}

inline SubsetStudy feature_subset_study(const DatasetManifest& manifest, const ExperimentSpec& spec,
                                        int k = 5, unsigned threads = 1) {
  std::vector<VideoRecord> used;
  for (const VideoRecord& r : manifest.records)
    if (spec.train_selector.matches(r.generator_tag)) used.push_back(r);
  const FeatureTable table = featurize(used, detail::featurize_options(spec, threads));
  return feature_subset_study(table, all_rows(table), spec.config, k, threads);
}

// ---------------------------------------------------------------------------
// Reports

inline constexpr const char* kExperimentSchema = "biomstat.experiment/1";
inline constexpr const char* kSubsetSchema = "biomstat.subset/1";

inline nlohmann::json metrics_to_json(const MetricsReport& m) {
  return {{"accuracy", m.accuracy},
          {"plain_accuracy", m.plain_accuracy},
          {"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"weighted_f1", m.weighted_f1},
          {"tp", m.counts.tp},
          {"fp", m.counts.fp},
          {"tn", m.counts.tn},
          {"fn", m.counts.fn},
          {"support_authentic", m.support_authentic},
          {"support_deepfake", m.support_deepfake}};
}

inline nlohmann::json experiment_to_json(const ExperimentResult& r) {
  nlohmann::json j = {{"schema", kExperimentSchema},
                      {"train_model", r.train_name},
                      {"eval_model", r.eval_name},
                      {"max_frames", r.max_frames ? nlohmann::json(*r.max_frames) : nlohmann::json()},
                      {"mode", to_string(r.mode)},
                      {"features", r.feature_mask.names()},
                      {"train_videos", r.train_videos},
                      {"train_identities", r.train_identities},
                      {"eval_videos", r.eval_videos},
                      {"eval_identities", r.eval_identities},
                      {"best_round", r.model.best_round}};
  j.update(metrics_to_json(r.metrics));
  return j;
}

inline nlohmann::json subset_to_json(const SubsetScore& s, std::size_t rank) {
  nlohmann::json j = {{"schema", kSubsetSchema},
                      {"rank", rank},
                      {"mask", s.mask.bits()},
                      {"feature_count", s.mask.size()},
                      {"features", s.mask.names()}};
  j.update(metrics_to_json(s.metrics));
  j["cv_accuracy"] = s.cv_accuracy;
  return j;
}

namespace detail {

inline std::string percent(double fraction) {
  char buffer[16];
  std::snprintf(buffer, sizeof(buffer), "%.1f", 100.0 * fraction);
  return buffer;
}

// Left-aligned text columns separated by two spaces.
inline std::string render_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths;
  for (const auto& row : rows) {
    if (widths.size() < row.size()) widths.resize(row.size(), 0);
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  }
  std::string out;
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      line += row[c];
      if (c + 1 < row.size()) line += std::string(widths[c] - row[c].size() + 2, ' ');
    }
    out += line + '\n';
  }
  return out;
}

}  // namespace detail

// Rows in the layout: train model, eval model, frames, sizes (identities),
// then accuracy, precision, recall and F1 in percent.
inline std::string format_experiment_table(const std::vector<ExperimentResult>& results) {
  std::vector<std::vector<std::string>> rows = {
      {"Train", "Eval", "Frames", "Train size", "Eval size", "Acc", "Prec", "Recall", "F1"}};
  for (const ExperimentResult& r : results) {
    rows.push_back({r.train_name, r.eval_name, r.max_frames ? std::to_string(*r.max_frames) : "all",
                    std::to_string(r.train_identities), std::to_string(r.eval_identities),
                    detail::percent(r.metrics.accuracy), detail::percent(r.metrics.precision),
                    detail::percent(r.metrics.recall), detail::percent(r.metrics.f1)});
  }
  return detail::render_table(rows);
}

// Top-n and bottom-n slices of the ranking.
inline std::string format_subset_table(const SubsetStudy& study, std::size_t n = 10) {
  std::vector<std::vector<std::string>> rows = {{"Rank", "Acc", "#", "Features"}};
  auto add = [&](std::size_t rank, const SubsetScore& s) {
    rows.push_back({std::to_string(rank), detail::percent(s.cv_accuracy), std::to_string(s.mask.size()),
                    s.mask.to_string()});
  };
  const std::size_t total = study.ranking.size();
  const std::size_t head = std::min(n, total);
  for (std::size_t i = 0; i < head; ++i) add(i + 1, study.ranking[i]);
  if (total > 2 * n) rows.push_back({"...", "", "", ""});
  for (std::size_t i = std::max(head, total - std::min(n, total)); i < total; ++i) {
    add(i + 1, study.ranking[i]);
  }
  return detail::render_table(rows);
}

}  // namespace biomstat
