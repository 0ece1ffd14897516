#pragma once

// Command-line front end. run_cli() is separate from main() so tests can
// drive every subcommand in-process with captured output streams.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "biomstat/biomstat.hpp"

namespace biomstat::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitMalformed = 1;
inline constexpr int kExitDegenerate = 2;

inline constexpr const char* kPredictionSchema = "biomstat.prediction/1";
inline constexpr const char* kIngestSchema = "biomstat.ingest/1";

struct GlobalOptions {
  unsigned threads = 0;
  std::uint64_t seed = 0;
};

namespace detail {

inline void add_train_flags(CLI::App* cmd, TrainConfig& c) {
  cmd->add_option("--max-trees", c.max_trees, "Maximum boosting rounds")->capture_default_str();
  cmd->add_option("--learning-rate", c.learning_rate, "Shrinkage per tree")->capture_default_str();
  cmd->add_option("--max-depth", c.max_depth, "Maximum tree depth")->capture_default_str();
  cmd->add_option("--min-child-weight", c.min_child_weight, "Minimum hessian sum per child")
      ->capture_default_str();
  cmd->add_option("--gamma", c.gamma, "Per-leaf complexity penalty")->capture_default_str();
  cmd->add_option("--lambda", c.lambda, "L2 penalty on leaf weights")->capture_default_str();
  cmd->add_option("--subsample", c.subsample, "Row sampling rate per tree")->capture_default_str();
  cmd->add_option("--colsample", c.colsample, "Feature sampling rate per tree")->capture_default_str();
  cmd->add_option("--patience", c.early_stopping_patience, "Early-stopping patience in rounds")
      ->capture_default_str();
  cmd->add_option("--base-score", c.base_score, "Initial probability")->capture_default_str();
}

inline void add_stats_flags(CLI::App* cmd, std::string& mode, std::optional<std::size_t>& max_frames) {
  cmd->add_option("--mode", mode, "Pairwise statistics mode")
      ->check(CLI::IsMember({"exact", "streaming"}))
      ->capture_default_str();
  cmd->add_option("--max-frames", max_frames, "Use only the first K frames of each video");
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path + " for writing");
  return out;
}

inline std::vector<std::size_t> parse_size_list(const std::string& text, const char* flag) {
  std::vector<std::size_t> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      values.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      fail(ErrorKind::kInvalidArgument, std::string(flag) + ": '" + item + "' is not a positive integer");
    }
  }
  if (values.empty()) fail(ErrorKind::kInvalidArgument, std::string(flag) + ": empty list");
  return values;
}

// Model features in model order, taken from the canonical 9-vector.
inline std::vector<double> select_model_features(const GbtModel& model, const FeatureVector& v) {
  std::vector<double> x;
  for (const std::string& name : model.feature_names) x.push_back(v.values[feature_index(name)]);
  return x;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline int cmd_ingest(const std::string& dir, bool json, std::ostream& out) {
  const DatasetManifest manifest = load_manifest(dir, ManifestCheck::kFilesExist);
  std::set<std::string> identities;
  std::map<std::string, std::size_t> tags;
  std::size_t deepfakes = 0;
  std::size_t min_frames = 0;
  std::size_t max_frames = 0;
  for (const VideoRecord& r : manifest.records) {
    EmbeddingSequence seq = [&] {
      try {
        return load_video(r);
      } catch (const Error& e) {
        fail(e.kind(), "video " + r.video_id + ": " + e.what());
      }
    }();
    identities.insert(r.identity_id);
    ++tags[r.generator_tag];
    deepfakes += r.label == Label::kDeepfake ? 1 : 0;
    min_frames = min_frames == 0 ? seq.frame_count() : std::min(min_frames, seq.frame_count());
    max_frames = std::max(max_frames, seq.frame_count());
  }
  if (json) {
    out << nlohmann::json{{"schema", kIngestSchema},
                          {"records", manifest.records.size()},
                          {"identities", identities.size()},
                          {"authentic", manifest.records.size() - deepfakes},
                          {"deepfake", deepfakes},
                          {"generator_tags", tags},
                          {"min_frames", min_frames},
                          {"max_frames", max_frames}}
               .dump()
        << '\n';
  } else {
    out << "records: " << manifest.records.size() << '\n'
        << "identities: " << identities.size() << '\n'
        << "authentic: " << manifest.records.size() - deepfakes << '\n'
        << "deepfake: " << deepfakes << '\n'
        << "frames: " << min_frames << ".." << max_frames << '\n';
    for (const auto& [tag, count] : tags) out << "tag " << tag << ": " << count << '\n';
    out << "all embedding files valid\n";
  }
  return kExitOk;
}

struct FeaturizeArgs {
  std::string manifest;
  std::string output;
  std::string mode = "exact";
  std::optional<std::size_t> max_frames;
  std::size_t bins = kDefaultBinCount;
};

inline int cmd_featurize(const FeaturizeArgs& a, const GlobalOptions& g, std::ostream& out) {
  const DatasetManifest manifest = load_manifest(a.manifest);
  FeaturizeOptions options;
  options.mode = parse_stats_mode(a.mode);
  options.max_frames = a.max_frames;
  options.bin_count = a.bins;
  options.threads = g.threads;
  const FeatureTable table = featurize(manifest, options);
  if (a.output.empty() || a.output == "-") {
    write_features_csv(out, table);
  } else {
    std::ofstream file = detail::open_output(a.output);
    write_features_csv(file, table);
    out << "wrote " << table.size() << " feature rows to " << a.output << '\n';
  }
  return kExitOk;
}

struct TrainArgs {
  std::string features_csv;
  std::string output;
  std::string features = "all";
  double validation_fraction = kDefaultValidationFraction;
  TrainConfig config;
  std::string grid_learning_rate;
  std::string grid_max_depth;
  std::string grid_min_child_weight;
  int cv_folds = 5;
  bool json = false;
};

inline std::vector<double> parse_double_list(const std::string& text, const char* flag) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fail(ErrorKind::kInvalidArgument, std::string(flag) + ": '" + item + "' is not a number");
    }
  }
  return values;
}

inline int cmd_train(const TrainArgs& a, const GlobalOptions& g, std::ostream& out) {
  std::ifstream in(a.features_csv);
  if (!in) fail(ErrorKind::kIo, "cannot open " + a.features_csv);
  FeatureTable table = [&] {
    try {
      return read_features_csv(in);
    } catch (const Error& e) {
      fail(e.kind(), a.features_csv + ": " + e.what());
    }
  }();
  const FeatureMask mask = FeatureMask::parse(a.features);
  TrainConfig config = a.config;
  config.rng_seed = g.seed;
  const std::vector<std::size_t> rows = all_rows(table);

  std::optional<GridSearchResult> search;
  if (!a.grid_learning_rate.empty() || !a.grid_max_depth.empty() || !a.grid_min_child_weight.empty()) {
    std::vector<double> rates = parse_double_list(a.grid_learning_rate, "--grid-learning-rate");
    std::vector<double> depths = parse_double_list(a.grid_max_depth, "--grid-max-depth");
    std::vector<double> weights = parse_double_list(a.grid_min_child_weight, "--grid-min-child-weight");
    if (rates.empty()) rates = {config.learning_rate};
    if (depths.empty()) depths = {static_cast<double>(config.max_depth)};
    if (weights.empty()) weights = {config.min_child_weight};
    std::vector<TrainConfig> grid;
    for (double r : rates)
      for (double d : depths)
        for (double w : weights) {
          TrainConfig c = config;
          c.learning_rate = r;
          c.max_depth = static_cast<int>(d);
          c.min_child_weight = w;
          validate(c);
          grid.push_back(c);
        }
    search = grid_search(table, rows, mask, grid, a.cv_folds, g.threads);
    config = search->best;
  }

  const TrainResult trained = train_with_holdout(table, rows, mask, config, a.validation_fraction);
  {
    std::ofstream file = detail::open_output(a.output);
    file << serialize(trained.model) << '\n';
    if (!file) fail(ErrorKind::kIo, "failed writing " + a.output);
  }
  const auto importance = feature_importance(trained.model);
  if (a.json) {
    nlohmann::json j = {{"schema", "biomstat.train/1"},
                        {"rows", table.size()},
                        {"trained_rounds", trained.model.trained_rounds},
                        {"best_round", trained.model.best_round},
                        {"learning_rate", config.learning_rate},
                        {"max_depth", config.max_depth},
                        {"min_child_weight", config.min_child_weight},
                        {"feature_importance", importance},
                        {"model", a.output}};
    out << j.dump() << '\n';
  } else {
    out << "trained on " << table.size() << " videos: " << trained.model.trained_rounds
        << " rounds, best round " << trained.model.best_round << '\n';
    if (search) {
      out << "grid search picked learning_rate=" << config.learning_rate
          << " max_depth=" << config.max_depth << " min_child_weight=" << config.min_child_weight
          << '\n';
    }
    out << "feature importance (total gain):\n";
    for (const auto& [name, gain] : importance) out << "  " << name << ": " << gain << '\n';
    out << "wrote " << a.output << '\n';
  }
  return kExitOk;
}

struct PredictArgs {
  std::string model;
  std::string video;
  std::string mode = "exact";
  std::optional<std::size_t> max_frames;
  double threshold = kDecisionThreshold;
  bool json = false;
};

inline int cmd_predict(const PredictArgs& a, const GlobalOptions& g, std::ostream& out,
                       std::ostream& err) {
  const GbtModel model = [&] {
    try {
      return deserialize(detail::read_text_file(a.model));
    } catch (const Error& e) {
      fail(e.kind(), a.model + ": " + e.what());
    }
  }();
  const EmbeddingSequence seq = read_sequence_file(a.video);
  PairwiseOptions pw;
  pw.mode = parse_stats_mode(a.mode);
  pw.max_frames = a.max_frames;
  pw.threads = g.threads;
  const SimilarityStats stats = [&] {
    try {
      return pairwise_stats(seq, pw);
    } catch (const Error& e) {
      fail(e.kind(), a.video + ": " + e.what());
    }
  }();
  const FeatureVector features = extract_features(stats);
  const Prediction p = predict(model, detail::select_model_features(model, features));
  const bool deepfake = is_deepfake(p, a.threshold);
  const bool non_discriminative = model.active_tree_count() == 0;
  if (non_discriminative) {
    err << "warning: non-discriminative model (no trees); probability is the base score\n";
  }
  if (a.json) {
    nlohmann::json j = {{"schema", kPredictionSchema},
                        {"video_id", seq.video_id()},
                        {"probability", p.probability},
                        {"raw_score", p.raw_score},
                        {"label", deepfake ? "deepfake" : "authentic"},
                        {"threshold", a.threshold},
                        {"frames_used", stats.frame_count()},
                        {"mode", to_string(pw.mode)},
                        {"non_discriminative_model", non_discriminative}};
    out << j.dump() << '\n';
  } else {
    out << "video_id: " << seq.video_id() << '\n'
        << "probability: " << format_double(p.probability) << '\n'
        << "label: " << (deepfake ? "deepfake" : "authentic") << '\n'
        << "N: " << stats.frame_count() << '\n'
        << "mode: " << to_string(pw.mode) << '\n';
  }
  return kExitOk;
}

struct EvaluateArgs {
  std::string manifest;
  std::string eval_manifest;
  std::string train_tag = "*";
  std::string eval_tag = "*";
  std::string mode = "exact";
  std::optional<std::size_t> max_frames;
  std::string sweep_frames;
  std::string features = "all";
  double eval_fraction = 0.3;
  double validation_fraction = kDefaultValidationFraction;
  TrainConfig config;
  std::string jsonl;
  bool json = false;
};

inline ExperimentSpec make_spec(const EvaluateArgs& a, const GlobalOptions& g) {
  ExperimentSpec spec;
  spec.train_selector = TagSelector::parse(a.train_tag);
  spec.eval_selector = TagSelector::parse(a.eval_tag);
  spec.mode = parse_stats_mode(a.mode);
  spec.max_frames = a.max_frames;
  spec.feature_mask = FeatureMask::parse(a.features);
  spec.config = a.config;
  spec.config.rng_seed = g.seed;
  spec.eval_fraction = a.eval_fraction;
  spec.validation_fraction = a.validation_fraction;
  validate(spec.config);
  return spec;
}

inline int cmd_evaluate(const EvaluateArgs& a, const GlobalOptions& g, std::ostream& out) {
  const ExperimentSpec spec = make_spec(a, g);
  const DatasetManifest manifest = load_manifest(a.manifest);
  std::vector<ExperimentResult> results;
  if (!a.eval_manifest.empty()) {
    const DatasetManifest eval_manifest = load_manifest(a.eval_manifest);
    if (!a.sweep_frames.empty()) {
      for (std::size_t f : detail::parse_size_list(a.sweep_frames, "--sweep-frames")) {
        ExperimentSpec s = spec;
        s.max_frames = f;
        results.push_back(run_experiment(manifest, eval_manifest, s, g.threads));
      }
    } else {
      results.push_back(run_experiment(manifest, eval_manifest, spec, g.threads));
    }
  } else if (!a.sweep_frames.empty()) {
    results = sweep_frames(manifest, spec, detail::parse_size_list(a.sweep_frames, "--sweep-frames"),
                           g.threads);
  } else {
    results.push_back(run_experiment(manifest, spec, g.threads));
  }

  std::string lines;
  for (const ExperimentResult& r : results) lines += experiment_to_json(r).dump() + '\n';
  if (!a.jsonl.empty()) {
    std::ofstream file = detail::open_output(a.jsonl);
    file << lines;
  }
  if (a.json) {
    out << lines;
  } else {
    out << format_experiment_table(results);
  }
  return kExitOk;
}

struct SubsetsArgs {
  std::string manifest;
  std::string train_tag = "*";
  std::string mode = "exact";
  std::optional<std::size_t> max_frames;
  int folds = 5;
  std::size_t top = 10;
  TrainConfig config;
  std::string jsonl;
  bool json = false;
};

inline int cmd_subsets(const SubsetsArgs& a, const GlobalOptions& g, std::ostream& out) {
  ExperimentSpec spec;
  spec.train_selector = TagSelector::parse(a.train_tag);
  spec.mode = parse_stats_mode(a.mode);
  spec.max_frames = a.max_frames;
  spec.config = a.config;
  spec.config.rng_seed = g.seed;
  validate(spec.config);
  const DatasetManifest manifest = load_manifest(a.manifest);
  const SubsetStudy study = feature_subset_study(manifest, spec, a.folds, g.threads);

  std::string lines;
  for (std::size_t i = 0; i < study.ranking.size(); ++i) {
    lines += subset_to_json(study.ranking[i], i + 1).dump() + '\n';
  }
  if (!a.jsonl.empty()) {
    std::ofstream file = detail::open_output(a.jsonl);
    file << lines;
  }
  if (a.json) {
    out << lines;
  } else {
    out << format_subset_table(study, a.top);
  }
  return kExitOk;
}

struct SynthArgs {
  std::string out_dir;
  SynthDatasetSpec spec;
};

inline int cmd_synth(SynthArgs a, const GlobalOptions& g, std::ostream& out) {
  a.spec.rng_seed = g.seed;
  a.spec.params.rng_seed = g.seed;
  a.spec.threads = g.threads;
  const DatasetManifest manifest = generate_dataset(a.out_dir, a.spec);
  out << "wrote " << manifest.records.size() << " videos for " << a.spec.n_identities
      << " identities to " << a.out_dir << '\n';
  return kExitOk;
}

struct HistArgs {
  std::string video;
  std::string output;
  std::size_t bins = kDefaultBinCount;
  std::optional<std::size_t> max_frames;
};

inline void write_histogram_csv(std::ostream& out, const BinnedHistogram& hist) {
  out << "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < hist.bin_count(); ++b) {
    out << format_double(hist.bin_lo(b)) << ',' << format_double(hist.bin_hi(b)) << ','
        << hist.counts()[b] << '\n';
  }
}

inline int cmd_hist(const HistArgs& a, const GlobalOptions& g, std::ostream& out) {
  const EmbeddingSequence seq = read_sequence_file(a.video);
  PairwiseOptions pw;
  pw.mode = StatsMode::kStreaming;
  pw.bin_count = a.bins;
  pw.max_frames = a.max_frames;
  pw.threads = g.threads;
  const SimilarityStats stats = [&] {
    try {
      return pairwise_stats(seq, pw);
    } catch (const Error& e) {
      fail(e.kind(), a.video + ": " + e.what());
    }
  }();
  if (a.output.empty() || a.output == "-") {
    write_histogram_csv(out, *stats.histogram());
  } else {
    std::ofstream file = detail::open_output(a.output);
    write_histogram_csv(file, *stats.histogram());
    out << "wrote " << a.bins << " bins (" << stats.pair_count() << " pairs) to " << a.output << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deepfake video detection from pairwise face-embedding similarity statistics",
               "biomstat"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Read option defaults from a TOML/INI file");

  GlobalOptions global;
  app.add_option("--threads", global.threads,
                 "Worker threads, 0 = auto (also BIOMSTAT_THREADS)")
      ->capture_default_str();
  app.add_option("--seed", global.seed, "Seed for every random choice")->capture_default_str();

  std::string ingest_dir;
  bool ingest_json = false;
  CLI::App* ingest = app.add_subcommand("ingest", "Validate a dataset directory and its embeddings");
  ingest->add_option("dir", ingest_dir, "Dataset directory or manifest.json")->required();
  ingest->add_flag("--json", ingest_json, "Emit JSON");

  FeaturizeArgs fz;
  CLI::App* featurize_cmd = app.add_subcommand("featurize", "Write the 9 features of every video as CSV");
  featurize_cmd->add_option("manifest", fz.manifest, "Manifest path or dataset directory")->required();
  featurize_cmd->add_option("-o,--output", fz.output, "Output CSV (default stdout)");
  detail::add_stats_flags(featurize_cmd, fz.mode, fz.max_frames);
  featurize_cmd->add_option("--bins", fz.bins, "Histogram bins in streaming mode")->capture_default_str();

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a boosted-tree model from a features CSV");
  train_cmd->add_option("features_csv", tr.features_csv, "Features CSV from 'featurize'")->required();
  train_cmd->add_option("-o,--output", tr.output, "Model JSON path")->required();
  train_cmd->add_option("--features", tr.features, "Feature subset, comma-separated or 'all'")
      ->capture_default_str();
  train_cmd->add_option("--validation-fraction", tr.validation_fraction,
                        "Share of identities held out for early stopping")
      ->capture_default_str();
  detail::add_train_flags(train_cmd, tr.config);
  train_cmd->add_option("--grid-learning-rate", tr.grid_learning_rate, "Grid values, comma-separated");
  train_cmd->add_option("--grid-max-depth", tr.grid_max_depth, "Grid values, comma-separated");
  train_cmd->add_option("--grid-min-child-weight", tr.grid_min_child_weight, "Grid values, comma-separated");
  train_cmd->add_option("--cv-folds", tr.cv_folds, "Grouped folds for grid search")->capture_default_str();
  train_cmd->add_flag("--json", tr.json, "Emit JSON");

  PredictArgs pr;
  CLI::App* predict_cmd = app.add_subcommand("predict", "Classify one embedding file");
  predict_cmd->add_option("model", pr.model, "Model JSON")->required();
  predict_cmd->add_option("video", pr.video, "Embedding file (.bmsq)")->required();
  detail::add_stats_flags(predict_cmd, pr.mode, pr.max_frames);
  predict_cmd->add_option("--threshold", pr.threshold, "Probability at or above which a video is a deepfake")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  predict_cmd->add_flag("--json", pr.json, "Emit JSON");

  EvaluateArgs ev;
  CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "Train and evaluate with identity-disjoint splits");
  evaluate_cmd->add_option("manifest", ev.manifest, "Manifest path or dataset directory")->required();
  evaluate_cmd->add_option("--eval-manifest", ev.eval_manifest, "Evaluate on a separate dataset");
  evaluate_cmd->add_option("--train-tag", ev.train_tag, "Generator tags used for training ('*' = all)")
      ->capture_default_str();
  evaluate_cmd->add_option("--eval-tag", ev.eval_tag, "Generator tags used for evaluation ('*' = all)")
      ->capture_default_str();
  detail::add_stats_flags(evaluate_cmd, ev.mode, ev.max_frames);
  evaluate_cmd->add_option("--sweep-frames", ev.sweep_frames, "Comma-separated video lengths, one row each");
  evaluate_cmd->add_option("--features", ev.features, "Feature subset")->capture_default_str();
  evaluate_cmd->add_option("--eval-fraction", ev.eval_fraction, "Share of identities held out for evaluation")
      ->capture_default_str();
  evaluate_cmd->add_option("--validation-fraction", ev.validation_fraction,
                           "Share of training identities held out for early stopping")
      ->capture_default_str();
  detail::add_train_flags(evaluate_cmd, ev.config);
  evaluate_cmd->add_option("--jsonl", ev.jsonl, "Also write JSON lines to this file");
  evaluate_cmd->add_flag("--json", ev.json, "Print JSON lines instead of the table");

  SubsetsArgs ss;
  CLI::App* subsets_cmd = app.add_subcommand("subsets", "Cross-validate all 511 feature subsets");
  subsets_cmd->add_option("manifest", ss.manifest, "Manifest path or dataset directory")->required();
  subsets_cmd->add_option("--train-tag", ss.train_tag, "Generator tags to include")->capture_default_str();
  detail::add_stats_flags(subsets_cmd, ss.mode, ss.max_frames);
  subsets_cmd->add_option("-k,--folds", ss.folds, "Grouped folds")->capture_default_str();
  subsets_cmd->add_option("--top", ss.top, "Rows shown at each end of the table")->capture_default_str();
  detail::add_train_flags(subsets_cmd, ss.config);
  subsets_cmd->add_option("--jsonl", ss.jsonl, "Also write the 511 JSON lines to this file");
  subsets_cmd->add_flag("--json", ss.json, "Print JSON lines instead of the table");

  SynthArgs sy;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Write a synthetic dataset");
  synth_cmd->add_option("out_dir", sy.out_dir, "Output directory")->required();
  synth_cmd->add_option("--identities", sy.spec.n_identities, "Number of identities")->capture_default_str();
  synth_cmd->add_option("--videos-per-identity", sy.spec.videos_per_identity, "Videos per identity")
      ->capture_default_str();
  synth_cmd->add_option("--frames", sy.spec.params.n_frames, "Frames per video")->capture_default_str();
  synth_cmd->add_option("--dim", sy.spec.params.dim, "Embedding dimension")->capture_default_str();
  synth_cmd->add_option("--authentic-concentration", sy.spec.params.authentic_concentration,
                        "Cluster concentration of authentic videos")
      ->capture_default_str();
  synth_cmd->add_option("--primary-weight", sy.spec.params.deepfake_mix.primary_weight,
                        "Share of deepfake frames near the identity")
      ->capture_default_str();
  synth_cmd->add_option("--primary-concentration", sy.spec.params.deepfake_mix.primary_concentration,
                        "Concentration of the identity cluster in deepfakes")
      ->capture_default_str();
  synth_cmd->add_option("--secondary-offset-angle", sy.spec.params.deepfake_mix.secondary_offset_angle,
                        "Angle in radians of the second deepfake cluster")
      ->capture_default_str();
  synth_cmd->add_option("--secondary-concentration", sy.spec.params.deepfake_mix.secondary_concentration,
                        "Concentration of the second deepfake cluster")
      ->capture_default_str();
  synth_cmd->add_option("--tag", sy.spec.generator_tag, "generator_tag of every video")->capture_default_str();
  synth_cmd->add_option("--fps", sy.spec.fps, "Frame rate recorded in the manifest")->capture_default_str();

  HistArgs hi;
  CLI::App* hist_cmd = app.add_subcommand("hist", "Pairwise-similarity histogram of one video as CSV");
  hist_cmd->add_option("video", hi.video, "Embedding file (.bmsq)")->required();
  hist_cmd->add_option("-o,--output", hi.output, "Output CSV (default stdout)");
  hist_cmd->add_option("--bins", hi.bins, "Bins over [-1, 1]")->capture_default_str();
  hist_cmd->add_option("--max-frames", hi.max_frames, "Use only the first K frames");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitMalformed;
  }

  try {
    if (*ingest) return cmd_ingest(ingest_dir, ingest_json, out);
    if (*featurize_cmd) return cmd_featurize(fz, global, out);
    if (*train_cmd) return cmd_train(tr, global, out);
    if (*predict_cmd) return cmd_predict(pr, global, out, err);
    if (*evaluate_cmd) return cmd_evaluate(ev, global, out);
    if (*subsets_cmd) return cmd_subsets(ss, global, out);
    if (*synth_cmd) return cmd_synth(sy, global, out);
    if (*hist_cmd) return cmd_hist(hi, global, out);
  } catch (const Error& e) {
    err << "biomstat: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return e.is_degenerate_data() ? kExitDegenerate : kExitMalformed;
  } catch (const std::exception& e) {
    err << "biomstat: error: " << e.what() << '\n';
    return kExitMalformed;
  }
  return kExitMalformed;
}

}  // namespace biomstat::cli
