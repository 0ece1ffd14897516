#pragma once

// Second-order gradient boosting of regression trees for binary logistic
// loss. Each tree minimises the regularised objective
//
//   sum_i [g_i f(x_i) + 1/2 h_i f(x_i)^2] + gamma * leaves + 1/2 lambda * sum w^2
//
// so a leaf's optimal weight is -G / (H + lambda) and a split's gain is
//
//   1/2 [G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)] - gamma.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "biomstat/error.hpp"
#include "biomstat/random.hpp"

namespace biomstat {

struct TrainConfig {
  int max_trees = 100;
  double learning_rate = 0.1;
  int max_depth = 6;
  double min_child_weight = 1.0;  // minimum sum of hessians per child
  double gamma = 0.1;             // per-leaf complexity penalty
  double lambda = 1.0;            // L2 penalty on leaf weights
  double subsample = 0.8;         // rows per tree
  double colsample = 0.8;         // features per tree
  int early_stopping_patience = 10;
  std::uint64_t rng_seed = 0;
  double base_score = 0.5;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline void validate(const TrainConfig& config) {
  auto bad = [](const std::string& what) { fail(ErrorKind::kInvalidArgument, what); };
  if (config.max_trees < 1) bad("max_trees must be >= 1");
  if (!(config.learning_rate > 0.0)) bad("learning_rate must be positive");
  if (config.max_depth < 0) bad("max_depth must be >= 0");
  if (!(config.min_child_weight >= 0.0)) bad("min_child_weight must be >= 0");
  if (!(config.gamma >= 0.0)) bad("gamma must be >= 0");
  if (!(config.lambda >= 0.0)) bad("lambda must be >= 0");
  if (!(config.subsample > 0.0 && config.subsample <= 1.0)) bad("subsample must lie in (0, 1]");
  if (!(config.colsample > 0.0 && config.colsample <= 1.0)) bad("colsample must lie in (0, 1]");
  if (config.early_stopping_patience < 1) bad("early_stopping_patience must be >= 1");
  if (!(config.base_score > 0.0 && config.base_score < 1.0)) bad("base_score must lie in (0, 1)");
}

// Dense row-major matrix of feature values.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values_).subspan(r * cols_, cols_);
  }

  void append_row(std::span<const double> row) {
    if (rows_ == 0 && values_.empty() && cols_ == 0) cols_ = row.size();
    if (row.size() != cols_) {
      fail(ErrorKind::kInvalidArgument, "row arity " + std::to_string(row.size()) +
                                            " does not match " + std::to_string(cols_));
    }
    values_.insert(values_.end(), row.begin(), row.end());
    ++rows_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

struct TrainingData {
  std::vector<std::string> feature_names;
  FeatureMatrix features;
  std::vector<int> labels;  // 0 = authentic, 1 = deepfake

  std::size_t size() const noexcept { return labels.size(); }
};

inline double sigmoid(double raw) {
  if (raw >= 0.0) return 1.0 / (1.0 + std::exp(-raw));
  const double e = std::exp(raw);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Binary cross-entropy of one sample in terms of the raw score, written as
// log(1 + e^{-|z|}) + max(z, 0) - y z to stay finite for large |z|.
inline double logistic_loss(double raw, int label) {
  return std::log1p(std::exp(-std::abs(raw))) + std::max(raw, 0.0) -
         static_cast<double>(label) * raw;
}

struct GradHess {
  double gradient = 0.0;
  double hessian = 0.0;
};

inline constexpr double kMinHessian = 1e-16;

inline GradHess logistic_grad_hess(double raw, int label) {
  const double p = sigmoid(raw);
  return {p - static_cast<double>(label), std::max(p * (1.0 - p), kMinHessian)};
}

// One row of a feature column, with that row's gradient statistics.
struct SplitPoint {
  double value = 0.0;
  double gradient = 0.0;
  double hessian = 0.0;
};

struct SplitParams {
  double lambda = 1.0;
  double gamma = 0.0;
  double min_child_weight = 1.0;
};

struct SplitCandidate {
  double threshold = 0.0;  // rows with value < threshold go left
  double gain = 0.0;
};

inline double split_gain(double gl, double hl, double gr, double hr,
                         const SplitParams& p) {
  const double g = gl + gr;
  const double h = hl + hr;
  return 0.5 * (gl * gl / (hl + p.lambda) + gr * gr / (hr + p.lambda) -
                g * g / (h + p.lambda)) -
         p.gamma;
}

// Threshold between two consecutive distinct sorted values. Falls back to
// the upper value if the midpoint rounds onto the lower one.
inline double split_threshold(double lower, double upper) {
  const double mid = lower + (upper - lower) / 2.0;
  return mid > lower ? mid : upper;
}

// Exact greedy scan over a column sorted by value. Returns the first
// candidate with the largest strictly positive gain.
inline std::optional<SplitCandidate> find_best_split(std::span<const SplitPoint> sorted,
                                                     const SplitParams& params) {
  double g_total = 0.0;
  double h_total = 0.0;
  for (const SplitPoint& p : sorted) {
    g_total += p.gradient;
    h_total += p.hessian;
  }
  std::optional<SplitCandidate> best;
  double best_gain = 0.0;
  double gl = 0.0;
  double hl = 0.0;
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    gl += sorted[i].gradient;
    hl += sorted[i].hessian;
    if (!(sorted[i].value < sorted[i + 1].value)) continue;
    const double gr = g_total - gl;
    const double hr = h_total - hl;
    if (hl < params.min_child_weight || hr < params.min_child_weight) continue;
    const double gain = split_gain(gl, hl, gr, hr, params);
    if (gain > best_gain) {
      best_gain = gain;
      best = SplitCandidate{split_threshold(sorted[i].value, sorted[i + 1].value), gain};
    }
  }
  return best;
}

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double weight = 0.0;  // leaves only
  double gain = 0.0;    // internal nodes only

  bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

// Node 0 is the root; children always have larger ids than their parent.
struct Tree {
  std::vector<TreeNode> nodes;

  double evaluate(std::span<const double> x) const {
    std::size_t id = 0;
    while (!nodes[id].is_leaf()) {
      const TreeNode& n = nodes[id];
      id = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] < n.threshold
                                        ? n.left
                                        : n.right);
    }
    return nodes[id].weight;
  }

  std::size_t leaf_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
  }

  friend bool operator==(const Tree&, const Tree&) = default;
};

struct GbtModel {
  std::vector<Tree> trees;
  double learning_rate = 0.1;
  double base_score = 0.5;
  std::vector<std::string> feature_names;
  int trained_rounds = 0;
  int best_round = -1;  // prediction uses trees[0..best_round]; -1 means none

  std::size_t active_tree_count() const {
    return static_cast<std::size_t>(best_round + 1);
  }

  friend bool operator==(const GbtModel&, const GbtModel&) = default;
};

struct TrainTrace {
  std::vector<double> train_logloss;
  std::vector<double> validation_logloss;  // empty without a validation set
};

struct TrainResult {
  GbtModel model;
  TrainTrace trace;
};

inline double mean_logloss(std::span<const double> raw, std::span<const int> labels) {
  double sum = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) sum += logistic_loss(raw[i], labels[i]);
  return raw.empty() ? 0.0 : sum / static_cast<double>(raw.size());
}

namespace detail {

inline void check_training_data(const TrainingData& data, const char* role) {
  if (data.features.rows() != data.labels.size()) {
    fail(ErrorKind::kInvalidArgument, std::string(role) + ": feature rows and labels differ in count");
  }
  if (data.features.cols() != data.feature_names.size()) {
    fail(ErrorKind::kInvalidArgument, std::string(role) + ": feature arity differs from feature_names");
  }
  for (std::size_t r = 0; r < data.features.rows(); ++r) {
    if (data.labels[r] != 0 && data.labels[r] != 1) {
      fail(ErrorKind::kValidation, std::string(role) + ": label of row " + std::to_string(r) + " is not 0/1");
    }
    for (std::size_t c = 0; c < data.features.cols(); ++c) {
      if (!std::isfinite(data.features.at(r, c))) {
        fail(ErrorKind::kValidation, std::string(role) + ": non-finite value (NaN/Inf) in row " +
                                         std::to_string(r) + ", feature " + data.feature_names[c]);
      }
    }
  }
}

// Draws ceil(fraction * n) distinct indices (at least one), sorted.
inline std::vector<std::size_t> sample_indices(std::size_t n, double fraction, Rng& rng) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto k = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)), 1, n);
  if (k == n) return all;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(all[i], all[j]);
  }
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

class TreeBuilder {
 public:
  TreeBuilder(const FeatureMatrix& x, std::span<const GradHess> grads,
              std::span<const std::size_t> columns, const TrainConfig& config)
      : x_(x), grads_(grads), columns_(columns), config_(config),
        params_{config.lambda, config.gamma, config.min_child_weight} {}

  Tree build(std::vector<std::size_t> rows) {
    tree_.nodes.clear();
    grow(std::move(rows), 0);
    return std::move(tree_);
  }

 private:
  int grow(std::vector<std::size_t> rows, int depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();

    double g = 0.0;
    double h = 0.0;
    for (std::size_t r : rows) {
      g += grads_[r].gradient;
      h += grads_[r].hessian;
    }

    int best_feature = -1;
    SplitCandidate best;
    if (depth < config_.max_depth && rows.size() >= 2) {
      std::vector<SplitPoint> column(rows.size());
      for (std::size_t feature : columns_) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
          column[i] = {x_.at(rows[i], feature), grads_[rows[i]].gradient,
                       grads_[rows[i]].hessian};
        }
        std::stable_sort(column.begin(), column.end(),
                         [](const SplitPoint& a, const SplitPoint& b) { return a.value < b.value; });
        if (auto split = find_best_split(column, params_);
            split && (best_feature < 0 || split->gain > best.gain)) {
          best = *split;
          best_feature = static_cast<int>(feature);
        }
      }
    }

    if (best_feature < 0) {
      tree_.nodes[static_cast<std::size_t>(id)].weight = -g / (h + config_.lambda);
      return id;
    }

    std::vector<std::size_t> left_rows;
    std::vector<std::size_t> right_rows;
    for (std::size_t r : rows) {
      (x_.at(r, static_cast<std::size_t>(best_feature)) < best.threshold ? left_rows : right_rows)
          .push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    const int left = grow(std::move(left_rows), depth + 1);
    const int right = grow(std::move(right_rows), depth + 1);
    TreeNode& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = best.threshold;
    node.left = left;
    node.right = right;
    node.gain = best.gain;
    return id;
  }

  const FeatureMatrix& x_;
  std::span<const GradHess> grads_;
  std::span<const std::size_t> columns_;
  const TrainConfig& config_;
  SplitParams params_;
  Tree tree_;
};

}  // namespace detail

// Minimum validation-loss improvement that resets the patience counter.
inline constexpr double kEarlyStoppingTolerance = 1e-9;

// Boosts up to max_trees rounds. With a non-empty validation set, training
// stops once validation logloss has not improved for the patience window and
// best_round is the earliest round achieving the best loss. Single-threaded
// and deterministic for a given rng_seed.
inline TrainResult train(const TrainingData& data, const TrainingData& validation,
                         const TrainConfig& config) {
  validate(config);
  detail::check_training_data(data, "training set");
  std::size_t positives = 0;
  for (int label : data.labels) positives += static_cast<std::size_t>(label);
  const std::size_t negatives = data.size() - positives;
  if (positives < 2 || negatives < 2) {
    fail(ErrorKind::kDegenerateLabels,
         "degenerate labels: training set has " + std::to_string(negatives) + " authentic and " +
             std::to_string(positives) + " deepfake rows (need at least 2 of each)");
  }
  const bool early_stopping = validation.size() > 0;
  if (early_stopping) {
    detail::check_training_data(validation, "validation set");
    if (validation.feature_names != data.feature_names) {
      fail(ErrorKind::kInvalidArgument, "validation features differ from training features");
    }
  }

  const std::size_t n = data.size();
  const std::size_t p = data.features.cols();
  const double base_raw = logit(config.base_score);
  std::vector<double> raw(n, base_raw);
  std::vector<double> val_raw(validation.size(), base_raw);
  std::vector<GradHess> grads(n);

  TrainResult result;
  GbtModel& model = result.model;
  model.learning_rate = config.learning_rate;
  model.base_score = config.base_score;
  model.feature_names = data.feature_names;

  Rng rng(config.rng_seed);
  double best_loss = std::numeric_limits<double>::infinity();
  int rounds_since_best = 0;

  for (int round = 0; round < config.max_trees; ++round) {
    for (std::size_t i = 0; i < n; ++i) grads[i] = logistic_grad_hess(raw[i], data.labels[i]);
    std::vector<std::size_t> rows = detail::sample_indices(n, config.subsample, rng);
    const std::vector<std::size_t> columns = detail::sample_indices(p, config.colsample, rng);

    Tree tree = detail::TreeBuilder(data.features, grads, columns, config).build(std::move(rows));
    for (std::size_t i = 0; i < n; ++i) {
      raw[i] += config.learning_rate * tree.evaluate(data.features.row(i));
    }
    for (std::size_t i = 0; i < val_raw.size(); ++i) {
      val_raw[i] += config.learning_rate * tree.evaluate(validation.features.row(i));
    }
    model.trees.push_back(std::move(tree));
    model.trained_rounds = round + 1;
    result.trace.train_logloss.push_back(mean_logloss(raw, data.labels));

    if (!early_stopping) {
      model.best_round = round;
      continue;
    }
    const double val_loss = mean_logloss(val_raw, validation.labels);
    result.trace.validation_logloss.push_back(val_loss);
    if (val_loss < best_loss - kEarlyStoppingTolerance) {
      best_loss = val_loss;
      model.best_round = round;
      rounds_since_best = 0;
    } else if (++rounds_since_best >= config.early_stopping_patience) {
      break;
    }
  }
  return result;
}

inline TrainResult train(const TrainingData& data, const TrainConfig& config) {
  TrainingData none;
  none.feature_names = data.feature_names;
  return train(data, none, config);
}

struct Prediction {
  double probability = 0.5;
  double raw_score = 0.0;
};

inline constexpr double kDecisionThreshold = 0.5;

// probability >= threshold is classified as deepfake.
inline bool is_deepfake(const Prediction& p, double threshold = kDecisionThreshold) {
  return p.probability >= threshold;
}

inline Prediction predict(const GbtModel& model, std::span<const double> x) {
  if (x.size() != model.feature_names.size()) {
    fail(ErrorKind::kInvalidArgument,
         "feature arity mismatch: model expects " + std::to_string(model.feature_names.size()) +
             ", got " + std::to_string(x.size()));
  }
  double raw = logit(model.base_score);
  const std::size_t active = std::min(model.active_tree_count(), model.trees.size());
  for (std::size_t t = 0; t < active; ++t) {
    raw += model.learning_rate * model.trees[t].evaluate(x);
  }
  return {sigmoid(raw), raw};
}

// Total split gain per feature over the trees used for prediction.
inline std::map<std::string, double> feature_importance(const GbtModel& model) {
  std::map<std::string, double> importance;
  for (const std::string& name : model.feature_names) importance[name] = 0.0;
  const std::size_t active = std::min(model.active_tree_count(), model.trees.size());
  for (std::size_t t = 0; t < active; ++t) {
    for (const TreeNode& node : model.trees[t].nodes) {
      if (!node.is_leaf()) {
        importance[model.feature_names[static_cast<std::size_t>(node.feature)]] += node.gain;
      }
    }
  }
  return importance;
}

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json model_to_json(const GbtModel& model) {
  nlohmann::json trees = nlohmann::json::array();
  for (const Tree& tree : model.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
      const TreeNode& n = tree.nodes[id];
      nlohmann::json node = {{"id", id}};
      if (n.is_leaf()) {
        node["weight"] = n.weight;
      } else {
        node["feature"] = n.feature;
        node["threshold"] = n.threshold;
        node["left"] = n.left;
        node["right"] = n.right;
        node["gain"] = n.gain;
      }
      nodes.push_back(std::move(node));
    }
    trees.push_back({{"nodes", std::move(nodes)}});
  }
  return {{"format_version", kModelFormatVersion},
          {"base_score", model.base_score},
          {"learning_rate", model.learning_rate},
          {"best_round", model.best_round},
          {"trained_rounds", model.trained_rounds},
          {"feature_names", model.feature_names},
          {"trees", std::move(trees)}};
}

// Doubles are written in shortest round-trip form, so parsing restores
// every value bit for bit.
inline std::string serialize(const GbtModel& model) { return model_to_json(model).dump(); }

inline GbtModel model_from_json(const nlohmann::json& doc) {
  auto bad = [](const std::string& what) { fail(ErrorKind::kSchema, "model: " + what); };
  auto number = [&](const nlohmann::json& obj, const char* key) {
    if (!obj.contains(key) || !obj[key].is_number()) bad(std::string("missing number '") + key + "'");
    const double v = obj[key].get<double>();
    if (!std::isfinite(v)) bad(std::string("non-finite '") + key + "'");
    return v;
  };
  auto integer = [&](const nlohmann::json& obj, const char* key) {
    if (!obj.contains(key) || !obj[key].is_number_integer()) {
      bad(std::string("missing integer '") + key + "'");
    }
    return obj[key].get<long long>();
  };

  if (!doc.is_object()) bad("top level must be an object");
  const long long version = integer(doc, "format_version");
  if (version != kModelFormatVersion) {
    fail(ErrorKind::kFormat, "model: unsupported format_version " + std::to_string(version));
  }
  GbtModel model;
  model.base_score = number(doc, "base_score");
  model.learning_rate = number(doc, "learning_rate");
  if (!(model.base_score > 0.0 && model.base_score < 1.0)) bad("base_score must lie in (0, 1)");
  if (!(model.learning_rate > 0.0)) bad("learning_rate must be positive");
  if (!doc.contains("feature_names") || !doc["feature_names"].is_array()) bad("missing 'feature_names'");
  for (const auto& name : doc["feature_names"]) {
    if (!name.is_string()) bad("feature_names must be strings");
    model.feature_names.push_back(name.get<std::string>());
  }
  if (model.feature_names.empty()) bad("feature_names is empty");
  if (!doc.contains("trees") || !doc["trees"].is_array()) bad("missing 'trees'");

  const long long feature_count = static_cast<long long>(model.feature_names.size());
  std::size_t tree_index = 0;
  for (const auto& tree_doc : doc["trees"]) {
    const std::string where = "tree " + std::to_string(tree_index++);
    if (!tree_doc.is_object() || !tree_doc.contains("nodes") || !tree_doc["nodes"].is_array() ||
        tree_doc["nodes"].empty()) {
      bad(where + ": missing 'nodes'");
    }
    const auto& nodes = tree_doc["nodes"];
    const long long size = static_cast<long long>(nodes.size());
    Tree tree;
    std::vector<int> parents(nodes.size(), 0);
    for (long long id = 0; id < size; ++id) {
      const auto& nd = nodes[static_cast<std::size_t>(id)];
      if (!nd.is_object()) bad(where + ": node is not an object");
      if (integer(nd, "id") != id) bad(where + ": node ids must be 0..n-1 in order");
      TreeNode node;
      if (nd.contains("feature")) {
        const long long feature = integer(nd, "feature");
        if (feature < 0 || feature >= feature_count) {
          fail(ErrorKind::kValidation, "model: " + where + ": feature_index " +
                                           std::to_string(feature) + " out of range for " +
                                           std::to_string(feature_count) + " features");
        }
        const long long left = integer(nd, "left");
        const long long right = integer(nd, "right");
        for (long long child : {left, right}) {
          if (child <= id || child >= size) {
            fail(ErrorKind::kValidation, "model: " + where + ": node " + std::to_string(id) +
                                             " has dangling child " + std::to_string(child));
          }
          ++parents[static_cast<std::size_t>(child)];
        }
        node.feature = static_cast<int>(feature);
        node.threshold = number(nd, "threshold");
        node.left = static_cast<int>(left);
        node.right = static_cast<int>(right);
        node.gain = nd.contains("gain") ? number(nd, "gain") : 0.0;
      } else {
        node.weight = number(nd, "weight");
      }
      tree.nodes.push_back(node);
    }
    for (std::size_t id = 1; id < parents.size(); ++id) {
      if (parents[id] != 1) {
        fail(ErrorKind::kValidation, "model: " + where + ": node " + std::to_string(id) +
                                         " is referenced " + std::to_string(parents[id]) +
                                         " times (expected once)");
      }
    }
    model.trees.push_back(std::move(tree));
  }

  model.best_round = static_cast<int>(integer(doc, "best_round"));
  if (model.best_round < -1 || model.best_round >= static_cast<int>(model.trees.size())) {
    bad("best_round out of range");
  }
  model.trained_rounds = doc.contains("trained_rounds")
                             ? static_cast<int>(integer(doc, "trained_rounds"))
                             : static_cast<int>(model.trees.size());
  return model;
}

inline GbtModel deserialize(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("model: parse error: ") + e.what());
  }
  return model_from_json(doc);
}

}  // namespace biomstat
