#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "biomstat/eval_harness.hpp"
#include "oracles.hpp"

using namespace biomstat;

namespace {

// Second implementation of the metric definitions, from the per-class
// confusion view rather than the deepfake-positive one.
struct ReferenceMetrics {
  double balanced, plain, precision, recall, f1, weighted_f1;
};

ReferenceMetrics reference_metrics(std::uint64_t tp, std::uint64_t fp, std::uint64_t tn, std::uint64_t fn) {
  auto safe = [](long double a, long double b) { return b == 0 ? 0.0L : a / b; };
  struct ClassView {
    long double precision, recall, f1, support;
  };
  auto view = [&](std::uint64_t hit, std::uint64_t false_alarm, std::uint64_t miss) {
    ClassView v;
    v.precision = safe(hit, hit + false_alarm);
    v.recall = safe(hit, hit + miss);
    v.f1 = safe(2.0L * v.precision * v.recall, v.precision + v.recall);
    v.support = static_cast<long double>(hit + miss);
    return v;
  };
  const ClassView fake = view(tp, fp, fn);
  const ClassView real = view(tn, fn, fp);
  const long double total = static_cast<long double>(tp + fp + tn + fn);
  return {static_cast<double>((fake.recall + real.recall) / 2),
          static_cast<double>((tp + tn) / total),
          static_cast<double>(fake.precision),
          static_cast<double>(fake.recall),
          static_cast<double>(fake.f1),
          static_cast<double>((fake.support * fake.f1 + real.support * real.f1) / total)};
}

FeatureRow row(const std::string& video, const std::string& identity, int label,
               const FeatureVector& f, const std::string& tag = "synthetic") {
  FeatureRow r;
  r.video_id = video;
  r.identity_id = identity;
  r.generator_tag = tag;
  r.label = label ? Label::kDeepfake : Label::kAuthentic;
  r.frames_used = 100;
  r.features = f;
  return r;
}

// Two videos per identity, one of each label. Feature `signal` separates the
// classes by `gap` standard deviations; the rest is noise.
FeatureTable signal_table(std::size_t identities, std::size_t signal, double gap, std::uint64_t seed,
                          const std::string& tag = "synthetic") {
  Rng rng(seed);
  FeatureTable table;
  for (std::size_t i = 0; i < identities; ++i) {
    for (int label : {0, 1}) {
      FeatureVector f;
      for (double& v : f.values) v = rng.normal();
      f.values[signal] += gap * label;
      table.push_back(row("p" + std::to_string(i) + "_" + std::to_string(label),
                          "p" + std::to_string(i), label, f, tag));
    }
  }
  return table;
}

}  // namespace

TEST(Metrics, HandExamples) {
  const MetricsReport m = compute_metrics({40, 10, 45, 5});
  EXPECT_DOUBLE_EQ(m.precision, 0.8);
  EXPECT_DOUBLE_EQ(m.recall, 40.0 / 45);
  EXPECT_DOUBLE_EQ(m.plain_accuracy, 0.85);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.5 * (40.0 / 45 + 45.0 / 55));
  EXPECT_EQ(m.support_deepfake, 45u);
  EXPECT_EQ(m.support_authentic, 55u);

  const MetricsReport perfect = compute_metrics({5, 0, 5, 0});
  EXPECT_EQ(perfect.accuracy, 1.0);
  EXPECT_EQ(perfect.f1, 1.0);
  EXPECT_EQ(perfect.weighted_f1, 1.0);

  const MetricsReport all_authentic = compute_metrics({0, 0, 7, 3});
  EXPECT_EQ(all_authentic.precision, 0.0);
  EXPECT_EQ(all_authentic.recall, 0.0);
  EXPECT_EQ(all_authentic.f1, 0.0);
  EXPECT_EQ(all_authentic.accuracy, 0.5);

  EXPECT_THROW(compute_metrics({}), Error);
}

TEST(Metrics, AgreeWithReferenceImplementation) {
  Rng rng(17);
  for (int trial = 0; trial < 2000; ++trial) {
    ConfusionCounts c{rng.below(30), rng.below(30), rng.below(30), rng.below(30)};
    if (c.total() == 0) continue;
    const MetricsReport m = compute_metrics(c);
    const ReferenceMetrics r = reference_metrics(c.tp, c.fp, c.tn, c.fn);
    EXPECT_NEAR(m.accuracy, r.balanced, 1e-15);
    EXPECT_NEAR(m.plain_accuracy, r.plain, 1e-15);
    EXPECT_NEAR(m.precision, r.precision, 1e-15);
    EXPECT_NEAR(m.recall, r.recall, 1e-15);
    EXPECT_NEAR(m.f1, r.f1, 1e-15);
    EXPECT_NEAR(m.weighted_f1, r.weighted_f1, 1e-15);
  }
}

TEST(Folds, OneIdentityPerFold) {
  std::vector<GroupMember> members;
  for (int i = 0; i < 5; ++i)
    for (int v = 0; v < 3; ++v) members.push_back({"id" + std::to_string(i) + "v" + std::to_string(v), "id" + std::to_string(i)});
  const FoldPlan plan = group_k_fold(members, 5, 1);
  std::set<int> folds;
  for (const auto& [id, fold] : plan.identity_folds) folds.insert(fold);
  EXPECT_EQ(folds.size(), 5u);
}

TEST(Folds, IdentitiesNeverSplitAcrossFolds) {
  Rng rng(55);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t identities = 2 + rng.below(30);
    const int k = 2 + static_cast<int>(rng.below(std::min<std::size_t>(identities - 1, 9)));
    std::vector<GroupMember> members;
    for (std::size_t i = 0; i < identities; ++i) {
      const std::size_t videos = 1 + rng.below(6);
      for (std::size_t v = 0; v < videos; ++v) {
        members.push_back({"v" + std::to_string(members.size()), "id" + std::to_string(i)});
      }
    }
    rng.shuffle(std::span(members));
    const FoldPlan plan = group_k_fold(members, k, rng.next());
    std::map<std::string, std::set<int>> folds_of_identity;
    for (const GroupMember& m : members) folds_of_identity[m.group_id].insert(plan.fold_of(m.item_id));
    for (const auto& [id, folds] : folds_of_identity) EXPECT_EQ(folds.size(), 1u) << id;
    std::set<int> used;
    for (const auto& [id, fold] : plan.identity_folds) used.insert(fold);
    EXPECT_EQ(static_cast<int>(used.size()), k);
  }
}

// Identity sizes 10, 9, ..., 1 into 2 folds: the largest identities are
// dealt alternately, so the folds hold 30 and 25 videos.
TEST(Folds, BalancesImbalancedIdentities) {
  std::vector<GroupMember> members;
  for (int size = 10; size >= 1; --size)
    for (int v = 0; v < size; ++v) members.push_back({"s" + std::to_string(size) + "v" + std::to_string(v), "s" + std::to_string(size)});
  const FoldPlan plan = group_k_fold(members, 2, 3);
  int fold0 = 0;
  for (const auto& [video, fold] : plan.assignments) fold0 += fold == 0;
  EXPECT_EQ(fold0, 30);
  EXPECT_EQ(plan.identity_folds.at("s10"), 0);
  EXPECT_EQ(plan.identity_folds.at("s9"), 1);
}

TEST(Folds, Errors) {
  EXPECT_THROW(group_k_fold({{"a", "x"}, {"b", "y"}}, 3, 0), Error);
  EXPECT_THROW(group_k_fold({{"a", "x"}, {"a", "y"}}, 2, 0), Error);
  EXPECT_THROW(group_k_fold({{"a", ""}, {"b", "y"}}, 2, 0), Error);
  EXPECT_THROW(group_k_fold({{"a", "x"}, {"b", "y"}}, 1, 0), Error);
}

TEST(Folds, SeedChangesAssignmentDeterministically) {
  std::vector<GroupMember> members;
  for (int i = 0; i < 20; ++i) members.push_back({"v" + std::to_string(i), "id" + std::to_string(i)});
  EXPECT_EQ(group_k_fold(members, 4, 9).assignments, group_k_fold(members, 4, 9).assignments);
  EXPECT_NE(group_k_fold(members, 4, 9).assignments, group_k_fold(members, 4, 10).assignments);
}

TEST(FeatureCsv, RoundTripIsExact) {
  FeatureTable table = signal_table(4, 0, 1.0, 5);
  table[0].features.values[3] = 1.0 / 3.0;
  table[1].features.values[8] = 1e-300;
  std::stringstream ss;
  write_features_csv(ss, table);
  const FeatureTable back = read_features_csv(ss);
  ASSERT_EQ(back.size(), table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    EXPECT_EQ(back[i].video_id, table[i].video_id);
    EXPECT_EQ(back[i].label, table[i].label);
    EXPECT_EQ(back[i].features, table[i].features);
  }
  std::stringstream bad("video_id,label\n");
  EXPECT_THROW(read_features_csv(bad), Error);
}

TEST(Experiment, LearnsSignalOnHeldOutIdentities) {
  const FeatureTable table = signal_table(80, 2, 4.0, 21);
  ExperimentSpec spec;
  const ExperimentResult r = run_experiment(table, spec);
  EXPECT_EQ(r.eval_identities, 24u);
  EXPECT_EQ(r.train_identities, 56u);
  EXPECT_GE(r.metrics.accuracy, 0.9);
}

TEST(Experiment, Reproducible) {
  const FeatureTable table = signal_table(40, 1, 1.0, 22);
  ExperimentSpec spec;
  spec.config.rng_seed = 4;
  EXPECT_EQ(experiment_to_json(run_experiment(table, spec)).dump(),
            experiment_to_json(run_experiment(table, spec)).dump());
}

TEST(Experiment, TagSelectorsPickSides) {
  FeatureTable table = signal_table(30, 0, 3.0, 23, "gen_a");
  const FeatureTable other = signal_table(30, 0, 3.0, 24, "gen_b");
  for (FeatureRow r : other) {
    r.video_id += "b";
    r.identity_id += "b";
    table.push_back(r);
  }
  ExperimentSpec spec;
  spec.train_selector = TagSelector::parse("gen_a");
  spec.eval_selector = TagSelector::parse("gen_b");
  const ExperimentResult r = run_experiment(table, spec);
  EXPECT_EQ(r.train_name, "gen_a");
  EXPECT_EQ(r.eval_name, "gen_b");
  EXPECT_LE(r.train_identities, 30u);
  EXPECT_LE(r.eval_identities, 30u);
  EXPECT_GT(r.eval_identities, 0u);
  EXPECT_TRUE(TagSelector::parse("*").matches("anything"));
  EXPECT_THROW(TagSelector::parse(","), Error);
}

TEST(Experiment, RejectsIdentityLeakage) {
  const FeatureTable table = signal_table(10, 0, 3.0, 25);
  std::vector<std::size_t> train_rows = {0, 1, 2, 3, 4, 5};
  std::vector<std::size_t> eval_rows = {5, 6, 7, 8};
  try {
    run_experiment_on_tables(table, train_rows, table, eval_rows, ExperimentSpec{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kLeakage);
    EXPECT_NE(std::string(e.what()).find("p2"), std::string::npos);
  }
}

TEST(Experiment, RejectsSingleClassEvaluation) {
  const FeatureTable table = signal_table(10, 0, 3.0, 26);
  std::vector<std::size_t> train_rows = {0, 1, 2, 3, 4, 5, 6, 7};
  const std::vector<std::size_t> eval_rows = {8, 10};  // both authentic
  try {
    run_experiment_on_tables(table, train_rows, table, eval_rows, ExperimentSpec{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDegenerateLabels);
  }
}

TEST(CrossValidate, PoolsEveryRowOnce) {
  const FeatureTable table = signal_table(25, 4, 3.0, 27);
  const CvResult cv = cross_validate(table, all_rows(table), FeatureMask::all(), TrainConfig{}, 5);
  EXPECT_EQ(cv.counts.total(), table.size());
  EXPECT_EQ(cv.fold_counts.size(), 5u);
  EXPECT_GT(cv.metrics.accuracy, 0.75);
}

TEST(GridSearch, PicksHighestScore) {
  const FeatureTable table = signal_table(20, 0, 2.0, 28);
  std::vector<TrainConfig> grid(2);
  grid[0].max_depth = 1;
  grid[1].max_depth = 3;
  const auto result = grid_search(table, all_rows(table), FeatureMask::all(), grid, 4);
  ASSERT_EQ(result.weighted_f1.size(), 2u);
  const std::size_t best = result.weighted_f1[1] > result.weighted_f1[0] ? 1 : 0;
  EXPECT_EQ(result.best, grid[best]);
}

TEST(SubsetStudy, RanksAll511Subsets) {
  const FeatureTable table = signal_table(30, 5, 3.0, 29);
  TrainConfig config;
  config.max_trees = 10;
  const SubsetStudy study = feature_subset_study(table, all_rows(table), config, 3, 2);
  ASSERT_EQ(study.ranking.size(), 511u);
  std::set<std::uint32_t> masks;
  for (const SubsetScore& s : study.ranking) masks.insert(s.mask.bits());
  EXPECT_EQ(masks.size(), 511u);
  for (std::size_t i = 1; i < study.ranking.size(); ++i) {
    EXPECT_FALSE(ranks_before(study.ranking[i], study.ranking[i - 1]));
  }
  EXPECT_TRUE(study.top(1)[0].mask.contains(5));
  EXPECT_EQ(study.bottom(10).size(), 10u);
  const std::string table_text = format_subset_table(study, 3);
  EXPECT_NE(table_text.find("Rank"), std::string::npos);
  EXPECT_NE(table_text.find("511"), std::string::npos);
}

TEST(Reports, ExperimentTableLayout) {
  ExperimentResult r;
  r.train_name = "a";
  r.eval_name = "b";
  r.max_frames = 500;
  r.train_identities = 7;
  r.eval_identities = 3;
  r.metrics = compute_metrics({3, 1, 4, 0});
  const std::string text = format_experiment_table({r});
  EXPECT_NE(text.find("Train  Eval  Frames"), std::string::npos) << text;
  EXPECT_NE(text.find("90.0"), std::string::npos);
  const auto j = experiment_to_json(r);
  EXPECT_EQ(j["schema"], kExperimentSchema);
  EXPECT_EQ(j["max_frames"], 500);
  EXPECT_EQ(j["tp"], 3);
}
