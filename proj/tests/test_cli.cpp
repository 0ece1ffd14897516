#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "biomstat_cli.hpp"
#include "temp_dir.hpp"

using namespace biomstat;
using biomstat::support::TempDir;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "biomstat");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

// One small synthetic dataset shared by the tests in this file.
class CliFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("biomstat-cli");
    const CliRun r = run({"--seed", "3", "synth", (dir_->path() / "ds").string(), "--identities", "12",
                       "--frames", "300", "--dim", "64"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() { delete dir_; }
  static std::string path(const std::string& rel) { return (dir_->path() / rel).string(); }
  static TempDir* dir_;
};

TempDir* CliFixture::dir_ = nullptr;

}  // namespace

TEST_F(CliFixture, IngestSummarisesDataset) {
  const CliRun r = run({"ingest", path("ds")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("records: 24"), std::string::npos);
  EXPECT_NE(r.out.find("identities: 12"), std::string::npos);
  EXPECT_NE(r.out.find("deepfake: 12"), std::string::npos);
  const CliRun j = run({"ingest", path("ds"), "--json"});
  EXPECT_EQ(nlohmann::json::parse(j.out)["records"], 24);
}

TEST_F(CliFixture, FeaturizeTrainPredict) {
  CliRun r = run({"featurize", path("ds"), "-o", path("features.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run({"train", path("features.csv"), "-o", path("model.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("feature importance"), std::string::npos);

  r = run({"predict", path("model.json"), path("ds/videos/id0000_v0.bmsq")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("label: authentic"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("N: 300"), std::string::npos);
  r = run({"predict", path("model.json"), path("ds/videos/id0000_v1.bmsq"), "--json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["label"], "deepfake");
  EXPECT_GT(j["probability"].get<double>(), 0.5);
  EXPECT_EQ(j["video_id"], "id0000_v1");
}

TEST_F(CliFixture, FeaturizeIgnoresThreadCount) {
  const CliRun a = run({"--threads", "1", "featurize", path("ds")});
  const CliRun b = run({"--threads", "4", "featurize", path("ds"), "--mode", "exact"});
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  ::setenv("BIOMSTAT_THREADS", "3", 1);
  const CliRun c = run({"featurize", path("ds")});
  ::unsetenv("BIOMSTAT_THREADS");
  EXPECT_EQ(a.out, c.out);
  EXPECT_EQ(count_lines(a.out), 25u);
}

TEST_F(CliFixture, EmptyModelWarns) {
  nlohmann::json model = {{"format_version", 1}, {"base_score", 0.5},  {"learning_rate", 0.1},
                          {"best_round", -1},    {"trained_rounds", 0}, {"trees", nlohmann::json::array()}};
  model["feature_names"] = std::vector<std::string>(kFeatureNames.begin(), kFeatureNames.end());
  support::write_file(path("empty.json"), model.dump());
  const CliRun r = run({"predict", path("empty.json"), path("ds/videos/id0001_v0.bmsq"), "--json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["probability"], 0.5);
  EXPECT_EQ(j["label"], "deepfake");
  EXPECT_NE(r.err.find("non-discriminative"), std::string::npos);
}

TEST_F(CliFixture, MaxFramesTruncates) {
  SynthParams p;
  p.dim = 16;
  p.n_frames = 700;
  write_sequence_file(generate_video(p, Label::kAuthentic), path("long.bmsq"));
  CliRun r = run({"featurize", path("ds"), "-o", path("f2.csv")});
  r = run({"train", path("f2.csv"), "-o", path("m2.json"), "--max-trees", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run({"predict", path("m2.json"), path("long.bmsq"), "--max-frames", "500"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("N: 500"), std::string::npos) << r.out;
}

TEST_F(CliFixture, TooFewFramesExitsWithDegenerateCode) {
  const std::vector<float> rows = {1, 0, 0, 1};
  write_sequence_file(EmbeddingSequence::create("short", 2, {0, 1}, rows), path("short.bmsq"));
  CliRun r = run({"featurize", path("ds"), "-o", path("f3.csv")});
  r = run({"train", path("f3.csv"), "-o", path("m3.json"), "--max-trees", "3"});
  ASSERT_EQ(r.code, 0);
  r = run({"predict", path("m3.json"), path("short.bmsq")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("need at least 3"), std::string::npos) << r.err;
}

TEST_F(CliFixture, MissingInputExitsOne) {
  EXPECT_EQ(run({"train", path("missing.csv"), "-o", path("m.json")}).code, 1);
  EXPECT_EQ(run({"ingest", path("nowhere")}).code, 1);
}

TEST_F(CliFixture, MalformedModelExitsOne) {
  support::write_file(path("bad.json"), "{\"format_version\": 1");
  const CliRun r = run({"predict", path("bad.json"), path("ds/videos/id0000_v0.bmsq")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("bad.json"), std::string::npos);
}

TEST_F(CliFixture, EvaluatePrintsTableRow) {
  const CliRun r = run({"evaluate", path("ds"), "--train-tag", "synthetic", "--eval-tag", "synthetic"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(r.out), 2u) << r.out;
  EXPECT_NE(r.out.find("Acc"), std::string::npos);
  EXPECT_NE(r.out.find("synthetic"), std::string::npos);
  const CliRun sweep = run({"evaluate", path("ds"), "--sweep-frames", "100,300", "--json"});
  ASSERT_EQ(sweep.code, 0) << sweep.err;
  EXPECT_EQ(count_lines(sweep.out), 2u);
  const auto first = nlohmann::json::parse(sweep.out.substr(0, sweep.out.find('\n')));
  EXPECT_EQ(first["max_frames"], 100);
  for (const char* key : {"accuracy", "precision", "recall", "f1"}) EXPECT_TRUE(first.contains(key));
}

TEST_F(CliFixture, EvaluateRejectsSingleClassSelection) {
  const CliRun r = run({"evaluate", path("ds"), "--train-tag", "nothing"});
  EXPECT_EQ(r.code, 2) << r.err;
}

TEST_F(CliFixture, SubsetsEmitAllRows) {
  const CliRun r = run({"subsets", path("ds"), "-k", "3", "--max-trees", "5", "--json",
                     "--jsonl", path("subsets.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(r.out), 511u);
  EXPECT_EQ(support::read_file(path("subsets.jsonl")), r.out);
  const auto top = nlohmann::json::parse(r.out.substr(0, r.out.find('\n')));
  EXPECT_EQ(top["rank"], 1);
  EXPECT_EQ(top["schema"], "biomstat.subset/1");
}

TEST_F(CliFixture, HistogramCountsEveryPair) {
  const CliRun r = run({"hist", path("ds/videos/id0002_v1.bmsq"), "--bins", "100"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "bin_lo,bin_hi,count");
  std::uint64_t total = 0;
  std::size_t bins = 0;
  while (std::getline(in, line)) {
    total += std::stoull(line.substr(line.rfind(',') + 1));
    ++bins;
  }
  EXPECT_EQ(bins, 100u);
  EXPECT_EQ(total, 300u * 299u / 2);
}

TEST(Cli, RejectsUnknownFlag) {
  EXPECT_EQ(run({"ingest", ".", "--bogus"}).code, 1);
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, ConfigFileSuppliesOptions) {
  TempDir dir;
  support::write_file(dir / "cfg.toml", "seed = 9\n[synth]\nidentities = 3\nframes = 20\ndim = 8\n");
  const CliRun r = run({"--config", (dir / "cfg.toml").string(), "synth", (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_manifest(dir / "out").records.size(), 6u);
  EXPECT_EQ(read_sequence_file(dir / "out/videos/id0000_v0.bmsq").frame_count(), 20u);
}
