#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"
#include "mvad/scoring.hpp"
#include "support.hpp"

namespace mvad {
namespace {

namespace fs = std::filesystem;
using testing::error_kind_of;
using testing::TempDir;

const fs::path kFixtures = MVAD_TEST_FIXTURES;

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "mvad");
  ::testing::internal::CaptureStdout();
  ::testing::internal::CaptureStderr();
  Outcome o;
  o.code = cli::run(args);
  o.out = ::testing::internal::GetCapturedStdout();
  o.err = ::testing::internal::GetCapturedStderr();
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<nlohmann::json> run_log(const fs::path& dir) {
  std::vector<nlohmann::json> out;
  std::istringstream in(slurp(dir / "run_log.jsonl"));
  for (std::string line; std::getline(in, line);) out.push_back(nlohmann::json::parse(line));
  return out;
}

std::size_t line_count(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

TEST(CliEval, PerfectRankingFixturePrintsUnitAuroc) {
  TempDir dir;
  const Outcome o = invoke({"eval", "--scores", (kFixtures / "eval/perfect_scores.csv").string(),
                            "--out", (dir / "metrics.json").string()});
  ASSERT_EQ(o.code, cli::kExitOk) << o.err;
  EXPECT_NE(o.out.find("auroc 1.0\n"), std::string::npos) << o.out;
  EXPECT_NE(o.out.find("auprc 1.0\n"), std::string::npos) << o.out;
  const auto j = nlohmann::json::parse(slurp(dir / "metrics.json"));
  EXPECT_EQ(j.at("auroc").get<double>(), 1.0);
  EXPECT_EQ(j.at("auprc").get<double>(), 1.0);
  EXPECT_EQ(j.at("n_pos").get<int>(), 2);
  EXPECT_EQ(j.at("n_neg").get<int>(), 2);
  EXPECT_EQ(j.at("variant").get<std::string>(), "full");
  EXPECT_EQ(j.at("seed").get<int>(), 0);

  const auto log = run_log(dir.path());
  ASSERT_EQ(log.size(), 1u);
  EXPECT_EQ(log[0].at("command"), "eval");
  EXPECT_EQ(log[0].at("exit_code"), 0);
  for (const char* key : {"config_digest", "seed", "wall_time_s", "git_describe"}) {
    EXPECT_TRUE(log[0].contains(key)) << key;
  }
}

TEST(CliEval, OtherFixtures) {
  TempDir dir;
  struct Case {
    const char* scores;
    const char* labels;
    const char* auroc;
    const char* auprc;
  };
  const Case cases[] = {
      // Ranking neg, neg, pos, pos: 1/2 * 1/3 + 1/2 * 2/4 = 5/12.
      {"inverted_scores.csv", nullptr, "auroc 0.0\n", "auprc 0.41666666666666663\n"},
      {"tied_scores.csv", nullptr, "auroc 0.5\n", "auprc 0.5\n"},
      {"interleaved_scores.csv", "interleaved_labels.txt", "auroc 1.0\n", "auprc 1.0\n"},
  };
  for (const Case& c : cases) {
    std::vector<std::string> args{"eval", "--scores", (kFixtures / "eval" / c.scores).string(),
                                  "--out", (dir / "m.json").string(), "--variant", "no-cc",
                                  "--seed", "7"};
    if (c.labels) {
      args.push_back("--labels");
      args.push_back((kFixtures / "eval" / c.labels).string());
    }
    const Outcome o = invoke(args);
    ASSERT_EQ(o.code, cli::kExitOk) << c.scores << o.err;
    EXPECT_NE(o.out.find(c.auroc), std::string::npos) << c.scores << ": " << o.out;
    EXPECT_NE(o.out.find(c.auprc), std::string::npos) << c.scores << ": " << o.out;
    const auto j = nlohmann::json::parse(slurp(dir / "m.json"));
    EXPECT_EQ(j.at("variant").get<std::string>(), "no_cc");
    EXPECT_EQ(j.at("seed").get<int>(), 7);
  }
  EXPECT_EQ(run_log(dir.path()).size(), 3u);
}

TEST(CliEval, MissingLabelsIsADataError) {
  TempDir dir;
  const Outcome o = invoke({"eval", "--scores", (kFixtures / "eval/interleaved_scores.csv").string(),
                            "--out", (dir / "m.json").string()});
  EXPECT_EQ(o.code, cli::kExitData);
  EXPECT_NE(o.err.find("--labels"), std::string::npos) << o.err;
  const Outcome missing = invoke({"eval", "--scores", (dir / "none.csv").string(), "--out",
                                  (dir / "m.json").string()});
  EXPECT_EQ(missing.code, cli::kExitData);
  EXPECT_NE(missing.err.find("none.csv"), std::string::npos) << missing.err;
}

TEST(CliUsage, BadInvocationsExitTwo) {
  EXPECT_EQ(invoke({}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"eval", "--scores", "x.csv"}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"eval", "--scores", "x.csv", "--out", "m.json", "--bogus", "1"}).code,
            cli::kExitUsage);
  EXPECT_EQ(invoke({"--help"}).code, cli::kExitOk);
}

TEST(CliTrain, SingleViewManifestExitsThree) {
  TempDir dir;
  const Outcome o = invoke({"train", "--manifest", (kFixtures / "single_view/manifest.json").string(),
                            "--out", (dir / "model").string()});
  EXPECT_EQ(o.code, cli::kExitData);
  EXPECT_NE(o.err.find("K >= 2"), std::string::npos) << o.err;
}

TEST(CliTrain, InvalidConfigExitsTwo) {
  TempDir dir;
  {
    std::ofstream out(dir / "cfg.json");
    out << R"({"tau": 0})";
  }
  const Outcome o = invoke({"train", "--manifest", (kFixtures / "single_view/manifest.json").string(),
                            "--config", (dir / "cfg.json").string(), "--out",
                            (dir / "model").string()});
  EXPECT_EQ(o.code, cli::kExitUsage);
  EXPECT_NE(o.err.find("tau"), std::string::npos) << o.err;
}

void write_tiny_config(const fs::path& path) {
  std::ofstream out(path);
  out << R"({"stage1_epochs": 3, "stage2_epochs": 3, "batch_size": 16, "hidden_dims": [12],
            "latent_dim": 4, "pca_dim": 6, "estimator_hidden": 8, "backbone_lr": 0.003,
            "allocation_lr": 0.003})";
}

class CliPipelineTest : public ::testing::Test {
 protected:
  void SetUp() override {
    write_tiny_config(dir_ / "cfg.json");
    const Outcome g = invoke({"generate-synthetic", "--out", (dir_ / "data").string(), "--views",
                              "3", "--dim", "10", "--n-normal", "150", "--n-anomaly", "16",
                              "--latent-rank", "3", "--noise", "0.05", "--mode", "mixed", "--seed",
                              "4"});
    ASSERT_EQ(g.code, cli::kExitOk) << g.err;
  }

  fs::path manifest() const { return dir_ / "data/manifest.json"; }
  fs::path config() const { return dir_ / "cfg.json"; }

  TempDir dir_;
};

TEST_F(CliPipelineTest, GenerateTrainScoreEvalInspect) {
  EXPECT_TRUE(fs::exists(dir_ / "data/labels.txt"));
  const Outcome t = invoke({"train", "--manifest", manifest().string(), "--config",
                            config().string(), "--out", (dir_ / "model").string(), "--seed", "2",
                            "--quiet"});
  ASSERT_EQ(t.code, cli::kExitOk) << t.err;
  EXPECT_TRUE(fs::exists(dir_ / "model/meta.json"));
  const fs::path test_manifest = dir_ / "model/test_split/manifest.json";
  ASSERT_TRUE(fs::exists(test_manifest));

  const Outcome s = invoke({"score", "--model", (dir_ / "model").string(), "--manifest",
                            test_manifest.string(), "--out", (dir_ / "out/scores.csv").string()});
  ASSERT_EQ(s.code, cli::kExitOk) << s.err;
  const ScoreBreakdown b = read_scores_csv(dir_ / "out/scores.csv");
  ASSERT_TRUE(b.labels.has_value());
  EXPECT_EQ(b.num_samples(), 45u + 16u);

  const Outcome e = invoke({"eval", "--scores", (dir_ / "out/scores.csv").string(), "--out",
                            (dir_ / "out/metrics.json").string(), "--seed", "2"});
  ASSERT_EQ(e.code, cli::kExitOk) << e.err;
  const auto j = nlohmann::json::parse(slurp(dir_ / "out/metrics.json"));
  EXPECT_EQ(j.at("n_pos").get<int>(), 16);
  EXPECT_EQ(j.at("auroc").get<double>(), auroc(b.fused, *b.labels));

  const Outcome i = invoke({"inspect-model", "--model", (dir_ / "model").string()});
  ASSERT_EQ(i.code, cli::kExitOk) << i.err;
  EXPECT_NE(i.out.find("10 -> 12 -> 4 -> 12 -> 10"), std::string::npos) << i.out;

  // Scoring twice reproduces the file byte for byte.
  ASSERT_EQ(invoke({"score", "--model", (dir_ / "model").string(), "--manifest",
                    test_manifest.string(), "--out", (dir_ / "again/scores.csv").string()})
                .code,
            cli::kExitOk);
  EXPECT_EQ(slurp(dir_ / "again/scores.csv"), slurp(dir_ / "out/scores.csv"));

  const auto train_log = run_log(dir_ / "model");
  ASSERT_GE(train_log.size(), 2u);
  EXPECT_EQ(train_log[0].at("command"), "train");
  EXPECT_EQ(train_log[0].at("seed"), 2);
  EXPECT_EQ(train_log[0].at("config_digest").get<std::string>().size(), 16u);
  EXPECT_EQ(run_log(dir_ / "data").at(0).at("command"), "generate-synthetic");
  EXPECT_EQ(run_log(dir_ / "out").size(), 2u);
}

TEST_F(CliPipelineTest, ScoreRejectsForeignManifest) {
  ASSERT_EQ(invoke({"train", "--manifest", manifest().string(), "--config", config().string(),
                    "--out", (dir_ / "model").string(), "--quiet"})
                .code,
            cli::kExitOk);
  const Outcome o = invoke({"score", "--model", (dir_ / "model").string(), "--manifest",
                            (kFixtures / "single_view/manifest.json").string(), "--out",
                            (dir_ / "s.csv").string()});
  EXPECT_EQ(o.code, cli::kExitData);
}

TEST_F(CliPipelineTest, ExperimentDriversWriteTables) {
  const Outcome a = invoke({"ablate", "--manifest", manifest().string(), "--config",
                            config().string(), "--variants", "full,no-aa,no-cc,no-ae", "--seeds",
                            "2", "--out", (dir_ / "ablate").string(), "--quiet"});
  ASSERT_EQ(a.code, cli::kExitOk) << a.err;
  EXPECT_EQ(line_count(slurp(dir_ / "ablate/ablation.csv")), 1u + 4u * 2u);
  const auto summary = nlohmann::json::parse(slurp(dir_ / "ablate/ablation_summary.json"));
  ASSERT_EQ(summary.size(), 4u);
  EXPECT_EQ(summary[2].at("variant"), "no_cc");
  EXPECT_TRUE(summary[0].contains("auroc_std"));

  const Outcome r = invoke({"robustness", "--manifest", manifest().string(), "--config",
                            config().string(), "--ratios", "0:0.1:0.05", "--out",
                            (dir_ / "robust").string(), "--quiet"});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const std::string rob = slurp(dir_ / "robust/robustness.csv");
  EXPECT_EQ(line_count(rob), 4u);
  EXPECT_EQ(rob.substr(0, rob.find('\n')), "ratio,injected,auroc,auprc");
  EXPECT_NE(rob.find("\n0.05,5,"), std::string::npos) << rob;

  const Outcome s = invoke({"sensitivity", "--manifest", manifest().string(), "--config",
                            config().string(), "--alpha", "1:3:1", "--beta", "0.1,0.5", "--out",
                            (dir_ / "sens").string(), "--quiet"});
  ASSERT_EQ(s.code, cli::kExitOk) << s.err;
  const std::string grid = slurp(dir_ / "sens/sensitivity.csv");
  EXPECT_EQ(line_count(grid), 1u + 6u);
  EXPECT_NE(grid.find("\n3,0.5,"), std::string::npos) << grid;

  EXPECT_EQ(invoke({"ablate", "--manifest", manifest().string(), "--variants", "bogus", "--out",
                    (dir_ / "x").string()})
                .code,
            cli::kExitUsage);
  EXPECT_EQ(invoke({"robustness", "--manifest", manifest().string(), "--ratios", "0,0.7",
                    "--config", config().string(), "--out", (dir_ / "y").string(), "--quiet"})
                .code,
            cli::kExitUsage);
}

TEST(ParseNumberList, ListsAndRanges) {
  EXPECT_EQ(cli::parse_number_list("0,0.02,1e-1"), (std::vector<double>{0, 0.02, 0.1}));
  EXPECT_EQ(cli::parse_number_list("1:10:1").size(), 10u);
  const auto betas = cli::parse_number_list("0.1:1.0:0.1");
  ASSERT_EQ(betas.size(), 10u);
  EXPECT_NEAR(betas.back(), 1.0, 1e-12);
  EXPECT_EQ(cli::parse_number_list("2:2:1"), std::vector<double>{2});
  for (const char* bad : {"", "a", "1,,2", "1:2", "3:1:1", "0:1:0", "1:2:3:4", "nan"}) {
    EXPECT_EQ(error_kind_of([&] { cli::parse_number_list(bad); }), ErrorKind::kConfigError) << bad;
  }
}

}  // namespace
}  // namespace mvad
