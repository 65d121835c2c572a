#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(GENREFOOL_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("gf-cli-" + std::to_string(::getpid()));
    fs::create_directories(dir_);
    ASSERT_EQ(run("synth --genres 3 --docs-per-genre 12 --test-docs-per-genre 4 --dim 16 --seed 5 --out-dir " +
                  (dir_ / "syn").string()),
              0);
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static std::string p(const std::string& rel) { return (dir_ / rel).string(); }
  static std::string stub(const std::string& labels) {
    return "'exec:" + std::string(FAKE_VICTIM) + " --labels " + labels + "'";
  }

  static fs::path dir_;
};

fs::path Cli::dir_;

}  // namespace

TEST_F(Cli, SynthWritesManifest) {
  const auto m = json::parse(slurp(p("syn/manifest.json")));
  EXPECT_EQ(m["command"], "synth");
  EXPECT_EQ(m["seeds"]["seed"], 5);
  EXPECT_EQ(m["outputs"].size(), 4u);
  EXPECT_TRUE(fs::exists(p("syn/embeddings.vec")));
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("train --out x.json"), 2);  // missing --corpus
  EXPECT_EQ(run("attack --corpus " + p("syn/train.jsonl") + " --method nonsense"), 2);
  EXPECT_EQ(run("attack --corpus " + p("syn/train.jsonl") + " --out-dir " + p("x")), 2);  // no embeddings
  EXPECT_EQ(run("train --corpus " + p("syn/train.jsonl") + " --features embed --out " + p("m.json")), 2);
}

TEST_F(Cli, RuntimeErrorsExitOne) {
  EXPECT_EQ(run("train --corpus " + p("does-not-exist.jsonl") + " --out " + p("m.json")), 1);
  std::ofstream(p("broken.jsonl")) << "{\"id\": 1}\n";
  EXPECT_EQ(run("train --corpus " + p("broken.jsonl") + " --out " + p("m.json")), 1);
}

TEST_F(Cli, TrainIsReproducible) {
  const std::string base = "train --corpus " + p("syn/train.jsonl") + " --epochs 5 --seed 3 --out ";
  ASSERT_EQ(run(base + p("a.json")), 0);
  ASSERT_EQ(run(base + p("b.json")), 0);
  EXPECT_EQ(slurp(p("a.json")), slurp(p("b.json")));
  const auto ma = json::parse(slurp(p("a.json.manifest.json")));
  const auto mb = json::parse(slurp(p("b.json.manifest.json")));
  EXPECT_EQ(ma["outputs"][0]["digest"], mb["outputs"][0]["digest"]);
  EXPECT_EQ(ma["inputs"], mb["inputs"]);
  EXPECT_EQ(ma["flags"]["epochs"], 5);
}

TEST_F(Cli, KeywordsAgainstConstantExternalVictim) {
  ASSERT_EQ(run("attack --corpus " + p("syn/train.jsonl") + " --method keywords --percent 100 --folds 3 --victim " +
                stub("Argument,Fiction,Instruction") + " --out-dir " + p("kw")),
            0);
  const auto csv = slurp(p("kw/report.csv"));
  std::istringstream lines(csv);
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  EXPECT_NE(row.find("keywords,untargeted,"), std::string::npos);
  // broken column is zero
  std::vector<std::string> cols;
  std::stringstream ss(row);
  for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
  ASSERT_GE(cols.size(), 9u);
  EXPECT_EQ(cols[8], "0");
  const auto m = json::parse(slurp(p("kw/manifest.json")));
  EXPECT_EQ(m["partial"], false);
}

TEST_F(Cli, TargetedOnAllCorrectVictimReportsZeroAttackable) {
  {
    std::ofstream c(p("labelled.tsv"));
    const char* labels[] = {"Argument", "Fiction", "Instruction"};
    for (int i = 0; i < 12; ++i)
      c << "d" << i << '\t' << labels[i % 3] << '\t' << "some " << labels[i % 3] << " text here\n";
  }
  ASSERT_EQ(run("attack --corpus " + p("labelled.tsv") + " --labels Argument,Fiction,Instruction --mode targeted"
                " --folds 3 --embeddings " + p("syn/embeddings.vec") + " --victim " + stub("Argument,Fiction,Instruction") +
                " --out-dir " + p("tg")),
            0);
  EXPECT_NE(slurp(p("tg/report.md")).find("0 attackable"), std::string::npos);
}

TEST_F(Cli, DeadExternalVictimIsPartialAndExitsOne) {
  const std::string v = "'exec:" + std::string(FAKE_VICTIM) + " --labels Argument,Fiction,Instruction --die-after 3'";
  EXPECT_EQ(run("attack --corpus " + p("syn/train.jsonl") + " --method keywords --percent 100 --folds 3 --jobs 1 --victim " +
                v + " --timeout 5 --out-dir " + p("dead")),
            1);
  const auto m = json::parse(slurp(p("dead/manifest.json")));
  EXPECT_EQ(m["partial"], true);
  EXPECT_FALSE(m["error"].get<std::string>().empty());
}

TEST_F(Cli, TextfoolerCampaignAndHarden) {
  ASSERT_EQ(run("attack --corpus " + p("syn/train.jsonl") + " --embeddings " + p("syn/embeddings.vec") +
                " --k 10 --sent-threshold 0 --sent-threshold 0.84 --folds 3 --epochs 5 --jobs 2 --out-dir " + p("tf")),
            0);
  for (const char* f : {"archive.jsonl", "report.csv", "report.md", "diffs.md", "manifest.json"})
    EXPECT_TRUE(fs::exists(p(std::string("tf/") + f))) << f;
  ASSERT_EQ(run("harden --train " + p("syn/train.jsonl") + " --test " + p("syn/test.jsonl") + " --archive " +
                p("tf/archive.jsonl") + " --epochs 5 --seeds 1 2 --out-dir " + p("hd")),
            0);
  const auto md = slurp(p("hd/comparison.md"));
  EXPECT_NE(md.find("Robust"), std::string::npos);
  EXPECT_TRUE(fs::exists(p("hd/robust_model.json")));

  // Replaying the attack reproduces the archive byte for byte.
  const auto before = slurp(p("tf/archive.jsonl"));
  ASSERT_EQ(run("replay " + p("tf/manifest.json")), 0);
  EXPECT_EQ(slurp(p("tf/archive.jsonl")), before);
}

TEST_F(Cli, HardenWithEmptyArchiveIsDegenerate) {
  std::ofstream(p("empty.jsonl")).close();
  ASSERT_EQ(run("harden --train " + p("syn/train.jsonl") + " --test " + p("syn/test.jsonl") + " --archive " +
                p("empty.jsonl") + " --epochs 3 --seeds 1 --out-dir " + p("hd0")),
            0);
  EXPECT_EQ(slurp(p("hd0/base_model.json")), slurp(p("hd0/robust_model.json")));
}
