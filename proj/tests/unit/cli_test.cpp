/**
 * @file cli_test.cpp
 * @brief End-to-end runs of the command-line tool on small temporary corpora.
 */

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "muspike/cli.h"
#include "muspike/metrics.h"
#include "muspike/stats.h"
#include "test_util.h"

namespace muspike::cli {
namespace {

namespace fs = std::filesystem;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  fs::path root;

  void SetUp() override {
    root = fs::temp_directory_path() / ("muspike_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(root);
    Rng rng(21);
    for (const char* ds : {"JSB", "POP909"}) {
      for (const char* src : {"Human", "S-LSTM"}) {
        const fs::path d = root / "corpus" / ds / src;
        fs::create_directories(d);
        for (int i = 0; i < 3; ++i) {
          const auto bytes = write_midi(testing::grid_score(rng, 30, 4));
          std::ofstream(d / ("p" + std::to_string(i) + ".mid"), std::ios::binary)
              .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        }
      }
    }
  }
  void TearDown() override { fs::remove_all(root); }
  std::string at(const std::string& rel) const { return (root / rel).string(); }
};

TEST_F(CliTest, UsageErrorsNameTheFlag) {
  auto r = invoke({"tokenize", at("corpus")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--vocab"), std::string::npos);
  r = invoke({"train-toy", "--corpus", at("corpus"), "--out", at("m.ckpt"), "--epochs", "many"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--epochs"), std::string::npos);
  r = invoke({"study", "simulate", "--participants", "4,4"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--participants"), std::string::npos);
  EXPECT_EQ(invoke({"bogus"}).code, 2);
  EXPECT_EQ(invoke({"--help"}).code, 0);
}

TEST_F(CliTest, DomainErrorsPrintTheErrorName) {
  std::ofstream(root / "corpus" / "JSB" / "Human" / "bad.mid") << "not midi";
  const auto r = invoke({"ingest", at("corpus")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("MalformedHeader"), std::string::npos);
  EXPECT_NE(r.out.find("fail\t"), std::string::npos);
  EXPECT_EQ(invoke({"analyze", "--responses", at("missing.csv")}).code, 1);
}

TEST_F(CliTest, TokenizeTrainGenerate) {
  ASSERT_EQ(invoke({"ingest", at("corpus")}).code, 0);
  auto r = invoke({"tokenize", at("corpus"), "--vocab", at("vocab.txt"), "--out", at("tokens")});
  ASSERT_EQ(r.code, 0) << r.err;
  const Vocab vocab = Vocab::parse(slurp(root / "vocab.txt"));
  const auto dump = slurp(root / "tokens" / "JSB" / "Human" / "p0.tokens");
  EXPECT_FALSE(read_token_dump(dump, vocab).empty());

  r = invoke({"train-toy", "--corpus", at("corpus"), "--epochs", "2", "--seed", "3", "--hidden", "16", "--enc", "16",
              "--out", at("m.ckpt")});
  ASSERT_EQ(r.code, 0) << r.err;
  r = invoke({"generate", "--model", at("m.ckpt"), "--length", "20", "--seed", "5", "--out", at("g.mid"), "--tokens",
              at("g.tokens")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto bytes = slurp(root / "g.mid");
  EXPECT_EQ(bytes.substr(0, 4), "MThd");
  const auto again = invoke({"generate", "--model", at("m.ckpt"), "--length", "20", "--seed", "5", "--out", at("h.mid")});
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(slurp(root / "h.mid"), bytes);
}

TEST_F(CliTest, EvalAndReport) {
  const fs::path side = root / "chords" / "JSB" / "Human";
  fs::create_directories(side);
  std::ofstream(side / "p0.chords") << "0\t0\tmaj\n2\t7\tmaj\n";
  auto r = invoke({"eval-objective", at("corpus"), "--chords", at("chords"), "--out", at("report.csv"), "--threads", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto reports = read_report_csv(slurp(root / "report.csv"));
  ASSERT_EQ(reports.size(), 12u);
  EXPECT_EQ(reports[0].dataset, "JSB");
  EXPECT_EQ(reports[0].source, "Human");

  r = invoke({"report", "--report", at("report.csv"), "--aggregate", "--heatmaps", "--out", at("tables")});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"pitch.csv", "rhythm.csv", "harmony.csv", "nltm_JSB_Human.pgm", "nltm_POP909_S-LSTM.csv"}) {
    EXPECT_TRUE(fs::exists(root / "tables" / f)) << f;
  }
  EXPECT_EQ(slurp(root / "tables" / "nltm_JSB_Human.pgm").substr(0, 2), "P2");
  EXPECT_EQ(invoke({"report", "--report", at("report.csv")}).code, 2);
}

TEST_F(CliTest, StudySimulateExportAnalyze) {
  auto r = invoke({"study", "simulate", "--participants", "2,1,1", "--quota", "3,1,1,1", "--seed", "4", "--dir",
                   at("study")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("pieces: 810"), std::string::npos);
  r = invoke({"study", "export", "--dir", at("study"), "--out", at("export.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_responses_csv(slurp(root / "export.csv"));
  EXPECT_FALSE(rows.empty());
  r = invoke({"analyze", "--responses", at("export.csv"), "--out", at("analysis")});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"descriptives.csv", "anova.csv", "tukey.csv", "turing.csv"}) {
    EXPECT_TRUE(fs::exists(root / "analysis" / f)) << f;
  }
  EXPECT_NE(slurp(root / "analysis" / "descriptives.csv").find("Reference"), std::string::npos);
}

TEST_F(CliTest, StudyInitSynthetic) {
  const auto r = invoke({"study", "init", "--dir", at("st"), "--synthetic", "--sample-rate", "0", "--seed", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(root / "st" / "admin.key"));
  EXPECT_TRUE(fs::exists(root / "st" / "study.json"));
  EXPECT_EQ(std::distance(fs::directory_iterator(root / "st" / "pieces"), fs::directory_iterator{}), 810);
  EXPECT_EQ(invoke({"study", "init", "--dir", at("st2")}).code, 2);
}

TEST_F(CliTest, EvalThreeFilesGivesThreeRows) {
  const auto r = invoke({"eval-objective", at("corpus/JSB/Human"), "--out", at("three.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto text = slurp(root / "three.csv");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
}

TEST_F(CliTest, ReportTablesReparseToAggregate) {
  ASSERT_EQ(invoke({"eval-objective", at("corpus"), "--out", at("report.csv")}).code, 0);
  ASSERT_EQ(invoke({"report", "--report", at("report.csv"), "--aggregate", "--out", at("tables")}).code, 0);
  const auto table = aggregate(read_report_csv(slurp(root / "report.csv")));
  const std::vector<std::string> texts{slurp(root / "tables" / "pitch.csv"), slurp(root / "tables" / "rhythm.csv"),
                                       slurp(root / "tables" / "harmony.csv")};
  EXPECT_EQ(read_aggregate_csv(texts), table);
}

TEST_F(CliTest, AnalyzeShowsConstructedGap) {
  std::vector<ResponseRow> rows;
  auto add = [&](const std::string& source, int n, int value) {
    for (int i = 0; i < n; ++i) {
      rows.push_back({"P" + std::to_string(rows.size()), "N", "pc" + source.substr(0, 3), "JSB", source, "Q1", value,
                      "AI", "2026-01-01T00:00:00Z"});
    }
  };
  add("Human", 8100, 4);
  add("Human", 1900, 3);
  add("S-Transformer", 6787, 3);
  add("S-Transformer", 3213, 2);
  std::ofstream(root / "export.csv") << write_responses_csv(rows);
  const auto r = invoke({"analyze", "--responses", at("export.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto at_row = r.out.find("N,Q1,Reference-S-Transformer,");
  ASSERT_NE(at_row, std::string::npos) << r.out;
  const double gap = std::stod(r.out.substr(at_row + std::string("N,Q1,Reference-S-Transformer,").size()));
  EXPECT_NEAR(gap, -1.1313, 1e-9);
}

}  // namespace
}  // namespace muspike::cli
