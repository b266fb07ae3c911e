// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "lpf/checkpoint.hpp"
#include "lpf/cli.hpp"
#include "lpf/dataset.hpp"
#include "lpf/report.hpp"
#include "test_support.hpp"

namespace lpf {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override { dir_ = testing::temp_dir("cli"); }
  void TearDown() override { fs::remove_all(dir_); }
  std::string p(const std::string& rel) const { return (dir_ / rel).string(); }

  void synth(const std::string& sub, std::uint64_t seed, const std::string& rule = "linear",
             int n = 96) {
    const CliRun r = run({"--seed", std::to_string(seed), "--out", p(sub), "synth", "--n",
                       std::to_string(n), "--dim", "6", "--rule", rule});
    ASSERT_EQ(r.code, 0) << r.err;
  }

  CliRun train(const std::string& data, const std::string& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> a{"--seed", "3",          "--out",        p(out),   "train",
                               "--data", p(data),      "--epochs",     "4",      "--fen-dim",
                               "12",     "--hidden-dim", "8",          "--lr",   "1e-3"};
    a.insert(a.end(), extra.begin(), extra.end());
    return run(a);
  }

  fs::path dir_;
};

TEST_F(CliTest, SynthWritesThreeLoadableFilesBitIdentically) {
  synth("a", 7);
  synth("b", 7);
  for (const char* f : {"features.lpff", "manifest.csv", "dataset.desc"}) {
    ASSERT_TRUE(fs::exists(dir_ / "a" / f)) << f;
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  EXPECT_TRUE(fs::exists(dir_ / "a" / "run_manifest.json"));
  EXPECT_EQ(count_lines(slurp(dir_ / "a" / "manifest.csv")), 96u + 1);
  const auto loaded = load_dataset(dir_ / "a" / "dataset.desc");
  EXPECT_EQ(loaded.dataset.size(), 96u);
  EXPECT_TRUE(loaded.warnings.empty());
}

TEST_F(CliTest, SynthRejectsTinyN) {
  const CliRun r = run({"--out", p("x"), "synth", "--n", "4"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_FALSE(fs::exists(dir_ / "x"));
}

TEST_F(CliTest, UnknownFlagFailsFastWithoutOutputs) {
  const CliRun r = run({"--out", p("x"), "synth", "--bogus", "1"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_FALSE(fs::exists(dir_ / "x"));
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST_F(CliTest, TrainEvalPredictExportPipeline) {
  synth("data", 7);
  const CliRun t = train("data/dataset.desc", "run", {"--alpha", "0.4", "--beta", "0.6"});
  ASSERT_EQ(t.code, 0) << t.err;
  for (const char* f : {"final.lpfc", "best.lpfc", "telemetry.csv", "run_manifest.json"})
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
  EXPECT_EQ(count_lines(t.out), 4u + 1);

  const auto manifest = nlohmann::json::parse(slurp(dir_ / "run" / "run_manifest.json"));
  EXPECT_EQ(manifest["command"], "train");
  EXPECT_EQ(manifest["config"]["train"]["alpha"].get<double>(), 0.4);
  EXPECT_EQ(manifest["config"]["train"]["beta"].get<double>(), 0.6);
  EXPECT_EQ(manifest["config"]["train"]["batch_size"].get<int>(), 16);
  EXPECT_EQ(manifest["seed"].get<int>(), 3);

  const CsvTable tel = read_csv(p("run/telemetry.csv"));
  ASSERT_EQ(tel.rows.size(), 4u);
  const std::string last_plcc = tel.rows.back()[tel.column("test_plcc")];

  // Eval on the checkpoint's own test split reproduces the last telemetry row.
  const CliRun e = run({"--out", p("eval"), "eval", "--checkpoint", p("run/final.lpfc"), "--data",
                     p("data/dataset.desc"), "--subset", "test"});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.out.find("plcc = " + last_plcc + "\n"), std::string::npos) << e.out << last_plcc;
  const CliRun e2 = run({"--out", p("eval2"), "eval", "--checkpoint", p("run/final.lpfc"), "--data",
                      p("data/dataset.desc"), "--subset", "test"});
  EXPECT_EQ(e.out, e2.out);
  EXPECT_EQ(slurp(dir_ / "eval" / "report.json"), slurp(dir_ / "eval2" / "report.json"));

  const CliRun pr = run({"predict", "--checkpoint", p("run/final.lpfc"), "--features",
                      p("data/features.lpff"), "--explain"});
  ASSERT_EQ(pr.code, 0) << pr.err;
  EXPECT_EQ(count_lines(pr.out), 96u);
  std::istringstream lines(pr.out);
  std::string line;
  while (std::getline(lines, line)) {
    const double w = std::stod(line.substr(line.find(',') + 1));
    EXPECT_GT(w, 0.0);
    EXPECT_LT(w, 1.0);
  }
  const CliRun pr2 = run({"predict", "--checkpoint", p("run/final.lpfc"), "--features",
                       p("data/features.lpff"), "--explain"});
  EXPECT_EQ(pr.out, pr2.out);

  const CliRun x = run({"--out", p("plots"), "export-plots", "--telemetry", p("run/telemetry.csv"),
                     "--eval-dir", p("eval")});
  ASSERT_EQ(x.code, 0) << x.err;
  const std::size_t test_n = manifest["inputs"]["test_samples"].get<std::size_t>();
  EXPECT_EQ(read_csv(p("plots/convergence.csv")).rows.size(), 4u);
  EXPECT_EQ(read_csv(p("plots/scatter.csv")).rows.size(), test_n);
  const CsvTable conf = read_csv(p("plots/confusion.csv"));
  std::size_t total = 0;
  for (const auto& row : conf.rows)
    for (std::size_t i = 1; i < row.size(); ++i) total += std::stoul(row[i]);
  EXPECT_EQ(total, test_n);

  const CliRun ins = run({"inspect", p("run/final.lpfc")});
  EXPECT_EQ(ins.code, 0);
  EXPECT_NE(ins.out.find("format = LPFC"), std::string::npos);
  EXPECT_NE(run({"inspect", p("data/features.lpff")}).out.find("dim = 6"), std::string::npos);
  EXPECT_NE(run({"inspect", p("data/dataset.desc")}).out.find("format = descriptor"),
            std::string::npos);
}

TEST_F(CliTest, AblationTelemetryHasZeroAuxiliaryLosses) {
  synth("data", 8);
  const CliRun t = train("data/dataset.desc", "run", {"--no-cpn", "--no-qcn", "--quiet"});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_TRUE(t.out.empty());
  const CsvTable tel = read_csv(p("run/telemetry.csv"));
  for (const auto& row : tel.rows) {
    EXPECT_EQ(row[tel.column("l_cp")], "0");
    EXPECT_EQ(row[tel.column("l_qc")], "0");
    EXPECT_EQ(row[tel.column("total")], row[tel.column("l_sp")]);
  }
}

TEST_F(CliTest, TrainingIsByteReproducible) {
  synth("data", 9);
  ASSERT_EQ(train("data/dataset.desc", "a", {"--quiet"}).code, 0);
  ASSERT_EQ(train("data/dataset.desc", "b", {"--quiet"}).code, 0);
  for (const char* f : {"final.lpfc", "best.lpfc", "telemetry.csv"})
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
}

TEST_F(CliTest, IncompatibleDimensionsAreDataErrors) {
  synth("data", 10);
  ASSERT_EQ(train("data/dataset.desc", "run", {"--quiet"}).code, 0);
  ASSERT_EQ(run({"--out", p("wide"), "synth", "--n", "16", "--dim", "7"}).code, 0);
  const CliRun e = run({"--out", p("e"), "eval", "--checkpoint", p("run/final.lpfc"), "--data",
                     p("wide/dataset.desc")});
  EXPECT_EQ(e.code, kExitData);
  EXPECT_NE(e.err.find("incompatible"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir_ / "e"));
  const CliRun pr = run({"predict", "--checkpoint", p("run/final.lpfc"), "--features",
                      p("wide/features.lpff")});
  EXPECT_EQ(pr.code, kExitData);
}

TEST_F(CliTest, CorruptCheckpointIsDataError) {
  synth("data", 11);
  ASSERT_EQ(train("data/dataset.desc", "run", {"--quiet"}).code, 0);
  std::string bytes = slurp(dir_ / "run" / "final.lpfc");
  bytes[bytes.size() / 2] ^= 0x01;
  std::ofstream(dir_ / "bad.lpfc", std::ios::binary) << bytes;
  const CliRun r = run({"predict", "--checkpoint", p("bad.lpfc"), "--features",
                     p("data/features.lpff")});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("checksum"), std::string::npos) << r.err;
}

TEST_F(CliTest, MissingInputsAreDataErrors) {
  EXPECT_EQ(run({"--out", p("x"), "train", "--data", p("nope.desc")}).code, kExitData);
  EXPECT_FALSE(fs::exists(dir_ / "x"));
  EXPECT_EQ(run({"--out", p("y"), "export-plots", "--telemetry", p("nope.csv")}).code, kExitData);
  EXPECT_EQ(run({"inspect", p("nope")}).code, kExitData);
}

TEST_F(CliTest, NonFiniteTrainingExitsWithNumericalCode) {
  synth("data", 12);
  // A huge step overflows the parameters within a few batches.
  const CliRun r = run({"--out", p("run"), "train", "--data", p("data/dataset.desc"), "--epochs", "2",
                     "--lr", "1e308", "--quiet"});
  EXPECT_EQ(r.code, kExitNumerical) << r.err;
  EXPECT_FALSE(fs::exists(dir_ / "run"));
}

}  // namespace
}  // namespace lpf
