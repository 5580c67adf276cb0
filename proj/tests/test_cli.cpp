#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>

#include "emospec/corpus/epochset_io.hpp"
#include "emospec/eval/experiment.hpp"
#include "emospec/io.hpp"

using namespace emospec;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code{-1};
  std::string output;
};

Result cli(const std::string& args) {
  const std::string cmd = std::string(EMOSPEC_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("emospec_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  [[nodiscard]] std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

// n values with exactly the requested mean and sample SD.
std::vector<double> with_stats(double m, double sd, std::size_t n = 25) {
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = static_cast<double>(i) - static_cast<double>(n - 1) / 2.0;
  const double s = eval::sample_sd(z);
  for (auto& v : z) v = m + sd * v / s;
  return z;
}

eval::RunReport injected(const std::string& name, const std::vector<double>& scores) {
  eval::RunReport r;
  r.dataset = name;
  r.classes = 2;
  for (std::size_t t = 0; t < scores.size(); ++t) {
    eval::TrialResult tr;
    tr.trial = t;
    tr.repeat = t / 5;
    tr.fold = t % 5;
    tr.confusion = eval::ConfusionMatrix(2, {1, 0, 0, 1});
    tr.f1_macro = tr.f1_micro = tr.f1_weighted = scores[t];
    tr.accuracy = scores[t] / 100.0;
    r.trials.push_back(tr);
  }
  return r;
}

std::string tiny_run_flags() {
  return "--conv1 2 --conv2 2 --lstm1 4 --lstm2 4 --dense 8 --max-epochs 2 --patience 2 --batch-size 32";
}

}  // namespace

TEST_F(Cli, SynthDensGeometry) {
  const auto r = cli("synth --geometry dens --classes 3 --per-class 50 --seed 7 --out " + path("dens"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto m = nlohmann::json::parse(io::read_all(dir_ / "dens" / "manifest.json"));
  EXPECT_EQ(m["n_epochs"], 150);
  EXPECT_EQ(m["n_channels"], 128);
  EXPECT_EQ(m["n_samples"], 1751);
  EXPECT_EQ(m["fs_hz"], 250.0);
}

TEST_F(Cli, SynthDeapGeometry) {
  const auto r = cli("synth --geometry deap --classes 4 --per-class 1 --seed 3 --out " + path("deap"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto set = corpus::read_epochset(dir_ / "deap");
  EXPECT_EQ(set.manifest.geometry.channels, 32u);
  EXPECT_EQ(set.manifest.geometry.samples, 8064u);
  EXPECT_EQ(set.manifest.geometry.fs, 128.0);
}

TEST_F(Cli, SynthIsDeterministic) {
  const std::string flags = "synth --geometry dens --channels 4 --classes 3 --per-class 2 --seed 7 --out ";
  ASSERT_EQ(cli(flags + path("a")).code, 0);
  ASSERT_EQ(cli(flags + path("b")).code, 0);
  EXPECT_EQ(io::read_all(dir_ / "a" / "data.f32le"), io::read_all(dir_ / "b" / "data.f32le"));
  EXPECT_EQ(io::read_all(dir_ / "a" / "manifest.json"), io::read_all(dir_ / "b" / "manifest.json"));
}

TEST_F(Cli, SeedIsMandatory) {
  const auto r = cli("synth --geometry dens --out " + path("x"));
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_NE(r.output.find("--seed"), std::string::npos);
}

TEST_F(Cli, UnknownFlagIsAnError) {
  EXPECT_EQ(cli("synth --seed 1 --out " + path("x") + " --bogus 3").code, 2);
}

TEST_F(Cli, UnknownConfigKeyIsAnError) {
  io::write_atomic(dir_ / "cfg.json", R"({"seed": 1, "colour": "blue"})");
  const auto r = cli("synth --config " + path("cfg.json") + " --out " + path("x"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("colour"), std::string::npos);
}

TEST_F(Cli, FlagsOverrideConfigFile) {
  io::write_atomic(dir_ / "cfg.json", R"({"seed": 1, "geometry": "dens", "classes": 3, "per_class": 5})");
  const auto r = cli("synth --config " + path("cfg.json") + " --channels 2 --per-class 1 --out " + path("x"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto set = corpus::read_epochset(dir_ / "x");
  EXPECT_EQ(set.records.size(), 3u);
  EXPECT_EQ(set.manifest.geometry.channels, 2u);
}

TEST_F(Cli, HelpDocumentsFlags) {
  for (const std::string sub : {"synth", "featurize", "run", "compare", "gradcheck"}) {
    const auto r = cli(sub + " --help");
    EXPECT_EQ(r.code, 0) << sub;
    for (const char* flag : {"--config", "--seed", "--out", "--threads"})
      EXPECT_NE(r.output.find(flag), std::string::npos) << sub << " lacks " << flag;
  }
  EXPECT_NE(cli("run --help").output.find("--model"), std::string::npos);
}

TEST_F(Cli, FeaturizeShapes) {
  ASSERT_EQ(cli("synth --geometry dens --channels 8 --classes 3 --per-class 2 --seed 1 --out " + path("dens")).code, 0);
  auto r = cli("featurize --epochs " + path("dens"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("48 instances of 63×26×3"), std::string::npos) << r.output;

  ASSERT_EQ(cli("synth --geometry deap --channels 2 --classes 4 --per-class 1 --seed 1 --out " + path("deap")).code, 0);
  r = cli("featurize --epochs " + path("deap"));
  EXPECT_NE(r.output.find("8 instances of 33×251×3"), std::string::npos) << r.output;
}

TEST_F(Cli, FeaturizeTruncatesSeedEpochs) {
  ASSERT_EQ(cli("synth --geometry seed --samples 20000 --channels 2 --classes 3 --per-class 1 --seed 1 --out " +
                path("seed"))
                .code,
            0);
  const auto r = cli("featurize --epochs " + path("seed") + " --out " + path("feat"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("6 instances of 51×319×3"), std::string::npos) << r.output;
  const auto meta = nlohmann::json::parse(io::read_all(dir_ / "feat" / "features.json"));
  EXPECT_EQ(meta["rows"], 51);
  EXPECT_EQ(fs::file_size(dir_ / "feat" / "features.f32le"), 6u * 51 * 319 * 4);
}

TEST_F(Cli, MissingEpochSetIsDataError) {
  const auto r = cli("run --seed 1 --epochs " + path("nowhere") + " --out " + path("out"));
  EXPECT_EQ(r.code, 3) << r.output;
  EXPECT_NE(r.output.find("nowhere"), std::string::npos);
}

TEST_F(Cli, RunWritesScoresAndIsReproducible) {
  ASSERT_EQ(cli("synth --geometry dens --channels 4 --classes 3 --per-class 3 --seed 2 --out " + path("set")).code, 0);
  const std::string run = "run --seed 5 --epochs " + path("set") + " " + tiny_run_flags() + " --out ";
  auto r = cli(run + path("r1"));
  ASSERT_EQ(r.code, 0) << r.output;
  ASSERT_EQ(cli(run + path("r2")).code, 0);
  const auto scores = io::read_all(dir_ / "r1" / "scores.csv");
  EXPECT_EQ(scores, io::read_all(dir_ / "r2" / "scores.csv"));
  std::istringstream in(scores);
  std::string line;
  int rows = -1;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 25);
  const auto report = eval::read_report(dir_ / "r1");
  EXPECT_EQ(report.config["seed"], 5);
  EXPECT_EQ(report.config["train"]["max_epochs"], 2);

  r = cli("compare " + path("r1") + " " + path("r2"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("= 0.00, p = 1.000"), std::string::npos) << r.output;
}

TEST_F(Cli, BadConfigValueIsConfigError) {
  ASSERT_EQ(cli("synth --geometry dens --channels 2 --classes 3 --per-class 2 --seed 2 --out " + path("set")).code, 0);
  const auto r = cli("run --seed 5 --epochs " + path("set") + " --max-epochs 2 --patience 5 --out " + path("r"));
  EXPECT_EQ(r.code, 2) << r.output;
}

TEST_F(Cli, CompareInjectedSummaryStatistics) {
  fs::create_directories(dir_ / "a");
  fs::create_directories(dir_ / "b");
  eval::write_report(injected("deap", with_stats(95.65, 0.38)), dir_ / "a");
  eval::write_report(injected("dens", with_stats(96.82, 0.18)), dir_ / "b");
  const auto r = cli("compare " + path("a") + " " + path("b") + " --out " + path("cmp"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto at = r.output.find("Welch t(");
  ASSERT_NE(at, std::string::npos);
  const auto eq = r.output.find("= ", at);
  const double t = std::stod(r.output.substr(eq + 2));
  EXPECT_GE(std::abs(t), 13.5);
  EXPECT_LE(std::abs(t), 14.0);
  const auto csv = io::read_all(dir_ / "cmp" / "comparison.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 51);
}

TEST_F(Cli, CompareMismatchedTrialCounts) {
  fs::create_directories(dir_ / "a");
  fs::create_directories(dir_ / "b");
  eval::write_report(injected("a", with_stats(95, 1)), dir_ / "a");
  eval::write_report(injected("b", with_stats(95, 1, 20)), dir_ / "b");
  const auto r = cli("compare " + path("a") + " " + path("b"));
  EXPECT_EQ(r.code, 3) << r.output;
  EXPECT_NE(r.output.find("mismatch"), std::string::npos);
}

TEST_F(Cli, CompareMalformedReport) {
  fs::create_directories(dir_ / "a");
  io::write_atomic(dir_ / "a" / "report.json", "{not json");
  EXPECT_EQ(cli("compare " + path("a") + " " + path("a")).code, 3);
}

TEST_F(Cli, GradcheckPasses) {
  const auto r = cli("gradcheck");
  EXPECT_EQ(r.code, 0) << r.output;
  for (const char* layer : {"Conv2D", "ReLU", "MaxPool2D", "Dropout", "Flatten", "RepeatVector", "LSTM", "Dense", "Softmax"}) {
    const auto first = r.output.find(std::string(layer) + " ");
    EXPECT_NE(first, std::string::npos) << layer;
  }
}

TEST_F(Cli, GradcheckCorruptedConvFails) {
  const auto r = cli("gradcheck --corrupt-conv");
  EXPECT_EQ(r.code, 4) << r.output;
  EXPECT_NE(r.output.find("failed: Conv2D"), std::string::npos) << r.output;
}
