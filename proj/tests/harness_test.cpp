// Copyright 2026 The ptx Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ptx/harness.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "checks.hpp"

namespace ptx {
namespace {

namespace fs = std::filesystem;

// A grid small enough for unit tests that still touches every method.
ExperimentConfig SmallConfig() {
  ExperimentConfig c;
  c.d = 10;
  c.k = 3;
  c.t = 20;
  c.n1_list = {50, 200};
  c.n2_list = {150};
  c.eps_list = {0.5, 2.0};
  c.dp.epochs = 5;
  c.methods = {Method::kNonprivateOls, Method::kDpSgdScratch, Method::kDpSgdTrueSubspace,
               Method::kTwoPhaseMom, Method::kTwoPhaseOracleGamma};
  c.gamma_list = {0.0, 0.3};
  c.trials = 2;
  c.base_seed = 42;
  return c;
}

std::string CsvText(const std::vector<TrialResult>& rows) {
  std::ostringstream out;
  WriteResultsCsv(out, rows);
  return out.str();
}

ErrorCode ConfigErrorCode(const nlohmann::json& j) {
  try {
    ConfigFromJson(j);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "accepted " << j.dump();
  return ErrorCode::kInvalidArgument;
}

fs::path TempDir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ptx_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int RunCli(const std::string& args) {
  const std::string cmd = std::string(PTX_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void WriteText(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string ReadText(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(ConfigFromJson, EmptyObjectGivesDefaults) {
  const ExperimentConfig c = ConfigFromJson(nlohmann::json::object());
  EXPECT_EQ(c.d, 25);
  EXPECT_EQ(c.k, 5);
  EXPECT_EQ(c.t, 100);
  EXPECT_EQ(c.n1_list, (std::vector<std::int64_t>{500, 2000}));
  EXPECT_EQ(c.n2_list, (std::vector<std::int64_t>{150, 250, 500, 1000}));
  EXPECT_EQ(c.eps_list, std::vector<double>{1.1});
  EXPECT_EQ(c.delta, 1e-5);
  EXPECT_EQ(c.dp.clip_norm, 0.5);
  EXPECT_EQ(c.dp.learning_rate, 0.1);
  EXPECT_EQ(c.dp.epochs, 50);
  EXPECT_EQ(c.trials, 20);
  EXPECT_EQ(c.methods.size(), 4u);
}

TEST(ConfigFromJson, ScalarAliasesAndDpMerge) {
  const ExperimentConfig c = ConfigFromJson(
      {{"n1", 700}, {"n2", 300}, {"eps", 2.0}, {"dp", {{"epochs", 7}}}, {"methods", {"nonprivate_ols"}}});
  EXPECT_EQ(c.n1_list, std::vector<std::int64_t>{700});
  EXPECT_EQ(c.n2_list, std::vector<std::int64_t>{300});
  EXPECT_EQ(c.eps_list, std::vector<double>{2.0});
  EXPECT_EQ(c.dp.epochs, 7);
  EXPECT_EQ(c.dp.batch_size, 10);  // untouched default survives the merge
  EXPECT_EQ(c.methods, std::vector<Method>{Method::kNonprivateOls});
}

TEST(ConfigFromJson, RoundTripThroughJson) {
  const ExperimentConfig a = SmallConfig();
  const ExperimentConfig b = ConfigFromJson(ToJson(a));
  EXPECT_EQ(ToJson(a).dump(), ToJson(b).dump());
}

TEST(ConfigFromJson, ErrorsAreConfigErrors) {
  const std::vector<nlohmann::json> bad = {
      {{"bogus", 1}},
      {{"trials", 0}},
      {{"delta", 1.0}},
      {{"delta", 0.0}},
      {{"eps_list", nlohmann::json::array()}},
      {{"n2_list", nlohmann::json::array()}},
      {{"methods", {"gradient_boosting"}}},
      {{"methods", nlohmann::json::array()}},
      {{"d", "twenty"}},
      {{"k", 30}},
      {{"eps", -1.0}},
      {{"methods", {"two_phase_oracle_gamma"}}},
      {{"methods", {"two_phase_oracle_gamma"}}, {"gamma_list", {1.5}}},
      {{"gamma_alignment", "diagonal"}},
      {{"dp", {{"batch_size", 0}}}},
      nlohmann::json::array(),
  };
  for (const auto& j : bad) EXPECT_EQ(ConfigErrorCode(j), ErrorCode::kConfig) << j.dump();
}

TEST(ResultsCsv, GoldenHeader) {
  EXPECT_STREQ(kResultsCsvHeader,
               "method,n1,n2,eps,gamma,trial,seed,l2_param_error,excess_risk,sin_theta,"
               "noise_multiplier,steps,sampling_rate,eps_spent,wall_ms,error");
  ExperimentConfig c = SmallConfig();
  c.trials = 1;
  const std::string text = CsvText(RunGrid(c));
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kResultsCsvHeader);
  int rows = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 15) << line;
    ++rows;
  }
  EXPECT_EQ(rows, static_cast<int>(EnumerateCells(c).size()));
}

TEST(RunGrid, IdenticalBytesAcrossRuns) {
  ExperimentConfig c = SmallConfig();
  c.trials = 1;
  EXPECT_EQ(CsvText(RunGrid(c)), CsvText(RunGrid(c)));
}

TEST(RunGrid, JobCountDoesNotChangeOutput) {
  const ExperimentConfig c = SmallConfig();
  RunOptions many;
  many.jobs = 4;
  EXPECT_EQ(CsvText(RunGrid(c)), CsvText(RunGrid(c, many)));
}

TEST(RunGrid, SeedChangesOutput) {
  ExperimentConfig c = SmallConfig();
  c.trials = 1;
  const std::string a = CsvText(RunGrid(c));
  c.base_seed = 43;
  EXPECT_NE(a, CsvText(RunGrid(c)));
}

TEST(RunGrid, RowsInCanonicalOrder) {
  const auto rows = RunGrid(SmallConfig());
  const auto cells = EnumerateCells(SmallConfig());
  ASSERT_EQ(rows.size(), cells.size());
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(rows[i].key.Tuple(), cells[i].Tuple());
  for (std::size_t i = 1; i < cells.size(); ++i) EXPECT_TRUE(cells[i - 1] < cells[i]);
}

TEST(RunGrid, NoiselessOlsInterpolates) {
  ExperimentConfig c;
  c.noise_std = 0.0;
  c.methods = {Method::kNonprivateOls};
  c.n2_list = {30, 150};
  c.trials = 5;
  for (const auto& row : RunGrid(c)) {
    ASSERT_TRUE(row.ok()) << row.error;
    EXPECT_LT(row.l2_param_error, 1e-6);
  }
}

TEST(RunGrid, DeclaredEpsilonRederivesFromSchedule) {
  const auto rows = RunGrid(SmallConfig());
  int checked = 0;
  for (const auto& row : rows) {
    ASSERT_TRUE(row.ok()) << row.error;
    EXPECT_GE(row.l2_param_error, 0.0);
    EXPECT_GE(row.excess_risk, 0.0);
    if (!row.key.eps) continue;
    const double eps =
        ScheduleEpsilon({row.steps, row.sampling_rate, row.noise_multiplier}, SmallConfig().delta);
    EXPECT_NEAR(eps, *row.key.eps, 1e-3);
    ASSERT_TRUE(row.eps_spent.has_value());
    EXPECT_NEAR(*row.eps_spent, eps, 1e-12);
    ++checked;
  }
  EXPECT_GT(checked, 0);
}

TEST(RunGrid, CellSeedsPairwiseDistinct) {
  ExperimentConfig c = SmallConfig();
  c.n1_list = {50, 100, 200, 400};
  c.n2_list = {100, 150, 300};
  c.eps_list = {0.3, 0.5, 1.0, 2.0, 5.0};
  c.gamma_list = {0.0, 0.1, 0.2, 0.4};
  c.trials = 20;
  std::set<std::uint64_t> seeds;
  const auto cells = EnumerateCells(c);
  for (const auto& cell : cells) seeds.insert(CellSeed(c.base_seed, cell));
  EXPECT_EQ(seeds.size(), cells.size());
  EXPECT_GT(cells.size(), 2000u);
}

TEST(RunGrid, CellSeedDependsOnEveryKeyField) {
  const CellKey base{Method::kTwoPhaseMom, 500, 150, 1.1, std::nullopt, 3};
  const std::uint64_t s = CellSeed(7, base);
  auto differs = [&](CellKey k) { return CellSeed(7, k) != s; };
  CellKey k = base;
  k.method = Method::kDpSgdScratch;
  EXPECT_TRUE(differs(k));
  k = base;
  k.n1 = 2000;
  EXPECT_TRUE(differs(k));
  k = base;
  k.n2 = 151;
  EXPECT_TRUE(differs(k));
  k = base;
  k.eps = 1.2;
  EXPECT_TRUE(differs(k));
  k = base;
  k.gamma = 0.0;
  EXPECT_TRUE(differs(k));
  k = base;
  k.trial = 4;
  EXPECT_TRUE(differs(k));
  EXPECT_NE(CellSeed(8, base), s);
}

TEST(RunGrid, AddingAMethodLeavesOtherRowsUnchanged) {
  ExperimentConfig c = SmallConfig();
  c.methods = {Method::kNonprivateOls};
  const auto a = RunGrid(c);
  c.methods = {Method::kNonprivateOls, Method::kDpSgdScratch};
  const auto b = RunGrid(c);
  for (const auto& ra : a) {
    for (const auto& rb : b) {
      if (rb.key.Tuple() == ra.key.Tuple()) {
        EXPECT_EQ(ra.l2_param_error, rb.l2_param_error);
      }
    }
  }
}

TEST(RunGrid, FailedCellsAreIsolated) {
  ExperimentConfig c = SmallConfig();
  c.n2_list = {8, 150};  // 8 < batch and < d: DP and OLS cells fail
  const auto rows = RunGrid(c);
  int failed = 0;
  int ok = 0;
  for (const auto& row : rows) {
    if (row.key.n2 == 8) {
      EXPECT_FALSE(row.ok());
      EXPECT_TRUE(std::isnan(row.l2_param_error));
      ++failed;
    } else {
      EXPECT_TRUE(row.ok()) << row.error;
      ++ok;
    }
  }
  EXPECT_GT(failed, 0);
  EXPECT_GT(ok, 0);
  const nlohmann::json manifest = RunManifest(c, rows, 0.0, "test");
  EXPECT_EQ(manifest.at("failed_cells").get<int>(), failed);
  const auto summary = Summarize(rows);
  for (const auto& s : summary) {
    if (s.n2 == 8) {
      EXPECT_EQ(s.count, 0);
      EXPECT_GT(s.failures, 0);
    }
  }
}

TEST(RunGrid, TimingOffByDefault) {
  ExperimentConfig c = SmallConfig();
  c.trials = 1;
  for (const auto& row : RunGrid(c)) EXPECT_EQ(row.wall_ms, 0.0);
  RunOptions timed;
  timed.record_timing = true;
  double total = 0.0;
  for (const auto& row : RunGrid(c, timed)) total += row.wall_ms;
  EXPECT_GT(total, 0.0);
}

TEST(RunGammaSweep, ZeroGammaHasZeroAngle) {
  ExperimentConfig c = SmallConfig();
  c.methods = {Method::kNonprivateOls};
  const auto rows = RunGammaSweep(c);
  ASSERT_FALSE(rows.empty());
  for (const auto& row : rows) {
    ASSERT_TRUE(row.ok()) << row.error;
    EXPECT_EQ(row.key.method, Method::kTwoPhaseOracleGamma);
    ASSERT_TRUE(row.sin_theta.has_value());
    EXPECT_NEAR(*row.sin_theta, *row.key.gamma, 1e-9);
  }
  c.gamma_list.clear();
  EXPECT_THROW(RunGammaSweep(c), Error);
}

TEST(RunManifest, Contents) {
  ExperimentConfig c = SmallConfig();
  c.trials = 1;
  const auto rows = RunGrid(c);
  const nlohmann::json m = RunManifest(c, rows, 12.5, "figure4");
  EXPECT_EQ(m.at("software_version"), kSoftwareVersion);
  EXPECT_EQ(m.at("config"), ToJson(c));
  EXPECT_EQ(m.at("cells").get<std::size_t>(), rows.size());
  EXPECT_EQ(m.at("wall_ms").get<double>(), 12.5);
  EXPECT_EQ(m.at("summary").size(), Summarize(rows).size());
}

// ---------------------------------------------------------------------------
// Eigenspectrum

TEST(Eigspec, IdentityCovariance) {
  Rng rng(1);
  const Matrix x = rng.NormalMatrix(100000, 32);
  const Vector v = FeatureEigenspectrum(x);
  ASSERT_EQ(v.size(), 32);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    EXPECT_GE(v[i], 0.8);
    EXPECT_LE(v[i], 1.2);
    if (i > 0) {
      EXPECT_GE(v[i - 1], v[i]);
    }
  }
}

TEST(Eigspec, RankDeficientFeatures) {
  Rng rng(2);
  const Matrix x = rng.NormalMatrix(2000, 5) * rng.NormalMatrix(5, 32);
  const Vector v = FeatureEigenspectrum(x);
  for (Eigen::Index i = 0; i < 5; ++i) EXPECT_GT(v[i], 1e-3);
  for (Eigen::Index i = 5; i < 32; ++i) EXPECT_LT(std::abs(v[i]), 1e-10) << i;
}

TEST(Eigspec, MatchesJacobiOracle) {
  Rng rng(3);
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix root = rng.NormalMatrix(16, 16);
    const Matrix x = rng.NormalMatrix(500, 16) * root;
    for (bool center : {true, false}) {
      Matrix cov;
      if (center) {
        const Matrix xc = x.rowwise() - x.colwise().mean();
        cov = xc.transpose() * xc / 499.0;
      } else {
        cov = x.transpose() * x / 500.0;
      }
      const Vector oracle = testing_checks::JacobiEigenvalues(cov);
      const Vector v = FeatureEigenspectrum(x, center);
      for (Eigen::Index i = 0; i < 16; ++i) {
        EXPECT_LE(std::abs(v[i] - oracle[i]), 1e-8 * std::abs(oracle[0])) << i;
      }
    }
  }
}

TEST(Eigspec, CenteringRemovesMean) {
  Rng rng(4);
  Matrix x = rng.NormalMatrix(5000, 4);
  x.array() += 10.0;
  EXPECT_LT(FeatureEigenspectrum(x, true)[0], 1.3);
  EXPECT_GT(FeatureEigenspectrum(x, false)[0], 100.0);
}

TEST(ReadFeatureCsv, HeaderDetection) {
  std::istringstream with("a,b\n1,2\n3,4\n");
  EXPECT_EQ(ReadFeatureCsv(with).rows(), 2);
  std::istringstream without("1,2\n3,4\n");
  EXPECT_EQ(ReadFeatureCsv(without).rows(), 2);
  std::istringstream forced("1,2\n3,4\n");
  EXPECT_EQ(ReadFeatureCsv(forced, true).rows(), 1);
  std::istringstream crlf("1,2\r\n3,4\r\n\n");
  const Matrix m = ReadFeatureCsv(crlf);
  EXPECT_EQ(m.rows(), 2);
  EXPECT_EQ(m(1, 1), 4.0);
}

TEST(ReadFeatureCsv, Errors) {
  auto code = [](const std::string& text, std::optional<bool> header = std::nullopt) {
    std::istringstream in(text);
    try {
      ReadFeatureCsv(in, header);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kInvalidArgument;
  };
  EXPECT_EQ(code("1,2\n3\n"), ErrorCode::kMalformedCsv);
  EXPECT_EQ(code("1,2\n3,x\n"), ErrorCode::kMalformedCsv);
  EXPECT_EQ(code("a,b\n", false), ErrorCode::kMalformedCsv);
  EXPECT_EQ(code(""), ErrorCode::kEmptyInput);
  EXPECT_EQ(code("a,b\n"), ErrorCode::kEmptyInput);
}

TEST(RunEigspec, WritesIndexedCsv) {
  const fs::path dir = TempDir("eig");
  WriteText(dir / "f.csv", "x,y\n1,0\n-1,0\n0,2\n0,-2\n");
  const Vector v = RunEigspec((dir / "f.csv").string(), (dir / "e.csv").string(), {});
  ASSERT_EQ(v.size(), 2);
  EXPECT_NEAR(v[0], 8.0 / 3.0, 1e-12);
  EXPECT_NEAR(v[1], 2.0 / 3.0, 1e-12);
  const std::string text = ReadText(dir / "e.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), "index,eigenvalue");
  EXPECT_NE(text.find("\n1,"), std::string::npos);
  EXPECT_NE(text.find("\n2,"), std::string::npos);
  EXPECT_THROW(RunEigspec((dir / "missing.csv").string(), (dir / "e.csv").string(), {}), Error);
}

// ---------------------------------------------------------------------------
// Command line

TEST(Cli, ExitCodes) {
  const fs::path dir = TempDir("cli");
  const std::string out = (dir / "r.csv").string();
  WriteText(dir / "ok.json", R"({"trials": 1, "methods": ["nonprivate_ols"], "n2": 60})");
  EXPECT_EQ(RunCli("figure4 --config " + (dir / "ok.json").string() + " --out " + out), 0);
  EXPECT_TRUE(fs::exists(out + ".manifest.json"));

  WriteText(dir / "bad.json", R"({"trials": 1, "colour": "blue"})");
  EXPECT_EQ(RunCli("figure4 --config " + (dir / "bad.json").string() + " --out " + out), 2);
  WriteText(dir / "broken.json", "{ not json");
  EXPECT_EQ(RunCli("figure4 --config " + (dir / "broken.json").string() + " --out " + out), 2);
  EXPECT_EQ(RunCli("figure4"), 2);
  EXPECT_EQ(RunCli("no-such-command"), 2);
  EXPECT_EQ(RunCli("gamma-sweep --config " + (dir / "ok.json").string() + " --out " + out), 2);

  WriteText(dir / "partial.json", R"({"trials": 1, "methods": ["nonprivate_ols"], "n2_list": [5, 60]})");
  EXPECT_EQ(RunCli("figure4 --config " + (dir / "partial.json").string() + " --out " + out), 3);
}

TEST(Cli, SeedFlagOverridesConfig) {
  const fs::path dir = TempDir("seed");
  WriteText(dir / "c.json", R"({"trials": 1, "methods": ["nonprivate_ols"], "n2": 60, "base_seed": 5})");
  const std::string cfg = (dir / "c.json").string();
  ASSERT_EQ(RunCli("figure4 --config " + cfg + " --out " + (dir / "a.csv").string()), 0);
  ASSERT_EQ(RunCli("--seed 5 figure4 --config " + cfg + " --out " + (dir / "b.csv").string()), 0);
  ASSERT_EQ(RunCli("--seed 6 figure4 --config " + cfg + " --out " + (dir / "c.csv").string()), 0);
  EXPECT_EQ(ReadText(dir / "a.csv"), ReadText(dir / "b.csv"));
  EXPECT_NE(ReadText(dir / "a.csv"), ReadText(dir / "c.csv"));
}

TEST(Cli, EigspecAndSimulate) {
  const fs::path dir = TempDir("tools");
  WriteText(dir / "f.csv", "1,0\n-1,0\n0,2\n0,-2\n");
  EXPECT_EQ(RunCli("eigspec --no-header --in " + (dir / "f.csv").string() + " --out " +
                   (dir / "e.csv").string()),
            0);
  EXPECT_EQ(ReadText(dir / "e.csv").substr(0, 16), "index,eigenvalue");
  WriteText(dir / "bad.csv", "1,2\n3\n");
  EXPECT_EQ(RunCli("eigspec --in " + (dir / "bad.csv").string() + " --out " + (dir / "e.csv").string()), 1);

  ASSERT_EQ(RunCli("simulate --d 8 --k 2 --t 10 --n1 200 --n2 120 --public-out " +
                   (dir / "pub.csv").string() + " --private-out " + (dir / "priv.csv").string()),
            0);
  std::ifstream in(dir / "priv.csv");
  const LabeledDataset priv = ReadDatasetCsv(in);
  EXPECT_EQ(priv.rows(), 120);
  EXPECT_EQ(priv.dim(), 8);
  EXPECT_EQ(RunCli("two-phase --k 2 --batch 20 --eps 1 --public " + (dir / "pub.csv").string() +
                   " --private " + (dir / "priv.csv").string()),
            0);
  EXPECT_EQ(RunCli("private-regress --batch 20 --eps 1 --data " + (dir / "priv.csv").string()), 0);
  EXPECT_EQ(RunCli("accountant --eps 1 --steps 100 --q 0.1"), 0);
  EXPECT_EQ(RunCli("attack --mechanism ols --trials 5"), 0);
}

}  // namespace
}  // namespace ptx
