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
#ifndef PTX_HARNESS_HPP_
#define PTX_HARNESS_HPP_

// Experiment grid runner for the simulated transfer study.
//
// A run expands an ExperimentConfig into cells (method, n1, n2, ε, γ, trial),
// executes them on up to `jobs` threads, and returns one TrialResult per cell
// in canonical key order, independent of completion order.
//
// Seeds. Every seed is a HashCombine chain over 64-bit words starting from
// base_seed; strings enter as HashString (FNV-1a), doubles by their IEEE-754
// bit pattern, absent ε/γ as the quiet-NaN pattern 0x7ff8000000000000:
//   cell       base, H(method), n1, n2, bits(ε), bits(γ), trial
//   instance   base, H("instance"), trial
//   private    base, H("private"), n2, trial
//   public     base, H("public"), n1, trial
//   perturb    base, H("perturb"), bits(γ), trial
//   mechanism  base, H("mechanism"), n2, trial
// Every stream is shared by all methods and privacy levels of a trial (common
// random numbers): cells see the same instance, the same private rows and,
// where the model dimension agrees, the same batch order and standard-normal
// noise draws (scaled by each cell's noise multiplier). The cell seed is a
// unique row identifier and seeds nothing.

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptx/accountant.hpp"
#include "ptx/common.hpp"
#include "ptx/dp_linreg.hpp"
#include "ptx/linalg.hpp"
#include "ptx/mom.hpp"
#include "ptx/rng.hpp"
#include "ptx/synth.hpp"
#include "ptx/two_phase.hpp"

namespace ptx {

inline constexpr const char* kSoftwareVersion = "0.1.0";

enum class Method {
  kNonprivateOls,
  kDpSgdScratch,
  kDpSgdTrueSubspace,
  kTwoPhaseMom,
  kTwoPhaseOracleGamma,
};

inline const char* MethodName(Method m) {
  switch (m) {
    case Method::kNonprivateOls: return "nonprivate_ols";
    case Method::kDpSgdScratch: return "dpsgd_scratch";
    case Method::kDpSgdTrueSubspace: return "dpsgd_true_subspace";
    case Method::kTwoPhaseMom: return "two_phase_mom";
    case Method::kTwoPhaseOracleGamma: return "two_phase_oracle_gamma";
  }
  return "unknown";
}

inline Method ParseMethod(const std::string& s) {
  for (Method m : {Method::kNonprivateOls, Method::kDpSgdScratch, Method::kDpSgdTrueSubspace,
                   Method::kTwoPhaseMom, Method::kTwoPhaseOracleGamma}) {
    if (s == MethodName(m)) return m;
  }
  throw Error(ErrorCode::kConfig, "unknown method '" + s + "'");
}

/// How the γ-perturbed oracle basis is oriented relative to the private task.
enum class GammaAlignment {
  kWorstCase,  ///< rotate the basis direction carrying Bα_{t+1}
  kRandom,     ///< rotate the first column of B as generated
};

struct ExperimentConfig {
  int d = 25;
  int k = 5;
  int t = 100;
  std::vector<std::int64_t> n1_list = {500, 2000};
  bool n1_per_task = true;  ///< n1 counts samples per public task (total t·n1)
  std::vector<std::int64_t> n2_list = {150, 250, 500, 1000};
  double noise_std = 1.0;
  double task_norm = 1.0;
  std::vector<double> eps_list = {1.1};
  double delta = 1e-5;
  DpSgdConfig dp = [] {
    DpSgdConfig c;
    c.clip_norm = 0.5;
    c.learning_rate = 0.1;
    c.epochs = 50;
    c.batch_size = 10;
    return c;
  }();
  std::vector<Method> methods = {Method::kNonprivateOls, Method::kDpSgdScratch,
                                 Method::kDpSgdTrueSubspace, Method::kTwoPhaseMom};
  std::vector<double> gamma_list;
  GammaAlignment gamma_alignment = GammaAlignment::kWorstCase;
  int trials = 20;
  std::uint64_t base_seed = 1;

  std::int64_t PublicSampleCount(std::int64_t n1) const { return n1_per_task ? n1 * t : n1; }

  bool HasMethod(Method m) const {
    return std::find(methods.begin(), methods.end(), m) != methods.end();
  }

  void Validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::kConfig, msg); };
    if (k < 1 || k > d || t < 1) fail("need 1 <= k <= d and t >= 1");
    if (trials < 1) fail("trials must be >= 1");
    if (n2_list.empty()) fail("n2_list must be nonempty");
    if (methods.empty()) fail("methods must be nonempty");
    if (eps_list.empty()) fail("eps_list must be nonempty");
    if (!(delta > 0.0 && delta < 1.0)) fail("delta must lie in (0, 1)");
    if (!(noise_std >= 0.0) || !(task_norm >= 0.0)) fail("noise_std, task_norm must be >= 0");
    for (double e : eps_list) {
      if (!(e > 0.0)) fail("eps values must be positive");
    }
    for (auto n2 : n2_list) {
      if (n2 < 1) fail("n2 values must be positive");
    }
    if (HasMethod(Method::kTwoPhaseMom)) {
      if (n1_list.empty()) fail("two_phase_mom needs a nonempty n1_list");
      for (auto n1 : n1_list) {
        if (PublicSampleCount(n1) < t) fail("each n1 must give at least one sample per task");
      }
    }
    if (HasMethod(Method::kTwoPhaseOracleGamma)) {
      if (gamma_list.empty()) fail("two_phase_oracle_gamma needs a nonempty gamma_list");
      for (double g : gamma_list) {
        if (!(g >= 0.0 && g <= 1.0)) fail("gamma values must lie in [0, 1]");
      }
      if (k == d) fail("gamma sweeps need k < d");
    }
    try {
      dp.Validate();
    } catch (const Error& e) {
      fail(std::string("dp: ") + e.what());
    }
  }
};

namespace internal {

template <typename T>
std::vector<T> ListField(const nlohmann::json& j, const char* list_key, const char* scalar_key,
                         std::vector<T> fallback) {
  if (j.contains(list_key)) return j.at(list_key).get<std::vector<T>>();
  if (scalar_key != nullptr && j.contains(scalar_key)) return {j.at(scalar_key).get<T>()};
  return fallback;
}

}  // namespace internal

/// Parses the config JSON. Every field is optional and defaults to the
/// Figure-4 setup above. Unknown keys are rejected.
inline ExperimentConfig ConfigFromJson(const nlohmann::json& j) {
  static const std::vector<std::string> kKnown = {
      "d",        "k",        "t",          "n1_list",  "n1",       "n1_per_task",
      "n2_list",  "n2",       "noise_std",  "task_norm", "eps_list", "eps",
      "delta",    "dp",       "methods",    "gamma_list", "gamma_alignment",
      "trials",   "base_seed"};
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(kKnown.begin(), kKnown.end(), key) == kKnown.end()) {
      throw Error(ErrorCode::kConfig, "unknown config key '" + key + "'");
    }
  }
  ExperimentConfig c;
  try {
    c.d = j.value("d", c.d);
    c.k = j.value("k", c.k);
    c.t = j.value("t", c.t);
    c.n1_list = internal::ListField<std::int64_t>(j, "n1_list", "n1", c.n1_list);
    c.n1_per_task = j.value("n1_per_task", c.n1_per_task);
    c.n2_list = internal::ListField<std::int64_t>(j, "n2_list", "n2", c.n2_list);
    c.noise_std = j.value("noise_std", c.noise_std);
    c.task_norm = j.value("task_norm", c.task_norm);
    c.eps_list = internal::ListField<double>(j, "eps_list", "eps", c.eps_list);
    c.delta = j.value("delta", c.delta);
    if (j.contains("dp")) {
      nlohmann::json dp = ToJson(c.dp);
      dp.update(j.at("dp"));
      c.dp = DpSgdConfigFromJson(dp);
    }
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j.at("methods")) c.methods.push_back(ParseMethod(m.get<std::string>()));
    }
    c.gamma_list = internal::ListField<double>(j, "gamma_list", nullptr, c.gamma_list);
    const std::string align = j.value("gamma_alignment", std::string("worst_case"));
    if (align == "worst_case") {
      c.gamma_alignment = GammaAlignment::kWorstCase;
    } else if (align == "random") {
      c.gamma_alignment = GammaAlignment::kRandom;
    } else {
      throw Error(ErrorCode::kConfig, "gamma_alignment must be worst_case or random");
    }
    c.trials = j.value("trials", c.trials);
    c.base_seed = j.value("base_seed", c.base_seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfig) throw;
    throw Error(ErrorCode::kConfig, e.what());
  }
  c.Validate();
  return c;
}

inline nlohmann::json ToJson(const ExperimentConfig& c) {
  nlohmann::json methods = nlohmann::json::array();
  for (Method m : c.methods) methods.push_back(MethodName(m));
  return {{"d", c.d},
          {"k", c.k},
          {"t", c.t},
          {"n1_list", c.n1_list},
          {"n1_per_task", c.n1_per_task},
          {"n2_list", c.n2_list},
          {"noise_std", c.noise_std},
          {"task_norm", c.task_norm},
          {"eps_list", c.eps_list},
          {"delta", c.delta},
          {"dp", ToJson(c.dp)},
          {"methods", methods},
          {"gamma_list", c.gamma_list},
          {"gamma_alignment",
           c.gamma_alignment == GammaAlignment::kWorstCase ? "worst_case" : "random"},
          {"trials", c.trials},
          {"base_seed", c.base_seed}};
}

// ---------------------------------------------------------------------------
// Cells and seeds
// ---------------------------------------------------------------------------

struct CellKey {
  Method method = Method::kNonprivateOls;
  std::int64_t n1 = 0;  ///< 0 when the method uses no public data
  std::int64_t n2 = 0;
  std::optional<double> eps;
  std::optional<double> gamma;
  int trial = 0;

  auto Tuple() const {
    return std::tuple(static_cast<int>(method), n1, n2, eps.value_or(-1.0), gamma.value_or(-1.0),
                      trial);
  }
  bool operator<(const CellKey& o) const { return Tuple() < o.Tuple(); }
};

inline constexpr std::uint64_t kAbsentBits = 0x7ff8000000000000ULL;

inline std::uint64_t OptionalBits(const std::optional<double>& v) {
  return v ? std::bit_cast<std::uint64_t>(*v) : kAbsentBits;
}

inline std::uint64_t CellSeed(std::uint64_t base_seed, const CellKey& key) {
  std::uint64_t h = base_seed;
  h = HashCombine(h, HashString(MethodName(key.method)));
  h = HashCombine(h, static_cast<std::uint64_t>(key.n1));
  h = HashCombine(h, static_cast<std::uint64_t>(key.n2));
  h = HashCombine(h, OptionalBits(key.eps));
  h = HashCombine(h, OptionalBits(key.gamma));
  h = HashCombine(h, static_cast<std::uint64_t>(key.trial));
  return h;
}

inline std::uint64_t StreamSeed(std::uint64_t base_seed, std::string_view name,
                                std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = HashCombine(base_seed, HashString(name));
  for (auto w : words) h = HashCombine(h, w);
  return h;
}

/// All cells of a run in canonical order.
inline std::vector<CellKey> EnumerateCells(const ExperimentConfig& cfg) {
  std::vector<CellKey> cells;
  for (Method m : cfg.methods) {
    for (auto n2 : cfg.n2_list) {
      for (int trial = 0; trial < cfg.trials; ++trial) {
        switch (m) {
          case Method::kNonprivateOls:
            cells.push_back({m, 0, n2, std::nullopt, std::nullopt, trial});
            break;
          case Method::kDpSgdScratch:
          case Method::kDpSgdTrueSubspace:
            for (double e : cfg.eps_list) cells.push_back({m, 0, n2, e, std::nullopt, trial});
            break;
          case Method::kTwoPhaseMom:
            for (auto n1 : cfg.n1_list) {
              for (double e : cfg.eps_list) cells.push_back({m, n1, n2, e, std::nullopt, trial});
            }
            break;
          case Method::kTwoPhaseOracleGamma:
            for (double g : cfg.gamma_list) {
              for (double e : cfg.eps_list) cells.push_back({m, 0, n2, e, g, trial});
            }
            break;
        }
      }
    }
  }
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end(),
                          [](const CellKey& a, const CellKey& b) { return a.Tuple() == b.Tuple(); }),
              cells.end());
  return cells;
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

struct TrialResult {
  CellKey key;
  std::uint64_t seed = 0;
  double l2_param_error = std::nan("");
  double excess_risk = std::nan("");
  std::optional<double> sin_theta;
  double noise_multiplier = 0.0;
  std::int64_t steps = 0;
  double sampling_rate = 0.0;
  std::optional<double> eps_spent;
  double wall_ms = 0.0;
  std::string error;

  bool ok() const { return error.empty(); }
};

inline constexpr const char* kResultsCsvHeader =
    "method,n1,n2,eps,gamma,trial,seed,l2_param_error,excess_risk,sin_theta,"
    "noise_multiplier,steps,sampling_rate,eps_spent,wall_ms,error";

namespace internal {

inline std::string OptionalField(const std::optional<double>& v) {
  return v ? FormatDouble(*v) : std::string();
}

inline std::string CsvEscape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += (c == '\n' ? ' ' : c);
  }
  return out + "\"";
}

}  // namespace internal

inline void WriteResultsCsv(std::ostream& out, const std::vector<TrialResult>& rows) {
  out << kResultsCsvHeader << '\n';
  for (const auto& r : rows) {
    out << MethodName(r.key.method) << ',' << r.key.n1 << ',' << r.key.n2 << ','
        << internal::OptionalField(r.key.eps) << ',' << internal::OptionalField(r.key.gamma) << ','
        << r.key.trial << ',' << r.seed << ',' << FormatDouble(r.l2_param_error) << ','
        << FormatDouble(r.excess_risk) << ',' << internal::OptionalField(r.sin_theta) << ','
        << FormatDouble(r.noise_multiplier) << ',' << r.steps << ','
        << FormatDouble(r.sampling_rate) << ',' << internal::OptionalField(r.eps_spent) << ','
        << FormatDouble(r.wall_ms) << ',' << internal::CsvEscape(r.error) << '\n';
  }
}

struct RunOptions {
  int jobs = 1;
  bool record_timing = false;  ///< wall_ms stays 0 unless set, keeping CSVs reproducible
};

namespace internal {

using CalibrationKey = std::pair<std::int64_t, double>;  // (n2, eps)

inline TrialResult RunCell(const ExperimentConfig& cfg, const CellKey& key,
                           const std::map<CalibrationKey, double>& calibrated) {
  TrialResult row;
  row.key = key;
  row.seed = CellSeed(cfg.base_seed, key);
  const auto trial = static_cast<std::uint64_t>(key.trial);
  try {
    Rng inst_rng(StreamSeed(cfg.base_seed, "instance", {trial}));
    const RegressionInstance inst =
        RandomInstance(cfg.d, cfg.k, cfg.t, cfg.noise_std, cfg.task_norm, inst_rng);
    Rng priv_rng(StreamSeed(cfg.base_seed, "private", {static_cast<std::uint64_t>(key.n2), trial}));
    const LabeledDataset priv = SamplePrivate(inst, key.n2, priv_rng);
    Rng mech_rng(StreamSeed(cfg.base_seed, "mechanism", {static_cast<std::uint64_t>(key.n2), trial}));

    DpSgdConfig dp = cfg.dp;
    if (key.eps) {
      dp.noise_multiplier = calibrated.at({key.n2, *key.eps});
      dp.delta = cfg.delta;
    }

    Vector w;
    switch (key.method) {
      case Method::kNonprivateOls: {
        w = OlsFit(priv).weights;
        break;
      }
      case Method::kDpSgdScratch: {
        const FitResult fit = DpSgdFit(priv, dp, std::nullopt, mech_rng);
        w = fit.weights;
        row.steps = fit.steps_taken;
        row.sampling_rate = fit.sampling_rate;
        row.noise_multiplier = fit.noise_multiplier;
        if (fit.privacy_spent) row.eps_spent = fit.privacy_spent->epsilon;
        break;
      }
      case Method::kDpSgdTrueSubspace:
      case Method::kTwoPhaseMom:
      case Method::kTwoPhaseOracleGamma: {
        std::optional<LabeledDataset> pub;
        std::optional<SubspaceSource> source;
        if (key.method == Method::kDpSgdTrueSubspace) {
          source.emplace(inst.basis);
        } else if (key.method == Method::kTwoPhaseMom) {
          Rng pub_rng(StreamSeed(cfg.base_seed, "public", {static_cast<std::uint64_t>(key.n1), trial}));
          pub.emplace(SamplePublic(inst, cfg.PublicSampleCount(key.n1), pub_rng));
          source.emplace(std::cref(*pub));
        } else {
          Rng perturb_rng(StreamSeed(cfg.base_seed, "perturb", {OptionalBits(key.gamma), trial}));
          const OrthonormalBasis base = cfg.gamma_alignment == GammaAlignment::kWorstCase
                                            ? AlignedBasis(inst.basis, inst.PrivateParameter())
                                            : inst.basis;
          source.emplace(PerturbedBasis(base, *key.gamma, perturb_rng));
        }
        const TwoPhaseResult res =
            TwoPhaseTransfer(*source, priv, cfg.k, dp, std::nullopt, mech_rng, &inst);
        w = res.lifted;
        row.sin_theta = res.sin_theta;
        row.steps = res.fit.steps_taken;
        row.sampling_rate = res.fit.sampling_rate;
        row.noise_multiplier = res.fit.noise_multiplier;
        if (res.privacy_spent) row.eps_spent = res.privacy_spent->epsilon;
        break;
      }
    }
    if (!w.allFinite()) throw Error(ErrorCode::kInvalidArgument, "estimate diverged");
    row.l2_param_error = (w - inst.PrivateParameter()).norm();
    row.excess_risk = PopulationExcessRisk(w, inst);
  } catch (const std::exception& e) {
    row.error = e.what();
    row.l2_param_error = std::nan("");
    row.excess_risk = std::nan("");
  }
  return row;
}

}  // namespace internal

/// Noise multipliers for every (n2, ε) pair of the config, keyed (n2, ε).
inline std::map<std::pair<std::int64_t, double>, double> CalibrateGrid(
    const ExperimentConfig& cfg) {
  std::map<std::pair<std::int64_t, double>, double> out;
  for (auto n2 : cfg.n2_list) {
    if (cfg.dp.batch_size > n2) continue;  // reported per cell
    const std::int64_t steps = DpSgdSteps(n2, cfg.dp);
    const double q = static_cast<double>(cfg.dp.batch_size) / static_cast<double>(n2);
    for (double e : cfg.eps_list) out[{n2, e}] = CalibrateNoise({e, cfg.delta}, steps, q);
  }
  return out;
}

/// Executes every cell of the config. Failed cells come back as rows with a
/// nonempty `error`; the run never aborts on a single cell.
inline std::vector<TrialResult> RunGrid(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  cfg.Validate();
  const std::vector<CellKey> cells = EnumerateCells(cfg);
  const auto calibrated = CalibrateGrid(cfg);
  std::vector<TrialResult> rows(cells.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
      const auto start = std::chrono::steady_clock::now();
      rows[i] = internal::RunCell(cfg, cells[i], calibrated);
      if (opts.record_timing) {
        rows[i].wall_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - start)
                              .count();
      }
    }
  };
  const int jobs = std::max(1, opts.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return rows;
}

/// The simulated Figure-4 study: nonprivate OLS, DP-SGD from scratch, DP-SGD
/// in the true subspace and two-phase with method-of-moments subspaces.
inline std::vector<TrialResult> RunFigure4(const ExperimentConfig& cfg,
                                           const RunOptions& opts = {}) {
  return RunGrid(cfg, opts);
}

/// γ-sweep: two-phase with a γ-perturbed oracle basis for every γ and n2.
inline std::vector<TrialResult> RunGammaSweep(ExperimentConfig cfg, const RunOptions& opts = {}) {
  if (cfg.gamma_list.empty()) throw Error(ErrorCode::kConfig, "gamma_list must be nonempty");
  cfg.methods = {Method::kTwoPhaseOracleGamma};
  return RunGrid(cfg, opts);
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

struct CellSummary {
  Method method;
  std::int64_t n1;
  std::int64_t n2;
  std::optional<double> eps;
  std::optional<double> gamma;
  int count = 0;
  int failures = 0;
  double mean_l2 = 0.0;
  double se_l2 = 0.0;
  double mean_excess_risk = 0.0;
  double se_excess_risk = 0.0;
  double mean_sin_theta = std::nan("");
};

/// Groups rows by everything but the trial and averages the metrics of the
/// successful ones.
inline std::vector<CellSummary> Summarize(const std::vector<TrialResult>& rows) {
  std::map<std::tuple<int, std::int64_t, std::int64_t, double, double>, std::vector<const TrialResult*>>
      groups;
  for (const auto& r : rows) {
    groups[{static_cast<int>(r.key.method), r.key.n1, r.key.n2, r.key.eps.value_or(-1.0),
            r.key.gamma.value_or(-1.0)}]
        .push_back(&r);
  }
  std::vector<CellSummary> out;
  for (const auto& [key, members] : groups) {
    const TrialResult& first = *members.front();
    CellSummary s{first.key.method, first.key.n1, first.key.n2, first.key.eps, first.key.gamma};
    std::vector<double> l2;
    std::vector<double> risk;
    std::vector<double> sin;
    for (const TrialResult* r : members) {
      if (!r->ok()) {
        ++s.failures;
        continue;
      }
      l2.push_back(r->l2_param_error);
      risk.push_back(r->excess_risk);
      if (r->sin_theta) sin.push_back(*r->sin_theta);
    }
    s.count = static_cast<int>(l2.size());
    auto mean_se = [](const std::vector<double>& v) {
      if (v.empty()) return std::pair{std::nan(""), std::nan("")};
      CompensatedSum sum;
      for (double x : v) sum.Add(x);
      const double mean = sum.Value() / static_cast<double>(v.size());
      if (v.size() < 2) return std::pair{mean, 0.0};
      CompensatedSum ss;
      for (double x : v) ss.Add((x - mean) * (x - mean));
      return std::pair{mean, std::sqrt(ss.Value() / static_cast<double>(v.size() - 1) /
                                       static_cast<double>(v.size()))};
    };
    std::tie(s.mean_l2, s.se_l2) = mean_se(l2);
    std::tie(s.mean_excess_risk, s.se_excess_risk) = mean_se(risk);
    if (!sin.empty()) s.mean_sin_theta = mean_se(sin).first;
    out.push_back(s);
  }
  return out;
}

inline nlohmann::json RunManifest(const ExperimentConfig& cfg, const std::vector<TrialResult>& rows,
                                  double wall_ms, const std::string& command) {
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.ok() ? 0 : 1;
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& s : Summarize(rows)) {
    summary.push_back({{"method", MethodName(s.method)},
                       {"n1", s.n1},
                       {"n2", s.n2},
                       {"eps", s.eps ? nlohmann::json(*s.eps) : nlohmann::json(nullptr)},
                       {"gamma", s.gamma ? nlohmann::json(*s.gamma) : nlohmann::json(nullptr)},
                       {"trials_ok", s.count},
                       {"mean_l2_param_error", s.mean_l2},
                       {"se_l2_param_error", s.se_l2},
                       {"mean_excess_risk", s.mean_excess_risk}});
  }
  return {{"command", command},
          {"software_version", kSoftwareVersion},
          {"config", ToJson(cfg)},
          {"cells", rows.size()},
          {"failed_cells", failed},
          {"wall_ms", wall_ms},
          {"summary", summary}};
}

// ---------------------------------------------------------------------------
// Eigenspectrum of feature covariance
// ---------------------------------------------------------------------------

struct EigspecOptions {
  std::optional<bool> has_header;  ///< auto-detected when unset
  bool center = true;
};

/// Reads a numeric CSV (rows = samples, columns = features). With
/// `has_header` unset, the first line is a header iff some field in it is not
/// a number.
inline Matrix ReadFeatureCsv(std::istream& in, std::optional<bool> has_header = std::nullopt) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = internal::SplitCsvLine(line);
    std::vector<double> values(fields.size());
    bool numeric = true;
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (!ParseDouble(fields[j], values[j])) numeric = false;
    }
    if (rows.empty() && width == 0) {
      const bool header = has_header ? *has_header : !numeric;
      width = fields.size();
      if (header) continue;
    }
    if (!numeric) {
      throw Error(ErrorCode::kMalformedCsv, "line " + std::to_string(line_no) + " is not numeric");
    }
    if (fields.size() != width) {
      throw Error(ErrorCode::kMalformedCsv, "line " + std::to_string(line_no) + " has " +
                                                std::to_string(fields.size()) + " fields, expected " +
                                                std::to_string(width));
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw Error(ErrorCode::kEmptyInput, "no feature rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return m;
}

/// Eigenvalues (descending) of the sample covariance of `features`:
/// XcᵀXc/(n-1) after mean-centering, or the second moment XᵀX/n without it.
inline Vector FeatureEigenspectrum(const Matrix& features, bool center = true) {
  const Eigen::Index n = features.rows();
  if (n == 0 || features.cols() == 0) throw Error(ErrorCode::kEmptyInput, "no features");
  if (center && n < 2) throw Error(ErrorCode::kEmptyInput, "centering needs at least 2 rows");
  Matrix cov;
  if (center) {
    const Eigen::RowVectorXd mean = features.colwise().mean();
    const Matrix xc = features.rowwise() - mean;
    cov = xc.transpose() * xc / static_cast<double>(n - 1);
  } else {
    cov = features.transpose() * features / static_cast<double>(n);
  }
  return SymmetricEigen(cov).values;
}

inline void WriteEigenspectrumCsv(std::ostream& out, const Vector& values) {
  out << "index,eigenvalue\n";
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    out << (i + 1) << ',' << FormatDouble(values[i]) << '\n';
  }
}

/// File-to-file eigenspectrum tool; returns the eigenvalues written.
inline Vector RunEigspec(const std::string& features_csv_path, const std::string& out_path,
                         const EigspecOptions& opts = {}) {
  std::ifstream in(features_csv_path);
  if (!in) throw Error(ErrorCode::kEmptyInput, "cannot open " + features_csv_path);
  const Vector values = FeatureEigenspectrum(ReadFeatureCsv(in, opts.has_header), opts.center);
  std::ofstream out(out_path);
  if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot write " + out_path);
  WriteEigenspectrumCsv(out, values);
  return values;
}

}  // namespace ptx

#endif  // PTX_HARNESS_HPP_
