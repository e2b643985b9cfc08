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

// ptx command-line front end.
//
// Exit codes: 0 success, 1 runtime error, 2 configuration or usage error,
// 3 a grid run finished with one or more failed cells.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ptx/accountant.hpp"
#include "ptx/dp_linreg.hpp"
#include "ptx/harness.hpp"
#include "ptx/mom.hpp"
#include "ptx/synth.hpp"
#include "ptx/tracing.hpp"
#include "ptx/two_phase.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitPartial = 3;

struct Globals {
  std::optional<std::uint64_t> seed;
};

struct GridArgs {
  std::string config_path;
  std::string out_path;
  std::string manifest_path;
  int jobs = 1;
  bool timing = false;
};

struct DpArgs {
  double clip = 0.5;
  double lr = 0.1;
  int epochs = 50;
  int batch = 100;
  std::string schedule = "constant";

  void Register(CLI::App* app) {
    app->add_option("--clip", clip, "Per-example clipping norm")->capture_default_str();
    app->add_option("--lr", lr, "Learning rate")->capture_default_str();
    app->add_option("--epochs", epochs, "Passes over the data")->capture_default_str();
    app->add_option("--batch", batch, "Batch size")->capture_default_str();
    app->add_option("--lr-schedule", schedule, "constant or cosine")
        ->check(CLI::IsMember({"constant", "cosine"}))
        ->capture_default_str();
  }

  ptx::DpSgdConfig Config() const {
    ptx::DpSgdConfig cfg;
    cfg.clip_norm = clip;
    cfg.learning_rate = lr;
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.lr_schedule = schedule == "cosine" ? ptx::LrSchedule::kCosine : ptx::LrSchedule::kConstant;
    return cfg;
  }
};

std::uint64_t SeedOr(const Globals& g, std::uint64_t fallback) { return g.seed.value_or(fallback); }

std::ofstream OpenOut(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ptx::Error(ptx::ErrorCode::kInvalidArgument, "cannot write " + path);
  return out;
}

ptx::LabeledDataset LoadDataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ptx::Error(ptx::ErrorCode::kEmptyInput, "cannot open " + path);
  return ptx::ReadDatasetCsv(in);
}

ptx::ExperimentConfig LoadConfig(const std::string& path, const Globals& g) {
  nlohmann::json j = nlohmann::json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ptx::Error(ptx::ErrorCode::kConfig, "cannot open config " + path);
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ptx::Error(ptx::ErrorCode::kConfig, std::string("config is not valid JSON: ") + e.what());
    }
  }
  ptx::ExperimentConfig cfg = ptx::ConfigFromJson(j);
  if (g.seed) cfg.base_seed = *g.seed;
  return cfg;
}

int RunGridCommand(const GridArgs& args, const Globals& g, bool gamma_sweep, const std::string& name) {
  const ptx::ExperimentConfig cfg = LoadConfig(args.config_path, g);
  if (gamma_sweep && cfg.gamma_list.empty()) {
    throw ptx::Error(ptx::ErrorCode::kConfig, "gamma-sweep needs a nonempty gamma_list");
  }
  ptx::RunOptions opts;
  opts.jobs = args.jobs;
  opts.record_timing = args.timing;
  const auto start = std::chrono::steady_clock::now();
  const auto rows = gamma_sweep ? ptx::RunGammaSweep(cfg, opts) : ptx::RunFigure4(cfg, opts);
  const double wall_ms =
      args.timing ? std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count()
                  : 0.0;
  {
    std::ofstream out = OpenOut(args.out_path);
    ptx::WriteResultsCsv(out, rows);
  }
  const std::string manifest_path =
      args.manifest_path.empty() ? args.out_path + ".manifest.json" : args.manifest_path;
  {
    std::ofstream out = OpenOut(manifest_path);
    out << ptx::RunManifest(cfg, rows, wall_ms, name).dump(2) << '\n';
  }
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.ok() ? 0 : 1;
  std::cerr << name << ": " << rows.size() << " cells, " << failed << " failed\n";
  return failed == 0 ? kExitOk : kExitPartial;
}

void AddGridOptions(CLI::App* app, GridArgs& args) {
  app->add_option("--config", args.config_path, "Experiment config JSON (defaults when omitted)")
      ->check(CLI::ExistingFile);
  app->add_option("--out", args.out_path, "Results CSV")->required();
  app->add_option("--manifest", args.manifest_path, "Run manifest JSON (default: <out>.manifest.json)");
  app->add_option("--jobs", args.jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app->add_flag("--timing", args.timing, "Record wall-clock time per cell");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Private transfer learning in a shared linear subspace"};
  app.set_version_flag("--version", ptx::kSoftwareVersion);
  app.require_subcommand(1);
  Globals globals;
  app.add_option("--seed", globals.seed, "Override every base seed");

  GridArgs fig_args;
  CLI::App* fig = app.add_subcommand("figure4", "Run the simulated method comparison grid");
  AddGridOptions(fig, fig_args);

  GridArgs gamma_args;
  CLI::App* gamma = app.add_subcommand("gamma-sweep", "Two-phase regression on a perturbed oracle basis");
  AddGridOptions(gamma, gamma_args);

  std::string eig_in;
  std::string eig_out;
  bool eig_no_header = false;
  bool eig_no_center = false;
  CLI::App* eig = app.add_subcommand("eigspec", "Eigenvalues of a feature covariance matrix");
  eig->add_option("--in", eig_in, "Feature CSV (rows = samples)")->required()->check(CLI::ExistingFile);
  eig->add_option("--out", eig_out, "Output CSV")->required();
  eig->add_flag("--no-header", eig_no_header, "First line is data");
  eig->add_flag("--no-center", eig_no_center, "Use the uncentered second moment");

  int atk_k = 6;
  double atk_rho = 1.0;
  double atk_sigma = 1.0;
  std::int64_t atk_n2 = 100;
  int atk_trials = 100;
  std::string atk_mech = "dpsgd";
  double atk_eps = 1.0;
  double atk_delta = 1e-5;
  DpArgs atk_dp;
  atk_dp.batch = ptx::AttackDpSgdDefaults().batch_size;
  atk_dp.epochs = ptx::AttackDpSgdDefaults().epochs;
  CLI::App* atk = app.add_subcommand("attack", "Membership tracing experiment");
  atk->add_option("--k", atk_k, "Subspace dimension")->capture_default_str();
  atk->add_option("--rho", atk_rho, "In-subspace parameter norm")->capture_default_str();
  atk->add_option("--sigma", atk_sigma, "Label noise std")->capture_default_str();
  atk->add_option("--n2", atk_n2, "Private sample count")->capture_default_str();
  atk->add_option("--trials", atk_trials, "Trials")->capture_default_str();
  atk->add_option("--mechanism", atk_mech, "oracle, ols or dpsgd")
      ->check(CLI::IsMember({"oracle", "ols", "dpsgd"}))
      ->capture_default_str();
  atk->add_option("--eps", atk_eps, "Target epsilon for dpsgd")->capture_default_str();
  atk->add_option("--delta", atk_delta, "Target delta for dpsgd")->capture_default_str();
  atk_dp.Register(atk);

  std::optional<double> acc_eps;
  std::optional<double> acc_sigma;
  double acc_delta = 1e-5;
  std::int64_t acc_steps = 0;
  double acc_q = 1.0;
  CLI::App* acc = app.add_subcommand("accountant", "Epsilon of a schedule, or the noise for a target");
  auto* acc_eps_opt = acc->add_option("--eps", acc_eps, "Target epsilon (calibrate the noise multiplier)");
  acc->add_option("--noise-multiplier", acc_sigma, "Noise multiplier (report epsilon)")->excludes(acc_eps_opt);
  acc->add_option("--delta", acc_delta, "Delta")->capture_default_str();
  acc->add_option("--steps", acc_steps, "Number of noisy steps")->required();
  acc->add_option("--q", acc_q, "Sampling rate")->capture_default_str();

  // Two-phase on CSV data, or on a simulated instance.
  std::string tp_public;
  std::string tp_private;
  std::optional<double> tp_gamma;
  int tp_d = 25;
  int tp_k = 5;
  int tp_t = 100;
  std::int64_t tp_n1 = 2000;
  std::int64_t tp_n2 = 150;
  std::optional<double> tp_eps;
  double tp_delta = 1e-5;
  DpArgs tp_dp;
  tp_dp.batch = 15;
  CLI::App* tp = app.add_subcommand("two-phase", "Public subspace estimate, then private regression in it");
  tp->add_option("--public", tp_public, "Public dataset CSV")->check(CLI::ExistingFile);
  tp->add_option("--private", tp_private, "Private dataset CSV")->check(CLI::ExistingFile);
  tp->add_option("--oracle-gamma", tp_gamma, "Use a perturbed true basis at this angle (simulated data)");
  tp->add_option("--d", tp_d, "Ambient dimension (simulated)")->capture_default_str();
  tp->add_option("--k", tp_k, "Subspace dimension")->capture_default_str();
  tp->add_option("--t", tp_t, "Public tasks (simulated)")->capture_default_str();
  tp->add_option("--n1", tp_n1, "Public samples per task (simulated)")->capture_default_str();
  tp->add_option("--n2", tp_n2, "Private samples (simulated)")->capture_default_str();
  tp->add_option("--eps", tp_eps, "Target epsilon (omit for noiseless SGD)");
  tp->add_option("--delta", tp_delta, "Target delta")->capture_default_str();
  tp_dp.Register(tp);

  std::string pr_data;
  std::optional<double> pr_eps;
  double pr_delta = 1e-5;
  bool pr_ols = false;
  DpArgs pr_dp;
  CLI::App* pr = app.add_subcommand("private-regress", "DP-SGD linear regression on a dataset CSV");
  pr->add_option("--data", pr_data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  pr->add_option("--eps", pr_eps, "Target epsilon (omit for noiseless SGD)");
  pr->add_option("--delta", pr_delta, "Target delta")->capture_default_str();
  pr->add_flag("--ols", pr_ols, "Ordinary least squares instead of DP-SGD");
  pr_dp.Register(pr);

  int sim_d = 25;
  int sim_k = 5;
  int sim_t = 100;
  std::int64_t sim_n1 = 2000;
  std::int64_t sim_n2 = 150;
  double sim_noise = 1.0;
  double sim_norm = 1.0;
  std::string sim_public;
  std::string sim_private;
  std::string sim_instance;
  CLI::App* sim = app.add_subcommand("simulate", "Write public and private datasets for a random instance");
  sim->add_option("--d", sim_d, "Ambient dimension")->capture_default_str();
  sim->add_option("--k", sim_k, "Subspace dimension")->capture_default_str();
  sim->add_option("--t", sim_t, "Public tasks")->capture_default_str();
  sim->add_option("--n1", sim_n1, "Public samples in total")->capture_default_str();
  sim->add_option("--n2", sim_n2, "Private samples")->capture_default_str();
  sim->add_option("--noise-std", sim_noise, "Label noise std")->capture_default_str();
  sim->add_option("--task-norm", sim_norm, "Norm of each task vector")->capture_default_str();
  sim->add_option("--public-out", sim_public, "Public CSV")->required();
  sim->add_option("--private-out", sim_private, "Private CSV")->required();
  sim->add_option("--instance-out", sim_instance, "Instance JSON (basis, tasks, private task)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*fig) return RunGridCommand(fig_args, globals, false, "figure4");
    if (*gamma) return RunGridCommand(gamma_args, globals, true, "gamma-sweep");

    if (*eig) {
      ptx::EigspecOptions opts;
      if (eig_no_header) opts.has_header = false;
      opts.center = !eig_no_center;
      const ptx::Vector values = ptx::RunEigspec(eig_in, eig_out, opts);
      std::cerr << "eigspec: " << values.size() << " eigenvalues\n";
      return kExitOk;
    }

    if (*atk) {
      ptx::Rng rng(SeedOr(globals, 1));
      ptx::Vector alpha = ptx::SamplePrior(atk_k, atk_rho, rng);
      const ptx::AttackInstance inst =
          ptx::MakeAttackInstance(ptx::IdentityBasis(atk_k, atk_k), alpha, atk_sigma);
      ptx::AttackMechanism mech;
      nlohmann::json extra = nlohmann::json::object();
      if (atk_mech == "oracle") {
        mech = ptx::OracleMechanism();
      } else if (atk_mech == "ols") {
        mech = ptx::OlsMechanism();
      } else {
        ptx::DpSgdConfig cfg = atk_dp.Config();
        const double q = static_cast<double>(cfg.batch_size) / static_cast<double>(atk_n2);
        cfg.noise_multiplier = ptx::CalibrateNoise({atk_eps, atk_delta}, ptx::DpSgdSteps(atk_n2, cfg), q);
        cfg.delta = atk_delta;
        extra["noise_multiplier"] = cfg.noise_multiplier;
        extra["dp"] = ptx::ToJson(cfg);
        mech = ptx::DpSgdMechanism(cfg);
      }
      const ptx::MembershipReport report =
          ptx::MembershipExperiment(inst, mech, atk_n2, atk_trials, ptx::Rng(SeedOr(globals, 1)).Split(1));
      nlohmann::json j = ptx::ToJson(report);
      j["mechanism"] = atk_mech;
      j["k"] = atk_k;
      j["rho"] = atk_rho;
      j["sigma"] = atk_sigma;
      j["n2"] = atk_n2;
      j["effective_noise_var"] = inst.effective_noise_var;
      if (atk_mech == "dpsgd") {
        j["eps"] = atk_eps;
        j["delta"] = atk_delta;
        j["tracing_bound"] = ptx::DpTracingBound(report, inst, atk_eps, atk_delta);
      }
      j.update(extra);
      std::cout << j.dump(2) << '\n';
      return kExitOk;
    }

    if (*acc) {
      nlohmann::json j{{"delta", acc_delta}, {"steps", acc_steps}, {"q", acc_q}};
      if (acc_eps) {
        j["noise_multiplier"] = ptx::CalibrateNoise({*acc_eps, acc_delta}, acc_steps, acc_q);
      } else if (acc_sigma) {
        j["noise_multiplier"] = *acc_sigma;
      } else {
        throw ptx::Error(ptx::ErrorCode::kConfig, "accountant needs --eps or --noise-multiplier");
      }
      j["epsilon"] =
          ptx::ScheduleEpsilon({acc_steps, acc_q, j["noise_multiplier"].get<double>()}, acc_delta);
      std::cout << j.dump(2) << '\n';
      return kExitOk;
    }

    if (*tp) {
      ptx::Rng rng(SeedOr(globals, 1));
      ptx::DpSgdConfig cfg = tp_dp.Config();
      std::optional<ptx::PrivacyBudget> target;
      if (tp_eps) target = ptx::PrivacyBudget{*tp_eps, tp_delta};
      ptx::TwoPhaseResult result = [&] {
        if (!tp_public.empty() || !tp_private.empty()) {
          if (tp_public.empty() || tp_private.empty() || tp_gamma) {
            throw ptx::Error(ptx::ErrorCode::kConfig,
                             "CSV mode needs both --public and --private and no --oracle-gamma");
          }
          const ptx::LabeledDataset pub = LoadDataset(tp_public);
          const ptx::LabeledDataset priv = LoadDataset(tp_private);
          return ptx::TwoPhaseTransfer(ptx::SubspaceSource(std::cref(pub)), priv, tp_k, cfg, target, rng);
        }
        ptx::Rng inst_rng = rng.Split(ptx::HashString("instance"));
        const ptx::RegressionInstance inst = ptx::RandomInstance(tp_d, tp_k, tp_t, 1.0, 1.0, inst_rng);
        ptx::Rng data_rng = rng.Split(ptx::HashString("private"));
        const ptx::LabeledDataset priv = ptx::SamplePrivate(inst, tp_n2, data_rng);
        if (tp_gamma) {
          ptx::Rng perturb_rng = rng.Split(ptx::HashString("perturb"));
          const ptx::OrthonormalBasis bhat = ptx::PerturbedBasis(inst.basis, *tp_gamma, perturb_rng);
          return ptx::TwoPhaseTransfer(ptx::SubspaceSource(bhat), priv, tp_k, cfg, target, rng, &inst);
        }
        ptx::Rng pub_rng = rng.Split(ptx::HashString("public"));
        const ptx::LabeledDataset pub = ptx::SamplePublic(inst, tp_n1 * tp_t, pub_rng);
        return ptx::TwoPhaseTransfer(ptx::SubspaceSource(std::cref(pub)), priv, tp_k, cfg, target, rng, &inst);
      }();
      std::cout << ptx::ToJson(result).dump(2) << '\n';
      return kExitOk;
    }

    if (*pr) {
      const ptx::LabeledDataset data = LoadDataset(pr_data);
      nlohmann::json j;
      if (pr_ols) {
        j = ptx::ToJson(ptx::OlsFit(data));
      } else {
        ptx::Rng rng(SeedOr(globals, 1));
        std::optional<ptx::PrivacyBudget> target;
        if (pr_eps) target = ptx::PrivacyBudget{*pr_eps, pr_delta};
        j = ptx::ToJson(ptx::DpSgdFit(data, pr_dp.Config(), target, rng));
      }
      j["empirical_loss"] = ptx::EmpiricalLoss(data, ptx::VectorFromJson(j.at("weights")));
      std::cout << j.dump(2) << '\n';
      return kExitOk;
    }

    if (*sim) {
      ptx::Rng rng(SeedOr(globals, 1));
      const ptx::RegressionInstance inst = ptx::RandomInstance(sim_d, sim_k, sim_t, sim_noise, sim_norm, rng);
      {
        std::ofstream out = OpenOut(sim_public);
        ptx::WriteDatasetCsv(out, ptx::SamplePublic(inst, sim_n1, rng));
      }
      {
        std::ofstream out = OpenOut(sim_private);
        ptx::WriteDatasetCsv(out, ptx::SamplePrivate(inst, sim_n2, rng));
      }
      if (!sim_instance.empty()) {
        std::ofstream out = OpenOut(sim_instance);
        out << nlohmann::json{{"basis", ptx::MatrixToJson(inst.basis.columns())},
                              {"tasks", ptx::MatrixToJson(inst.tasks)},
                              {"private_task", ptx::VectorToJson(inst.private_task)},
                              {"noise_std", inst.noise_std}}
                   .dump(2)
            << '\n';
      }
      return kExitOk;
    }
  } catch (const ptx::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == ptx::ErrorCode::kConfig ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
