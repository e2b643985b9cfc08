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
#ifndef PTX_TRACING_HPP_
#define PTX_TRACING_HPP_

// Tracing (fingerprinting) attack against regressors fit inside a fixed
// subspace B̂.
//
// Once inputs are projected, the private task is a k-dimensional regression
//   x^B̂ ~ N(0, I_k),  y | x^B̂ ~ N(x^B̂ᵀα̂, σ² + 1 - ρ²),  ρ = ‖α̂‖,
// for ‖Bα‖ = 1. The attack correlates a sample's residual with the
// mechanism's parameter error over the first k-1 coordinates:
//   A = (y - x^B̂ᵀα̂) · Σ_{j<k} (M_j - α̂_j) x^B̂_j.
// For a sample outside the training set the score has mean zero. For
// in-sample points, summed over the dataset, it has mean
//   (σ² + 1 - ρ²) Σ_{j<k} ∂E[M_j]/∂α̂_j,
// which is (σ² + 1 - ρ²)(k - 1) for OLS. A DP mechanism bounds the in-sample
// mean by the out-of-sample mean plus 2ε·E|A'| plus δ and tail terms.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptx/common.hpp"
#include "ptx/dp_linreg.hpp"
#include "ptx/linalg.hpp"
#include "ptx/rng.hpp"
#include "ptx/synth.hpp"

namespace ptx {

struct AttackInstance {
  OrthonormalBasis basis;     ///< B̂
  Vector alpha_hat_true;      ///< B̂ᵀBα
  double rho = 1.0;           ///< ‖alpha_hat_true‖
  double sigma = 1.0;
  double effective_noise_var = 1.0;  ///< σ² + 1 - ρ²

  Eigen::Index k() const { return basis.dim(); }
};

/// Attack instance for a given in-subspace truth α̂ (‖Bα‖ = 1 is assumed, so
/// the out-of-subspace energy is 1 - ρ²).
inline AttackInstance MakeAttackInstance(OrthonormalBasis basis, Vector alpha_hat, double sigma) {
  if (alpha_hat.size() != basis.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "alpha_hat must have length k");
  }
  const double rho = alpha_hat.norm();
  if (!(rho > 0.0 && rho <= 1.0 + 1e-12)) {
    throw Error(ErrorCode::kInvalidRho, "rho = ‖alpha_hat‖ must lie in (0, 1]");
  }
  if (!(sigma >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "sigma must be nonnegative");
  const double var = sigma * sigma + 1.0 - rho * rho;
  return {std::move(basis), std::move(alpha_hat), rho, sigma, var};
}

/// Attack instance seen through B̂ for a regression instance with ‖Bα‖ = 1.
inline AttackInstance AttackInstanceFor(const RegressionInstance& inst,
                                        const OrthonormalBasis& bhat) {
  const Vector theta = inst.PrivateParameter();
  if (std::abs(theta.norm() - 1.0) > 1e-10) {
    throw Error(ErrorCode::kInvalidArgument, "attack instances assume ‖Bα‖ = 1");
  }
  return MakeAttackInstance(bhat, bhat.Coordinates(theta), inst.noise_std);
}

/// Attack score for one projected sample (x_b, y) against a mechanism output.
/// The sum deliberately stops at coordinate k-1.
inline double AttackScore(const Vector& x_b, double y, const Vector& mechanism_output,
                          const Vector& alpha_hat) {
  const Eigen::Index k = alpha_hat.size();
  if (x_b.size() != k || mechanism_output.size() != k) {
    throw Error(ErrorCode::kDimensionMismatch, "attack inputs must all have length k");
  }
  if (k < 2) throw Error(ErrorCode::kKTooSmall, "attack needs k >= 2");
  const double residual = y - x_b.dot(alpha_hat);
  const auto head = k - 1;
  const double corr = (mechanism_output.head(head) - alpha_hat.head(head)).dot(x_b.head(head));
  return residual * corr;
}

/// Draw from the attack prior: coordinates 1..k-1 from N(0, ρ²/(k-1))
/// truncated to ±ρ/√(k-1) (by rejection), last coordinate
/// ±√(ρ² - Σ_{j<k} ω_j²) with a fair sign, so ‖ω‖ = ρ exactly.
inline Vector SamplePrior(int k, double rho, Rng& rng) {
  if (k < 2) throw Error(ErrorCode::kKTooSmall, "prior needs k >= 2");
  if (!(rho > 0.0 && rho <= 1.0)) throw Error(ErrorCode::kInvalidRho, "rho must lie in (0, 1]");
  const double scale = rho / std::sqrt(static_cast<double>(k - 1));
  Vector w(k);
  double head_sq = 0.0;
  for (int j = 0; j < k - 1; ++j) {
    double z;
    do {
      z = rng.Normal();
    } while (std::abs(z) > 1.0);
    w[j] = scale * z;
    head_sq += w[j] * w[j];
  }
  w[k - 1] = rng.Sign() * std::sqrt(std::max(rho * rho - head_sq, 0.0));
  return w;
}

/// Mechanism under audit: maps a k-dimensional training set to an estimate
/// of α̂. `alpha_hat` is the truth for this trial and is there for reference
/// mechanisms (the oracle); private mechanisms must not look at it.
using AttackMechanism =
    std::function<Vector(const LabeledDataset& data, const Vector& alpha_hat, Rng& rng)>;

inline AttackMechanism OracleMechanism() {
  return [](const LabeledDataset&, const Vector& alpha_hat, Rng&) { return alpha_hat; };
}

inline AttackMechanism OlsMechanism() {
  return [](const LabeledDataset& data, const Vector&, Rng&) { return OlsFit(data).weights; };
}

/// DP-SGD schedule used by the attack audits: clip 0.5, lr 0.1, batches of
/// 10, two epochs. A short schedule keeps the fit away from the OLS solution,
/// where the in-sample score no longer depends on the noise level.
inline DpSgdConfig AttackDpSgdDefaults() {
  DpSgdConfig cfg;
  cfg.clip_norm = 0.5;
  cfg.learning_rate = 0.1;
  cfg.batch_size = 10;
  cfg.epochs = 2;
  return cfg;
}

/// DP-SGD at a fixed noise multiplier (calibrate once outside the trial loop).
inline AttackMechanism DpSgdMechanism(DpSgdConfig cfg) {
  return [cfg = std::move(cfg)](const LabeledDataset& data, const Vector&, Rng& rng) {
    return DpSgdFit(data, cfg, std::nullopt, rng).weights;
  };
}

struct MembershipReport {
  double mean_in = 0.0;        ///< mean in-sample score
  double mean_out = 0.0;       ///< mean out-of-sample score
  double se_in = 0.0;          ///< standard errors from per-trial means
  double se_out = 0.0;
  std::int64_t n_trials = 0;
  double sum_in_scores = 0.0;  ///< mean over trials of Σ_i A_i (in-sample)
  double se_sum_in = 0.0;
  double mean_abs_out = 0.0;   ///< mean |A'| over out-of-sample points
  double mean_sq_error = 0.0;  ///< mean ‖M - α̂‖²
};

/// Samples n points from the projected model for truth α̂.
inline LabeledDataset SampleProjectedModel(const Vector& alpha_hat, double noise_var,
                                           Eigen::Index n, Rng& rng) {
  const Eigen::Index k = alpha_hat.size();
  LabeledDataset s;
  s.inputs.resize(n, k);
  s.labels.resize(n);
  s.task_index.assign(static_cast<std::size_t>(n), 1);
  const double sd = std::sqrt(noise_var);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) s.inputs(i, j) = rng.Normal();
    s.labels[i] = s.inputs.row(i).dot(alpha_hat) + sd * rng.Normal();
  }
  return s;
}

/// Membership experiment. Each trial draws α̂ from the prior at the
/// instance's ρ, a training set S of n2 points from the projected model
/// (x^B̂ is N(0, I_k) because B̂ is orthonormal, so it is sampled in k
/// dimensions directly), runs the mechanism, then scores every point of S
/// and n2 fresh points. Trial t uses rng.Split(t); aggregates are reduced in
/// trial order.
inline MembershipReport MembershipExperiment(const AttackInstance& inst,
                                             const AttackMechanism& mechanism, Eigen::Index n2,
                                             std::int64_t n_trials, const Rng& rng) {
  const int k = static_cast<int>(inst.k());
  if (k < 2) throw Error(ErrorCode::kKTooSmall, "attack needs k >= 2");
  if (n2 < 1) throw Error(ErrorCode::kEmptyData, "n2 must be positive");
  if (n_trials < 2) throw Error(ErrorCode::kInvalidArgument, "need at least 2 trials");

  const double noise_var = inst.sigma * inst.sigma + 1.0 - inst.rho * inst.rho;
  std::vector<double> trial_in(static_cast<std::size_t>(n_trials));
  std::vector<double> trial_out(static_cast<std::size_t>(n_trials));
  std::vector<double> trial_abs_out(static_cast<std::size_t>(n_trials));
  std::vector<double> trial_sq_err(static_cast<std::size_t>(n_trials));

  for (std::int64_t t = 0; t < n_trials; ++t) {
    Rng trial_rng = rng.Split(static_cast<std::uint64_t>(t));
    Rng prior_rng = trial_rng.Split(HashString("prior"));
    Rng data_rng = trial_rng.Split(HashString("data"));
    Rng fresh_rng = trial_rng.Split(HashString("fresh"));
    Rng mech_rng = trial_rng.Split(HashString("mechanism"));

    const Vector alpha = SamplePrior(k, inst.rho, prior_rng);
    const LabeledDataset s = SampleProjectedModel(alpha, noise_var, n2, data_rng);
    const LabeledDataset fresh = SampleProjectedModel(alpha, noise_var, n2, fresh_rng);
    const Vector m = mechanism(s, alpha, mech_rng);

    CompensatedSum in_sum;
    CompensatedSum out_sum;
    CompensatedSum abs_sum;
    for (Eigen::Index i = 0; i < n2; ++i) {
      in_sum.Add(AttackScore(s.inputs.row(i).transpose(), s.labels[i], m, alpha));
      const double a_out = AttackScore(fresh.inputs.row(i).transpose(), fresh.labels[i], m, alpha);
      out_sum.Add(a_out);
      abs_sum.Add(std::abs(a_out));
    }
    const auto idx = static_cast<std::size_t>(t);
    trial_in[idx] = in_sum.Value();
    trial_out[idx] = out_sum.Value() / static_cast<double>(n2);
    trial_abs_out[idx] = abs_sum.Value() / static_cast<double>(n2);
    trial_sq_err[idx] = (m - alpha).squaredNorm();
  }

  auto mean_se = [](const std::vector<double>& v) {
    CompensatedSum s;
    for (double x : v) s.Add(x);
    const double mean = s.Value() / static_cast<double>(v.size());
    CompensatedSum ss;
    for (double x : v) ss.Add((x - mean) * (x - mean));
    const double var = ss.Value() / static_cast<double>(v.size() - 1);
    return std::pair{mean, std::sqrt(var / static_cast<double>(v.size()))};
  };

  MembershipReport r;
  r.n_trials = n_trials;
  const auto [sum_mean, sum_se] = mean_se(trial_in);
  r.sum_in_scores = sum_mean;
  r.se_sum_in = sum_se;
  r.mean_in = sum_mean / static_cast<double>(n2);
  r.se_in = sum_se / static_cast<double>(n2);
  std::tie(r.mean_out, r.se_out) = mean_se(trial_out);
  r.mean_abs_out = mean_se(trial_abs_out).first;
  r.mean_sq_error = mean_se(trial_sq_err).first;
  return r;
}

/// Per-sample right-hand side of the DP tracing bound
///   E[A_in] <= E[A_out] + 2ε E|A_out| + 2δT + ∫_T^∞ P(|A| > t) dt,
/// with T = √(2 σ̂² k log(1/δ)) and the tail bounded by 2 exp(-t²/(2kσ̂²)).
inline double DpTracingBound(const MembershipReport& r, const AttackInstance& inst,
                             double epsilon, double delta) {
  const double k = static_cast<double>(inst.k());
  const double var = inst.effective_noise_var;
  const double t_level = std::sqrt(2.0 * var * k * std::log(1.0 / delta));
  const double tail = std::sqrt(2.0 * std::numbers::pi * k * var) *
                      std::erfc(t_level / std::sqrt(2.0 * k * var));
  return r.mean_out + 2.0 * epsilon * r.mean_abs_out + 2.0 * delta * t_level + tail;
}

inline nlohmann::json ToJson(const MembershipReport& r) {
  return {{"mean_in", r.mean_in},           {"mean_out", r.mean_out},
          {"se_in", r.se_in},               {"se_out", r.se_out},
          {"n_trials", r.n_trials},         {"sum_in_scores", r.sum_in_scores},
          {"se_sum_in", r.se_sum_in},       {"mean_abs_out", r.mean_abs_out},
          {"mean_sq_error", r.mean_sq_error}};
}

}  // namespace ptx

#endif  // PTX_TRACING_HPP_
