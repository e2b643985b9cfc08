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
#ifndef PTX_TWO_PHASE_HPP_
#define PTX_TWO_PHASE_HPP_

// Public-to-private transfer in two phases:
//   1. estimate a k-dimensional subspace B̂ from public data only (or take an
//      oracle basis),
//   2. project the private inputs to x ↦ B̂ᵀx and fit α̂ with DP-SGD in k
//      dimensions; the estimate is the lift B̂α̂.
// The privacy guarantee covers the private rows, which only phase 2 reads.

#include <functional>
#include <optional>
#include <utility>
#include <variant>

#include <nlohmann/json.hpp>

#include "ptx/accountant.hpp"
#include "ptx/common.hpp"
#include "ptx/dp_linreg.hpp"
#include "ptx/linalg.hpp"
#include "ptx/mom.hpp"
#include "ptx/rng.hpp"
#include "ptx/synth.hpp"

namespace ptx {

/// Where phase 1 gets its subspace: public samples for the method-of-moments
/// estimator, or a basis supplied directly (true B, a γ-perturbed B, ...).
using SubspaceSource = std::variant<std::reference_wrapper<const LabeledDataset>, OrthonormalBasis>;

struct TwoPhaseResult {
  OrthonormalBasis subspace;
  Vector alpha_hat;
  Vector lifted;                        ///< subspace.columns() * alpha_hat
  std::optional<double> sin_theta;      ///< filled when ground truth is given
  std::optional<double> excess_risk;    ///< filled when ground truth is given
  std::optional<PrivacyBudget> privacy_spent;
  FitResult fit;
};

/// Inputs replaced by their coordinates xᵀB̂ in the basis; labels and task
/// indices unchanged.
inline LabeledDataset ProjectDataset(const LabeledDataset& data, const OrthonormalBasis& basis) {
  data.Validate();
  if (data.dim() != basis.ambient_dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "dataset dimension differs from basis");
  }
  LabeledDataset out;
  out.inputs = data.inputs * basis.columns();
  out.labels = data.labels;
  out.task_index = data.task_index;
  return out;
}

/// Phase 1. Takes nothing but the public side.
inline OrthonormalBasis EstimatePublicSubspace(const SubspaceSource& source, int k) {
  if (const auto* basis = std::get_if<OrthonormalBasis>(&source)) {
    if (basis->dim() != k) {
      throw Error(ErrorCode::kInvalidK, "oracle basis has dimension " +
                                            std::to_string(basis->dim()) + ", expected k=" +
                                            std::to_string(k));
    }
    return *basis;
  }
  const LabeledDataset& pub = std::get<std::reference_wrapper<const LabeledDataset>>(source).get();
  return EstimateSubspaceMom(pub, k).basis;
}

/// Squared bias of the best predictor inside span(basis):
/// ‖B̂B̂ᵀBα - Bα‖² for the private task.
inline double ProjectionBias(const OrthonormalBasis& basis, const RegressionInstance& inst) {
  if (basis.ambient_dim() != inst.ambient_dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "basis and instance disagree on d");
  }
  return basis.Residual(inst.PrivateParameter()).squaredNorm();
}

/// Runs both phases. `target` calibrates DP-SGD noise to (ε, δ); without it
/// `dp_cfg.noise_multiplier` is used as given. When `truth` is supplied the
/// result carries sin θ(B̂, B) and the population excess risk of B̂α̂.
inline TwoPhaseResult TwoPhaseTransfer(const SubspaceSource& source,
                                       const LabeledDataset& private_data, int k,
                                       const DpSgdConfig& dp_cfg,
                                       std::optional<PrivacyBudget> target, Rng& rng,
                                       const RegressionInstance* truth = nullptr) {
  if (private_data.empty()) throw Error(ErrorCode::kEmptyPrivate, "private dataset is empty");
  if (k < 1 || k > private_data.dim()) {
    throw Error(ErrorCode::kInvalidK, "need 1 <= k <= d");
  }
  OrthonormalBasis subspace = EstimatePublicSubspace(source, k);
  const LabeledDataset projected = ProjectDataset(private_data, subspace);
  FitResult fit = DpSgdFit(projected, dp_cfg, target, rng);

  TwoPhaseResult out{std::move(subspace), fit.weights, Vector(), std::nullopt, std::nullopt,
                     fit.privacy_spent, std::move(fit)};
  out.lifted = out.subspace.columns() * out.alpha_hat;
  if (truth != nullptr) {
    out.sin_theta = PrincipalAngleSin(out.subspace, truth->basis);
    out.excess_risk = PopulationExcessRisk(out.lifted, *truth);
  }
  return out;
}

inline nlohmann::json ToJson(const TwoPhaseResult& r) {
  nlohmann::json j = {{"k", r.subspace.dim()},
                      {"alpha_hat", VectorToJson(r.alpha_hat)},
                      {"lifted", VectorToJson(r.lifted)},
                      {"subspace", MatrixToJson(r.subspace.columns())},
                      {"steps_taken", r.fit.steps_taken},
                      {"noise_multiplier", r.fit.noise_multiplier}};
  j["sin_theta"] = r.sin_theta ? nlohmann::json(*r.sin_theta) : nlohmann::json(nullptr);
  j["excess_risk"] = r.excess_risk ? nlohmann::json(*r.excess_risk) : nlohmann::json(nullptr);
  if (r.privacy_spent) {
    j["privacy_spent"] = {{"epsilon", r.privacy_spent->epsilon},
                          {"delta", r.privacy_spent->delta}};
  } else {
    j["privacy_spent"] = "nonprivate";
  }
  return j;
}

}  // namespace ptx

#endif  // PTX_TWO_PHASE_HPP_
