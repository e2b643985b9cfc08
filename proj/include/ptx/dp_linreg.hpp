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
#ifndef PTX_DP_LINREG_HPP_
#define PTX_DP_LINREG_HPP_

// Linear regression on squared loss without intercept: ordinary least squares
// and DP-SGD (per-example clipping plus Gaussian noise).
//
// DP-SGD shuffles once per epoch and walks fixed batches of `batch_size`
// rows (a trailing partial batch is skipped). Privacy is accounted as the
// sampled Gaussian mechanism with q = batch_size / n, the usual practice for
// shuffled batches even though the accountant assumes Poisson sampling.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptx/accountant.hpp"
#include "ptx/common.hpp"
#include "ptx/linalg.hpp"
#include "ptx/rng.hpp"
#include "ptx/synth.hpp"

namespace ptx {

enum class LrSchedule { kConstant, kCosine };

struct DpSgdConfig {
  double clip_norm = 0.5;
  double learning_rate = 0.1;
  int epochs = 50;
  int batch_size = 100;
  double noise_multiplier = 0.0;
  LrSchedule lr_schedule = LrSchedule::kConstant;
  std::optional<Vector> init;  ///< zeros when unset
  double delta = 1e-5;         ///< δ used to report ε when no target is given

  void Validate() const {
    if (!(clip_norm > 0.0)) throw Error(ErrorCode::kInvalidArgument, "clip_norm must be positive");
    if (!(learning_rate > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "learning_rate must be positive");
    }
    if (epochs < 0) throw Error(ErrorCode::kInvalidArgument, "epochs must be nonnegative");
    if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch_size must be positive");
    if (!(noise_multiplier >= 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "noise_multiplier must be nonnegative");
    }
    if (!(delta > 0.0 && delta < 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "delta must lie in (0, 1)");
    }
  }
};

struct FitResult {
  Vector weights;
  std::int64_t steps_taken = 0;
  std::optional<PrivacyBudget> privacy_spent;  ///< nullopt for nonprivate fits
  std::vector<double> epoch_losses;  ///< diagnostic only; not covered by the DP guarantee
  double noise_multiplier = 0.0;
  double sampling_rate = 1.0;
};

/// Ordinary least squares via Householder QR.
inline FitResult OlsFit(const LabeledDataset& data) {
  data.Validate();
  if (data.empty()) throw Error(ErrorCode::kEmptyData, "dataset is empty");
  FitResult out;
  out.weights = LeastSquares(data.inputs, data.labels);
  out.epoch_losses.push_back(
      0.5 * (data.inputs * out.weights - data.labels).squaredNorm() / data.rows());
  return out;
}

/// Half mean squared residual.
inline double EmpiricalLoss(const LabeledDataset& data, const Vector& w) {
  return 0.5 * (data.inputs * w - data.labels).squaredNorm() / static_cast<double>(data.rows());
}

/// Called with the norm of every per-example gradient after clipping.
using ClipObserver = std::function<void(double clipped_norm)>;

/// Steps DP-SGD would take on n rows under `cfg`.
inline std::int64_t DpSgdSteps(Eigen::Index n, const DpSgdConfig& cfg) {
  return static_cast<std::int64_t>(cfg.epochs) * (n / cfg.batch_size);
}

/// DP-SGD on ½(xᵀw - y)². With `target`, the noise multiplier is calibrated
/// to the realized schedule and `cfg.noise_multiplier` is ignored.
inline FitResult DpSgdFit(const LabeledDataset& data, const DpSgdConfig& cfg,
                          std::optional<PrivacyBudget> target, Rng& rng,
                          const ClipObserver& observer = nullptr) {
  data.Validate();
  cfg.Validate();
  if (data.empty()) throw Error(ErrorCode::kEmptyData, "dataset is empty");
  const Eigen::Index n = data.rows();
  const Eigen::Index p = data.dim();
  if (cfg.batch_size > n) {
    throw Error(ErrorCode::kInvalidArgument, "batch_size " + std::to_string(cfg.batch_size) +
                                                 " exceeds n=" + std::to_string(n));
  }
  const Eigen::Index batches = n / cfg.batch_size;
  const std::int64_t total_steps = DpSgdSteps(n, cfg);
  const double q = static_cast<double>(cfg.batch_size) / static_cast<double>(n);

  double sigma = cfg.noise_multiplier;
  if (target) sigma = CalibrateNoise(*target, total_steps, q);

  FitResult out;
  out.weights = cfg.init ? *cfg.init : Vector::Zero(p);
  if (out.weights.size() != p) {
    throw Error(ErrorCode::kDimensionMismatch, "init has wrong length");
  }
  out.noise_multiplier = sigma;
  out.sampling_rate = q;

  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;

  const double noise_std = sigma * cfg.clip_norm / cfg.batch_size;
  Vector grad_sum(p);
  Vector g(p);
  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with our own stream so the order is platform independent.
    for (Eigen::Index i = n - 1; i > 0; --i) {
      const auto j = static_cast<Eigen::Index>(rng.UniformIndex(static_cast<std::uint64_t>(i + 1)));
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    for (Eigen::Index b = 0; b < batches; ++b) {
      grad_sum.setZero();
      for (Eigen::Index r = 0; r < cfg.batch_size; ++r) {
        const Eigen::Index row = perm[static_cast<std::size_t>(b * cfg.batch_size + r)];
        const double residual = data.inputs.row(row).dot(out.weights) - data.labels[row];
        g = residual * data.inputs.row(row).transpose();
        const double norm = g.norm();
        if (norm > cfg.clip_norm) g *= cfg.clip_norm / norm;
        if (observer) observer(g.norm());
        grad_sum += g;
      }
      Vector update = grad_sum / static_cast<double>(cfg.batch_size);
      if (sigma > 0.0) {
        for (Eigen::Index j = 0; j < p; ++j) update[j] += noise_std * rng.Normal();
      }
      double lr = cfg.learning_rate;
      if (cfg.lr_schedule == LrSchedule::kCosine && total_steps > 0) {
        lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                                    static_cast<double>(total_steps)));
      }
      out.weights -= lr * update;
      ++step;
    }
    out.epoch_losses.push_back(EmpiricalLoss(data, out.weights));
  }
  out.steps_taken = step;
  if (sigma > 0.0) {
    const double delta = target ? target->delta : cfg.delta;
    out.privacy_spent =
        PrivacyBudget{ScheduleEpsilon({out.steps_taken, q, sigma}, delta), delta};
  }
  return out;
}

/// ⌈k/err + k/(ε√err)⌉ private samples; ε = +inf gives the nonprivate ⌈k/err⌉.
inline std::int64_t RequiredPrivateSamples(int k, double err, double epsilon) {
  if (k < 1 || !(err > 0.0) || !(epsilon > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "need k >= 1, err > 0, epsilon > 0");
  }
  double need = k / err;
  if (std::isfinite(epsilon)) need += k / (epsilon * std::sqrt(err));
  return static_cast<std::int64_t>(std::ceil(need));
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline DpSgdConfig DpSgdConfigFromJson(const nlohmann::json& j) {
  DpSgdConfig c;
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.noise_multiplier = j.value("noise_multiplier", c.noise_multiplier);
  c.delta = j.value("delta", c.delta);
  const std::string sched = j.value("lr_schedule", std::string("constant"));
  if (sched == "constant") {
    c.lr_schedule = LrSchedule::kConstant;
  } else if (sched == "cosine") {
    c.lr_schedule = LrSchedule::kCosine;
  } else {
    throw Error(ErrorCode::kConfig, "lr_schedule must be constant or cosine");
  }
  if (j.contains("init") && !j["init"].is_null()) {
    const auto& init = j["init"];
    if (init.is_string()) {
      if (init.get<std::string>() != "zeros") {
        throw Error(ErrorCode::kConfig, "init must be \"zeros\" or an array");
      }
    } else {
      Vector v(static_cast<Eigen::Index>(init.size()));
      for (std::size_t i = 0; i < init.size(); ++i) {
        v[static_cast<Eigen::Index>(i)] = init[i].get<double>();
      }
      c.init = std::move(v);
    }
  }
  c.Validate();
  return c;
}

inline nlohmann::json ToJson(const DpSgdConfig& c) {
  return {{"clip_norm", c.clip_norm},
          {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"noise_multiplier", c.noise_multiplier},
          {"lr_schedule", c.lr_schedule == LrSchedule::kCosine ? "cosine" : "constant"},
          {"delta", c.delta}};
}

inline nlohmann::json ToJson(const FitResult& r) {
  nlohmann::json weights = nlohmann::json::array();
  for (Eigen::Index i = 0; i < r.weights.size(); ++i) weights.push_back(r.weights[i]);
  nlohmann::json privacy = "nonprivate";
  if (r.privacy_spent) {
    privacy = {{"epsilon", r.privacy_spent->epsilon}, {"delta", r.privacy_spent->delta}};
  }
  return {{"weights", weights},
          {"steps_taken", r.steps_taken},
          {"privacy_spent", privacy},
          {"noise_multiplier", r.noise_multiplier},
          {"sampling_rate", r.sampling_rate},
          {"epoch_losses", r.epoch_losses}};
}

}  // namespace ptx

#endif  // PTX_DP_LINREG_HPP_
