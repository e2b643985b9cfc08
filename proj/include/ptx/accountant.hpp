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
#ifndef PTX_ACCOUNTANT_HPP_
#define PTX_ACCOUNTANT_HPP_

// Rényi-DP accounting for the sampled Gaussian mechanism.
//
// One step releases (sum of clipped gradients over a batch sampled at rate q)
// + N(0, σ²C²). At integer order α the RDP of one step is
//
//   (1/(α-1)) log Σ_{i=0}^{α} C(α,i) (1-q)^{α-i} q^i exp((i² - i) / (2σ²)),
//
// which reduces to α/(2σ²) at q = 1. Steps compose additively. The sensitivity
// is one clip norm, i.e. the usual DP-SGD accounting; a replace-one neighbour
// (which moves the sum by up to 2C) would need σ halved.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ptx/common.hpp"

namespace ptx {

struct MechanismSchedule {
  std::int64_t steps = 0;
  double sampling_rate = 1.0;
  double noise_multiplier = 1.0;

  void Validate() const {
    if (steps < 0) throw Error(ErrorCode::kInvalidArgument, "steps must be nonnegative");
    if (!(sampling_rate > 0.0 && sampling_rate <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "sampling_rate must lie in (0, 1]");
    }
    if (!(noise_multiplier > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "noise_multiplier must be positive");
    }
  }
};

struct PrivacyBudget {
  double epsilon = 1.0;
  double delta = 1e-5;

  void Validate() const {
    if (!(epsilon > 0.0)) throw Error(ErrorCode::kInvalidArgument, "epsilon must be positive");
    if (!(delta > 0.0 && delta < 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "delta must lie in (0, 1)");
    }
  }
};

struct RdpPoint {
  double order;
  double rdp;
};

using RdpCurve = std::vector<RdpPoint>;

/// {1.25, 1.5, 1.75, 2, 3, ..., 256}.
inline std::vector<double> DefaultOrders() {
  std::vector<double> orders = {1.25, 1.5, 1.75};
  for (int a = 2; a <= 256; ++a) orders.push_back(a);
  return orders;
}

namespace internal {

inline double LogAddExp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

inline constexpr int kMaxIntegerOrder = 512;

// log C(a, i) for 0 <= i <= a <= kMaxIntegerOrder, built once.
inline const std::vector<std::vector<double>>& LogBinomialTable() {
  static const std::vector<std::vector<double>> table = [] {
    std::vector<std::vector<double>> t(kMaxIntegerOrder + 1);
    for (int a = 0; a <= kMaxIntegerOrder; ++a) {
      t[a].resize(static_cast<std::size_t>(a) + 1);
      for (int i = 0; i <= a; ++i) {
        t[a][i] = std::lgamma(a + 1.0) - std::lgamma(i + 1.0) - std::lgamma(a - i + 1.0);
      }
    }
    return t;
  }();
  return table;
}

// RDP of a single sampled-Gaussian step at integer order alpha >= 2.
inline double SampledGaussianRdpInt(double q, double sigma, int alpha) {
  if (q == 1.0) return alpha / (2.0 * sigma * sigma);
  if (alpha > kMaxIntegerOrder) {
    throw Error(ErrorCode::kInvalidOrder, "orders above 512 are not supported for q < 1");
  }
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  const std::vector<double>& log_binom_row = LogBinomialTable()[alpha];
  double log_a = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= alpha; ++i) {
    const double log_binom = log_binom_row[i];
    const double term = log_binom + i * log_q + (alpha - i) * log_1mq +
                        (static_cast<double>(i) * i - i) / (2.0 * sigma * sigma);
    log_a = LogAddExp(log_a, term);
  }
  return std::max(log_a, 0.0) / (alpha - 1);
}

}  // namespace internal

/// RDP of the whole schedule at each order (> 1). Integer orders are exact;
/// a fractional order α with q < 1 is bounded by the value at ⌈α⌉, which is
/// valid because Rényi divergence is nondecreasing in the order, and by the
/// full-batch value α/(2σ²).
inline RdpCurve ComputeRdpCurve(const MechanismSchedule& sched, std::span<const double> orders) {
  sched.Validate();
  RdpCurve curve;
  curve.reserve(orders.size());
  const double sigma = sched.noise_multiplier;
  const double t = static_cast<double>(sched.steps);
  for (double a : orders) {
    if (!(a > 1.0) || !std::isfinite(a)) {
      throw Error(ErrorCode::kInvalidOrder, "RDP orders must be finite and > 1");
    }
    double per_step;
    if (sched.sampling_rate == 1.0) {
      per_step = a / (2.0 * sigma * sigma);
    } else {
      const int ceil_a = std::max(2, static_cast<int>(std::ceil(a)));
      // Subsampling never hurts (Rényi divergence is jointly quasi-convex), so
      // the full-batch value caps the ceiling bound at fractional orders.
      per_step = std::min(internal::SampledGaussianRdpInt(sched.sampling_rate, sigma, ceil_a),
                          a / (2.0 * sigma * sigma));
    }
    curve.push_back({a, t * per_step});
  }
  return curve;
}

/// min over orders of rdp(α) + log(1/δ)/(α - 1).
inline double RdpToEpsilon(const RdpCurve& curve, double delta) {
  if (curve.empty()) throw Error(ErrorCode::kEmptyCurve, "RDP curve is empty");
  if (!(delta > 0.0 && delta < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "delta must lie in (0, 1)");
  }
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : curve) {
    best = std::min(best, p.rdp + std::log(1.0 / delta) / (p.order - 1.0));
  }
  return best;
}

/// ε of a schedule at the default order grid. A schedule with zero steps
/// releases nothing and reports 0.
inline double ScheduleEpsilon(const MechanismSchedule& sched, double delta) {
  sched.Validate();
  if (sched.steps == 0) return 0.0;
  static const std::vector<double> kOrders = DefaultOrders();
  return RdpToEpsilon(ComputeRdpCurve(sched, kOrders), delta);
}

/// Smallest noise multiplier (to within the bisection tolerance) whose ε at
/// `target.delta` lies in [target.epsilon - 1e-4, target.epsilon]. If the
/// lower bracket already meets the target (e.g. steps = 0) it is returned.
inline double CalibrateNoise(const PrivacyBudget& target, std::int64_t steps,
                             double sampling_rate) {
  target.Validate();
  auto eps_at = [&](double sigma) {
    return ScheduleEpsilon({steps, sampling_rate, sigma}, target.delta);
  };
  double lo = Tolerances::kMinNoiseMultiplier;
  double hi = Tolerances::kMaxNoiseMultiplier;
  if (eps_at(lo) <= target.epsilon) return lo;
  if (eps_at(hi) > target.epsilon) {
    throw Error(ErrorCode::kUnachievable,
                "epsilon " + FormatDouble(target.epsilon) + " needs noise_multiplier > 1e6");
  }
  // Invariant: eps(lo) > target >= eps(hi).
  double eps_hi = eps_at(hi);
  for (int iter = 0; iter < 200; ++iter) {
    if (eps_hi >= target.epsilon - Tolerances::kEpsilonCalibration) break;
    const double mid = std::sqrt(lo * hi);
    const double eps_mid = eps_at(mid);
    if (eps_mid > target.epsilon) {
      lo = mid;
    } else {
      hi = mid;
      eps_hi = eps_mid;
    }
  }
  return hi;
}

}  // namespace ptx

#endif  // PTX_ACCOUNTANT_HPP_
