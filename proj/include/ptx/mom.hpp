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
#ifndef PTX_MOM_HPP_
#define PTX_MOM_HPP_

// Method-of-moments estimate of the shared subspace from public data.
//
// The estimator is the top-k eigenspace of M̂ = (1/n) Σ y_i² x_i x_iᵀ. For
// x ~ N(0, I_d) and y = xᵀθ_j + η,
//
//   E[y² x xᵀ | task j] = (‖θ_j‖² + σ²) I + 2 θ_j θ_jᵀ,
//
// so the population moment is a multiple of the identity plus
// 2 B (AᵀA/t) Bᵀ. The identity part shifts every eigenvalue by the same
// amount and leaves the eigenvectors alone, hence no centering term.

#include <cmath>
#include <cstdint>
#include <iostream>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptx/common.hpp"
#include "ptx/linalg.hpp"
#include "ptx/synth.hpp"

namespace ptx {

struct MomReport {
  OrthonormalBasis basis;
  Vector moment_eigenvalues;  ///< full spectrum of M̂, descending
  double spectral_gap = 0.0;  ///< λ_k - λ_{k+1} (λ_{d+1} taken as 0)
  bool degenerate = false;    ///< spectral_gap below Tolerances::kDegenerateGap
};

/// Rows per partial sum. Fixed so the reduction order never depends on the
/// number of shards.
inline constexpr Eigen::Index kMomBlockRows = 256;

/// M̂ = (1/n) Σ y_i² x_i x_iᵀ. Rows are grouped into fixed blocks; block
/// partials are combined entrywise with compensated summation in block order,
/// so the result is bitwise identical for any `shards` >= 1.
inline Matrix LabelWeightedMoment(const LabeledDataset& data, int shards = 1) {
  data.Validate();
  const Eigen::Index n = data.rows();
  const Eigen::Index d = data.dim();
  if (n == 0) throw Error(ErrorCode::kEmptyData, "public dataset is empty");
  const Eigen::Index num_blocks = (n + kMomBlockRows - 1) / kMomBlockRows;
  std::vector<Matrix> partials(static_cast<std::size_t>(num_blocks));

  auto compute_block = [&](Eigen::Index b) {
    const Eigen::Index start = b * kMomBlockRows;
    const Eigen::Index len = std::min(kMomBlockRows, n - start);
    const auto x = data.inputs.middleRows(start, len);
    const Vector w = data.labels.segment(start, len).array().square();
    Matrix weighted = x;
    weighted.array().colwise() *= w.array();
    partials[static_cast<std::size_t>(b)].noalias() = x.transpose() * weighted;
  };

  shards = std::max(1, std::min<int>(shards, static_cast<int>(num_blocks)));
  if (shards == 1) {
    for (Eigen::Index b = 0; b < num_blocks; ++b) compute_block(b);
  } else {
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(shards));
    for (int s = 0; s < shards; ++s) {
      workers.emplace_back([&, s] {
        for (Eigen::Index b = s; b < num_blocks; b += shards) compute_block(b);
      });
    }
    for (auto& w : workers) w.join();
  }

  Matrix m(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      CompensatedSum s;
      for (const Matrix& p : partials) s.Add(p(i, j));
      m(i, j) = s.Value() / static_cast<double>(n);
      m(j, i) = m(i, j);
    }
  }
  return m;
}

/// Top-k eigenspace of the label-weighted second moment of `public_data`.
/// Only the inputs and labels are used; task indices are ignored.
inline MomReport EstimateSubspaceMom(const LabeledDataset& public_data, int k, int shards = 1) {
  if (public_data.empty()) throw Error(ErrorCode::kEmptyData, "public dataset is empty");
  const Eigen::Index d = public_data.dim();
  if (k < 1 || k > d || k > public_data.rows()) {
    throw Error(ErrorCode::kInvalidK, "need 1 <= k <= min(d, n1), got k=" + std::to_string(k));
  }
  const SymmetricEigenResult eig = SymmetricEigen(LabelWeightedMoment(public_data, shards));
  const double next = k < d ? eig.values[k] : 0.0;
  const double gap = eig.values[k - 1] - next;
  MomReport report{OrthonormalBasis::FromOrthonormal(eig.vectors.leftCols(k)), eig.values, gap,
                   gap < Tolerances::kDegenerateGap};
  if (report.degenerate) {
    std::clog << "warning: method-of-moments spectral gap " << gap << " is degenerate\n";
  }
  return report;
}

/// ⌈d k² / γ²⌉ public samples for a γ-accurate subspace (up to log factors).
inline std::int64_t RequiredPublicSamples(int d, int k, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw Error(ErrorCode::kInvalidGamma, "gamma must lie in (0, 1]");
  }
  if (d < 1 || k < 1) throw Error(ErrorCode::kInvalidDims, "d and k must be positive");
  const double need = static_cast<double>(d) * k * k / (gamma * gamma);
  return static_cast<std::int64_t>(std::ceil(need));
}

inline nlohmann::json MatrixToJson(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json VectorToJson(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Matrix MatrixFromJson(const nlohmann::json& j) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) {
    throw Error(ErrorCode::kConfig, "expected a nonempty array of rows");
  }
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw Error(ErrorCode::kConfig, "ragged matrix rows");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

inline Vector VectorFromJson(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(ErrorCode::kConfig, "expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

/// `{ "k": int, "eigenvalues": [...], "spectral_gap": real, "basis": [[...]] }`
/// with `basis` stored row by row (d rows of k entries).
inline nlohmann::json ToJson(const MomReport& r) {
  return {{"k", r.basis.dim()},
          {"eigenvalues", VectorToJson(r.moment_eigenvalues)},
          {"spectral_gap", r.spectral_gap},
          {"basis", MatrixToJson(r.basis.columns())}};
}

}  // namespace ptx

#endif  // PTX_MOM_HPP_
