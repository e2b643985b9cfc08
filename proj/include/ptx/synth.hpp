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
#ifndef PTX_SYNTH_HPP_
#define PTX_SYNTH_HPP_

// Shared-subspace linear regression model: y = xᵀBα_j + η with x ~ N(0, I_d),
// η ~ N(0, σ²). Tasks 1..t are public; task t+1 is the private task.

#include <cmath>
#include <cstdint>
#include <iostream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ptx/common.hpp"
#include "ptx/linalg.hpp"
#include "ptx/rng.hpp"

namespace ptx {

/// Ground truth for one problem: B (d x k), task matrix A (row j = α_jᵀ),
/// noise level σ and the private task α_{t+1}.
struct RegressionInstance {
  OrthonormalBasis basis;
  Matrix tasks;
  double noise_std = 0.0;
  Vector private_task;

  Eigen::Index ambient_dim() const { return basis.ambient_dim(); }
  Eigen::Index subspace_dim() const { return basis.dim(); }
  Eigen::Index num_tasks() const { return tasks.rows(); }

  /// Bα_{t+1}, the private regression vector in R^d.
  Vector PrivateParameter() const { return basis.columns() * private_task; }

  /// Bα_j for a public task, 1-based.
  Vector TaskParameter(int task) const {
    return basis.columns() * tasks.row(task - 1).transpose();
  }

  void Validate() const {
    if (tasks.cols() != basis.dim() || private_task.size() != basis.dim()) {
      throw Error(ErrorCode::kDimensionMismatch, "task vectors must have length k");
    }
    if (!tasks.allFinite() || !private_task.allFinite()) {
      throw Error(ErrorCode::kInvalidArgument, "task vectors must be finite");
    }
    if (!(noise_std >= 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "noise_std must be nonnegative");
    }
  }
};

/// Rows of (task_index, y, x). Task indices are 1-based; the private task is
/// t+1.
struct LabeledDataset {
  Matrix inputs;
  Vector labels;
  std::vector<int> task_index;

  Eigen::Index rows() const { return inputs.rows(); }
  Eigen::Index dim() const { return inputs.cols(); }
  bool empty() const { return inputs.rows() == 0; }

  void Validate() const {
    if (labels.size() != inputs.rows() ||
        static_cast<Eigen::Index>(task_index.size()) != inputs.rows()) {
      throw Error(ErrorCode::kDimensionMismatch, "dataset field row counts disagree");
    }
    for (int t : task_index) {
      if (t < 1) throw Error(ErrorCode::kInvalidArgument, "task_index entries are 1-based");
    }
  }
};

/// Task-diversity summary of AᵀA/t.
struct DiversityStats {
  double nu = 0.0;         ///< smallest eigenvalue of AᵀA/t
  double kappa_bar = 0.0;  ///< tr(AᵀA/t) / (k ν)
  double kappa = 0.0;      ///< largest eigenvalue / ν
};

namespace internal {

inline Vector RandomVectorWithNorm(Eigen::Index k, double norm, Rng& rng) {
  Vector v;
  double n = 0.0;
  do {
    v = rng.NormalVector(k);
    n = v.norm();
  } while (n == 0.0);
  return v * (norm / n);
}

}  // namespace internal

/// Random instance: B from the QR of a Gaussian d x k matrix, each task a
/// Gaussian k-vector rescaled to `task_norm`. The private task is an
/// independent draw of the same law unless supplied.
inline RegressionInstance RandomInstance(int d, int k, int t, double noise_std, double task_norm,
                                         Rng& rng,
                                         std::optional<Vector> private_task = std::nullopt) {
  if (k < 1 || k > d || t < 1) {
    throw Error(ErrorCode::kInvalidDims, "need 1 <= k <= d and t >= 1");
  }
  if (!(noise_std >= 0.0) || !(task_norm >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "noise_std and task_norm must be nonnegative");
  }
  Rng basis_rng = rng.Split(HashString("basis"));
  Rng task_rng = rng.Split(HashString("tasks"));
  Rng private_rng = rng.Split(HashString("private_task"));

  OrthonormalBasis basis = Orthonormalize(basis_rng.NormalMatrix(d, k));
  Matrix tasks(t, k);
  for (int j = 0; j < t; ++j) {
    tasks.row(j) = internal::RandomVectorWithNorm(k, task_norm, task_rng).transpose();
  }
  Vector alpha = private_task ? *private_task
                              : internal::RandomVectorWithNorm(k, task_norm, private_rng);
  RegressionInstance inst{std::move(basis), std::move(tasks), noise_std, std::move(alpha)};
  inst.Validate();
  return inst;
}

namespace internal {

// Row i draws x_i (d normals) then η_i, in that order, from `rng`.
inline LabeledDataset SampleRows(const RegressionInstance& inst, Eigen::Index n,
                                 const std::vector<Vector>& thetas, bool private_task,
                                 Rng& rng) {
  const Eigen::Index d = inst.ambient_dim();
  const int t = static_cast<int>(inst.num_tasks());
  LabeledDataset out;
  out.inputs.resize(n, d);
  out.labels.resize(n);
  out.task_index.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int task = private_task ? t + 1 : static_cast<int>(i % t) + 1;
    const Vector& theta = thetas[static_cast<std::size_t>(private_task ? 0 : task - 1)];
    for (Eigen::Index j = 0; j < d; ++j) out.inputs(i, j) = rng.Normal();
    const double noise = rng.Normal();
    out.labels[i] = out.inputs.row(i).dot(theta) + inst.noise_std * noise;
    out.task_index[static_cast<std::size_t>(i)] = task;
  }
  return out;
}

}  // namespace internal

/// n1 public samples with equal allocation over the t public tasks (task
/// index cycles 1..t). A remainder n1 mod t is dropped with a warning.
inline LabeledDataset SamplePublic(const RegressionInstance& inst, Eigen::Index n1, Rng& rng) {
  inst.Validate();
  const Eigen::Index t = inst.num_tasks();
  const Eigen::Index kept = (n1 / t) * t;
  if (kept != n1) {
    std::clog << "warning: n1=" << n1 << " is not divisible by t=" << t << "; dropping "
              << (n1 - kept) << " samples\n";
  }
  std::vector<Vector> thetas;
  thetas.reserve(static_cast<std::size_t>(t));
  for (int j = 1; j <= t; ++j) thetas.push_back(inst.TaskParameter(j));
  return internal::SampleRows(inst, kept, thetas, /*private_task=*/false, rng);
}

/// n2 samples from the private task t+1.
inline LabeledDataset SamplePrivate(const RegressionInstance& inst, Eigen::Index n2, Rng& rng) {
  inst.Validate();
  if (n2 < 0) throw Error(ErrorCode::kInvalidArgument, "n2 must be nonnegative");
  return internal::SampleRows(inst, n2, {inst.PrivateParameter()}, /*private_task=*/true, rng);
}

/// L(w) - L(Bα_{t+1}) = ½‖w - Bα_{t+1}‖², exact for isotropic Gaussian x.
inline double PopulationExcessRisk(const Vector& w, const RegressionInstance& inst) {
  if (w.size() != inst.ambient_dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "w has wrong length");
  }
  if (!w.allFinite()) throw Error(ErrorCode::kInvalidArgument, "w must be finite");
  return 0.5 * (w - inst.PrivateParameter()).squaredNorm();
}

struct MonteCarloEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

/// Monte-Carlo estimate of the excess risk, averaging
/// ½(xᵀw - y)² - ½(xᵀθ - y)² over fresh private-task draws.
inline MonteCarloEstimate MonteCarloExcessRisk(const Vector& w, const RegressionInstance& inst,
                                               Eigen::Index n, Rng& rng) {
  if (w.size() != inst.ambient_dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "w has wrong length");
  }
  const Vector theta = inst.PrivateParameter();
  const Eigen::Index d = inst.ambient_dim();
  CompensatedSum sum;
  CompensatedSum sum_sq;
  Vector x(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) x[j] = rng.Normal();
    const double y = x.dot(theta) + inst.noise_std * rng.Normal();
    const double a = x.dot(w) - y;
    const double b = x.dot(theta) - y;
    const double v = 0.5 * (a * a - b * b);
    sum.Add(v);
    sum_sq.Add(v * v);
  }
  const double mean = sum.Value() / static_cast<double>(n);
  const double var = std::max(sum_sq.Value() / static_cast<double>(n) - mean * mean, 0.0);
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

/// ν, κ̄, κ from the eigenvalues of AᵀA/t. ν = 0 (and κ = κ̄ = inf) is a
/// valid outcome when the tasks do not span R^k.
inline DiversityStats ComputeDiversityStats(const RegressionInstance& inst) {
  const Eigen::Index k = inst.subspace_dim();
  const double t = static_cast<double>(inst.num_tasks());
  const Matrix cov = inst.tasks.transpose() * inst.tasks / t;
  const Vector eig = SymmetricEigen(cov).values;
  DiversityStats s;
  const double top = eig[0];
  double nu = eig[k - 1];
  if (nu <= Tolerances::kRankRatio * std::max(top, 1.0)) nu = 0.0;
  s.nu = nu;
  if (nu > 0.0) {
    s.kappa_bar = cov.trace() / (static_cast<double>(k) * nu);
    s.kappa = top / nu;
  } else {
    s.kappa_bar = std::numeric_limits<double>::infinity();
    s.kappa = std::numeric_limits<double>::infinity();
  }
  return s;
}

/// σ² + ‖(I - B̂B̂ᵀ)Bα_{t+1}‖²: noise variance of the private task once inputs
/// are projected onto span(bhat).
inline double ResidualNoiseVariance(const RegressionInstance& inst, const OrthonormalBasis& bhat) {
  if (bhat.ambient_dim() != inst.ambient_dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "bhat ambient dimension differs from instance");
  }
  return inst.noise_std * inst.noise_std + bhat.Residual(inst.PrivateParameter()).squaredNorm();
}

// ---------------------------------------------------------------------------
// CSV: header `task_index,y,x_1,...,x_d`, shortest round-trip decimals.
// ---------------------------------------------------------------------------

inline void WriteDatasetCsv(std::ostream& out, const LabeledDataset& data) {
  data.Validate();
  out << "task_index,y";
  for (Eigen::Index j = 0; j < data.dim(); ++j) out << ",x_" << (j + 1);
  out << '\n';
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    out << data.task_index[static_cast<std::size_t>(i)] << ',' << FormatDouble(data.labels[i]);
    for (Eigen::Index j = 0; j < data.dim(); ++j) out << ',' << FormatDouble(data.inputs(i, j));
    out << '\n';
  }
}

namespace internal {

inline std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace internal

inline LabeledDataset ReadDatasetCsv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kEmptyInput, "dataset CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = internal::SplitCsvLine(line);
  if (header.size() < 3 || header[0] != "task_index" || header[1] != "y") {
    throw Error(ErrorCode::kMalformedCsv, "expected header task_index,y,x_1..x_d");
  }
  const std::size_t d = header.size() - 2;
  for (std::size_t j = 0; j < d; ++j) {
    if (header[j + 2] != "x_" + std::to_string(j + 1)) {
      throw Error(ErrorCode::kMalformedCsv, "unexpected column name " + header[j + 2]);
    }
  }
  std::vector<double> values;
  std::vector<int> tasks;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = internal::SplitCsvLine(line);
    if (fields.size() != d + 2) {
      throw Error(ErrorCode::kMalformedCsv, "line " + std::to_string(line_no) + ": expected " +
                                                std::to_string(d + 2) + " fields");
    }
    double task = 0.0;
    if (!ParseDouble(fields[0], task) || task != std::floor(task) || task < 1) {
      throw Error(ErrorCode::kMalformedCsv, "line " + std::to_string(line_no) + ": bad task_index");
    }
    tasks.push_back(static_cast<int>(task));
    for (std::size_t j = 1; j < fields.size(); ++j) {
      double v = 0.0;
      if (!ParseDouble(fields[j], v)) {
        throw Error(ErrorCode::kMalformedCsv,
                    "line " + std::to_string(line_no) + ": bad number '" + fields[j] + "'");
      }
      values.push_back(v);
    }
  }
  const auto n = static_cast<Eigen::Index>(tasks.size());
  LabeledDataset out;
  out.inputs.resize(n, static_cast<Eigen::Index>(d));
  out.labels.resize(n);
  out.task_index = std::move(tasks);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * (d + 1);
    out.labels[i] = values[base];
    for (std::size_t j = 0; j < d; ++j) {
      out.inputs(i, static_cast<Eigen::Index>(j)) = values[base + 1 + j];
    }
  }
  return out;
}

/// Rows whose task index equals `task`.
inline LabeledDataset FilterTask(const LabeledDataset& data, int task) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    if (data.task_index[static_cast<std::size_t>(i)] == task) keep.push_back(i);
  }
  LabeledDataset out;
  out.inputs.resize(static_cast<Eigen::Index>(keep.size()), data.dim());
  out.labels.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t r = 0; r < keep.size(); ++r) {
    out.inputs.row(static_cast<Eigen::Index>(r)) = data.inputs.row(keep[r]);
    out.labels[static_cast<Eigen::Index>(r)] = data.labels[keep[r]];
    out.task_index.push_back(task);
  }
  return out;
}

}  // namespace ptx

#endif  // PTX_SYNTH_HPP_
