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
#ifndef PTX_LINALG_HPP_
#define PTX_LINALG_HPP_

// Dense subspace linear algebra: Householder QR, a symmetric eigensolver
// (Householder tridiagonalization followed by implicit QL), orthonormal bases,
// projectors and principal-angle distances.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "ptx/common.hpp"
#include "ptx/rng.hpp"

namespace ptx {

namespace internal {

// Flips `col` so that its first entry of non-negligible magnitude is
// positive. Returns true if the column was negated.
inline bool CanonicalizeSign(Eigen::Ref<Vector> col) {
  const double scale = col.cwiseAbs().maxCoeff();
  if (scale == 0.0) return false;
  for (Eigen::Index i = 0; i < col.size(); ++i) {
    if (std::abs(col[i]) > 1e-12 * scale) {
      if (col[i] < 0.0) {
        col = -col;
        return true;
      }
      return false;
    }
  }
  return false;
}

}  // namespace internal

// ---------------------------------------------------------------------------
// Householder QR
// ---------------------------------------------------------------------------

/// Thin QR factors: `q` is m x n with orthonormal columns, `r` is n x n upper
/// triangular, and q * r reproduces the input.
struct QrFactors {
  Matrix q;
  Matrix r;
};

/// Householder QR of an m x n matrix with m >= n. No pivoting.
inline QrFactors HouseholderQr(const Matrix& a) {
  const Eigen::Index m = a.rows();
  const Eigen::Index n = a.cols();
  if (m < n || n == 0) {
    throw Error(ErrorCode::kDimensionMismatch,
                "HouseholderQr needs rows >= cols >= 1, got " +
                    std::to_string(m) + "x" + std::to_string(n));
  }
  Matrix r = a;
  std::vector<Vector> reflectors(static_cast<std::size_t>(n));
  std::vector<double> betas(static_cast<std::size_t>(n), 0.0);

  for (Eigen::Index j = 0; j < n; ++j) {
    Vector v = r.col(j).tail(m - j);
    const double norm = v.norm();
    const double alpha = v[0] >= 0.0 ? -norm : norm;
    v[0] -= alpha;
    const double vnorm2 = v.squaredNorm();
    double beta = 0.0;
    if (vnorm2 > 0.0) {
      beta = 2.0 / vnorm2;
      auto block = r.bottomRightCorner(m - j, n - j);
      const Eigen::RowVectorXd w = v.transpose() * block;
      block.noalias() -= beta * v * w;
    }
    reflectors[static_cast<std::size_t>(j)] = std::move(v);
    betas[static_cast<std::size_t>(j)] = beta;
  }

  Matrix q = Matrix::Identity(m, n);
  for (Eigen::Index j = n - 1; j >= 0; --j) {
    const double beta = betas[static_cast<std::size_t>(j)];
    if (beta == 0.0) continue;
    const Vector& v = reflectors[static_cast<std::size_t>(j)];
    auto rows = q.bottomRows(m - j);
    const Eigen::RowVectorXd w = v.transpose() * rows;
    rows.noalias() -= beta * v * w;
  }

  QrFactors out;
  out.q = std::move(q);
  out.r = r.topRows(n).triangularView<Eigen::Upper>();
  return out;
}

/// Least-squares solution of min ||x w - y|| through Householder QR.
/// Throws RankDeficient when the design is numerically rank deficient.
inline Vector LeastSquares(const Matrix& x, const Vector& y) {
  if (x.rows() != y.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "LeastSquares: rows of x != size of y");
  }
  if (x.rows() < x.cols()) {
    throw Error(ErrorCode::kRankDeficient, "LeastSquares: fewer rows than columns");
  }
  const QrFactors qr = HouseholderQr(x);
  const Vector diag = qr.r.diagonal().cwiseAbs();
  if (diag.minCoeff() <= Tolerances::kRankRatio * diag.maxCoeff()) {
    throw Error(ErrorCode::kRankDeficient, "LeastSquares: design matrix is rank deficient");
  }
  const Vector qty = qr.q.transpose() * y;
  return qr.r.triangularView<Eigen::Upper>().solve(qty);
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition
// ---------------------------------------------------------------------------

/// Eigenpairs of a symmetric matrix. `values` are sorted in descending order;
/// column i of `vectors` belongs to values[i].
struct SymmetricEigenResult {
  Vector values;
  Matrix vectors;
};

namespace internal {

// Householder reduction of the symmetric matrix held in v to tridiagonal form.
// On exit v holds the accumulated orthogonal transform, d the diagonal and e
// the subdiagonal (e[0] unused). Follows the EISPACK tred2 layout.
inline void Tridiagonalize(Matrix& v, Vector& d, Vector& e) {
  const int n = static_cast<int>(v.rows());
  for (int j = 0; j < n; ++j) d[j] = v(n - 1, j);

  for (int i = n - 1; i > 0; --i) {
    double scale = 0.0;
    double h = 0.0;
    for (int k = 0; k < i; ++k) scale += std::abs(d[k]);
    if (scale == 0.0) {
      e[i] = d[i - 1];
      for (int j = 0; j < i; ++j) {
        d[j] = v(i - 1, j);
        v(i, j) = 0.0;
        v(j, i) = 0.0;
      }
    } else {
      for (int k = 0; k < i; ++k) {
        d[k] /= scale;
        h += d[k] * d[k];
      }
      double f = d[i - 1];
      double g = std::sqrt(h);
      if (f > 0) g = -g;
      e[i] = scale * g;
      h -= f * g;
      d[i - 1] = f - g;
      for (int j = 0; j < i; ++j) e[j] = 0.0;

      for (int j = 0; j < i; ++j) {
        f = d[j];
        v(j, i) = f;
        g = e[j] + v(j, j) * f;
        for (int k = j + 1; k <= i - 1; ++k) {
          g += v(k, j) * d[k];
          e[k] += v(k, j) * f;
        }
        e[j] = g;
      }
      f = 0.0;
      for (int j = 0; j < i; ++j) {
        e[j] /= h;
        f += e[j] * d[j];
      }
      const double hh = f / (h + h);
      for (int j = 0; j < i; ++j) e[j] -= hh * d[j];
      for (int j = 0; j < i; ++j) {
        f = d[j];
        g = e[j];
        for (int k = j; k <= i - 1; ++k) v(k, j) -= (f * e[k] + g * d[k]);
        d[j] = v(i - 1, j);
        v(i, j) = 0.0;
      }
    }
    d[i] = h;
  }

  for (int i = 0; i < n - 1; ++i) {
    v(n - 1, i) = v(i, i);
    v(i, i) = 1.0;
    const double h = d[i + 1];
    if (h != 0.0) {
      for (int k = 0; k <= i; ++k) d[k] = v(k, i + 1) / h;
      for (int j = 0; j <= i; ++j) {
        double g = 0.0;
        for (int k = 0; k <= i; ++k) g += v(k, i + 1) * v(k, j);
        for (int k = 0; k <= i; ++k) v(k, j) -= g * d[k];
      }
    }
    for (int k = 0; k <= i; ++k) v(k, i + 1) = 0.0;
  }
  for (int j = 0; j < n; ++j) {
    d[j] = v(n - 1, j);
    v(n - 1, j) = 0.0;
  }
  v(n - 1, n - 1) = 1.0;
  e[0] = 0.0;
}

// Implicit QL iterations with Wilkinson-style shifts on the tridiagonal
// (d, e), accumulating rotations into v. Follows the EISPACK tql2 layout.
inline void ImplicitQl(Matrix& v, Vector& d, Vector& e) {
  const int n = static_cast<int>(v.rows());
  for (int i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;

  double f = 0.0;
  double tst1 = 0.0;
  const double eps = std::ldexp(1.0, -52);
  const int max_iter = 60 * n;
  for (int l = 0; l < n; ++l) {
    tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
    int m = l;
    while (m < n) {
      if (std::abs(e[m]) <= eps * tst1) break;
      ++m;
    }
    if (m > l) {
      int iter = 0;
      do {
        if (++iter > max_iter) {
          throw Error(ErrorCode::kInvalidArgument, "SymmetricEigen: QL iteration did not converge");
        }
        double g = d[l];
        double p = (d[l + 1] - g) / (2.0 * e[l]);
        double r = std::hypot(p, 1.0);
        if (p < 0) r = -r;
        d[l] = e[l] / (p + r);
        d[l + 1] = e[l] * (p + r);
        const double dl1 = d[l + 1];
        double h = g - d[l];
        for (int i = l + 2; i < n; ++i) d[i] -= h;
        f += h;

        p = d[m];
        double c = 1.0;
        double c2 = c;
        double c3 = c;
        const double el1 = e[l + 1];
        double s = 0.0;
        double s2 = 0.0;
        for (int i = m - 1; i >= l; --i) {
          c3 = c2;
          c2 = c;
          s2 = s;
          g = c * e[i];
          h = c * p;
          r = std::hypot(p, e[i]);
          e[i + 1] = s * r;
          s = e[i] / r;
          c = p / r;
          p = c * d[i] - s * g;
          d[i + 1] = h + s * (c * g + s * d[i]);
          for (int k = 0; k < n; ++k) {
            h = v(k, i + 1);
            v(k, i + 1) = s * v(k, i) + c * h;
            v(k, i) = c * v(k, i) - s * h;
          }
        }
        p = -s * s2 * c3 * el1 * e[l] / dl1;
        e[l] = s * p;
        d[l] = c * p;
      } while (std::abs(e[l]) > eps * tst1);
    }
    d[l] += f;
    e[l] = 0.0;
  }
}

}  // namespace internal

/// Eigendecomposition of a symmetric matrix (only the lower triangle is
/// trusted; the input is symmetrized first). Eigenvalues come back in
/// descending order with ties kept in solver order, and each eigenvector's
/// first non-negligible entry is positive.
inline SymmetricEigenResult SymmetricEigen(const Matrix& a) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw Error(ErrorCode::kDimensionMismatch, "SymmetricEigen needs a nonempty square matrix");
  }
  const Eigen::Index n = a.rows();
  Matrix v = 0.5 * (a + a.transpose());
  Vector d(n);
  Vector e(n);
  if (n == 1) {
    return {Vector::Constant(1, v(0, 0)), Matrix::Identity(1, 1)};
  }
  internal::Tridiagonalize(v, d, e);
  internal::ImplicitQl(v, d, e);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&d](Eigen::Index x, Eigen::Index y) { return d[x] > d[y]; });

  SymmetricEigenResult out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values[i] = d[order[static_cast<std::size_t>(i)]];
    out.vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
    internal::CanonicalizeSign(out.vectors.col(i));
  }
  return out;
}

/// Largest singular value of m, from the top eigenvalue of its smaller Gram
/// matrix.
inline double OperatorNorm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  const Matrix gram = m.rows() >= m.cols() ? Matrix(m.transpose() * m)
                                           : Matrix(m * m.transpose());
  const double top = SymmetricEigen(gram).values[0];
  return std::sqrt(std::max(top, 0.0));
}

// ---------------------------------------------------------------------------
// Orthonormal bases and projectors
// ---------------------------------------------------------------------------

/// d x k matrix with orthonormal columns; represents span(columns).
class OrthonormalBasis {
 public:
  /// Wraps `columns` after checking columnsᵀcolumns = I within tolerance.
  static OrthonormalBasis FromOrthonormal(Matrix columns) {
    if (columns.cols() < 1 || columns.rows() < columns.cols()) {
      throw Error(ErrorCode::kInvalidDims, "OrthonormalBasis needs 1 <= k <= d");
    }
    const Eigen::Index k = columns.cols();
    const double defect =
        (columns.transpose() * columns - Matrix::Identity(k, k)).norm();
    if (!(defect <= Tolerances::kOrthonormality)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "columns are not orthonormal (defect " + FormatDouble(defect) + ")");
    }
    return OrthonormalBasis(std::move(columns));
  }

  Eigen::Index ambient_dim() const { return columns_.rows(); }
  Eigen::Index dim() const { return columns_.cols(); }
  const Matrix& columns() const { return columns_; }

  /// Coordinates of v in this basis (columnsᵀ v).
  Vector Coordinates(const Vector& v) const { return columns_.transpose() * v; }

  /// Component of v orthogonal to the span.
  Vector Residual(const Vector& v) const {
    return v - columns_ * (columns_.transpose() * v);
  }

 private:
  explicit OrthonormalBasis(Matrix columns) : columns_(std::move(columns)) {}

  Matrix columns_;
};

/// Orthonormal basis for the column space of a full-column-rank matrix.
/// Column signs are canonicalized (first non-negligible entry positive).
inline OrthonormalBasis Orthonormalize(const Matrix& m) {
  if (m.cols() < 1 || m.rows() < m.cols()) {
    throw Error(ErrorCode::kRankDeficient, "Orthonormalize needs 1 <= cols <= rows");
  }
  QrFactors qr = HouseholderQr(m);
  const Vector diag = qr.r.diagonal().cwiseAbs();
  if (diag.minCoeff() <= Tolerances::kRankRatio * diag.maxCoeff()) {
    throw Error(ErrorCode::kRankDeficient, "Orthonormalize: matrix is rank deficient");
  }
  for (Eigen::Index j = 0; j < qr.q.cols(); ++j) {
    internal::CanonicalizeSign(qr.q.col(j));
  }
  return OrthonormalBasis::FromOrthonormal(std::move(qr.q));
}

/// First k columns of the d x d identity.
inline OrthonormalBasis IdentityBasis(Eigen::Index d, Eigen::Index k) {
  return OrthonormalBasis::FromOrthonormal(Matrix::Identity(d, k));
}

/// Orthogonal projector P = QQᵀ (or I - QQᵀ for the complement).
class Projector {
 public:
  static Projector Onto(const OrthonormalBasis& basis) {
    return Projector(basis.columns() * basis.columns().transpose(), basis.dim());
  }

  static Projector OntoComplement(const OrthonormalBasis& basis) {
    const Eigen::Index d = basis.ambient_dim();
    return Projector(Matrix::Identity(d, d) - basis.columns() * basis.columns().transpose(),
                     d - basis.dim());
  }

  const Matrix& matrix() const { return matrix_; }
  Eigen::Index rank() const { return rank_; }
  Vector Apply(const Vector& v) const { return matrix_ * v; }

 private:
  Projector(Matrix m, Eigen::Index rank) : matrix_(std::move(m)), rank_(rank) {}

  Matrix matrix_;
  Eigen::Index rank_;
};

namespace internal {

inline void CheckSameShape(const OrthonormalBasis& a, const OrthonormalBasis& b) {
  if (a.ambient_dim() != b.ambient_dim() || a.dim() != b.dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "bases have shapes " + std::to_string(a.ambient_dim()) + "x" +
                    std::to_string(a.dim()) + " and " + std::to_string(b.ambient_dim()) + "x" +
                    std::to_string(b.dim()));
  }
}

}  // namespace internal

/// ‖(I - bbᵀ)a‖ in Frobenius and operator norm.
struct ResidualNorms {
  double frobenius;
  double op;
};

inline ResidualNorms SubspaceResidualNorms(const OrthonormalBasis& a, const OrthonormalBasis& b) {
  internal::CheckSameShape(a, b);
  const Matrix residual = a.columns() - b.columns() * (b.columns().transpose() * a.columns());
  return {residual.norm(), OperatorNorm(residual)};
}

/// sin of the largest principal angle between span(a) and span(b), i.e. the
/// operator norm of (I - bbᵀ)a. Equal-dimension subspaces only, so the value
/// is symmetric in its arguments.
inline double PrincipalAngleSin(const OrthonormalBasis& a, const OrthonormalBasis& b) {
  return std::clamp(SubspaceResidualNorms(a, b).op, 0.0, 1.0);
}

/// A basis whose span sits at principal-angle distance exactly `gamma` from
/// span(b): the first column is rotated by arcsin(gamma) toward a random unit
/// vector in the orthogonal complement of span(b).
inline OrthonormalBasis PerturbedBasis(const OrthonormalBasis& b, double gamma, Rng& rng) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw Error(ErrorCode::kInvalidGamma, "gamma must lie in [0, 1]");
  }
  if (gamma == 0.0) return b;
  if (b.dim() == b.ambient_dim()) {
    throw Error(ErrorCode::kNoComplement, "span(b) is the whole space; cannot rotate out of it");
  }
  Vector u;
  double norm = 0.0;
  do {
    u = rng.NormalVector(b.ambient_dim());
    // Two passes of projection keep u orthogonal to working precision.
    u = b.Residual(u);
    u = b.Residual(u);
    norm = u.norm();
  } while (norm < 1e-8);
  u /= norm;

  Matrix cols = b.columns();
  cols.col(0) = std::sqrt(1.0 - gamma * gamma) * cols.col(0) + gamma * u;
  return OrthonormalBasis::FromOrthonormal(std::move(cols));
}

/// A basis for the same span as b whose first column points along the
/// component of `direction` inside span(b). Built with one Householder
/// reflection of the coordinates, so the span is unchanged.
inline OrthonormalBasis AlignedBasis(const OrthonormalBasis& b, const Vector& direction) {
  if (direction.size() != b.ambient_dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "AlignedBasis: direction has wrong length");
  }
  Vector c = b.Coordinates(direction);
  const double cn = c.norm();
  if (cn == 0.0) return b;
  c /= cn;
  const Eigen::Index k = b.dim();
  Vector w = Vector::Unit(k, 0) - c;
  const double wn = w.norm();
  if (wn < 1e-15) return b;
  w /= wn;
  const Matrix h = Matrix::Identity(k, k) - 2.0 * w * w.transpose();
  return OrthonormalBasis::FromOrthonormal(b.columns() * h);
}

}  // namespace ptx

#endif  // PTX_LINALG_HPP_
