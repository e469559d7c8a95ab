#pragma once

#include "phrom/errors.hpp"
#include "phrom/types.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <string>

namespace phrom {

/// Symmetric part ½(M + Mᵀ). Bitwise symmetric because IEEE addition commutes.
inline Matrix sym(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// Skew part ½(M − Mᵀ). Bitwise skew for the same reason.
inline Matrix skew(const Matrix& m) { return 0.5 * (m - m.transpose()); }

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline double min_eigenvalue(const Matrix& symmetric) {
  if (symmetric.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetric, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline double max_eigenvalue(const Matrix& symmetric) {
  if (symmetric.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetric, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(es.eigenvalues().size() - 1);
}

/// Euclidean projection of a symmetric matrix onto the negative semidefinite cone.
inline Matrix project_nsd(const Matrix& symmetric) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetric);
  const Vector clipped = es.eigenvalues().cwiseMin(0.0);
  return sym(es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose());
}

/// Euclidean projection of a symmetric matrix onto the positive semidefinite cone.
inline Matrix project_psd(const Matrix& symmetric) { return -project_nsd(-symmetric); }

/// Flip column signs so that each column's largest-magnitude entry is positive.
/// Ties go to the lowest row index.
inline void fix_column_signs(Matrix& basis) {
  for (Index j = 0; j < basis.cols(); ++j) {
    Index best = 0;
    double best_abs = -1.0;
    for (Index i = 0; i < basis.rows(); ++i) {
      const double a = std::abs(basis(i, j));
      if (a > best_abs) {
        best_abs = a;
        best = i;
      }
    }
    if (basis.rows() > 0 && basis(best, j) < 0.0) basis.col(j) = -basis.col(j);
  }
}

/// Left singular vectors and singular values of a (possibly very wide) matrix.
/// Wide inputs are first compressed with a QR of the transpose so the SVD runs
/// on a square factor; this keeps small singular values accurate to eps·σ₁.
struct ThinSvd {
  Matrix U;
  Vector sigma;
};

inline ThinSvd thin_left_svd(const Matrix& a) {
  ThinSvd out;
  if (a.rows() == 0 || a.cols() == 0) {
    out.U = Matrix::Zero(a.rows(), 0);
    out.sigma = Vector::Zero(0);
    return out;
  }
  if (a.cols() > a.rows()) {
    Eigen::HouseholderQR<Matrix> qr(a.transpose());
    const Index k = a.rows();
    const Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    // a = rᵀ Qᵀ, so the left singular vectors of a are those of rᵀ.
    Eigen::BDCSVD<Matrix> svd(r.transpose(), Eigen::ComputeThinU);
    out.U = svd.matrixU();
    out.sigma = svd.singularValues();
  } else {
    Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU);
    out.U = svd.matrixU();
    out.sigma = svd.singularValues();
  }
  return out;
}

inline void require_same_size(Index a, Index b, const std::string& what) {
  if (a != b) {
    throw DimensionMismatch(what + ": expected " + std::to_string(b) + ", got " + std::to_string(a));
  }
}

}  // namespace phrom
