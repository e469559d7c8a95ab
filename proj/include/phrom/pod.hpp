#pragma once

#include "phrom/errors.hpp"
#include "phrom/linalg.hpp"
#include "phrom/matio.hpp"
#include "phrom/snapshots.hpp"

#include <filesystem>
#include <string>

namespace phrom {

/// Singular values below this multiple of σ₁ count as zero.
inline constexpr double kRankTolerance = 1e-13;

struct ReducedBasis {
  Matrix Phi;             // n × r, orthonormal columns
  Vector singular_values; // numerically nonzero singular values of X, non-increasing
  Index r = 0;
  Index numerical_rank = 0;
  bool rank_deficient = false;  // r exceeded the numerical rank; trailing columns complete the basis

  /// Fraction of Σσᵢ² captured by the first k modes.
  double energy(Index k) const {
    const double total = singular_values.squaredNorm();
    if (total == 0.0) return 0.0;
    const Index m = std::min<Index>(k, singular_values.size());
    return singular_values.head(m).squaredNorm() / total;
  }
};

struct ProjectedData {
  Matrix Xr;
  Matrix Xdot_r;
  Matrix Fr;
  Matrix Qr;
};

inline ReducedBasis compute_basis(const Matrix& X, Index r) {
  if (r < 1 || r > std::min(X.rows(), X.cols())) {
    throw InvalidArgument("compute_basis: r=" + std::to_string(r) + " outside [1, min(n, s+1)]");
  }
  ThinSvd svd = thin_left_svd(X);
  ReducedBasis basis;
  const double s1 = svd.sigma.size() ? svd.sigma(0) : 0.0;
  Index rank = 0;
  while (rank < svd.sigma.size() && s1 > 0.0 && svd.sigma(rank) >= kRankTolerance * s1) ++rank;
  basis.numerical_rank = rank;
  basis.singular_values = svd.sigma.head(rank);
  basis.r = r;
  basis.rank_deficient = r > rank;
  basis.Phi = svd.U.leftCols(r);
  fix_column_signs(basis.Phi);
  return basis;
}

/// Smallest r whose cumulative energy fraction reaches tau.
inline Index choose_dimension(const Vector& singular_values, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw InvalidArgument("choose_dimension: tau must lie in (0, 1]");
  const double total = singular_values.squaredNorm();
  if (total == 0.0) throw InvalidArgument("choose_dimension: all-zero spectrum");
  double acc = 0.0;
  for (Index i = 0; i < singular_values.size(); ++i) {
    acc += singular_values(i) * singular_values(i);
    if (acc / total >= tau) return i + 1;
  }
  return singular_values.size();
}

inline ProjectedData project(const ReducedBasis& basis, const SnapshotSet& set, const Matrix& Q) {
  const Matrix& Phi = basis.Phi;
  ProjectedData data;
  data.Xr = Phi.transpose() * set.X;
  data.Xdot_r = Phi.transpose() * set.Xdot;
  data.Fr = Phi.transpose() * set.F;
  data.Qr = sym(Phi.transpose() * Q * Phi);
  return data;
}

inline void save(const ReducedBasis& basis, const std::filesystem::path& dir) {
  matio::write_matrix(dir / "Phi.mat", basis.Phi);
  matio::write_matrix(dir / "sigma.mat", basis.singular_values);
}

inline ReducedBasis load_basis(const std::filesystem::path& dir) {
  ReducedBasis basis;
  basis.Phi = matio::read_matrix(dir / "Phi.mat");
  const Matrix sigma = matio::read_matrix(dir / "sigma.mat");
  if (sigma.cols() != 1 && sigma.size() != 0) throw MalformedSnapshot(dir.string() + ": sigma.mat must be a column");
  basis.singular_values = sigma.size() ? Vector(sigma.col(0)) : Vector();
  basis.r = basis.Phi.cols();
  basis.numerical_rank = basis.singular_values.size();
  basis.rank_deficient = basis.r > basis.numerical_rank;
  return basis;
}

/// Leading r columns of a wider basis; identical to compute_basis(X, r).
inline ReducedBasis truncate(const ReducedBasis& basis, Index r) {
  if (r < 1 || r > basis.Phi.cols()) throw InvalidArgument("truncate: r outside the available basis");
  ReducedBasis out = basis;
  out.Phi = basis.Phi.leftCols(r);
  out.r = r;
  out.rank_deficient = r > basis.numerical_rank;
  return out;
}

}  // namespace phrom
