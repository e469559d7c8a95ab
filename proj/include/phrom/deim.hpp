#pragma once

// Gradient-preserving DEIM for the non-quadratic Hamiltonian part.
//
// With ℙ = Ψ(PᵀΨ)⁻¹Pᵀ the hyper-reduced energy is cᵀℙh(Φx_r) = wᵀ h_℘(Φx_r)
// where w = (PᵀΨ)⁻ᵀΨᵀc is precomputed once. Its gradient and Hessian only
// need the rows ℘ of h and J_h.

#include "phrom/errors.hpp"
#include "phrom/linalg.hpp"
#include "phrom/matio.hpp"
#include "phrom/models.hpp"
#include "phrom/pod.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

namespace phrom {

struct DeimData {
  Matrix Psi;               // d × m nonlinear basis
  IndexList indices;        // m distinct 0-based rows of h
  Vector weights;           // (PᵀΨ)⁻ᵀΨᵀc
  Eigen::PartialPivLU<Matrix> PtPsi_lu;

  Index m() const { return static_cast<Index>(indices.size()); }

  /// ℙM = Ψ (PᵀΨ)⁻¹ (PᵀM).
  Matrix interpolate(const Matrix& M) const {
    Matrix sampled(m(), M.cols());
    for (Index i = 0; i < m(); ++i) sampled.row(i) = M.row(indices[static_cast<std::size_t>(i)]);
    return Psi * PtPsi_lu.solve(sampled);
  }

  /// Dense oblique projector; only sensible for small d.
  Matrix projector() const { return interpolate(Matrix::Identity(Psi.rows(), Psi.rows())); }
};

struct JacobianSnapshots {
  Matrix MJ;              // d × r·(#used snapshots)
  std::size_t stride = 1; // snapshot subsampling stride
};

/// Stacks J_h(ΦΦᵀx_k)Φ over the snapshots. If that would exceed `column_cap`
/// columns, every `stride`-th snapshot is used instead.
inline JacobianSnapshots assemble_jacobian_snapshots(const PHModel& model, const Matrix& Phi, const Matrix& X,
                                                     Index column_cap = 200000) {
  const NonlinearPart& nl = model.nonlinear();
  const Index r = Phi.cols();
  const Index snaps = X.cols();
  JacobianSnapshots out;
  if (column_cap > 0 && r * snaps > column_cap) {
    out.stride = static_cast<std::size_t>((r * snaps + column_cap - 1) / column_cap);
  }
  const Index used = (snaps + static_cast<Index>(out.stride) - 1) / static_cast<Index>(out.stride);
  out.MJ.resize(nl.d, r * used);
  const Matrix projected = Phi * (Phi.transpose() * X);
  Index block = 0;
  for (Index k = 0; k < snaps; k += static_cast<Index>(out.stride), ++block) {
    out.MJ.middleCols(block * r, r) = nl.jacobian(projected.col(k)) * Phi;
  }
  return out;
}

namespace detail {

inline DeimData finish_deim(Matrix Psi, IndexList indices, const Vector& c) {
  DeimData data;
  const Index m = static_cast<Index>(indices.size());
  Matrix PtPsi(m, Psi.cols());
  for (Index i = 0; i < m; ++i) PtPsi.row(i) = Psi.row(indices[static_cast<std::size_t>(i)]);
  data.PtPsi_lu.compute(PtPsi);
  if (!(data.PtPsi_lu.rcond() > 1e-14)) throw SelectionFailure("PᵀΨ is singular to working precision");
  data.weights = data.PtPsi_lu.transpose().solve(Psi.transpose() * c);
  data.Psi = std::move(Psi);
  data.indices = std::move(indices);
  return data;
}

}  // namespace detail

/// Interpolation indices for a given nonlinear basis Ψ: the first m pivots of
/// a column-pivoted QR of Ψᵀ.
inline DeimData select_interpolation_from_basis(Matrix Psi, const Vector& c) {
  const Index m = Psi.cols();
  Eigen::ColPivHouseholderQR<Matrix> qr(Psi.transpose());
  const auto& perm = qr.colsPermutation().indices();
  IndexList indices(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) indices[static_cast<std::size_t>(i)] = perm(i);
  return detail::finish_deim(std::move(Psi), std::move(indices), c);
}

/// Q-DEIM: Ψ from the leading left singular vectors of M_J, indices from a
/// column-pivoted QR of Ψᵀ.
inline DeimData select_interpolation(const Matrix& MJ, Index m, const Vector& c) {
  const Index d = MJ.rows();
  if (m < 1 || m > d) throw InvalidArgument("select_interpolation: need 1 <= m <= d");
  require_same_size(c.size(), d, "select_interpolation c");
  ThinSvd svd = thin_left_svd(MJ);
  if (svd.U.cols() < m) throw SelectionFailure("nonlinear snapshot matrix has fewer than m singular vectors");
  Matrix Psi = svd.U.leftCols(m);
  fix_column_signs(Psi);
  return select_interpolation_from_basis(std::move(Psi), c);
}

/// ∇H_hr(x_r) = Q_r x_r + Φᵀ (J_h)_℘(Φx_r)ᵀ w, evaluated with m Jacobian rows.
struct HyperReducedGradient {
  Matrix Qr;
  Matrix Phi;
  NonlinearPart nonlinear;
  DeimData deim;

  Vector gradient(const Vector& xr) const {
    const Vector x = Phi * xr;
    const SparseRowMatrix rows = nonlinear.jacobian_rows(deim.indices, x);
    const Vector full = rows.transpose() * deim.weights;
    return Qr * xr + Phi.transpose() * full;
  }

  /// Q_r + Φᵀ(Σᵢ wᵢ∇²h_℘ᵢ(Φx_r))Φ.
  Matrix hessian(const Vector& xr) const {
    const Vector x = Phi * xr;
    const SparseMatrix w_hess = nonlinear.weighted_hessian(deim.indices, deim.weights, x);
    return sym(Qr + Phi.transpose() * (w_hess * Phi));
  }

  /// ½x_rᵀQ_r x_r + wᵀh_℘(Φx_r).
  double energy(const Vector& xr) const {
    const Vector x = Phi * xr;
    return 0.5 * xr.dot(Qr * xr) + deim.weights.dot(nonlinear.h_rows(deim.indices, x));
  }
};

inline HyperReducedGradient make_hyper_gradient(const PHModel& model, const ReducedBasis& basis, DeimData deim) {
  HyperReducedGradient hg;
  hg.Phi = basis.Phi;
  hg.Qr = sym(basis.Phi.transpose() * model.Q() * basis.Phi);
  hg.nonlinear = model.nonlinear();
  hg.deim = std::move(deim);
  return hg;
}

inline void save(const DeimData& deim, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  matio::write_matrix(dir / "Psi.mat", deim.Psi);
  nlohmann::json j{{"index_base", 0}, {"indices", deim.indices}};
  std::ofstream out(dir / "deim_indices.json", std::ios::trunc);
  out << j.dump(2) << '\n';
}

inline DeimData load_deim(const std::filesystem::path& dir, const Vector& c) {
  Matrix Psi = matio::read_matrix(dir / "Psi.mat");
  const auto path = dir / "deim_indices.json";
  if (!std::filesystem::exists(path)) throw NotFound("missing " + path.string());
  std::ifstream in(path);
  IndexList indices;
  try {
    const auto j = nlohmann::json::parse(in);
    const Index base = j.value("index_base", 0);
    for (const auto& v : j.at("indices")) indices.push_back(v.get<Index>() - base);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedSnapshot(path.string() + ": " + e.what());
  }
  if (static_cast<Index>(indices.size()) != Psi.cols()) throw MalformedSnapshot(path.string() + ": index count != m");
  std::set<Index> seen;
  for (Index i : indices) {
    if (i < 0 || i >= Psi.rows() || !seen.insert(i).second) throw MalformedSnapshot(path.string() + ": bad index");
  }
  require_same_size(c.size(), Psi.rows(), "load_deim c");
  return detail::finish_deim(std::move(Psi), std::move(indices), c);
}

}  // namespace phrom
