#pragma once

// Full-order port-Hamiltonian systems
//
//   ẋ = (J − R) ∇H(x) + B u,   y = Bᵀ ∇H(x),
//
// with H(x) = ½ xᵀQx + cᵀh(x). Public matrices are dense; sparse copies of
// J − R and Q back the hot paths (drift and Newton Jacobians).

#include "phrom/errors.hpp"
#include "phrom/linalg.hpp"
#include "phrom/types.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>

namespace phrom {

/// Non-quadratic Hamiltonian part N(x) = cᵀh(x) with row-addressable derivatives.
///
/// Every callable must be pure. Row-restricted accessors exist so that DEIM
/// evaluations touch only the interpolation rows.
struct NonlinearPart {
  Index d = 0;
  Vector c;
  std::function<Vector(const Vector&)> h;
  std::function<Vector(std::span<const Index>, const Vector&)> h_rows;
  std::function<SparseRowMatrix(const Vector&)> jacobian;
  std::function<SparseRowMatrix(std::span<const Index>, const Vector&)> jacobian_rows;
  /// Σᵢ wᵢ ∇²h_{rows[i]}(x) as an n×n matrix.
  std::function<SparseMatrix(std::span<const Index>, const Vector&, const Vector&)> weighted_hessian;

  IndexList all_rows() const {
    IndexList rows(static_cast<std::size_t>(d));
    std::iota(rows.begin(), rows.end(), Index{0});
    return rows;
  }

  /// ∇²(cᵀh)(x).
  SparseMatrix hessian_of_N(const Vector& x) const {
    const IndexList rows = all_rows();
    return weighted_hessian(rows, c, x);
  }
};

struct HamiltonianSpec {
  Matrix Q;
  std::optional<NonlinearPart> nonlinear;
};

class PHModel {
 public:
  PHModel(std::string name, Matrix J, Matrix R, Matrix B, HamiltonianSpec hamiltonian, Vector x0)
      : name_(std::move(name)),
        J_(std::move(J)),
        R_(std::move(R)),
        B_(std::move(B)),
        ham_(std::move(hamiltonian)),
        x0_(std::move(x0)) {
    const Index n = J_.rows();
    if (n <= 0) throw InvalidArgument("PHModel: empty state");
    require_same_size(J_.cols(), n, "PHModel J cols");
    require_same_size(R_.rows(), n, "PHModel R rows");
    require_same_size(R_.cols(), n, "PHModel R cols");
    require_same_size(B_.rows(), n, "PHModel B rows");
    require_same_size(ham_.Q.rows(), n, "PHModel Q rows");
    require_same_size(ham_.Q.cols(), n, "PHModel Q cols");
    require_same_size(x0_.size(), n, "PHModel x0");
    if (B_.cols() <= 0) throw InvalidArgument("PHModel: needs at least one port");
    if (max_abs(J_ + J_.transpose()) != 0.0) throw StructureViolation("PHModel: J is not skew-symmetric");
    if (max_abs(R_ - R_.transpose()) != 0.0) throw StructureViolation("PHModel: R is not symmetric");
    if (min_eigenvalue(R_) < -1e-12) throw StructureViolation("PHModel: R is not positive semidefinite");
    if (max_abs(ham_.Q - ham_.Q.transpose()) > 1e-14 * (1.0 + max_abs(ham_.Q))) {
      throw StructureViolation("PHModel: Q is not symmetric");
    }
    if (ham_.nonlinear) require_same_size(ham_.nonlinear->c.size(), ham_.nonlinear->d, "NonlinearPart c");
    JmR_sparse_ = (J_ - R_).sparseView();
    Q_sparse_ = ham_.Q.sparseView();
  }

  const std::string& name() const { return name_; }
  Index n() const { return J_.rows(); }
  Index n_inputs() const { return B_.cols(); }
  const Matrix& J() const { return J_; }
  const Matrix& R() const { return R_; }
  const Matrix& B() const { return B_; }
  const Matrix& Q() const { return ham_.Q; }
  const HamiltonianSpec& hamiltonian() const { return ham_; }
  const Vector& x0() const { return x0_; }
  bool is_linear() const { return !ham_.nonlinear.has_value(); }
  const NonlinearPart& nonlinear() const {
    if (!ham_.nonlinear) throw NoNonlinearPart();
    return *ham_.nonlinear;
  }

  const SparseMatrix& JmR_sparse() const { return JmR_sparse_; }
  const SparseMatrix& Q_sparse() const { return Q_sparse_; }

  /// Same system started from a different initial state.
  PHModel with_initial_state(Vector x0) const {
    PHModel copy = *this;
    require_same_size(x0.size(), n(), "initial state");
    copy.x0_ = std::move(x0);
    return copy;
  }

 private:
  std::string name_;
  Matrix J_, R_, B_;
  HamiltonianSpec ham_;
  Vector x0_;
  SparseMatrix JmR_sparse_;
  SparseMatrix Q_sparse_;
};

inline double eval_hamiltonian(const PHModel& model, const Vector& x) {
  require_same_size(x.size(), model.n(), "eval_hamiltonian state");
  double value = 0.5 * x.dot(model.Q_sparse() * x);
  if (const auto& nl = model.hamiltonian().nonlinear) value += nl->c.dot(nl->h(x));
  return value;
}

/// ∇H(x) = Qx + J_h(x)ᵀc.
inline Vector eval_gradient(const PHModel& model, const Vector& x) {
  require_same_size(x.size(), model.n(), "eval_gradient state");
  Vector g = model.Q_sparse() * x;
  if (const auto& nl = model.hamiltonian().nonlinear) g += nl->jacobian(x).transpose() * nl->c;
  return g;
}

inline SparseMatrix hessian_sparse(const PHModel& model, const Vector& x) {
  SparseMatrix hess = model.Q_sparse();
  if (const auto& nl = model.hamiltonian().nonlinear) hess += nl->hessian_of_N(x);
  return hess;
}

inline SparseMatrix drift_jacobian_sparse(const PHModel& model, const Vector& x) {
  return (model.JmR_sparse() * hessian_sparse(model, x)).pruned();
}

/// (J − R)(Q + ∇²N(x)), densely.
inline Matrix eval_drift_jacobian(const PHModel& model, const Vector& x) {
  require_same_size(x.size(), model.n(), "eval_drift_jacobian state");
  return Matrix(drift_jacobian_sparse(model, x));
}

/// y = Bᵀ∇H(x).
inline Vector eval_output(const PHModel& model, const Vector& x) {
  return model.B().transpose() * eval_gradient(model, x);
}

/// Mass-spring-damper chain, state [q₁, p₁, …, q_N, p_N]. Spring i couples
/// masses i and i+1; the last spring ties mass N to the wall. The input force
/// acts on mass 1 and the output is its velocity.
inline PHModel build_msd(Index n0, const Vector& masses, const Vector& stiffnesses, const Vector& dampings) {
  if (n0 < 1) throw InvalidArgument("build_msd: need at least one mass");
  require_same_size(masses.size(), n0, "build_msd masses");
  require_same_size(stiffnesses.size(), n0, "build_msd stiffnesses");
  require_same_size(dampings.size(), n0, "build_msd dampings");
  if ((masses.array() <= 0.0).any()) throw InvalidArgument("build_msd: masses must be positive");
  if ((stiffnesses.array() <= 0.0).any()) throw InvalidArgument("build_msd: stiffnesses must be positive");
  if ((dampings.array() < 0.0).any()) throw InvalidArgument("build_msd: dampings must be nonnegative");

  const Index n = 2 * n0;
  Matrix J = Matrix::Zero(n, n);
  Matrix R = Matrix::Zero(n, n);
  Matrix Q = Matrix::Zero(n, n);
  Matrix B = Matrix::Zero(n, 1);
  for (Index i = 0; i < n0; ++i) {
    const Index q = 2 * i;
    const Index p = q + 1;
    J(q, p) = 1.0;
    J(p, q) = -1.0;
    R(p, p) = dampings(i);
    Q(p, p) = 1.0 / masses(i);
    const double k = stiffnesses(i);
    Q(q, q) += k;
    if (i + 1 < n0) {
      const Index qn = q + 2;
      Q(qn, qn) += k;
      Q(q, qn) -= k;
      Q(qn, q) -= k;
    }
  }
  B(1, 0) = 1.0;
  return PHModel("msd", std::move(J), std::move(R), std::move(B), HamiltonianSpec{std::move(Q), std::nullopt},
                 Vector::Zero(n));
}

inline PHModel build_msd(Index n0, double mass, double stiffness, double damping) {
  return build_msd(n0, Vector::Constant(n0, mass), Vector::Constant(n0, stiffness),
                   Vector::Constant(n0, damping));
}

namespace detail {

// Toda interaction terms, state x = [q; p]:
//   h₀ = exp(q₀ − q₁) − q₀ − N,  hᵢ = exp(qᵢ − qᵢ₊₁),  h_{N−1} = exp(q_{N−1}).
struct TodaTerms {
  Index n0;

  double value(Index i, const Vector& x) const {
    if (i == n0 - 1) return std::exp(x(i));
    double v = std::exp(x(i) - x(i + 1));
    if (i == 0) v -= x(0) + static_cast<double>(n0);
    return v;
  }

  template <class Emit>
  void jacobian_row(Index i, const Vector& x, Emit&& emit) const {
    if (i == n0 - 1) {
      emit(i, std::exp(x(i)));
      return;
    }
    const double e = std::exp(x(i) - x(i + 1));
    emit(i, i == 0 ? e - 1.0 : e);
    emit(i + 1, -e);
  }

  template <class Emit>
  void hessian(Index i, double weight, const Vector& x, Emit&& emit) const {
    if (i == n0 - 1) {
      emit(i, i, weight * std::exp(x(i)));
      return;
    }
    const double e = weight * std::exp(x(i) - x(i + 1));
    emit(i, i, e);
    emit(i + 1, i + 1, e);
    emit(i, i + 1, -e);
    emit(i + 1, i, -e);
  }
};

}  // namespace detail

/// Toda lattice with damping γ on the momenta, state x = [q; p].
inline PHModel build_toda(Index n0, const Vector& gamma) {
  if (n0 < 2) throw InvalidArgument("build_toda: need at least two particles");
  require_same_size(gamma.size(), n0, "build_toda gamma");
  if ((gamma.array() < 0.0).any()) throw InvalidArgument("build_toda: damping must be nonnegative");

  const Index n = 2 * n0;
  Matrix J = Matrix::Zero(n, n);
  J.topRightCorner(n0, n0).setIdentity();
  J.bottomLeftCorner(n0, n0) = -Matrix::Identity(n0, n0);
  Matrix R = Matrix::Zero(n, n);
  R.bottomRightCorner(n0, n0) = gamma.asDiagonal();
  Matrix B = Matrix::Zero(n, 1);
  B(n0, 0) = 1.0;
  Matrix Q = Matrix::Zero(n, n);
  Q.bottomRightCorner(n0, n0).setIdentity();

  const detail::TodaTerms terms{n0};
  NonlinearPart nl;
  nl.d = n0;
  nl.c = Vector::Ones(n0);
  nl.h = [terms](const Vector& x) {
    Vector out(terms.n0);
    for (Index i = 0; i < terms.n0; ++i) out(i) = terms.value(i, x);
    return out;
  };
  nl.h_rows = [terms](std::span<const Index> rows, const Vector& x) {
    Vector out(static_cast<Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) out(static_cast<Index>(k)) = terms.value(rows[k], x);
    return out;
  };
  nl.jacobian_rows = [terms, n](std::span<const Index> rows, const Vector& x) {
    std::vector<Triplet> trips;
    trips.reserve(rows.size() * 2);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      terms.jacobian_row(rows[k], x, [&](Index col, double v) { trips.emplace_back(static_cast<Index>(k), col, v); });
    }
    SparseRowMatrix m(static_cast<Index>(rows.size()), n);
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
  };
  nl.jacobian = [jr = nl.jacobian_rows, n0](const Vector& x) {
    IndexList rows(static_cast<std::size_t>(n0));
    std::iota(rows.begin(), rows.end(), Index{0});
    return jr(rows, x);
  };
  nl.weighted_hessian = [terms, n](std::span<const Index> rows, const Vector& w, const Vector& x) {
    std::vector<Triplet> trips;
    trips.reserve(rows.size() * 4);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      terms.hessian(rows[k], w(static_cast<Index>(k)), x,
                    [&](Index i, Index j, double v) { trips.emplace_back(i, j, v); });
    }
    SparseMatrix m(n, n);
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
  };

  return PHModel("toda", std::move(J), std::move(R), std::move(B), HamiltonianSpec{std::move(Q), std::move(nl)},
                 Vector::Zero(n));
}

inline PHModel build_toda(Index n0, double gamma) { return build_toda(n0, Vector::Constant(n0, gamma)); }

}  // namespace phrom
