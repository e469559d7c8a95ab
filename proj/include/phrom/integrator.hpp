#pragma once

// Implicit midpoint rule with Newton inner solves.
//
// Each step solves g(x⁺) = x⁺ − xᵏ − Δt·f((xᵏ + x⁺)/2, tᵏ + Δt/2) = 0 starting
// from x⁺ = xᵏ. Fields whose Jacobian is constant are factorized once.

#include "phrom/errors.hpp"
#include "phrom/inputs.hpp"
#include "phrom/models.hpp"
#include "phrom/types.hpp"

#include <Eigen/SparseLU>

#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <type_traits>

namespace phrom {

struct NewtonConfig {
  double tol = 1e-12;
  int max_iter = 50;
};

struct TimeGrid {
  double t0 = 0.0;
  double dt = 0.0;
  std::size_t steps = 0;

  TimeGrid() = default;
  TimeGrid(double start, double step, std::size_t count) : t0(start), dt(step), steps(count) {
    if (!(dt > 0.0)) throw InvalidArgument("TimeGrid: dt must be positive");
    if (steps < 1) throw InvalidArgument("TimeGrid: need at least one step");
  }

  /// Grid on [0, T]; T must be an integer multiple of dt (relative 1e-12).
  static TimeGrid over(double horizon, double dt) {
    if (!(dt > 0.0) || !(horizon > 0.0)) throw InvalidArgument("TimeGrid: horizon and dt must be positive");
    const double ratio = horizon / dt;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-12 * std::max(1.0, ratio) + 1e-9) {
      throw InvalidArgument("TimeGrid: dt does not divide the horizon");
    }
    return TimeGrid(0.0, dt, static_cast<std::size_t>(rounded));
  }

  double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
  double horizon() const { return static_cast<double>(steps) * dt; }
  Index points() const { return static_cast<Index>(steps + 1); }

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) {
    return a.t0 == b.t0 && a.dt == b.dt && a.steps == b.steps;
  }
};

struct Trajectory {
  TimeGrid grid;
  Matrix states;   // n × (steps+1)
  Matrix outputs;  // m × (steps+1)
  Vector hamiltonian;
};

struct IntegrationStats {
  std::size_t newton_iterations = 0;
  int max_iterations_per_step = 0;
  std::size_t factorizations = 0;
};

/// Anything that exposes a drift, its state Jacobian (dense or sparse), and
/// whether that Jacobian is constant.
template <class F>
concept OdeField = requires(const F& f, const Vector& x, double t) {
  { f.drift(x, t) } -> std::convertible_to<Vector>;
  f.jacobian(x, t);
  { f.is_linear() } -> std::convertible_to<bool>;
};

/// Adapter turning two callables into an OdeField.
template <class Drift, class Jac>
struct FunctionField {
  Drift drift_fn;
  Jac jacobian_fn;
  bool linear = false;

  Vector drift(const Vector& x, double t) const { return drift_fn(x, t); }
  auto jacobian(const Vector& x, double t) const { return jacobian_fn(x, t); }
  bool is_linear() const { return linear; }
};

template <class Drift, class Jac>
FunctionField<Drift, Jac> make_field(Drift drift, Jac jac, bool linear = false) {
  return {std::move(drift), std::move(jac), linear};
}

namespace detail {

class DenseNewtonSolver {
 public:
  void factorize(const Matrix& jac, double half_dt, std::size_t step) {
    const Matrix a = Matrix::Identity(jac.rows(), jac.cols()) - half_dt * jac;
    lu_.compute(a);
    if (!(lu_.rcond() > std::numeric_limits<double>::epsilon())) throw SingularJacobian(step);
  }
  Vector solve(const Vector& rhs) const { return lu_.solve(rhs); }

 private:
  Eigen::PartialPivLU<Matrix> lu_;
};

class SparseNewtonSolver {
 public:
  void factorize(const SparseMatrix& jac, double half_dt, std::size_t step) {
    SparseMatrix eye(jac.rows(), jac.cols());
    eye.setIdentity();
    SparseMatrix a = eye - half_dt * jac;
    a.makeCompressed();
    lu_.compute(a);
    if (lu_.info() != Eigen::Success) throw SingularJacobian(step);
  }
  Vector solve(const Vector& rhs) const { return lu_.solve(rhs); }

 private:
  Eigen::SparseLU<SparseMatrix> lu_;
};

template <class Jac>
using NewtonSolverFor =
    std::conditional_t<std::is_base_of_v<Eigen::SparseMatrixBase<std::decay_t<Jac>>, std::decay_t<Jac>>,
                       SparseNewtonSolver, DenseNewtonSolver>;

}  // namespace detail

/// Midpoint-rule trajectory: returns n × (steps+1) states, column 0 = x0.
template <OdeField Field>
Matrix integrate(const Field& field, const Vector& x0, const TimeGrid& grid, const NewtonConfig& newton = {},
                 IntegrationStats* stats = nullptr) {
  using JacType = decltype(field.jacobian(x0, 0.0));
  detail::NewtonSolverFor<JacType> solver;
  const double dt = grid.dt;
  const Index n = x0.size();
  Matrix states(n, grid.points());
  states.col(0) = x0;
  IntegrationStats local;
  bool factorized = false;

  Vector x = x0;
  for (std::size_t k = 0; k < grid.steps; ++k) {
    const double tm = grid.time(k) + 0.5 * dt;
    const double scale = newton.tol * (1.0 + x.lpNorm<Eigen::Infinity>());
    Vector next = x;
    int iter = 0;
    while (true) {
      const Vector mid = 0.5 * (x + next);
      const Vector g = next - x - dt * field.drift(mid, tm);
      const double res = g.size() == 0 ? 0.0 : g.lpNorm<Eigen::Infinity>();
      if (!std::isfinite(res)) throw NewtonDivergence(k, iter, res);
      if (res <= scale) break;
      if (iter >= newton.max_iter) throw NewtonDivergence(k, iter, res);
      if (!field.is_linear() || !factorized) {
        solver.factorize(field.jacobian(mid, tm), 0.5 * dt, k);
        factorized = true;
        ++local.factorizations;
      }
      next -= solver.solve(g);
      ++iter;
    }
    local.newton_iterations += static_cast<std::size_t>(iter);
    local.max_iterations_per_step = std::max(local.max_iterations_per_step, iter);
    x = next;
    states.col(static_cast<Index>(k + 1)) = x;
  }
  if (stats) *stats = local;
  return states;
}

/// Full-order drift f(x, t) = (J − R)∇H(x) + B u(t).
struct FomField {
  const PHModel* model;
  Input input;

  Vector drift(const Vector& x, double t) const {
    return model->JmR_sparse() * eval_gradient(*model, x) + model->B() * input(t);
  }
  SparseMatrix jacobian(const Vector& x, double) const { return drift_jacobian_sparse(*model, x); }
  bool is_linear() const { return model->is_linear(); }
};

inline Trajectory simulate_fom(const PHModel& model, const Input& input, const TimeGrid& grid,
                               const NewtonConfig& newton = {}, IntegrationStats* stats = nullptr) {
  const FomField field{&model, input};
  Trajectory traj;
  traj.grid = grid;
  traj.states = integrate(field, model.x0(), grid, newton, stats);
  traj.outputs.resize(model.n_inputs(), grid.points());
  traj.hamiltonian.resize(grid.points());
  for (Index k = 0; k < grid.points(); ++k) {
    const Vector x = traj.states.col(k);
    traj.outputs.col(k) = eval_output(model, x);
    traj.hamiltonian(k) = eval_hamiltonian(model, x);
  }
  return traj;
}

/// sqrt(T/N · Σ_{k≥1} ‖col_k‖²): the time-quadrature size of a sampled signal.
inline double quadrature_norm(const Matrix& columns, const TimeGrid& grid) {
  if (columns.cols() != grid.points()) throw DimensionMismatch("quadrature_norm: column count vs grid");
  const double sum = columns.rightCols(columns.cols() - 1).squaredNorm();
  return std::sqrt(grid.dt * sum);
}

}  // namespace phrom
