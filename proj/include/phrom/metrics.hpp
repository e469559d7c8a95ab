#pragma once

// Time-quadrature error measures. Every metric is sqrt(Δt·Σ_{k=1..N} ‖eᵏ‖²);
// the initial column never contributes.

#include "phrom/deim.hpp"
#include "phrom/errors.hpp"
#include "phrom/integrator.hpp"
#include "phrom/opinf.hpp"
#include "phrom/pod.hpp"

#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>

namespace phrom {

namespace detail {

inline void require_same_grid(const TimeGrid& a, const TimeGrid& b) {
  if (a.steps != b.steps || std::abs(a.dt - b.dt) > 1e-14 * std::abs(a.dt) ||
      std::abs(a.t0 - b.t0) > 1e-14 * (1.0 + std::abs(a.t0))) {
    throw DimensionMismatch("trajectories live on different time grids");
  }
}

inline TimeGrid grid_for_columns(const TimeGrid& grid, Index cols) {
  if (static_cast<Index>(grid.points()) != cols) throw DimensionMismatch("column count disagrees with time grid");
  return grid;
}

}  // namespace detail

inline double state_error(const Trajectory& fom, const Trajectory& rom, const Matrix& Phi) {
  detail::require_same_grid(fom.grid, rom.grid);
  require_same_size(Phi.cols(), rom.states.rows(), "state_error basis");
  require_same_size(Phi.rows(), fom.states.rows(), "state_error state");
  return quadrature_norm(fom.states - Phi * rom.states, fom.grid);
}

inline double output_error(const Trajectory& fom, const Trajectory& rom) {
  detail::require_same_grid(fom.grid, rom.grid);
  require_same_size(fom.outputs.rows(), rom.outputs.rows(), "output_error");
  return quadrature_norm(fom.outputs - rom.outputs, fom.grid);
}

/// ‖y − y_r‖ relative to ‖y‖, both in the quadrature norm.
inline double relative_output_error(const Trajectory& fom, const Trajectory& rom) {
  const double ref = quadrature_norm(fom.outputs, fom.grid);
  const double err = output_error(fom, rom);
  return ref > 0.0 ? err / ref : err;
}

/// The quadrature norm of the state sequence, used as the trajectory's magnitude.
inline double trajectory_magnitude(const Trajectory& traj) { return quadrature_norm(traj.states, traj.grid); }

struct ProjectionErrors {
  double state = 0.0;
  double gradient = 0.0;
};

inline ProjectionErrors projection_errors(const Matrix& X, const Matrix& F, const Matrix& Phi, const TimeGrid& grid) {
  const TimeGrid g = detail::grid_for_columns(grid, X.cols());
  require_same_size(F.cols(), X.cols(), "projection_errors F");
  ProjectionErrors e;
  e.state = quadrature_norm(X - Phi * (Phi.transpose() * X), g);
  e.gradient = quadrature_norm(F - Phi * (Phi.transpose() * F), g);
  return e;
}

struct OptimizationErrors {
  double state = 0.0;
  double output = 0.0;
};

inline OptimizationErrors optimization_errors(const ProjectedData& data, const Matrix& U, const Matrix& Y,
                                              const ReducedOperators& ops, const TimeGrid& grid) {
  const TimeGrid g = detail::grid_for_columns(grid, data.Fr.cols());
  require_consistent(data, U, Y);
  OptimizationErrors e;
  e.state = quadrature_norm(data.Xdot_r - ops.Dr() * data.Fr - ops.Br * U, g);
  e.output = quadrature_norm(Y - ops.Br.transpose() * data.Fr, g);
  return e;
}

/// sqrt(Δt·Σ_k ‖(I − ℙ)J_h(ΦΦᵀxᵏ)Φ‖_F²).
inline double deim_error(const PHModel& model, const Matrix& Phi, const DeimData& deim, const Matrix& X,
                         const TimeGrid& grid) {
  const TimeGrid g = detail::grid_for_columns(grid, X.cols());
  const NonlinearPart& nl = model.nonlinear();
  const Matrix projected = Phi * (Phi.transpose() * X);
  double acc = 0.0;
  for (Index k = 1; k < X.cols(); ++k) {
    const Matrix block = nl.jacobian(projected.col(k)) * Phi;
    acc += (block - deim.interpolate(block)).squaredNorm();
  }
  return std::sqrt(g.dt * acc);
}

struct ErrorReport {
  std::string kind;
  Index r = 0;
  std::optional<Index> m_deim;
  std::optional<double> lambda_w;
  std::optional<double> lambda_r;
  double E_x = NAN;
  double E_y = NAN;
  double E_proj_x = NAN;
  double E_proj_gradH = NAN;
  double E_opt_x = NAN;
  double E_opt_y = NAN;
  std::optional<double> E_deim;
  double min_eig_Rr = NAN;
  bool failed = false;

  static constexpr const char* kCsvHeader =
      "kind,r,m_deim,lambda_w,lambda_r,E_x,E_y,E_proj_x,E_proj_gradH,E_opt_x,E_opt_y,E_deim,min_eig_Rr";
};

namespace detail {

inline std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9e", v);
  return buf;
}

inline std::string csv_number(const std::optional<double>& v) { return v ? csv_number(*v) : std::string(); }

}  // namespace detail

/// One CSV line without newline. A failed cell keeps its identifying columns
/// and reports nan for every metric.
inline std::string to_csv_row(const ErrorReport& e) {
  using detail::csv_number;
  const auto metric = [&](double v) { return e.failed ? std::string("nan") : csv_number(v); };
  const auto opt_metric = [&](const std::optional<double>& v) {
    return e.failed ? std::string(v || e.m_deim ? "nan" : "") : csv_number(v);
  };
  std::string row = e.kind;
  row += ',' + std::to_string(e.r);
  row += ',' + (e.m_deim ? std::to_string(*e.m_deim) : std::string());
  row += ',' + csv_number(e.lambda_w);
  row += ',' + csv_number(e.lambda_r);
  row += ',' + metric(e.E_x);
  row += ',' + metric(e.E_y);
  row += ',' + metric(e.E_proj_x);
  row += ',' + metric(e.E_proj_gradH);
  row += ',' + metric(e.E_opt_x);
  row += ',' + metric(e.E_opt_y);
  row += ',' + opt_metric(e.E_deim);
  row += ',' + metric(e.min_eig_Rr);
  return row;
}

}  // namespace phrom
