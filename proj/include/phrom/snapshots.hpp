#pragma once

#include "phrom/errors.hpp"
#include "phrom/inputs.hpp"
#include "phrom/integrator.hpp"
#include "phrom/matio.hpp"
#include "phrom/models.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

namespace phrom {

/// Training data sampled from one full-order run. All matrices have s+1 columns.
struct SnapshotSet {
  TimeGrid grid;
  Matrix X;
  Matrix U;
  Matrix Y;
  Matrix Xdot;
  Matrix F;

  Index columns() const { return X.cols(); }

  /// Drop `k` columns from each end (endpoint-stencil sensitivity studies).
  SnapshotSet trimmed(std::size_t k) const {
    if (k == 0) return *this;
    const Index keep = X.cols() - 2 * static_cast<Index>(k);
    if (keep < 2) throw InvalidArgument("SnapshotSet::trimmed: nothing left");
    const Index a = static_cast<Index>(k);
    SnapshotSet out;
    out.grid = TimeGrid(grid.time(k), grid.dt, static_cast<std::size_t>(keep - 1));
    out.X = X.middleCols(a, keep);
    out.U = U.middleCols(a, keep);
    out.Y = Y.middleCols(a, keep);
    out.Xdot = Xdot.middleCols(a, keep);
    out.F = F.middleCols(a, keep);
    return out;
  }
};

/// Second-order finite differences in time: central inside, one-sided
/// three-point stencils at both ends.
inline Matrix finite_difference(const Matrix& X, double dt) {
  const Index cols = X.cols();
  if (cols < 3) throw InvalidArgument("finite_difference: need at least three snapshots");
  const Index s = cols - 1;
  const double inv = 1.0 / (2.0 * dt);
  Matrix D(X.rows(), cols);
  D.col(0) = (-3.0 * X.col(0) + 4.0 * X.col(1) - X.col(2)) * inv;
  D.middleCols(1, s - 1) = (X.rightCols(s - 1) - X.leftCols(s - 1)) * inv;
  D.col(s) = (X.col(s - 2) - 4.0 * X.col(s - 1) + 3.0 * X.col(s)) * inv;
  return D;
}

inline Matrix sample_input(const Input& input, const TimeGrid& grid, Index m) {
  Matrix U(m, grid.points());
  for (Index k = 0; k < grid.points(); ++k) U.col(k) = input(grid.time(static_cast<std::size_t>(k)));
  return U;
}

inline Matrix gradient_snapshots(const PHModel& model, const Matrix& X) {
  Matrix F(X.rows(), X.cols());
  for (Index k = 0; k < X.cols(); ++k) F.col(k) = eval_gradient(model, X.col(k));
  return F;
}

inline SnapshotSet assemble(const PHModel& model, const Trajectory& traj, const Input& input) {
  SnapshotSet set;
  set.grid = traj.grid;
  set.X = traj.states;
  set.U = sample_input(input, traj.grid, model.n_inputs());
  set.Y = traj.outputs;
  set.Xdot = finite_difference(set.X, traj.grid.dt);
  set.F = gradient_snapshots(model, set.X);
  return set;
}

inline void save_grid(const std::filesystem::path& path, const TimeGrid& grid) {
  nlohmann::json j{{"t0", grid.t0}, {"dt", grid.dt}, {"steps", grid.steps}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << std::setprecision(17) << j.dump(2) << '\n';
}

inline TimeGrid load_grid(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw NotFound("missing " + path.string());
  std::ifstream in(path);
  try {
    const auto j = nlohmann::json::parse(in);
    return TimeGrid(j.at("t0").get<double>(), j.at("dt").get<double>(), j.at("steps").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw MalformedSnapshot(path.string() + ": " + e.what());
  }
}

inline void save(const SnapshotSet& set, const std::filesystem::path& dir, bool with_csv = false) {
  std::filesystem::create_directories(dir);
  matio::write_matrix(dir / "X.mat", set.X);
  matio::write_matrix(dir / "U.mat", set.U);
  matio::write_matrix(dir / "Y.mat", set.Y);
  matio::write_matrix(dir / "Xdot.mat", set.Xdot);
  matio::write_matrix(dir / "F.mat", set.F);
  save_grid(dir / "grid.json", set.grid);
  if (with_csv) {
    matio::write_csv(dir / "X.csv", set.X);
    matio::write_csv(dir / "U.csv", set.U);
    matio::write_csv(dir / "Y.csv", set.Y);
  }
}

inline SnapshotSet load_snapshots(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw NotFound("no snapshot directory " + dir.string());
  SnapshotSet set;
  set.grid = load_grid(dir / "grid.json");
  set.X = matio::read_matrix(dir / "X.mat");
  set.U = matio::read_matrix(dir / "U.mat");
  set.Y = matio::read_matrix(dir / "Y.mat");
  set.Xdot = matio::read_matrix(dir / "Xdot.mat");
  set.F = matio::read_matrix(dir / "F.mat");
  const Index cols = set.grid.points();
  for (const Matrix* m : {&set.X, &set.U, &set.Y, &set.Xdot, &set.F}) {
    if (m->cols() != cols) throw MalformedSnapshot(dir.string() + ": column count disagrees with grid.json");
  }
  if (set.Xdot.rows() != set.X.rows() || set.F.rows() != set.X.rows() || set.Y.rows() != set.U.rows()) {
    throw MalformedSnapshot(dir.string() + ": inconsistent row counts");
  }
  return set;
}

}  // namespace phrom
