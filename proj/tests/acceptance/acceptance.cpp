// Acceptance gate. Prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails.
//
// PHROM_ACCEPTANCE_DIR  work directory (default: <tmp>/phrom_acceptance)
// PHROM_FULL=1          also run the full-scale Toda checks (n0 = 1000)

#include "phrom/phrom.hpp"

#include "../support/oracles.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#ifndef PHROM_SOURCE_DIR
#define PHROM_SOURCE_DIR "."
#endif

namespace fs = std::filesystem;
using namespace phrom;

namespace {

struct Verdict {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back(std::string(ok ? "" : "!! ") + what);
  }
  void note(const std::string& what) { notes.push_back(what); }
};

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

class Clock {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

struct Context {
  fs::path work;
  fs::path configs = fs::path(PHROM_SOURCE_DIR) / "configs";
  bool full = false;
  std::ofstream log;
  // Shared between criteria.
  std::optional<RunSummary> msd;
  std::optional<ExperimentConfig> msd_cfg;
};

ExperimentConfig config(Context& ctx, const std::string& file, const std::string& out) {
  ExperimentConfig cfg = load_config(ctx.configs / file);
  cfg.output_dir = ctx.work / out;
  return cfg;
}

fs::path cell_dir(const ExperimentConfig& cfg, const ErrorReport& e) {
  const std::string method = e.m_deim ? e.kind.substr(0, e.kind.size() - 5) : e.kind;
  std::string id = SweepJob{method, e.r, e.lambda_w, e.lambda_r}.id();
  if (e.m_deim) id += "_m" + std::to_string(*e.m_deim);
  return cfg.output_dir / "cells" / id;
}

const CellResult* find_cell(const RunSummary& s, const std::string& kind, Index r, std::optional<Index> m = std::nullopt) {
  for (const auto& c : s.cells) {
    if (c.report.kind == kind && c.report.r == r && c.report.m_deim == m) return &c;
  }
  return nullptr;
}

// Checks stored learned operators and ROM audits for every cell of a sweep.
void check_structure_of(const ExperimentConfig& cfg, const RunSummary& s, const std::vector<Index>& rs, Verdict& v,
                        const std::string& label) {
  int checked = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& c : s.cells) {
    const auto& e = c.report;
    if (std::find(rs.begin(), rs.end(), e.r) == rs.end()) continue;
    if (e.failed) {
      v.require(false, label + " " + e.kind + " r=" + std::to_string(e.r) + " failed: " + c.error);
      continue;
    }
    v.require(c.audit_checked && c.audit_passed, label + " " + e.kind + " r=" + std::to_string(e.r) + " audit");
    if (e.kind != "opinf-w" && e.kind != "opinf-r") continue;
    const fs::path dir = cell_dir(cfg, e);
    const Matrix Jr = matio::read_matrix(dir / "Jr.mat");
    const Matrix Rr = matio::read_matrix(dir / "Rr.mat");
    const double lmin = min_eigenvalue(Rr);
    worst = std::min(worst, lmin);
    const bool ok = max_abs(Jr + Jr.transpose()) == 0.0 && max_abs(Rr - Rr.transpose()) == 0.0 && lmin >= -1e-8;
    v.require(ok, label + " " + e.kind + " r=" + std::to_string(e.r) + fmt(" eigmin(Rr)=%.3e", lmin));
    ++checked;
  }
  v.require(checked > 0, label + ": " + std::to_string(checked) + " learned operator pairs checked");
  v.note(label + fmt(": smallest eigmin(Rr) %.3e", worst));
}

Verdict criterion1(Context& ctx) {
  Verdict v;
  Clock clock;
  ExperimentConfig msd = config(ctx, "msd_test2.toml", "msd");
  msd.r_list = {5, 10, 15, 20, 25, 30, 35, 40};
  ctx.msd = run_pipeline(msd, ctx.log);
  ctx.msd_cfg = msd;
  check_structure_of(msd, *ctx.msd, {5, 10, 15, 20}, v, "msd");

  ExperimentConfig toda = config(ctx, "toda_table2.toml", "toda");
  toda.r_list = {20, 40, 60};
  const RunSummary ts = run_pipeline(toda, ctx.log);
  check_structure_of(toda, ts, {20, 40, 60}, v, "toda n0=100");

  const double t = clock.seconds();
  v.require(t <= 600.0, fmt("runtime %.0f s (limit 600 s)", t));
  return v;
}

Verdict criterion2(Context& ctx) {
  Verdict v;
  Clock clock;
  {
    const ExperimentConfig cfg = config(ctx, "msd_test2.toml", "msd");
    const TrainingData td = ensure_fom(cfg, ctx.log);
    const ReducedBasis b = compute_basis(td.snapshots.X, 10);
    const double e5 = b.energy(5), e10 = b.energy(10);
    v.require(std::abs(e5 - 0.9524) <= 0.005, fmt("msd energy(5)=%.4f%% (reference 95.24%%)", 100 * e5));
    v.require(std::abs(e10 - 0.9999) <= 0.005, fmt("msd energy(10)=%.4f%% (reference 99.99%%)", 100 * e10));
    const double t = clock.seconds();
    v.require(t <= 120.0, fmt("msd runtime %.0f s (limit 120 s)", t));
  }
  {
    const ExperimentConfig cfg = config(ctx, "toda_table2.toml", "toda");
    const TrainingData td = ensure_fom(cfg, ctx.log);
    const ReducedBasis b = compute_basis(td.snapshots.X, 40);
    bool monotone = true;
    for (Index k = 1; k < 40; ++k) monotone = monotone && b.energy(k + 1) >= b.energy(k);
    v.require(monotone, "toda n0=100 energy monotone in r");
    v.require(b.energy(40) >= 0.9999, fmt("toda n0=100 energy(40)=%.5f%% (>= 99.99%%)", 100 * b.energy(40)));
    v.note(fmt("toda n0=100 energy(10)=%.3f%%, energy(20)=%.3f%%", 100 * b.energy(10), 100 * b.energy(20)));
  }
  if (ctx.full) {
    Clock full_clock;
    ExperimentConfig cfg = config(ctx, "toda_table2.toml", "toda_full");
    cfg.full = true;
    const TrainingData td = ensure_fom(cfg, ctx.log);
    const ReducedBasis b = compute_basis(td.snapshots.X, 30);
    v.require(std::abs(b.energy(10) - 0.9797) <= 0.005, fmt("toda full energy(10)=%.3f%% (reference 97.97%%)", 100 * b.energy(10)));
    v.require(std::abs(b.energy(20) - 0.998) <= 0.005, fmt("toda full energy(20)=%.3f%% (reference 99.8%%)", 100 * b.energy(20)));
    v.require(std::abs(b.energy(30) - 0.9999) <= 0.005, fmt("toda full energy(30)=%.4f%% (reference 99.99%%)", 100 * b.energy(30)));
    v.require(full_clock.seconds() <= 7200.0, fmt("toda full runtime %.0f s (limit 7200 s)", full_clock.seconds()));
  } else {
    v.note("toda full scale skipped (PHROM_FULL=1 enables it)");
  }
  return v;
}

Verdict criterion3(Context& ctx) {
  Verdict v;
  Clock clock;
  if (!ctx.msd) {
    ExperimentConfig msd = config(ctx, "msd_test2.toml", "msd");
    msd.r_list = {5, 10, 15, 20, 25, 30, 35, 40};
    ctx.msd = run_pipeline(msd, ctx.log);
  }
  const RunSummary& s = *ctx.msd;
  const std::vector<Index> rs = {5, 10, 15, 20, 25, 30, 35, 40};
  for (const std::string method : {"opinf-w", "opinf-r"}) {
    double prev = std::numeric_limits<double>::infinity();
    bool monotone = true;
    bool floor_ok = true;
    bool plateau = true;
    bool tracks = true;
    std::ostringstream curve;
    for (Index r : rs) {
      const CellResult* c = find_cell(s, method, r);
      if (!c || c->report.failed) {
        v.require(false, method + " r=" + std::to_string(r) + " missing or failed");
        continue;
      }
      const auto& e = c->report;
      // Roundoff allowance once the projection error reaches machine precision.
      monotone = monotone && e.E_proj_x <= prev * (1.0 + 1e-9) + 1e-14;
      prev = e.E_proj_x;
      if (r >= 30) floor_ok = floor_ok && e.E_proj_x < 1e-10;
      if (r >= 20) {
        plateau = plateau && e.E_opt_x >= 1e-6 && e.E_opt_x <= 1e-4;
        const double ratio = e.E_x / e.E_opt_x;
        tracks = tracks && ratio >= 0.2 && ratio <= 5.0;
        curve << " r" << r << ":" << fmt("%.2e/%.2e", e.E_opt_x, e.E_x);
      }
    }
    v.require(monotone, method + ": E_proj_x non-increasing in r (roundoff allowance 1e-14)");
    v.require(floor_ok, method + ": E_proj_x < 1e-10 for r >= 30");
    v.require(plateau, method + ": E_opt_x within [1e-6, 1e-4] for r >= 20");
    v.require(tracks, method + ": E_x/E_opt_x within [1/5, 5] for r >= 20; E_opt_x/E_x" + curve.str());
  }
  v.note(fmt("runtime %.0f s beyond criterion 1's shared sweep", clock.seconds()));
  return v;
}

Verdict criterion4(Context& ctx) {
  Verdict v;
  Clock clock;
  const auto check = [&](const ExperimentConfig& cfg, const RunSummary& s, const std::string& label) {
    const CellResult* base = find_cell(s, "opinf-r", 20);
    if (!base || base->report.failed) {
      v.require(false, label + ": base ROM missing or failed");
      return base;
    }
    std::map<Index, const CellResult*> deim;
    for (Index m : cfg.m_deim_list) deim[m] = find_cell(s, "opinf-r-deim", 20, m);
    for (const auto& [m, c] : deim) {
      if (!c || c->report.failed) v.require(false, label + ": m=" + std::to_string(m) + " missing or failed");
    }
    const auto e = [&](Index m) { return deim[m] && !deim[m]->report.failed ? *deim[m]->report.E_deim : NAN; };
    const double drop = e(30) / e(60);
    v.require(drop >= 1e4, label + fmt(": E_deim m=30 %.3e", e(30)) + fmt(" -> m=60 %.3e", e(60)) +
                               fmt(" (ratio %.2e, need >= 1e4)", drop));
    std::optional<Index> first;
    for (const auto& [m, c] : deim) {
      if (c && !c->report.failed && *c->report.E_deim <= 1e-8) {
        first = m;
        break;
      }
    }
    v.require(first.has_value(), label + ": some m reaches E_deim <= 1e-8");
    if (first) {
      const auto& d = deim[*first]->report;
      const auto& b = base->report;
      const double rx = std::abs(d.E_x - b.E_x) / b.E_x;
      const double ry = std::abs(d.E_y - b.E_y) / b.E_y;
      v.require(rx <= 1e-4 && ry <= 1e-4, label + ": m=" + std::to_string(*first) +
                                              fmt(" E_x rel diff %.2e", rx) + fmt(", E_y rel diff %.2e", ry));
    }
    return base;
  };

  ExperimentConfig cfg = config(ctx, "toda_table3.toml", "toda");
  cfg.r_list = {20};
  const RunSummary s = run_pipeline(cfg, ctx.log);
  const CellResult* base = check(cfg, s, "toda n0=100 r=20");
  if (base) v.note(fmt("toda n0=100 r=20: E_x=%.4e, E_y=%.4e", base->report.E_x, base->report.E_y));
  const double t = clock.seconds();
  v.require(t <= 1200.0, fmt("desk runtime %.0f s (limit 1200 s)", t));

  if (ctx.full) {
    ExperimentConfig fcfg = config(ctx, "toda_table3.toml", "toda_full");
    fcfg.full = true;
    fcfg.r_list = {20};
    const RunSummary fs_ = run_pipeline(fcfg, ctx.log);
    const CellResult* fb = check(fcfg, fs_, "toda full r=20");
    if (fb) {
      const double ex = fb->report.E_x, ey = fb->report.E_y;
      v.require(ex >= 0.6042 / 2 && ex <= 0.6042 * 2, fmt("toda full E_x=%.4e (reference 6.042e-1, factor 2)", ex));
      v.require(ey >= 0.04032 / 2 && ey <= 0.04032 * 2, fmt("toda full E_y=%.4e (reference 4.032e-2, factor 2)", ey));
    }
  } else {
    v.note("full-scale comparison skipped (PHROM_FULL=1 enables it)");
  }
  return v;
}

Verdict criterion5(Context&) {
  Verdict v;
  Clock clock;
  oracle::Rng rng(20240601);
  const OpInfConfig cfg;
  auto target = [&](Index r, bool active) {
    if (!active) return Matrix(rng.skew(r) - rng.psd(r, r) - 0.5 * Matrix::Identity(r, r));
    const Matrix V = rng.rotation(r);
    Vector lam(r);
    for (Index i = 0; i < r; ++i) lam(i) = (i % 2 == 0 ? 1.0 : -1.0) * rng.uniform(0.5, 2.0);
    return Matrix(rng.skew(r) + V * lam.asDiagonal() * V.transpose());
  };

  double worst_obj = 0.0;
  double worst_closed = 0.0;
  double worst_kkt = 0.0;
  int inactive = 0;
  const auto run = [&](Index r, int count, int inactive_every) {
    for (int i = 0; i < count; ++i) {
      const bool active = (i % inactive_every) != 0;
      const Index cols = 10 * r + 10;
      const Matrix F = rng.matrix(r, cols);
      const Matrix rhs = target(r, active) * F + (active ? 0.3 : 1e-3) * rng.matrix(r, cols);
      const Matrix Dstar = (rhs * F.transpose()) * (F * F.transpose()).inverse();
      const auto res = solve_constrained_lsq(F, rhs, cfg);
      const double ours = oracle::lsq_objective(res.D, F, rhs);
      if (max_eigenvalue(sym(Dstar)) < 0.0) {
        ++inactive;
        worst_closed = std::max(worst_closed, (res.D - Dstar).cwiseAbs().maxCoeff());
        continue;
      }
      double ref;
      if (r == 2) {
        ref = oracle::constrained_lsq_2x2(F, rhs);
      } else {
        const Matrix Z = oracle::constrained_lsq_admm(F, rhs);
        const auto k = oracle::kkt(Z, F, rhs);
        const double scale = 1.0 + (rhs * F.transpose()).norm();
        worst_kkt = std::max({worst_kkt, k.stationarity_skew / scale, k.dual_infeasibility / scale,
                              k.complementarity / scale, k.primal_infeasibility});
        ref = oracle::lsq_objective(Z, F, rhs);
      }
      worst_obj = std::max(worst_obj, std::abs(ours - ref) / ref);
    }
  };
  run(2, 50, 5);
  run(5, 20, 4);
  v.require(worst_obj <= 1e-4, fmt("worst relative objective gap vs oracle %.2e (limit 1e-4)", worst_obj));
  v.require(worst_kkt <= 1e-6, fmt("ADMM oracle KKT residual %.2e (oracle validity, limit 1e-6)", worst_kkt));
  v.require(inactive >= 10, std::to_string(inactive) + " inactive-constraint instances");
  v.require(worst_closed <= 1e-8, fmt("inactive instances: max |D - D_ls| = %.2e (limit 1e-8)", worst_closed));
  const double t = clock.seconds();
  v.require(t <= 120.0, fmt("runtime %.0f s (limit 120 s)", t));
  return v;
}

Verdict criterion6(Context& ctx) {
  Verdict v;
  Clock clock;
  oracle::Rng rng(777);

  double ortho = 0.0, pyth = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Matrix X = rng.matrix(rng.integer(10, 60), rng.integer(10, 200));
    const Index r = rng.integer(1, static_cast<int>(std::min(X.rows(), X.cols())));
    const Matrix Phi = compute_basis(X, r).Phi;
    ortho = std::max(ortho, (Phi.transpose() * Phi - Matrix::Identity(r, r)).cwiseAbs().maxCoeff());
    const Matrix P = Phi * (Phi.transpose() * X);
    pyth = std::max(pyth, std::abs(P.squaredNorm() + (X - P).squaredNorm() - X.squaredNorm()) / X.squaredNorm());
  }
  v.require(ortho <= 1e-12, fmt("basis orthonormality %.1e", ortho));
  v.require(pyth <= 1e-12, fmt("Pythagoras identity %.1e", pyth));

  double fd = 0.0;
  for (int i = 0; i < 10; ++i) {
    const Vector a = rng.vector(4), b = rng.vector(4), c = rng.vector(4);
    const double dt = rng.uniform(1e-3, 0.5);
    Matrix X(4, 15), D(4, 15);
    for (Index k = 0; k < 15; ++k) {
      const double t = k * dt;
      X.col(k) = a + b * t + c * t * t;
      D.col(k) = b + 2 * c * t;
    }
    fd = std::max(fd, (finite_difference(X, dt) - D).cwiseAbs().maxCoeff() / (1.0 + D.cwiseAbs().maxCoeff()));
  }
  v.require(fd <= 1e-9, fmt("finite differences exact on quadratics %.1e", fd));

  double grad = 0.0;
  {
    const PHModel toda = build_toda(10, 0.1);
    const PHModel msd = build_msd(10, 4.0, 4.0, 1.0);
    for (int i = 0; i < 5; ++i) {
      const Vector x = 0.3 * rng.vector(20);
      for (const PHModel* m : {&toda, &msd}) {
        const Vector g = oracle::fd_gradient([&](const Vector& z) { return eval_hamiltonian(*m, z); }, x, 1e-5);
        grad = std::max(grad, (eval_gradient(*m, x) - g).cwiseAbs().maxCoeff());
      }
      ReducedBasis basis;
      basis.Phi = rng.orthonormal(20, 4);
      basis.r = 4;
      const auto hg = make_hyper_gradient(toda, basis, select_interpolation_from_basis(rng.orthonormal(10, 5), toda.nonlinear().c));
      const Vector xr = 0.3 * rng.vector(4);
      const Vector g = oracle::fd_gradient([&](const Vector& z) { return hg.energy(z); }, xr, 1e-5);
      grad = std::max(grad, (hg.gradient(xr) - g).cwiseAbs().maxCoeff());
    }
  }
  v.require(grad <= 1e-6, fmt("gradient vs finite differences %.1e", grad));

  double proj = 0.0;
  for (int i = 0; i < 10; ++i) {
    const Index d = rng.integer(5, 40);
    const Index m = rng.integer(1, static_cast<int>(d));
    const DeimData deim = select_interpolation_from_basis(rng.orthonormal(d, m), rng.vector(d));
    const Matrix Pi = deim.projector();
    const Matrix M = rng.matrix(d, 3);
    Matrix PtM(m, 3), PtPiM(m, 3);
    const Matrix PiM = deim.interpolate(M);
    for (Index k = 0; k < m; ++k) {
      PtM.row(k) = M.row(deim.indices[static_cast<std::size_t>(k)]);
      PtPiM.row(k) = PiM.row(deim.indices[static_cast<std::size_t>(k)]);
    }
    proj = std::max({proj, (Pi * Pi - Pi).cwiseAbs().maxCoeff(), (Pi * deim.Psi - deim.Psi).cwiseAbs().maxCoeff(),
                     (PtPiM - PtM).cwiseAbs().maxCoeff()});
  }
  v.require(proj <= 1e-10, fmt("oblique projector identities %.1e", proj));

  double drift = 0.0;
  for (int i = 0; i < 3; ++i) {
    const PHModel m = build_msd(20, 4.0, 4.0, 0.0).with_initial_state(rng.vector(40));
    const Trajectory tr = simulate_fom(m, zero_input(), TimeGrid(0.0, 0.05, 1000));
    drift = std::max(drift, (tr.hamiltonian.array() - tr.hamiltonian(0)).abs().maxCoeff());
  }
  v.require(drift <= 1e-10, fmt("midpoint quadratic invariant drift over 1000 steps %.1e", drift));

  // G-ROM counterexample on the training basis of the MSD generalization setup.
  {
    const ExperimentConfig cfg = config(ctx, "msd_generalize.toml", "msd_gen");
    const TrainingData td = prepare_training(cfg, ctx.log);
    bool found = false;
    bool sp_ok = true;
    Index where = 0;
    const ReducedBasis wide = compute_basis(td.snapshots.X, 10);
    for (Index r = 2; r <= 10; ++r) {
      const ReducedBasis basis = truncate(wide, r);
      const ProjectedData data = project(basis, td.snapshots, td.model->Q());
      const Matrix& Phi = basis.Phi;
      const Matrix M = Phi.transpose() * (td.model->J() - td.model->R()) * td.model->Q() * Phi;
      Eigen::SelfAdjointEigenSolver<Matrix> es(sym(data.Qr * M));
      const auto model = std::make_shared<const PHModel>(td.model->with_initial_state(Phi * es.eigenvectors().col(r - 1)));
      const TimeGrid grid(0.0, 1e-3, 50);
      const Input none = zero_input();
      const AssembledROM g = assemble_rom(RomKind::g, model, basis);
      if (!dissipation_audit(g, simulate_rom(g, none, grid), none).passed && !found) {
        found = true;
        where = r;
      }
      const AssembledROM spg = assemble_rom(RomKind::spg, model, basis);
      const AssembledROM op = assemble_rom(RomKind::opinf, model, basis, infer_r(data, td.snapshots.U, td.snapshots.Y));
      sp_ok = sp_ok && dissipation_audit(spg, simulate_rom(spg, none, grid), none).passed;
      sp_ok = sp_ok && dissipation_audit(op, simulate_rom(op, none, grid), none).passed;
    }
    v.require(found, found ? "G-ROM gains energy (r=" + std::to_string(where) + ")" : "no G-ROM counterexample found");
    v.require(sp_ok, "SP-G and pH-OpInf ROMs pass the audit on the same initial states");
  }
  const double t = clock.seconds();
  v.require(t <= 300.0, fmt("runtime %.0f s (limit 300 s)", t));
  return v;
}

Verdict criterion7(Context& ctx) {
  Verdict v;
  Clock clock;
  {
    const ExperimentConfig cfg = config(ctx, "msd_generalize.toml", "msd_gen");
    const RunSummary s = generalization_test(cfg, ctx.log);
    const CellResult* c = find_cell(s, "opinf-r", 20);
    const double e = c && !c->report.failed ? c->relative_output_error : NAN;
    v.require(e <= 0.05, fmt("msd r=20 sawtooth relative output error %.3e (limit 5e-2)", e));
  }
  {
    const ExperimentConfig cfg = config(ctx, "toda_generalize.toml", "toda_gen");
    const RunSummary s = generalization_test(cfg, ctx.log);
    const CellResult* c = find_cell(s, "opinf-r-deim", 50, 50);
    const double e = c && !c->report.failed ? c->relative_output_error : NAN;
    v.require(e <= 0.05, fmt("toda n0=100 r=50 m=50 sawtooth relative output error %.3e (limit 5e-2)", e));
    const CellResult* b = find_cell(s, "opinf-r", 50);
    if (b && !b->report.failed) v.note(fmt("toda r=50 without DEIM: %.3e", b->relative_output_error));
  }
  const double t = clock.seconds();
  v.require(t <= 900.0, fmt("runtime %.0f s (limit 900 s)", t));
  return v;
}

}  // namespace

int main() {
  Context ctx;
  const char* dir = std::getenv("PHROM_ACCEPTANCE_DIR");
  ctx.work = dir ? fs::path(dir) : fs::temp_directory_path() / "phrom_acceptance";
  const char* full = std::getenv("PHROM_FULL");
  ctx.full = full && std::string(full) == "1";
  fs::create_directories(ctx.work);
  ctx.log.open(ctx.work / "pipeline.log", std::ios::app);
  std::printf("work directory: %s\n", ctx.work.string().c_str());

  const std::vector<std::pair<std::string, std::function<Verdict(Context&)>>> criteria = {
      {"C1 structural feasibility", criterion1}, {"C2 POD energy", criterion2},
      {"C3 error-curve shape", criterion3},      {"C4 DEIM convergence", criterion4},
      {"C5 constrained solver vs oracle", criterion5}, {"C6 invariant suites", criterion6},
      {"C7 generalization", criterion7},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Verdict v;
    Clock clock;
    try {
      v = fn(ctx);
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    std::printf("%s %s (%.0f s)\n", v.pass ? "PASS" : "FAIL", name.c_str(), clock.seconds());
    for (const auto& n : v.notes) std::printf("      %s\n", n.c_str());
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
