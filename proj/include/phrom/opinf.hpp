#pragma once

// Structure-preserving operator inference.
//
// Both formulations learn D_r = S + A with S symmetric negative semidefinite
// and A skew, so that J_r = A and R_r = −S are skew / symmetric PSD by
// construction. The constrained quadratic programs are solved with an
// accelerated projected gradient method (FISTA) restarted whenever the
// objective would increase.
//
// Before iterating, the data are compressed with a thin QR of the stacked
// regressors [F_r; U]ᵀ. Every objective value and gradient is then an exact
// r × (r+m) computation, so no Gram-matrix cancellation enters the
// stopping test or the reported objective.

#include "phrom/errors.hpp"
#include "phrom/linalg.hpp"
#include "phrom/matio.hpp"
#include "phrom/models.hpp"
#include "phrom/pod.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace phrom {

enum class Provenance { opinf_w, opinf_r, intrusive };

inline std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::opinf_w: return "opinf-w";
    case Provenance::opinf_r: return "opinf-r";
    case Provenance::intrusive: return "intrusive";
  }
  return "?";
}

struct SolveReport {
  int iterations = 0;
  int restarts = 0;
  double objective = 0.0;
  double kkt_residual = 0.0;
  double constraint_violation = 0.0;  // max(0, λ_max(sym D_r))
  double lipschitz = 0.0;
  double wall_seconds = 0.0;
  bool converged = true;
  bool ridge_singular = false;
  std::string status = "ok";
  std::vector<double> epoch_objectives;  // objective at the start of each restart epoch
};

struct OpInfConfig {
  double lambda_w = 1e5;
  double lambda_r = 1e-11;
  double rel_tol = 1e-10;
  int max_iter = 50000;
  double psd_tol = 1e-8;
  unsigned seed = 0;  // power-iteration start vector

  void validate() const {
    if (!(lambda_w > 0.0)) throw InvalidArgument("OpInfConfig: lambda_w must be positive");
    if (!(lambda_r >= 0.0)) throw InvalidArgument("OpInfConfig: lambda_r must be nonnegative");
    if (max_iter < 1) throw InvalidArgument("OpInfConfig: max_iter must be positive");
  }
};

struct ReducedOperators {
  Matrix Jr;
  Matrix Rr;
  Matrix Br;
  Provenance provenance = Provenance::intrusive;
  SolveReport report;

  Index r() const { return Jr.rows(); }
  Matrix Dr() const { return Jr - Rr; }
};

/// Throws StructureViolation unless Jr is exactly skew, Rr exactly symmetric
/// and λ_min(Rr) ≥ −psd_tol.
inline void check_structure(const ReducedOperators& ops, double psd_tol) {
  if (max_abs(ops.Jr + ops.Jr.transpose()) != 0.0) throw StructureViolation("Jr is not exactly skew-symmetric");
  if (max_abs(ops.Rr - ops.Rr.transpose()) != 0.0) throw StructureViolation("Rr is not exactly symmetric");
  const double lmin = min_eigenvalue(ops.Rr);
  if (lmin < -psd_tol) {
    throw StructureViolation("Rr has eigenvalue " + std::to_string(lmin) + " below -psd_tol");
  }
}

/// Rr with eigenvalues in (−psd_tol, 0) clipped to zero; exactly symmetric.
inline Matrix clip_dissipation(const Matrix& Rr, double psd_tol) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(Rr);
  if (es.eigenvalues().size() && es.eigenvalues()(0) >= 0.0) return Rr;
  if (es.eigenvalues().size() && es.eigenvalues()(0) < -psd_tol) {
    throw StructureViolation("clip_dissipation: eigenvalue below -psd_tol");
  }
  return project_psd(Rr);
}

namespace detail {

/// ½‖X̂ − D F̂ − B Û‖² + ½c_x + (λ/2)(‖Ŷ − BᵀF̂‖² + c_y) in compressed coordinates.
struct CompressedProblem {
  Matrix Xh, Fh, Uh, Yh;
  double cx = 0.0;
  double cy = 0.0;
  double lambda = 0.0;
  double data_norm = 0.0;  // ‖Ẋ_r‖_F of the uncompressed right-hand side

  Index r() const { return Fh.rows(); }
  Index m() const { return Uh.rows(); }

  static CompressedProblem build(const Matrix& rhs, const Matrix& F, const Matrix& U, const Matrix& Y, double lambda) {
    CompressedProblem p;
    p.lambda = lambda;
    p.data_norm = rhs.norm();
    const Index r = F.rows();
    const Index m = U.rows();
    const Index cols = F.cols();
    const Index k = r + m;
    if (cols <= k) {
      p.Xh = rhs;
      p.Fh = F;
      p.Uh = U;
      p.Yh = Y;
      return p;
    }
    Matrix Wt(cols, k);
    Wt.leftCols(r) = F.transpose();
    if (m) Wt.rightCols(m) = U.transpose();
    Eigen::HouseholderQR<Matrix> qr(Wt);
    const Matrix Qw = qr.householderQ() * Matrix::Identity(cols, k);
    const Matrix Rt = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>().toDenseMatrix().transpose();
    p.Fh = Rt.topRows(r);
    p.Uh = Rt.bottomRows(m);
    p.Xh = rhs * Qw;
    p.cx = (rhs - p.Xh * Qw.transpose()).squaredNorm();
    if (Y.size()) {
      p.Yh = Y * Qw;
      p.cy = (Y - p.Yh * Qw.transpose()).squaredNorm();
    } else {
      p.Yh = Matrix::Zero(0, k);
    }
    return p;
  }

  Matrix residual(const Matrix& D, const Matrix& B) const {
    Matrix res = Xh - D * Fh;
    if (m()) res.noalias() -= B * Uh;
    return res;
  }

  double objective(const Matrix& D, const Matrix& B) const {
    double f = 0.5 * (residual(D, B).squaredNorm() + cx);
    if (lambda > 0.0 && m()) f += 0.5 * lambda * ((Yh - B.transpose() * Fh).squaredNorm() + cy);
    return f;
  }

  void gradient(const Matrix& D, const Matrix& B, Matrix& gD, Matrix& gB) const {
    const Matrix res = residual(D, B);
    gD.noalias() = -res * Fh.transpose();
    if (m()) {
      gB.noalias() = -res * Uh.transpose();
      if (lambda > 0.0) gB.noalias() -= lambda * Fh * (Yh - B.transpose() * Fh).transpose();
    } else {
      gB.resize(r(), 0);
    }
  }

  /// Hessian action on (D, B), used by the power iteration.
  void hessian(const Matrix& D, const Matrix& B, Matrix& hD, Matrix& hB) const {
    const Matrix w = D * Fh + (m() ? Matrix(B * Uh) : Matrix::Zero(D.rows(), Fh.cols()));
    hD = w * Fh.transpose();
    if (m()) {
      hB = w * Uh.transpose();
      if (lambda > 0.0) hB += lambda * Fh * (Fh.transpose() * B);
    } else {
      hB.resize(r(), 0);
    }
  }
};

struct FistaResult {
  Matrix S, A, B;
  SolveReport report;
};

inline double lipschitz_power_iteration(const CompressedProblem& p, double beta, unsigned seed) {
  const Index r = p.r();
  const Index m = p.m();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix D(r, r), Bt(r, m);
  for (Index i = 0; i < D.size(); ++i) D.data()[i] = normal(rng);
  for (Index i = 0; i < Bt.size(); ++i) Bt.data()[i] = normal(rng);
  double estimate = 0.0;
  Matrix hD, hB;
  for (int it = 0; it < 500; ++it) {
    const double nrm = std::sqrt(D.squaredNorm() + Bt.squaredNorm());
    if (nrm == 0.0) return 0.0;
    D /= nrm;
    Bt /= nrm;
    p.hessian(D, beta * Bt, hD, hB);
    hB *= beta;
    const double next = std::sqrt(hD.squaredNorm() + hB.squaredNorm());
    D = hD;
    Bt = hB;
    if (it > 10 && std::abs(next - estimate) <= 1e-9 * next) {
      estimate = next;
      break;
    }
    estimate = next;
  }
  return estimate;
}

/// FISTA on (S ⪯ 0 symmetric, A skew, B free) with function-value restarts.
/// B is optimised in the scaled variable B̃ = B/β, which balances the curvature
/// of the two blocks when the output weight λ is large.
inline FistaResult fista(const CompressedProblem& p, Matrix B0, const OpInfConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const Index r = p.r();
  const Index m = p.m();
  const double lff = max_eigenvalue(p.Fh * p.Fh.transpose());
  double beta = 1.0;
  double L = lff;
  if (m) {
    const double lbb = max_eigenvalue(p.Uh * p.Uh.transpose()) + p.lambda * lff;
    if (lff > 0.0 && lbb > 0.0) beta = std::sqrt(lff / lbb);
    const double bound = 2.0 * std::max(lff, beta * beta * lbb);
    L = std::min(bound, 1.05 * lipschitz_power_iteration(p, beta, cfg.seed));
    if (!(L > 0.0)) L = bound;
  }

  FistaResult out;
  SolveReport& rep = out.report;
  rep.lipschitz = L;
  Matrix S = Matrix::Zero(r, r), A = Matrix::Zero(r, r);
  Matrix Bt = m ? Matrix(B0 / beta) : Matrix::Zero(r, 0);
  if (!(L > 0.0) || !std::isfinite(L)) {
    // Zero regressors: every D gives the same objective; stay at the feasible start.
    out.S = S;
    out.A = A;
    out.B = Bt * beta;
    rep.objective = p.objective(S + A, out.B);
    rep.iterations = 0;
    return out;
  }

  Matrix yS = S, yA = A, yB = Bt;
  double t = 1.0;
  double f = p.objective(S + A, Bt * beta);
  rep.epoch_objectives.push_back(f);
  Matrix gD, gB;
  const double tiny = 1e-300;
  bool stopped = false;
  int it = 0;
  for (; it < cfg.max_iter; ++it) {
    p.gradient(yS + yA, yB * beta, gD, gB);
    const Matrix stepD = (yS + yA) - gD / L;
    const Matrix nS = project_nsd(sym(stepD));
    const Matrix nA = skew(stepD);
    const Matrix nB = yB - (beta / L) * gB;
    const double fn = p.objective(nS + nA, nB * beta);
    if (!(fn <= f)) {
      // Objective went up: restart momentum from the last accepted point.
      if (t == 1.0) {
        // Plain projected-gradient step did not decrease f; we are at roundoff level.
        stopped = true;
        break;
      }
      t = 1.0;
      yS = S;
      yA = A;
      yB = Bt;
      ++rep.restarts;
      rep.epoch_objectives.push_back(f);
      continue;
    }
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double mom = (t - 1.0) / tn;
    yS = nS + mom * (nS - S);
    yA = nA + mom * (nA - A);
    yB = nB + mom * (nB - Bt);
    S = nS;
    A = nA;
    Bt = nB;
    t = tn;
    const double change = f - fn;
    f = fn;
    if (change <= cfg.rel_tol * std::max(f + change, tiny) || f <= tiny) {
      stopped = true;
      ++it;
      break;
    }
  }
  rep.iterations = it;

  // Projected-gradient (KKT) residual at the returned point, in original units.
  p.gradient(S + A, Bt * beta, gD, gB);
  const Matrix D = S + A;
  const Matrix stepD = D - gD / L;
  const Matrix Dplus = project_nsd(sym(stepD)) + skew(stepD);
  rep.kkt_residual = std::sqrt((L * (D - Dplus)).squaredNorm() + gB.squaredNorm());
  rep.objective = f;
  rep.constraint_violation = std::max(0.0, max_eigenvalue(S));
  const double kkt_bound = 1e-6 * (1.0 + p.data_norm);
  rep.converged = stopped || rep.kkt_residual <= kkt_bound;
  rep.status = rep.converged ? "ok" : "NonConvergence";
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.S = S;
  out.A = A;
  out.B = Bt * beta;
  return out;
}

inline ReducedOperators split(const FistaResult& res, Provenance provenance) {
  ReducedOperators ops;
  ops.Jr = res.A;
  ops.Rr = -res.S;
  ops.Br = res.B;
  ops.provenance = provenance;
  ops.report = res.report;
  return ops;
}

}  // namespace detail

struct ConstrainedLsqResult {
  Matrix D;  // S + A, so J = A and R = −S reproduce it exactly
  Matrix S;
  Matrix A;
  SolveReport report;
};

/// argmin ½‖RHS − D·Fr‖²_F subject to ½(D + Dᵀ) ⪯ 0.
inline ConstrainedLsqResult solve_constrained_lsq(const Matrix& Fr, const Matrix& rhs, const OpInfConfig& cfg = {}) {
  require_same_size(rhs.rows(), Fr.rows(), "solve_constrained_lsq rows");
  require_same_size(rhs.cols(), Fr.cols(), "solve_constrained_lsq cols");
  ConstrainedLsqResult out;
  // A feasible unconstrained minimiser is already optimal.
  const Matrix Dls = Eigen::CompleteOrthogonalDecomposition<Matrix>(Fr.transpose()).solve(rhs.transpose()).transpose();
  if (Dls.allFinite() && max_eigenvalue(sym(Dls)) <= 0.0) {
    out.S = sym(Dls);
    out.A = skew(Dls);
    out.D = out.S + out.A;
    out.report.objective = 0.5 * (rhs - out.D * Fr).squaredNorm();
    out.report.epoch_objectives.push_back(out.report.objective);
    return out;
  }
  const auto p = detail::CompressedProblem::build(rhs, Fr, Matrix::Zero(0, Fr.cols()), Matrix::Zero(0, 0), 0.0);
  auto res = detail::fista(p, Matrix::Zero(Fr.rows(), 0), cfg);
  out.S = res.S;
  out.A = res.A;
  out.D = res.S + res.A;
  out.report = res.report;
  return out;
}

/// Ridge fit Br = argmin ½‖Yᵀ − FrᵀBr‖² + (λ/2)‖Br‖², solved as a stacked least-squares problem.
inline Matrix ridge_output_operator(const Matrix& Fr, const Matrix& Y, double lambda, bool* singular = nullptr) {
  const Index r = Fr.rows();
  const Index cols = Fr.cols();
  Matrix A(cols + r, r);
  A.topRows(cols) = Fr.transpose();
  A.bottomRows(r) = std::sqrt(lambda) * Matrix::Identity(r, r);
  Matrix b = Matrix::Zero(cols + r, Y.rows());
  b.topRows(cols) = Y.transpose();
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(A);
  if (singular) *singular = cod.rank() < r;
  return cod.solve(b);
}

inline void require_consistent(const ProjectedData& data, const Matrix& U, const Matrix& Y) {
  const Index cols = data.Fr.cols();
  require_same_size(data.Xdot_r.cols(), cols, "projected Xdot columns");
  require_same_size(U.cols(), cols, "U columns");
  require_same_size(Y.cols(), cols, "Y columns");
  require_same_size(Y.rows(), U.rows(), "Y rows vs U rows");
}

/// Joint weighted fit of (D_r, B_r).
inline ReducedOperators infer_w(const ProjectedData& data, const Matrix& U, const Matrix& Y, const OpInfConfig& cfg = {}) {
  cfg.validate();
  require_consistent(data, U, Y);
  const auto p = detail::CompressedProblem::build(data.Xdot_r, data.Fr, U, Y, cfg.lambda_w);
  const auto res = detail::fista(p, Matrix::Zero(data.Fr.rows(), U.rows()), cfg);
  return detail::split(res, Provenance::opinf_w);
}

/// Two-step fit: ridge regression for B_r, then the constrained fit for D_r.
inline ReducedOperators infer_r(const ProjectedData& data, const Matrix& U, const Matrix& Y, const OpInfConfig& cfg = {}) {
  cfg.validate();
  require_consistent(data, U, Y);
  bool singular = false;
  const Matrix Br = ridge_output_operator(data.Fr, Y, cfg.lambda_r, &singular);
  const Matrix rhs = data.Xdot_r - Br * U;
  const auto lsq = solve_constrained_lsq(data.Fr, rhs, cfg);
  ReducedOperators ops;
  ops.Jr = lsq.A;
  ops.Rr = -lsq.S;
  ops.Br = Br;
  ops.provenance = Provenance::opinf_r;
  ops.report = lsq.report;
  ops.report.ridge_singular = singular;
  if (singular && ops.report.status == "ok") ops.report.status = "ok (singular ridge system)";
  return ops;
}

/// Projected operators ΦᵀJΦ, ΦᵀRΦ, ΦᵀB with structure restored exactly.
inline ReducedOperators intrusive_operators(const PHModel& model, const ReducedBasis& basis) {
  const Matrix& Phi = basis.Phi;
  ReducedOperators ops;
  ops.Jr = skew(Phi.transpose() * model.J() * Phi);
  ops.Rr = sym(Phi.transpose() * model.R() * Phi);
  ops.Br = Phi.transpose() * model.B();
  ops.provenance = Provenance::intrusive;
  ops.report.iterations = 0;
  return ops;
}

inline nlohmann::json to_json(const SolveReport& rep) {
  return nlohmann::json{{"iterations", rep.iterations},
                        {"restarts", rep.restarts},
                        {"objective", rep.objective},
                        {"kkt_residual", rep.kkt_residual},
                        {"constraint_violation", rep.constraint_violation},
                        {"lipschitz", rep.lipschitz},
                        {"wall_seconds", rep.wall_seconds},
                        {"converged", rep.converged},
                        {"ridge_singular", rep.ridge_singular},
                        {"status", rep.status}};
}

inline void save(const ReducedOperators& ops, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  matio::write_matrix(dir / "Jr.mat", ops.Jr);
  matio::write_matrix(dir / "Rr.mat", ops.Rr);
  matio::write_matrix(dir / "Br.mat", ops.Br);
  auto j = to_json(ops.report);
  j["provenance"] = to_string(ops.provenance);
  j["min_eig_Rr"] = min_eigenvalue(ops.Rr);
  std::ofstream out(dir / "solve_report.json", std::ios::trunc);
  out << j.dump(2) << '\n';
}

/// Reads operators written by save(). The solve report is restored only partially.
inline ReducedOperators load_operators(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw NotFound("no operator directory " + dir.string());
  ReducedOperators ops;
  ops.Jr = matio::read_matrix(dir / "Jr.mat");
  ops.Rr = matio::read_matrix(dir / "Rr.mat");
  ops.Br = matio::read_matrix(dir / "Br.mat");
  if (ops.Jr.rows() != ops.Jr.cols() || ops.Rr.rows() != ops.Jr.rows() || ops.Rr.cols() != ops.Jr.rows() ||
      ops.Br.rows() != ops.Jr.rows()) {
    throw MalformedSnapshot(dir.string() + ": operator shapes disagree");
  }
  const auto report_path = dir / "solve_report.json";
  if (std::filesystem::exists(report_path)) {
    std::ifstream in(report_path);
    try {
      const auto j = nlohmann::json::parse(in);
      const auto prov = j.value("provenance", std::string("intrusive"));
      ops.provenance = prov == "opinf-w" ? Provenance::opinf_w
                       : prov == "opinf-r" ? Provenance::opinf_r
                                           : Provenance::intrusive;
      ops.report.iterations = j.value("iterations", 0);
      ops.report.objective = j.value("objective", 0.0);
      ops.report.kkt_residual = j.value("kkt_residual", 0.0);
      ops.report.converged = j.value("converged", true);
      ops.report.status = j.value("status", std::string("ok"));
    } catch (const nlohmann::json::exception& e) {
      throw MalformedSnapshot(report_path.string() + ": " + e.what());
    }
  }
  return ops;
}

}  // namespace phrom
