#pragma once

#include "phrom/deim.hpp"
#include "phrom/errors.hpp"
#include "phrom/integrator.hpp"
#include "phrom/models.hpp"
#include "phrom/opinf.hpp"
#include "phrom/pod.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>

namespace phrom {

/// opinf / opinf-deim: learned operators; spg / spg-deim: projected operators;
/// g: plain Galerkin projection of the full drift (not structure-preserving).
enum class RomKind { opinf, opinf_deim, spg, spg_deim, g };

inline std::string to_string(RomKind k) {
  switch (k) {
    case RomKind::opinf: return "opinf";
    case RomKind::opinf_deim: return "opinf-deim";
    case RomKind::spg: return "spg";
    case RomKind::spg_deim: return "spg-deim";
    case RomKind::g: return "g";
  }
  return "?";
}

inline RomKind rom_kind_from_string(const std::string& s) {
  if (s == "opinf") return RomKind::opinf;
  if (s == "opinf-deim") return RomKind::opinf_deim;
  if (s == "spg") return RomKind::spg;
  if (s == "spg-deim") return RomKind::spg_deim;
  if (s == "g") return RomKind::g;
  throw InvalidArgument("unknown ROM kind '" + s + "'");
}

inline bool uses_deim(RomKind k) { return k == RomKind::opinf_deim || k == RomKind::spg_deim; }

class AssembledROM {
 public:
  RomKind kind() const { return kind_; }
  Index r() const { return Phi_.cols(); }
  Index m() const { return Br_.cols(); }
  const Matrix& Phi() const { return Phi_; }
  const Matrix& Jr() const { return Jr_; }
  const Matrix& Rr() const { return Rr_; }
  const Matrix& Br() const { return Br_; }
  const Matrix& Qr() const { return Qr_; }
  const PHModel& model() const { return *model_; }
  const std::optional<HyperReducedGradient>& hyper() const { return hyper_; }
  bool is_linear() const { return model_->is_linear(); }

  Vector initial_state() const { return Phi_.transpose() * model_->x0(); }

  /// ∇H_r(x_r), or ∇H_hr(x_r) for DEIM kinds.
  Vector gradient(const Vector& xr) const {
    if (hyper_) return hyper_->gradient(xr);
    Vector g = Qr_ * xr;
    if (const auto& nl = model_->hamiltonian().nonlinear) {
      g += Phi_.transpose() * (nl->jacobian(Phi_ * xr).transpose() * nl->c);
    }
    return g;
  }

  Matrix hessian(const Vector& xr) const {
    if (hyper_) return hyper_->hessian(xr);
    if (const auto& nl = model_->hamiltonian().nonlinear) {
      return sym(Qr_ + Phi_.transpose() * (nl->hessian_of_N(Phi_ * xr) * Phi_));
    }
    return Qr_;
  }

  Vector drift(const Vector& xr, const Vector& u) const {
    if (kind_ == RomKind::g) {
      return PhiT_JmR_ * eval_gradient(*model_, Phi_ * xr) + Br_ * u;
    }
    return Dr_ * gradient(xr) + Br_ * u;
  }

  Matrix drift_jacobian(const Vector& xr) const {
    if (kind_ == RomKind::g) {
      return PhiT_JmR_ * (hessian_sparse(*model_, Phi_ * xr) * Phi_);
    }
    return Dr_ * hessian(xr);
  }

  Vector output(const Vector& xr) const {
    if (kind_ == RomKind::g) return model_->B().transpose() * eval_gradient(*model_, Phi_ * xr);
    return Br_.transpose() * gradient(xr);
  }

  /// H(Φx_r) for non-DEIM kinds, H_hr(x_r) for DEIM kinds.
  double hamiltonian(const Vector& xr) const {
    if (hyper_) return hyper_->energy(xr);
    return eval_hamiltonian(*model_, Phi_ * xr);
  }

  /// H(Φx_r) regardless of kind.
  double lifted_hamiltonian(const Vector& xr) const { return eval_hamiltonian(*model_, Phi_ * xr); }

 private:
  friend AssembledROM assemble_rom(RomKind, std::shared_ptr<const PHModel>, const ReducedBasis&,
                                   std::optional<ReducedOperators>, std::optional<DeimData>, double);

  RomKind kind_ = RomKind::opinf;
  std::shared_ptr<const PHModel> model_;
  Matrix Phi_;
  Matrix Jr_, Rr_, Br_, Dr_, Qr_;
  Matrix PhiT_JmR_;  // g kind only
  std::optional<HyperReducedGradient> hyper_;
};

/// Builds a runnable reduced system. `operators` is required for opinf kinds
/// and ignored for spg/g (which project the model). Learned Rr eigenvalues in
/// (−psd_tol, 0) are clipped so the ROM is dissipative.
inline AssembledROM assemble_rom(RomKind kind, std::shared_ptr<const PHModel> model, const ReducedBasis& basis,
                                 std::optional<ReducedOperators> operators = std::nullopt,
                                 std::optional<DeimData> deim = std::nullopt, double psd_tol = 1e-8) {
  if (!model) throw InvalidArgument("assemble_rom: null model");
  if (uses_deim(kind) != deim.has_value()) {
    throw InvalidArgument("assemble_rom: DEIM data must be given exactly for the *-deim kinds");
  }
  if (uses_deim(kind) && model->is_linear()) throw NoNonlinearPart();
  require_same_size(basis.Phi.rows(), model->n(), "assemble_rom basis rows");

  AssembledROM rom;
  rom.kind_ = kind;
  rom.model_ = model;
  rom.Phi_ = basis.Phi;
  rom.Qr_ = sym(basis.Phi.transpose() * model->Q() * basis.Phi);

  if (kind == RomKind::g) {
    rom.PhiT_JmR_ = basis.Phi.transpose() * (model->J() - model->R());
    rom.Br_ = basis.Phi.transpose() * model->B();
    return rom;
  }

  ReducedOperators ops;
  if (kind == RomKind::spg || kind == RomKind::spg_deim) {
    ops = intrusive_operators(*model, basis);
  } else {
    if (!operators) throw InvalidArgument("assemble_rom: opinf kinds need learned operators");
    ops = std::move(*operators);
  }
  require_same_size(ops.Jr.rows(), basis.r, "assemble_rom operator size");
  require_same_size(ops.Br.cols(), model->n_inputs(), "assemble_rom Br columns");
  check_structure(ops, psd_tol);
  rom.Jr_ = ops.Jr;
  rom.Rr_ = clip_dissipation(ops.Rr, psd_tol);
  rom.Br_ = ops.Br;
  rom.Dr_ = rom.Jr_ - rom.Rr_;
  if (deim) rom.hyper_ = make_hyper_gradient(*model, basis, std::move(*deim));
  return rom;
}

struct RomField {
  const AssembledROM* rom;
  Input input;

  Vector drift(const Vector& xr, double t) const { return rom->drift(xr, input(t)); }
  Matrix jacobian(const Vector& xr, double) const { return rom->drift_jacobian(xr); }
  bool is_linear() const { return rom->is_linear(); }
};

/// Reduced trajectory from x_r(0) = Φᵀx⁰. `hamiltonian` holds H_r, or H_hr for DEIM kinds.
inline Trajectory simulate_rom(const AssembledROM& rom, const Input& input, const TimeGrid& grid,
                               const NewtonConfig& newton = {}, IntegrationStats* stats = nullptr) {
  const RomField field{&rom, input};
  Trajectory traj;
  traj.grid = grid;
  traj.states = integrate(field, rom.initial_state(), grid, newton, stats);
  traj.outputs.resize(rom.m(), grid.points());
  traj.hamiltonian.resize(grid.points());
  for (Index k = 0; k < grid.points(); ++k) {
    const Vector xr = traj.states.col(k);
    traj.outputs.col(k) = rom.output(xr);
    traj.hamiltonian(k) = rom.hamiltonian(xr);
  }
  return traj;
}

inline double reduced_hamiltonian(const AssembledROM& rom, const Vector& xr) { return rom.hamiltonian(xr); }

struct DissipationAudit {
  Vector slack;      // δᵏ = H(xᵏ⁺¹) − H(xᵏ) − Δt·y(x_mid)ᵀu(t_mid)
  Vector tolerance;  // per-step allowance
  bool passed = true;
  Index first_violation = -1;
  double max_slack = -std::numeric_limits<double>::infinity();
};

/// Discrete dissipation check over a trajectory. The port power is integrated
/// with the midpoint rule; quadratic energies get a roundoff allowance, others
/// an O(Δt³) one.
template <class EnergyFn, class OutputFn>
DissipationAudit audit_dissipation(const Matrix& states, const TimeGrid& grid, const Input& input, EnergyFn&& energy,
                                   OutputFn&& output, bool quadratic) {
  DissipationAudit audit;
  const Index steps = states.cols() - 1;
  audit.slack.resize(steps);
  audit.tolerance.resize(steps);
  const double dt = grid.dt;
  double h_prev = energy(Vector(states.col(0)));
  for (Index k = 0; k < steps; ++k) {
    const Vector mid = 0.5 * (states.col(k) + states.col(k + 1));
    const double h_next = energy(Vector(states.col(k + 1)));
    const Vector u = input(grid.time(static_cast<std::size_t>(k)) + 0.5 * dt);
    const double power = output(mid).dot(u);
    const double delta = h_next - h_prev - dt * power;
    const double tol = quadratic ? 1e-10 * (1.0 + std::abs(h_prev)) : 10.0 * dt * dt * dt * (1.0 + std::abs(h_prev));
    audit.slack(k) = delta;
    audit.tolerance(k) = tol;
    audit.max_slack = std::max(audit.max_slack, delta);
    if (delta > tol && audit.passed) {
      audit.passed = false;
      audit.first_violation = k;
    }
    h_prev = h_next;
  }
  return audit;
}

inline DissipationAudit dissipation_audit(const AssembledROM& rom, const Trajectory& traj, const Input& input) {
  return audit_dissipation(
      traj.states, traj.grid, input, [&](const Vector& x) { return rom.hamiltonian(x); },
      [&](const Vector& x) { return rom.output(x); }, rom.is_linear());
}

inline DissipationAudit dissipation_audit(const PHModel& model, const Trajectory& traj, const Input& input) {
  return audit_dissipation(
      traj.states, traj.grid, input, [&](const Vector& x) { return eval_hamiltonian(model, x); },
      [&](const Vector& x) { return eval_output(model, x); }, model.is_linear());
}

/// Writes traj_states.mat, traj_outputs.mat, traj_hamiltonian.mat and traj_meta.json.
/// For ROM trajectories the lifted energy H(Φx_r) is stored as well.
inline void save(const Trajectory& traj, const std::filesystem::path& dir, const AssembledROM* rom = nullptr) {
  std::filesystem::create_directories(dir);
  matio::write_matrix(dir / "traj_states.mat", traj.states);
  matio::write_matrix(dir / "traj_outputs.mat", traj.outputs);
  matio::write_matrix(dir / "traj_hamiltonian.mat", traj.hamiltonian);
  nlohmann::json meta{{"t0", traj.grid.t0}, {"dt", traj.grid.dt}, {"steps", traj.grid.steps}};
  if (rom) {
    Vector lifted(traj.states.cols());
    for (Index k = 0; k < traj.states.cols(); ++k) lifted(k) = rom->lifted_hamiltonian(traj.states.col(k));
    matio::write_matrix(dir / "traj_hamiltonian_lifted.mat", lifted);
    meta["kind"] = to_string(rom->kind());
    meta["r"] = rom->r();
    meta["hamiltonian"] = rom->hyper() ? "hyper-reduced" : "reduced";
  } else {
    meta["kind"] = "fom";
  }
  std::ofstream out(dir / "traj_meta.json", std::ios::trunc);
  out << meta.dump(2) << '\n';
}

}  // namespace phrom
