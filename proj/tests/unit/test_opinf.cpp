#include "phrom/opinf.hpp"

#include "../support/oracles.hpp"

#include <catch_amalgamated.hpp>

#include <filesystem>

using namespace phrom;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

OpInfConfig tight() {
  OpInfConfig cfg;
  cfg.rel_tol = 1e-15;
  cfg.max_iter = 200000;
  return cfg;
}

// D with an indefinite symmetric part, so the constraint is active.
Matrix indefinite_target(oracle::Rng& rng, Index r) {
  Matrix D = rng.skew(r);
  const Matrix V = rng.rotation(r);
  Vector lam(r);
  for (Index i = 0; i < r; ++i) lam(i) = (i % 2 == 0 ? 1.0 : -1.0) * rng.uniform(0.5, 2.0);
  return D + V * lam.asDiagonal() * V.transpose();
}

}  // namespace

TEST_CASE("scalar problems clamp the least-squares slope at zero", "[opinf]") {
  oracle::Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix F = rng.matrix(1, 30);
    const double slope = rng.uniform(-2.0, 2.0);
    const Matrix rhs = slope * F + 0.1 * rng.matrix(1, 30);
    const double unconstrained = (rhs * F.transpose())(0, 0) / F.squaredNorm();
    const auto res = solve_constrained_lsq(F, rhs, tight());
    CHECK_THAT(res.D(0, 0), WithinAbs(std::min(unconstrained, 0.0), 1e-10));
    CHECK(res.A(0, 0) == 0.0);
  }
}

TEST_CASE("inactive constraint reproduces the unconstrained solution", "[opinf]") {
  oracle::Rng rng(103);
  for (int trial = 0; trial < 10; ++trial) {
    const Index r = rng.integer(2, 6);
    const Matrix Dtrue = rng.skew(r) - rng.psd(r, r) - 0.5 * Matrix::Identity(r, r);
    const Matrix F = rng.matrix(r, 80);
    const Matrix rhs = Dtrue * F + 1e-3 * rng.matrix(r, 80);
    const Matrix Dstar = (rhs * F.transpose()) * (F * F.transpose()).inverse();
    REQUIRE(max_eigenvalue(sym(Dstar)) < 0.0);
    const auto res = solve_constrained_lsq(F, rhs, tight());
    CHECK((res.D - Dstar).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("2x2 constrained fits match a brute-force search", "[opinf]") {
  oracle::Rng rng(107);
  for (int trial = 0; trial < 6; ++trial) {
    const Matrix F = rng.matrix(2, 20);
    const Matrix rhs = indefinite_target(rng, 2) * F + 0.3 * rng.matrix(2, 20);
    const auto res = solve_constrained_lsq(F, rhs, tight());
    const double ours = oracle::lsq_objective(res.D, F, rhs);
    const double ref = oracle::constrained_lsq_2x2(F, rhs);
    CHECK(ours <= ref * (1.0 + 1e-4));
    CHECK(ref <= ours * (1.0 + 1e-4));
  }
}

TEST_CASE("5x5 constrained fits satisfy KKT and agree with ADMM", "[opinf]") {
  oracle::Rng rng(109);
  for (int trial = 0; trial < 4; ++trial) {
    const Matrix F = rng.matrix(5, 60);
    const Matrix rhs = indefinite_target(rng, 5) * F + 0.2 * rng.matrix(5, 60);
    const auto res = solve_constrained_lsq(F, rhs, tight());
    const auto k = oracle::kkt(res.D, F, rhs);
    const double scale = 1.0 + (rhs * F.transpose()).norm();
    CHECK(k.primal_infeasibility < 1e-12);
    CHECK(k.stationarity_skew < 1e-7 * scale);
    CHECK(k.dual_infeasibility < 1e-7 * scale);
    CHECK(k.complementarity < 1e-7 * scale);
    const Matrix Dadmm = oracle::constrained_lsq_admm(F, rhs);
    CHECK_THAT(oracle::lsq_objective(res.D, F, rhs), WithinRel(oracle::lsq_objective(Dadmm, F, rhs), 1e-6));
  }
}

TEST_CASE("epoch objectives never increase", "[opinf]") {
  oracle::Rng rng(113);
  const Matrix F = rng.matrix(6, 40);
  const Matrix rhs = indefinite_target(rng, 6) * F + 0.1 * rng.matrix(6, 40);
  const auto res = solve_constrained_lsq(F, rhs, tight());
  const auto& e = res.report.epoch_objectives;
  REQUIRE(!e.empty());
  for (std::size_t i = 1; i < e.size(); ++i) CHECK(e[i] <= e[i - 1]);
  CHECK(res.report.objective <= e.back());
  CHECK(res.report.converged);
}

TEST_CASE("learned operators carry exact structure", "[opinf]") {
  oracle::Rng rng(127);
  const Index r = 5;
  ProjectedData data;
  data.Fr = rng.matrix(r, 50);
  data.Xdot_r = indefinite_target(rng, r) * data.Fr + rng.matrix(r, 1) * rng.matrix(1, 50);
  const Matrix U = rng.matrix(1, 50);
  const Matrix Y = rng.matrix(1, 50);
  for (const auto& ops : {infer_w(data, U, Y), infer_r(data, U, Y)}) {
    CHECK((ops.Jr + ops.Jr.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((ops.Rr - ops.Rr.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(min_eigenvalue(ops.Rr) >= -1e-12);
    CHECK_NOTHROW(check_structure(ops, 1e-8));
  }
}

TEST_CASE("consistent pH data is recovered", "[opinf]") {
  oracle::Rng rng(131);
  const Index r = 4;
  const Matrix Jt = rng.skew(r);
  const Matrix Rt = rng.psd(r, 2);
  const Matrix Bt = rng.matrix(r, 1);
  ProjectedData data;
  data.Fr = rng.matrix(r, 60);
  const Matrix U = rng.matrix(1, 60);
  data.Xdot_r = (Jt - Rt) * data.Fr + Bt * U;
  const Matrix Y = Bt.transpose() * data.Fr;

  OpInfConfig cfg = tight();
  cfg.lambda_r = 0.0;
  const auto opsr = infer_r(data, U, Y, cfg);
  CHECK((opsr.Br - Bt).norm() < 1e-10);
  CHECK((opsr.Jr - Jt).norm() < 1e-6);
  CHECK((opsr.Rr - Rt).norm() < 1e-6);

  const auto opsw = infer_w(data, U, Y, tight());
  CHECK((opsw.Br - Bt).norm() < 1e-5);
  CHECK((opsw.Dr() - (Jt - Rt)).norm() < 1e-5);
}

TEST_CASE("ridge output operator solves the normal equations", "[opinf]") {
  oracle::Rng rng(137);
  const Matrix F = rng.matrix(5, 40);
  const Matrix Y = rng.matrix(2, 40);
  for (double lambda : {0.0, 1e-3, 1.0, 10.0}) {
    const Matrix Br = ridge_output_operator(F, Y, lambda);
    const Matrix lhs = (F * F.transpose() + lambda * Matrix::Identity(5, 5)) * Br;
    CHECK((lhs - F * Y.transpose()).norm() < 1e-10 * (1.0 + (F * Y.transpose()).norm()));
  }
  CHECK(ridge_output_operator(F, Y, 1e14).norm() < 1e-10);
  bool singular = false;
  ridge_output_operator(Matrix::Zero(5, 40), Y, 0.0, &singular);
  CHECK(singular);
}

TEST_CASE("large output weight drives Br to the ridge-free output fit", "[opinf]") {
  oracle::Rng rng(139);
  ProjectedData data;
  data.Fr = rng.matrix(3, 40);
  data.Xdot_r = rng.matrix(3, 40);
  const Matrix U = rng.matrix(1, 40);
  const Matrix Y = rng.matrix(1, 40);
  const Matrix Bls = ridge_output_operator(data.Fr, Y, 0.0);
  OpInfConfig cfg = tight();
  double prev = std::numeric_limits<double>::infinity();
  for (double lw : {1.0, 1e2, 1e4}) {
    cfg.lambda_w = lw;
    const double gap = (infer_w(data, U, Y, cfg).Br - Bls).norm();
    CHECK(gap < prev);
    prev = gap;
  }
  CHECK(prev < 1e-2);
}

TEST_CASE("clip_dissipation removes only small negative eigenvalues", "[opinf]") {
  Matrix R(2, 2);
  R << 1.0, 0.0, 0.0, -1e-10;
  const Matrix C = clip_dissipation(R, 1e-8);
  CHECK(min_eigenvalue(C) >= 0.0);
  CHECK((C - C.transpose()).norm() == 0.0);
  CHECK((C - R).norm() < 2e-10);
  R(1, 1) = -1e-6;
  CHECK_THROWS_AS(clip_dissipation(R, 1e-8), StructureViolation);
  ReducedOperators ops;
  ops.Jr = Matrix::Zero(2, 2);
  ops.Rr = R;
  ops.Br = Matrix::Zero(2, 1);
  CHECK_THROWS_AS(check_structure(ops, 1e-8), StructureViolation);
  ops.Rr = Matrix::Identity(2, 2);
  ops.Jr(0, 1) = 1.0;
  CHECK_THROWS_AS(check_structure(ops, 1e-8), StructureViolation);
}

TEST_CASE("intrusive operators are projections of the model", "[opinf]") {
  oracle::Rng rng(149);
  const PHModel model = build_msd(5, 4.0, 4.0, 1.0);
  ReducedBasis basis;
  basis.Phi = rng.orthonormal(10, 3);
  basis.r = 3;
  const auto ops = intrusive_operators(model, basis);
  CHECK((ops.Jr - basis.Phi.transpose() * model.J() * basis.Phi).norm() < 1e-14);
  CHECK((ops.Rr - basis.Phi.transpose() * model.R() * basis.Phi).norm() < 1e-14);
  CHECK((ops.Br - basis.Phi.transpose() * model.B()).norm() == 0.0);
  CHECK_NOTHROW(check_structure(ops, 0.0 + 1e-14));
}

TEST_CASE("operators survive a save/load round trip", "[opinf]") {
  oracle::Rng rng(151);
  ReducedOperators ops;
  ops.Jr = rng.skew(3);
  ops.Rr = rng.psd(3, 2);
  ops.Br = rng.matrix(3, 1);
  ops.provenance = Provenance::opinf_r;
  ops.report.iterations = 17;
  const auto dir = std::filesystem::temp_directory_path() / "phrom_test_ops";
  std::filesystem::remove_all(dir);
  save(ops, dir);
  const auto back = load_operators(dir);
  CHECK(back.Jr == ops.Jr);
  CHECK(back.Rr == ops.Rr);
  CHECK(back.Br == ops.Br);
  CHECK(back.provenance == Provenance::opinf_r);
  CHECK(back.report.iterations == 17);
  CHECK_THROWS_AS(load_operators(dir / "nope"), NotFound);
}

TEST_CASE("invalid settings are rejected", "[opinf]") {
  OpInfConfig cfg;
  cfg.lambda_w = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  ProjectedData data;
  data.Fr = Matrix::Zero(2, 10);
  data.Xdot_r = Matrix::Zero(2, 9);
  CHECK_THROWS_AS(infer_r(data, Matrix::Zero(1, 10), Matrix::Zero(1, 10)), DimensionMismatch);
}
