// phrom: config-driven runner for port-Hamiltonian operator-inference studies.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include "phrom/phrom.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace phrom;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Overrides {
  std::string config;
  std::string out;
  std::vector<Index> r;
  std::vector<Index> m_deim;
  std::vector<double> lambda_w;
  std::vector<double> lambda_r;
  std::vector<std::string> methods;
  bool full = false;
  int seed = -1;
  int trim = -1;
  int max_iter = -1;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "TOML experiment file")->required()->check(CLI::ExistingFile);
  cmd->add_option("-o,--out", o.out, "output directory (overrides output_dir)");
  cmd->add_option("--r", o.r, "reduced dimensions");
  cmd->add_option("--m-deim", o.m_deim, "DEIM interpolation sizes");
  cmd->add_option("--lambda-w", o.lambda_w, "weights for opinf-w");
  cmd->add_option("--lambda-r", o.lambda_r, "ridge parameters for opinf-r");
  cmd->add_option("--method", o.methods, "methods: opinf-w, opinf-r, spg, g");
  cmd->add_flag("--full", o.full, "use the full-scale model size (model.full_n0)");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--trim", o.trim, "drop this many snapshot columns at each end");
  cmd->add_option("--max-iter", o.max_iter, "iteration cap of the constrained solver");
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig cfg = load_config(o.config);
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (!o.r.empty()) cfg.r_list = o.r;
  if (!o.m_deim.empty()) cfg.m_deim_list = o.m_deim;
  if (!o.lambda_w.empty()) cfg.lambda_w_list = o.lambda_w;
  if (!o.lambda_r.empty()) cfg.lambda_r_list = o.lambda_r;
  if (!o.methods.empty()) cfg.methods = o.methods;
  if (o.seed >= 0) cfg.seed = static_cast<unsigned>(o.seed);
  if (o.trim >= 0) cfg.trim = static_cast<std::size_t>(o.trim);
  if (o.max_iter > 0) cfg.max_iter = o.max_iter;
  cfg.full = o.full;
  cfg.validate();
  return cfg;
}

int report(const RunSummary& s) {
  std::cerr << "wrote " << s.csv_path.string() << " (" << s.cells.size() << " cells, " << s.skipped << " reused, "
            << s.failures() << " failed)\n";
  if (s.audit_failures() > 0) {
    std::cerr << "warning: " << s.audit_failures() << " structure-preserving ROM(s) failed the dissipation audit\n";
  }
  return s.failures() > 0 ? kExitNumerical : 0;
}

int cmd_simulate_fom(const Overrides& o) {
  const ExperimentConfig cfg = resolve(o);
  const TrainingData td = ensure_fom(cfg, std::cerr);
  std::printf("n=%ld steps=%zu state_magnitude=%.6e output_magnitude=%.6e\n", static_cast<long>(td.model->n()),
              td.fom.grid.steps, trajectory_magnitude(td.fom), quadrature_norm(td.fom.outputs, td.fom.grid));
  std::printf("snapshots: %s\n", (cfg.output_dir / "fom").string().c_str());
  return 0;
}

int cmd_infer(const Overrides& o) {
  const ExperimentConfig cfg = resolve(o);
  const TrainingData td = prepare_training(cfg, std::cerr);
  for (const SweepJob& job : enumerate_jobs(cfg)) {
    const ReducedBasis basis = truncate(td.basis, job.r);
    const ProjectedData data = project(basis, td.snapshots, td.model->Q());
    const auto ops = infer_operators(cfg, td, job, basis, data);
    const fs::path dir = cfg.output_dir / "operators" / job.id();
    save(basis, dir);
    if (ops) {
      save(*ops, dir);
      std::printf("%s: min_eig_Rr=%.6e iterations=%d converged=%d -> %s\n", job.id().c_str(), min_eigenvalue(ops->Rr),
                  ops->report.iterations, ops->report.converged ? 1 : 0, dir.string().c_str());
    } else {
      std::printf("%s: basis only -> %s\n", job.id().c_str(), dir.string().c_str());
    }
  }
  return 0;
}

int cmd_rom_sim(const Overrides& o, const std::string& ops_dir, const std::string& kind_name, Index m,
                bool use_test_input) {
  const ExperimentConfig cfg = resolve(o);
  const TrainingData td = ensure_fom(cfg, std::cerr);
  const RomKind kind = rom_kind_from_string(kind_name);
  const ReducedBasis basis = load_basis(ops_dir);
  std::optional<ReducedOperators> ops;
  if (kind == RomKind::opinf || kind == RomKind::opinf_deim) ops = load_operators(ops_dir);
  std::optional<DeimData> deim;
  if (uses_deim(kind)) {
    if (m < 1) throw ConfigError("--m-deim is required for " + kind_name);
    const auto snaps = assemble_jacobian_snapshots(*td.model, basis.Phi, td.snapshots.X, cfg.deim_column_cap);
    deim = select_interpolation(snaps.MJ, m, td.model->nonlinear().c);
  }
  const AssembledROM rom = assemble_rom(kind, td.model, basis, ops, deim, cfg.psd_tol);

  Input input = td.input;
  Trajectory fom = td.fom;
  if (use_test_input) {
    if (!cfg.test_input) throw ConfigError("--test-input needs a [test_input] table");
    input = make_input(*cfg.test_input);
    fom = simulate_fom(*td.model, input, cfg.test_grid(), cfg.newton);
  }
  const Trajectory traj = simulate_rom(rom, input, fom.grid, cfg.newton);
  const auto audit = dissipation_audit(rom, traj, input);
  const fs::path dir = cfg.output_dir / "rom_sim" / (kind_name + "_r" + std::to_string(rom.r()) +
                                                     (m > 0 ? "_m" + std::to_string(m) : std::string()));
  save(traj, dir, &rom);
  std::printf("E_x=%.6e E_y=%.6e rel_E_y=%.6e audit=%s -> %s\n", state_error(fom, traj, basis.Phi),
              output_error(fom, traj), relative_output_error(fom, traj), audit.passed ? "pass" : "FAIL",
              dir.string().c_str());
  return 0;
}

int cmd_errors(const Overrides& o, bool generalize) {
  const ExperimentConfig cfg = resolve(o);
  const fs::path cells = cfg.output_dir / (generalize ? "generalize" : "cells");
  if (!fs::is_directory(cells)) throw ConfigError("no sweep results under " + cells.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(cells)) {
    if (entry.is_directory() && fs::exists(entry.path() / "cell.json")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::cout << ErrorReport::kCsvHeader << '\n';
  std::size_t failed = 0;
  for (const auto& d : dirs) {
    std::ifstream in(d / "cell.json");
    const CellResult c = detail::cell_from_json(nlohmann::json::parse(in));
    failed += c.report.failed ? 1 : 0;
    std::cout << to_csv_row(c.report) << '\n';
  }
  return failed > 0 ? kExitNumerical : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structure-preserving reduced-order models of port-Hamiltonian systems"};
  app.require_subcommand(1);

  Overrides o;
  auto* fom = app.add_subcommand("simulate-fom", "simulate the training full-order model and store snapshots");
  add_common(fom, o);

  auto* infer = app.add_subcommand("infer", "infer reduced operators for every configured (method, r, lambda)");
  add_common(infer, o);

  std::string ops_dir;
  std::string kind = "opinf";
  Index m = 0;
  bool test_input = false;
  auto* rom = app.add_subcommand("rom-sim", "simulate one ROM from stored operators");
  add_common(rom, o);
  rom->add_option("--ops", ops_dir, "directory with Phi.mat (and Jr/Rr/Br.mat for opinf kinds)")->required();
  rom->add_option("--kind", kind, "opinf, opinf-deim, spg, spg-deim or g");
  rom->add_option("--m", m, "DEIM size for the *-deim kinds");
  rom->add_flag("--test-input", test_input, "drive the ROM with [test_input] instead of the training input");

  auto* sweep = app.add_subcommand("sweep", "run the full pipeline and write errors.csv");
  add_common(sweep, o);

  bool errors_generalize = false;
  auto* errors = app.add_subcommand("errors", "print the error table collected from stored sweep cells");
  add_common(errors, o);
  errors->add_flag("--generalize", errors_generalize, "read generalization cells instead");

  auto* gen = app.add_subcommand("generalize", "train on [input], evaluate on [test_input]");
  add_common(gen, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*fom) return cmd_simulate_fom(o);
    if (*infer) return cmd_infer(o);
    if (*rom) return cmd_rom_sim(o, ops_dir, kind, m, test_input);
    if (*sweep) return report(run_pipeline(resolve(o)));
    if (*errors) return cmd_errors(o, errors_generalize);
    if (*gen) return report(generalization_test(resolve(o)));
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return 0;
}
