#pragma once

// Config-driven sweeps: FOM run, snapshots, POD, inference per (method, r, λ),
// optional DEIM per m, ROM simulation and error tables. Every sweep cell owns a
// directory; a cell is skipped on rerun when its stamp still matches.

#include "phrom/deim.hpp"
#include "phrom/errors.hpp"
#include "phrom/inputs.hpp"
#include "phrom/integrator.hpp"
#include "phrom/metrics.hpp"
#include "phrom/models.hpp"
#include "phrom/opinf.hpp"
#include "phrom/pod.hpp"
#include "phrom/rom.hpp"
#include "phrom/snapshots.hpp"

#include <nlohmann/json.hpp>
#include <toml.hpp>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace phrom {

struct ModelSpec {
  std::string name = "msd";
  Index n0 = 100;
  double mass = 4.0;
  double stiffness = 4.0;
  double damping = 1.0;
  double gamma = 0.1;
  std::optional<Index> full_n0;
};

struct ExperimentConfig {
  std::string name = "experiment";
  ModelSpec model;
  double dt = 0.01;
  double T = 10.0;
  SignalSpec train_input;
  std::optional<SignalSpec> test_input;
  std::optional<double> test_dt;
  std::optional<double> test_T;
  std::vector<std::string> methods{"opinf-r"};
  std::vector<Index> r_list;
  std::vector<Index> m_deim_list;
  std::vector<double> lambda_w_list{1e5};
  std::vector<double> lambda_r_list{1e-11};
  std::filesystem::path output_dir = "runs/experiment";
  unsigned seed = 0;
  NewtonConfig newton;
  double rel_tol = 1e-10;
  int max_iter = 50000;
  double psd_tol = 1e-8;
  std::size_t trim = 0;
  Index deim_column_cap = 200000;
  bool snapshot_csv = false;
  bool save_trajectories = true;
  bool full = false;

  Index effective_n0() const { return full && model.full_n0 ? *model.full_n0 : model.n0; }
  TimeGrid grid() const { return TimeGrid::over(T, dt); }
  TimeGrid test_grid() const { return TimeGrid::over(test_T.value_or(T), test_dt.value_or(dt)); }

  bool uses(const std::string& method) const {
    return std::find(methods.begin(), methods.end(), method) != methods.end();
  }

  void validate() const {
    if (model.name != "msd" && model.name != "toda") throw ConfigError("model.name must be 'msd' or 'toda'");
    if (model.n0 < 1 || (model.name == "toda" && effective_n0() < 2)) throw ConfigError("model.n0 too small");
    if (methods.empty()) throw ConfigError("methods must be a nonempty list");
    for (const auto& m : methods) {
      if (m != "opinf-w" && m != "opinf-r" && m != "spg" && m != "g") throw ConfigError("unknown method '" + m + "'");
    }
    if (r_list.empty()) throw ConfigError("r must be a nonempty list");
    for (Index r : r_list) {
      if (r < 1) throw ConfigError("every r must be positive");
    }
    if (uses("opinf-w") && lambda_w_list.empty()) throw ConfigError("lambda_w must be a nonempty list");
    if (uses("opinf-r") && lambda_r_list.empty()) throw ConfigError("lambda_r must be a nonempty list");
    for (double l : lambda_w_list) {
      if (!(l > 0.0)) throw ConfigError("lambda_w values must be positive");
    }
    for (double l : lambda_r_list) {
      if (!(l >= 0.0)) throw ConfigError("lambda_r values must be nonnegative");
    }
    for (Index m : m_deim_list) {
      if (m < 1) throw ConfigError("every m_deim must be positive");
    }
    if (!m_deim_list.empty() && model.name == "msd") throw ConfigError("m_deim given for a model without nonlinearity");
    try {
      (void)grid();
      if (test_input) (void)test_grid();
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
    (void)make_scalar_signal(train_input);
    if (test_input) (void)make_scalar_signal(*test_input);
    if (!(psd_tol >= 0.0) || !(rel_tol > 0.0) || max_iter < 1) throw ConfigError("invalid solver settings");
    if (newton.max_iter < 1 || !(newton.tol > 0.0)) throw ConfigError("invalid Newton settings");
  }
};

namespace detail {

template <class T>
std::vector<T> toml_list(const toml::table& tbl, std::string_view key, std::vector<T> fallback) {
  const auto* node = tbl.get(key);
  if (!node) return fallback;
  const auto* arr = node->as_array();
  if (!arr) throw ConfigError(std::string(key) + " must be an array");
  std::vector<T> out;
  for (const auto& v : *arr) {
    if constexpr (std::is_same_v<T, std::string>) {
      const auto s = v.value<std::string>();
      if (!s) throw ConfigError(std::string(key) + " must hold strings");
      out.push_back(*s);
    } else if constexpr (std::is_integral_v<T>) {
      const auto i = v.value<int64_t>();
      if (!i) throw ConfigError(std::string(key) + " must hold integers");
      out.push_back(static_cast<T>(*i));
    } else {
      const auto d = v.value<double>();
      if (!d) throw ConfigError(std::string(key) + " must hold numbers");
      out.push_back(*d);
    }
  }
  return out;
}

template <class T>
T toml_value(const toml::table& tbl, std::string_view key, T fallback) {
  const auto* node = tbl.get(key);
  if (!node) return fallback;
  const auto v = node->value<T>();
  if (!v) throw ConfigError("config key '" + std::string(key) + "' has the wrong type");
  return *v;
}

inline const toml::table* toml_table(const toml::table& tbl, std::string_view key) {
  const auto* node = tbl.get(key);
  if (!node) return nullptr;
  const auto* t = node->as_table();
  if (!t) throw ConfigError(std::string(key) + " must be a table");
  return t;
}

inline SignalSpec parse_signal(const toml::table& t) {
  SignalSpec s;
  s.kind = toml_value<std::string>(t, "kind", "zero");
  s.amplitude = toml_value<double>(t, "amplitude", 1.0);
  s.period = toml_value<double>(t, "period", 1.0);
  s.times = toml_list<double>(t, "times", {});
  s.values = toml_list<double>(t, "values", {});
  return s;
}

inline nlohmann::json signal_json(const SignalSpec& s) {
  return {{"kind", s.kind}, {"amplitude", s.amplitude}, {"period", s.period}, {"times", s.times}, {"values", s.values}};
}

}  // namespace detail

inline ExperimentConfig parse_config(const toml::table& root) {
  using detail::toml_list;
  using detail::toml_table;
  using detail::toml_value;
  ExperimentConfig cfg;
  cfg.name = toml_value<std::string>(root, "name", cfg.name);
  cfg.output_dir = toml_value<std::string>(root, "output_dir", cfg.output_dir.string());
  cfg.seed = static_cast<unsigned>(toml_value<int64_t>(root, "seed", 0));
  cfg.methods = toml_list<std::string>(root, "methods", cfg.methods);
  cfg.r_list = toml_list<Index>(root, "r", {});
  cfg.m_deim_list = toml_list<Index>(root, "m_deim", {});
  if (root.get("m_deim") && cfg.m_deim_list.empty()) throw ConfigError("m_deim must be nonempty when given");
  cfg.lambda_w_list = toml_list<double>(root, "lambda_w", cfg.lambda_w_list);
  cfg.lambda_r_list = toml_list<double>(root, "lambda_r", cfg.lambda_r_list);

  const auto* model = toml_table(root, "model");
  if (!model) throw ConfigError("missing [model] table");
  cfg.model.name = toml_value<std::string>(*model, "name", cfg.model.name);
  cfg.model.n0 = static_cast<Index>(toml_value<int64_t>(*model, "n0", cfg.model.n0));
  cfg.model.mass = toml_value<double>(*model, "mass", cfg.model.mass);
  cfg.model.stiffness = toml_value<double>(*model, "stiffness", cfg.model.stiffness);
  cfg.model.damping = toml_value<double>(*model, "damping", cfg.model.damping);
  cfg.model.gamma = toml_value<double>(*model, "gamma", cfg.model.gamma);
  if (model->get("full_n0")) cfg.model.full_n0 = static_cast<Index>(toml_value<int64_t>(*model, "full_n0", 0));

  const auto* grid = toml_table(root, "grid");
  if (!grid) throw ConfigError("missing [grid] table");
  cfg.dt = toml_value<double>(*grid, "dt", cfg.dt);
  cfg.T = toml_value<double>(*grid, "T", cfg.T);

  const auto* input = toml_table(root, "input");
  if (!input) throw ConfigError("missing [input] table");
  cfg.train_input = detail::parse_signal(*input);
  if (const auto* test = toml_table(root, "test_input")) cfg.test_input = detail::parse_signal(*test);
  if (const auto* tg = toml_table(root, "test_grid")) {
    if (tg->get("dt")) cfg.test_dt = toml_value<double>(*tg, "dt", 0.0);
    if (tg->get("T")) cfg.test_T = toml_value<double>(*tg, "T", 0.0);
  }

  if (const auto* solver = toml_table(root, "solver")) {
    cfg.rel_tol = toml_value<double>(*solver, "rel_tol", cfg.rel_tol);
    cfg.max_iter = static_cast<int>(toml_value<int64_t>(*solver, "max_iter", cfg.max_iter));
    cfg.psd_tol = toml_value<double>(*solver, "psd_tol", cfg.psd_tol);
    cfg.newton.tol = toml_value<double>(*solver, "newton_tol", cfg.newton.tol);
    cfg.newton.max_iter = static_cast<int>(toml_value<int64_t>(*solver, "newton_max_iter", cfg.newton.max_iter));
  }
  if (const auto* snaps = toml_table(root, "snapshots")) {
    const auto trim = toml_value<int64_t>(*snaps, "trim", 0);
    if (trim < 0) throw ConfigError("snapshots.trim must be nonnegative");
    cfg.trim = static_cast<std::size_t>(trim);
    cfg.deim_column_cap = static_cast<Index>(toml_value<int64_t>(*snaps, "deim_column_cap", cfg.deim_column_cap));
    cfg.snapshot_csv = toml_value<bool>(*snaps, "csv", cfg.snapshot_csv);
  }
  if (const auto* out = toml_table(root, "output")) {
    cfg.save_trajectories = toml_value<bool>(*out, "trajectories", cfg.save_trajectories);
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  try {
    return parse_config(toml::parse_file(path.string()));
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << path.string() << ": " << e.description() << " at " << e.source().begin;
    throw ConfigError(msg.str());
  }
}

/// Settings that influence numerical results; the output directory and the
/// sweep lists are deliberately absent so that cells can be shared between runs.
inline nlohmann::json numerical_fingerprint(const ExperimentConfig& cfg) {
  nlohmann::json j{{"model",
                    {{"name", cfg.model.name},
                     {"n0", cfg.effective_n0()},
                     {"mass", cfg.model.mass},
                     {"stiffness", cfg.model.stiffness},
                     {"damping", cfg.model.damping},
                     {"gamma", cfg.model.gamma}}},
                   {"dt", cfg.dt},
                   {"T", cfg.T},
                   {"input", detail::signal_json(cfg.train_input)},
                   {"seed", cfg.seed},
                   {"newton", {cfg.newton.tol, cfg.newton.max_iter}},
                   {"solver", {cfg.rel_tol, cfg.max_iter, cfg.psd_tol}},
                   {"trim", cfg.trim},
                   {"deim_column_cap", cfg.deim_column_cap}};
  return j;
}

namespace detail {

inline std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string stamp_of(const std::string& text) { return hex(fnv1a(text.data(), text.size())); }

inline std::string stamp_of(const Matrix& m) {
  std::uint64_t h = fnv1a(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
  const Index dims[2] = {m.rows(), m.cols()};
  return hex(fnv1a(dims, sizeof dims, h));
}

inline std::string format_lambda(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline std::optional<nlohmann::json> read_json(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return std::nullopt;
  std::ifstream in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

}  // namespace detail

inline PHModel build_model(const ExperimentConfig& cfg) {
  const Index n0 = cfg.effective_n0();
  if (cfg.model.name == "msd") return build_msd(n0, cfg.model.mass, cfg.model.stiffness, cfg.model.damping);
  return build_toda(n0, cfg.model.gamma);
}

/// Worker count: hardware threads, capped by PHROM_WORKERS when set.
inline unsigned worker_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("PHROM_WORKERS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return n;
}

struct TrainingData {
  std::shared_ptr<const PHModel> model;
  Input input;
  Trajectory fom;
  SnapshotSet snapshots;  // possibly trimmed
  ReducedBasis basis;     // max(r) columns
  std::string stamp;
};

/// Runs the training FOM and stores its snapshots, or reloads them when the
/// stored stamp matches. Leaves `basis` empty.
inline TrainingData ensure_fom(const ExperimentConfig& cfg, std::ostream& log) {
  TrainingData td;
  td.model = std::make_shared<const PHModel>(build_model(cfg));
  td.input = make_input(cfg.train_input);
  const TimeGrid grid = cfg.grid();
  const auto fom_dir = cfg.output_dir / "fom";
  const std::string fom_stamp = detail::stamp_of(numerical_fingerprint(cfg).dump());
  const auto stamp_file = detail::read_json(fom_dir / "stamp.json");
  bool loaded = false;
  if (stamp_file && stamp_file->value("stamp", std::string()) == fom_stamp) {
    try {
      SnapshotSet full = load_snapshots(fom_dir);
      td.fom.grid = full.grid;
      td.fom.states = full.X;
      td.fom.outputs = full.Y;
      td.fom.hamiltonian = matio::read_matrix(fom_dir / "H.mat").col(0);
      td.snapshots = full.trimmed(cfg.trim);
      loaded = td.fom.grid == grid;
    } catch (const Error&) {
      loaded = false;
    }
  }
  if (!loaded) {
    log << "[fom] simulating " << cfg.model.name << " n=" << td.model->n() << " steps=" << grid.steps << std::endl;
    td.fom = simulate_fom(*td.model, td.input, grid, cfg.newton);
    SnapshotSet full = assemble(*td.model, td.fom, td.input);
    save(full, fom_dir, cfg.snapshot_csv);
    matio::write_matrix(fom_dir / "H.mat", td.fom.hamiltonian);
    detail::write_json(fom_dir / "stamp.json", {{"stamp", fom_stamp}});
    td.snapshots = full.trimmed(cfg.trim);
  } else {
    log << "[fom] reusing " << fom_dir.string() << std::endl;
  }
  td.stamp = detail::stamp_of(fom_stamp + detail::stamp_of(td.snapshots.X));
  return td;
}

/// ensure_fom plus the POD basis with max(r) columns.
inline TrainingData prepare_training(const ExperimentConfig& cfg, std::ostream& log) {
  TrainingData td = ensure_fom(cfg, log);
  const Index r_max = *std::max_element(cfg.r_list.begin(), cfg.r_list.end());
  td.basis = compute_basis(td.snapshots.X, r_max);
  if (td.basis.rank_deficient) {
    log << "[pod] warning: r=" << r_max << " exceeds numerical rank " << td.basis.numerical_rank << std::endl;
  }
  save(td.basis, cfg.output_dir / "basis");
  return td;
}

/// One inference job: a method, a basis size and a regularization value. It
/// produces one ROM cell plus one cell per DEIM size.
struct SweepJob {
  std::string method;
  Index r = 0;
  std::optional<double> lambda_w;
  std::optional<double> lambda_r;

  std::string id() const {
    std::string s = method + "_r" + std::to_string(r);
    if (lambda_w) s += "_lw" + detail::format_lambda(*lambda_w);
    if (lambda_r) s += "_lr" + detail::format_lambda(*lambda_r);
    return s;
  }
};

inline std::vector<SweepJob> enumerate_jobs(const ExperimentConfig& cfg) {
  std::vector<SweepJob> jobs;
  for (const auto& method : cfg.methods) {
    for (Index r : cfg.r_list) {
      if (method == "opinf-w") {
        for (double l : cfg.lambda_w_list) jobs.push_back({method, r, l, std::nullopt});
      } else if (method == "opinf-r") {
        for (double l : cfg.lambda_r_list) jobs.push_back({method, r, std::nullopt, l});
      } else {
        jobs.push_back({method, r, std::nullopt, std::nullopt});
      }
    }
  }
  return jobs;
}

inline RomKind rom_kind_for(const std::string& method, bool deim) {
  if (method == "spg") return deim ? RomKind::spg_deim : RomKind::spg;
  if (method == "opinf-w" || method == "opinf-r") return deim ? RomKind::opinf_deim : RomKind::opinf;
  if (method == "g" && !deim) return RomKind::g;
  throw InvalidArgument("no ROM kind for method '" + method + "'" + (deim ? " with DEIM" : ""));
}

/// Learned operators for opinf-w/opinf-r, projected ones for spg, none for g.
inline std::optional<ReducedOperators> infer_operators(const ExperimentConfig& cfg, const TrainingData& td,
                                                       const SweepJob& job, const ReducedBasis& basis,
                                                       const ProjectedData& data) {
  OpInfConfig oc;
  oc.rel_tol = cfg.rel_tol;
  oc.max_iter = cfg.max_iter;
  oc.psd_tol = cfg.psd_tol;
  oc.seed = cfg.seed;
  if (job.method == "opinf-w") {
    oc.lambda_w = job.lambda_w.value_or(cfg.lambda_w_list.front());
    return infer_w(data, td.snapshots.U, td.snapshots.Y, oc);
  }
  if (job.method == "opinf-r") {
    oc.lambda_r = job.lambda_r.value_or(cfg.lambda_r_list.front());
    return infer_r(data, td.snapshots.U, td.snapshots.Y, oc);
  }
  if (job.method == "spg") return intrusive_operators(*td.model, basis);
  return std::nullopt;
}

struct CellResult {
  ErrorReport report;
  bool audit_checked = false;
  bool audit_passed = true;
  double relative_output_error = NAN;
  std::string error;
};

struct RunSummary {
  std::vector<CellResult> cells;
  std::filesystem::path csv_path;
  std::size_t skipped = 0;
  std::size_t failures() const {
    return static_cast<std::size_t>(
        std::count_if(cells.begin(), cells.end(), [](const CellResult& c) { return c.report.failed; }));
  }
  std::size_t audit_failures() const {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const CellResult& c) {
      return c.audit_checked && !c.audit_passed && c.report.kind != "g";
    }));
  }
};

namespace detail {

inline nlohmann::json cell_json(const CellResult& c, const std::string& stamp) {
  const auto& e = c.report;
  auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  nlohmann::json j{{"stamp", stamp},
                   {"kind", e.kind},
                   {"r", e.r},
                   {"failed", e.failed},
                   {"error", c.error},
                   {"E_x", num(e.E_x)},
                   {"E_y", num(e.E_y)},
                   {"E_proj_x", num(e.E_proj_x)},
                   {"E_proj_gradH", num(e.E_proj_gradH)},
                   {"E_opt_x", num(e.E_opt_x)},
                   {"E_opt_y", num(e.E_opt_y)},
                   {"min_eig_Rr", num(e.min_eig_Rr)},
                   {"audit_checked", c.audit_checked},
                   {"audit_passed", c.audit_passed},
                   {"relative_output_error", num(c.relative_output_error)}};
  j["m_deim"] = e.m_deim ? nlohmann::json(*e.m_deim) : nlohmann::json(nullptr);
  j["lambda_w"] = e.lambda_w ? nlohmann::json(*e.lambda_w) : nlohmann::json(nullptr);
  j["lambda_r"] = e.lambda_r ? nlohmann::json(*e.lambda_r) : nlohmann::json(nullptr);
  j["E_deim"] = e.E_deim ? nlohmann::json(*e.E_deim) : nlohmann::json(nullptr);
  return j;
}

inline CellResult cell_from_json(const nlohmann::json& j) {
  CellResult c;
  auto& e = c.report;
  auto num = [&](const char* key) { return j.at(key).is_null() ? NAN : j.at(key).get<double>(); };
  e.kind = j.at("kind").get<std::string>();
  e.r = j.at("r").get<Index>();
  e.failed = j.at("failed").get<bool>();
  c.error = j.value("error", std::string());
  e.E_x = num("E_x");
  e.E_y = num("E_y");
  e.E_proj_x = num("E_proj_x");
  e.E_proj_gradH = num("E_proj_gradH");
  e.E_opt_x = num("E_opt_x");
  e.E_opt_y = num("E_opt_y");
  e.min_eig_Rr = num("min_eig_Rr");
  if (!j.at("m_deim").is_null()) e.m_deim = j.at("m_deim").get<Index>();
  if (!j.at("lambda_w").is_null()) e.lambda_w = j.at("lambda_w").get<double>();
  if (!j.at("lambda_r").is_null()) e.lambda_r = j.at("lambda_r").get<double>();
  if (!j.at("E_deim").is_null()) e.E_deim = j.at("E_deim").get<double>();
  c.audit_checked = j.value("audit_checked", false);
  c.audit_passed = j.value("audit_passed", true);
  c.relative_output_error = j.at("relative_output_error").is_null() ? NAN : j.at("relative_output_error").get<double>();
  return c;
}

/// A stored cell is reusable when its stamp matches and its matrices parse.
inline std::optional<CellResult> reusable_cell(const std::filesystem::path& dir, const std::string& stamp) {
  const auto j = read_json(dir / "cell.json");
  if (!j || j->value("stamp", std::string()) != stamp) return std::nullopt;
  try {
    CellResult c = cell_from_json(*j);
    if (!c.report.failed) {
      for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".mat") (void)matio::read_matrix(entry.path());
      }
    }
    return c;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline void write_test_csv(const std::filesystem::path& path, const Trajectory& fom, const Trajectory& rom) {
  std::ofstream out(path, std::ios::trunc);
  out << "t,y_fom,y_rom,H_fom,H_rom\n";
  char buf[160];
  for (Index k = 0; k < fom.grid.points(); ++k) {
    std::snprintf(buf, sizeof buf, "%.6f,%.12e,%.12e,%.12e,%.12e\n", fom.grid.time(static_cast<std::size_t>(k)),
                  fom.outputs(0, k), rom.outputs(0, k), fom.hamiltonian(k), rom.hamiltonian(k));
    out << buf;
  }
}

}  // namespace detail

/// Evaluation target for ROM cells: the training trajectory (sweep) or a
/// separate test trajectory (generalization).
struct EvaluationRun {
  Input input;
  Trajectory fom;
  bool is_test = false;
};

class SweepRunner {
 public:
  SweepRunner(const ExperimentConfig& cfg, const TrainingData& td, const EvaluationRun& eval, std::ostream& log)
      : cfg_(cfg), td_(td), eval_(eval), log_(log) {}

  RunSummary run(const std::string& csv_name) {
    const auto jobs = enumerate_jobs(cfg_);
    std::vector<std::vector<CellResult>> results(jobs.size());
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> skipped{0};
    const unsigned workers = std::min<unsigned>(worker_count(), static_cast<unsigned>(std::max<std::size_t>(1, jobs.size())));
    auto work = [&] {
      for (std::size_t i = next++; i < jobs.size(); i = next++) {
        std::size_t skipped_here = 0;
        results[i] = run_job(jobs[i], skipped_here);
        skipped += skipped_here;
      }
    };
    if (workers <= 1) {
      work();
    } else {
      std::vector<std::thread> pool;
      for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
      for (auto& t : pool) t.join();
    }

    RunSummary summary;
    summary.skipped = skipped;
    for (auto& rows : results) {
      for (auto& c : rows) summary.cells.push_back(std::move(c));
    }
    summary.csv_path = cfg_.output_dir / csv_name;
    std::ofstream csv(summary.csv_path, std::ios::trunc);
    if (!csv) throw Error("cannot write " + summary.csv_path.string());
    csv << ErrorReport::kCsvHeader << '\n';
    for (const auto& c : summary.cells) csv << to_csv_row(c.report) << '\n';
    if (eval_.is_test) {
      std::ofstream rel(cfg_.output_dir / "relative_errors.csv", std::ios::trunc);
      rel << "kind,r,m_deim,lambda_w,lambda_r,relative_output_error\n";
      for (const auto& c : summary.cells) {
        const auto& e = c.report;
        rel << e.kind << ',' << e.r << ',' << (e.m_deim ? std::to_string(*e.m_deim) : "") << ','
            << detail::csv_number(e.lambda_w) << ',' << detail::csv_number(e.lambda_r) << ','
            << detail::csv_number(c.report.failed ? NAN : c.relative_output_error) << '\n';
      }
    }
    return summary;
  }

 private:
  std::string cell_stamp(const SweepJob& job, std::optional<Index> m) const {
    nlohmann::json j{{"training", td_.stamp}, {"job", job.id()}, {"m", m ? *m : 0}, {"test", eval_.is_test}};
    if (eval_.is_test) {
      j["test_input"] = detail::signal_json(*cfg_.test_input);
      j["test_grid"] = {eval_.fom.grid.dt, eval_.fom.grid.steps};
    }
    return detail::stamp_of(j.dump());
  }

  std::filesystem::path cell_dir(const SweepJob& job, std::optional<Index> m) const {
    std::string id = job.id();
    if (m) id += "_m" + std::to_string(*m);
    return cfg_.output_dir / (eval_.is_test ? "generalize" : "cells") / id;
  }

  ErrorReport base_report(const SweepJob& job, std::optional<Index> m) const {
    ErrorReport e;
    e.kind = job.method + (m ? "-deim" : "");
    e.r = job.r;
    e.m_deim = m;
    e.lambda_w = job.lambda_w;
    e.lambda_r = job.lambda_r;
    return e;
  }

  std::vector<CellResult> run_job(const SweepJob& job, std::size_t& skipped) {
    const bool nonlinear = !td_.model->is_linear();
    const bool deim_capable = nonlinear && job.method != "g";
    std::vector<std::optional<Index>> ms{std::nullopt};
    if (deim_capable) {
      for (Index m : cfg_.m_deim_list) ms.emplace_back(m);
    }

    std::vector<CellResult> out(ms.size());
    bool all_cached = true;
    for (std::size_t i = 0; i < ms.size(); ++i) {
      auto cached = detail::reusable_cell(cell_dir(job, ms[i]), cell_stamp(job, ms[i]));
      if (cached) {
        out[i] = std::move(*cached);
      } else {
        all_cached = false;
      }
    }
    if (all_cached) {
      skipped += ms.size();
      log_line("[" + job.id() + "] reused");
      return out;
    }

    std::optional<ReducedBasis> basis;
    std::optional<ReducedOperators> ops;
    std::optional<ProjectedData> data;
    std::string job_error;
    try {
      basis = truncate(td_.basis, job.r);
      data = project(*basis, td_.snapshots, td_.model->Q());
      ops = infer_operators(cfg_, td_, job, *basis, *data);
    } catch (const std::exception& e) {
      job_error = e.what();
    }

    std::optional<Matrix> deim_candidates;
    for (std::size_t i = 0; i < ms.size(); ++i) {
      const auto m = ms[i];
      const auto dir = cell_dir(job, m);
      CellResult cell;
      cell.report = base_report(job, m);
      try {
        if (!job_error.empty()) throw Error(job_error);
        std::filesystem::create_directories(dir);
        std::optional<DeimData> deim;
        if (m) {
          if (!deim_candidates) {
            const auto snaps = assemble_jacobian_snapshots(*td_.model, basis->Phi, td_.snapshots.X, cfg_.deim_column_cap);
            ThinSvd svd = thin_left_svd(snaps.MJ);
            deim_candidates = std::move(svd.U);
          }
          if (*m > td_.model->nonlinear().d) throw InvalidArgument("m_deim exceeds the number of nonlinear terms");
          if (*m > deim_candidates->cols()) throw SelectionFailure("nonlinear snapshot matrix has fewer than m singular vectors");
          Matrix Psi = deim_candidates->leftCols(*m);
          fix_column_signs(Psi);
          deim = select_interpolation_from_basis(std::move(Psi), td_.model->nonlinear().c);
          save(*deim, dir);
        }
        evaluate(job, *basis, *data, ops, deim, dir, cell);
      } catch (const std::exception& e) {
        cell.report.failed = true;
        cell.error = e.what();
        std::filesystem::create_directories(dir);
        std::ofstream(dir / "error.txt", std::ios::trunc) << e.what() << '\n';
      }
      detail::write_json(dir / "cell.json", detail::cell_json(cell, cell_stamp(job, m)));
      log_line("[" + job.id() + (m ? "_m" + std::to_string(*m) : std::string()) + "] " +
               (cell.report.failed ? "FAILED: " + cell.error : "done"));
      out[i] = std::move(cell);
    }
    return out;
  }

  void evaluate(const SweepJob& job, const ReducedBasis& basis, const ProjectedData& data,
                const std::optional<ReducedOperators>& ops, std::optional<DeimData> deim,
                const std::filesystem::path& dir, CellResult& cell) const {
    ErrorReport& e = cell.report;
    const auto pe = projection_errors(td_.snapshots.X, td_.snapshots.F, basis.Phi, td_.snapshots.grid);
    e.E_proj_x = pe.state;
    e.E_proj_gradH = pe.gradient;
    if (ops) {
      const auto oe = optimization_errors(data, td_.snapshots.U, td_.snapshots.Y, *ops, td_.snapshots.grid);
      e.E_opt_x = oe.state;
      e.E_opt_y = oe.output;
      e.min_eig_Rr = min_eigenvalue(ops->Rr);
      save(*ops, dir);
    }
    if (deim) e.E_deim = deim_error(*td_.model, basis.Phi, *deim, td_.snapshots.X, td_.snapshots.grid);
    save(basis, dir);

    const RomKind kind = rom_kind_for(job.method, deim.has_value());
    const AssembledROM rom = assemble_rom(kind, td_.model, basis, ops, std::move(deim), cfg_.psd_tol);
    const Trajectory traj = simulate_rom(rom, eval_.input, eval_.fom.grid, cfg_.newton);
    e.E_x = state_error(eval_.fom, traj, basis.Phi);
    e.E_y = output_error(eval_.fom, traj);
    cell.relative_output_error = relative_output_error(eval_.fom, traj);
    const auto audit = dissipation_audit(rom, traj, eval_.input);
    cell.audit_checked = true;
    cell.audit_passed = audit.passed;
    if (cfg_.save_trajectories) save(traj, dir, &rom);
    if (eval_.is_test) detail::write_test_csv(dir / "test_trajectory.csv", eval_.fom, traj);
  }

  void log_line(const std::string& s) {
    std::lock_guard<std::mutex> lock(log_mutex_);
    log_ << s << std::endl;
  }

  const ExperimentConfig& cfg_;
  const TrainingData& td_;
  const EvaluationRun& eval_;
  std::ostream& log_;
  std::mutex log_mutex_;
};

/// Full sweep on the training trajectory; writes <output_dir>/errors.csv.
inline RunSummary run_pipeline(const ExperimentConfig& cfg, std::ostream& log = std::cerr) {
  cfg.validate();
  std::filesystem::create_directories(cfg.output_dir);
  const TrainingData td = prepare_training(cfg, log);
  const EvaluationRun eval{td.input, td.fom, false};
  SweepRunner runner(cfg, td, eval, log);
  return runner.run("errors.csv");
}

/// Trains on the configured input and evaluates every cell under test_input;
/// writes generalization.csv, relative_errors.csv and per-cell test_trajectory.csv.
inline RunSummary generalization_test(const ExperimentConfig& cfg, std::ostream& log = std::cerr) {
  cfg.validate();
  if (!cfg.test_input) throw ConfigError("generalization needs a [test_input] table");
  std::filesystem::create_directories(cfg.output_dir);
  const TrainingData td = prepare_training(cfg, log);
  EvaluationRun eval;
  eval.input = make_input(*cfg.test_input);
  eval.is_test = true;
  const TimeGrid grid = cfg.test_grid();
  log << "[fom] test input '" << cfg.test_input->kind << "' steps=" << grid.steps << std::endl;
  eval.fom = simulate_fom(*td.model, eval.input, grid, cfg.newton);
  const auto fom_dir = cfg.output_dir / "fom_test";
  if (cfg.save_trajectories) save(eval.fom, fom_dir);
  SweepRunner runner(cfg, td, eval, log);
  return runner.run("generalization.csv");
}

}  // namespace phrom
