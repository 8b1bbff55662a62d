#pragma once

// Task orchestration behind the command-line tool: builds the problem from a
// RunConfig, runs one task and writes plot-ready CSV/JSON artifacts plus a
// manifest. Kept in the library so the same code path can be driven in-process.

#include "robinmc/bayes.hpp"
#include "robinmc/config.hpp"
#include "robinmc/estimator.hpp"
#include "robinmc/inverse.hpp"
#include "robinmc/oracle_fd.hpp"
#include "robinmc/problem.hpp"
#include "robinmc/reflecting_sde.hpp"

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace robinmc {

inline constexpr const char* kVersion = "0.3.0";

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> paths;
  std::optional<double> dt;
  std::optional<std::string> out_dir;
  std::optional<std::string> task;
};

inline void apply_overrides(RunConfig& c, const Overrides& o) {
  if (o.seed) c.solver.master_seed = *o.seed;
  if (o.paths) c.solver.n_paths = *o.paths;
  if (o.dt) c.solver.dt = *o.dt;
  if (o.task) c.task.name = *o.task;
  if (o.out_dir) {
    if (!c.output) c.output = OutputSection{};
    c.output->dir = *o.out_dir;
  }
}

// --- formatting ---------------------------------------------------------------

inline std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) v = 0.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// JSON value for a double; non-finite values become strings.
inline json jnum(double v) {
  if (std::isfinite(v)) return v == 0.0 ? 0.0 : v;
  return num(v);
}

inline json jvec(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(jnum(v[i]));
  return a;
}

class CsvWriter {
public:
  explicit CsvWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw Error("io", "cannot open " + path.string());
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

private:
  std::ofstream out_;
};

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot open " + path.string());
  out << j.dump(2) << '\n';
}

// --- field tables and comparison ----------------------------------------------

struct FieldRow {
  double s = 0.0;
  Vec x;
  double mean = 0.0;
  double std_error = 0.0;
  double term1 = NAN, term2 = NAN, term3 = NAN;
  std::int64_t n_paths = 0;
  double dt = 0.0;
  std::uint64_t seed = 0;
};

inline std::vector<std::string> field_header(int dim) {
  std::vector<std::string> h{"s"};
  for (int i = 0; i < dim; ++i) h.push_back("x" + std::to_string(i + 1));
  for (const char* c : {"mean", "std_error", "term1", "term2", "term3", "n_paths", "dt", "seed"}) h.emplace_back(c);
  return h;
}

inline void write_field_csv(const std::filesystem::path& path, const std::vector<FieldRow>& rows, int dim) {
  CsvWriter w(path);
  w.row(field_header(dim));
  for (const auto& r : rows) {
    std::vector<std::string> c{num(r.s)};
    for (Eigen::Index i = 0; i < r.x.size(); ++i) c.push_back(num(r.x[i]));
    for (double v : {r.mean, r.std_error, r.term1, r.term2, r.term3}) c.push_back(num(v));
    c.push_back(std::to_string(r.n_paths));
    c.push_back(num(r.dt));
    c.push_back(std::to_string(r.seed));
    w.row(c);
  }
}

struct CompareOptions {
  double fd_tolerance = 0.01;  // absolute slack added to 3 std errors
  double relative = 0.0;       // a point also passes if |gap| <= relative * max|u_FD|
};

struct CompareReport {
  std::vector<double> gaps;  // mc - fd
  std::vector<double> tolerances;
  std::vector<bool> within;
  double max_abs_gap = 0.0;
  double max_abs_fd = 0.0;
  double fraction_within = 1.0;
};

/// Per-point gap between an MC field and an FD field on the same grid.
inline CompareReport compare(const std::vector<FieldRow>& mc, const std::vector<FieldRow>& fd,
                             const CompareOptions& opt = {}) {
  if (mc.size() != fd.size()) throw ConfigError("field grids differ in size");
  CompareReport rep;
  for (std::size_t k = 0; k < fd.size(); ++k) {
    if (mc[k].s != fd[k].s || mc[k].x.size() != fd[k].x.size() || mc[k].x != fd[k].x)
      throw ConfigError("field grids differ at row " + std::to_string(k));
    if (std::isfinite(fd[k].mean)) rep.max_abs_fd = std::max(rep.max_abs_fd, std::abs(fd[k].mean));
  }
  std::size_t ok = 0, counted = 0;
  for (std::size_t k = 0; k < fd.size(); ++k) {
    const double g = mc[k].mean - fd[k].mean;
    const double tol = std::max(opt.relative * rep.max_abs_fd, 3.0 * mc[k].std_error + opt.fd_tolerance);
    rep.gaps.push_back(g);
    rep.tolerances.push_back(tol);
    const bool in = std::abs(g) <= tol;
    rep.within.push_back(in);
    if (std::isfinite(g)) {
      ++counted;
      ok += in ? 1 : 0;
      rep.max_abs_gap = std::max(rep.max_abs_gap, std::abs(g));
    }
  }
  rep.fraction_within = counted ? static_cast<double>(ok) / static_cast<double>(counted) : 1.0;
  return rep;
}

// --- observation files ---------------------------------------------------------

inline void write_observations_csv(const std::filesystem::path& path, const ObservationSpec& spec,
                                   const Eigen::MatrixXd& d) {
  CsvWriter w(path);
  w.row({"t", "arc", "value"});
  for (std::size_t a = 0; a < spec.times.size(); ++a)
    for (std::size_t b = 0; b < spec.locations.size(); ++b)
      w.row({num(spec.times[a]), num(spec.locations[b]),
             num(d(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)))});
}

/// Reads (t, arc, value) rows laid out on `spec` (time-major).
inline Eigen::MatrixXd read_observations_csv(const std::filesystem::path& path, const ObservationSpec& spec) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open observation file " + path.string());
  std::string line;
  std::getline(in, line);
  const auto nt = static_cast<Eigen::Index>(spec.times.size());
  const auto nb = static_cast<Eigen::Index>(spec.locations.size());
  Eigen::MatrixXd d(nt, nb);
  Eigen::Index k = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string t, arc, v;
    std::getline(ss, t, ',');
    std::getline(ss, arc, ',');
    std::getline(ss, v, ',');
    if (k >= nt * nb) throw ConfigError("observation file has too many rows");
    const Eigen::Index a = k / nb, b = k % nb;
    if (std::abs(std::stod(t) - spec.times[static_cast<std::size_t>(a)]) > 1e-9 ||
        std::abs(std::stod(arc) - spec.locations[static_cast<std::size_t>(b)]) > 1e-9)
      throw ConfigError("observation file does not match the observation grid at row " + std::to_string(k + 1));
    d(a, b) = std::stod(v);
    ++k;
  }
  if (k != nt * nb) throw ConfigError("observation file has too few rows");
  return d;
}

// --- run context ---------------------------------------------------------------

struct RunOutcome {
  int exit_code = 0;
  json error;  // null on success
  std::vector<std::string> artifacts;
  std::vector<std::string> warnings;
  json summary = json::object();
};

inline json error_json(const std::string& kind, const std::string& message, int code) {
  return json{{"error", {{"kind", kind}, {"message", message}}}, {"exit_code", code}};
}

struct Built {
  Problem problem;
  std::optional<TimeVaryingDomain> domain;
  ValidationReport validation;
};

/// Builds and validates; any failure here is a validation failure.
inline Built build_and_validate(const RunConfig& c) {
  Built b;
  b.problem = build_problem(c.problem);
  b.domain.emplace(build_domain(c.domain, c.problem.horizon));
  (void)build_sim_config(c.solver, c.problem.horizon);
  b.validation = validate_assumptions(b.problem, *b.domain);
  if (!b.validation.passed) {
    std::string msg = "assumption check failed";
    for (const auto& e : b.validation.errors) msg += "; " + e;
    throw ValidationError(msg);
  }
  static const std::set<std::string> tasks{"solve-mc", "solve-fd", "compare", "probe", "invert", "bayes"};
  if (!tasks.count(c.task.name)) throw ConfigError("unknown task '" + c.task.name + "'");
  const bool needs_grid = c.task.name == "solve-mc" || c.task.name == "solve-fd" || c.task.name == "compare";
  if (needs_grid && !c.task.grid) throw ConfigError("task '" + c.task.name + "' needs task.grid");
  if (c.task.name == "probe" && !c.task.probe) throw ConfigError("task 'probe' needs task.probe");
  if (c.task.name == "invert" && !c.task.invert) throw ConfigError("task 'invert' needs task.invert");
  if (c.task.name == "bayes" && !c.task.bayes) throw ConfigError("task 'bayes' needs task.bayes");
  return b;
}

inline std::vector<FieldPoint> grid_points(const GridSection& g, int dim) {
  std::vector<FieldPoint> pts;
  for (double s : g.s)
    for (const auto& x : g.x) {
      if (static_cast<int>(x.size()) != dim) throw ConfigError("grid points need dim coordinates");
      pts.push_back({s, to_vec(x)});
    }
  return pts;
}

inline FDGrid build_fd_grid(const SolverSection& s) {
  FDGrid g;
  if (s.fd) {
    g.n_space = s.fd->n_space.value_or(g.n_space);
    g.n_angle = s.fd->n_angle.value_or(g.n_angle);
    g.n_time = s.fd->n_time.value_or(g.n_time);
  }
  return g;
}

inline EstimatorOptions build_estimator_options(const SolverSection& s, int workers) {
  EstimatorOptions o;
  o.n_paths = s.n_paths.value_or(o.n_paths);
  o.workers = workers;
  return o;
}

namespace detail {

struct TaskContext {
  const RunConfig& cfg;
  const Built& built;
  std::filesystem::path dir;
  int workers = 1;
  RunOutcome& out;

  int dim() const { return built.problem.coeffs.dim(); }
  const TimeVaryingDomain& domain() const { return *built.domain; }
  std::filesystem::path file(const std::string& name) {
    out.artifacts.push_back(name);
    return dir / name;
  }
};

inline std::vector<FieldRow> mc_field(TaskContext& cx) {
  const auto& c = cx.cfg;
  const Problem& p = cx.built.problem;
  const NonDivForm nd = to_nondivergence(p.coeffs);
  const SimConfig sc = build_sim_config(c.solver, p.horizon);
  const ReflectingSimulator sim(p, nd, cx.domain(), sc);
  if (!sim.step_guard_ok()) cx.out.warnings.push_back("time step is large compared with the boundary collar");
  const EstimatorOptions eo = build_estimator_options(c.solver, cx.workers);
  const auto entries = solution_field(sim, p, grid_points(*c.task.grid, cx.dim()), eo);
  std::vector<FieldRow> rows;
  for (const auto& e : entries) {
    FieldRow r;
    r.s = e.point.s;
    r.x = e.point.x;
    r.dt = sc.dt;
    r.seed = sc.master_seed;
    if (e.skipped) {
      r.mean = r.std_error = NAN;
      cx.out.warnings.push_back(e.warning);
    } else {
      r.mean = e.estimate.mean;
      r.std_error = e.estimate.std_error;
      r.term1 = e.estimate.source_term;
      r.term2 = e.estimate.robin_term;
      r.term3 = e.estimate.terminal_term;
      r.n_paths = e.estimate.n_paths;
    }
    rows.push_back(r);
  }
  return rows;
}

inline std::vector<FieldRow> fd_field(TaskContext& cx, double* sup = nullptr) {
  const auto& c = cx.cfg;
  const Problem& p = cx.built.problem;
  const FDGrid g = build_fd_grid(c.solver);
  const FDSolution sol = solve_backward(p, cx.domain(), g);
  if (sup) *sup = sup_norm(sol);
  std::vector<FieldRow> rows;
  for (const auto& pt : grid_points(*c.task.grid, cx.dim())) {
    FieldRow r;
    r.s = pt.s;
    r.x = pt.x;
    r.mean = sol.value(pt.s, pt.x);
    r.std_error = 0.0;
    r.dt = p.horizon / g.n_time;
    rows.push_back(r);
  }
  return rows;
}

inline void task_solve_mc(TaskContext& cx) {
  const auto rows = mc_field(cx);
  write_field_csv(cx.file("field_mc.csv"), rows, cx.dim());
  cx.out.summary["points"] = rows.size();
}

inline void task_solve_fd(TaskContext& cx) {
  double sup = 0.0;
  const auto rows = fd_field(cx, &sup);
  write_field_csv(cx.file("field_fd.csv"), rows, cx.dim());
  cx.out.summary["points"] = rows.size();
  cx.out.summary["sup_abs_fd"] = jnum(sup);
}

inline void task_compare(TaskContext& cx) {
  const auto mc = mc_field(cx);
  double sup = 0.0;
  const auto fd = fd_field(cx, &sup);
  write_field_csv(cx.file("field_mc.csv"), mc, cx.dim());
  write_field_csv(cx.file("field_fd.csv"), fd, cx.dim());
  CompareOptions co;
  co.relative = 0.02;
  const CompareReport rep = compare(mc, fd, co);
  {
    CsvWriter w(cx.file("compare.csv"));
    std::vector<std::string> h{"s"};
    for (int i = 0; i < cx.dim(); ++i) h.push_back("x" + std::to_string(i + 1));
    for (const char* s : {"mc", "std_error", "fd", "gap", "tolerance", "within"}) h.emplace_back(s);
    w.row(h);
    for (std::size_t k = 0; k < mc.size(); ++k) {
      std::vector<std::string> r{num(mc[k].s)};
      for (Eigen::Index i = 0; i < mc[k].x.size(); ++i) r.push_back(num(mc[k].x[i]));
      for (double v : {mc[k].mean, mc[k].std_error, fd[k].mean, rep.gaps[k], rep.tolerances[k]}) r.push_back(num(v));
      r.push_back(rep.within[k] ? "1" : "0");
      w.row(r);
    }
  }
  json gaps = json::array();
  for (double g : rep.gaps) gaps.push_back(jnum(g));
  const json j{{"max_abs_gap", jnum(rep.max_abs_gap)},
               {"max_abs_fd_on_grid", jnum(rep.max_abs_fd)},
               {"sup_abs_fd", jnum(sup)},
               {"fraction_within", jnum(rep.fraction_within)},
               {"points", mc.size()},
               {"gaps", gaps}};
  write_json(cx.file("compare.json"), j);
  cx.out.summary = j;
}

inline void task_probe(TaskContext& cx) {
  const auto& c = cx.cfg;
  const auto& pr = *c.task.probe;
  const Problem& p = cx.built.problem;
  const NonDivForm nd = to_nondivergence(p.coeffs);
  const SimConfig sc = build_sim_config(c.solver, p.horizon);
  const ReflectingSimulator sim(p, nd, cx.domain(), sc);
  const EstimatorOptions eo = build_estimator_options(c.solver, cx.workers);
  if (static_cast<int>(pr.target.size()) != cx.dim()) throw ConfigError("probe target needs dim coordinates");
  std::vector<FieldPoint> approach;
  for (const auto& x : pr.approach) {
    if (static_cast<int>(x.size()) != cx.dim()) throw ConfigError("approach points need dim coordinates");
    approach.push_back({pr.s, to_vec(x)});
  }
  const double collar = pr.pi_collar.value_or(cx.domain().base().tubular_width());
  const ProbeResult res = boundary_continuity_probe(sim, p, {pr.s, to_vec(pr.target)}, approach, eo, collar);
  CsvWriter w(cx.file("probe.csv"));
  std::vector<std::string> h{"s"};
  for (int i = 0; i < cx.dim(); ++i) h.push_back("x" + std::to_string(i + 1));
  for (const char* s : {"distance", "mean", "std_error", "n_paths", "dt", "seed"}) h.emplace_back(s);
  w.row(h);
  auto emit = [&](const FieldPoint& pt, double dist, const Estimate& e) {
    std::vector<std::string> r{num(pt.s)};
    for (Eigen::Index i = 0; i < pt.x.size(); ++i) r.push_back(num(pt.x[i]));
    for (double v : {dist, e.mean, e.std_error}) r.push_back(num(v));
    r.push_back(std::to_string(e.n_paths));
    r.push_back(num(sc.dt));
    r.push_back(std::to_string(sc.master_seed));
    w.row(r);
  };
  emit(res.target, 0.0, res.target_estimate);
  for (const auto& row : res.rows) emit(row.point, row.distance, row.estimate);
  cx.out.summary["target_on_dirichlet"] = res.target_on_dirichlet;
  cx.out.summary["final_abs_value"] = res.rows.empty() ? jnum(NAN) : jnum(std::abs(res.rows.back().estimate.mean));
}

template <typename Section>
DomainParam build_param(const Section& s, const TimeVaryingDomain& dom, double horizon) {
  DomainParam prm;
  prm.base = dom.base();
  prm.horizon = horizon;
  prm.margin = dom.margin() > 0.0 ? dom.margin() : prm.margin;
  prm.names = s.params;
  const std::size_t n = s.params.size();
  if (n == 0 || s.lo.size() != n || s.hi.size() != n || s.theta_star.size() != n)
    throw ConfigError("params, lo, hi and theta_star must have the same nonzero length");
  prm.lo = Eigen::Map<const Eigen::VectorXd>(s.lo.data(), static_cast<Eigen::Index>(n));
  prm.hi = Eigen::Map<const Eigen::VectorXd>(s.hi.data(), static_cast<Eigen::Index>(n));
  if (s.center) prm.center0 = to_vec(*s.center);
  if (s.radius) prm.radius0 = *s.radius;
  if (prm.base.dim() != 2) throw ConfigError("shape inversion is implemented on the disk");
  Vec c;
  double r;
  prm.split(Eigen::Map<const Eigen::VectorXd>(s.theta_star.data(), static_cast<Eigen::Index>(n)), c, r);
  return prm;
}

inline void task_invert(TaskContext& cx) {
  const auto& c = cx.cfg;
  const auto& iv = *c.task.invert;
  const Problem& p = cx.built.problem;
  const DomainParam prm = build_param(iv, cx.domain(), p.horizon);
  const Eigen::VectorXd star =
      Eigen::Map<const Eigen::VectorXd>(iv.theta_star.data(), static_cast<Eigen::Index>(iv.theta_star.size()));
  const ObservationQuadrature q = default_observation(prm.base, p.horizon, iv.obs_points.value_or(16),
                                                      iv.obs_times.value_or(32));
  const FDGrid g = build_fd_grid(c.solver);
  ObservationData data;
  if (iv.data_file) {
    data.d = read_observations_csv(*iv.data_file, q.spec);
    data.provenance = *iv.data_file;
  } else {
    const int ff = iv.fine_factor.value_or(2);
    FDGrid fine = g;
    fine.n_space *= ff;
    fine.n_angle *= ff;
    fine.n_time *= ff;
    data = synthetic_data(p, prm.to_domain(star), q, fine);
  }
  write_observations_csv(cx.file("observations.csv"), q.spec, data.d);

  CostOptions co;
  co.grid = g;
  const std::string backend = iv.backend.value_or("fd");
  if (backend == "mc") {
    co.backend = CostBackend::MC;
    co.sim = build_sim_config(c.solver, p.horizon);
    co.est = build_estimator_options(c.solver, cx.workers);
  } else if (backend != "fd") {
    throw ConfigError("invert.backend must be 'fd' or 'mc'");
  }
  const MinimizeResult res = minimize_cost(
      prm, [&](const Eigen::VectorXd& th) { return cost_functional(p, prm, th, data, q, co).value; },
      iv.budget.value_or(600), iv.grid_points.value_or(5), iv.refinements.value_or(4));
  {
    std::ofstream log(cx.file("evaluations.jsonl"), std::ios::binary);
    for (const auto& e : res.log) log << json{{"stage", e.stage}, {"theta", jvec(e.theta)}, {"value", jnum(e.value)}}.dump() << '\n';
  }
  json r{{"params", prm.names},
         {"theta_hat", jvec(res.theta)},
         {"theta_star", jvec(star)},
         {"cost", jnum(res.value)},
         {"resolution", jnum(res.resolution)},
         {"evaluations", res.log.size()},
         {"abs_error", jvec((res.theta - star).cwiseAbs())},
         {"data_provenance", data.provenance}};
  write_json(cx.file("inversion.json"), r);
  cx.out.summary = r;
}

inline void task_bayes(TaskContext& cx) {
  const auto& c = cx.cfg;
  const auto& bs = *c.task.bayes;
  const Problem& p = cx.built.problem;
  const DomainParam prm = build_param(bs, cx.domain(), p.horizon);
  const Eigen::VectorXd star =
      Eigen::Map<const Eigen::VectorXd>(bs.theta_star.data(), static_cast<Eigen::Index>(bs.theta_star.size()));
  const FDGrid g = build_fd_grid(c.solver);
  const ForwardOp F = fd_forward(p, prm, g, default_design(prm.base, p.horizon, bs.design_times.value_or(8),
                                                           bs.design_points.value_or(8)));
  const std::uint64_t seed = c.solver.master_seed.value_or(SimConfig{}.master_seed);
  const PriorSample prior = sample_prior(prm, F, bs.n_samples.value_or(1000), seed, cx.workers);
  const double sigma = bs.sigma.value_or(0.01);
  const NoiseModel noise{sigma * sigma};
  const double CF = estimate_forward_bound(prior);

  const Eigen::VectorXd clean = F(star);
  RandomStream rng(seed, 0xDA7Au, 0);
  Eigen::VectorXd y = clean;
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += sigma * rng.normal();
  const PosteriorEnsemble post = posterior(prior, y, noise);
  for (const auto& w : post.warnings) cx.out.warnings.push_back(w);
  {
    CsvWriter w(cx.file("posterior.csv"));
    std::vector<std::string> h(prm.names.begin(), prm.names.end());
    h.emplace_back("log_weight");
    h.emplace_back("weight");
    w.row(h);
    for (std::size_t k = 0; k < prior.theta.size(); ++k) {
      std::vector<std::string> r;
      for (Eigen::Index i = 0; i < prior.theta[k].size(); ++i) r.push_back(num(prior.theta[k][i]));
      r.push_back(num(std::log(post.weights[k])));
      r.push_back(num(post.weights[k]));
      w.row(r);
    }
  }
  const int pairs = bs.pairs.value_or(50);
  const double pert = bs.perturbation.value_or(sigma);
  json rows = json::array();
  int passed = 0;
  for (int k = 0; k < pairs; ++k) {
    RandomStream pr(seed, 0xDA7Bu, static_cast<std::uint64_t>(k));
    const double scale = pert * std::pow(2.0, 4.0 * pr.uniform() - 2.0);
    Eigen::VectorXd y2 = y;
    for (Eigen::Index i = 0; i < y2.size(); ++i) y2[i] += scale * pr.normal();
    const StabilityCheck chk = stability_bound_check(post, posterior(prior, y2, noise), CF);
    passed += chk.pass ? 1 : 0;
    rows.push_back({{"pair", k},
                    {"data_distance", jnum((y2 - y).norm())},
                    {"hellinger", jnum(chk.d_hell)},
                    {"std_error", jnum(chk.d_se)},
                    {"sigma_yy", jnum(chk.sigma_yy)},
                    {"log_bound", jnum(chk.log_bound)},
                    {"bound", jnum(chk.bound)},
                    {"pass", chk.pass}});
  }
  json rep{{"noise_sigma", jnum(sigma)},
           {"forward_bound", jnum(CF)},
           {"n_samples", prior.theta.size()},
           {"ess", jnum(post.ess)},
           {"posterior_mean", jvec(post.mean)},
           {"theta_star", jvec(star)},
           {"pairs_passed", passed},
           {"pairs", rows}};
  write_json(cx.file("stability.json"), rep);
  cx.out.summary = json{{"ess", jnum(post.ess)}, {"pairs_passed", passed}, {"pairs", pairs}};
}

inline std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace detail

/// Runs the configured task. Exit 2 (nothing written) when the configuration
/// or the assumption check fails; exit 1 on a runtime failure afterwards, in
/// which case the manifest is still written.
inline RunOutcome run(RunConfig cfg, const Overrides& ov, int workers) {
  RunOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  std::optional<Built> built;
  try {
    apply_overrides(cfg, ov);
    built.emplace(build_and_validate(cfg));
  } catch (const Error& e) {
    out.exit_code = 2;
    out.error = error_json(e.kind(), e.what(), 2);
    return out;
  }
  for (const auto& w : built->validation.warnings) out.warnings.push_back(w);
  const std::filesystem::path dir = cfg.output && cfg.output->dir ? *cfg.output->dir : "out";
  try {
    std::filesystem::create_directories(dir);
  } catch (const std::exception& e) {
    out.exit_code = 1;
    out.error = error_json("io", e.what(), 1);
    return out;
  }
  detail::TaskContext cx{cfg, *built, dir, workers, out};
  try {
    const std::string& t = cfg.task.name;
    if (t == "solve-mc") detail::task_solve_mc(cx);
    else if (t == "solve-fd") detail::task_solve_fd(cx);
    else if (t == "compare") detail::task_compare(cx);
    else if (t == "probe") detail::task_probe(cx);
    else if (t == "invert") detail::task_invert(cx);
    else if (t == "bayes") detail::task_bayes(cx);
  } catch (const Error& e) {
    out.exit_code = 1;
    out.error = error_json(e.kind(), e.what(), 1);
  } catch (const std::exception& e) {
    out.exit_code = 1;
    out.error = error_json("runtime", e.what(), 1);
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json manifest{{"task", cfg.task.name},
                {"status", out.exit_code == 0 ? "ok" : "failed"},
                {"config_hash", detail::hex64(config_hash(cfg))},
                {"seed", cfg.solver.master_seed.value_or(SimConfig{}.master_seed)},
                {"versions", {{"robinmc", kVersion}, {"compiler", __VERSION__}, {"cxx", __cplusplus}}},
                {"workers", workers},
                {"wall_time_s", wall},
                {"artifacts", out.artifacts},
                {"warnings", out.warnings},
                {"summary", out.summary},
                {"config", json(cfg)}};
  if (out.exit_code != 0) manifest["error"] = out.error;
  try {
    write_json(dir / "manifest.json", manifest);
  } catch (const std::exception&) {
  }
  return out;
}

}  // namespace robinmc
