#pragma once

// Run configuration: a typed mirror of the JSON document (YAML is converted
// to the same JSON tree by the command-line tool). Unknown keys are rejected
// and serialisation reproduces exactly the keys that were given.

#include "robinmc/core.hpp"
#include "robinmc/geometry.hpp"
#include "robinmc/problem.hpp"
#include "robinmc/reflecting_sde.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace robinmc {

using json = nlohmann::json;

namespace cfg {

template <typename T>
void get(const json& j, const char* key, T& out) {
  if (!j.contains(key)) throw ConfigError(std::string("missing required key '") + key + "'");
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

template <typename T>
void get(const json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key)) return;
  T v;
  get(j, key, v);
  out = std::move(v);
}

template <typename T>
void put(json& j, const char* key, const T& v) {
  j[key] = v;
}

template <typename T>
void put(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

inline void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("section '" + where + "' must be a mapping");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw ConfigError("unknown key '" + k + "' in section '" + where + "'");
}

}  // namespace cfg

/// Coefficient or data expression; a bare number is kept as a number.
struct ExprText {
  std::string text;
  bool numeric = false;
};

inline void from_json(const json& j, ExprText& e) {
  if (j.is_number()) {
    e.numeric = true;
    e.text = j.dump();
  } else if (j.is_string()) {
    e.text = j.get<std::string>();
  } else {
    throw ConfigError("expressions must be strings or numbers");
  }
}
inline void to_json(json& j, const ExprText& e) { j = e.numeric ? json::parse(e.text) : json(e.text); }

struct ProblemSection {
  int dim = 1;
  double horizon = 1.0;
  std::vector<ExprText> A;  // one entry (isotropic) or dim*dim row-major
  std::optional<std::vector<ExprText>> a_vec, b_vec;
  std::optional<ExprText> a_scal, sigma_rob;
  std::optional<double> nu;
  std::optional<ExprText> f, psi, h;
  std::optional<std::string> regularity;  // smooth | lp
  std::optional<std::vector<double>> lp_exponents;
};

struct DomainSection {
  std::string shape;  // interval | disk | ball
  std::optional<std::vector<double>> interval;
  std::optional<std::string> left, right;  // robin | dirichlet
  std::optional<std::vector<double>> center;
  std::optional<double> radius;
  std::optional<std::vector<std::vector<double>>> robin_arcs;  // [start, length]
  std::optional<std::vector<double>> cap_axis;
  std::optional<double> cap_half_angle;
  std::optional<std::vector<std::vector<double>>> cavity;  // [t, c..., r]
  std::optional<double> margin;
  std::optional<double> tubular_width;
  std::optional<double> tol_pi;
};

struct FDSection {
  std::optional<int> n_space, n_angle, n_time;
};

struct SolverSection {
  std::optional<double> dt;
  std::optional<std::int64_t> n_paths;
  std::optional<std::uint64_t> master_seed;
  std::optional<std::string> scheme;  // projection | halfspace
  std::optional<FDSection> fd;
};

struct GridSection {
  std::vector<double> s;
  std::vector<std::vector<double>> x;
};

struct ProbeSection {
  double s = 0.0;
  std::vector<double> target;
  std::vector<std::vector<double>> approach;
  std::optional<double> pi_collar;
};

struct InvertSection {
  std::vector<std::string> params;
  std::vector<double> lo, hi;
  std::vector<double> theta_star;
  std::optional<std::vector<double>> center;  // defaults for parameters not inverted
  std::optional<double> radius;
  std::optional<int> budget, grid_points, refinements;
  std::optional<int> obs_points, obs_times;
  std::optional<std::string> backend;  // fd | mc
  std::optional<int> fine_factor;
  std::optional<std::string> data_file;
};

struct BayesSection {
  std::vector<std::string> params;
  std::vector<double> lo, hi;
  std::vector<double> theta_star;
  std::optional<std::vector<double>> center;
  std::optional<double> radius;
  std::optional<int> n_samples, pairs, design_times, design_points;
  std::optional<double> sigma, perturbation;
};

struct TaskSection {
  std::string name;  // solve-mc | solve-fd | compare | probe | invert | bayes
  std::optional<GridSection> grid;
  std::optional<ProbeSection> probe;
  std::optional<InvertSection> invert;
  std::optional<BayesSection> bayes;
};

struct OutputSection {
  std::optional<std::string> dir;
};

struct RunConfig {
  ProblemSection problem;
  DomainSection domain;
  SolverSection solver;
  TaskSection task;
  std::optional<OutputSection> output;
};

// --- JSON mapping -----------------------------------------------------------

inline void from_json(const json& j, ProblemSection& p) {
  cfg::only_keys(j, "problem", {"dim", "horizon", "A", "a_vec", "b_vec", "a_scal", "sigma_rob", "nu", "f", "psi", "h",
                                "regularity", "lp_exponents"});
  cfg::get(j, "dim", p.dim);
  cfg::get(j, "horizon", p.horizon);
  cfg::get(j, "A", p.A);
  cfg::get(j, "a_vec", p.a_vec);
  cfg::get(j, "b_vec", p.b_vec);
  cfg::get(j, "a_scal", p.a_scal);
  cfg::get(j, "sigma_rob", p.sigma_rob);
  cfg::get(j, "nu", p.nu);
  cfg::get(j, "f", p.f);
  cfg::get(j, "psi", p.psi);
  cfg::get(j, "h", p.h);
  cfg::get(j, "regularity", p.regularity);
  cfg::get(j, "lp_exponents", p.lp_exponents);
}
inline void to_json(json& j, const ProblemSection& p) {
  j = json::object();
  cfg::put(j, "dim", p.dim);
  cfg::put(j, "horizon", p.horizon);
  cfg::put(j, "A", p.A);
  cfg::put(j, "a_vec", p.a_vec);
  cfg::put(j, "b_vec", p.b_vec);
  cfg::put(j, "a_scal", p.a_scal);
  cfg::put(j, "sigma_rob", p.sigma_rob);
  cfg::put(j, "nu", p.nu);
  cfg::put(j, "f", p.f);
  cfg::put(j, "psi", p.psi);
  cfg::put(j, "h", p.h);
  cfg::put(j, "regularity", p.regularity);
  cfg::put(j, "lp_exponents", p.lp_exponents);
}

inline void from_json(const json& j, DomainSection& d) {
  cfg::only_keys(j, "domain", {"shape", "interval", "left", "right", "center", "radius", "robin_arcs", "cap_axis",
                               "cap_half_angle", "cavity", "margin", "tubular_width", "tol_pi"});
  cfg::get(j, "shape", d.shape);
  cfg::get(j, "interval", d.interval);
  cfg::get(j, "left", d.left);
  cfg::get(j, "right", d.right);
  cfg::get(j, "center", d.center);
  cfg::get(j, "radius", d.radius);
  cfg::get(j, "robin_arcs", d.robin_arcs);
  cfg::get(j, "cap_axis", d.cap_axis);
  cfg::get(j, "cap_half_angle", d.cap_half_angle);
  cfg::get(j, "cavity", d.cavity);
  cfg::get(j, "margin", d.margin);
  cfg::get(j, "tubular_width", d.tubular_width);
  cfg::get(j, "tol_pi", d.tol_pi);
}
inline void to_json(json& j, const DomainSection& d) {
  j = json::object();
  cfg::put(j, "shape", d.shape);
  cfg::put(j, "interval", d.interval);
  cfg::put(j, "left", d.left);
  cfg::put(j, "right", d.right);
  cfg::put(j, "center", d.center);
  cfg::put(j, "radius", d.radius);
  cfg::put(j, "robin_arcs", d.robin_arcs);
  cfg::put(j, "cap_axis", d.cap_axis);
  cfg::put(j, "cap_half_angle", d.cap_half_angle);
  cfg::put(j, "cavity", d.cavity);
  cfg::put(j, "margin", d.margin);
  cfg::put(j, "tubular_width", d.tubular_width);
  cfg::put(j, "tol_pi", d.tol_pi);
}

inline void from_json(const json& j, FDSection& f) {
  cfg::only_keys(j, "solver.fd", {"n_space", "n_angle", "n_time"});
  cfg::get(j, "n_space", f.n_space);
  cfg::get(j, "n_angle", f.n_angle);
  cfg::get(j, "n_time", f.n_time);
}
inline void to_json(json& j, const FDSection& f) {
  j = json::object();
  cfg::put(j, "n_space", f.n_space);
  cfg::put(j, "n_angle", f.n_angle);
  cfg::put(j, "n_time", f.n_time);
}

inline void from_json(const json& j, SolverSection& s) {
  cfg::only_keys(j, "solver", {"dt", "n_paths", "master_seed", "scheme", "fd"});
  cfg::get(j, "dt", s.dt);
  cfg::get(j, "n_paths", s.n_paths);
  cfg::get(j, "master_seed", s.master_seed);
  cfg::get(j, "scheme", s.scheme);
  cfg::get(j, "fd", s.fd);
}
inline void to_json(json& j, const SolverSection& s) {
  j = json::object();
  cfg::put(j, "dt", s.dt);
  cfg::put(j, "n_paths", s.n_paths);
  cfg::put(j, "master_seed", s.master_seed);
  cfg::put(j, "scheme", s.scheme);
  cfg::put(j, "fd", s.fd);
}

inline void from_json(const json& j, GridSection& g) {
  cfg::only_keys(j, "task.grid", {"s", "x"});
  cfg::get(j, "s", g.s);
  cfg::get(j, "x", g.x);
}
inline void to_json(json& j, const GridSection& g) { j = json{{"s", g.s}, {"x", g.x}}; }

inline void from_json(const json& j, ProbeSection& p) {
  cfg::only_keys(j, "task.probe", {"s", "target", "approach", "pi_collar"});
  cfg::get(j, "s", p.s);
  cfg::get(j, "target", p.target);
  cfg::get(j, "approach", p.approach);
  cfg::get(j, "pi_collar", p.pi_collar);
}
inline void to_json(json& j, const ProbeSection& p) {
  j = json{{"s", p.s}, {"target", p.target}, {"approach", p.approach}};
  cfg::put(j, "pi_collar", p.pi_collar);
}

inline void from_json(const json& j, InvertSection& v) {
  cfg::only_keys(j, "task.invert", {"params", "lo", "hi", "theta_star", "center", "radius", "budget", "grid_points",
                                    "refinements", "obs_points", "obs_times", "backend", "fine_factor", "data_file"});
  cfg::get(j, "params", v.params);
  cfg::get(j, "lo", v.lo);
  cfg::get(j, "hi", v.hi);
  cfg::get(j, "theta_star", v.theta_star);
  cfg::get(j, "center", v.center);
  cfg::get(j, "radius", v.radius);
  cfg::get(j, "budget", v.budget);
  cfg::get(j, "grid_points", v.grid_points);
  cfg::get(j, "refinements", v.refinements);
  cfg::get(j, "obs_points", v.obs_points);
  cfg::get(j, "obs_times", v.obs_times);
  cfg::get(j, "backend", v.backend);
  cfg::get(j, "fine_factor", v.fine_factor);
  cfg::get(j, "data_file", v.data_file);
}
inline void to_json(json& j, const InvertSection& v) {
  j = json{{"params", v.params}, {"lo", v.lo}, {"hi", v.hi}, {"theta_star", v.theta_star}};
  cfg::put(j, "center", v.center);
  cfg::put(j, "radius", v.radius);
  cfg::put(j, "budget", v.budget);
  cfg::put(j, "grid_points", v.grid_points);
  cfg::put(j, "refinements", v.refinements);
  cfg::put(j, "obs_points", v.obs_points);
  cfg::put(j, "obs_times", v.obs_times);
  cfg::put(j, "backend", v.backend);
  cfg::put(j, "fine_factor", v.fine_factor);
  cfg::put(j, "data_file", v.data_file);
}

inline void from_json(const json& j, BayesSection& b) {
  cfg::only_keys(j, "task.bayes", {"params", "lo", "hi", "theta_star", "center", "radius", "n_samples", "pairs",
                                   "design_times", "design_points", "sigma", "perturbation"});
  cfg::get(j, "params", b.params);
  cfg::get(j, "lo", b.lo);
  cfg::get(j, "hi", b.hi);
  cfg::get(j, "theta_star", b.theta_star);
  cfg::get(j, "center", b.center);
  cfg::get(j, "radius", b.radius);
  cfg::get(j, "n_samples", b.n_samples);
  cfg::get(j, "pairs", b.pairs);
  cfg::get(j, "design_times", b.design_times);
  cfg::get(j, "design_points", b.design_points);
  cfg::get(j, "sigma", b.sigma);
  cfg::get(j, "perturbation", b.perturbation);
}
inline void to_json(json& j, const BayesSection& b) {
  j = json{{"params", b.params}, {"lo", b.lo}, {"hi", b.hi}, {"theta_star", b.theta_star}};
  cfg::put(j, "center", b.center);
  cfg::put(j, "radius", b.radius);
  cfg::put(j, "n_samples", b.n_samples);
  cfg::put(j, "pairs", b.pairs);
  cfg::put(j, "design_times", b.design_times);
  cfg::put(j, "design_points", b.design_points);
  cfg::put(j, "sigma", b.sigma);
  cfg::put(j, "perturbation", b.perturbation);
}

inline void from_json(const json& j, TaskSection& t) {
  cfg::only_keys(j, "task", {"name", "grid", "probe", "invert", "bayes"});
  cfg::get(j, "name", t.name);
  cfg::get(j, "grid", t.grid);
  cfg::get(j, "probe", t.probe);
  cfg::get(j, "invert", t.invert);
  cfg::get(j, "bayes", t.bayes);
}
inline void to_json(json& j, const TaskSection& t) {
  j = json{{"name", t.name}};
  cfg::put(j, "grid", t.grid);
  cfg::put(j, "probe", t.probe);
  cfg::put(j, "invert", t.invert);
  cfg::put(j, "bayes", t.bayes);
}

inline void from_json(const json& j, OutputSection& o) {
  cfg::only_keys(j, "output", {"dir"});
  cfg::get(j, "dir", o.dir);
}
inline void to_json(json& j, const OutputSection& o) {
  j = json::object();
  cfg::put(j, "dir", o.dir);
}

inline void from_json(const json& j, RunConfig& c) {
  cfg::only_keys(j, "<root>", {"problem", "domain", "solver", "task", "output"});
  cfg::get(j, "problem", c.problem);
  cfg::get(j, "domain", c.domain);
  if (j.contains("solver")) cfg::get(j, "solver", c.solver);
  cfg::get(j, "task", c.task);
  cfg::get(j, "output", c.output);
}
inline void to_json(json& j, const RunConfig& c) {
  j = json{{"problem", c.problem}, {"domain", c.domain}, {"task", c.task}};
  const json solver = c.solver;
  if (!solver.empty()) j["solver"] = solver;
  cfg::put(j, "output", c.output);
}

inline RunConfig parse_config(const json& j) {
  try {
    return j.get<RunConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  }
}

inline RunConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  return parse_config(j);
}

/// FNV-1a over the canonical JSON dump.
inline std::uint64_t config_hash(const RunConfig& c) {
  const std::string s = json(c).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

// --- builders ---------------------------------------------------------------

inline Problem build_problem(const ProblemSection& s) {
  const int n = s.dim;
  if (n < 1 || n > kMaxDim) throw ConfigError("problem.dim must be 1, 2 or 3");
  auto ex = [n](const ExprText& src) { return Expr::parse(src.text, n); };
  auto zero = ExprText{"0", true};
  auto vec = [&](const std::optional<std::vector<ExprText>>& v, const char* name) {
    if (!v) return VectorField::zero(n);
    if (static_cast<int>(v->size()) != n) throw ConfigError(std::string(name) + " needs dim components");
    VectorField f;
    for (const auto& c : *v) f.comps.push_back(ex(c));
    return f;
  };
  Problem p;
  p.horizon = s.horizon;
  if (!(p.horizon > 0.0)) throw ConfigError("problem.horizon must be positive");
  auto& k = p.coeffs;
  if (s.A.size() == 1) {
    k.A = MatrixField::diagonal(std::vector<Expr>(static_cast<std::size_t>(n), ex(s.A[0])));
  } else if (static_cast<int>(s.A.size()) == n * n) {
    k.A.n = n;
    for (const auto& e : s.A) k.A.entries.push_back(ex(e));
  } else {
    throw ConfigError("problem.A needs 1 or dim*dim entries");
  }
  k.a_vec = vec(s.a_vec, "a_vec");
  k.b_vec = vec(s.b_vec, "b_vec");
  k.a_scal = ex(s.a_scal.value_or(zero));
  k.sigma_rob = ex(s.sigma_rob.value_or(zero));
  k.nu = s.nu.value_or(0.0);
  p.data.f = ex(s.f.value_or(zero));
  p.data.psi = ex(s.psi.value_or(zero));
  p.data.h = ex(s.h.value_or(zero));
  const std::string reg = s.regularity.value_or("smooth");
  if (reg == "lp") {
    p.data.regularity = Regularity::Lp;
    if (s.lp_exponents) {
      if (s.lp_exponents->size() != 3) throw ConfigError("lp_exponents needs three values");
      p.data.p1 = (*s.lp_exponents)[0];
      p.data.p2 = (*s.lp_exponents)[1];
      p.data.p3 = (*s.lp_exponents)[2];
    }
  } else if (reg != "smooth") {
    throw ConfigError("problem.regularity must be 'smooth' or 'lp'");
  }
  return p;
}

inline Vec to_vec(const std::vector<double>& v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

inline FixedDomain build_base(const DomainSection& d) {
  auto side = [](const std::optional<std::string>& s, const char* which) {
    if (!s) throw ConfigError(std::string("domain.") + which + " is required for an interval");
    if (*s == "robin") return true;
    if (*s == "dirichlet") return false;
    throw ConfigError(std::string("domain.") + which + " must be 'robin' or 'dirichlet'");
  };
  FixedDomain base = [&] {
    if (d.shape == "interval") {
      if (!d.interval || d.interval->size() != 2) throw ConfigError("domain.interval needs [a, b]");
      return FixedDomain::interval((*d.interval)[0], (*d.interval)[1], side(d.left, "left"), side(d.right, "right"));
    }
    if (!d.center || !d.radius) throw ConfigError("domain.center and domain.radius are required");
    if (d.shape == "disk") {
      std::vector<Arc> arcs;
      if (d.robin_arcs)
        for (const auto& a : *d.robin_arcs) {
          if (a.size() != 2) throw ConfigError("robin_arcs entries are [start, length]");
          arcs.push_back(Arc{a[0], a[1]});
        }
      return FixedDomain::disk(to_vec(*d.center), *d.radius, arcs);
    }
    if (d.shape == "ball") {
      if (!d.cap_axis || !d.cap_half_angle) throw ConfigError("ball needs cap_axis and cap_half_angle");
      return FixedDomain::ball(to_vec(*d.center), *d.radius, to_vec(*d.cap_axis), *d.cap_half_angle);
    }
    throw ConfigError("domain.shape must be interval, disk or ball");
  }();
  if (d.tubular_width) base.set_tubular_width(*d.tubular_width);
  if (d.tol_pi) base.set_tol_pi(*d.tol_pi);
  return base;
}

inline Cavity build_cavity(const DomainSection& d, int dim) {
  std::vector<CavityKeyframe> frames;
  if (d.cavity)
    for (const auto& row : *d.cavity) {
      if (static_cast<int>(row.size()) != dim + 2) throw ConfigError("cavity keyframes are [t, center..., r]");
      frames.push_back({row[0], to_vec(std::vector<double>(row.begin() + 1, row.end() - 1)), row.back()});
    }
  return Cavity(std::move(frames));
}

inline TimeVaryingDomain build_domain(const DomainSection& d, double horizon) {
  FixedDomain base = build_base(d);
  return TimeVaryingDomain(base, build_cavity(d, base.dim()), horizon, d.margin.value_or(0.0));
}

inline SimConfig build_sim_config(const SolverSection& s, double horizon) {
  SimConfig c;
  c.dt = s.dt.value_or(1e-3);
  c.master_seed = s.master_seed.value_or(c.master_seed);
  c.max_time = horizon;
  const std::string sch = s.scheme.value_or("projection");
  if (sch == "projection") c.scheme = ReflectionScheme::Projection;
  else if (sch == "halfspace") c.scheme = ReflectionScheme::Halfspace;
  else throw ConfigError("solver.scheme must be 'projection' or 'halfspace'");
  return c;
}

}  // namespace robinmc
