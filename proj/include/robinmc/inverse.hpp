#pragma once

// Shape identification: the boundary misfit
//   V(D) = int_0^T int_{Gamma^w} |u^D - d|^2 dt dS,
// its continuity under Hausdorff convergence of the Dirichlet part, the
// local-time driven cost, and a small derivative-free minimizer.

#include "robinmc/core.hpp"
#include "robinmc/estimator.hpp"
#include "robinmc/geometry.hpp"
#include "robinmc/oracle_fd.hpp"
#include "robinmc/parallel.hpp"
#include "robinmc/problem.hpp"
#include "robinmc/reflecting_sde.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace robinmc {

/// Static ball cavity parametrised by a subset of (cx, cy, r); the other
/// components stay at their defaults.
struct DomainParam {
  FixedDomain base = FixedDomain::interval(0.0, 1.0, true, false);
  double horizon = 1.0;
  double margin = 0.05;
  double min_radius = 0.02;
  std::vector<std::string> names{"cx", "cy", "r"};
  Eigen::VectorXd lo, hi;
  Vec center0 = make_vec({0.0, 0.0});
  double radius0 = 0.2;

  int size() const { return static_cast<int>(names.size()); }

  void split(const Eigen::VectorXd& theta, Vec& c, double& r) const {
    if (theta.size() != size()) throw ConfigError("theta has the wrong dimension");
    c = center0;
    r = radius0;
    for (int i = 0; i < size(); ++i) {
      const std::string& nm = names[static_cast<std::size_t>(i)];
      if (nm == "cx") c[0] = theta[i];
      else if (nm == "cy") c[1] = theta[i];
      else if (nm == "r") r = theta[i];
      else throw ConfigError("unknown shape parameter '" + nm + "'");
    }
  }

  bool admissible(const Eigen::VectorXd& theta) const {
    if (theta.size() != size()) return false;
    for (int i = 0; i < size(); ++i)
      if (theta[i] < lo[i] - 1e-12 || theta[i] > hi[i] + 1e-12) return false;
    Vec c;
    double r;
    split(theta, c, r);
    return r >= min_radius && base.phi(c) - r >= margin;
  }

  TimeVaryingDomain to_domain(const Eigen::VectorXd& theta) const {
    if (!admissible(theta)) throw DomainError("shape parameter outside the admissible class");
    Vec c;
    double r;
    split(theta, c, r);
    return TimeVaryingDomain(base, Cavity({{0.0, c, r}}), horizon, margin);
  }

  Eigen::VectorXd box_center() const { return 0.5 * (lo + hi); }
};

/// Observation set Gamma^w x [0, T] with quadrature weights.
struct ObservationQuadrature {
  ObservationSpec spec;
  std::vector<double> time_weights;      // trapezoid
  std::vector<double> location_weights;  // arc length (1 per endpoint in 1D)
};

/// Middle quarter of the first Robin arc, `n_points` equal-arc-length
/// midpoints, `n_times` uniform times on [0, T] including both ends.
inline ObservationQuadrature default_observation(const FixedDomain& base, double T, int n_points = 16,
                                                 int n_times = 32) {
  if (n_points < 1 || n_times < 2) throw ConfigError("observation grid too small");
  ObservationQuadrature q;
  const double dt = T / (n_times - 1);
  for (int a = 0; a < n_times; ++a) {
    q.spec.times.push_back(a * dt);
    q.time_weights.push_back((a == 0 || a == n_times - 1) ? 0.5 * dt : dt);
  }
  if (base.dim() == 1) {
    const auto& dis = base.dissection();
    if (dis.left_robin) q.spec.locations.push_back(0.0);
    if (dis.right_robin) q.spec.locations.push_back(1.0);
    if (q.spec.locations.empty()) throw DomainError("no Robin endpoint to observe");
    q.location_weights.assign(q.spec.locations.size(), 1.0);
    return q;
  }
  if (base.shape() != Shape::Disk) throw DomainError("observation arcs are defined on the disk");
  const auto& arcs = base.dissection().robin_arcs;
  if (arcs.empty()) throw DomainError("no Robin arc to observe");
  const Arc& arc = arcs.front();
  const double mid = arc.start + 0.5 * arc.length;
  const double span = 0.25 * arc.length;
  const double d = span / n_points;
  for (int b = 0; b < n_points; ++b) {
    q.spec.locations.push_back(wrap_angle(mid - 0.5 * span + (b + 0.5) * d));
    q.location_weights.push_back(base.radius() * d);
  }
  return q;
}

struct ObservationData {
  Eigen::MatrixXd d;  // times x locations
  std::string provenance = "synthetic";
};

enum class CostBackend { FD, MC };

struct CostOptions {
  CostBackend backend = CostBackend::FD;
  FDGrid grid;
  SimConfig sim;
  EstimatorOptions est;
};

struct CostValue {
  double value = 0.0;
  double std_error = 0.0;
  Eigen::MatrixXd trace;
  Eigen::MatrixXd trace_se;
};

/// Model trace of u^D on the observation set. MC traces use common random
/// numbers: the stream of each (time, location) node is fixed, whatever D is.
inline CostValue model_trace(const Problem& p, const TimeVaryingDomain& dom, const ObservationQuadrature& q,
                             const CostOptions& opt) {
  CostValue out;
  const auto nt = static_cast<Eigen::Index>(q.spec.times.size());
  const auto nb = static_cast<Eigen::Index>(q.spec.locations.size());
  out.trace_se = Eigen::MatrixXd::Zero(nt, nb);
  if (opt.backend == CostBackend::FD) {
    FDGrid g = opt.grid;
    g.store_times = {0.0};
    const FDSolution sol = solve_backward(p, dom, g);
    out.trace = trace_on_observation(sol, dom, q.spec);
    return out;
  }
  out.trace.resize(nt, nb);
  const NonDivForm nd = to_nondivergence(p.coeffs);
  SimConfig sc = opt.sim;
  sc.max_time = p.horizon;
  const ReflectingSimulator sim(p, nd, dom, sc);
  const auto& base = dom.base();
  for (Eigen::Index a = 0; a < nt; ++a)
    for (Eigen::Index b = 0; b < nb; ++b) {
      const double loc = q.spec.locations[static_cast<std::size_t>(b)];
      const Vec x = base.dim() == 1 ? make_vec({loc < 0.5 ? base.center()[0] - base.radius()
                                                          : base.center()[0] + base.radius()})
                                    : base.boundary_point(loc);
      EstimatorOptions eo = opt.est;
      eo.stream_id = opt.est.stream_id + static_cast<std::uint32_t>(a * nb + b);
      const Estimate e = stochastic_solution(sim, p, q.spec.times[static_cast<std::size_t>(a)], x, eo);
      out.trace(a, b) = e.mean;
      out.trace_se(a, b) = e.std_error;
    }
  return out;
}

/// Quadrature of |trace - d|^2; the standard error is propagated from the
/// per-node errors to second order (independent nodes).
inline void apply_quadrature(CostValue& cv, const ObservationData& data, const ObservationQuadrature& q) {
  if (data.d.rows() != cv.trace.rows() || data.d.cols() != cv.trace.cols())
    throw ConfigError("observation data shape does not match the observation spec");
  CompensatedSum v, var;
  for (Eigen::Index a = 0; a < cv.trace.rows(); ++a)
    for (Eigen::Index b = 0; b < cv.trace.cols(); ++b) {
      const double w = q.time_weights[static_cast<std::size_t>(a)] * q.location_weights[static_cast<std::size_t>(b)];
      const double r = cv.trace(a, b) - data.d(a, b);
      const double se = cv.trace_se(a, b);
      v.add(w * r * r);
      var.add(4.0 * w * w * r * r * se * se + 2.0 * w * w * se * se * se * se);
    }
  cv.value = v.value();
  cv.std_error = std::sqrt(var.value());
}

inline CostValue cost_functional(const Problem& p, const TimeVaryingDomain& dom, const ObservationData& data,
                                 const ObservationQuadrature& q, const CostOptions& opt) {
  CostValue cv = model_trace(p, dom, q, opt);
  apply_quadrature(cv, data, q);
  return cv;
}

inline CostValue cost_functional(const Problem& p, const DomainParam& param, const Eigen::VectorXd& theta,
                                 const ObservationData& data, const ObservationQuadrature& q, const CostOptions& opt) {
  return cost_functional(p, param.to_domain(theta), data, q, opt);
}

/// Synthetic observations: the FD trace of u^D for the data-generating domain.
inline ObservationData synthetic_data(const Problem& p, const TimeVaryingDomain& dom, const ObservationQuadrature& q,
                                      const FDGrid& grid) {
  CostOptions o;
  o.grid = grid;
  ObservationData d;
  d.d = model_trace(p, dom, q, o).trace;
  d.provenance = "synthetic-from-theta*";
  return d;
}

struct ContinuityRow {
  int m = 0;
  double hausdorff = 0.0;
  double value = 0.0;      // V(D_m)
  double gap = 0.0;        // |V(D_m) - V(D)|
  double noise_floor = 0.0;
};

struct ContinuityResult {
  double limit_value = 0.0;  // V(D)
  double limit_se = 0.0;
  std::vector<ContinuityRow> rows;
};

/// Pairs d_H(Sigma_m, Sigma) with |V(D_m) - V(D)|. In MC mode the noise
/// floor is 3 x the propagated error of the difference; in FD mode it is
/// `fd_relative_floor` x V(D).
inline ContinuityResult continuity_experiment(const Problem& p, const std::vector<TimeVaryingDomain>& sequence,
                                              const TimeVaryingDomain& limit, const ObservationData& data,
                                              const ObservationQuadrature& q, const CostOptions& opt,
                                              double fd_relative_floor = 1e-3, const HausdorffSampling& hs = {}) {
  ContinuityResult res;
  const CostValue lim = cost_functional(p, limit, data, q, opt);
  res.limit_value = lim.value;
  res.limit_se = lim.std_error;
  for (std::size_t m = 0; m < sequence.size(); ++m) {
    ContinuityRow row;
    row.m = static_cast<int>(m + 1);
    row.hausdorff = hausdorff_distance(sequence[m], limit, hs);
    const CostValue cv = cost_functional(p, sequence[m], data, q, opt);
    row.value = cv.value;
    row.gap = std::abs(cv.value - lim.value);
    row.noise_floor = opt.backend == CostBackend::MC
                          ? 3.0 * std::sqrt(cv.std_error * cv.std_error + lim.std_error * lim.std_error)
                          : fd_relative_floor * lim.value;
    res.rows.push_back(row);
  }
  return res;
}

/// E_{0,nu}[ int t^g 1_{Gamma^w}(X) |u - d|^2(t, X) dL ] with nu uniform on
/// the observation arc (or the observed endpoint in 1D).
/// `misfit(t, x)` returns u - d at a boundary point.
inline Estimate probabilistic_cost(const ReflectingSimulator& sim, const ObservationQuadrature& q, double gamma_exp,
                                   const std::function<double(double, const Vec&)>& misfit,
                                   const EstimatorOptions& opt) {
  if (gamma_exp < 0.0) throw ConfigError("time exponent must be nonnegative");
  const auto& base = sim.domain().base();
  const auto& locs = q.spec.locations;
  // Observation arc [lo, hi] in angle (2D) or the endpoint set (1D).
  double arc_lo = 0.0, arc_len = 0.0;
  if (base.dim() == 2) {
    const double half = 0.5 * (q.location_weights.front() / base.radius());
    arc_lo = locs.front() - half;
    arc_len = locs.size() * 2.0 * half;
  }
  auto on_observation = [&](const Vec& xb) {
    if (base.dim() == 1) {
      const double end = xb[0] < base.center()[0] ? 0.0 : 1.0;
      return std::find(locs.begin(), locs.end(), end) != locs.end();
    }
    const Vec d = xb - base.center();
    return wrap_angle(std::atan2(d[1], d[0]) - arc_lo) <= arc_len;
  };
  std::vector<double> v(static_cast<std::size_t>(opt.n_paths));
  parallel_for(v.size(), opt.workers, [&](std::size_t i) {
    RandomStream pick(sim.config().master_seed, opt.stream_id ^ 0x5151u, i);
    Vec x0;
    if (base.dim() == 1) {
      const double loc = locs[std::min(locs.size() - 1, static_cast<std::size_t>(pick.uniform() * locs.size()))];
      x0 = make_vec({loc < 0.5 ? base.center()[0] - base.radius() : base.center()[0] + base.radius()});
    } else {
      x0 = base.boundary_point(arc_lo + arc_len * pick.uniform());
    }
    double acc = 0.0;
    const ReflectionObserver obs = [&](double t, const Vec& xb, double dL) {
      if (!on_observation(xb)) return;
      const double r = misfit(t, xb);
      acc += (gamma_exp == 0.0 ? 1.0 : std::pow(t, gamma_exp)) * r * r * dL;
    };
    sim.simulate_path(0.0, x0, opt.stream_id, i, nullptr, &obs);
    v[i] = acc;
  });
  return summarize(v);
}

struct EvaluationLogEntry {
  Eigen::VectorXd theta;
  double value = 0.0;
  std::string stage;
};

struct MinimizeResult {
  Eigen::VectorXd theta;
  double value = std::numeric_limits<double>::infinity();
  double resolution = 0.0;  // final grid spacing (max over coordinates)
  std::vector<EvaluationLogEntry> log;
};

/// Coordinate grid refinement followed by a Nelder-Mead polish. The initial
/// grid has `grid_points` nodes per coordinate; inadmissible nodes are skipped
/// (logged as +inf). Returns the best evaluated point.
inline MinimizeResult minimize_cost(const DomainParam& param, const std::function<double(const Eigen::VectorXd&)>& cost,
                                    int budget, int grid_points = 5, int refinements = 4) {
  const int n = param.size();
  MinimizeResult res;
  int used = 0;
  auto eval = [&](const Eigen::VectorXd& th, const char* stage) {
    EvaluationLogEntry e{th, std::numeric_limits<double>::infinity(), stage};
    if (param.admissible(th)) {
      e.value = cost(th);
      ++used;
    }
    res.log.push_back(e);
    if (e.value < res.value) {
      res.value = e.value;
      res.theta = th;
    }
    return e.value;
  };

  // Initial tensor grid.
  Eigen::VectorXd step = (param.hi - param.lo) / std::max(grid_points - 1, 1);
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  while (true) {
    Eigen::VectorXd th(n);
    for (int i = 0; i < n; ++i) th[i] = grid_points == 1 ? param.box_center()[i] : param.lo[i] + idx[static_cast<std::size_t>(i)] * step[i];
    eval(th, "grid");
    int k = 0;
    while (k < n && ++idx[static_cast<std::size_t>(k)] == grid_points) idx[static_cast<std::size_t>(k++)] = 0;
    if (k == n) break;
  }
  res.resolution = step.maxCoeff();
  if (!std::isfinite(res.value)) return res;

  // Refinement: halve the spacing and scan the 3^n stencil around the best.
  for (int level = 0; level < refinements && used < budget; ++level) {
    step *= 0.5;
    const Eigen::VectorXd center = res.theta;
    std::vector<int> s(static_cast<std::size_t>(n), -1);
    while (used < budget) {
      Eigen::VectorXd th = center;
      bool origin = true;
      for (int i = 0; i < n; ++i) {
        th[i] += s[static_cast<std::size_t>(i)] * step[i];
        origin = origin && s[static_cast<std::size_t>(i)] == 0;
      }
      if (!origin) eval(th, "refine");
      int k = 0;
      while (k < n && ++s[static_cast<std::size_t>(k)] == 2) s[static_cast<std::size_t>(k++)] = -1;
      if (k == n) break;
    }
    res.resolution = step.maxCoeff();
  }

  // Nelder-Mead polish from a simplex of the current spacing.
  if (used + n + 1 > budget) return res;
  std::vector<Eigen::VectorXd> simplex{res.theta};
  std::vector<double> fv{res.value};
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd th = res.theta;
    th[i] += (th[i] + step[i] <= param.hi[i]) ? step[i] : -step[i];
    simplex.push_back(th);
    fv.push_back(eval(th, "nelder-mead"));
  }
  while (used < budget) {
    std::vector<std::size_t> order(simplex.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
    double size = 0.0;
    for (const auto& v : simplex) size = std::max(size, (v - simplex[best]).cwiseQuotient(param.hi - param.lo).cwiseAbs().maxCoeff());
    if (size < 1e-6) break;
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < simplex.size(); ++i)
      if (i != worst) centroid += simplex[i];
    centroid /= n;
    const Eigen::VectorXd xr = centroid + (centroid - simplex[worst]);
    const double fr = eval(xr, "nelder-mead");
    if (fr < fv[best]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - simplex[worst]);
      const double fe = used < budget ? eval(xe, "nelder-mead") : fr;
      if (fe < fr) {
        simplex[worst] = xe;
        fv[worst] = fe;
      } else {
        simplex[worst] = xr;
        fv[worst] = fr;
      }
    } else if (fr < fv[second]) {
      simplex[worst] = xr;
      fv[worst] = fr;
    } else {
      const Eigen::VectorXd xc = centroid + 0.5 * (simplex[worst] - centroid);
      const double fc = eval(xc, "nelder-mead");
      if (fc < fv[worst]) {
        simplex[worst] = xc;
        fv[worst] = fc;
      } else {
        for (std::size_t i = 0; i < simplex.size() && used < budget; ++i) {
          if (i == best) continue;
          simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
          fv[i] = eval(simplex[i], "nelder-mead");
        }
      }
    }
  }
  return res;
}

}  // namespace robinmc
