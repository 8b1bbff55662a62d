#pragma once

// Monte Carlo evaluation of the stochastic solution
//   v(s,x) = -E[int exp(Z) f dt] - E[int exp(Z) psi dL] + E[exp(Z(T)) h(X(T)); no stop before T]
// and of diagnostics built on the same simulated paths.

#include "robinmc/core.hpp"
#include "robinmc/parallel.hpp"
#include "robinmc/reflecting_sde.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace robinmc {

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::int64_t n_paths = 0;
  double source_term = 0.0;    // -E[int exp(Z) f dt]
  double robin_term = 0.0;     // -E[int exp(Z) psi dL]
  double terminal_term = 0.0;  // E[exp(Z(T)) h(X(T)); sigma > T]
};

struct EstimatorOptions {
  std::int64_t n_paths = 10000;
  int workers = 1;
  std::uint32_t stream_id = 0;  // per-point offset in the seed tree
  bool common_random_numbers = false;  // reuse stream_id for every point of a field
};

/// Mean and standard error of per-path samples, reduced in index order.
inline Estimate summarize(const std::vector<double>& values) {
  Estimate e;
  e.n_paths = static_cast<std::int64_t>(values.size());
  if (values.empty()) return e;
  CompensatedSum sum;
  for (double v : values) sum.add(v);
  const double n = static_cast<double>(values.size());
  e.mean = sum.value() / n;
  CompensatedSum sq;
  for (double v : values) sq.add((v - e.mean) * (v - e.mean));
  e.std_error = values.size() > 1 ? std::sqrt(sq.value() / (n - 1.0) / n) : 0.0;
  e.terminal_term = e.mean;
  return e;
}

/// Per-path contributions of the three representation terms.
struct PathContribution {
  double source = 0.0;
  double robin = 0.0;
  double terminal = 0.0;
};

inline PathContribution contribution(const PathRecord& rec, const Problem& p, double T) {
  PathContribution c;
  c.source = -rec.source_integral;
  c.robin = -rec.robin_integral;
  if (!rec.stopped && !p.data.h.is_zero()) c.terminal = std::exp(rec.Z_final) * p.data.h(T, rec.X_final);
  return c;
}

inline Estimate reduce_contributions(const std::vector<PathContribution>& cs) {
  Estimate e;
  e.n_paths = static_cast<std::int64_t>(cs.size());
  if (cs.empty()) return e;
  CompensatedSum s1, s2, s3, tot;
  for (const auto& c : cs) {
    s1.add(c.source);
    s2.add(c.robin);
    s3.add(c.terminal);
    tot.add(c.source + c.robin + c.terminal);
  }
  const double n = static_cast<double>(cs.size());
  e.source_term = s1.value() / n;
  e.robin_term = s2.value() / n;
  e.terminal_term = s3.value() / n;
  e.mean = e.source_term + e.robin_term + e.terminal_term;
  if (e.mean == 0.0) e.mean = 0.0;  // no negative zero in outputs
  const double m = tot.value() / n;
  CompensatedSum sq;
  for (const auto& c : cs) {
    const double d = c.source + c.robin + c.terminal - m;
    sq.add(d * d);
  }
  e.std_error = cs.size() > 1 ? std::sqrt(sq.value() / (n - 1.0) / n) : 0.0;
  return e;
}

/// Monte Carlo estimate of v(s, x); exact zero on the closed Dirichlet part.
inline Estimate stochastic_solution(const ReflectingSimulator& sim, const Problem& p, double s, const Vec& x,
                                    const EstimatorOptions& opt) {
  if (opt.n_paths < 2) throw ConfigError("n_paths must be at least 2");
  Estimate zero;
  zero.n_paths = opt.n_paths;
  if (sim.config().stopping && sim.starts_in_dirichlet(s, x)) return zero;
  if (p.data.is_zero()) return zero;
  const double T = sim.horizon();
  std::vector<PathContribution> cs(static_cast<std::size_t>(opt.n_paths));
  parallel_for(cs.size(), opt.workers, [&](std::size_t i) {
    cs[i] = contribution(sim.simulate_path(s, x, opt.stream_id, i), p, T);
  });
  return reduce_contributions(cs);
}

struct FieldPoint {
  double s = 0.0;
  Vec x;
};

struct FieldEntry {
  FieldPoint point;
  Estimate estimate;
  bool skipped = false;
  std::string warning;
};

/// One estimate per point; point k uses stream (opt.stream_id + k) unless
/// common random numbers are requested.
inline std::vector<FieldEntry> solution_field(const ReflectingSimulator& sim, const Problem& p,
                                              const std::vector<FieldPoint>& grid, const EstimatorOptions& opt) {
  std::vector<FieldEntry> out;
  out.reserve(grid.size());
  const auto& base = sim.domain().base();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    FieldEntry e;
    e.point = grid[k];
    if (base.dist_to_pi(grid[k].x) <= base.tol_pi()) {
      e.skipped = true;
      e.warning = "point lies on the Robin/Dirichlet border Pi; representation not claimed continuous there";
      out.push_back(std::move(e));
      continue;
    }
    EstimatorOptions o = opt;
    if (!opt.common_random_numbers) o.stream_id = opt.stream_id + static_cast<std::uint32_t>(k);
    e.estimate = stochastic_solution(sim, p, grid[k].s, grid[k].x, o);
    out.push_back(std::move(e));
  }
  return out;
}

struct LocalTimeStats {
  Estimate mean_local_time;       // E[L(T)] from the simulator
  Estimate occupation_local_time; // E[(1/eps) int 1{phi < eps} dt], no conormal weight
  std::vector<double> lambdas;
  std::vector<Estimate> exp_moments;  // E[exp(lambda L(T))]
};

/// Local-time statistics from a pure reflection run (the simulator must have
/// stopping disabled; occupation_width > 0 enables the occupation estimator).
inline LocalTimeStats local_time_stats(const ReflectingSimulator& sim, double s, const Vec& x,
                                       const std::vector<double>& lambdas, const EstimatorOptions& opt) {
  if (sim.config().stopping) throw ConfigError("local-time statistics need a pure reflection run (stopping off)");
  std::vector<PathRecord> recs(static_cast<std::size_t>(opt.n_paths));
  parallel_for(recs.size(), opt.workers, [&](std::size_t i) { recs[i] = sim.simulate_path(s, x, opt.stream_id, i); });
  LocalTimeStats out;
  out.lambdas = lambdas;
  std::vector<double> v(recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) v[i] = recs[i].L_final;
  out.mean_local_time = summarize(v);
  const double eps = sim.config().occupation_width;
  if (eps > 0.0) {
    for (std::size_t i = 0; i < recs.size(); ++i) v[i] = recs[i].occupation / eps;
    out.occupation_local_time = summarize(v);
  }
  for (double lam : lambdas) {
    if (lam < 0.0) throw ConfigError("lambda must be nonnegative");
    for (std::size_t i = 0; i < recs.size(); ++i) v[i] = lam == 0.0 ? 1.0 : std::exp(lam * recs[i].L_final);
    out.exp_moments.push_back(summarize(v));
  }
  return out;
}

/// Estimate of E[exp(lambda L(T))] for one lambda.
inline Estimate local_time_moment(const ReflectingSimulator& sim, double s, const Vec& x, double lambda,
                                  const EstimatorOptions& opt) {
  return local_time_stats(sim, s, x, {lambda}, opt).exp_moments.front();
}

struct ProbeRow {
  FieldPoint point;
  double distance = 0.0;  // spatial distance to the target
  Estimate estimate;
};

struct ProbeResult {
  FieldPoint target;
  Estimate target_estimate;  // exact 0 when the target is on the Dirichlet part
  bool target_on_dirichlet = false;
  std::vector<ProbeRow> rows;
};

/// Estimates along an approach sequence towards a lateral boundary point.
/// Targets within `pi_collar` of Pi are refused.
inline ProbeResult boundary_continuity_probe(const ReflectingSimulator& sim, const Problem& p,
                                             const FieldPoint& target, const std::vector<FieldPoint>& approach,
                                             const EstimatorOptions& opt, double pi_collar) {
  const auto& base = sim.domain().base();
  if (base.dist_to_pi(target.x) <= pi_collar) throw DomainError("probe target lies in the collar of Pi");
  ProbeResult res;
  res.target = target;
  res.target_on_dirichlet = sim.starts_in_dirichlet(target.s, target.x);
  EstimatorOptions o = opt;
  o.common_random_numbers = true;
  res.target_estimate = stochastic_solution(sim, p, target.s, target.x, o);
  for (std::size_t k = 0; k < approach.size(); ++k) {
    ProbeRow row;
    row.point = approach[k];
    row.distance = (approach[k].x - target.x).norm();
    o.stream_id = opt.stream_id + static_cast<std::uint32_t>(k + 1);
    row.estimate = stochastic_solution(sim, p, approach[k].s, approach[k].x, o);
    res.rows.push_back(std::move(row));
  }
  return res;
}

/// Fraction of paths with a reflection event within eps of Pi before the stop.
inline std::vector<double> pi_attainability_stat(const ReflectingSimulator& sim, const FieldPoint& start,
                                                 const std::vector<double>& eps_list, const EstimatorOptions& opt) {
  std::vector<double> out(eps_list.size(), 0.0);
  if (!sim.domain().base().has_pi()) return out;
  std::vector<double> dmin(static_cast<std::size_t>(opt.n_paths));
  parallel_for(dmin.size(), opt.workers, [&](std::size_t i) {
    dmin[i] = sim.simulate_path(start.s, start.x, opt.stream_id, i).min_pi_distance;
  });
  for (std::size_t k = 0; k < eps_list.size(); ++k) {
    std::int64_t hits = 0;
    for (double d : dmin) hits += d <= eps_list[k] ? 1 : 0;
    out[k] = static_cast<double>(hits) / static_cast<double>(dmin.size());
  }
  return out;
}

/// Sample P(sigma >= s + 2 eta) per start point.
inline std::vector<Estimate> dirichlet_proximity_stat(const ReflectingSimulator& sim,
                                                      const std::vector<FieldPoint>& points, double eta,
                                                      const EstimatorOptions& opt) {
  std::vector<Estimate> out;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const auto& pt = points[k];
    std::vector<double> v(static_cast<std::size_t>(opt.n_paths));
    const auto stream = opt.stream_id + static_cast<std::uint32_t>(opt.common_random_numbers ? 0 : k);
    parallel_for(v.size(), opt.workers, [&](std::size_t i) {
      const PathRecord r = sim.simulate_path(pt.s, pt.x, stream, i);
      v[i] = (!r.stopped || r.stop_time >= pt.s + 2.0 * eta) ? 1.0 : 0.0;
    });
    out.push_back(summarize(v));
  }
  return out;
}

/// Pathwise bound |contribution| <= exp(c+ T + gamma+ L) (|f| T + |psi| L + |h|)
/// averaged over pure reflection paths; sup over the given start points.
inline Estimate solution_bound_shadow(const ReflectingSimulator& pure_sim, double sup_f, double sup_psi,
                                      double sup_h, double sup_c_pos, double sup_gamma_pos,
                                      const std::vector<FieldPoint>& points, const EstimatorOptions& opt) {
  Estimate worst;
  for (std::size_t k = 0; k < points.size(); ++k) {
    std::vector<double> v(static_cast<std::size_t>(opt.n_paths));
    const double span = pure_sim.horizon() - points[k].s;
    parallel_for(v.size(), opt.workers, [&](std::size_t i) {
      const PathRecord r = pure_sim.simulate_path(points[k].s, points[k].x, opt.stream_id + static_cast<std::uint32_t>(k), i);
      v[i] = std::exp(sup_c_pos * span + sup_gamma_pos * r.L_final) * (sup_f * span + sup_psi * r.L_final + sup_h);
    });
    const Estimate e = summarize(v);
    if (k == 0 || e.mean > worst.mean) worst = e;
  }
  return worst;
}

}  // namespace robinmc
