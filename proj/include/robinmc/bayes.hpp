#pragma once

// Bayesian shape identification: forward operator F = G2 o G1, Gaussian
// likelihood, posterior by self-normalised importance sampling from the
// prior (log-space weights), Hellinger distance between posteriors built on
// shared prior samples, and the Lipschitz stability bound
//   d_Hell <= exp(3 s^2 / (4 sigma^2)) (s / sigma) (|y - y'| / sigma).

#include "robinmc/core.hpp"
#include "robinmc/inverse.hpp"
#include "robinmc/oracle_fd.hpp"
#include "robinmc/parallel.hpp"
#include "robinmc/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace robinmc {

struct ForwardOp {
  int m = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> eval;
  Eigen::VectorXd operator()(const Eigen::VectorXd& theta) const { return eval(theta); }
};

/// FD backend: the boundary trace at the design nodes, flattened time-major.
inline ForwardOp fd_forward(const Problem& p, const DomainParam& param, const FDGrid& grid,
                            const ObservationSpec& design) {
  ForwardOp F;
  F.m = static_cast<int>(design.times.size() * design.locations.size());
  F.eval = [p, param, grid, design](const Eigen::VectorXd& theta) {
    const TimeVaryingDomain dom = param.to_domain(theta);
    FDGrid g = grid;
    g.store_times = {0.0};
    const FDSolution sol = solve_backward(p, dom, g);
    const Eigen::MatrixXd tr = trace_on_observation(sol, dom, design);
    Eigen::VectorXd out(tr.size());
    for (Eigen::Index a = 0; a < tr.rows(); ++a)
      for (Eigen::Index b = 0; b < tr.cols(); ++b) out[a * tr.cols() + b] = tr(a, b);
    return out;
  };
  return F;
}

/// Default design: uniform 8 x 8 grid on [0, T] x Gamma^w.
inline ObservationSpec default_design(const FixedDomain& base, double T, int n_times = 8, int n_points = 8) {
  return default_observation(base, T, n_points, n_times).spec;
}

struct NoiseModel {
  double sigma2 = 1.0;
  double sigma() const { return std::sqrt(sigma2); }
};

inline double log_likelihood(const Eigen::VectorXd& F_theta, const Eigen::VectorXd& y, const NoiseModel& noise) {
  if (F_theta.size() != y.size()) throw ConfigError("data and forward output dimensions differ");
  if (!(noise.sigma2 > 0.0)) throw ConfigError("noise variance must be positive");
  const double m = static_cast<double>(y.size());
  return -0.5 * m * std::log(2.0 * kPi * noise.sigma2) - (y - F_theta).squaredNorm() / (2.0 * noise.sigma2);
}

/// (2 pi sigma^2)^{-m/2} exp(-|y - F|^2 / (2 sigma^2)).
inline double likelihood(const Eigen::VectorXd& F_theta, const Eigen::VectorXd& y, const NoiseModel& noise) {
  return std::exp(log_likelihood(F_theta, y, noise));
}

/// Prior draws (uniform on the admissible box) with their forward outputs.
struct PriorSample {
  std::vector<Eigen::VectorXd> theta;
  std::vector<Eigen::VectorXd> forward;
  std::uint64_t seed = 0;
};

inline PriorSample sample_prior(const DomainParam& param, const ForwardOp& F, int n, std::uint64_t seed, int workers) {
  if (n < 1) throw ConfigError("prior sample size must be positive");
  PriorSample s;
  s.seed = seed;
  s.theta.resize(static_cast<std::size_t>(n));
  s.forward.resize(static_cast<std::size_t>(n));
  const int dim = param.size();
  for (int k = 0; k < n; ++k) {
    RandomStream rng(seed, 0xB4E5u, static_cast<std::uint64_t>(k));
    Eigen::VectorXd th(dim);
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw DomainError("admissible set has negligible prior mass");
      for (int i = 0; i < dim; ++i) th[i] = param.lo[i] + (param.hi[i] - param.lo[i]) * rng.uniform();
      if (param.admissible(th)) break;
    }
    s.theta[static_cast<std::size_t>(k)] = th;
  }
  parallel_for(s.theta.size(), workers, [&](std::size_t k) { s.forward[k] = F(s.theta[k]); });
  return s;
}

struct PosteriorEnsemble {
  const PriorSample* prior = nullptr;
  Eigen::VectorXd y;
  NoiseModel noise;
  std::vector<double> log_psi;
  std::vector<double> weights;  // normalised
  double log_Z = 0.0;           // log of mean_k Psi_k
  double ess = 0.0;
  Eigen::VectorXd mean;
  std::vector<std::string> warnings;

  double Z() const { return std::exp(log_Z); }
};

inline double log_sum_exp(const std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) return mx;
  CompensatedSum s;
  for (double x : v) s.add(std::exp(x - mx));
  return mx + std::log(s.value());
}

inline PosteriorEnsemble posterior(const PriorSample& prior, const Eigen::VectorXd& y, const NoiseModel& noise) {
  const std::size_t n = prior.theta.size();
  if (n < 100) throw ConfigError("posterior needs at least 100 prior samples");
  PosteriorEnsemble e;
  e.prior = &prior;
  e.y = y;
  e.noise = noise;
  e.log_psi.resize(n);
  for (std::size_t k = 0; k < n; ++k) e.log_psi[k] = log_likelihood(prior.forward[k], y, noise);
  const double lse = log_sum_exp(e.log_psi);
  e.log_Z = lse - std::log(static_cast<double>(n));
  e.weights.resize(n);
  CompensatedSum w2;
  for (std::size_t k = 0; k < n; ++k) {
    e.weights[k] = std::exp(e.log_psi[k] - lse);
    w2.add(e.weights[k] * e.weights[k]);
  }
  e.ess = 1.0 / w2.value();
  if (e.ess < 10.0) e.warnings.push_back("effective sample size below 10");
  e.mean = Eigen::VectorXd::Zero(prior.theta.front().size());
  for (std::size_t k = 0; k < n; ++k) e.mean += e.weights[k] * prior.theta[k];
  return e;
}

struct HellingerEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// sqrt(1/2 mean_k (sqrt(Psi_k / Z) - sqrt(Psi'_k / Z'))^2) on shared prior samples.
inline HellingerEstimate hellinger(const PosteriorEnsemble& a, const PosteriorEnsemble& b) {
  if (a.prior == nullptr || a.prior != b.prior || a.log_psi.size() != b.log_psi.size())
    throw ConfigError("posteriors are not built on the same prior samples");
  const std::size_t n = a.log_psi.size();
  std::vector<double> g(n);
  CompensatedSum s;
  for (std::size_t k = 0; k < n; ++k) {
    const double r = std::exp(0.5 * (a.log_psi[k] - a.log_Z)) - std::exp(0.5 * (b.log_psi[k] - b.log_Z));
    g[k] = r * r;
    s.add(g[k]);
  }
  const double mean = s.value() / static_cast<double>(n);
  CompensatedSum sq;
  for (double v : g) sq.add((v - mean) * (v - mean));
  const double se_mean = std::sqrt(sq.value() / (n - 1.0) / n);
  HellingerEstimate h;
  h.value = std::sqrt(0.5 * mean);
  h.std_error = h.value > 0.0 ? 0.5 * se_mean / (2.0 * h.value) : 0.0;
  return h;
}

/// 1.1 x the largest |F(theta)| over the first `count` prior samples.
inline double estimate_forward_bound(const PriorSample& prior, std::size_t count = 1000) {
  double mx = 0.0;
  for (std::size_t k = 0; k < std::min(count, prior.forward.size()); ++k) mx = std::max(mx, prior.forward[k].norm());
  return 1.1 * mx;
}

struct StabilityCheck {
  double d_hell = 0.0;
  double d_se = 0.0;
  double sigma_yy = 0.0;   // upper bound on sigma(y, y')
  double log_bound = 0.0;  // natural log of the bound (-inf when y = y')
  double bound = 0.0;      // +inf when exp overflows
  bool pass = false;
};

/// Evaluates the printed stability inequality with sigma(y, y') bounded by
/// max(|y|, |y'|) + C_F.
inline StabilityCheck stability_bound_check(const PosteriorEnsemble& a, const PosteriorEnsemble& b, double C_F) {
  StabilityCheck c;
  const HellingerEstimate h = hellinger(a, b);
  c.d_hell = h.value;
  c.d_se = h.std_error;
  const double sigma = a.noise.sigma();
  c.sigma_yy = std::max(a.y.norm(), b.y.norm()) + C_F;
  const double dy = (a.y - b.y).norm();
  if (dy == 0.0) {
    c.log_bound = -std::numeric_limits<double>::infinity();
    c.bound = 0.0;
  } else {
    c.log_bound = 0.75 * c.sigma_yy * c.sigma_yy / (sigma * sigma) + std::log(c.sigma_yy / sigma) + std::log(dy / sigma);
    c.bound = std::exp(c.log_bound);
  }
  c.pass = c.d_hell <= c.bound + 3.0 * c.d_se;
  return c;
}

}  // namespace robinmc
