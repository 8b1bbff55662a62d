#pragma once

// Euler-Maruyama simulation of the oblique reflecting diffusion (X, L):
//   dX = c dt + M dW + beta dL,  M M^T = 2A,  beta = A n_in,
// with L growing only on Gamma, the weight Z = int c0 dt + int gamma dL, and
// stopping at the first entrance into the closed Dirichlet part.

#include "robinmc/core.hpp"
#include "robinmc/geometry.hpp"
#include "robinmc/problem.hpp"
#include "robinmc/rng.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace robinmc {

enum class ReflectionScheme {
  Projection,  // project the overshoot back along beta
  Halfspace,   // exact reflected increment in the tangent half-space + bridge exit tests
};

struct SimConfig {
  double dt = 1e-3;
  ReflectionScheme scheme = ReflectionScheme::Projection;
  std::uint64_t master_seed = 20240601;
  double max_time = 1.0;     // T
  double collar_guard = 0.0; // 0 selects the domain's tubular width
  bool stopping = true;      // false: pure reflection run, Dirichlet parts ignored
  double occupation_width = 0.0;  // > 0 records time spent within this distance of Gamma
};

enum class PathStatus { Running, StoppedDirichlet, ReachedT };

struct PathState {
  double t = 0.0;
  Vec X;
  double L = 0.0;
  double Z = 0.0;
  PathStatus status = PathStatus::Running;
  double stop_time = 0.0;
};

struct PathRecord {
  double s = 0.0;
  Vec x;
  double stop_time = 0.0;  // tau ^ T
  bool stopped = false;    // entered the Dirichlet part before T
  double L_final = 0.0;
  double Z_final = 0.0;
  Vec X_final;
  double source_integral = 0.0;  // int exp(Z) f dt
  double robin_integral = 0.0;   // int exp(Z) psi dL
  double min_pi_distance = kInf;  // closest reflection point to Pi
  double occupation = 0.0;        // int 1{phi < width} dt
  std::int64_t reflections = 0;
};

/// One reflection outcome: new position, local-time increment, boundary point.
struct Reflection {
  Vec X_new;
  double dL = 0.0;
  Vec X_b;
  Vec n_in;
};

/// Trace rows for debugging a single path.
struct TraceRow {
  double t;
  Vec X;
  double L;
  double Z;
  std::string event;
};

/// Called at every local-time increment with (t, boundary point, dL).
using ReflectionObserver = std::function<void(double, const Vec&, double)>;

/// Lower-triangular M with M M^T = 2A.
inline Mat diffusion_factor(const Mat& A) {
  if (A.rows() != A.cols()) throw FactorizationError("diffusion matrix is not square");
  Eigen::LLT<Mat> llt(2.0 * A);
  if (llt.info() != Eigen::Success) throw FactorizationError("diffusion matrix is not positive definite");
  Mat m = llt.matrixL();
  return m;
}

/// Projects an outside point back along beta: dL = |phi| / (beta . n_in).
inline Reflection local_time_reflect(const Vec& X_proposed, const TimeVaryingDomain& domain, const NonDivForm& nd,
                                     double t) {
  const FixedDomain& base = domain.base();
  Reflection r;
  r.X_b = base.nearest_boundary_point(X_proposed);
  r.n_in = base.inward_normal(X_proposed);
  const Vec beta = nd.beta(t, r.X_b, r.n_in);
  const double bn = beta.dot(r.n_in);
  if (!(bn > 0.0)) throw ConfigError("reflection direction is not inward (beta . n_in <= 0)");
  Vec x = X_proposed;
  double total = 0.0;
  for (int iter = 0; iter < 8; ++iter) {
    const double ph = base.phi(x);
    if (ph >= 0.0) break;
    if (ph > -1e-12) {
      x = base.nearest_boundary_point(x);
      break;
    }
    const double dl = -ph / bn;
    x += beta * dl;
    total += dl;
  }
  if (base.phi(x) < 0.0) x = base.nearest_boundary_point(x);
  r.X_new = x;
  r.dL = total;
  return r;
}

/// Entrance into the moving cavity along the segment X_prev -> X_new.
/// Returns the interpolated stop time.
inline std::optional<double> cavity_stop_check(double t_prev, const Vec& X_prev, double t_new, const Vec& X_new,
                                               const TimeVaryingDomain& domain) {
  if (!domain.has_cavity()) return std::nullopt;
  auto crossing = [&](double tc) -> std::optional<double> {
    const auto [c, r] = domain.cavity().at(tc);
    if (r <= 0.0) return std::nullopt;
    const Vec d = X_new - X_prev;
    const Vec f = X_prev - c;
    const double a = d.squaredNorm();
    const double b = 2.0 * f.dot(d);
    const double cc = f.squaredNorm() - r * r;
    if (cc <= 0.0) return 0.0;
    if (a == 0.0) return std::nullopt;
    const double disc = b * b - 4.0 * a * cc;
    if (disc < 0.0) return std::nullopt;
    const double lam = (-b - std::sqrt(disc)) / (2.0 * a);
    if (lam < 0.0 || lam > 1.0) return std::nullopt;
    return lam;
  };
  const double h = t_new - t_prev;
  std::optional<double> lam = crossing(t_prev);
  if (lam) {
    if (auto refined = crossing(t_prev + *lam * h)) lam = refined;
    return t_prev + *lam * h;
  }
  if (domain.in_cavity(t_new, X_new)) return t_new;
  return std::nullopt;
}

/// Dirichlet stopping rule for one step: cavity entrance (Sigma_2) or a
/// reflection event at a fixed-Dirichlet / Pi boundary point (Sigma_1).
inline std::optional<double> dirichlet_stop_check(double t_prev, const Vec& X_prev, double t_new, const Vec& X_new,
                                                  const TimeVaryingDomain& domain,
                                                  const std::optional<Vec>& reflection_point = std::nullopt) {
  if (reflection_point) {
    const BoundaryClass cls = domain.base().boundary_class(*reflection_point);
    if (cls == BoundaryClass::DirichletFixed || cls == BoundaryClass::Pi) return t_new;
  }
  return cavity_stop_check(t_prev, X_prev, t_new, X_new, domain);
}

/// Path simulator bound to one (problem, domain, config). Immutable and
/// safe to share across threads; every path is a pure function of its keys.
class ReflectingSimulator {
public:
  ReflectingSimulator(const Problem& problem, const NonDivForm& nondiv, const TimeVaryingDomain& domain,
                      const SimConfig& cfg)
      : problem_(&problem), nd_(&nondiv), domain_(&domain), cfg_(cfg) {
    if (!(cfg_.dt > 0.0)) throw ConfigError("dt must be positive");
    if (domain.dim() != nondiv.dim()) throw ConfigError("problem and domain dimensions differ");
    if (cfg_.collar_guard <= 0.0) cfg_.collar_guard = domain.base().tubular_width();
    const_A_ = nondiv.A.is_constant();
    if (const_A_) {
      A0_ = nondiv.A.eval(0.0, domain.base().center());
      M0_ = diffusion_factor(A0_);
    }
    const_c_ = nondiv.c_vec.is_constant();
    if (const_c_) c0_ = nondiv.c_vec.eval(0.0, domain.base().center());
    zero_c_scal_ = nondiv.c_scal.is_zero();
    zero_f_ = problem.data.f.is_zero();
    if (problem.data.f.is_constant()) f0_ = problem.data.f.constant_value();
    if (nondiv.c_scal.is_constant()) c_scal0_ = nondiv.c_scal.constant_value();
    zero_psi_ = problem.data.psi.is_zero();
    has_cavity_ = domain.has_cavity();
  }

  const SimConfig& config() const noexcept { return cfg_; }
  const TimeVaryingDomain& domain() const noexcept { return *domain_; }
  double horizon() const noexcept { return cfg_.max_time; }

  /// Largest expected one-step displacement vs the collar width:
  /// 4 (sup|c| dt + sqrt(2 sup|A| dt)) <= tubular width.
  bool step_guard_ok(int samples = 256) const {
    RandomStream rng(0xC011A7ULL, 0xfffffff1u, 0);
    double sup_c = 0.0, sup_a = 0.0;
    const auto& base = domain_->base();
    for (int k = 0; k < samples; ++k) {
      const double t = cfg_.max_time * rng.uniform();
      const Vec x = detail::sample_in_ball(base.center(), base.radius(), rng);
      sup_c = std::max(sup_c, nd_->c_vec.eval(t, x).norm());
      sup_a = std::max(sup_a, nd_->A.eval(t, x).norm());
    }
    return 4.0 * (sup_c * cfg_.dt + std::sqrt(2.0 * sup_a * cfg_.dt)) <= base.tubular_width();
  }

  /// Advances one step of size h (the final step may be shorter).
  void step(PathState& st, PathRecord& rec, RandomStream& rng, double h, std::vector<TraceRow>* trace = nullptr,
            int depth = 0, const ReflectionObserver* observer = nullptr) const {
    const auto& base = domain_->base();
    const int n = base.dim();
    const double T = cfg_.max_time;
    const double t = st.t;
    const double te = std::min(t, T);

    Mat A_var, M_var;
    if (!const_A_) {
      A_var = nd_->A.eval(te, st.X);
      M_var = diffusion_factor(A_var);
    }
    const Mat& Aloc = const_A_ ? A0_ : A_var;
    const Mat& Mf = const_A_ ? M0_ : M_var;
    const Vec c = const_c_ ? c0_ : nd_->c_vec.eval(te, st.X);
    Vec xi(n);
    for (int i = 0; i < n; ++i) xi[i] = rng.normal();
    const double sq = std::sqrt(h);
    Vec Xp = st.X + c * h + Mf * (xi * sq);

    if (base.phi(Xp) < -cfg_.collar_guard) {
      if (depth >= 8) throw SimulationError("proposal escaped the collar after 8 step halvings");
      step(st, rec, rng, 0.5 * h, trace, depth + 1, observer);
      if (st.status == PathStatus::Running) step(st, rec, rng, 0.5 * h, trace, depth + 1, observer);
      return;
    }

    if (cfg_.occupation_width > 0.0 && base.phi(st.X) < cfg_.occupation_width) rec.occupation += h;
    if (!zero_f_) rec.source_integral += std::exp(st.Z) * (f0_ ? *f0_ : problem_->data.f(te, st.X)) * h;
    if (!zero_c_scal_) st.Z += (c_scal0_ ? *c_scal0_ : nd_->c_scal(te, st.X)) * h;

    const double t_new = t + h;
    const double te_new = std::min(t_new, T);
    const Vec X_prev = st.X;
    std::optional<Reflection> refl;

    if (cfg_.scheme == ReflectionScheme::Halfspace) {
      refl = halfspace_contact(st.X, Xp, Aloc, h, te_new, rng);
    } else if (base.phi(Xp) < 0.0) {
      refl = local_time_reflect(Xp, *domain_, *nd_, te_new);
    }

    if (refl) {
      ++rec.reflections;
      if (cfg_.stopping) {
        rec.min_pi_distance = std::min(rec.min_pi_distance, base.dist_to_pi(refl->X_b));
        const BoundaryClass cls = base.boundary_class(refl->X_b);
        if (cls == BoundaryClass::DirichletFixed || cls == BoundaryClass::Pi) {
          st.X = refl->X_b;
          st.t = t_new;
          st.status = PathStatus::StoppedDirichlet;
          st.stop_time = t_new;
          if (trace) trace->push_back({t_new, st.X, st.L, st.Z, "stop_fixed"});
          return;
        }
      }
      if (refl->dL > 0.0) {
        const double g = nd_->gamma(te_new, refl->X_b, refl->n_in);
        if (!zero_psi_) {
          const double w = std::abs(g * refl->dL) < 1e-8 ? refl->dL * (1.0 + 0.5 * g * refl->dL)
                                                          : std::expm1(g * refl->dL) / g;
          rec.robin_integral += problem_->data.psi(te_new, refl->X_b) * std::exp(st.Z) * w;
        }
        if (observer) (*observer)(t_new, refl->X_b, refl->dL);
        st.Z += g * refl->dL;
        st.L += refl->dL;
      }
      st.X = refl->X_new;
    } else {
      st.X = Xp;
    }
    st.t = t_new;
    if (trace) trace->push_back({t_new, st.X, st.L, st.Z, refl ? "reflect" : "step"});

    if (cfg_.stopping && has_cavity_) {
      std::optional<double> hit = cavity_stop_check(t, X_prev, t_new, st.X, *domain_);
      if (!hit && cfg_.scheme == ReflectionScheme::Halfspace) hit = cavity_bridge_hit(t, X_prev, t_new, st.X, Aloc, rng);
      if (hit) {
        st.status = PathStatus::StoppedDirichlet;
        st.stop_time = *hit;
        if (trace) trace->push_back({*hit, st.X, st.L, st.Z, "stop_cavity"});
      }
    }
  }

  /// Simulates from (s, x) until the Dirichlet entrance or T.
  PathRecord simulate_path(double s, const Vec& x, std::uint32_t stream_id, std::uint64_t path_index,
                           std::vector<TraceRow>* trace = nullptr,
                           const ReflectionObserver* observer = nullptr) const {
    const auto& base = domain_->base();
    if (x.size() != base.dim()) throw DomainError("start point dimension mismatch");
    if (base.phi(x) < -base.tol_pi()) throw DomainError("start point outside the closure of Omega");
    const double T = cfg_.max_time;
    PathRecord rec;
    rec.s = s;
    rec.x = x;
    rec.X_final = x;
    rec.stop_time = std::min(s, T);
    if (cfg_.stopping && starts_in_dirichlet(s, x)) {
      rec.stopped = true;
      return rec;
    }
    if (s >= T) {
      rec.stop_time = T;
      return rec;
    }
    RandomStream rng(cfg_.master_seed, stream_id, path_index);
    PathState st;
    st.t = s;
    st.X = x;
    if (trace) trace->push_back({s, x, 0.0, 0.0, "start"});
    const auto n_steps = static_cast<std::int64_t>(std::ceil((T - s) / cfg_.dt - 1e-9));
    for (std::int64_t k = 0; k < n_steps && st.status == PathStatus::Running; ++k) {
      const double t_next = k + 1 == n_steps ? T : s + static_cast<double>(k + 1) * cfg_.dt;
      step(st, rec, rng, t_next - st.t, trace, 0, observer);
    }
    if (st.status == PathStatus::Running) {
      st.status = PathStatus::ReachedT;
      st.stop_time = T;
    }
    rec.stopped = st.status == PathStatus::StoppedDirichlet;
    rec.stop_time = st.stop_time;
    rec.L_final = st.L;
    rec.Z_final = st.Z;
    rec.X_final = st.X;
    return rec;
  }

  /// Start point in the closed Dirichlet part at time s.
  bool starts_in_dirichlet(double s, const Vec& x) const {
    const auto& base = domain_->base();
    if (domain_->in_cavity(std::min(s, cfg_.max_time), x)) return true;
    if (base.phi(x) <= base.tol_pi()) {
      const BoundaryClass cls = base.boundary_class(x);
      return cls == BoundaryClass::DirichletFixed || cls == BoundaryClass::Pi;
    }
    return false;
  }

private:
  // Reflected increment in the tangent half-space at the nearest boundary
  // point: the normal coordinate is a reflected Brownian bridge whose
  // minimum is sampled exactly; the Skorokhod push along beta compensates
  // the excursion below zero.
  std::optional<Reflection> halfspace_contact(const Vec& X, const Vec& Xp, const Mat& A, double h, double t_new,
                                              RandomStream& rng) const {
    const auto& base = domain_->base();
    const Vec n_in = base.inward_normal(X);
    const double y0 = std::max(base.phi(X), 0.0);
    const double var = 2.0 * n_in.dot(A * n_in) * h;
    const double wn = n_in.dot(Xp - X);
    // P(bridge minimum < 0) = exp(-2 y0 y1 / var); below e^-40 no draw is made.
    const double y1 = y0 + wn;
    if (y1 > 0.0 && 2.0 * y0 * y1 > 40.0 * var && base.phi(Xp) >= 0.0) return std::nullopt;
    const double u = rng.uniform();
    const double bridge_min = 0.5 * (wn - std::sqrt(wn * wn - 2.0 * var * std::log(u)));
    const double depth = y0 + bridge_min;
    if (depth >= 0.0) {
      if (base.phi(Xp) < 0.0) return local_time_reflect(Xp, *domain_, *nd_, t_new);
      return std::nullopt;
    }
    Reflection r;
    r.X_b = base.nearest_boundary_point(Xp);
    r.n_in = base.inward_normal(Xp);
    const Vec beta = nd_->beta(t_new, r.X_b, r.n_in);
    const double bn = beta.dot(n_in);
    if (!(bn > 0.0)) throw ConfigError("reflection direction is not inward (beta . n_in <= 0)");
    const double dl = -depth / bn;
    Vec x = Xp + beta * dl;
    if (base.phi(x) < 0.0) {
      Reflection extra = local_time_reflect(x, *domain_, *nd_, t_new);
      x = extra.X_new;
      r.dL = dl + extra.dL;
    } else {
      r.dL = dl;
    }
    r.X_new = x;
    return r;
  }

  // Brownian-bridge test for an unobserved excursion into the cavity.
  std::optional<double> cavity_bridge_hit(double t, const Vec& X0, double t_new, const Vec& X1, const Mat& A,
                                          RandomStream& rng) const {
    const double d0 = domain_->cavity_gap(t, X0);
    const double d1 = domain_->cavity_gap(t_new, X1);
    if (!(d0 > 0.0) || !(d1 > 0.0) || !std::isfinite(d0)) return std::nullopt;
    const auto [c, r] = domain_->cavity().at(t);
    Vec radial = X0 - c;
    const double len = radial.norm();
    if (len == 0.0) return std::nullopt;
    radial /= len;
    const double var = 2.0 * radial.dot(A * radial) * (t_new - t);
    if (d0 * d1 > 20.0 * var) return std::nullopt;
    const double p = std::exp(-2.0 * d0 * d1 / var);
    if (rng.uniform() < p) return t + (t_new - t) * d0 / (d0 + d1);
    return std::nullopt;
  }

  const Problem* problem_;
  const NonDivForm* nd_;
  const TimeVaryingDomain* domain_;
  SimConfig cfg_;
  bool const_A_ = false;
  Mat A0_, M0_;
  bool const_c_ = false;
  Vec c0_;
  bool zero_c_scal_ = false;
  bool zero_f_ = false;
  std::optional<double> f0_, c_scal0_;
  bool zero_psi_ = false;
  bool has_cavity_ = false;
};

}  // namespace robinmc
