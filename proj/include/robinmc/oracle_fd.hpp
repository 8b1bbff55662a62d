#pragma once

// Deterministic finite-difference reference solver for the terminal-boundary
// problem. Time is reversed (tau = T - t) and Crank-Nicolson is applied to
// the divergence-form operator; the first step is replaced by backward-Euler
// quarter steps (Rannacher start) to damp incompatible terminal data.
//
// 1D: node-centred grid on the interval, Robin endpoints closed with a
//     half-cell flux balance, Dirichlet endpoints pinned to zero.
// 2D: vertex-centred polar grid on the disk (centre node + rings), Robin/
//     Dirichlet nodes on r = R, cavity nodes masked to zero with cut-face
//     fluxes using the exact interface distance.

#include "robinmc/core.hpp"
#include "robinmc/geometry.hpp"
#include "robinmc/problem.hpp"

#include <Eigen/Sparse>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace robinmc {

struct FDGrid {
  int n_space = 400;   // 1D intervals, or radial intervals in 2D
  int n_angle = 128;   // 2D only
  int n_time = 800;    // time steps over [0, T]
  std::vector<double> store_times;  // empty: keep every level
};

class FDSolution {
public:
  int dim = 1;
  double horizon = 1.0;
  int n_time = 0;
  // 1D: nodes x_i; 2D: radial nodes r_i (i = 0 is the centre) and angles.
  std::vector<double> nodes;
  std::vector<double> angles;
  Vec center;
  std::vector<int> stored_levels;           // ascending in t
  std::vector<std::vector<double>> levels;  // values at stored levels
  std::vector<std::vector<double>> boundary;  // per level (all levels): 1D {u(a), u(b)}, 2D ring r = R
  double sup_abs = 0.0;
  std::string problem_hash;

  double time_of(int level) const { return horizon * level / n_time; }

  /// Interpolated value at (t, x).
  double value(double t, const Vec& x) const {
    const double pos = std::clamp(t / horizon * n_time, 0.0, static_cast<double>(n_time));
    auto it = std::lower_bound(stored_levels.begin(), stored_levels.end(), pos - 1e-9);
    std::size_t hi = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - stored_levels.begin(),
                                                                       static_cast<std::ptrdiff_t>(stored_levels.size()) - 1));
    if (std::abs(stored_levels[hi] - pos) < 1e-9 || hi == 0) return spatial(levels[hi], x);
    const std::size_t lo = hi - 1;
    const double w = (pos - stored_levels[lo]) / (stored_levels[hi] - stored_levels[lo]);
    return (1.0 - w) * spatial(levels[lo], x) + w * spatial(levels[hi], x);
  }

  /// Boundary value at time t: 1D endpoint (0 = lower, 1 = upper), 2D angle.
  double boundary_value(double t, double where) const {
    const double pos = std::clamp(t / horizon * n_time, 0.0, static_cast<double>(n_time));
    const int lo = std::min(static_cast<int>(std::floor(pos)), n_time - 1);
    const double w = pos - lo;
    auto at = [&](int lev) {
      const auto& b = boundary[static_cast<std::size_t>(lev)];
      if (dim == 1) return b[where < 0.5 ? 0 : 1];
      return angular(b, where);
    };
    return (1.0 - w) * at(lo) + w * at(lo + 1);
  }

private:
  double angular(const std::vector<double>& ring, double angle) const {
    const int na = static_cast<int>(angles.size());
    const double dth = kTwoPi / na;
    const double p = wrap_angle(angle) / dth;
    const int j0 = static_cast<int>(std::floor(p)) % na;
    const int j1 = (j0 + 1) % na;
    const double w = p - std::floor(p);
    return (1.0 - w) * ring[static_cast<std::size_t>(j0)] + w * ring[static_cast<std::size_t>(j1)];
  }

  double spatial(const std::vector<double>& u, const Vec& x) const {
    if (dim == 1) {
      const double h = nodes[1] - nodes[0];
      const double p = std::clamp((x[0] - nodes.front()) / h, 0.0, static_cast<double>(nodes.size() - 1));
      const auto i = std::min(static_cast<std::size_t>(p), nodes.size() - 2);
      const double w = p - static_cast<double>(i);
      return (1.0 - w) * u[i] + w * u[i + 1];
    }
    const int nr = static_cast<int>(nodes.size()) - 1;
    const int na = static_cast<int>(angles.size());
    const double dr = nodes[1];
    const Vec d = x - center;
    const double r = d.norm();
    const double p = std::min(r / dr, static_cast<double>(nr));
    const int i0 = std::min(static_cast<int>(std::floor(p)), nr - 1);
    const double wr = p - i0;
    const double ang = std::atan2(d[1], d[0]);
    auto ring = [&](int i) {
      if (i == 0) return u[0];
      const double dth = kTwoPi / na;
      const double q = wrap_angle(ang) / dth;
      const int j0 = static_cast<int>(std::floor(q)) % na;
      const int j1 = (j0 + 1) % na;
      const double w = q - std::floor(q);
      const std::size_t base = 1 + static_cast<std::size_t>((i - 1) * na);
      return (1.0 - w) * u[base + static_cast<std::size_t>(j0)] + w * u[base + static_cast<std::size_t>(j1)];
    };
    return (1.0 - wr) * ring(i0) + wr * ring(i0 + 1);
  }
};

namespace detail {

inline bool depends_on_time(const Expr& e) {
  try {
    return !e.derivative(0).is_zero();
  } catch (const RewriteError&) {
    return true;
  }
}

inline bool problem_time_dependent(const Problem& p) {
  const auto& k = p.coeffs;
  for (const auto& e : k.A.entries)
    if (depends_on_time(e)) return true;
  for (const auto& e : k.a_vec.comps)
    if (depends_on_time(e)) return true;
  for (const auto& e : k.b_vec.comps)
    if (depends_on_time(e)) return true;
  return depends_on_time(k.a_scal) || depends_on_time(k.sigma_rob) || depends_on_time(p.data.f) ||
         depends_on_time(p.data.psi);
}

// Thomas algorithm; sub/diag/sup are overwritten.
inline void solve_tridiagonal(std::vector<double>& sub, std::vector<double>& diag, std::vector<double>& sup,
                              std::vector<double>& rhs) {
  const std::size_t n = diag.size();
  for (std::size_t i = 1; i < n; ++i) {
    if (diag[i - 1] == 0.0) throw SolverError("singular tridiagonal system");
    const double m = sub[i] / diag[i - 1];
    diag[i] -= m * sup[i - 1];
    rhs[i] -= m * rhs[i - 1];
  }
  if (diag[n - 1] == 0.0) throw SolverError("singular tridiagonal system");
  rhs[n - 1] /= diag[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) rhs[i] = (rhs[i] - sup[i] * rhs[i + 1]) / diag[i];
}

inline std::vector<int> stored_level_set(const FDGrid& g, double T) {
  std::vector<int> out;
  if (g.store_times.empty()) {
    for (int n = 0; n <= g.n_time; ++n) out.push_back(n);
    return out;
  }
  for (double t : g.store_times) {
    const double p = std::clamp(t / T * g.n_time, 0.0, static_cast<double>(g.n_time));
    out.push_back(static_cast<int>(std::floor(p)));
    out.push_back(static_cast<int>(std::ceil(p)));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Schedule of reversed-time sub-steps: four backward-Euler quarter steps,
// then Crank-Nicolson. Each entry: (theta, fraction of k).
struct SubStep {
  double theta;
  double frac;
};

}  // namespace detail

/// Semi-discrete operator dw/dtau = K(t) w + g(t) in 1D, rows for Dirichlet
/// nodes are identically zero.
struct Operator1D {
  std::vector<double> sub, diag, sup, g;
  std::vector<char> dirichlet;
};

inline Operator1D assemble_1d(const Problem& p, const TimeVaryingDomain& dom, const std::vector<double>& x, double t) {
  const int N = static_cast<int>(x.size()) - 1;
  const double h = x[1] - x[0];
  const auto& k = p.coeffs;
  const auto& dis = dom.base().dissection();
  Operator1D op;
  op.sub.assign(x.size(), 0.0);
  op.diag.assign(x.size(), 0.0);
  op.sup.assign(x.size(), 0.0);
  op.g.assign(x.size(), 0.0);
  op.dirichlet.assign(x.size(), 0);
  auto at = [&](double xi) { return make_vec({xi}); };
  // Flux F_{i+1/2} = A (w_{i+1} - w_i)/h + a (w_i + w_{i+1})/2 -> coefficients on (w_i, w_{i+1}).
  std::vector<double> fl(static_cast<std::size_t>(N)), fr(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) {
    const Vec xm = at(0.5 * (x[static_cast<std::size_t>(i)] + x[static_cast<std::size_t>(i + 1)]));
    const double A = k.A(0, 0)(t, xm);
    const double a = k.a_vec[0](t, xm);
    fl[static_cast<std::size_t>(i)] = -A / h + 0.5 * a;
    fr[static_cast<std::size_t>(i)] = A / h + 0.5 * a;
  }
  for (int i = 0; i <= N; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const Vec xi = at(x[ui]);
    const bool left = i == 0, right = i == N;
    if ((left && !dis.left_robin) || (right && !dis.right_robin)) {
      op.dirichlet[ui] = 1;
      continue;
    }
    const double b = k.b_vec[0](t, xi);
    const double a0 = k.a_scal(t, xi);
    const double f = p.data.f(t, xi);
    if (!left && !right) {
      // (F_{i+1/2} - F_{i-1/2}) / h - b (w_{i+1} - w_{i-1}) / 2h - a0 w_i - f
      op.diag[ui] = (fl[ui] - fr[ui - 1]) / h - a0;
      op.sup[ui] = fr[ui] / h - b / (2 * h);
      op.sub[ui] = -fl[ui - 1] / h + b / (2 * h);
      op.g[ui] = -f;
      continue;
    }
    // Half cell: (h/2) w' = +-(F_inner - F_boundary) - (h/2)(b w_x + a0 w + f),
    // with the Robin flux F.n_in = sigma w + psi.
    const double sigma = k.sigma_rob(t, xi);
    const double psi = p.data.psi(t, xi);
    const double hh = 0.5 * h;
    if (left) {
      // F_0 = sigma w_0 + psi (n_in = +1)
      op.diag[ui] = (fl[0] - sigma) / hh - a0 + b / h;
      op.sup[ui] = fr[0] / hh - b / h;
      op.g[ui] = -psi / hh - f;
    } else {
      // F_N = -(sigma w_N + psi) (n_in = -1)
      op.diag[ui] = (-sigma - fr[ui - 1]) / hh - a0 - b / h;
      op.sub[ui] = -fl[ui - 1] / hh + b / h;
      op.g[ui] = -psi / hh - f;
    }
  }
  return op;
}

inline FDSolution solve_backward_1d(const Problem& p, const TimeVaryingDomain& dom, const FDGrid& grid) {
  if (dom.dim() != 1) throw DomainError("solve_backward_1d needs a 1D domain");
  if (dom.has_cavity()) throw DomainError("1D oracle supports cylindrical domains only");
  if (grid.n_space < 2 || grid.n_time < 1) throw ConfigError("FD grid too small");
  const double T = p.horizon;
  const auto& base = dom.base();
  const int N = grid.n_space;
  const double a = base.center()[0] - base.radius();
  const double h = 2.0 * base.radius() / N;
  std::vector<double> x(static_cast<std::size_t>(N + 1));
  for (int i = 0; i <= N; ++i) x[static_cast<std::size_t>(i)] = a + h * i;

  FDSolution sol;
  sol.dim = 1;
  sol.horizon = T;
  sol.n_time = grid.n_time;
  sol.nodes = x;
  sol.center = base.center();
  sol.stored_levels = detail::stored_level_set(grid, T);
  sol.levels.resize(sol.stored_levels.size());
  sol.boundary.resize(static_cast<std::size_t>(grid.n_time + 1));

  const double k = T / grid.n_time;
  std::vector<double> w(x.size());
  Operator1D op_now = assemble_1d(p, dom, x, T);
  for (std::size_t i = 0; i < x.size(); ++i) w[i] = op_now.dirichlet[i] ? 0.0 : p.data.h(T, make_vec({x[i]}));

  auto record = [&](int level) {
    // level counts t upward: t = level * k; tau-step n maps to level n_time - n.
    sol.boundary[static_cast<std::size_t>(level)] = {w.front(), w.back()};
    for (double v : w) sol.sup_abs = std::max(sol.sup_abs, std::abs(v));
    auto it = std::find(sol.stored_levels.begin(), sol.stored_levels.end(), level);
    if (it != sol.stored_levels.end()) sol.levels[static_cast<std::size_t>(it - sol.stored_levels.begin())] = w;
  };
  record(grid.n_time);

  const bool tdep = detail::problem_time_dependent(p);
  Operator1D op_a = op_now;
  for (int n = 0; n < grid.n_time; ++n) {
    std::vector<detail::SubStep> plan;
    if (n == 0) plan.assign(4, {1.0, 0.25});
    else plan = {{0.5, 1.0}};
    double tau = n * k;
    for (const auto& sub : plan) {
      const double dk = sub.frac * k;
      const double t_old = T - tau, t_new = T - (tau + dk);
      const Operator1D& A_old = op_a;
      Operator1D A_new = tdep ? assemble_1d(p, dom, x, std::max(t_new, 0.0)) : op_a;
      const std::size_t m = x.size();
      std::vector<double> lo(m), di(m), up(m), rhs(m);
      for (std::size_t i = 0; i < m; ++i) {
        if (A_new.dirichlet[i]) {
          di[i] = 1.0;
          rhs[i] = 0.0;
          continue;
        }
        const double th = sub.theta;
        double explicit_part = A_old.diag[i] * w[i];
        if (i > 0) explicit_part += A_old.sub[i] * w[i - 1];
        if (i + 1 < m) explicit_part += A_old.sup[i] * w[i + 1];
        rhs[i] = w[i] + dk * ((1.0 - th) * (explicit_part + A_old.g[i]) + th * A_new.g[i]);
        di[i] = 1.0 - dk * th * A_new.diag[i];
        lo[i] = -dk * th * A_new.sub[i];
        up[i] = -dk * th * A_new.sup[i];
      }
      detail::solve_tridiagonal(lo, di, up, rhs);
      w = rhs;
      for (std::size_t i = 0; i < m; ++i)
        if (A_new.dirichlet[i]) w[i] = 0.0;
      op_a = std::move(A_new);
      tau += dk;
      (void)t_old;
    }
    record(grid.n_time - (n + 1));
  }
  return sol;
}

// ---------------------------------------------------------------------------
// 2D polar grid

namespace detail {

struct PolarLayout {
  int nr = 0, na = 0;
  double dr = 0.0, dth = 0.0, R = 0.0;
  Vec c;
  std::size_t size() const { return 1 + static_cast<std::size_t>(nr * na); }
  std::size_t idx(int i, int j) const {
    if (i == 0) return 0;
    j = ((j % na) + na) % na;
    return 1 + static_cast<std::size_t>((i - 1) * na + j);
  }
  Vec pos(int i, int j) const {
    if (i == 0) return c;
    const double r = i * dr, a = j * dth;
    return c + make_vec({r * std::cos(a), r * std::sin(a)});
  }
};

// Fraction along P->Q where the segment enters the closed ball (c, r).
inline double cut_fraction(const Vec& P, const Vec& Q, const Vec& c, double r) {
  const Vec d = Q - P;
  const Vec f = P - c;
  const double a = d.squaredNorm(), b = 2.0 * f.dot(d), cc = f.squaredNorm() - r * r;
  const double disc = b * b - 4.0 * a * cc;
  if (disc < 0.0 || a == 0.0) return 1.0;
  const double lam = (-b - std::sqrt(disc)) / (2.0 * a);
  return std::clamp(lam, 1e-3, 1.0);
}

struct Operator2D {
  Eigen::SparseMatrix<double> K;
  Eigen::VectorXd g;
  std::vector<char> pinned;  // Dirichlet (boundary or cavity) nodes
};

inline Operator2D assemble_2d(const Problem& p, const TimeVaryingDomain& dom, const PolarLayout& L, double t) {
  const auto& k = p.coeffs;
  const auto& base = dom.base();
  const std::size_t n = L.size();
  Operator2D op;
  op.g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  op.pinned.assign(n, 0);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(n * 7);

  const auto [cc, cr] = dom.cavity().at(t);
  const bool cav = dom.has_cavity() && cr > 0.0;
  auto masked = [&](int i, int j) { return cav && (L.pos(i, j) - cc).norm() <= cr; };

  for (int j = 0; j < L.na; ++j) {
    const BoundaryClass cls = base.boundary_class(L.pos(L.nr, j));
    if (cls != BoundaryClass::Robin) op.pinned[L.idx(L.nr, j)] = 1;
  }
  for (int i = 0; i <= L.nr; ++i)
    for (int j = 0; j < (i == 0 ? 1 : L.na); ++j)
      if (masked(i, j)) op.pinned[L.idx(i, j)] = 1;

  auto alpha = [&](const Vec& x) { return k.A(0, 0)(t, x); };
  auto avec = [&](const Vec& x) { return k.a_vec.eval(t, x); };

  // Adds a flux leaving cell P through a face of the given length towards
  // neighbour Q at distance d along unit direction e (from P to Q):
  // flux_out = -(alpha (u_Q - u_P)/d + a.e (u_P + u_Q)/2), with the cut-face
  // rule when Q is pinned inside the cavity.
  auto add_face = [&](std::size_t P, const Vec& xp, int qi, int qj, double len, double vol) {
    const std::size_t Q = L.idx(qi, qj);
    const Vec xq = L.pos(qi, qj);
    const Vec mid = 0.5 * (xp + xq);
    const double d = (xq - xp).norm();
    const Vec e = (xq - xp) / d;
    const double al = alpha(mid);
    const double an = avec(mid).dot(e);
    const double s = len / vol;
    if (op.pinned[Q] && masked(qi, qj)) {
      const double th = cut_fraction(xp, xq, cc, cr);
      // u = 0 on the interface at distance th*d; face value interpolated.
      const double uface = th >= 0.5 ? 1.0 - 0.5 / th : 0.0;
      trip.emplace_back(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(P), s * (-al / (th * d) + an * uface));
      return;
    }
    trip.emplace_back(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(P), s * (-al / d + 0.5 * an));
    trip.emplace_back(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(Q), s * (al / d + 0.5 * an));
  };

  // Centre node.
  {
    const std::size_t P = 0;
    if (!op.pinned[P]) {
      const Vec xp = L.c;
      const double vol = kPi * 0.25 * L.dr * L.dr;
      for (int j = 0; j < L.na; ++j) add_face(P, xp, 1, j, 0.5 * L.dr * L.dth, vol);
      // b.grad u from the first ring, zero-order and source terms.
      const Vec b = k.b_vec.eval(t, xp);
      for (int j = 0; j < L.na; ++j) {
        const Vec e = make_vec({std::cos(j * L.dth), std::sin(j * L.dth)});
        const double wgt = 2.0 / (L.na * L.dr) * b.dot(e);
        if (!masked(1, j)) trip.emplace_back(0, static_cast<Eigen::Index>(L.idx(1, j)), -wgt);
      }
      trip.emplace_back(0, 0, -k.a_scal(t, xp));
      op.g[0] = -p.data.f(t, xp);
    }
  }
  for (int i = 1; i <= L.nr; ++i) {
    const double r = i * L.dr;
    const double r_in = r - 0.5 * L.dr;
    const double r_out = std::min(r + 0.5 * L.dr, L.R);
    const double vol = 0.5 * (r_out * r_out - r_in * r_in) * L.dth;
    for (int j = 0; j < L.na; ++j) {
      const std::size_t P = L.idx(i, j);
      if (op.pinned[P]) continue;
      const Vec xp = L.pos(i, j);
      // radial faces
      add_face(P, xp, i - 1, j, r_in * L.dth, vol);
      if (i < L.nr) add_face(P, xp, i + 1, j, r_out * L.dth, vol);
      // angular faces
      add_face(P, xp, i, j + 1, r_out - r_in, vol);
      add_face(P, xp, i, j - 1, r_out - r_in, vol);
      if (i == L.nr) {
        // Robin face at r = R: outward flux (A grad u + a u).e_r = -sigma u - psi.
        const double sigma = k.sigma_rob(t, xp);
        const double psi = p.data.psi(t, xp);
        const double s = L.R * L.dth / vol;
        trip.emplace_back(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(P), -s * sigma);
        op.g[static_cast<Eigen::Index>(P)] += -s * psi;
      }
      // - b.grad u
      const Vec b = k.b_vec.eval(t, xp);
      const Vec er = make_vec({std::cos(j * L.dth), std::sin(j * L.dth)});
      const Vec et = make_vec({-std::sin(j * L.dth), std::cos(j * L.dth)});
      const double br = b.dot(er), bt = b.dot(et);
      auto add_val = [&](int qi, int qj, double coef) {
        if (coef == 0.0) return;
        const std::size_t Q = L.idx(qi, qj);
        if (op.pinned[Q]) return;
        trip.emplace_back(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(Q), coef);
      };
      if (br != 0.0) {
        if (i < L.nr) {
          add_val(i + 1, j, -br / (2 * L.dr));
          add_val(i - 1, i == 1 ? 0 : j, br / (2 * L.dr));
        } else {
          add_val(i, j, -br / L.dr);
          add_val(i - 1, j, br / L.dr);
        }
      }
      if (bt != 0.0) {
        add_val(i, j + 1, -bt / (2 * r * L.dth));
        add_val(i, j - 1, bt / (2 * r * L.dth));
      }
      trip.emplace_back(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(P), -k.a_scal(t, xp));
      op.g[static_cast<Eigen::Index>(P)] += -p.data.f(t, xp);
    }
  }
  op.K.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  op.K.setFromTriplets(trip.begin(), trip.end());
  return op;
}

}  // namespace detail

inline void require_isotropic(const CoefficientSet& k) {
  const std::string diag = k.A(0, 0).to_string();
  for (int i = 0; i < k.dim(); ++i)
    for (int j = 0; j < k.dim(); ++j) {
      if (i == j && k.A(i, j).to_string() != diag) throw ConfigError("2D oracle needs A = alpha(t,x) I");
      if (i != j && !k.A(i, j).is_zero()) throw ConfigError("2D oracle needs A = alpha(t,x) I");
    }
}

inline FDSolution solve_backward_2d(const Problem& p, const TimeVaryingDomain& dom, const FDGrid& grid) {
  if (dom.dim() != 2 || dom.base().shape() != Shape::Disk) throw DomainError("solve_backward_2d needs a disk");
  if (dom.has_cavity() && !(dom.cavity_clearance() > 0.0)) throw DomainError("cavity touches or crosses Gamma");
  require_isotropic(p.coeffs);
  if (grid.n_space < 2 || grid.n_angle < 8 || grid.n_time < 1) throw ConfigError("FD grid too small");
  const double T = p.horizon;
  detail::PolarLayout L;
  L.nr = grid.n_space;
  L.na = grid.n_angle;
  L.R = dom.base().radius();
  L.dr = L.R / L.nr;
  L.dth = kTwoPi / L.na;
  L.c = dom.base().center();
  const std::size_t n = L.size();

  FDSolution sol;
  sol.dim = 2;
  sol.horizon = T;
  sol.n_time = grid.n_time;
  sol.center = L.c;
  for (int i = 0; i <= L.nr; ++i) sol.nodes.push_back(i * L.dr);
  for (int j = 0; j < L.na; ++j) sol.angles.push_back(j * L.dth);
  sol.stored_levels = detail::stored_level_set(grid, T);
  sol.levels.resize(sol.stored_levels.size());
  sol.boundary.resize(static_cast<std::size_t>(grid.n_time + 1));

  const double k = T / grid.n_time;
  const bool tdep = detail::problem_time_dependent(p);
  const bool moving = dom.has_cavity() && !dom.cavity().is_static();

  detail::Operator2D op_old = detail::assemble_2d(p, dom, L, T);
  Eigen::VectorXd w(static_cast<Eigen::Index>(n));
  for (int i = 0; i <= L.nr; ++i)
    for (int j = 0; j < (i == 0 ? 1 : L.na); ++j) {
      const std::size_t P = L.idx(i, j);
      w[static_cast<Eigen::Index>(P)] = op_old.pinned[P] ? 0.0 : p.data.h(T, L.pos(i, j));
    }

  auto record = [&](int level) {
    std::vector<double> ring(static_cast<std::size_t>(L.na));
    for (int j = 0; j < L.na; ++j) ring[static_cast<std::size_t>(j)] = w[static_cast<Eigen::Index>(L.idx(L.nr, j))];
    sol.boundary[static_cast<std::size_t>(level)] = std::move(ring);
    sol.sup_abs = std::max(sol.sup_abs, w.cwiseAbs().maxCoeff());
    auto it = std::find(sol.stored_levels.begin(), sol.stored_levels.end(), level);
    if (it != sol.stored_levels.end())
      sol.levels[static_cast<std::size_t>(it - sol.stored_levels.begin())] = std::vector<double>(w.data(), w.data() + w.size());
  };
  record(grid.n_time);

  Eigen::SparseMatrix<double> I(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  I.setIdentity();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  double factored_key = -1.0;  // (theta * dk) of the cached factorization

  auto system = [&](const detail::Operator2D& op, double th, double dk) {
    Eigen::SparseMatrix<double> M = I - (th * dk) * op.K;
    // pinned rows become identity
    for (Eigen::Index c = 0; c < M.outerSize(); ++c)
      for (Eigen::SparseMatrix<double>::InnerIterator it(M, c); it; ++it)
        if (op.pinned[static_cast<std::size_t>(it.row())]) it.valueRef() = it.row() == it.col() ? 1.0 : 0.0;
    M.prune(0.0);
    return M;
  };

  for (int step = 0; step < grid.n_time; ++step) {
    std::vector<detail::SubStep> plan;
    if (step == 0) plan.assign(4, {1.0, 0.25});
    else plan = {{0.5, 1.0}};
    double tau = step * k;
    for (const auto& sub : plan) {
      const double dk = sub.frac * k;
      const double t_new = std::max(T - (tau + dk), 0.0);
      const bool rebuild = tdep || moving;
      detail::Operator2D op_new = rebuild ? detail::assemble_2d(p, dom, L, t_new) : op_old;
      Eigen::VectorXd rhs = w + dk * ((1.0 - sub.theta) * (op_old.K * w + op_old.g) + sub.theta * op_new.g);
      for (std::size_t i = 0; i < n; ++i)
        if (op_new.pinned[i]) rhs[static_cast<Eigen::Index>(i)] = 0.0;
      const double key = sub.theta * dk;
      if (rebuild) {
        // Matrix changes every step: preconditioned BiCGSTAB warm-started from w.
        Eigen::SparseMatrix<double, Eigen::RowMajor> M = system(op_new, sub.theta, dk);
        Eigen::BiCGSTAB<Eigen::SparseMatrix<double, Eigen::RowMajor>, Eigen::IncompleteLUT<double>> it;
        it.preconditioner().setFillfactor(4);
        it.setTolerance(1e-12);
        it.compute(M);
        Eigen::VectorXd guess = w;
        w = it.solveWithGuess(rhs, guess);
        if (it.info() != Eigen::Success) throw SolverError("BiCGSTAB did not converge");
      } else {
        if (key != factored_key) {
          lu.compute(system(op_new, sub.theta, dk));
          if (lu.info() != Eigen::Success) throw SolverError("sparse LU factorization failed");
          factored_key = key;
        }
        w = lu.solve(rhs);
        if (lu.info() != Eigen::Success) throw SolverError("sparse solve failed");
      }
      for (std::size_t i = 0; i < n; ++i)
        if (op_new.pinned[i]) w[static_cast<Eigen::Index>(i)] = 0.0;
      op_old = std::move(op_new);
      tau += dk;
    }
    record(grid.n_time - (step + 1));
  }
  return sol;
}

/// Dispatches on the domain dimension.
inline FDSolution solve_backward(const Problem& p, const TimeVaryingDomain& dom, const FDGrid& grid) {
  return dom.dim() == 1 ? solve_backward_1d(p, dom, grid) : solve_backward_2d(p, dom, grid);
}

/// Observation set on the Robin part: times x boundary locations.
/// 1D: locations are endpoint indices (0 lower, 1 upper); 2D: angles.
struct ObservationSpec {
  std::vector<double> times;
  std::vector<double> locations;
};

/// Boundary values at every (time, location) pair, time-major.
inline Eigen::MatrixXd trace_on_observation(const FDSolution& sol, const TimeVaryingDomain& dom,
                                            const ObservationSpec& spec) {
  const auto& base = dom.base();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(spec.times.size()), static_cast<Eigen::Index>(spec.locations.size()));
  for (std::size_t b = 0; b < spec.locations.size(); ++b) {
    Vec xb;
    if (base.dim() == 1) xb = make_vec({spec.locations[b] < 0.5 ? base.center()[0] - base.radius()
                                                                : base.center()[0] + base.radius()});
    else xb = base.boundary_point(spec.locations[b]);
    if (base.boundary_class(xb) != BoundaryClass::Robin) throw DomainError("observation point is not on the Robin part");
  }
  for (std::size_t a = 0; a < spec.times.size(); ++a)
    for (std::size_t b = 0; b < spec.locations.size(); ++b)
      out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = sol.boundary_value(spec.times[a], spec.locations[b]);
  return out;
}

inline double sup_norm(const FDSolution& sol) { return sol.sup_abs; }

}  // namespace robinmc
