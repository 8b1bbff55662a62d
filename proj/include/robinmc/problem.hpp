#pragma once

// Divergence-form coefficients and data of the terminal-boundary problem
//
//   u_t + div(A grad u + a u) - b.grad u - a0 u = f        in D
//   -(A grad u + a u).n_in + sigma u = -psi               on the Robin part
//   u = 0 on the Dirichlet part,  u(T, .) = h,
//
// and their non-divergence / oblique-derivative rewrite
//   L = Tr(A D^2) + c.grad + c0,   B = beta.grad + gamma.

#include "robinmc/core.hpp"
#include "robinmc/expr.hpp"
#include "robinmc/geometry.hpp"
#include "robinmc/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace robinmc {

/// n x n field, row-major.
struct MatrixField {
  int n = 1;
  std::vector<Expr> entries;

  static MatrixField diagonal(const std::vector<Expr>& diag) {
    MatrixField m;
    m.n = static_cast<int>(diag.size());
    m.entries.assign(static_cast<std::size_t>(m.n * m.n), Expr::constant(0.0, m.n));
    for (int i = 0; i < m.n; ++i) m.entries[static_cast<std::size_t>(i * m.n + i)] = diag[static_cast<std::size_t>(i)];
    return m;
  }
  const Expr& operator()(int i, int j) const { return entries[static_cast<std::size_t>(i * n + j)]; }
  bool is_constant() const {
    return std::all_of(entries.begin(), entries.end(), [](const Expr& e) { return e.is_constant(); });
  }
  Mat eval(double t, const Vec& x) const {
    Mat m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = (*this)(i, j)(t, x);
    return m;
  }
};

struct VectorField {
  std::vector<Expr> comps;

  static VectorField zero(int n) { return VectorField{std::vector<Expr>(static_cast<std::size_t>(n), Expr::constant(0.0, n))}; }
  int size() const { return static_cast<int>(comps.size()); }
  const Expr& operator[](int i) const { return comps[static_cast<std::size_t>(i)]; }
  bool is_constant() const {
    return std::all_of(comps.begin(), comps.end(), [](const Expr& e) { return e.is_constant(); });
  }
  bool is_zero() const {
    return std::all_of(comps.begin(), comps.end(), [](const Expr& e) { return e.is_zero(); });
  }
  Vec eval(double t, const Vec& x) const {
    Vec v(size());
    for (int i = 0; i < size(); ++i) v[i] = comps[static_cast<std::size_t>(i)](t, x);
    return v;
  }
};

struct CoefficientSet {
  MatrixField A;
  VectorField a_vec;
  VectorField b_vec;
  Expr a_scal;
  Expr sigma_rob;
  double nu = 0.0;  // declared ellipticity constant

  int dim() const { return A.n; }

  static CoefficientSet isotropic(int n, double diffusivity) {
    CoefficientSet c;
    c.A = MatrixField::diagonal(std::vector<Expr>(static_cast<std::size_t>(n), Expr::constant(diffusivity, n)));
    c.a_vec = VectorField::zero(n);
    c.b_vec = VectorField::zero(n);
    c.a_scal = Expr::constant(0.0, n);
    c.sigma_rob = Expr::constant(0.0, n);
    c.nu = diffusivity;
    return c;
  }
};

enum class Regularity { Smooth, Lp };

struct SourceData {
  Expr f;
  Expr psi;
  Expr h;
  Regularity regularity = Regularity::Smooth;
  double p1 = 0.0, p2 = 0.0, p3 = 0.0;  // integrability exponents of the Lp class

  static SourceData zero(int n) {
    return SourceData{Expr::constant(0.0, n), Expr::constant(0.0, n), Expr::constant(0.0, n)};
  }
  bool is_zero() const { return f.is_zero() && psi.is_zero() && h.is_zero(); }
};

/// Coefficients and data on [0, T]; evaluation at t > T is frozen at T.
struct Problem {
  CoefficientSet coeffs;
  SourceData data;
  double horizon = 1.0;

  double time_extend(double t) const { return std::min(std::max(t, 0.0), horizon); }
};

/// Evaluates a field with the freezing rule t -> min(t, T).
inline double time_extend(const Expr& field, double t, double horizon, const Vec& x) {
  return field(std::min(t, horizon), x);
}

struct NonDivForm {
  MatrixField A;
  VectorField c_vec;
  Expr c_scal;
  VectorField a_vec;  // kept for gamma
  Expr sigma_rob;

  int dim() const { return A.n; }

  /// Oblique reflection direction A n_in (unnormalized conormal).
  Vec beta(double t, const Vec& xb, const Vec& n_in) const { return A.eval(t, xb) * n_in; }

  /// Zero-order boundary coefficient paired with local time.
  double gamma(double t, const Vec& xb, const Vec& n_in) const {
    return a_vec.eval(t, xb).dot(n_in) - sigma_rob(t, xb);
  }
  bool gamma_is_constant_zero() const { return sigma_rob.is_zero() && a_vec.is_zero(); }
};

/// c_i = sum_j d_j A_ij + a_i - b_i,  c0 = div a - a0,  beta = A n_in,
/// gamma = a.n_in - sigma.
inline NonDivForm to_nondivergence(const CoefficientSet& k) {
  const int n = k.dim();
  if (k.a_vec.size() != n || k.b_vec.size() != n) throw RewriteError("vector field dimension mismatch");
  NonDivForm out;
  out.A = k.A;
  out.a_vec = k.a_vec;
  out.sigma_rob = k.sigma_rob;
  out.c_vec.comps.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Expr ci = k.a_vec[i] - k.b_vec[i];
    for (int j = 0; j < n; ++j) ci = ci + k.A(i, j).derivative(j + 1);
    out.c_vec.comps.push_back(ci);
  }
  Expr div_a = Expr::constant(0.0, n);
  for (int i = 0; i < n; ++i) div_a = div_a + k.a_vec[i].derivative(i + 1);
  out.c_scal = div_a - k.a_scal;
  return out;
}

struct ValidationReport {
  bool passed = true;
  double ellipticity_margin = kInf;  // min eigenvalue of A over samples
  double declared_nu = 0.0;
  double max_asymmetry = 0.0;
  std::vector<std::pair<std::string, double>> sup_norms;
  std::vector<std::pair<std::string, double>> lipschitz_moduli;
  Regularity data_class = Regularity::Smooth;
  double cavity_clearance = kInf;
  double margin = 0.0;
  double cavity_center_lipschitz = 0.0;
  double cavity_radius_lipschitz = 0.0;
  std::vector<std::string> warnings;
  std::vector<std::string> errors;
};

namespace detail {

inline Vec sample_in_ball(const Vec& c, double r, RandomStream& rng) {
  const int n = static_cast<int>(c.size());
  Vec x(n);
  for (;;) {
    for (int i = 0; i < n; ++i) x[i] = 2.0 * rng.uniform() - 1.0;
    if (x.squaredNorm() <= 1.0) return c + r * x;
  }
}

}  // namespace detail

/// Sampled checks of ellipticity, boundedness, moduli of continuity, data
/// class and geometric margins. Ellipticity violations fail hard; the rest
/// are warnings.
inline ValidationReport validate_assumptions(const Problem& p, const TimeVaryingDomain& dom, int n_samples = 2000) {
  ValidationReport rep;
  const auto& k = p.coeffs;
  const int n = k.dim();
  rep.declared_nu = k.nu;
  if (n != dom.dim()) {
    rep.passed = false;
    rep.errors.push_back("coefficient dimension does not match the domain");
    return rep;
  }
  RandomStream rng(0x5eedULL, 0xfffffff0u, 0);
  const auto& base = dom.base();

  struct Named {
    std::string name;
    const Expr* e;
  };
  std::vector<Named> fields;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) fields.push_back({"A" + std::to_string(i + 1) + std::to_string(j + 1), &k.A(i, j)});
  for (int i = 0; i < n; ++i) fields.push_back({"a" + std::to_string(i + 1), &k.a_vec.comps[static_cast<std::size_t>(i)]});
  for (int i = 0; i < n; ++i) fields.push_back({"b" + std::to_string(i + 1), &k.b_vec.comps[static_cast<std::size_t>(i)]});
  fields.push_back({"a0", &k.a_scal});
  fields.push_back({"sigma", &k.sigma_rob});
  fields.push_back({"f", &p.data.f});
  fields.push_back({"psi", &p.data.psi});
  fields.push_back({"h", &p.data.h});

  std::vector<double> sup(fields.size(), 0.0), lip(fields.size(), 0.0);
  const double step = 1e-3 * base.radius();
  for (int s = 0; s < n_samples; ++s) {
    const double t = p.horizon * rng.uniform();
    Vec x = detail::sample_in_ball(base.center(), base.radius(), rng);
    const Mat a = k.A.eval(t, x);
    rep.max_asymmetry = std::max(rep.max_asymmetry, (a - a.transpose()).cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
    rep.ellipticity_margin = std::min(rep.ellipticity_margin, eig.eigenvalues().minCoeff());

    Vec dx(n);
    for (int i = 0; i < n; ++i) dx[i] = rng.normal();
    dx *= step / dx.norm();
    const double dt = step * (2.0 * rng.uniform() - 1.0);
    const double t2 = std::clamp(t + dt, 0.0, p.horizon);
    const double dist = std::hypot(t2 - t, step);
    for (std::size_t f = 0; f < fields.size(); ++f) {
      const double v = (*fields[f].e)(t, x);
      sup[f] = std::max(sup[f], std::abs(v));
      lip[f] = std::max(lip[f], std::abs((*fields[f].e)(t2, x + dx) - v) / dist);
    }
  }
  for (std::size_t f = 0; f < fields.size(); ++f) {
    rep.sup_norms.emplace_back(fields[f].name, sup[f]);
    rep.lipschitz_moduli.emplace_back(fields[f].name, lip[f]);
    if (!std::isfinite(sup[f])) rep.warnings.push_back("field " + fields[f].name + " is unbounded on samples");
  }

  if (rep.max_asymmetry > 1e-12) {
    rep.passed = false;
    rep.errors.push_back("diffusion matrix A is not symmetric");
  }
  if (!(rep.ellipticity_margin > 0.0) || rep.ellipticity_margin < k.nu * (1.0 - 1e-12)) {
    rep.passed = false;
    rep.errors.push_back("ellipticity violated: min eigenvalue " + std::to_string(rep.ellipticity_margin) +
                         " below nu = " + std::to_string(k.nu));
  }
  if (!(k.nu > 0.0)) {
    rep.passed = false;
    rep.errors.push_back("declared ellipticity constant nu must be positive");
  }

  const bool smooth = p.data.f.is_smooth() && p.data.psi.is_smooth() && p.data.h.is_smooth() &&
                      p.data.regularity == Regularity::Smooth;
  rep.data_class = smooth ? Regularity::Smooth : Regularity::Lp;
  if (!smooth)
    rep.warnings.push_back(
        "data are not continuous/Lipschitz; accepted under the relaxed Lp integrability class "
        "(f in L^p1, p1 > (n+2)/2; psi in L^p2, p2 > n+1; h in L^p3, p3 >= 2); computation proceeds");
  if (p.data.regularity == Regularity::Lp) {
    const double nn = n;
    if (!(p.data.p1 > (nn + 2.0) / 2.0) || !(p.data.p2 > nn + 1.0) || !(p.data.p3 >= 2.0))
      rep.warnings.push_back("declared Lp exponents do not satisfy p1 > (n+2)/2, p2 > n+1, p3 >= 2");
  }

  rep.cavity_clearance = dom.cavity_clearance();
  rep.margin = dom.margin();
  rep.cavity_center_lipschitz = dom.cavity().center_lipschitz();
  rep.cavity_radius_lipschitz = dom.cavity().radius_lipschitz();
  if (!base.has_pi()) rep.warnings.push_back("border set Pi is empty (outside the typical mixed configuration)");
  if (!dom.dirichlet_nonempty()) rep.warnings.push_back("Dirichlet part is empty");
  return rep;
}

}  // namespace robinmc
