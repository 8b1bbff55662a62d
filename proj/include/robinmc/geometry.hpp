#pragma once

// Fixed smooth domains (interval, disk, ball) with a Robin/Dirichlet
// dissection of their boundary, and the time-varying domain obtained by
// removing a moving closed ball (the cavity).

#include "robinmc/core.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace robinmc {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

enum class BoundaryClass { Robin, DirichletFixed, Pi, Interior };

inline const char* to_string(BoundaryClass c) {
  switch (c) {
    case BoundaryClass::Robin: return "Robin";
    case BoundaryClass::DirichletFixed: return "DirichletFixed";
    case BoundaryClass::Pi: return "Pi";
    case BoundaryClass::Interior: return "Interior";
  }
  return "?";
}

enum class Shape { Interval, Disk, Ball };

/// Angle reduced to [0, 2pi).
inline double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  return a < 0.0 ? a + kTwoPi : a;
}

struct Arc {
  double start;  // radians
  double length;  // radians, in (0, 2pi]
  bool contains(double angle) const { return wrap_angle(angle - start) <= length; }
  double end() const { return start + length; }
};

/// Boundary split. Interval: one class per endpoint. Disk: Robin arcs, the
/// rest is fixed Dirichlet. Ball: Robin spherical cap around `cap_axis`.
struct Dissection {
  bool left_robin = true;   // interval, lower endpoint
  bool right_robin = false; // interval, upper endpoint
  std::vector<Arc> robin_arcs;
  Vec cap_axis;
  double cap_half_angle = kPi;  // radians; pi means the whole sphere is Robin
};

class FixedDomain {
public:
  static FixedDomain interval(double a, double b, bool left_robin, bool right_robin) {
    if (!(b > a)) throw DomainError("interval needs a < b");
    FixedDomain d(Shape::Interval, make_vec({0.5 * (a + b)}), 0.5 * (b - a));
    d.dissection_.left_robin = left_robin;
    d.dissection_.right_robin = right_robin;
    return d;
  }
  static FixedDomain disk(const Vec& center, double radius, std::vector<Arc> robin_arcs) {
    if (center.size() != 2 || !(radius > 0)) throw DomainError("disk needs a 2D center and positive radius");
    FixedDomain d(Shape::Disk, center, radius);
    for (auto& a : robin_arcs) {
      if (!(a.length > 0.0) || a.length > kTwoPi) throw DomainError("arc length must lie in (0, 2pi]");
      a.start = wrap_angle(a.start);
    }
    std::sort(robin_arcs.begin(), robin_arcs.end(), [](const Arc& x, const Arc& y) { return x.start < y.start; });
    for (std::size_t i = 0; i + 1 < robin_arcs.size(); ++i)
      if (robin_arcs[i].end() >= robin_arcs[i + 1].start) throw DomainError("Robin arcs overlap or touch");
    if (robin_arcs.size() > 1 && robin_arcs.back().end() >= robin_arcs.front().start + kTwoPi)
      throw DomainError("Robin arcs overlap or touch");
    d.dissection_.robin_arcs = std::move(robin_arcs);
    return d;
  }
  static FixedDomain ball(const Vec& center, double radius, const Vec& cap_axis, double cap_half_angle) {
    if (center.size() != 3 || !(radius > 0)) throw DomainError("ball needs a 3D center and positive radius");
    if (cap_axis.size() != 3 || cap_axis.norm() == 0.0) throw DomainError("ball cap axis must be a nonzero 3-vector");
    if (cap_half_angle < 0.0 || cap_half_angle > kPi) throw DomainError("cap half-angle must lie in [0, pi]");
    FixedDomain d(Shape::Ball, center, radius);
    d.dissection_.cap_axis = cap_axis.normalized();
    d.dissection_.cap_half_angle = cap_half_angle;
    return d;
  }

  Shape shape() const noexcept { return shape_; }
  int dim() const noexcept { return static_cast<int>(center_.size()); }
  const Vec& center() const noexcept { return center_; }
  double radius() const noexcept { return radius_; }
  const Dissection& dissection() const noexcept { return dissection_; }
  double tubular_width() const noexcept { return tubular_width_; }
  double tol_pi() const noexcept { return tol_pi_; }
  void set_tubular_width(double w) {
    if (!(w > 0.0)) throw DomainError("tubular width must be positive");
    tubular_width_ = w;
  }
  void set_tol_pi(double tol) { tol_pi_ = tol; }

  /// Signed distance to the boundary, positive inside.
  double phi(const Vec& x) const { return radius_ - (x - center_).norm(); }

  /// Inward unit normal at the boundary point nearest to x.
  Vec inward_normal(const Vec& x) const {
    Vec r = x - center_;
    const double len = r.norm();
    if (len == 0.0) {
      Vec n = Vec::Zero(dim());
      n[0] = -1.0;
      return n;
    }
    return -r / len;
  }

  Vec nearest_boundary_point(const Vec& x) const { return center_ - radius_ * inward_normal(x); }

  /// Boundary point at the given (disk) angle.
  Vec boundary_point(double angle) const {
    Vec p(2);
    p << center_[0] + radius_ * std::cos(angle), center_[1] + radius_ * std::sin(angle);
    return p;
  }

  bool has_pi() const {
    switch (shape_) {
      case Shape::Interval: return false;
      case Shape::Disk:
        return !dissection_.robin_arcs.empty() &&
               !(dissection_.robin_arcs.size() == 1 && dissection_.robin_arcs[0].length >= kTwoPi);
      case Shape::Ball: return dissection_.cap_half_angle > 0.0 && dissection_.cap_half_angle < kPi;
    }
    return false;
  }

  bool has_fixed_dirichlet() const {
    switch (shape_) {
      case Shape::Interval: return !dissection_.left_robin || !dissection_.right_robin;
      case Shape::Disk:
        return dissection_.robin_arcs.empty() || dissection_.robin_arcs.size() > 1 ||
               dissection_.robin_arcs[0].length < kTwoPi;
      case Shape::Ball: return dissection_.cap_half_angle < kPi;
    }
    return false;
  }

  /// Euclidean distance from x to the border set Pi (infinite when empty).
  double dist_to_pi(const Vec& x) const {
    if (!has_pi()) return kInf;
    if (shape_ == Shape::Disk) {
      double best = kInf;
      for (const auto& a : dissection_.robin_arcs) {
        best = std::min(best, (x - boundary_point(a.start)).norm());
        best = std::min(best, (x - boundary_point(a.end())).norm());
      }
      return best;
    }
    const auto [rho, z] = cap_coordinates(x);
    const double alpha = dissection_.cap_half_angle;
    return std::hypot(rho - radius_ * std::sin(alpha), z - radius_ * std::cos(alpha));
  }

  /// Class of a point on the boundary (x assumed on Gamma).
  BoundaryClass boundary_class(const Vec& x) const {
    switch (shape_) {
      case Shape::Interval: {
        const bool left = x[0] < center_[0];
        return (left ? dissection_.left_robin : dissection_.right_robin) ? BoundaryClass::Robin
                                                                         : BoundaryClass::DirichletFixed;
      }
      case Shape::Disk: {
        const double ang = std::atan2(x[1] - center_[1], x[0] - center_[0]);
        bool robin = false;
        for (const auto& a : dissection_.robin_arcs) {
          if (a.length < kTwoPi) {
            const double d0 = std::abs(std::remainder(ang - a.start, kTwoPi));
            const double d1 = std::abs(std::remainder(ang - a.end(), kTwoPi));
            if (radius_ * std::min(d0, d1) <= tol_pi_) return BoundaryClass::Pi;
          }
          robin = robin || a.contains(ang);
        }
        return robin ? BoundaryClass::Robin : BoundaryClass::DirichletFixed;
      }
      case Shape::Ball: {
        const double polar = polar_angle(x);
        const double alpha = dissection_.cap_half_angle;
        if (has_pi() && radius_ * std::abs(polar - alpha) <= tol_pi_) return BoundaryClass::Pi;
        return polar < alpha || alpha >= kPi ? BoundaryClass::Robin : BoundaryClass::DirichletFixed;
      }
    }
    return BoundaryClass::Interior;
  }

  /// Distance from x to the closed fixed-Dirichlet part of the boundary.
  double dist_to_fixed_dirichlet(const Vec& x) const {
    if (!has_fixed_dirichlet()) return kInf;
    const double r = (x - center_).norm();
    switch (shape_) {
      case Shape::Interval: {
        double best = kInf;
        if (!dissection_.left_robin) best = std::min(best, std::abs(x[0] - (center_[0] - radius_)));
        if (!dissection_.right_robin) best = std::min(best, std::abs(x[0] - (center_[0] + radius_)));
        return best;
      }
      case Shape::Disk: {
        double best = kInf;
        const double ang = r > 0 ? std::atan2(x[1] - center_[1], x[0] - center_[0]) : 0.0;
        for (const auto& a : dirichlet_arcs()) {
          if (r > 0 && a.contains(ang)) best = std::min(best, std::abs(r - radius_));
          else if (r == 0) best = std::min(best, radius_);
          best = std::min(best, (x - boundary_point(a.start)).norm());
          best = std::min(best, (x - boundary_point(a.end())).norm());
        }
        return best;
      }
      case Shape::Ball: {
        if (r == 0) return radius_;
        const double alpha = dissection_.cap_half_angle;
        if (polar_angle(x) >= alpha) return std::abs(r - radius_);
        const auto [rho, z] = cap_coordinates(x);
        return std::hypot(rho - radius_ * std::sin(alpha), z - radius_ * std::cos(alpha));
      }
    }
    return kInf;
  }

  /// Closed arcs making up the fixed-Dirichlet part of a disk boundary.
  std::vector<Arc> dirichlet_arcs() const {
    std::vector<Arc> out;
    const auto& robin = dissection_.robin_arcs;
    if (robin.empty()) return {Arc{0.0, kTwoPi}};
    for (std::size_t i = 0; i < robin.size(); ++i) {
      const double gap_start = robin[i].end();
      const double next = i + 1 < robin.size() ? robin[i + 1].start : robin[0].start + kTwoPi;
      if (next > gap_start) out.push_back(Arc{wrap_angle(gap_start), next - gap_start});
    }
    return out;
  }

  /// Polar angle of x relative to the cap axis (ball only).
  double polar_angle(const Vec& x) const {
    const Vec r = x - center_;
    const double len = r.norm();
    if (len == 0.0) return 0.0;
    return std::acos(std::clamp(r.dot(dissection_.cap_axis) / len, -1.0, 1.0));
  }

private:
  FixedDomain(Shape s, Vec center, double radius)
      : shape_(s), center_(std::move(center)), radius_(radius), tubular_width_(0.5 * radius) {}

  std::pair<double, double> cap_coordinates(const Vec& x) const {
    const Vec r = x - center_;
    const double z = r.dot(dissection_.cap_axis);
    const double rho = (r - z * dissection_.cap_axis).norm();
    return {rho, z};
  }

  Shape shape_;
  Vec center_;
  double radius_;
  Dissection dissection_;
  double tubular_width_;
  double tol_pi_ = 1e-9;
};

struct CavityKeyframe {
  double t;
  Vec center;
  double radius;
};

/// Closed ball K(t) whose center and radius are piecewise linear in t.
class Cavity {
public:
  Cavity() = default;
  explicit Cavity(std::vector<CavityKeyframe> frames) : frames_(std::move(frames)) {
    std::sort(frames_.begin(), frames_.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
    for (std::size_t i = 0; i + 1 < frames_.size(); ++i) {
      if (frames_[i + 1].t == frames_[i].t) throw DomainError("duplicate cavity keyframe time");
      const double dt = frames_[i + 1].t - frames_[i].t;
      lip_center_ = std::max(lip_center_, (frames_[i + 1].center - frames_[i].center).norm() / dt);
      lip_radius_ = std::max(lip_radius_, std::abs(frames_[i + 1].radius - frames_[i].radius) / dt);
    }
    for (const auto& f : frames_)
      if (f.radius < 0.0) throw DomainError("cavity radius must be nonnegative");
  }

  bool empty() const noexcept {
    return std::all_of(frames_.begin(), frames_.end(), [](const auto& f) { return f.radius == 0.0; });
  }
  bool is_static() const noexcept {
    for (std::size_t i = 1; i < frames_.size(); ++i)
      if (frames_[i].radius != frames_[0].radius || frames_[i].center != frames_[0].center) return false;
    return true;
  }
  const std::vector<CavityKeyframe>& keyframes() const noexcept { return frames_; }
  double center_lipschitz() const noexcept { return lip_center_; }
  double radius_lipschitz() const noexcept { return lip_radius_; }

  std::pair<Vec, double> at(double t) const {
    if (frames_.empty()) return {Vec(), 0.0};
    if (t <= frames_.front().t) return {frames_.front().center, frames_.front().radius};
    if (t >= frames_.back().t) return {frames_.back().center, frames_.back().radius};
    auto it = std::upper_bound(frames_.begin(), frames_.end(), t, [](double v, const auto& f) { return v < f.t; });
    const auto& b = *it;
    const auto& a = *(it - 1);
    const double w = (t - a.t) / (b.t - a.t);
    return {(1.0 - w) * a.center + w * b.center, (1.0 - w) * a.radius + w * b.radius};
  }

private:
  std::vector<CavityKeyframe> frames_;
  double lip_center_ = 0.0;
  double lip_radius_ = 0.0;
};

/// D(t) = Omega \ K(t) on [0, T], with Dirichlet parts Sigma_1 = [0,T] x Gamma''
/// and Sigma_2 = the lateral surface of the cavity.
class TimeVaryingDomain {
public:
  TimeVaryingDomain(FixedDomain base, Cavity cavity, double horizon, double margin = 0.0)
      : base_(std::move(base)), cavity_(std::move(cavity)), horizon_(horizon), margin_(margin) {
    if (!(horizon_ > 0.0)) throw DomainError("time horizon must be positive");
    for (const auto& f : cavity_.keyframes()) {
      if (f.center.size() != base_.dim()) throw DomainError("cavity center dimension mismatch");
      if (f.radius == 0.0) continue;
      if (base_.dim() == 1) throw DomainError("a 1D cavity would disconnect D(t); only r = 0 is allowed in 1D");
      const double gap = base_.phi(f.center) - f.radius;
      if (gap < margin_ || gap <= 0.0)
        throw DomainError("cavity at t=" + std::to_string(f.t) + " is closer than the margin to the boundary");
    }
  }

  const FixedDomain& base() const noexcept { return base_; }
  const Cavity& cavity() const noexcept { return cavity_; }
  double horizon() const noexcept { return horizon_; }
  double margin() const noexcept { return margin_; }
  int dim() const noexcept { return base_.dim(); }
  bool has_cavity() const noexcept { return !cavity_.empty(); }

  /// Smallest distance between K(t) and Gamma over all t. Exact for ball
  /// domains: the gap is concave along each linear keyframe segment.
  double cavity_clearance() const {
    double best = kInf;
    for (const auto& f : cavity_.keyframes())
      if (f.radius > 0.0) best = std::min(best, base_.phi(f.center) - f.radius);
    return best;
  }

  bool in_cavity(double t, const Vec& x) const {
    if (!has_cavity()) return false;
    const auto [c, r] = cavity_.at(t);
    return r > 0.0 && (x - c).norm() <= r;
  }

  /// Signed distance to the cavity surface (positive outside K(t)).
  double cavity_gap(double t, const Vec& x) const {
    if (!has_cavity()) return kInf;
    const auto [c, r] = cavity_.at(t);
    if (r == 0.0) return kInf;
    return (x - c).norm() - r;
  }

  BoundaryClass classify_point(double /*t*/, const Vec& x) const {
    const double ph = base_.phi(x);
    if (ph < -base_.tol_pi()) throw DomainError("point outside the closure of Omega");
    if (ph > base_.tol_pi()) return BoundaryClass::Interior;
    return base_.boundary_class(x);
  }

  bool inside(double t, const Vec& x) const { return base_.phi(x) > 0.0 && !in_cavity(t, x); }

  /// (phi_Omega, inward normal) at x; x may lie outside Omega only within the collar.
  std::pair<double, Vec> signed_distance_and_normal(const Vec& x) const {
    const double ph = base_.phi(x);
    if (ph < -base_.tubular_width()) throw CollarError("point lies deeper outside than the tubular collar");
    return {ph, base_.inward_normal(x)};
  }

  double dist_to_dirichlet(double t, const Vec& x) const {
    double d = base_.dist_to_fixed_dirichlet(x);
    if (has_cavity()) {
      const auto [c, r] = cavity_.at(t);
      if (r > 0.0) d = std::min(d, std::abs((x - c).norm() - r));
    }
    return d;
  }

  bool dirichlet_nonempty() const { return base_.has_fixed_dirichlet() || has_cavity(); }

private:
  FixedDomain base_;
  Cavity cavity_;
  double horizon_;
  double margin_;
};

struct HausdorffSampling {
  int points_per_component = 256;
  int time_steps = 128;
};

namespace detail {

inline std::vector<Vec> sphere_samples(const Vec& c, double r, int n) {
  std::vector<Vec> out;
  const int dim = static_cast<int>(c.size());
  if (dim == 1) {
    out.push_back(c - make_vec({r}));
    out.push_back(c + make_vec({r}));
  } else if (dim == 2) {
    for (int k = 0; k < n; ++k) {
      const double a = kTwoPi * k / n;
      out.push_back(c + r * make_vec({std::cos(a), std::sin(a)}));
    }
  } else {
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (int k = 0; k < n; ++k) {
      const double z = 1.0 - 2.0 * (k + 0.5) / n;
      const double rho = std::sqrt(1.0 - z * z);
      out.push_back(c + r * make_vec({rho * std::cos(golden * k), rho * std::sin(golden * k), z}));
    }
  }
  return out;
}

// Spatial samples of the closed fixed-Dirichlet part of Gamma.
inline std::vector<Vec> fixed_dirichlet_samples(const FixedDomain& d, int n) {
  std::vector<Vec> out;
  if (!d.has_fixed_dirichlet()) return out;
  switch (d.shape()) {
    case Shape::Interval:
      if (!d.dissection().left_robin) out.push_back(make_vec({d.center()[0] - d.radius()}));
      if (!d.dissection().right_robin) out.push_back(make_vec({d.center()[0] + d.radius()}));
      break;
    case Shape::Disk:
      for (const auto& a : d.dirichlet_arcs())
        for (int k = 0; k < n; ++k) out.push_back(d.boundary_point(a.start + a.length * k / std::max(n - 1, 1)));
      break;
    case Shape::Ball:
      for (const auto& p : sphere_samples(d.center(), d.radius(), 4 * n))
        if (d.polar_angle(p) >= d.dissection().cap_half_angle) out.push_back(p);
      break;
  }
  return out;
}

}  // namespace detail

/// Directed sampled distance sup_{a in A} d(a, B) between space-time Dirichlet sets.
inline double directed_hausdorff(const TimeVaryingDomain& a, const TimeVaryingDomain& b,
                                 const HausdorffSampling& s) {
  const int nt = std::max(s.time_steps, 2);
  const double ta = a.horizon(), tb = b.horizon();
  const auto fixed = detail::fixed_dirichlet_samples(a.base(), s.points_per_component);
  double worst = 0.0;
  auto dist_to_b = [&](double t, const Vec& x) {
    // Scan B's time levels outward from the nearest one; stop once the time
    // offset alone exceeds the best distance found.
    const int k0 = std::clamp(static_cast<int>(std::lround(t / tb * (nt - 1))), 0, nt - 1);
    double best = kInf;
    for (int off = 0; off < nt; ++off) {
      bool any = false;
      for (int k : {k0 - off, k0 + off}) {
        if (k < 0 || k >= nt || (off == 0 && k != k0)) continue;
        const double tp = tb * k / (nt - 1);
        if (std::abs(t - tp) >= best) continue;
        any = true;
        best = std::min(best, std::hypot(t - tp, b.dist_to_dirichlet(tp, x)));
      }
      if (!any && off > 0 && std::abs(t - tb * std::max(k0 - off, 0) / (nt - 1)) >= best &&
          std::abs(t - tb * std::min(k0 + off, nt - 1) / (nt - 1)) >= best)
        break;
    }
    return best;
  };
  for (int i = 0; i < nt; ++i) {
    const double t = ta * i / (nt - 1);
    std::vector<Vec> pts = fixed;
    if (a.has_cavity()) {
      const auto [c, r] = a.cavity().at(t);
      if (r > 0.0)
        for (auto& p : detail::sphere_samples(c, r, s.points_per_component)) pts.push_back(std::move(p));
    }
    for (const auto& p : pts) worst = std::max(worst, dist_to_b(t, p));
  }
  return worst;
}

/// Symmetric Hausdorff distance between the closed space-time Dirichlet
/// parts of two domains, computed on dense samplings.
inline double hausdorff_distance(const TimeVaryingDomain& a, const TimeVaryingDomain& b,
                                 const HausdorffSampling& s = {}) {
  if (!a.dirichlet_nonempty() || !b.dirichlet_nonempty()) throw DomainError("Dirichlet part is empty");
  return std::max(directed_hausdorff(a, b, s), directed_hausdorff(b, a, s));
}

/// Worst-case sampling error of hausdorff_distance for the given domain.
inline double hausdorff_resolution(const TimeVaryingDomain& d, const HausdorffSampling& s = {}) {
  const int nt = std::max(s.time_steps, 2);
  double spatial = 0.0;
  if (d.dim() >= 2) {
    double rmax = d.base().radius();
    spatial = kTwoPi * rmax / s.points_per_component;
    if (d.dim() == 3) spatial *= 4.0;
  }
  return d.horizon() / (nt - 1) + spatial;
}

}  // namespace robinmc
