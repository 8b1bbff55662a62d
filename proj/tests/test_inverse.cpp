#include "robinmc/inverse.hpp"

#include <gtest/gtest.h>

using namespace robinmc;

namespace {

Problem source_problem() {
  Problem p;
  p.coeffs = CoefficientSet::isotropic(2, 0.5);
  p.coeffs.sigma_rob = Expr::constant(0.5, 2);
  p.data = SourceData::zero(2);
  p.data.f = Expr::constant(-1.0, 2);
  p.horizon = 0.5;
  return p;
}

DomainParam radius_param() {
  DomainParam prm;
  prm.base = FixedDomain::disk(make_vec({0.0, 0.0}), 1.0, {Arc{0.0, kPi}});
  prm.horizon = 0.5;
  prm.names = {"r"};
  prm.center0 = make_vec({0.0, 0.3});
  prm.lo = Eigen::VectorXd::Constant(1, 0.1);
  prm.hi = Eigen::VectorXd::Constant(1, 0.5);
  return prm;
}

CostOptions coarse() {
  CostOptions o;
  o.grid.n_space = 12;
  o.grid.n_angle = 48;
  o.grid.n_time = 40;
  return o;
}

Eigen::VectorXd th(double r) { return Eigen::VectorXd::Constant(1, r); }

}  // namespace

TEST(Cost, SelfTraceGivesZero) {
  const Problem p = source_problem();
  const DomainParam prm = radius_param();
  const auto q = default_observation(prm.base, p.horizon, 8, 8);
  const CostOptions o = coarse();
  const ObservationData d = synthetic_data(p, prm.to_domain(th(0.3)), q, o.grid);
  EXPECT_EQ(cost_functional(p, prm, th(0.3), d, q, o).value, 0.0);
}

TEST(Cost, NonnegativeAndIncreasingAwayFromTruth) {
  const Problem p = source_problem();
  const DomainParam prm = radius_param();
  const auto q = default_observation(prm.base, p.horizon, 8, 8);
  const CostOptions o = coarse();
  const ObservationData d = synthetic_data(p, prm.to_domain(th(0.25)), q, o.grid);
  double prev = 0.0;
  for (double r : {0.27, 0.30, 0.35, 0.40, 0.45}) {
    const double v = cost_functional(p, prm, th(r), d, q, o).value;
    EXPECT_GT(v, prev) << "r=" << r;
    prev = v;
  }
  prev = 0.0;
  for (double r : {0.23, 0.2, 0.15, 0.1}) {
    const double v = cost_functional(p, prm, th(r), d, q, o).value;
    EXPECT_GT(v, prev) << "r=" << r;
    prev = v;
  }
}

TEST(Cost, InadmissibleShapeRejected) {
  const DomainParam prm = radius_param();
  EXPECT_FALSE(prm.admissible(th(0.7)));
  EXPECT_THROW(prm.to_domain(th(0.7)), DomainError);
}

TEST(Continuity, ConstantSequenceHasZeroGaps) {
  const Problem p = source_problem();
  const DomainParam prm = radius_param();
  const auto q = default_observation(prm.base, p.horizon, 8, 8);
  const CostOptions o = coarse();
  const ObservationData d = synthetic_data(p, prm.to_domain(th(0.2)), q, o.grid);
  const auto lim = prm.to_domain(th(0.3));
  const ContinuityResult r = continuity_experiment(p, {lim, lim, lim}, lim, d, q, o);
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.gap, 0.0);
    EXPECT_NEAR(row.hausdorff, 0.0, 1e-12);
  }
}

TEST(Continuity, TranslatedCavitiesShrinkingOffsets) {
  const Problem p = source_problem();
  DomainParam prm = radius_param();
  prm.names = {"cx", "cy", "r"};
  prm.lo = Eigen::Vector3d(-0.4, -0.4, 0.1);
  prm.hi = Eigen::Vector3d(0.4, 0.4, 0.3);
  const auto q = default_observation(prm.base, p.horizon, 8, 8);
  CostOptions o = coarse();
  const ObservationData d = synthetic_data(p, prm.to_domain(Eigen::Vector3d(0.1, 0.1, 0.2)), q, o.grid);
  std::vector<TimeVaryingDomain> seq;
  for (int m = 1; m <= 4; ++m) seq.push_back(prm.to_domain(Eigen::Vector3d(0.0, 0.2 * std::pow(2.0, -m), 0.2)));
  const ContinuityResult r = continuity_experiment(p, seq, prm.to_domain(Eigen::Vector3d(0.0, 0.0, 0.2)), d, q, o);
  for (std::size_t m = 1; m < r.rows.size(); ++m) {
    EXPECT_LT(r.rows[m].hausdorff, r.rows[m - 1].hausdorff);
    EXPECT_LT(r.rows[m].gap, r.rows[m - 1].gap);
  }
}

TEST(ProbabilisticCost, ZeroMisfitIsZeroAndNonnegative) {
  Problem p = source_problem();
  const NonDivForm nd = to_nondivergence(p.coeffs);
  const TimeVaryingDomain dom(radius_param().base, Cavity(), 0.5);
  SimConfig sc;
  sc.max_time = 0.5;
  sc.dt = 2e-3;
  sc.scheme = ReflectionScheme::Halfspace;
  const ReflectingSimulator sim(p, nd, dom, sc);
  const auto q = default_observation(dom.base(), 0.5, 8, 8);
  EstimatorOptions eo;
  eo.n_paths = 200;
  const Estimate z = probabilistic_cost(sim, q, 0.0, [](double, const Vec&) { return 0.0; }, eo);
  EXPECT_EQ(z.mean, 0.0);
  const Estimate e = probabilistic_cost(sim, q, 1.0, [](double t, const Vec& x) { return t - x[0]; }, eo);
  EXPECT_GE(e.mean, 0.0);
}

TEST(ProbabilisticCost, UnitMisfitMatchesLocalTimeOnFullRobinCircle) {
  // Observation set = whole circle, all Robin: the estimate is E[L(T)] started
  // uniformly on the circle, which by symmetry equals E[L(T)] from one boundary point.
  Problem p;
  p.coeffs = CoefficientSet::isotropic(2, 0.5);
  p.data = SourceData::zero(2);
  p.horizon = 0.2;
  const NonDivForm nd = to_nondivergence(p.coeffs);
  const TimeVaryingDomain dom(FixedDomain::disk(make_vec({0.0, 0.0}), 1.0, {Arc{0.0, kTwoPi}}), Cavity(), 0.2);
  SimConfig sc;
  sc.max_time = 0.2;
  sc.dt = 1e-3;
  sc.scheme = ReflectionScheme::Halfspace;
  const ReflectingSimulator sim(p, nd, dom, sc);
  ObservationQuadrature q;
  const int nb = 64;
  for (int b = 0; b < nb; ++b) {
    q.spec.locations.push_back((b + 0.5) * kTwoPi / nb);
    q.location_weights.push_back(kTwoPi / nb);
  }
  q.spec.times = {0.0, 0.2};
  q.time_weights = {0.1, 0.1};
  EstimatorOptions eo;
  eo.n_paths = 4000;
  const Estimate pc = probabilistic_cost(sim, q, 0.0, [](double, const Vec&) { return 1.0; }, eo);
  SimConfig pure = sc;
  pure.stopping = false;
  const ReflectingSimulator psim(p, nd, dom, pure);
  eo.stream_id = 77;
  const LocalTimeStats lt = local_time_stats(psim, 0.0, make_vec({1.0, 0.0}), {}, eo);
  const double se = std::hypot(pc.std_error, lt.mean_local_time.std_error);
  EXPECT_NEAR(pc.mean, lt.mean_local_time.mean, 4.0 * se);
}

TEST(Minimize, GridOnlyBudgetReturnsGridArgmin) {
  DomainParam prm = radius_param();
  auto cost = [](const Eigen::VectorXd& t) { return std::pow(t[0] - 0.33, 2); };
  const MinimizeResult r = minimize_cost(prm, cost, 5, 5, 4);
  ASSERT_EQ(r.log.size(), 5u);
  EXPECT_DOUBLE_EQ(r.theta[0], 0.3);
  for (const auto& e : r.log) EXPECT_EQ(e.stage, "grid");
}

TEST(Minimize, BeatsBoxCenterAndConverges) {
  DomainParam prm = radius_param();
  prm.names = {"cx", "cy", "r"};
  prm.lo = Eigen::Vector3d(-0.4, -0.4, 0.1);
  prm.hi = Eigen::Vector3d(0.4, 0.4, 0.3);
  const Eigen::Vector3d star(0.13, -0.27, 0.19);
  auto cost = [&](const Eigen::VectorXd& t) { return (t - star).squaredNorm() + 0.3 * (t[0] - star[0]) * (t[2] - star[2]); };
  const MinimizeResult r = minimize_cost(prm, cost, 400, 5, 4);
  EXPECT_LE(r.value, cost(prm.box_center()));
  EXPECT_LT((r.theta - star).cwiseAbs().maxCoeff(), r.resolution);
  for (const auto& e : r.log) {
    if (!prm.admissible(e.theta)) {
      EXPECT_TRUE(std::isinf(e.value));
    }
  }
}

TEST(Observation, DefaultLayoutOnRobinArc) {
  const FixedDomain base = FixedDomain::disk(make_vec({0.0, 0.0}), 1.0, {Arc{0.0, kPi}});
  const auto q = default_observation(base, 1.0, 16, 32);
  ASSERT_EQ(q.spec.locations.size(), 16u);
  ASSERT_EQ(q.spec.times.size(), 32u);
  double wt = 0.0, wl = 0.0;
  for (double w : q.time_weights) wt += w;
  for (double w : q.location_weights) wl += w;
  EXPECT_NEAR(wt, 1.0, 1e-14);
  EXPECT_NEAR(wl, kPi / 4.0, 1e-14);
  for (double a : q.spec.locations) EXPECT_EQ(base.boundary_class(base.boundary_point(a)), BoundaryClass::Robin);
}

TEST(Observation, QuadratureErrorPropagation) {
  // Var(sum w (m + e)^2) to second order with independent nodes.
  ObservationQuadrature q;
  q.spec.times = {0.0, 1.0};
  q.spec.locations = {0.5};
  q.time_weights = {0.5, 0.5};
  q.location_weights = {1.0};
  CostValue cv;
  cv.trace = Eigen::MatrixXd::Constant(2, 1, 1.0);
  cv.trace_se = Eigen::MatrixXd::Constant(2, 1, 0.1);
  ObservationData d;
  d.d = Eigen::MatrixXd::Constant(2, 1, 0.5);
  apply_quadrature(cv, d, q);
  EXPECT_NEAR(cv.value, 0.25, 1e-15);
  const double node_var = 4 * 0.25 * 0.25 * 0.01 + 2 * 0.25 * 1e-4;
  EXPECT_NEAR(cv.std_error, std::sqrt(2 * node_var), 1e-15);
}
