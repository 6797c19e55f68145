#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hamflow/error.hpp"
#include "hamflow/ocp.hpp"
#include "oracles.hpp"

using namespace hamflow;

namespace {

Vec v(std::initializer_list<double> xs) {
  Vec out(xs.size());
  int i = 0;
  for (double x : xs) out(i++) = x;
  return out;
}

HamiltonianSystem scalar_lqr() {
  return build_hamiltonian(linear_system(Mat::Zero(1, 1), Mat::Ones(1, 1), Mat::Ones(1, 1)));
}

Trajectory piecewise_linear(const std::vector<double>& t, const std::vector<double>& x) {
  Trajectory tr;
  tr.times = t;
  for (double xi : x) tr.states.push_back(v({xi}));
  return tr;
}

}  // namespace

TEST(Bvp, EquilibriumStaysPut) {
  const HamiltonianSystem hs = build_hamiltonian(example_system("backstepping"));
  const BvpSolution sol = solve_finite_bvp(hs, Vec::Zero(2), Vec::Zero(2), 5.0);
  EXPECT_LT(sol.p0.norm(), 1e-14);
  for (const Vec& z : sol.traj.states) EXPECT_LT(z.norm(), 1e-14);
  EXPECT_NEAR(sol.cost, 0.0, 1e-14);
}

TEST(Bvp, ScalarLqrClosedForm) {
  // Ham = [[0, -1], [-1, 0]]: x = cosh t - sinh t p0, p = -sinh t + cosh t p0.
  const double T = 5.0;
  const BvpSolution sol = solve_finite_bvp(scalar_lqr(), v({1.0}), v({0.0}), T);
  const double p0 = std::cosh(T) / std::sinh(T);
  EXPECT_NEAR(sol.p0(0), p0, 1e-9);
  double err = 0.0;
  for (std::size_t i = 0; i < sol.traj.size(); ++i) {
    const double t = sol.traj.times[i];
    err = std::max(err, std::abs(sol.traj.states[i](0) - (std::cosh(t) - std::sinh(t) * p0)));
    err = std::max(err, std::abs(sol.traj.states[i](1) - (-std::sinh(t) + std::cosh(t) * p0)));
  }
  EXPECT_LE(err, 1e-6);
  EXPECT_LE(sol.residual, 1e-8);
  // J_T = (p(0) x(0) - p(T) x(T)) / 2 for linear-quadratic extremals.
  EXPECT_NEAR(sol.cost, 0.5 * p0, 1e-8);
}

TEST(Bvp, RandomLinearSystemsMatchMatrixExponential) {
  std::mt19937 rng(4242);
  for (int trial = 0; trial < 10; ++trial) {
    const auto s = oracle::random_linear(rng);
    const HamiltonianSystem hs = build_hamiltonian(linear_system(s.A, s.B, s.C));
    const int n = hs.n();
    const Vec x0 = oracle::ball_point(rng, n), xf = oracle::ball_point(rng, n, 0.5);
    const double T = 2.0;
    const BvpSolution sol = solve_finite_bvp(hs, x0, xf, T);
    const Vec p0 = oracle::linear_bvp_p0(hs.sym().Ham, x0, xf, T);
    Vec z0(2 * n);
    z0 << x0, p0;
    double err = 0.0;
    for (double t : {0.0, 0.5, 1.0, 1.5, 2.0}) {
      const Vec ref = oracle::expm_eig(hs.sym().Ham, t) * z0;
      err = std::max(err, (sol.traj.at(t) - ref).norm());
    }
    EXPECT_LE(err, 1e-6) << "trial " << trial;
    EXPECT_LE((sol.traj.states.back().head(n) - xf).norm(), 1e-8);
  }
}

TEST(Bvp, BacksteppingTurnpikeShape) {
  const HamiltonianSystem hs = build_hamiltonian(example_system("backstepping"));
  const BvpSolution sol = solve_finite_bvp(hs, v({1, 1}), v({0.5, 0}), 20.0);
  EXPECT_LE(sol.residual, 1e-8);
  EXPECT_LE(max_energy_drift(sol.traj), 1e-6);
  EXPECT_LT(sol.traj.at(10.0).head(2).norm(), 0.1);
  EXPECT_EQ((sol.traj.states.front().head(2) - v({1, 1})).norm(), 0.0);
}

TEST(Bvp, ShootingDivergedCarriesDiagnostics) {
  // One Newton step from the zero costate guess cannot converge.
  BvpOptions opts;
  opts.max_iter = 1;
  opts.continuation = false;
  const HamiltonianSystem hs = build_hamiltonian(example_system("pendulum"));
  try {
    solve_finite_bvp(hs, v({0.4, 0.0}), v({-0.3, 0.2}), 5.0, opts);
    FAIL() << "expected ShootingDiverged";
  } catch (const ShootingDivergedError& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShootingDiverged);
    EXPECT_GT(e.best_residual(), 1e-8);
    EXPECT_EQ(e.best_p0().size(), 2);
  }
}

TEST(Residence, SyntheticPiecewiseSignal) {
  const double eps = 0.1;
  // 2 eps -> 0 on [0, 2], 0 on [2, 8], 0 -> 2 eps on [8, 10]: above eps on
  // [0, 1) and (9, 10].
  const Trajectory tr = piecewise_linear({0, 2, 8, 10}, {2 * eps, 0, 0, 2 * eps});
  const ResidenceResult r = turnpike_metric(tr, eps);
  EXPECT_NEAR(r.measure, 2.0, 1e-6);
  ASSERT_TRUE(r.first_exit && r.last_entry);
  EXPECT_NEAR(*r.first_exit, 1.0, 1e-6);
  EXPECT_NEAR(*r.last_entry, 9.0, 1e-6);
  ASSERT_EQ(r.intervals.size(), 2u);
}

TEST(Residence, TrivialCases) {
  const Trajectory flat = piecewise_linear({0, 10}, {0.2, 0.2});
  EXPECT_NEAR(turnpike_metric(flat, 0.1).measure, 10.0, 1e-12);
  EXPECT_NEAR(turnpike_metric(flat, 0.5).measure, 0.0, 1e-12);
  // With u = x the signal doubles.
  const auto u = [](const Vec& z) { return Vec(z); };
  EXPECT_NEAR(turnpike_metric(flat, 0.3, -1, u).measure, 10.0, 1e-12);
}

TEST(Residence, SmoothSignal) {
  // |sin t| > 1/2 on (pi/6, 5 pi/6) within [0, pi].
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(M_PI * i / 20);
  const auto r = residence_measure([](double t) { return std::abs(std::sin(t)); }, grid, 0.5);
  EXPECT_NEAR(r.measure, 2 * M_PI / 3, 1e-9);
}

TEST(Turnpike, LqrHorizonsAgree) {
  const TurnpikeReport rep = turnpike_report(scalar_lqr(), v({1}), v({0}), {5, 10, 20});
  ASSERT_TRUE(rep.all_converged);
  double lo = INFINITY, hi = 0;
  for (const auto& e : rep.entries) {
    EXPECT_GE(e.residence, 0.0);
    EXPECT_LE(e.residence, e.T);
    lo = std::min(lo, e.residence);
    hi = std::max(hi, e.residence);
  }
  EXPECT_LE(hi / lo, 1.2);
  // x(t) ~ e^{-t} crosses 0.1 / 2 (|u| = |x| here) at t = ln 20.
  EXPECT_NEAR(rep.entries.back().residence, std::log(20.0), 1e-4);
}

TEST(Turnpike, ScalarOutsideCoverageFlagsSufficientCondition) {
  const HamiltonianSystem hs = build_hamiltonian(example_system("scalar"));
  const auto stable_local = local_stable_manifold(hs, sphere_seeds(1, {0.05, 0.1}, 1));
  const auto unstable_local = unstable_manifold(hs, sphere_seeds(1, {0.05, 0.1}, 1));
  GlobalizeOptions go;
  go.extend_time = 12;
  go.bounds.lo = v({-3});
  go.bounds.hi = v({3});
  const ManifoldChart stable = globalize(stable_local, hs, go);
  const ManifoldChart unstable = globalize(unstable_local, hs, go);
  TurnpikeOptions opts;
  opts.stable_chart = &stable;
  opts.unstable_chart = &unstable;
  const TurnpikeReport rep = turnpike_report(hs, v({1.2}), v({0}), {5}, opts);
  ASSERT_TRUE(rep.sufficient_condition.has_value());
  EXPECT_FALSE(*rep.sufficient_condition);
  EXPECT_EQ(*rep.x0_status, CoverageStatus::Uncovered);
}

TEST(InfiniteCost, ReferenceValues) {
  const auto lqr = linear_system(Mat::Zero(1, 1), Mat::Ones(1, 1), Mat::Ones(1, 1));
  EXPECT_NEAR(infinite_cost(lqr, linear_feedback(Mat::Ones(1, 1)), v({0})).value, 0.0, 1e-15);
  const InfiniteCost ic = infinite_cost(lqr, linear_feedback(Mat::Ones(1, 1)), v({1}));
  EXPECT_NEAR(ic.value, 0.5, 1e-6);
  EXPECT_LE(ic.tail_bound, 1e-9);
  const auto scalar = example_system("scalar");
  EXPECT_NEAR(infinite_cost(scalar, zero_feedback(1), v({0.5})).value, 0.0, 1e-15);
}

TEST(InfiniteCost, UnstableLoopDoesNotConverge) {
  const auto sys = linear_system(Mat::Ones(1, 1), Mat::Ones(1, 1), Mat::Ones(1, 1));
  try {
    infinite_cost(sys, zero_feedback(1), v({0.1}), 1e-10, 5.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoConvergence);
  }
}
