#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "hamflow/error.hpp"
#include "hamflow/hamiltonian.hpp"
#include "oracles.hpp"

using namespace hamflow;

namespace {

Vec v(std::initializer_list<double> xs) {
  Vec out(xs.size());
  int i = 0;
  for (double x : xs) out(i++) = x;
  return out;
}

double logistic(double x0, double t) {
  // x' = -x + x^2
  const double e = std::exp(-t);
  return x0 * e / (1.0 - x0 + x0 * e);
}

}  // namespace

TEST(Ode, ExponentialDecay) {
  const Trajectory tr = integrate([](double, const Vec& y) { return Vec(-y); }, 0.0, v({1.0}), 5.0,
                                  {1e-11, 1e-11});
  EXPECT_NEAR(tr.states.back()(0), std::exp(-5.0), 1e-10);
  for (double t : {0.3, 1.7, 4.2}) EXPECT_NEAR(tr.at(t)(0), std::exp(-t), 1e-8);
}

TEST(Ode, BackwardIntegrationStoresIncreasingTimes) {
  const Trajectory tr = integrate([](double, const Vec& y) { return Vec(-y); }, 2.0, v({1.0}), 0.0,
                                  {1e-11, 1e-11});
  EXPECT_NO_THROW(tr.validate());
  EXPECT_NEAR(tr.at(0.0)(0), std::exp(2.0), 1e-8);
}

TEST(Ode, EscapeIsReported) {
  OdeOptions o;
  o.escape_bound = 1e3;
  o.throw_on_failure = false;
  const Trajectory tr = integrate([](double, const Vec& y) { return Vec(y.array().square()); }, 0.0,
                                  v({1.0}), 2.0, o);
  EXPECT_EQ(tr.status, FlowStatus::Escape);
  o.throw_on_failure = true;
  try {
    integrate([](double, const Vec& y) { return Vec(y.array().square()); }, 0.0, v({1.0}), 2.0, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::StepSizeUnderflow);
  }
}

TEST(Hamiltonian, VectorFieldIsCanonical) {
  // x' = dH/dp and p' = -dH/dx, checked by finite differences of H.
  std::mt19937 rng(9);
  for (const auto& name : example_names()) {
    const HamiltonianSystem hs = build_hamiltonian(example_system(name));
    const int n = hs.n();
    for (int k = 0; k < 10; ++k) {
      const Vec x = oracle::ball_point(rng, n);
      const Vec p = oracle::ball_point(rng, n);
      Vec z(2 * n);
      z << x, p;
      const Vec dHdx = oracle::fd_gradient([&](const Vec& y) { return hs.hval(y, p); }, x);
      const Vec dHdp = oracle::fd_gradient([&](const Vec& q) { return hs.hval(x, q); }, p);
      const Vec r = hs.rhs(z);
      EXPECT_LT((r.head(n) - dHdp).norm(), 1e-7) << name;
      EXPECT_LT((r.tail(n) + dHdx).norm(), 1e-7) << name;
      const Vec u = optimal_feedback(hs, x, p);
      EXPECT_LT((u + hs.base().g(x).transpose() * p).norm(), 1e-15);
    }
  }
}

TEST(Hamiltonian, HValueFormula) {
  const HamiltonianSystem hs = build_hamiltonian(example_system("scalar"));
  // H = p(-x + x^2) - p^2/2
  EXPECT_NEAR(hs.hval(v({0.5}), v({2.0})), 2.0 * (-0.25) - 2.0, 1e-15);
}

TEST(Hamiltonian, TimeReversal) {
  const HamiltonianSystem hs = build_hamiltonian(example_system("pendulum"));
  const HamiltonianSystem rev = hs.time_reversed();
  const Vec z = v({0.2, -0.1, 0.3, 0.05});
  EXPECT_LT((rev.rhs(z) + hs.rhs(z)).norm(), 1e-15);
  EXPECT_NEAR(rev.hval(z), -hs.hval(z), 1e-15);
  EXPECT_TRUE(rev.reversed());
}

TEST(Hamiltonian, EnergyConservedWhileStateIsModerate) {
  // Off-manifold starts grow exponentially or escape, so the absolute drift
  // is checked only while |z| <= 10; beyond that it is checked relative to
  // the size of the terms of H.
  std::mt19937 rng(17);
  for (const auto& name : example_names()) {
    const HamiltonianSystem hs = build_hamiltonian(example_system(name));
    const ControlAffineSystem& sys = hs.base();
    const int n = hs.n();
    for (int k = 0; k < 20; ++k) {
      const Vec z = oracle::ball_point(rng, 2 * n);
      FlowOptions fo;
      fo.tol = 1e-9;
      fo.throw_on_failure = false;
      const Trajectory tr = flow(hs, z, 10.0, fo);
      const double H0 = hs.hval(z);
      bool moderate = true;
      for (const Vec& s : tr.states) {
        const Vec x = s.head(n), p = s.tail(n);
        const double drift = std::abs(hs.hval(s) - H0);
        moderate = moderate && s.norm() <= 10.0;
        if (moderate) EXPECT_LE(drift, 1e-6) << name;
        const double scale = std::abs(p.dot(sys.f(x))) + (sys.g(x).transpose() * p).squaredNorm() +
                             std::abs(sys.h(x));
        EXPECT_LE(drift, 1e-6 * (1.0 + scale)) << name;
      }
    }
  }
}

TEST(Hamiltonian, EscapeIsSignalledAsStepSizeUnderflow) {
  const HamiltonianSystem hs = build_hamiltonian(example_system("scalar"));
  try {
    flow(hs, v({2.0, 0.5}), 10.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::StepSizeUnderflow);
  }
}

TEST(Hamiltonian, ScalarExampleFieldAndEquilibria) {
  const HamiltonianSystem hs = build_hamiltonian(example_system("scalar"));
  const double x = 0.3, p = -0.7;
  const Vec r = hs.rhs(v({x, p}));
  EXPECT_NEAR(r(0), -x + x * x - p, 1e-15);
  EXPECT_NEAR(r(1), p - 2 * x * p, 1e-15);
  EXPECT_EQ(hs.rhs(v({1.0, 0.0})).norm(), 0.0);
  EXPECT_NEAR(hs.hval(v({0.5}), v({0.1})), -0.03, 1e-15);
  const Mat J = oracle::fd_jacobian([&](const Vec& z) { return hs.rhs(z); }, Vec::Zero(2));
  EXPECT_LT((J - hs.sym().Ham).norm(), 1e-8);
}

TEST(Hamiltonian, FlowMatchesRk4) {
  const HamiltonianSystem hs = build_hamiltonian(example_system("backstepping"));
  const Vec z0 = v({0.3, -0.2, 0.1, 0.05});
  const Trajectory tr = flow(hs, z0, 1.0, {1e-11});
  const Vec ref = oracle::rk4([&](const Vec& z) { return hs.rhs(z); }, z0, 1.0, 4000);
  EXPECT_LT((tr.states.back() - ref).norm(), 1e-9);
}

TEST(Hamiltonian, XiEtaRoundTrip) {
  const HamiltonianSystem hs = build_hamiltonian(example_system("generator"));
  const SymplecticData& sym = hs.sym();
  const Vec x = v({0.1, -0.2, 0.3}), p = v({1.0, 0.5, -0.25});
  const auto [xi, eta] = to_xi_eta(sym, x, p);
  const auto [x2, p2] = from_xi_eta(sym, xi, eta);
  EXPECT_LT((x2 - x).norm(), 1e-13);
  EXPECT_LT((p2 - p).norm(), 1e-13);
  // eta = 0 is the tangent space p = P1 x.
  const auto [x3, p3] = from_xi_eta(sym, v({0.1, 0.2, 0.3}), Vec::Zero(3));
  EXPECT_LT((p3 - sym.P1 * x3).norm(), 1e-12);
}

TEST(Hamiltonian, SymplecticDataAbsentWhenNotStabilizable) {
  ControlAffineSystem sys = linear_system(Mat::Identity(1, 1), Mat::Zero(1, 1), Mat::Identity(1, 1));
  const HamiltonianSystem hs = build_hamiltonian(sys);
  EXPECT_FALSE(hs.has_symplectic());
  try {
    hs.sym();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotStabilizable);
  }
}

TEST(Simulate, ScalarZeroFeedbackFollowsLogistic) {
  const ControlAffineSystem sys = example_system("scalar");
  const Trajectory tr = simulate_controlled(sys, v({0.5}), zero_feedback(1), 10.0, 1e-11);
  for (std::size_t i = 0; i < tr.size(); ++i) {
    EXPECT_NEAR(tr.states[i](0), logistic(0.5, tr.times[i]), 1e-9);
    EXPECT_EQ(tr.cost[i], 0.0);
  }
}

TEST(Simulate, PiecewiseConstantInput) {
  // x' = -x + x^2 + u with u = 1 on [0, 1): x' = x^2 - x + 1 from x = 0.
  // Closed form x(t) = 1/2 + (sqrt3/2) tan(sqrt3 t / 2 - pi/6).
  const ControlAffineSystem sys = example_system("scalar");
  PiecewiseConstantInput pc;
  pc.breaks = {0.0, 1.0};
  pc.values = {v({1.0}), v({0.0})};
  const Trajectory tr = simulate_controlled(sys, v({0.0}), pc, 2.0, 1e-11);
  const double s3 = std::sqrt(3.0);
  const double x1 = 0.5 + s3 / 2 * std::tan(s3 / 2 - M_PI / 6);
  EXPECT_NEAR(tr.at(1.0)(0), x1, 1e-8);
  EXPECT_NEAR(tr.states.back()(0), logistic(x1, 1.0), 1e-8);
  // Cost: int u^2/2 = 1/2.
  EXPECT_NEAR(tr.cost.back(), 0.5, 1e-9);
}

TEST(Simulate, TrajectoryCsvHeader) {
  const HamiltonianSystem hs = build_hamiltonian(example_system("backstepping"));
  const Trajectory tr = flow(hs, v({0.1, 0.1, 0.0, 0.0}), 1.0);
  std::ostringstream out;
  write_trajectory_csv(out, tr, {2, true});
  const std::string text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "t,x1,x2,p1,p2,u1,H");
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), tr.size() + 1);
}
