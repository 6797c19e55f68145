#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hamflow/error.hpp"
#include "hamflow/linalg.hpp"
#include "oracles.hpp"

using namespace hamflow;

namespace {

Mat m1(double a) { return Mat::Constant(1, 1, a); }

void expect_code(ErrorCode code, const std::function<void()>& f) {
  try {
    f();
    FAIL() << "expected " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

}  // namespace

TEST(Care, ScalarClosedForm) {
  // p^2 b^2 - 2 a p - c^2 = 0, positive root.
  for (double a : {-2.0, 0.0, 0.5, 3.0}) {
    for (double b : {0.5, 1.0, 2.0}) {
      const double c = 1.3;
      const double expected = (a + std::sqrt(a * a + b * b * c * c)) / (b * b);
      EXPECT_NEAR(solve_care(m1(a), m1(b), m1(c))(0, 0), expected, 1e-12 * (1 + expected));
    }
  }
}

TEST(Care, DoubleIntegrator) {
  // A = [[0,1],[0,0]], B = e2, C = I: P = [[sqrt3, 1], [1, sqrt3]].
  Mat A(2, 2), B(2, 1);
  A << 0, 1, 0, 0;
  B << 0, 1;
  const Mat P = solve_care(A, B, Mat::Identity(2, 2));
  Mat expected(2, 2);
  expected << std::sqrt(3.0), 1, 1, std::sqrt(3.0);
  EXPECT_LT((P - expected).norm(), 1e-12);
}

TEST(Care, ReportsPbhFailures) {
  expect_code(ErrorCode::NotStabilizable, [] { solve_care(m1(1.0), m1(0.0), m1(1.0)); });
  expect_code(ErrorCode::NotDetectable, [] { solve_care(m1(1.0), m1(1.0), Mat(0, 1)); });
  // Stable A and empty C: P1 = 0.
  EXPECT_NEAR(solve_care(m1(-1.0), m1(1.0), Mat(0, 1))(0, 0), 0.0, 1e-14);
}

TEST(Pbh, Verdicts) {
  Mat A(2, 2), B(2, 1), C(1, 2);
  A << 1, 0, 0, -1;
  B << 0, 1;
  C << 0, 1;
  EXPECT_FALSE(pbh_stabilizable(A, B));  // unstable mode not actuated
  EXPECT_FALSE(pbh_detectable(C, A));
  B << 1, 0;
  C << 1, 0;
  EXPECT_TRUE(pbh_stabilizable(A, B));
  EXPECT_TRUE(pbh_detectable(C, A));
  EXPECT_TRUE(is_hurwitz(-Mat::Identity(3, 3)));
  EXPECT_FALSE(is_hurwitz(A));
  EXPECT_NEAR(spectral_abscissa(A), 1.0, 1e-14);
}

TEST(Lyapunov, MatchesQuadratureIntegral) {
  std::mt19937 rng(21);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 3;
    Mat F(n, n), G(n, 2);
    for (int i = 0; i < F.size(); ++i) F.data()[i] = normal(rng);
    for (int i = 0; i < G.size(); ++i) G.data()[i] = normal(rng);
    F -= (spectral_abscissa(F) + 1.0) * Mat::Identity(n, n);
    const Mat Q = G * G.transpose();
    const Mat P = solve_lyapunov(F, Q);
    const Mat ref = oracle::lyapunov_integral(F, Q, 40.0, 400);
    EXPECT_LT((P - ref).norm(), 1e-9 * (1 + ref.norm()));
    EXPECT_LE(Eigen::SelfAdjointEigenSolver<Mat>(P).eigenvalues().maxCoeff(), 1e-12);
  }
  expect_code(ErrorCode::NotHurwitz, [] { solve_lyapunov(m1(1.0), m1(1.0)); });
}

TEST(Expm, AgreesWithEigendecomposition) {
  std::mt19937 rng(2);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 10; ++trial) {
    Mat M(4, 4);
    for (int i = 0; i < M.size(); ++i) M.data()[i] = normal(rng);
    const double t = 0.1 + trial * 0.3;
    const Mat ref = oracle::expm_eig(M, t);
    EXPECT_LT((expm(M, t) - ref).norm(), 1e-10 * (1 + ref.norm()));
  }
  Mat R(2, 2);
  R << 0, -1, 1, 0;
  const Mat E = expm(R, M_PI / 2);
  EXPECT_NEAR(E(0, 1), -1.0, 1e-14);
  EXPECT_NEAR(E(1, 0), 1.0, 1e-14);
}

TEST(Symplectic, StructureOnRandomSystems) {
  std::mt19937 rng(1234);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = oracle::random_linear(rng);
    const int n = static_cast<int>(s.A.rows());
    const SymplecticData d = build_symplectic(s.A, s.B, s.C);
    const Mat I = Mat::Identity(2 * n, 2 * n);
    const Mat J = symplectic_form(n);
    const Mat In = Mat::Identity(n, n);
    EXPECT_LE(care_residual(d.P1, s.A, s.B, s.C).norm(), 1e-10 * (1 + d.P1.squaredNorm()));
    EXPECT_LT((d.L * d.Linv - I).norm(), 1e-10);
    EXPECT_LT((d.L.transpose() * J * d.L - J).norm(), 1e-10);
    Mat Linv(2 * n, 2 * n);
    Linv << In + d.P2 * d.P1, -d.P2, -d.P1, In;
    EXPECT_LT((d.Linv - Linv).norm(), 1e-10 * (1 + Linv.norm()));
    const Mat Hd = d.Linv * d.Ham * d.L;
    EXPECT_LE(Hd.topRightCorner(n, n).norm(), 1e-8);
    EXPECT_LE(Hd.bottomLeftCorner(n, n).norm(), 1e-8);
    EXPECT_LT((Hd.topLeftCorner(n, n) - d.F).norm(), 1e-8 * (1 + d.F.norm()));
    EXPECT_LT((Hd.bottomRightCorner(n, n) + d.F.transpose()).norm(), 1e-8 * (1 + d.F.norm()));
    EXPECT_LT(spectral_abscissa(d.F), 0.0);
    EXPECT_LT((d.P1 - d.P1.transpose()).norm(), 1e-10 * (1 + d.P1.norm()));
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Mat>(d.P1).eigenvalues().minCoeff(), -1e-10);
  }
}

TEST(Symplectic, HamiltonianMatrixLayout) {
  Mat A(1, 1), B(1, 1), C(1, 1);
  A << 2;
  B << 3;
  C << 5;
  Mat expected(2, 2);
  expected << 2, -9, -25, -2;
  EXPECT_EQ((hamiltonian_matrix(A, B, C) - expected).norm(), 0.0);
}
