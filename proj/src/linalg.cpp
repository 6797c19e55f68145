#include "hamflow/linalg.hpp"

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <complex>

#include "hamflow/error.hpp"

namespace hamflow {
namespace {

using CMat = Eigen::MatrixXcd;
using cplx = std::complex<double>;

int numerical_rank(const CMat& M) {
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<CMat> svd(M);
  const auto& s = svd.singularValues();
  const double smax = s.size() > 0 ? s(0) : 0.0;
  if (smax == 0.0) return 0;
  int rank = 0;
  for (int i = 0; i < s.size(); ++i) {
    if (s(i) > 1e-10 * smax) ++rank;
  }
  return rank;
}

// Eigenvalues of A that the PBH tests must examine (Re >= 0 up to roundoff).
std::vector<cplx> unstable_eigenvalues(const Mat& A) {
  std::vector<cplx> out;
  if (A.size() == 0) return out;
  Eigen::ComplexEigenSolver<CMat> es(A.cast<cplx>(), false);
  const double slack = 1e-12 * std::max(1.0, A.norm());
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    if (es.eigenvalues()(i).real() >= -slack) out.push_back(es.eigenvalues()(i));
  }
  return out;
}

}  // namespace

Mat hamiltonian_matrix(const Mat& A, const Mat& B, const Mat& C) {
  const int n = static_cast<int>(A.rows());
  Mat H(2 * n, 2 * n);
  const Mat Q = C.size() > 0 ? Mat(C.transpose() * C) : Mat(Mat::Zero(n, n));
  H << A, -B * B.transpose(), -Q, -A.transpose();
  return H;
}

Mat symplectic_form(int n) {
  Mat J = Mat::Zero(2 * n, 2 * n);
  J.topRightCorner(n, n) = Mat::Identity(n, n);
  J.bottomLeftCorner(n, n) = -Mat::Identity(n, n);
  return J;
}

bool pbh_stabilizable(const Mat& A, const Mat& B) {
  const int n = static_cast<int>(A.rows());
  for (const cplx& lambda : unstable_eigenvalues(A)) {
    CMat M(n, n + B.cols());
    M << lambda * CMat::Identity(n, n) - A.cast<cplx>(), B.cast<cplx>();
    if (numerical_rank(M) < n) return false;
  }
  return true;
}

bool pbh_detectable(const Mat& C, const Mat& A) {
  const int n = static_cast<int>(A.rows());
  const int r = static_cast<int>(C.size() > 0 ? C.rows() : 0);
  for (const cplx& lambda : unstable_eigenvalues(A)) {
    CMat M(n + r, n);
    M.topRows(n) = lambda * CMat::Identity(n, n) - A.cast<cplx>();
    if (r > 0) M.bottomRows(r) = C.cast<cplx>();
    if (numerical_rank(M) < n) return false;
  }
  return true;
}

double spectral_abscissa(const Mat& M) {
  if (M.size() == 0) return -std::numeric_limits<double>::infinity();
  Eigen::ComplexEigenSolver<CMat> es(M.cast<cplx>(), false);
  return es.eigenvalues().real().maxCoeff();
}

bool is_hurwitz(const Mat& M, double margin) { return spectral_abscissa(M) < -margin; }

Mat care_residual(const Mat& P, const Mat& A, const Mat& B, const Mat& C) {
  const int n = static_cast<int>(A.rows());
  const Mat Q = C.size() > 0 ? Mat(C.transpose() * C) : Mat(Mat::Zero(n, n));
  return P * A + A.transpose() * P - P * B * B.transpose() * P + Q;
}

Mat solve_care(const Mat& A, const Mat& B, const Mat& C) {
  const int n = static_cast<int>(A.rows());
  if (!pbh_stabilizable(A, B)) {
    throw Error(ErrorCode::NotStabilizable, "(A, B) fails the PBH stabilizability test");
  }
  if (!pbh_detectable(C, A)) {
    throw Error(ErrorCode::NotDetectable, "(C, A) fails the PBH detectability test");
  }

  const Mat H = hamiltonian_matrix(A, B, C);
  Eigen::ComplexEigenSolver<CMat> es(H.cast<cplx>());
  std::vector<int> stable;
  for (int i = 0; i < 2 * n; ++i) {
    if (es.eigenvalues()(i).real() < 0.0) stable.push_back(i);
  }
  if (static_cast<int>(stable.size()) != n) {
    throw Error(ErrorCode::IllConditionedSubspace,
                "Hamiltonian matrix has " + std::to_string(stable.size()) +
                    " stable eigenvalues, expected " + std::to_string(n));
  }

  // The stable subspace is real; recover a real orthonormal basis from the
  // real and imaginary parts of the complex eigenvectors.
  Mat stacked(2 * n, 2 * n);
  for (int k = 0; k < n; ++k) {
    const auto v = es.eigenvectors().col(stable[k]);
    stacked.col(k) = v.real();
    stacked.col(n + k) = v.imag();
  }
  Eigen::JacobiSVD<Mat> basis(stacked, Eigen::ComputeThinU);
  const Mat X = basis.matrixU().leftCols(n);
  const Mat X1 = X.topRows(n), X2 = X.bottomRows(n);

  Eigen::JacobiSVD<Mat> cond(X1);
  const auto& s = cond.singularValues();
  if (s(n - 1) == 0.0 || s(0) / s(n - 1) > 1e12) {
    throw Error(ErrorCode::IllConditionedSubspace, "X1 is singular or ill-conditioned");
  }
  const Mat P = X1.transpose().partialPivLu().solve(X2.transpose()).transpose();
  return 0.5 * (P + P.transpose());
}

Mat solve_lyapunov(const Mat& F, const Mat& Q) {
  const int n = static_cast<int>(F.rows());
  if (!is_hurwitz(F)) throw Error(ErrorCode::NotHurwitz, "solve_lyapunov needs a Hurwitz F");
  const Mat I = Mat::Identity(n, n);
  const Mat K = Eigen::kroneckerProduct(I, F) + Eigen::kroneckerProduct(F, I);
  const Vec q = Eigen::Map<const Vec>(Q.data(), n * n);
  const Vec p = K.partialPivLu().solve(q);
  Mat P = Eigen::Map<const Mat>(p.data(), n, n);
  P = 0.5 * (P + P.transpose());

  const Mat Qs = 0.5 * (Q + Q.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> q_eig(Qs, Eigen::EigenvaluesOnly);
  if (q_eig.eigenvalues().minCoeff() >= -1e-12 * (1.0 + Qs.norm())) {
    Eigen::SelfAdjointEigenSolver<Mat> p_eig(P, Eigen::EigenvaluesOnly);
    if (p_eig.eigenvalues().maxCoeff() > 1e-10 * (1.0 + P.norm())) {
      throw Error(ErrorCode::NotNegativeSemidefinite, "Lyapunov solution has a positive eigenvalue");
    }
  }
  return P;
}

SymplecticData build_symplectic(const Mat& A, const Mat& B, const Mat& C) {
  const int n = static_cast<int>(A.rows());
  const Mat I = Mat::Identity(n, n);
  SymplecticData d;
  d.P1 = solve_care(A, B, C);
  d.F = A - B * B.transpose() * d.P1;
  d.P2 = solve_lyapunov(d.F, B * B.transpose());
  d.Ham = hamiltonian_matrix(A, B, C);
  d.L.resize(2 * n, 2 * n);
  d.L << I, d.P2, d.P1, I + d.P1 * d.P2;
  d.Linv.resize(2 * n, 2 * n);
  d.Linv << I + d.P2 * d.P1, -d.P2, -d.P1, I;
  return d;
}

Mat expm(const Mat& M, double t) {
  const Mat Mt = M * t;
  return Mt.exp();
}

}  // namespace hamflow
