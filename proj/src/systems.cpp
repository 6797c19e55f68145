#include "hamflow/systems.hpp"

#include <cmath>
#include <limits>

#include "hamflow/error.hpp"

namespace hamflow {

LinearData linearize(const ControlAffineSystem& sys) {
  const Vec zero = Vec::Zero(sys.n);
  LinearData lin;
  lin.A = sys.Df(zero);
  lin.B = sys.g(zero);

  const Mat hess = 0.5 * (sys.D2h0 + sys.D2h0.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> eig(hess);
  const double tol = 1e-10 * (1.0 + hess.norm());
  if (eig.eigenvalues().size() > 0 && eig.eigenvalues().minCoeff() < -tol) {
    throw Error(ErrorCode::NonPSDHessian,
                "Hessian of h at 0 has eigenvalue " +
                    std::to_string(eig.eigenvalues().minCoeff()));
  }
  std::vector<int> kept;
  for (int i = 0; i < eig.eigenvalues().size(); ++i) {
    if (eig.eigenvalues()(i) > 1e-12) kept.push_back(i);
  }
  lin.C = Mat::Zero(static_cast<int>(kept.size()), sys.n);
  for (std::size_t r = 0; r < kept.size(); ++r) {
    const int i = kept[r];
    lin.C.row(static_cast<int>(r)) =
        std::sqrt(eig.eigenvalues()(i)) * eig.eigenvectors().col(i).transpose();
  }
  return lin;
}

Vec f_remainder(const ControlAffineSystem& sys, const LinearData& lin, const Vec& x) {
  return sys.f(x) - lin.A * x;
}

Mat g_remainder(const ControlAffineSystem& sys, const LinearData& lin, const Vec& x) {
  return sys.g(x) - lin.B;
}

double h_remainder(const ControlAffineSystem& sys, const LinearData& lin, const Vec& x) {
  return sys.h(x) - 0.5 * (lin.C * x).squaredNorm();
}

ControlAffineSystem linear_system(const Mat& A, const Mat& B, const Mat& C) {
  if (A.rows() != A.cols() || B.rows() != A.rows() || (C.size() > 0 && C.cols() != A.rows())) {
    throw Error(ErrorCode::DimensionMismatch, "linear_system: inconsistent A, B, C");
  }
  ControlAffineSystem sys;
  sys.name = "linear";
  sys.n = static_cast<int>(A.rows());
  sys.m = static_cast<int>(B.cols());
  const Mat Q = C.size() > 0 ? Mat(C.transpose() * C) : Mat(Mat::Zero(sys.n, sys.n));
  sys.f = [A](const Vec& x) { return Vec(A * x); };
  sys.g = [B](const Vec&) { return B; };
  sys.h = [Q](const Vec& x) { return 0.5 * x.dot(Q * x); };
  sys.Df = [A](const Vec&) { return A; };
  const int n = sys.n, m = sys.m;
  sys.Dg = [n, m](const Vec&) { return std::vector<Mat>(m, Mat::Zero(n, n)); };
  sys.Dh = [Q](const Vec& x) { return Vec(Q * x); };
  sys.D2h0 = Q;
  return sys;
}

ControlAffineSystem with_quadratic_penalty(ControlAffineSystem sys, const Mat& Q) {
  if (Q.rows() != sys.n || Q.cols() != sys.n) {
    throw Error(ErrorCode::DimensionMismatch, "penalty matrix must be n x n");
  }
  const Mat Qs = 0.5 * (Q + Q.transpose());
  sys.h = [Qs](const Vec& x) { return 0.5 * x.dot(Qs * x); };
  sys.Dh = [Qs](const Vec& x) { return Vec(Qs * x); };
  sys.D2h0 = Qs;
  return sys;
}

FeedbackLaw zero_feedback(int m) {
  return {"zero", [m](const Vec&) { return Vec(Vec::Zero(m)); },
          std::numeric_limits<double>::infinity()};
}

FeedbackLaw linear_feedback(const Mat& K) {
  return {"linear", [K](const Vec& x) { return Vec(-K * x); },
          std::numeric_limits<double>::infinity()};
}

double jacobian_mismatch(const ControlAffineSystem& sys, const Vec& x, double step) {
  const int n = sys.n;
  Mat fd_f(n, n);
  std::vector<Mat> fd_g(sys.m, Mat(n, n));
  Vec fd_h(n);
  for (int i = 0; i < n; ++i) {
    Vec xp = x, xm = x;
    xp(i) += step;
    xm(i) -= step;
    fd_f.col(i) = (sys.f(xp) - sys.f(xm)) / (2 * step);
    const Mat dg = (sys.g(xp) - sys.g(xm)) / (2 * step);
    for (int j = 0; j < sys.m; ++j) fd_g[j].col(i) = dg.col(j);
    fd_h(i) = (sys.h(xp) - sys.h(xm)) / (2 * step);
  }
  auto rel = [](const Mat& a, const Mat& b) {
    return (a - b).norm() / std::max(1.0, b.norm());
  };
  double worst = rel(sys.Df(x), fd_f);
  const auto dg = sys.Dg(x);
  for (int j = 0; j < sys.m; ++j) worst = std::max(worst, rel(dg[j], fd_g[j]));
  worst = std::max(worst, rel(sys.Dh(x), fd_h));
  return worst;
}

}  // namespace hamflow
