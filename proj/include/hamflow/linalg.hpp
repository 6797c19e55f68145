#pragma once

#include <Eigen/Dense>

namespace hamflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Linear Hamiltonian matrix [[A, -B B^T], [-C^T C, -A^T]].
Mat hamiltonian_matrix(const Mat& A, const Mat& B, const Mat& C);

/// Stabilizing solution of P A + A^T P - P B B^T P + C^T C = 0, computed from
/// the stable invariant subspace of the Hamiltonian matrix.
Mat solve_care(const Mat& A, const Mat& B, const Mat& C);

/// Solves P F^T + F P = Q for Hurwitz F. For PSD Q the solution is NSD; a
/// positive eigenvalue in the result is reported as NotNegativeSemidefinite.
Mat solve_lyapunov(const Mat& F, const Mat& Q);

bool pbh_stabilizable(const Mat& A, const Mat& B);
bool pbh_detectable(const Mat& C, const Mat& A);

bool is_hurwitz(const Mat& M, double margin = 0.0);

/// Real part of the spectral abscissa max Re(lambda).
double spectral_abscissa(const Mat& M);

Mat care_residual(const Mat& P, const Mat& A, const Mat& B, const Mat& C);

/// J = [[0, I], [-I, 0]].
Mat symplectic_form(int n);

/// Block-diagonalizing change of variables for the linearized Hamiltonian
/// system. With (x, p) = L (xi, eta):
///   L^{-1} Ham L = diag(F, -F^T),  F = A - B B^T P1.
struct SymplecticData {
  Mat P1;
  Mat P2;
  Mat L;
  Mat Linv;
  Mat F;
  Mat Ham;

  int n() const { return static_cast<int>(P1.rows()); }
};

SymplecticData build_symplectic(const Mat& A, const Mat& B, const Mat& C);

/// Matrix exponential e^{M t}.
Mat expm(const Mat& M, double t = 1.0);

}  // namespace hamflow
