#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace hamflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

using VectorField = std::function<Vec(const Vec&)>;
using MatrixField = std::function<Mat(const Vec&)>;
using ScalarField = std::function<double(const Vec&)>;
using ColumnJacobians = std::function<std::vector<Mat>(const Vec&)>;

/// Control-affine plant x' = f(x) + g(x) u with running cost |u|^2/2 + h(x).
///
/// Jacobians are supplied alongside the maps: Df is n x n, Dg returns one
/// n x n Jacobian per input column of g, Dh is the gradient of h. D2h0 is the
/// Hessian of h at the origin, which fixes the quadratic part of the penalty.
struct ControlAffineSystem {
  std::string name;
  int n = 0;
  int m = 0;
  VectorField f;
  MatrixField g;
  ScalarField h;
  MatrixField Df;
  ColumnJacobians Dg;
  VectorField Dh;
  Mat D2h0;
};

/// Linear part at the origin: A = Df(0), B = g(0), C^T C = D^2 h(0).
struct LinearData {
  Mat A;
  Mat B;
  Mat C;  // r x n, r = rank of D^2 h(0)
};

/// Remainders of the decomposition f = A x + phi, g = B + g~, h = |Cx|^2/2 + h~.
Vec f_remainder(const ControlAffineSystem& sys, const LinearData& lin, const Vec& x);
Mat g_remainder(const ControlAffineSystem& sys, const LinearData& lin, const Vec& x);
double h_remainder(const ControlAffineSystem& sys, const LinearData& lin, const Vec& x);

LinearData linearize(const ControlAffineSystem& sys);

/// Builds x' = A x + B u with h = |Cx|^2 / 2.
ControlAffineSystem linear_system(const Mat& A, const Mat& B, const Mat& C);

struct GeneratorParams {
  double a = 1.0;
  double b = 0.5;
  double c = 1.0;
  double d = 0.5;
  double delta = 0.7853981633974483;
};

struct ExampleOptions {
  /// Weight of the pendulum penalty h = eps (x1^2 + x2^2).
  double epsilon = 0.01;
  GeneratorParams generator;
  /// Replaces the default penalty with h = x^T Q x / 2 when set.
  std::optional<Mat> penalty_Q;
};

/// Names accepted by example_system.
const std::vector<std::string>& example_names();

/// scalar | generator | pendulum | zero_dynamics | backstepping
ControlAffineSystem example_system(const std::string& name,
                                   const ExampleOptions& options = {});

/// Replaces the penalty of `sys` with h = x^T Q x / 2.
ControlAffineSystem with_quadratic_penalty(ControlAffineSystem sys, const Mat& Q);

struct FeedbackLaw {
  std::string name;
  VectorField k;
  /// Radius of the region where the law is known to stabilize; infinity for
  /// global laws.
  double domain_radius = 0.0;
};

FeedbackLaw zero_feedback(int m);
/// u = -K x.
FeedbackLaw linear_feedback(const Mat& K);

/// Two-block cascade
///   x1' = f1(x1) + g1(x1) x2
///   x2' = f2(x1, x2) + g2(x1, x2) u
/// with x1, x2, u of equal dimension and g1, g2 invertible.
struct CascadeSystem {
  std::string name;
  int block = 0;
  VectorField f1;
  MatrixField g1;
  MatrixField Df1;
  ColumnJacobians Dg1;
  /// The second block takes the stacked state (x1, x2).
  VectorField f2;
  MatrixField g2;
  MatrixField Df2;      // block x 2 block
  ColumnJacobians Dg2;  // per column, block x 2 block
  Mat D2h0;
  ScalarField h;
  VectorField Dh;
};

ControlAffineSystem to_system(const CascadeSystem& cascade);

/// The cascade x1' = x1^2 + (1 + x1^2) x2, x2' = x2^2 + u with
/// h = (x1^2 + x2^2) / 2.
CascadeSystem backstepping_cascade();

/// Virtual control alpha(x1) = g1(x1)^{-1} (-f1(x1) - x1).
Vec backstepping_alpha(const CascadeSystem& cascade, const Vec& x1);

/// Closed-loop Lyapunov function V = |x1|^2/2 + |x2 - alpha(x1)|^2/2.
double backstepping_lyapunov(const CascadeSystem& cascade, const Vec& x);

FeedbackLaw backstepping_feedback(const CascadeSystem& cascade);

/// C-infinity step: 0 for t <= 0, 1 for t >= 1, strictly increasing between.
double smoothstep(double t);
double smoothstep_derivative(double t);

struct CutoffSpec {
  double R = 1.0;
  int n1 = 0;
  int n2 = 0;

  /// phi_R(x2) = 1 - smoothstep(|x2| - R).
  double profile(const Vec& x2) const;
  Vec profile_gradient(const Vec& x2) const;
};

/// f~(x1, x2) = f(x1, phi_R(x2) x2), likewise for g; h is left untouched.
ControlAffineSystem cutoff_system(const ControlAffineSystem& sys, const CutoffSpec& spec);

struct GrowthCertificate {
  double exponent_p = 0.0;
  double growth_theta = 0.0;
  double c_f = 0.0;
  double c_g = 0.0;
  double c_h = 0.0;
  double rho = 0.0;
  std::vector<double> sample_radii;
  double fit_residual = 0.0;

  double f_exponent = 0.0;
  double g_exponent = 0.0;
  /// NaN when h vanishes on some shell (no coercivity).
  double h_exponent = 0.0;
  bool coercive = false;
  /// theta < 1 and h coercive.
  bool satisfied = false;

  std::optional<double> decay_rate;
  std::optional<double> decay_gain;
};

GrowthCertificate growth_certificate(const ControlAffineSystem& sys,
                                     const std::vector<double>& radii,
                                     int samples_per_shell,
                                     unsigned seed = 7);

/// Largest relative deviation between the supplied Jacobians (Df, Dg, Dh) and
/// central differences at x.
double jacobian_mismatch(const ControlAffineSystem& sys, const Vec& x, double step = 1e-6);

}  // namespace hamflow
