#include <cmath>

#include "hamflow/error.hpp"
#include "hamflow/systems.hpp"

namespace hamflow {
namespace {

// e^{-1/t} for t > 0; flushed to zero below 1e-8 where it underflows anyway.
double bump(double t) { return t < 1e-8 ? 0.0 : std::exp(-1.0 / t); }
double bump_derivative(double t) { return t < 1e-8 ? 0.0 : std::exp(-1.0 / t) / (t * t); }

}  // namespace

double smoothstep(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  const double a = bump(t), b = bump(1.0 - t);
  return a / (a + b);
}

double smoothstep_derivative(double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  const double a = bump(t), b = bump(1.0 - t);
  const double da = bump_derivative(t), db = -bump_derivative(1.0 - t);
  const double s = a + b;
  return (da * b - a * db) / (s * s);
}

double CutoffSpec::profile(const Vec& x2) const { return 1.0 - smoothstep(x2.norm() - R); }

Vec CutoffSpec::profile_gradient(const Vec& x2) const {
  const double r = x2.norm();
  if (r == 0.0) return Vec::Zero(x2.size());
  return Vec(-smoothstep_derivative(r - R) / r * x2);
}

ControlAffineSystem cutoff_system(const ControlAffineSystem& sys, const CutoffSpec& spec) {
  if (spec.n1 < 0 || spec.n2 < 0 || spec.n1 + spec.n2 != sys.n) {
    throw Error(ErrorCode::BadPartition, "split (" + std::to_string(spec.n1) + ", " +
                                             std::to_string(spec.n2) + ") does not match n = " +
                                             std::to_string(sys.n));
  }
  const int n1 = spec.n1, n2 = spec.n2, n = sys.n;

  // x -> (x1, phi(x2) x2) and its Jacobian.
  auto squash = [spec, n1, n2](const Vec& x) {
    Vec y = x;
    y.tail(n2) *= spec.profile(x.tail(n2));
    return y;
  };
  auto squash_jacobian = [spec, n, n1, n2](const Vec& x) {
    Mat J = Mat::Identity(n, n);
    const Vec x2 = x.tail(n2);
    J.bottomRightCorner(n2, n2) = spec.profile(x2) * Mat::Identity(n2, n2) +
                                  x2 * spec.profile_gradient(x2).transpose();
    (void)n1;
    return J;
  };

  ControlAffineSystem out = sys;
  out.name = sys.name + "_cutoff";
  out.f = [sys, squash](const Vec& x) { return sys.f(squash(x)); };
  out.g = [sys, squash](const Vec& x) { return sys.g(squash(x)); };
  out.Df = [sys, squash, squash_jacobian](const Vec& x) {
    return Mat(sys.Df(squash(x)) * squash_jacobian(x));
  };
  out.Dg = [sys, squash, squash_jacobian](const Vec& x) {
    const Mat J = squash_jacobian(x);
    auto cols = sys.Dg(squash(x));
    for (auto& c : cols) c = c * J;
    return cols;
  };
  return out;
}

}  // namespace hamflow
