#include <limits>

#include "hamflow/error.hpp"
#include "hamflow/systems.hpp"

namespace hamflow {
namespace {

Eigen::PartialPivLU<Mat> checked_lu(const Mat& G, const char* which) {
  Eigen::FullPivLU<Mat> probe(G);
  const double scale = std::max(1.0, G.cwiseAbs().maxCoeff());
  probe.setThreshold(1e-12 * scale);
  if (!probe.isInvertible()) {
    throw Error(ErrorCode::SingularG, std::string(which) + " is singular at the queried point");
  }
  return Eigen::PartialPivLU<Mat>(G);
}

// D alpha = g1^{-1} (-Df1 - I - sum_j alpha_j Dg1_j), from differentiating
// g1 alpha = -f1 - x1.
Mat alpha_jacobian(const CascadeSystem& c, const Vec& x1, const Vec& alpha) {
  const int b = c.block;
  Mat rhs = -c.Df1(x1) - Mat::Identity(b, b);
  const auto dg1 = c.Dg1(x1);
  for (int j = 0; j < b; ++j) rhs -= alpha(j) * dg1[j];
  return checked_lu(c.g1(x1), "g1").solve(rhs);
}

}  // namespace

Vec backstepping_alpha(const CascadeSystem& c, const Vec& x1) {
  return checked_lu(c.g1(x1), "g1").solve(Vec(-c.f1(x1) - x1));
}

double backstepping_lyapunov(const CascadeSystem& c, const Vec& x) {
  const int b = c.block;
  const Vec x1 = x.head(b);
  const Vec z = x.tail(b) - backstepping_alpha(c, x1);
  return 0.5 * x1.squaredNorm() + 0.5 * z.squaredNorm();
}

FeedbackLaw backstepping_feedback(const CascadeSystem& c) {
  FeedbackLaw law;
  law.name = "backstepping";
  law.domain_radius = std::numeric_limits<double>::infinity();
  law.k = [c](const Vec& x) {
    const int b = c.block;
    const Vec x1 = x.head(b), x2 = x.tail(b);
    const Mat g1 = c.g1(x1);
    const Vec alpha = backstepping_alpha(c, x1);
    const Vec z = x2 - alpha;
    const Vec x1_dot = c.f1(x1) + g1 * x2;
    const Vec alpha_dot = alpha_jacobian(c, x1, alpha) * x1_dot;
    // With V1 = |x1|^2/2, DV1^T = x1.
    const Vec v = -c.f2(x) + alpha_dot - g1.transpose() * x1 - z;
    return Vec(checked_lu(c.g2(x), "g2").solve(v));
  };
  return law;
}

}  // namespace hamflow
