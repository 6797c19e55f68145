#include <cmath>
#include <limits>
#include <random>

#include "hamflow/error.hpp"
#include "hamflow/systems.hpp"

namespace hamflow {
namespace {

std::vector<Vec> shell_directions(int n, int count, unsigned seed) {
  std::vector<Vec> dirs;
  if (n == 1) {
    dirs.push_back(Vec::Ones(1));
    dirs.push_back(-Vec::Ones(1));
    return dirs;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  while (static_cast<int>(dirs.size()) < count) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = normal(rng);
    if (v.norm() > 1e-12) dirs.push_back(v.normalized());
  }
  return dirs;
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double rms = 0.0;
};

LineFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys) {
  const int k = static_cast<int>(xs.size());
  Mat X(k, 2);
  Vec y(k);
  for (int i = 0; i < k; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = xs[i];
    y(i) = ys[i];
  }
  const Vec coef = X.colPivHouseholderQr().solve(y);
  LineFit fit{coef(1), coef(0), 0.0};
  fit.rms = std::sqrt((X * coef - y).squaredNorm() / k);
  return fit;
}

constexpr double kFloor = 1e-300;

}  // namespace

GrowthCertificate growth_certificate(const ControlAffineSystem& sys,
                                     const std::vector<double>& radii, int samples_per_shell,
                                     unsigned seed) {
  if (radii.size() < 2 || samples_per_shell < 1) {
    throw Error(ErrorCode::InsufficientSamples, "need at least 2 shells and 1 sample per shell");
  }
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (radii[i] <= 0.0 || (i > 0 && radii[i] <= radii[i - 1])) {
      throw Error(ErrorCode::InsufficientSamples, "radii must be positive and increasing");
    }
  }

  const auto dirs = shell_directions(sys.n, samples_per_shell, seed);
  const std::size_t shells = radii.size();
  std::vector<double> max_f(shells, 0.0), max_g(shells, 0.0), min_h(shells);
  for (std::size_t s = 0; s < shells; ++s) {
    double lo = std::numeric_limits<double>::infinity();
    for (const Vec& d : dirs) {
      const Vec x = radii[s] * d;
      max_f[s] = std::max(max_f[s], sys.f(x).norm());
      max_g[s] = std::max(max_g[s], sys.g(x).operatorNorm());
      lo = std::min(lo, sys.h(x));
    }
    min_h[s] = lo;
  }

  std::vector<double> log_r, log_f, log_g;
  for (std::size_t s = 0; s < shells; ++s) {
    log_r.push_back(std::log(radii[s]));
    log_f.push_back(std::log(std::max(max_f[s], kFloor)));
    log_g.push_back(std::log(std::max(max_g[s], kFloor)));
  }
  const LineFit ff = fit_line(log_r, log_f);
  const LineFit fg = fit_line(log_r, log_g);

  GrowthCertificate cert;
  cert.sample_radii = radii;
  cert.f_exponent = ff.slope;
  cert.g_exponent = fg.slope;
  cert.fit_residual = std::max(ff.rms, fg.rms);

  // Coercivity: the outermost run of shells on which min h > 0.
  std::size_t first = shells;
  while (first > 0 && min_h[first - 1] > 0.0) --first;
  cert.coercive = shells - first >= 2;
  if (cert.coercive) {
    std::vector<double> lr, lh;
    for (std::size_t s = first; s < shells; ++s) {
      lr.push_back(std::log(radii[s]));
      lh.push_back(std::log(min_h[s]));
    }
    const LineFit fh = fit_line(lr, lh);
    cert.h_exponent = fh.slope;
    cert.fit_residual = std::max(cert.fit_residual, fh.rms);
    cert.exponent_p = fh.slope;
    cert.rho = radii[first];
    double ratio = std::numeric_limits<double>::infinity();
    for (std::size_t s = first; s < shells; ++s) {
      ratio = std::min(ratio, min_h[s] / std::pow(radii[s], cert.exponent_p));
    }
    cert.c_h = 0.5 * ratio;
  } else {
    cert.h_exponent = std::numeric_limits<double>::quiet_NaN();
    cert.exponent_p = 0.0;
    cert.rho = std::numeric_limits<double>::infinity();
  }

  const double p = cert.exponent_p;
  cert.growth_theta = std::max({0.0, cert.f_exponent - p, cert.g_exponent - 0.5 * p});
  for (std::size_t s = 0; s < shells; ++s) {
    cert.c_f = std::max(cert.c_f, max_f[s] / std::pow(radii[s], cert.f_exponent));
    cert.c_g = std::max(cert.c_g, max_g[s] / std::pow(radii[s], cert.g_exponent));
  }
  cert.c_f = std::max(cert.c_f, kFloor);
  cert.c_g = std::max(cert.c_g, kFloor);
  cert.satisfied = cert.coercive && cert.exponent_p > 0.0 && cert.growth_theta < 1.0;
  return cert;
}

}  // namespace hamflow
