#include "hamflow/ode.hpp"

#include <algorithm>
#include <cmath>

#include "hamflow/error.hpp"

namespace hamflow {
namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                 a75 = -2187.0 / 6784, a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
// Dense output weights (Hairer & Wanner, dopri5 contd5).
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

// PI controller constants.
constexpr double kSafety = 0.9;
constexpr double kBeta = 0.04;
constexpr double kExpo = 0.2 - kBeta * 0.75;
constexpr double kFacMin = 0.2;
constexpr double kFacMax = 10.0;

double scaled_norm(const Vec& err, const Vec& y0, const Vec& y1, double rtol, double atol) {
  const int n = static_cast<int>(err.size());
  if (n == 0) return 0.0;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double sk = atol + rtol * std::max(std::abs(y0(i)), std::abs(y1(i)));
    const double r = err(i) / sk;
    acc += r * r;
  }
  return std::sqrt(acc / n);
}

double initial_step(const OdeRhs& rhs, double t0, const Vec& y0, const Vec& f0, double dir,
                    double span, const OdeOptions& opt) {
  const int n = static_cast<int>(y0.size());
  if (n == 0) return span;
  auto norm = [&](const Vec& v) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const double sk = opt.atol + opt.rtol * std::abs(y0(i));
      acc += (v(i) / sk) * (v(i) / sk);
    }
    return std::sqrt(acc / n);
  };
  const double dn0 = norm(y0), dn1 = norm(f0);
  double h = (dn0 < 1e-5 || dn1 < 1e-5) ? 1e-6 : 0.01 * dn0 / dn1;
  h = std::min(h, span);
  const Vec y1 = y0 + dir * h * f0;
  const Vec f1 = rhs(t0 + dir * h, y1);
  const double dn2 = norm(f1 - f0) / h;
  const double big = std::max(dn1, dn2);
  const double h1 = big <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / big, 0.2);
  return std::min({100.0 * h, h1, span});
}

}  // namespace

Vec DenseSegment::eval(double t) const {
  const double th = h == 0.0 ? 0.0 : (t - t0) / h;
  const double th1 = 1.0 - th;
  return coeff[0] + th * (coeff[1] + th1 * (coeff[2] + th * (coeff[3] + th1 * coeff[4])));
}

int Trajectory::interpolant_order() const {
  if (!dense.empty()) return 4;
  if (!derivatives.empty()) return 3;
  return 1;
}

std::size_t Trajectory::interval(double t) const {
  if (times.size() < 2) return 0;
  auto it = std::upper_bound(times.begin(), times.end(), t);
  std::size_t i = it == times.begin() ? 0 : static_cast<std::size_t>(it - times.begin()) - 1;
  return std::min(i, times.size() - 2);
}

Vec Trajectory::at(double t) const {
  if (times.empty()) return Vec();
  if (times.size() == 1 || t <= times.front()) return states.front();
  if (t >= times.back()) return states.back();
  const std::size_t i = interval(t);
  if (!dense.empty()) return dense[i].eval(t);
  const double ta = times[i], tb = times[i + 1];
  const double hh = tb - ta;
  const double s = (t - ta) / hh;
  if (!derivatives.empty()) {
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
    const double h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s);
    const double h11 = s * s * (s - 1);
    return h00 * states[i] + h10 * hh * derivatives[i] + h01 * states[i + 1] +
           h11 * hh * derivatives[i + 1];
  }
  return (1 - s) * states[i] + s * states[i + 1];
}

void Trajectory::validate() const {
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) {
      throw Error(ErrorCode::DimensionMismatch, "trajectory times are not strictly increasing");
    }
  }
  const int d = dim();
  for (const auto& s : states) {
    if (s.size() != d) throw Error(ErrorCode::DimensionMismatch, "nonuniform state samples");
  }
  if (states.size() != times.size()) {
    throw Error(ErrorCode::DimensionMismatch, "state count differs from time count");
  }
  if (!inputs.empty()) {
    if (inputs.size() != times.size()) {
      throw Error(ErrorCode::DimensionMismatch, "input count differs from time count");
    }
    for (const auto& u : inputs) {
      if (u.size() != inputs.front().size()) {
        throw Error(ErrorCode::DimensionMismatch, "nonuniform input samples");
      }
    }
  }
}

void Trajectory::reverse() {
  std::reverse(times.begin(), times.end());
  std::reverse(states.begin(), states.end());
  std::reverse(inputs.begin(), inputs.end());
  std::reverse(energy.begin(), energy.end());
  std::reverse(cost.begin(), cost.end());
  std::reverse(dense.begin(), dense.end());
  std::reverse(derivatives.begin(), derivatives.end());
}

void Trajectory::append(const Trajectory& other) {
  if (other.empty()) return;
  if (empty()) {
    *this = other;
    return;
  }
  const std::size_t skip = other.times.front() <= times.back() ? 1 : 0;
  const bool bridge = skip == 0;
  if (bridge && !dense.empty()) {
    // A gap between pieces has no continuous extension; fall back to a
    // linear segment.
    DenseSegment seg;
    seg.t0 = times.back();
    seg.h = other.times.front() - times.back();
    seg.coeff = {states.back(), Vec(other.states.front() - states.back()),
                 Vec::Zero(states.back().size()), Vec::Zero(states.back().size()),
                 Vec::Zero(states.back().size())};
    dense.push_back(seg);
  }
  auto tail = [skip](const auto& v) { return std::next(v.begin(), std::min(skip, v.size())); };
  times.insert(times.end(), tail(other.times), other.times.end());
  states.insert(states.end(), tail(other.states), other.states.end());
  if (!other.inputs.empty()) inputs.insert(inputs.end(), tail(other.inputs), other.inputs.end());
  if (!other.energy.empty()) energy.insert(energy.end(), tail(other.energy), other.energy.end());
  if (!other.cost.empty()) cost.insert(cost.end(), tail(other.cost), other.cost.end());
  if (!dense.empty() || !other.dense.empty()) {
    dense.insert(dense.end(), other.dense.begin(), other.dense.end());
  }
  if (!other.derivatives.empty()) {
    derivatives.insert(derivatives.end(), tail(other.derivatives), other.derivatives.end());
  }
  stats.steps += other.stats.steps;
  stats.rejected += other.stats.rejected;
  stats.evaluations += other.stats.evaluations;
  if (other.status != FlowStatus::Completed) status = other.status;
}

Trajectory integrate(const OdeRhs& rhs, double t0, const Vec& y0, double t1,
                     const OdeOptions& opt, const StepObserver& observer) {
  Trajectory traj;
  traj.stats.rtol = opt.rtol;
  traj.stats.atol = opt.atol;
  traj.times.push_back(t0);
  traj.states.push_back(y0);

  const double span = std::abs(t1 - t0);
  if (span == 0.0) return traj;
  const double dir = t1 > t0 ? 1.0 : -1.0;

  auto fail = [&](FlowStatus status, ErrorCode code, const std::string& msg) {
    traj.status = status;
    if (dir < 0) traj.reverse();
    if (opt.throw_on_failure) throw Error(code, msg);
    return traj;
  };

  Vec y = y0;
  if (!y.allFinite()) return fail(FlowStatus::NonFinite, ErrorCode::NonFiniteState, "initial state");
  Vec k1 = rhs(t0, y);
  ++traj.stats.evaluations;
  double h = opt.initial_step > 0.0 ? std::min(opt.initial_step, span)
                                    : initial_step(rhs, t0, y, k1, dir, span, opt);
  ++traj.stats.evaluations;
  h = std::min(h, opt.max_step);
  double t = t0;
  double facold = 1e-4;
  bool last_rejected = false;
  const double h_floor = opt.underflow_factor * span;

  while (dir * (t1 - t) > 0.0) {
    if (traj.stats.steps + traj.stats.rejected >= opt.max_steps) {
      return fail(FlowStatus::StepSizeUnderflow, ErrorCode::StepSizeUnderflow,
                  "maximum number of steps exceeded");
    }
    if (h < h_floor) {
      return fail(FlowStatus::StepSizeUnderflow, ErrorCode::StepSizeUnderflow,
                  "step size underflow at t = " + std::to_string(t));
    }
    bool final_step = false;
    if (h >= dir * (t1 - t)) {
      h = dir * (t1 - t);
      final_step = true;
    }
    const double hs = dir * h;
    const Vec k2 = rhs(t + c2 * hs, y + hs * a21 * k1);
    const Vec k3 = rhs(t + c3 * hs, y + hs * (a31 * k1 + a32 * k2));
    const Vec k4 = rhs(t + c4 * hs, y + hs * (a41 * k1 + a42 * k2 + a43 * k3));
    const Vec k5 = rhs(t + c5 * hs, y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const Vec k6 = rhs(t + hs, y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    const Vec y_new = y + hs * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    const Vec k7 = rhs(t + hs, y_new);
    traj.stats.evaluations += 6;

    const Vec err_vec = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double err = scaled_norm(err_vec, y, y_new, opt.rtol, opt.atol);
    if (!std::isfinite(err) || !y_new.allFinite()) {
      // Treat as a rejected step with a sharp reduction.
      ++traj.stats.rejected;
      h *= kFacMin;
      last_rejected = true;
      continue;
    }

    const double fac11 = std::pow(std::max(err, 1e-300), kExpo);
    if (err <= 1.0) {
      double fac = fac11 / std::pow(facold, kBeta);
      fac = std::clamp(fac / kSafety, 1.0 / kFacMax, 1.0 / kFacMin);
      double h_new = h / fac;
      if (last_rejected) h_new = std::min(h_new, h);
      facold = std::max(err, 1e-4);

      if (opt.keep_dense) {
        DenseSegment seg;
        seg.t0 = t;
        seg.h = hs;
        const Vec ydiff = y_new - y;
        const Vec bspl = hs * k1 - ydiff;
        seg.coeff[0] = y;
        seg.coeff[1] = ydiff;
        seg.coeff[2] = bspl;
        seg.coeff[3] = ydiff - hs * k7 - bspl;
        seg.coeff[4] = hs * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
        traj.dense.push_back(std::move(seg));
      }
      t = final_step ? t1 : t + hs;
      y = y_new;
      k1 = k7;
      ++traj.stats.steps;
      traj.times.push_back(t);
      traj.states.push_back(y);
      last_rejected = false;

      if (y.lpNorm<Eigen::Infinity>() > opt.escape_bound) {
        return fail(FlowStatus::Escape, ErrorCode::StepSizeUnderflow,
                    "finite escape: |z| exceeded " + std::to_string(opt.escape_bound) +
                        " at t = " + std::to_string(t));
      }
      if (observer && !observer(t, y)) {
        traj.status = FlowStatus::Stopped;
        break;
      }
      h = std::min(h_new, opt.max_step);
    } else {
      ++traj.stats.rejected;
      h /= std::min(1.0 / kFacMin, fac11 / kSafety);
      last_rejected = true;
    }
  }
  if (dir < 0) traj.reverse();
  return traj;
}

}  // namespace hamflow
