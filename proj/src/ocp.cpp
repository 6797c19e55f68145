#include "hamflow/ocp.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

#include "hamflow/parallel.hpp"

namespace hamflow {

std::function<Vec(double)> linear_bvp_guess(const SymplecticData& sym, const Vec& x0, const Vec& xf,
                                            double T) {
  const int n = sym.n();
  const Mat eFT = expm(sym.F, T);
  Mat M(2 * n, 2 * n);
  M << Mat::Identity(n, n), sym.P2 * eFT.transpose(), eFT, sym.P2;
  Vec rhs(2 * n);
  rhs << x0, xf;
  const Vec sol = M.fullPivLu().solve(rhs);
  const Vec xi0 = sol.head(n), etaT = sol.tail(n);
  const Mat F = sym.F, L = sym.L;
  return [F, L, xi0, etaT, T, n](double t) {
    Vec w(2 * n);
    w << expm(F, t) * xi0, expm(F.transpose(), T - t) * etaT;
    return Vec(L * w);
  };
}

namespace {

struct Shooter {
  const HamiltonianSystem& hsys;
  int n;
  int K;
  std::vector<double> knots;
  OdeOptions ode;

  // Unknowns: p0, then z_1..z_{K-1}.
  int size() const { return n + 2 * n * (K - 1); }

  Vec start(const Vec& w, const Vec& x0, int k) const {
    if (k == 0) {
      Vec z(2 * n);
      z << x0, w.head(n);
      return z;
    }
    return w.segment(n + 2 * n * (k - 1), 2 * n);
  }

  bool propagate(const Vec& z, int k, Vec& out) const {
    const Trajectory tr = integrate([this](double, const Vec& y) { return hsys.rhs(y); },
                                    knots[k], z, knots[k + 1], ode);
    if (tr.status != FlowStatus::Completed) return false;
    out = tr.states.back();
    return out.allFinite();
  }

  // Residual: defects z_{k+1} - phi_k(z_k) then x-part of phi_{K-1} - xf.
  bool residual(const Vec& w, const Vec& x0, const Vec& xf, Vec& R,
                std::vector<Vec>* ends = nullptr) const {
    R.resize(size());
    if (ends) ends->assign(K, Vec());
    for (int k = 0; k < K; ++k) {
      Vec e;
      if (!propagate(start(w, x0, k), k, e)) return false;
      if (ends) (*ends)[k] = e;
      if (k + 1 < K) {
        R.segment(2 * n * k, 2 * n) = e - start(w, x0, k + 1);
      } else {
        R.tail(n) = e.head(n) - xf;
      }
    }
    return true;
  }

  bool jacobian(const Vec& w, const Vec& x0, const std::vector<Vec>& ends, Mat& J) const {
    const int N = size();
    J = Mat::Zero(N, N);
    for (int k = 0; k < K; ++k) {
      const Vec z = start(w, x0, k);
      const int first = k == 0 ? n : 0;  // x0 is fixed on the first segment
      Mat Phi = Mat::Zero(2 * n, 2 * n);
      for (int j = first; j < 2 * n; ++j) {
        const double step = 1e-7 * std::max(1.0, std::abs(z(j)));
        Vec zp = z;
        zp(j) += step;
        Vec e;
        if (!propagate(zp, k, e)) {
          zp(j) = z(j) - step;
          if (!propagate(zp, k, e)) return false;
          Phi.col(j) = (ends[k] - e) / step;
        } else {
          Phi.col(j) = (e - ends[k]) / step;
        }
      }
      const int row = 2 * n * k;
      const int col = k == 0 ? 0 : n + 2 * n * (k - 1);
      if (k + 1 < K) {
        if (k == 0) {
          J.block(row, 0, 2 * n, n) = Phi.rightCols(n);
        } else {
          J.block(row, col, 2 * n, 2 * n) = Phi;
        }
        J.block(row, n + 2 * n * k, 2 * n, 2 * n) = -Mat::Identity(2 * n, 2 * n);
      } else {
        if (k == 0) {
          J.block(row, 0, n, n) = Phi.topRightCorner(n, n);
        } else {
          J.block(row, col, n, 2 * n) = Phi.topRows(n);
        }
      }
    }
    return true;
  }

  Vec pack(const std::function<Vec(double)>& guess) const {
    Vec w(size());
    w.head(n) = guess(0.0).tail(n);
    for (int k = 1; k < K; ++k) w.segment(n + 2 * n * (k - 1), 2 * n) = guess(knots[k]);
    return w;
  }

  double defect(const Vec& R) const {
    return K > 1 ? R.head(2 * n * (K - 1)).lpNorm<Eigen::Infinity>() : 0.0;
  }
};

struct NewtonOutcome {
  bool converged = false;
  Vec w;
  double merit = std::numeric_limits<double>::infinity();
  int iterations = 0;
};

NewtonOutcome newton(const Shooter& sh, Vec w, const Vec& x0, const Vec& xf, double tol,
                     int max_iter) {
  NewtonOutcome out;
  const int n = sh.n;
  Vec R;
  std::vector<Vec> ends;
  if (!sh.residual(w, x0, xf, R, &ends)) {
    out.w = w;
    return out;
  }
  auto done = [&](const Vec& r) {
    return r.tail(n).norm() <= tol && sh.defect(r) <= 0.1 * tol;
  };
  out.w = w;
  out.merit = R.norm();
  for (int it = 0; it < max_iter; ++it) {
    if (done(R)) {
      out.converged = true;
      return out;
    }
    Mat J;
    if (!sh.jacobian(w, x0, ends, J)) return out;
    const Vec dw = J.partialPivLu().solve(-R);
    if (!dw.allFinite()) return out;
    double lambda = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 12; ++ls, lambda *= 0.5) {
      const Vec wt = w + lambda * dw;
      Vec Rt;
      std::vector<Vec> et;
      if (!sh.residual(wt, x0, xf, Rt, &et)) continue;
      if (Rt.norm() < (1.0 - 1e-4 * lambda) * R.norm() || done(Rt)) {
        w = wt;
        R = Rt;
        ends = et;
        accepted = true;
        break;
      }
    }
    ++out.iterations;
    out.w = w;
    out.merit = R.norm();
    if (!accepted) return out;
  }
  out.converged = done(R);
  return out;
}

}  // namespace

double trajectory_cost(const HamiltonianSystem& hsys, const Trajectory& traj) {
  const int n = hsys.n();
  const auto& sys = hsys.base();
  auto L = [&](double t) {
    const Vec z = traj.at(t);
    const Vec x = z.head(n);
    const Vec u = optimal_feedback(hsys, x, z.tail(n));
    return 0.5 * u.squaredNorm() + sys.h(x);
  };
  double J = 0.0;
  for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
    const double a = traj.times[i], b = traj.times[i + 1];
    // Two Simpson panels per step.
    const double m = 0.5 * (a + b);
    J += (m - a) / 6.0 * (L(a) + 4.0 * L(0.5 * (a + m)) + L(m));
    J += (b - m) / 6.0 * (L(m) + 4.0 * L(0.5 * (m + b)) + L(b));
  }
  return J;
}

BvpSolution solve_finite_bvp(const HamiltonianSystem& hsys, const Vec& x0, const Vec& xf, double T,
                             const BvpOptions& options) {
  const int n = hsys.n();
  if (!(T > 0.0)) throw Error(ErrorCode::ConfigError, "horizon must be positive");
  if (x0.size() != n || xf.size() != n) {
    throw Error(ErrorCode::DimensionMismatch, "boundary data dimension mismatch");
  }

  double seg = options.segment_time;
  if (seg <= 0.0) {
    double rate = 0.0;
    if (hsys.has_symplectic()) {
      rate = hsys.sym().Ham.eigenvalues().real().cwiseAbs().maxCoeff();
    } else {
      const LinearData& lin = hsys.linear();
      Mat Ham = hamiltonian_matrix(lin.A, lin.B, lin.C);
      rate = Ham.eigenvalues().real().cwiseAbs().maxCoeff();
    }
    seg = std::min(1.0, 3.0 / std::max(rate, 0.1));
  }
  Shooter sh{hsys, n, std::max(1, static_cast<int>(std::ceil(T / seg - 1e-9))), {}, {}};
  for (int k = 0; k <= sh.K; ++k) sh.knots.push_back(T * k / sh.K);
  sh.ode.rtol = options.integrator_tol;
  sh.ode.atol = options.integrator_tol;
  sh.ode.throw_on_failure = false;
  sh.ode.keep_dense = false;
  sh.ode.escape_bound = options.escape_bound;

  std::function<Vec(double)> guess = options.guess;
  if (!guess) {
    if (hsys.has_symplectic()) {
      guess = linear_bvp_guess(hsys.sym(), x0, xf, T);
    } else {
      guess = [x0, xf, T, n](double t) {
        Vec z = Vec::Zero(2 * n);
        z.head(n) = x0 + (xf - x0) * (t / T);
        return z;
      };
    }
  }
  Vec w = sh.pack(guess);
  if (options.p0_guess) w.head(n) = *options.p0_guess;
  const double scale = std::max({w.size() ? w.lpNorm<Eigen::Infinity>() : 0.0,
                                 x0.lpNorm<Eigen::Infinity>(), xf.lpNorm<Eigen::Infinity>()});
  sh.ode.escape_bound = options.escape_bound * (1.0 + scale);

  NewtonOutcome best = newton(sh, w, x0, xf, options.tol, options.max_iter);
  bool continued = false;
  if (!best.converged && options.continuation) {
    // Continuation in the scale of the boundary data, starting from the
    // trivial solution at scale 0.
    continued = true;
    Vec wc = Vec::Zero(sh.size());
    double s = 0.0, ds = 0.25;
    NewtonOutcome cur;
    cur.w = wc;
    while (s < 1.0 && ds >= 1e-3) {
      const double st = std::min(1.0, s + ds);
      NewtonOutcome trial = newton(sh, cur.w, st * x0, st * xf, options.tol, options.max_iter);
      if (trial.converged) {
        s = st;
        cur = trial;
        ds *= 1.5;
      } else {
        ds *= 0.5;
      }
    }
    if (s >= 1.0) {
      cur.iterations += best.iterations;
      best = cur;
    }
  }
  if (!best.converged) {
    if (!std::isfinite(best.merit)) {
      throw Error(ErrorCode::IntegratorEscape,
                  "shooting trajectory escaped for the initial guess at T = " + std::to_string(T));
    }
    throw ShootingDivergedError("shooting did not converge at T = " + std::to_string(T) +
                                    " (residual " + std::to_string(best.merit) + ")",
                                best.merit, Vec(best.w.head(n)));
  }

  // Assemble the dense trajectory from the converged segments.
  BvpSolution sol;
  OdeOptions ode = sh.ode;
  ode.keep_dense = true;
  Trajectory traj;
  double defect = 0.0;
  Vec prev_end;
  for (int k = 0; k < sh.K; ++k) {
    const Vec z = sh.start(best.w, x0, k);
    if (k > 0) defect = std::max(defect, (z - prev_end).lpNorm<Eigen::Infinity>());
    Trajectory piece = integrate([&hsys](double, const Vec& y) { return hsys.rhs(y); },
                                 sh.knots[k], z, sh.knots[k + 1], ode);
    prev_end = piece.states.back();
    traj.append(piece);
  }
  for (const Vec& z : traj.states) {
    traj.energy.push_back(hsys.hval(z));
    traj.inputs.push_back(optimal_feedback(hsys, z.head(n), z.tail(n)));
  }
  sol.traj = std::move(traj);
  sol.p0 = best.w.head(n);
  sol.residual = (prev_end.head(n) - xf).norm();
  sol.defect = defect;
  sol.iterations = best.iterations;
  sol.segments = sh.K;
  sol.used_continuation = continued;
  sol.cost = trajectory_cost(hsys, sol.traj);
  return sol;
}

ResidenceResult residence_measure(const std::function<double(double)>& signal,
                                  const std::vector<double>& grid, double epsilon,
                                  int subdivisions) {
  ResidenceResult res;
  if (grid.size() < 2) return res;
  std::vector<double> ts;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    for (int j = 0; j < subdivisions; ++j) {
      ts.push_back(grid[i] + (grid[i + 1] - grid[i]) * j / subdivisions);
    }
  }
  ts.push_back(grid.back());
  auto above = [&](double t) { return signal(t) > epsilon; };
  auto crossing = [&](double a, double b, bool a_above) {
    for (int it = 0; it < 60 && b - a > 1e-14 * std::max(1.0, std::abs(b)); ++it) {
      const double m = 0.5 * (a + b);
      if (above(m) == a_above) {
        a = m;
      } else {
        b = m;
      }
    }
    return 0.5 * (a + b);
  };
  bool state = above(ts.front());
  double open = ts.front();
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    const bool next = above(ts[i + 1]);
    if (next == state) continue;
    const double tc = crossing(ts[i], ts[i + 1], state);
    if (state) {
      res.intervals.emplace_back(open, tc);
      if (!res.first_exit) res.first_exit = tc;
    } else {
      open = tc;
      res.last_entry = tc;
    }
    state = next;
  }
  if (state) res.intervals.emplace_back(open, ts.back());
  for (const auto& [a, b] : res.intervals) res.measure += b - a;
  return res;
}

ResidenceResult turnpike_metric(const Trajectory& traj, double epsilon, int n,
                                const std::function<Vec(const Vec&)>& control) {
  if (traj.size() < 2) return {};
  const int nx = n < 0 ? traj.dim() : n;
  auto input = [&](double t) -> Vec {
    if (control) return control(traj.at(t));
    if (traj.inputs.empty()) return Vec();
    const std::size_t i = traj.interval(t);
    const double a = traj.times[i], b = traj.times[i + 1];
    const double s = std::clamp((t - a) / (b - a), 0.0, 1.0);
    return (1.0 - s) * traj.inputs[i] + s * traj.inputs[i + 1];
  };
  auto signal = [&](double t) {
    const Vec u = input(t);
    return traj.at(t).head(nx).norm() + (u.size() ? u.norm() : 0.0);
  };
  return residence_measure(signal, traj.times, epsilon);
}

namespace {

// Splices a solution of horizon T1 into a guess for T2 >= T1: the first and
// last halves are reused and the gap is filled with the origin.
std::function<Vec(double)> spliced_guess(const Trajectory& traj, double T1, double T2) {
  const double half = 0.5 * T1, shift = T2 - T1;
  return [traj, half, shift](double t) -> Vec {
    if (t <= half) return traj.at(t);
    if (t >= half + shift) return traj.at(t - shift);
    return Vec::Zero(traj.dim());
  };
}

}  // namespace

TurnpikeReport turnpike_report(const HamiltonianSystem& hsys, const Vec& x0, const Vec& xf,
                               const std::vector<double>& horizons,
                               const TurnpikeOptions& options) {
  TurnpikeReport rep;
  rep.epsilon = options.epsilon;
  rep.uniformity_bound = options.uniformity_bound;
  rep.entries.resize(horizons.size());
  const int n = hsys.n();
  auto control = [&hsys, n](const Vec& z) {
    return optimal_feedback(hsys, z.head(n), z.tail(n));
  };

  auto solve_one = [&](std::size_t i, const std::function<Vec(double)>& guess) {
    TurnpikeEntry& e = rep.entries[i];
    e.T = horizons[i];
    BvpOptions bo = options.bvp;
    if (guess) bo.guess = guess;
    try {
      e.solution = solve_finite_bvp(hsys, x0, xf, e.T, bo);
      e.converged = true;
      e.residual = e.solution.residual;
      e.iterations = e.solution.iterations;
      e.cost = e.solution.cost;
      const ResidenceResult r = turnpike_metric(e.solution.traj, options.epsilon, n, control);
      e.residence = r.measure;
      e.first_exit = r.first_exit;
      e.last_entry = r.last_entry;
    } catch (const ShootingDivergedError& err) {
      e.error = err.what();
      e.residual = err.best_residual();
    } catch (const Error& err) {
      e.error = err.what();
    }
  };

  if (options.warm_start) {
    for (std::size_t i = 0; i < horizons.size(); ++i) {
      std::function<Vec(double)> guess;
      if (i > 0 && rep.entries[i - 1].converged && horizons[i] >= horizons[i - 1]) {
        guess = spliced_guess(rep.entries[i - 1].solution.traj, horizons[i - 1], horizons[i]);
      }
      solve_one(i, guess);
      if (!rep.entries[i].converged && guess) solve_one(i, {});
    }
  } else {
    parallel_for(horizons.size(), [&](std::size_t i) { solve_one(i, {}); });
  }

  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  rep.all_converged = !rep.entries.empty();
  for (const auto& e : rep.entries) {
    if (!e.converged) {
      rep.all_converged = false;
      continue;
    }
    lo = std::min(lo, e.residence);
    hi = std::max(hi, e.residence);
  }
  if (hi == 0.0) {
    rep.uniformity = 1.0;
  } else if (lo == 0.0) {
    rep.uniformity = std::numeric_limits<double>::infinity();
  } else {
    rep.uniformity = hi / lo;
  }
  rep.uniform = rep.all_converged && rep.uniformity <= options.uniformity_bound;

  if (options.stable_chart) {
    const auto cov = coverage(*options.stable_chart, hsys, {x0}, options.newton_tol);
    rep.x0_status = cov.entries.front().status;
  }
  if (options.unstable_chart) {
    const auto cov = coverage(*options.unstable_chart, hsys, {xf}, options.newton_tol);
    rep.xf_status = cov.entries.front().status;
  }
  if (rep.x0_status && rep.xf_status) {
    rep.sufficient_condition = *rep.x0_status == CoverageStatus::Covered &&
                               *rep.xf_status == CoverageStatus::Covered;
  }
  return rep;
}

InfiniteCost infinite_cost(const ControlAffineSystem& sys, const FeedbackLaw& feedback,
                           const Vec& x0, double tail_tol, double t_max, double tol) {
  const int n = sys.n;
  InfiniteCost out;
  out.kappa = 1.0;
  try {
    const LinearData lin = linearize(sys);
    const Mat P1 = solve_care(lin.A, lin.B, lin.C);
    const double lmax = Eigen::SelfAdjointEigenSolver<Mat>(P1).eigenvalues().maxCoeff();
    out.kappa = std::max(0.5 * lmax, 1.0);
  } catch (const Error&) {
  }
  const double r_switch = std::sqrt(tail_tol / out.kappa);
  if (x0.norm() < r_switch) {
    out.tail_bound = out.kappa * x0.squaredNorm();
    return out;
  }
  OdeOptions opt;
  opt.rtol = tol;
  opt.atol = tol;
  opt.keep_dense = false;
  opt.throw_on_failure = false;
  Vec z0(n + 1);
  z0 << x0, 0.0;
  bool reached = false;
  const Trajectory tr = integrate(
      [&](double, const Vec& z) {
        const Vec x = z.head(n);
        const Vec u = feedback.k(x);
        Vec dz(n + 1);
        dz.head(n) = sys.f(x) + sys.g(x) * u;
        dz(n) = 0.5 * u.squaredNorm() + sys.h(x);
        return dz;
      },
      0.0, z0, t_max, opt, [&](double, const Vec& z) {
        reached = z.head(n).norm() < r_switch;
        return !reached;
      });
  if (!reached) {
    throw Error(ErrorCode::NoConvergence,
                "closed loop did not enter |x| < " + std::to_string(r_switch) + " by t = " +
                    std::to_string(t_max));
  }
  const Vec& zend = tr.states.back();
  out.value = zend(n);
  out.t_switch = tr.times.back();
  out.tail_bound = out.kappa * zend.head(n).squaredNorm();
  return out;
}

}  // namespace hamflow
