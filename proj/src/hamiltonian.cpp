#include "hamflow/hamiltonian.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>

#include "hamflow/error.hpp"

namespace hamflow {

HamiltonianSystem::HamiltonianSystem(ControlAffineSystem base, LinearData lin,
                                     std::optional<SymplecticData> sym, bool reversed)
    : base_(std::move(base)), lin_(std::move(lin)), sym_(std::move(sym)), reversed_(reversed) {}

const SymplecticData& HamiltonianSystem::sym() const {
  if (!sym_) {
    throw Error(ErrorCode::NotStabilizable,
                "no symplectic data for '" + base_.name + "': " + sym_error_);
  }
  return *sym_;
}

Vec HamiltonianSystem::rhs(const Vec& z) const {
  const int n = base_.n;
  const Vec x = z.head(n), p = z.tail(n);
  const Mat g = base_.g(x);
  const Vec u = -g.transpose() * p;
  Vec dz(2 * n);
  dz.head(n) = base_.f(x) + g * u;
  Mat drift = base_.Df(x).transpose();
  const auto dg = base_.Dg(x);
  for (int j = 0; j < base_.m; ++j) drift += u(j) * dg[j].transpose();
  dz.tail(n) = -drift * p - base_.Dh(x);
  if (reversed_) dz = -dz;
  return dz;
}

double HamiltonianSystem::hval(const Vec& x, const Vec& p) const {
  const double H =
      p.dot(base_.f(x)) - 0.5 * (base_.g(x).transpose() * p).squaredNorm() + base_.h(x);
  return reversed_ ? -H : H;
}

HamiltonianSystem HamiltonianSystem::time_reversed() const {
  HamiltonianSystem out = *this;
  out.reversed_ = !reversed_;
  return out;
}

Splitting HamiltonianSystem::stable_splitting() const {
  const SymplecticData& s = sym();
  const int n = base_.n;
  Splitting sp;
  if (!reversed_) {
    sp.T = s.L;
    sp.Tinv = s.Linv;
    sp.Fs = s.F;
    sp.Fu = -s.F.transpose();
  } else {
    // Under t -> -t the linear part becomes diag(-F, F^T) in (xi, eta); put
    // eta first so the stable block leads.
    Mat swap = Mat::Zero(2 * n, 2 * n);
    swap.topRightCorner(n, n) = Mat::Identity(n, n);
    swap.bottomLeftCorner(n, n) = Mat::Identity(n, n);
    sp.T = s.L * swap;
    sp.Tinv = swap * s.Linv;
    sp.Fs = s.F.transpose();
    sp.Fu = -s.F;
  }
  return sp;
}

HamiltonianSystem build_hamiltonian(const ControlAffineSystem& sys) {
  LinearData lin = linearize(sys);
  std::optional<SymplecticData> sym;
  std::string why;
  try {
    sym = build_symplectic(lin.A, lin.B, lin.C);
  } catch (const Error& e) {
    why = e.what();
  }
  HamiltonianSystem hs(sys, std::move(lin), std::move(sym));
  hs.sym_error_ = why;
  return hs;
}

Vec optimal_feedback(const HamiltonianSystem& hsys, const Vec& x, const Vec& p) {
  return -hsys.base().g(x).transpose() * p;
}

Trajectory flow(const HamiltonianSystem& hsys, const Vec& z0, double t_span,
                const FlowOptions& options, const StepObserver& observer) {
  OdeOptions opt;
  opt.rtol = options.tol;
  opt.atol = options.tol;
  opt.escape_bound = options.escape_bound;
  opt.throw_on_failure = options.throw_on_failure;
  Trajectory traj = integrate([&hsys](double, const Vec& z) { return hsys.rhs(z); }, 0.0, z0,
                              t_span, opt, observer);
  const int n = hsys.n();
  traj.energy.reserve(traj.size());
  traj.inputs.reserve(traj.size());
  for (const Vec& z : traj.states) {
    traj.energy.push_back(hsys.hval(z));
    traj.inputs.push_back(optimal_feedback(hsys, z.head(n), z.tail(n)));
  }
  return traj;
}

double max_energy_drift(const Trajectory& traj) {
  if (traj.energy.empty()) return 0.0;
  // max - min bounds the drift from the initial point whichever end of the
  // storage it sits at.
  const auto [lo, hi] = std::minmax_element(traj.energy.begin(), traj.energy.end());
  return *hi - *lo;
}

std::pair<Vec, Vec> to_xi_eta(const SymplecticData& sym, const Vec& x, const Vec& p) {
  const int n = sym.n();
  Vec z(2 * n);
  z << x, p;
  const Vec w = sym.Linv * z;
  return {w.head(n), w.tail(n)};
}

std::pair<Vec, Vec> from_xi_eta(const SymplecticData& sym, const Vec& xi, const Vec& eta) {
  const Vec x = xi + sym.P2 * eta;
  const Vec p = sym.P1 * x + eta;
  return {x, p};
}

Vec PiecewiseConstantInput::at(double t) const {
  if (values.empty()) return Vec();
  std::size_t i = 0;
  while (i + 1 < breaks.size() && i + 1 < values.size() && t >= breaks[i + 1]) ++i;
  return values[i];
}

Trajectory simulate_controlled(const ControlAffineSystem& sys, const Vec& x0,
                               const InputSource& source, double T, double tol) {
  const int n = sys.n;
  OdeOptions opt;
  opt.rtol = tol;
  opt.atol = tol;

  auto run = [&](const std::function<Vec(double, const Vec&)>& input, double ta, const Vec& za,
                 double tb) {
    return integrate(
        [&](double t, const Vec& z) {
          const Vec x = z.head(n);
          const Vec u = input(t, x);
          Vec dz(n + 1);
          dz.head(n) = sys.f(x) + sys.g(x) * u;
          dz(n) = 0.5 * u.squaredNorm() + sys.h(x);
          return dz;
        },
        ta, za, tb, opt);
  };

  Vec z0(n + 1);
  z0 << x0, 0.0;
  Trajectory raw;
  std::function<Vec(double, const Vec&)> input;
  if (const auto* law = std::get_if<FeedbackLaw>(&source)) {
    input = [law](double, const Vec& x) { return law->k(x); };
    raw = run(input, 0.0, z0, T);
  } else {
    const auto& pc = std::get<PiecewiseConstantInput>(source);
    input = [&pc](double t, const Vec&) { return pc.at(t); };
    // Restart at every break so each piece is integrated with a smooth input.
    std::vector<double> knots{0.0};
    for (double b : pc.breaks) {
      if (b > 0.0 && b < T) knots.push_back(b);
    }
    knots.push_back(T);
    Vec z = z0;
    for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
      const Vec u = pc.at(knots[k]);
      Trajectory piece = run([u](double, const Vec&) { return u; }, knots[k], z, knots[k + 1]);
      z = piece.states.back();
      raw.append(piece);
    }
  }

  Trajectory traj;
  traj.times = raw.times;
  traj.stats = raw.stats;
  traj.status = raw.status;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const Vec x = raw.states[i].head(n);
    traj.states.push_back(x);
    traj.cost.push_back(raw.states[i](n));
    traj.inputs.push_back(input(raw.times[i], x));
  }
  for (const auto& seg : raw.dense) {
    DenseSegment s = seg;
    for (auto& c : s.coeff) c = Vec(c.head(n));
    traj.dense.push_back(std::move(s));
  }
  return traj;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj, const CsvLayout& layout) {
  const int n = layout.n;
  const int m = traj.inputs.empty() ? 0 : static_cast<int>(traj.inputs.front().size());
  out << "t";
  for (int i = 1; i <= n; ++i) out << ",x" << i;
  if (layout.costate) {
    for (int i = 1; i <= n; ++i) out << ",p" << i;
  }
  for (int j = 1; j <= m; ++j) out << ",u" << j;
  if (!traj.energy.empty()) out << ",H";
  if (!traj.cost.empty()) out << ",cost";
  out << "\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.12e", v);
    out << buf;
  };
  for (std::size_t k = 0; k < traj.size(); ++k) {
    put(traj.times[k]);
    const int cols = layout.costate ? 2 * n : n;
    for (int i = 0; i < cols; ++i) {
      out << ",";
      put(traj.states[k](i));
    }
    for (int j = 0; j < m; ++j) {
      out << ",";
      put(traj.inputs[k](j));
    }
    if (!traj.energy.empty()) {
      out << ",";
      put(traj.energy[k]);
    }
    if (!traj.cost.empty()) {
      out << ",";
      put(traj.cost[k]);
    }
    out << "\n";
  }
}

}  // namespace hamflow
