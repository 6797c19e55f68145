#include "hamflow/manifold.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include "hamflow/error.hpp"
#include "hamflow/parallel.hpp"

namespace hamflow {

std::string to_string(ManifoldKind kind) {
  return kind == ManifoldKind::Stable ? "stable" : "unstable";
}

std::string to_string(CoverageStatus status) {
  switch (status) {
    case CoverageStatus::Covered:
      return "covered";
    case CoverageStatus::Uncovered:
      return "uncovered";
    case CoverageStatus::Boundary:
      return "boundary";
  }
  return "unknown";
}

double ManifoldChart::coverage_radius() const {
  double r = 0.0;
  for (const auto& pt : global_points) r = std::max(r, pt.x.norm());
  return r;
}

std::size_t CoverageEstimate::count(CoverageStatus status) const {
  return std::count_if(entries.begin(), entries.end(),
                       [status](const CoverageEntry& e) { return e.status == status; });
}

namespace {

HamiltonianSystem oriented(const HamiltonianSystem& hsys, ManifoldKind kind) {
  if (kind == ManifoldKind::Stable) return hsys;
  return hsys.time_reversed();
}

// Gauss-Legendre nodes and weights on [0, 1] (Golub-Welsch).
void gauss_legendre(int q, std::vector<double>& nodes, std::vector<double>& weights) {
  Mat J = Mat::Zero(q, q);
  for (int k = 1; k < q; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    J(k, k - 1) = b;
    J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(J);
  nodes.resize(q);
  weights.resize(q);
  for (int k = 0; k < q; ++k) {
    nodes[k] = 0.5 * (es.eigenvalues()(k) + 1.0);
    const double v = es.eigenvectors()(0, k);
    weights[k] = v * v;  // 2 v^2 on [-1, 1], halved on [0, 1]
  }
}

// Legendre polynomials P_0..P_{q} at x.
std::vector<double> legendre(int q, double x) {
  std::vector<double> P(q + 1);
  P[0] = 1.0;
  if (q >= 1) P[1] = x;
  for (int k = 1; k < q; ++k) P[k + 1] = ((2.0 * k + 1.0) * x * P[k] - k * P[k - 1]) / (k + 1.0);
  return P;
}

// S(j, k) = int_0^{tau_j} l_k, with l_k the Lagrange basis on the nodes.
Mat integration_matrix(const std::vector<double>& nodes) {
  const int q = static_cast<int>(nodes.size());
  Mat V(q, q), W(q, q);
  for (int j = 0; j < q; ++j) {
    const double x = 2.0 * nodes[j] - 1.0;
    const auto P = legendre(q, x);
    for (int k = 0; k < q; ++k) {
      V(j, k) = P[k];
      W(j, k) = k == 0 ? x + 1.0 : (P[k + 1] - P[k - 1]) / (2.0 * k + 1.0);
    }
  }
  // Columns of V^{-1} give the Legendre coefficients of each l_k.
  return 0.5 * W * V.inverse();
}

double sup_norm(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, (a[i] - b[i]).lpNorm<Eigen::Infinity>());
  return d;
}

bool all_finite(const std::vector<Vec>& v) {
  return std::all_of(v.begin(), v.end(), [](const Vec& x) { return x.allFinite(); });
}

}  // namespace

struct GraphSolver::Impl {
  HamiltonianSystem field;
  Splitting sp;
  ManifoldOptions opt;
  int n = 0;
  int q = 0;
  int panels = 0;
  double horizon = 0.0;
  double h = 0.0;
  std::vector<double> tau, w;
  Mat S;
  std::vector<Mat> es_node, es_neg, eu_node, eu_grow;
  Mat es_h, eu_h;

  Impl(const HamiltonianSystem& f, const ManifoldOptions& o) : field(f), opt(o) {
    sp = field.stable_splitting();
    n = field.n();
    q = std::max(2, opt.nodes_per_panel);
    horizon = opt.horizon;
    if (horizon <= 0.0) {
      const double target = opt.tol / 10.0;
      const double dt = 0.25;
      const Mat step = expm(sp.Fs, dt);
      Mat E = Mat::Identity(n, n);
      horizon = 0.0;
      while (E.norm() > target && horizon < 500.0) {
        E = E * step;
        horizon += dt;
      }
    }
    const double rate = std::max(sp.Fs.eigenvalues().cwiseAbs().maxCoeff(),
                                 sp.Fu.eigenvalues().cwiseAbs().maxCoeff());
    panels = std::max({1, (opt.nodes + q - 1) / q, static_cast<int>(std::ceil(horizon * rate / 2.0))});
    h = horizon / panels;
    gauss_legendre(q, tau, w);
    S = integration_matrix(tau);
    for (int k = 0; k < q; ++k) {
      es_node.push_back(expm(sp.Fs, h * tau[k]));
      es_neg.push_back(expm(sp.Fs, -h * tau[k]));
      eu_node.push_back(expm(sp.Fu, -h * (1.0 - tau[k])));
      eu_grow.push_back(expm(sp.Fu, h * (1.0 - tau[k])));
    }
    es_h = expm(sp.Fs, h);
    eu_h = expm(sp.Fu, -h);
  }

  Vec lift(const Vec& s, const Vec& u) const {
    Vec w2(2 * n);
    w2 << s, u;
    return sp.T * w2;
  }

  void residual(const Vec& s, const Vec& u, Vec& nu_s, Vec& nu_u) const {
    const Vec dz = sp.Tinv * field.rhs(lift(s, u));
    nu_s = dz.head(n) - sp.Fs * s;
    nu_u = dz.tail(n) - sp.Fu * u;
  }

  Result solve(const Vec& s0) const {
    const int N = panels * q;
    std::vector<Vec> s(N), u(N, Vec::Zero(n)), ns(N), nu(N);
    std::vector<Vec> s_new(N), u_new(N);
    {
      Vec a = s0;
      for (int p = 0; p < panels; ++p) {
        for (int j = 0; j < q; ++j) s[p * q + j] = es_node[j] * a;
        a = es_h * a;
      }
    }
    Result res;
    Vec u0 = Vec::Zero(n);
    int growths = 0;
    const double blowup = 1e6 * (1.0 + s0.norm());
    for (int it = 0; it < opt.max_iter; ++it) {
      for (int i = 0; i < N; ++i) residual(s[i], u[i], ns[i], nu[i]);
      // Forward sweep for the stable block.
      Vec a = s0;
      for (int p = 0; p < panels; ++p) {
        std::vector<Vec> g(q);
        for (int k = 0; k < q; ++k) g[k] = es_neg[k] * ns[p * q + k];
        Vec end = a;
        for (int j = 0; j < q; ++j) {
          Vec acc = a;
          for (int k = 0; k < q; ++k) acc += h * S(j, k) * g[k];
          s_new[p * q + j] = es_node[j] * acc;
          end += h * w[j] * g[j];
        }
        a = es_h * end;
      }
      // Backward sweep for the unstable block, u(horizon) = 0.
      Vec b = Vec::Zero(n);
      for (int p = panels - 1; p >= 0; --p) {
        std::vector<Vec> g(q);
        for (int k = 0; k < q; ++k) g[k] = eu_grow[k] * nu[p * q + k];
        Vec start = b;
        for (int j = 0; j < q; ++j) {
          Vec acc = b;
          for (int k = 0; k < q; ++k) acc -= h * (w[k] - S(j, k)) * g[k];
          u_new[p * q + j] = eu_node[j] * acc;
          start -= h * w[j] * g[j];
        }
        b = eu_h * start;
      }
      const Vec& u0_new = b;
      double diff = std::max(sup_norm(s_new, s), sup_norm(u_new, u));
      diff = std::max(diff, (u0_new - u0).lpNorm<Eigen::Infinity>());
      std::swap(s, s_new);
      std::swap(u, u_new);
      u0 = u0_new;
      if (!std::isfinite(diff) || !all_finite(u) || !all_finite(s) || diff > blowup) {
        res.residuals.push_back(std::isfinite(diff) ? diff : std::numeric_limits<double>::infinity());
        break;
      }
      if (!res.residuals.empty() && diff > res.residuals.back()) {
        ++growths;
      } else {
        growths = 0;
      }
      res.residuals.push_back(diff);
      if (diff <= opt.tol) {
        res.converged = true;
        break;
      }
      if (growths >= 3) break;
    }
    res.eta = u0;
    if (res.converged) {
      res.orbit_min = lift(s0, u0).norm();
      if (res.orbit_min < opt.check_tol) res.reach_time = 0.0;
      for (int p = 0; p < panels; ++p) {
        for (int j = 0; j < q; ++j) {
          const double r = lift(s[p * q + j], u[p * q + j]).norm();
          res.orbit_min = std::min(res.orbit_min, r);
          if (res.reach_time < 0.0 && r < opt.check_tol) res.reach_time = h * (p + tau[j]);
        }
      }
    }
    return res;
  }
};

GraphSolver::GraphSolver(const HamiltonianSystem& field, const ManifoldOptions& options)
    : impl_(std::make_unique<Impl>(field, options)) {}
GraphSolver::~GraphSolver() = default;
GraphSolver::GraphSolver(GraphSolver&&) noexcept = default;
GraphSolver& GraphSolver::operator=(GraphSolver&&) noexcept = default;

GraphSolver::Result GraphSolver::solve(const Vec& xi0) const {
  if (xi0.size() != impl_->n) throw Error(ErrorCode::DimensionMismatch, "seed dimension mismatch");
  return impl_->solve(xi0);
}

Vec GraphSolver::theta(const Vec& xi0) const {
  Result r = solve(xi0);
  if (!r.converged) {
    throw Error(ErrorCode::NoConvergence,
                "graph iteration did not converge (last residual " +
                    std::to_string(r.residuals.empty() ? 0.0 : r.residuals.back()) + ")");
  }
  return r.eta;
}

Vec GraphSolver::lift(const Vec& xi, const Vec& eta) const { return impl_->lift(xi, eta); }
double GraphSolver::horizon() const { return impl_->horizon; }
int GraphSolver::n() const { return impl_->n; }

std::vector<double> geometric_radii(double r_min, double r_max, int count) {
  if (count <= 0) return {};
  if (count == 1) return {r_max};
  std::vector<double> r(count);
  const double ratio = std::pow(r_max / r_min, 1.0 / (count - 1));
  for (int i = 0; i < count; ++i) r[i] = r_min * std::pow(ratio, i);
  r.back() = r_max;
  return r;
}

namespace {

double radical_inverse(unsigned long i, unsigned base) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= base;
    r += f * (i % base);
    i /= base;
  }
  return r;
}

constexpr unsigned kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

// Unit directions from a Halton sequence pushed through Box-Muller.
Vec halton_direction(int n, unsigned long index) {
  Vec d(n);
  const int pairs = (n + 1) / 2;
  for (int k = 0; k < pairs; ++k) {
    const double u1 = radical_inverse(index, kPrimes[(2 * k) % 16]);
    const double u2 = radical_inverse(index, kPrimes[(2 * k + 1) % 16]);
    const double r = std::sqrt(-2.0 * std::log(std::max(u1, 1e-300)));
    d(2 * k) = r * std::cos(2.0 * M_PI * u2);
    if (2 * k + 1 < n) d(2 * k + 1) = r * std::sin(2.0 * M_PI * u2);
  }
  return d / d.norm();
}

}  // namespace

std::vector<Vec> sphere_seeds(int n, const std::vector<double>& radii, int per_radius) {
  std::vector<Vec> seeds;
  unsigned long index = 1;
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (std::size_t ri = 0; ri < radii.size(); ++ri) {
    const double r = radii[ri];
    if (n == 1) {
      seeds.push_back(Vec::Constant(1, r));
      seeds.push_back(Vec::Constant(1, -r));
      continue;
    }
    for (int k = 0; k < per_radius; ++k) {
      Vec d(n);
      if (n == 2) {
        const double a = 2.0 * M_PI * k / per_radius + golden * ri;
        d << std::cos(a), std::sin(a);
      } else {
        d = halton_direction(n, index++);
      }
      seeds.push_back(r * d);
    }
  }
  return seeds;
}

std::vector<Vec> flow_adapted_seeds(const HamiltonianSystem& hsys, ManifoldKind kind, double r0,
                                    const std::vector<double>& reach, int per_radius,
                                    double max_condition) {
  const HamiltonianSystem field = oriented(hsys, kind);
  const Splitting sp = field.stable_splitting();
  const int n = hsys.n();
  const Mat M = sp.T.topLeftCorner(n, n);
  const Eigen::CompleteOrthogonalDecomposition<Mat> Mpinv(M);
  const double dt = 0.05;
  const Mat step = expm(sp.Fs, dt);
  const Mat back = expm(sp.Fs, -dt);
  // Largest number of steps with an acceptable condition number.
  int max_steps = 0;
  {
    Mat E = Mat::Identity(n, n), Einv = Mat::Identity(n, n);
    while (max_steps < 20000) {
      E = step * E;
      Einv = Einv * back;
      if (E.norm() * Einv.norm() > max_condition) break;
      ++max_steps;
    }
  }
  std::vector<Vec> seeds;
  for (const Vec& target : sphere_seeds(n, reach, per_radius)) {
    Vec s = Mpinv.solve(target);
    if (!s.allFinite() || s.norm() == 0.0) continue;
    for (int k = 0; k < max_steps && s.norm() > r0; ++k) s = step * s;
    seeds.push_back(s.norm() > r0 ? s : Vec(r0 * s / s.norm()));
  }
  return seeds;
}

namespace {

struct PointCheck {
  bool ok = false;
  double H = 0.0;
  double flow_check = 0.0;
};

// Energy and convergence checks for a point of an oriented chart: the
// oriented flow from z must reach |z| < check_tol within tau + check_time.
PointCheck check_point(const HamiltonianSystem& field, const Vec& z, double tau,
                       const ManifoldOptions& opt) {
  PointCheck c;
  c.H = field.hval(z);
  if (field.reversed()) c.H = -c.H;
  double best = z.norm();
  const double escape = 10.0 * (1.0 + best);
  if (best >= opt.check_tol) {
    OdeOptions o;
    o.rtol = opt.check_integrator_tol;
    o.atol = opt.check_integrator_tol;
    o.throw_on_failure = false;
    o.keep_dense = false;
    integrate([&field](double, const Vec& y) { return field.rhs(y); }, 0.0, z,
              tau + opt.check_time, o, [&](double, const Vec& y) {
                const double r = y.norm();
                best = std::min(best, r);
                // Past the origin the saddle throws the flow out; stop there.
                return best >= opt.check_tol && r <= escape;
              });
  }
  c.flow_check = best;
  c.ok = std::isfinite(c.H) && std::abs(c.H) <= opt.energy_tol && best < opt.check_tol;
  return c;
}

// Seed certificate from the graph iteration: its orbit is the forward flow of
// the lifted seed and must get below check_tol within check_time.
bool seed_reaches(const GraphSolver::Result& r, const ManifoldOptions& opt) {
  return r.converged && r.reach_time >= 0.0 && r.reach_time <= opt.check_time;
}

// Forward flow from `from` over dt lands near `to`.
bool link_holds(const HamiltonianSystem& field, const Vec& from, const Vec& to, double dt,
                const ManifoldOptions& opt) {
  OdeOptions o;
  o.rtol = opt.check_integrator_tol;
  o.atol = opt.check_integrator_tol;
  o.throw_on_failure = false;
  o.keep_dense = false;
  const Trajectory tr =
      integrate([&field](double, const Vec& y) { return field.rhs(y); }, 0.0, from, dt, o);
  if (tr.status != FlowStatus::Completed) return false;
  return (tr.states.back() - to).norm() <= opt.link_tol * (1.0 + to.norm());
}

// Links a backward orbit z(t), t in [0, t_end], to its start by forward flows
// no longer than link_time.
bool orbit_links_hold(const HamiltonianSystem& field, const Trajectory& back, double t_end,
                      const ManifoldOptions& opt) {
  const int pieces = std::max(1, static_cast<int>(std::ceil(t_end / opt.link_time)));
  Vec prev = back.at(0.0);
  for (int k = 1; k <= pieces; ++k) {
    const double t0 = t_end * (k - 1) / pieces, t1 = t_end * k / pieces;
    const Vec z = back.at(t1);
    if (!link_holds(field, z, prev, t1 - t0, opt)) return false;
    prev = z;
  }
  return true;
}

bool point_less(const ChartPoint& a, const ChartPoint& b) {
  if (a.seed != b.seed) return a.seed < b.seed;
  return a.tau < b.tau;
}

ManifoldChart build_chart(const HamiltonianSystem& hsys, ManifoldKind kind,
                          const std::vector<Vec>& seeds, const ManifoldOptions& options) {
  const HamiltonianSystem field = oriented(hsys, kind);
  const GraphSolver solver(field, options);
  const int n = hsys.n();

  std::vector<Vec> all{Vec::Zero(n)};
  for (const Vec& s : seeds) {
    if (s.size() != n) throw Error(ErrorCode::DimensionMismatch, "seed dimension mismatch");
    if (s.norm() > 0.0) all.push_back(s);
  }

  struct Outcome {
    bool converged = false;
    ChartSeed seed;
    std::optional<ChartPoint> point;
  };
  std::vector<Outcome> out(all.size());
  parallel_for(all.size(), [&](std::size_t i) {
    Outcome& o = out[i];
    GraphSolver::Result r = solver.solve(all[i]);
    o.seed.xi = all[i];
    o.seed.eta = r.eta;
    o.seed.residuals = r.residuals;
    o.converged = r.converged || all[i].norm() == 0.0;
    if (all[i].norm() == 0.0) o.seed.eta = Vec::Zero(n);
    if (!o.converged) return;
    const Vec z = solver.lift(o.seed.xi, o.seed.eta);
    ChartPoint pt;
    pt.x = z.head(n);
    pt.p = z.tail(n);
    pt.tau = 0.0;
    if (options.verify) {
      PointCheck c = check_point(field, z, 0.0, options);
      if (!c.ok && std::abs(c.H) <= options.energy_tol && seed_reaches(r, options)) {
        c.ok = true;
        c.flow_check = r.orbit_min;
      }
      pt.H = c.H;
      pt.flow_check = c.flow_check;
      if (!c.ok) return;
    } else {
      pt.H = field.reversed() ? -field.hval(z) : field.hval(z);
      pt.flow_check = z.norm();
    }
    o.point = pt;
  });

  ManifoldChart chart;
  chart.kind = kind;
  chart.tol = options.tol;
  chart.horizon = solver.horizon();
  chart.check_time = options.check_time;
  chart.check_tol = options.check_tol;
  chart.energy_tol = options.energy_tol;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!out[i].converged) {
      ++chart.failed_seeds;
      continue;
    }
    const int index = static_cast<int>(chart.seeds.size());
    chart.seeds.push_back(out[i].seed);
    chart.local_radius = std::max(chart.local_radius, out[i].seed.xi.norm());
    if (out[i].point) {
      ChartPoint pt = *out[i].point;
      pt.seed = index;
      chart.global_points.push_back(pt);
    } else {
      ++chart.rejected_points;
    }
  }
  if (chart.seeds.size() <= 1 && all.size() > 1) {
    throw Error(ErrorCode::NoConvergence, "no seed of the " + to_string(kind) +
                                              " chart converged");
  }
  return chart;
}

}  // namespace

ManifoldChart local_stable_manifold(const HamiltonianSystem& hsys, const std::vector<Vec>& seeds,
                                    const ManifoldOptions& options) {
  return build_chart(hsys, ManifoldKind::Stable, seeds, options);
}

ManifoldChart unstable_manifold(const HamiltonianSystem& hsys, const std::vector<Vec>& seeds,
                                const ManifoldOptions& options) {
  return build_chart(hsys, ManifoldKind::Unstable, seeds, options);
}

bool Bounds::contains(const Vec& x, const Vec& p) const {
  if (lo.size() == x.size() && (x.array() < lo.array()).any()) return false;
  if (hi.size() == x.size() && (x.array() > hi.array()).any()) return false;
  return p.lpNorm<Eigen::Infinity>() <= p_max;
}

Bounds Bounds::box(int n, double half_width, double p_max) {
  Bounds b;
  b.lo = Vec::Constant(n, -half_width);
  b.hi = Vec::Constant(n, half_width);
  b.p_max = p_max;
  return b;
}

ManifoldChart globalize(const ManifoldChart& chart, const HamiltonianSystem& hsys,
                        const GlobalizeOptions& options, const ManifoldOptions& manifold_options) {
  const HamiltonianSystem field = oriented(hsys, chart.kind);
  const int n = hsys.n();
  ManifoldOptions check = manifold_options;
  check.check_time = chart.check_time > 0 ? chart.check_time : check.check_time;
  check.check_tol = chart.check_tol > 0 ? chart.check_tol : check.check_tol;
  check.energy_tol = chart.energy_tol > 0 ? chart.energy_tol : check.energy_tol;

  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < chart.global_points.size(); ++i) {
    const auto& pt = chart.global_points[i];
    if (pt.tau == 0.0 && pt.x.norm() + pt.p.norm() > 0.0) starts.push_back(i);
  }

  struct Outcome {
    std::vector<ChartPoint> points;
    int rejected = 0;
  };
  std::vector<Outcome> out(starts.size());
  parallel_for(starts.size(), [&](std::size_t k) {
    const ChartPoint& start = chart.global_points[starts[k]];
    Vec z0(2 * n);
    z0 << start.x, start.p;
    OdeOptions o;
    o.rtol = check.integrator_tol;
    o.atol = check.integrator_tol;
    o.throw_on_failure = false;
    const Trajectory traj = integrate(
        [&field](double, const Vec& y) { return Vec(-field.rhs(y)); }, 0.0, z0, options.extend_time, o,
        [&](double, const Vec& y) {
          return options.bounds.contains(y.head(n), y.tail(n));
        });
    if (traj.size() < 2) return;

    // Walk the dense output and store points every sample_spacing of arc
    // length in x (or every max_sample_dt).
    std::vector<std::pair<double, Vec>> picked;
    Vec last_x = start.x;
    double last_t = 0.0, arc = 0.0;
    Vec prev = z0;
    bool stop = false;
    for (std::size_t i = 0; i + 1 < traj.size() && !stop; ++i) {
      const double ta = traj.times[i], tb = traj.times[i + 1];
      const double dx = (traj.states[i + 1].head(n) - traj.states[i].head(n)).norm();
      const int pieces = std::max(1, static_cast<int>(std::ceil(4.0 * dx / options.sample_spacing)));
      for (int j = 1; j <= pieces; ++j) {
        const double t = ta + (tb - ta) * j / pieces;
        const Vec z = traj.at(t);
        if (!z.allFinite() || !options.bounds.contains(z.head(n), z.tail(n))) {
          stop = true;
          break;
        }
        arc += (z.head(n) - prev.head(n)).norm();
        prev = z;
        if (arc >= options.sample_spacing || t - last_t >= options.max_sample_dt) {
          picked.emplace_back(t, z);
          arc = 0.0;
          last_t = t;
          last_x = z.head(n);
        }
      }
    }
    // A point failing the direct check may inherit the verdict of its
    // predecessor on the orbit through a link.
    Vec prev_z = z0;
    double prev_t = 0.0, prev_flow = start.flow_check;
    bool prev_ok = true;
    for (const auto& [t, z] : picked) {
      ChartPoint pt;
      pt.x = z.head(n);
      pt.p = z.tail(n);
      pt.seed = start.seed;
      pt.tau = t;
      PointCheck c = check_point(field, z, t, check);
      if (!c.ok && prev_ok && std::abs(c.H) <= check.energy_tol) {
        if (link_holds(field, z, prev_z, t - prev_t, check)) {
          c.ok = true;
          c.flow_check = prev_flow;
        }
      }
      pt.H = c.H;
      pt.flow_check = c.flow_check;
      if (c.ok) {
        out[k].points.push_back(pt);
      } else {
        ++out[k].rejected;
      }
      prev_ok = c.ok;
      prev_z = z;
      prev_t = t;
      prev_flow = c.flow_check;
    }
  });

  ManifoldChart result = chart;
  std::vector<ChartPoint> added;
  for (auto& o : out) {
    result.rejected_points += o.rejected;
    added.insert(added.end(), o.points.begin(), o.points.end());
  }
  std::stable_sort(added.begin(), added.end(), point_less);
  const double thin = options.thin_radius >= 0.0 ? options.thin_radius : options.sample_spacing / 4.0;
  std::vector<Vec> kept;
  for (const auto& pt : result.global_points) {
    Vec z(2 * n);
    z << pt.x, pt.p;
    kept.push_back(z);
  }
  for (const auto& pt : added) {
    Vec z(2 * n);
    z << pt.x, pt.p;
    bool close = false;
    if (thin > 0.0) {
      for (const Vec& k : kept) {
        if ((k - z).squaredNorm() < thin * thin) {
          close = true;
          break;
        }
      }
    }
    if (close) continue;
    kept.push_back(z);
    result.global_points.push_back(pt);
  }
  return result;
}

// Static kd-tree over the x-projections.
struct ChartIndex::Tree {
  struct Node {
    int point = -1;
    int axis = 0;
    int left = -1;
    int right = -1;
  };
  std::vector<Vec> pts;
  std::vector<Node> nodes;
  int root = -1;

  int build(std::vector<int>& idx, int lo, int hi) {
    if (lo >= hi) return -1;
    const int dim = static_cast<int>(pts[idx[lo]].size());
    Vec mn = pts[idx[lo]], mx = pts[idx[lo]];
    for (int i = lo; i < hi; ++i) {
      mn = mn.cwiseMin(pts[idx[i]]);
      mx = mx.cwiseMax(pts[idx[i]]);
    }
    int axis = 0;
    (mx - mn).maxCoeff(&axis);
    if (dim == 0) axis = 0;
    const int mid = (lo + hi) / 2;
    std::nth_element(idx.begin() + lo, idx.begin() + mid, idx.begin() + hi,
                     [&](int a, int b) { return pts[a](axis) < pts[b](axis); });
    const int id = static_cast<int>(nodes.size());
    nodes.push_back({idx[mid], axis, -1, -1});
    const int l = build(idx, lo, mid);
    const int r = build(idx, mid + 1, hi);
    nodes[id].left = l;
    nodes[id].right = r;
    return id;
  }

  void search(int node, const Vec& x, std::size_t k,
              std::priority_queue<std::pair<double, int>>& heap) const {
    if (node < 0) return;
    const Node& nd = nodes[node];
    const double d = (pts[nd.point] - x).squaredNorm();
    if (heap.size() < k) {
      heap.emplace(d, nd.point);
    } else if (d < heap.top().first || (d == heap.top().first && nd.point < heap.top().second)) {
      heap.pop();
      heap.emplace(d, nd.point);
    }
    const double diff = x(nd.axis) - pts[nd.point](nd.axis);
    const int near = diff < 0 ? nd.left : nd.right;
    const int far = diff < 0 ? nd.right : nd.left;
    search(near, x, k, heap);
    if (heap.size() < k || diff * diff <= heap.top().first) search(far, x, k, heap);
  }
};

ChartIndex::ChartIndex(const ManifoldChart& chart) : chart_(chart), tree_(std::make_unique<Tree>()) {
  for (const auto& pt : chart_.global_points) tree_->pts.push_back(pt.x);
  std::vector<int> idx(tree_->pts.size());
  std::iota(idx.begin(), idx.end(), 0);
  tree_->root = tree_->build(idx, 0, static_cast<int>(idx.size()));

  std::vector<double> spacing;
  for (std::size_t i = 0; i < tree_->pts.size(); ++i) {
    const auto nn = nearest(tree_->pts[i], 2);
    for (int j : nn) {
      if (j == static_cast<int>(i)) continue;
      const double d = (tree_->pts[j] - tree_->pts[i]).norm();
      if (d > 0.0) spacing.push_back(d);
    }
  }
  if (!spacing.empty()) {
    auto mid = spacing.begin() + spacing.size() / 2;
    std::nth_element(spacing.begin(), mid, spacing.end());
    median_spacing_ = *mid;
  }
}

ChartIndex::~ChartIndex() = default;
ChartIndex::ChartIndex(ChartIndex&&) noexcept = default;

std::vector<int> ChartIndex::nearest(const Vec& x, int k) const {
  std::priority_queue<std::pair<double, int>> heap;
  tree_->search(tree_->root, x, static_cast<std::size_t>(std::max(k, 0)), heap);
  std::vector<int> out(heap.size());
  for (int i = static_cast<int>(heap.size()) - 1; i >= 0; --i) {
    out[i] = heap.top().second;
    heap.pop();
  }
  return out;
}

namespace {

// Newton on the seed coordinate with the flow time fixed: find s0 such that
// the x-part of flow_{-tau}(T (s0, theta(s0))) equals xq.
std::optional<Witness> refine(const HamiltonianSystem& field, const GraphSolver& solver,
                              const Vec& s_start, double tau, const Vec& xq, double newton_tol,
                              const ManifoldOptions& opt) {
  const int n = field.n();
  OdeOptions o;
  o.rtol = opt.integrator_tol;
  o.atol = opt.integrator_tol;
  o.throw_on_failure = false;
  o.keep_dense = false;

  auto point = [&](const Vec& s, Vec& z) -> bool {
    const GraphSolver::Result r = solver.solve(s);
    if (!r.converged) return false;
    z = solver.lift(s, r.eta);
    if (tau > 0.0) {
      const Trajectory tr =
          integrate([&field](double, const Vec& y) { return Vec(-field.rhs(y)); }, 0.0, z, tau, o);
      if (tr.status != FlowStatus::Completed) return false;
      z = tr.states.back();
    }
    return z.allFinite();
  };

  Vec s = s_start;
  Vec z;
  if (!point(s, z)) return std::nullopt;
  Vec res = z.head(n) - xq;
  for (int it = 0; it < 30 && res.norm() > newton_tol; ++it) {
    Mat Jac(n, n);
    for (int j = 0; j < n; ++j) {
      const double step = 1e-7 * std::max(1.0, std::abs(s(j)));
      Vec sp = s;
      sp(j) += step;
      Vec zp;
      if (!point(sp, zp)) {
        sp(j) = s(j) - step;
        if (!point(sp, zp)) return std::nullopt;
        Jac.col(j) = (z.head(n) - zp.head(n)) / step;
      } else {
        Jac.col(j) = (zp.head(n) - z.head(n)) / step;
      }
    }
    const Vec ds = Jac.fullPivLu().solve(-res);
    if (!ds.allFinite()) return std::nullopt;
    double lambda = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 10; ++ls, lambda *= 0.5) {
      Vec zt;
      const Vec st = s + lambda * ds;
      if (!point(st, zt)) continue;
      const Vec rt = zt.head(n) - xq;
      if (rt.norm() < res.norm()) {
        s = st;
        z = zt;
        res = rt;
        accepted = true;
        break;
      }
    }
    if (!accepted) return std::nullopt;
  }
  if (res.norm() > newton_tol) return std::nullopt;
  PointCheck c = check_point(field, z, tau, opt);
  if (!c.ok && std::abs(c.H) <= opt.energy_tol) {
    const GraphSolver::Result r = solver.solve(s);
    if (seed_reaches(r, opt)) {
      bool linked = tau == 0.0;
      if (!linked) {
        OdeOptions od = o;
        od.keep_dense = true;
        const Trajectory back = integrate([&field](double, const Vec& y) { return Vec(-field.rhs(y)); },
                                          0.0, solver.lift(s, r.eta), tau, od);
        linked = back.status == FlowStatus::Completed && orbit_links_hold(field, back, tau, opt);
      }
      if (linked) {
        c.ok = true;
        c.flow_check = r.orbit_min;
      }
    }
  }
  if (!c.ok) return std::nullopt;
  Witness w;
  w.x = z.head(n);
  w.p = z.tail(n);
  w.H = c.H;
  w.flow_check = c.flow_check;
  return w;
}

}  // namespace

CoverageEstimate coverage(const ManifoldChart& chart, const HamiltonianSystem& hsys,
                          const std::vector<Vec>& query_points, double newton_tol,
                          const ManifoldOptions& options) {
  CoverageEstimate est;
  est.kind = chart.kind;
  est.newton_tol = newton_tol;
  est.method = "nearest chart point, Newton on seed coordinate at fixed flow time";
  est.entries.resize(query_points.size());
  if (chart.global_points.empty()) {
    for (std::size_t i = 0; i < query_points.size(); ++i) est.entries[i].query = query_points[i];
    return est;
  }
  ManifoldOptions opt = options;
  opt.tol = chart.tol > 0 ? chart.tol : opt.tol;
  opt.horizon = chart.horizon;
  opt.check_time = chart.check_time > 0 ? chart.check_time : opt.check_time;
  opt.check_tol = chart.check_tol > 0 ? chart.check_tol : opt.check_tol;
  opt.energy_tol = chart.energy_tol > 0 ? chart.energy_tol : opt.energy_tol;

  const HamiltonianSystem field = oriented(hsys, chart.kind);
  const GraphSolver solver(field, opt);
  const ChartIndex index(chart);
  est.snap_radius = index.snap_radius();
  est.boundary_radius = index.boundary_radius();
  const int n = hsys.n();

  parallel_for(query_points.size(), [&](std::size_t qi) {
    CoverageEntry& e = est.entries[qi];
    e.query = query_points[qi];
    if (e.query.size() != n) throw Error(ErrorCode::DimensionMismatch, "query dimension mismatch");
    const auto near = index.nearest(e.query, 6);
    e.distance = (chart.global_points[near.front()].x - e.query).norm();
    if (e.distance > est.snap_radius && e.distance > newton_tol) {
      e.status = CoverageStatus::Uncovered;
      return;
    }
    for (int id : near) {
      const ChartPoint& cp = chart.global_points[id];
      if ((cp.x - e.query).norm() > est.snap_radius && !e.witnesses.empty()) break;
      if (cp.seed < 0 || cp.seed >= static_cast<int>(chart.seeds.size())) continue;
      bool redundant = false;
      for (const auto& w : e.witnesses) {
        if ((w.p - cp.p).norm() <= 0.1 * (1.0 + w.p.norm())) redundant = true;
      }
      if (redundant) continue;
      auto w = refine(field, solver, chart.seeds[cp.seed].xi, cp.tau, e.query, newton_tol, opt);
      if (!w) continue;
      bool dup = false;
      for (const auto& prev : e.witnesses) {
        if ((prev.p - w->p).norm() <= 1e-6 * (1.0 + prev.p.norm())) dup = true;
      }
      if (!dup) e.witnesses.push_back(*w);
    }
    std::sort(e.witnesses.begin(), e.witnesses.end(),
              [](const Witness& a, const Witness& b) { return a.p.norm() < b.p.norm(); });
    if (!e.witnesses.empty()) {
      e.status = CoverageStatus::Covered;
    } else if (e.distance <= est.boundary_radius) {
      e.status = CoverageStatus::Boundary;
    } else {
      e.status = CoverageStatus::Uncovered;
    }
  });
  return est;
}

Vec manifold_feedback(const ChartIndex& index, const HamiltonianSystem& hsys, const Vec& x, int k) {
  const ManifoldChart& chart = index.chart();
  const int n = hsys.n();
  if (chart.global_points.empty()) throw Error(ErrorCode::Uncovered, "empty chart");
  const auto near = index.nearest(x, std::max(k, 2 * n + 2));
  const double d0 = (chart.global_points[near.front()].x - x).norm();
  if (d0 > index.snap_radius() && d0 > 1e-12) {
    throw Error(ErrorCode::Uncovered, "state lies outside the chart's projection");
  }
  Vec p_hat;
  if (d0 <= 1e-12) {
    p_hat = chart.global_points[near.front()].p;
  } else {
    const int K = static_cast<int>(near.size());
    std::vector<double> wts(K);
    for (int i = 0; i < K; ++i) {
      const double d = (chart.global_points[near[i]].x - x).norm();
      wts[i] = 1.0 / (d * d);
    }
    bool fitted = false;
    if (K >= n + 1) {
      // Weighted affine fit p ~ p_c + G (x_i - x).
      Mat Aw(K, n + 1), Pw(K, n);
      for (int i = 0; i < K; ++i) {
        const double sw = std::sqrt(wts[i]);
        Aw(i, 0) = sw;
        Aw.row(i).tail(n) = sw * (chart.global_points[near[i]].x - x).transpose();
        Pw.row(i) = sw * chart.global_points[near[i]].p.transpose();
      }
      Eigen::ColPivHouseholderQR<Mat> qr(Aw);
      qr.setThreshold(1e-8);
      if (qr.rank() == n + 1) {
        p_hat = qr.solve(Pw).row(0).transpose();
        fitted = p_hat.allFinite();
      }
    }
    if (!fitted) {
      p_hat = Vec::Zero(n);
      double total = 0.0;
      for (int i = 0; i < std::min(K, std::max(k, 1)); ++i) {
        p_hat += wts[i] * chart.global_points[near[i]].p;
        total += wts[i];
      }
      p_hat /= total;
    }
  }
  return optimal_feedback(hsys, x, p_hat);
}

FeedbackLaw manifold_feedback_law(std::shared_ptr<const ChartIndex> index,
                                  const HamiltonianSystem& hsys, int k) {
  FeedbackLaw law;
  law.name = "manifold";
  law.domain_radius = index->chart().coverage_radius();
  auto sys = std::make_shared<HamiltonianSystem>(hsys);
  law.k = [index, sys, k](const Vec& x) { return manifold_feedback(*index, *sys, x, k); };
  return law;
}

}  // namespace hamflow
