#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hamflow/hamiltonian.hpp"

namespace hamflow {

enum class ManifoldKind { Stable, Unstable };

std::string to_string(ManifoldKind kind);

/// A converged local-chart seed: `xi` is the coordinate along the stable
/// block of the splitting and `eta` = theta(xi) the graph value.
struct ChartSeed {
  Vec xi;
  Vec eta;
  std::vector<double> residuals;
};

/// A point of the manifold in original coordinates. `seed` and `tau` record
/// how it was produced: the local seed it descends from and the (positive)
/// time it was flowed away from the local chart.
struct ChartPoint {
  Vec x;
  Vec p;
  double H = 0.0;
  /// Smallest |z| reached by the convergence check flow.
  double flow_check = 0.0;
  int seed = -1;
  double tau = 0.0;
};

struct ManifoldChart {
  ManifoldKind kind = ManifoldKind::Stable;
  double tol = 0.0;
  double horizon = 0.0;
  double local_radius = 0.0;
  double check_time = 0.0;
  double check_tol = 0.0;
  double energy_tol = 0.0;
  std::vector<ChartSeed> seeds;
  std::vector<ChartPoint> global_points;
  int failed_seeds = 0;
  int rejected_points = 0;

  /// max |x| over the stored points.
  double coverage_radius() const;
};

struct ManifoldOptions {
  /// Truncation horizon of the fixed-point iteration; <= 0 picks the
  /// smallest horizon with |e^{Fs t}| <= tol / 10.
  double horizon = 0.0;
  double tol = 1e-10;
  int max_iter = 100;
  /// Quadrature nodes over the horizon (Gauss-Legendre panels).
  int nodes = 200;
  int nodes_per_panel = 8;

  double integrator_tol = 1e-11;
  /// Tolerance of the convergence-check flows.
  double check_integrator_tol = 1e-11;
  /// Convergence check: the flow from a stored point must reach
  /// |z| < check_tol within tau + check_time.
  double check_time = 40.0;
  double check_tol = 1e-3;
  /// When the direct flow is swamped by the unstable directions (stiff
  /// saddles), a point is still accepted if it is linked to its seed by short
  /// forward flows, each landing within link_tol (1 + |z|) of the previous
  /// orbit sample, and the seed's graph-iteration orbit reaches check_tol.
  double link_tol = 1e-6;
  double link_time = 0.5;
  double energy_tol = 1e-6;
  bool verify = true;
};

/// Solves for theta(xi0) by Lyapunov-Perron iteration on [0, horizon]:
///   s_{k+1}(t) = e^{Fs t} s0 + int_0^t e^{Fs (t - r)} nu_s(s_k, u_k) dr
///   u_{k+1}(t) = -int_t^H e^{Fu (t - r)} nu_u(s_k, u_k) dr
/// starting from (e^{Fs t} s0, 0), with nu the nonlinear residual of the
/// Hamiltonian field in split coordinates.
class GraphSolver {
 public:
  /// `field` is oriented: pass hsys for the stable graph and
  /// hsys.time_reversed() for the unstable one.
  GraphSolver(const HamiltonianSystem& field, const ManifoldOptions& options);
  ~GraphSolver();
  GraphSolver(GraphSolver&&) noexcept;
  GraphSolver& operator=(GraphSolver&&) noexcept;

  struct Result {
    Vec eta;
    std::vector<double> residuals;
    bool converged = false;
    /// Smallest |z| along the converged orbit and the first node time with
    /// |z| < check_tol (negative if never).
    double orbit_min = 0.0;
    double reach_time = -1.0;
  };

  Result solve(const Vec& xi0) const;

  /// Like solve(), but throws NoConvergence.
  Vec theta(const Vec& xi0) const;

  /// (x, p) = T (xi, theta(xi)).
  Vec lift(const Vec& xi, const Vec& eta) const;

  double horizon() const;
  int n() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Seeds on spheres: `per_radius` low-discrepancy directions on each radius.
std::vector<Vec> sphere_seeds(int n, const std::vector<double>& radii, int per_radius);
std::vector<double> geometric_radii(double r_min, double r_max, int count);

/// Seeds of norm r0 whose linearized orbits cross the spheres |x| = reach at
/// low-discrepancy directions: each direction d is pulled back along the
/// linear flow, s0 = e^{Fs t} M^+ (reach d), with t the first time |s0| <= r0
/// and M the x-block of the splitting. Uniform rings in xi bunch up in x when
/// the closed loop is far from normal; these do not. The pull-back also stops
/// once |e^{Fs t}| |e^{-Fs t}| exceeds max_condition, so on stiff saddles the
/// seeds stay resolvable at the graph tolerance and may lie outside r0.
std::vector<Vec> flow_adapted_seeds(const HamiltonianSystem& hsys, ManifoldKind kind, double r0,
                                    const std::vector<double>& reach, int per_radius,
                                    double max_condition = 1e6);

/// Local chart of the stable manifold eta = theta(xi). Seeds that do not
/// converge are dropped and counted; NoConvergence is raised only when none
/// converge. The origin is always part of the chart.
ManifoldChart local_stable_manifold(const HamiltonianSystem& hsys, const std::vector<Vec>& seeds,
                                    const ManifoldOptions& options = {});

/// Same construction applied to the time-reversed field.
ManifoldChart unstable_manifold(const HamiltonianSystem& hsys, const std::vector<Vec>& seeds,
                                const ManifoldOptions& options = {});

struct Bounds {
  Vec lo;
  Vec hi;
  double p_max = 1e4;

  bool contains(const Vec& x, const Vec& p) const;
  static Bounds box(int n, double half_width, double p_max = 1e4);
};

struct GlobalizeOptions {
  double extend_time = 10.0;
  Bounds bounds;
  /// Arc-length spacing (in x) of stored points along each backward orbit.
  double sample_spacing = 0.02;
  /// Also store a point at least this often in time.
  double max_sample_dt = 1.0;
  /// Points within this distance in (x, p) of an earlier point (seed order,
  /// then tau) are dropped; negative means sample_spacing / 4. Orbits from
  /// nearby seeds of a stiff saddle run together for a long time and would
  /// otherwise collapse the median spacing.
  double thin_radius = -1.0;
};

/// Extends a local chart by flowing its seed points away from the origin
/// (backwards for stable charts, forwards for unstable ones) until they leave
/// the bounds, the time budget runs out or the integrator stalls. Appended
/// points satisfy the chart's energy and convergence checks; the rest are
/// counted in rejected_points.
ManifoldChart globalize(const ManifoldChart& chart, const HamiltonianSystem& hsys,
                        const GlobalizeOptions& options, const ManifoldOptions& manifold_options = {});

/// Nearest-neighbour index over the x-projection of a chart.
class ChartIndex {
 public:
  explicit ChartIndex(const ManifoldChart& chart);
  ~ChartIndex();
  ChartIndex(ChartIndex&&) noexcept;

  const ManifoldChart& chart() const { return chart_; }
  /// Indices of the k nearest chart points to x, closest first.
  std::vector<int> nearest(const Vec& x, int k) const;
  double median_spacing() const { return median_spacing_; }
  /// 10x the median nearest-neighbour spacing.
  double snap_radius() const { return 10.0 * median_spacing_; }
  /// 3x the median nearest-neighbour spacing.
  double boundary_radius() const { return 3.0 * median_spacing_; }

 private:
  struct Tree;
  ManifoldChart chart_;
  std::unique_ptr<Tree> tree_;
  double median_spacing_ = 0.0;
};

enum class CoverageStatus { Covered, Uncovered, Boundary };
std::string to_string(CoverageStatus status);

struct Witness {
  Vec x;
  Vec p;
  double H = 0.0;
  double flow_check = 0.0;
};

struct CoverageEntry {
  Vec query;
  CoverageStatus status = CoverageStatus::Uncovered;
  /// Distance to the nearest stored chart point.
  double distance = 0.0;
  /// All distinct refined witnesses, smallest |p| first.
  std::vector<Witness> witnesses;
};

struct CoverageEstimate {
  ManifoldKind kind = ManifoldKind::Stable;
  std::vector<CoverageEntry> entries;
  double snap_radius = 0.0;
  double boundary_radius = 0.0;
  double newton_tol = 0.0;
  std::string method;

  std::size_t count(CoverageStatus status) const;
};

/// Classifies query points against the projection of the chart. A query is
/// covered when a chart point lies within the snap radius and Newton
/// refinement (on the seed coordinate, with the flow time fixed) produces a
/// manifold point projecting onto it to newton_tol. Failed refinements are
/// "boundary" within the boundary radius and "uncovered" beyond it.
CoverageEstimate coverage(const ManifoldChart& chart, const HamiltonianSystem& hsys,
                          const std::vector<Vec>& query_points, double newton_tol = 1e-8,
                          const ManifoldOptions& options = {});

/// u = -g(x)^T p_hat(x). p_hat is an affine least-squares fit of p against x
/// over the nearest chart points with inverse-distance weights (plain
/// inverse-distance averaging when the fit is degenerate). Throws Uncovered
/// beyond the snap radius.
Vec manifold_feedback(const ChartIndex& index, const HamiltonianSystem& hsys, const Vec& x,
                      int k = 4);

/// FeedbackLaw view of manifold_feedback.
FeedbackLaw manifold_feedback_law(std::shared_ptr<const ChartIndex> index,
                                  const HamiltonianSystem& hsys, int k = 4);

}  // namespace hamflow
