#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hamflow/error.hpp"
#include "hamflow/hamiltonian.hpp"
#include "hamflow/manifold.hpp"

namespace hamflow {

/// Raised when Newton on the shooting equations fails; carries the best
/// residual and costate iterate seen.
class ShootingDivergedError : public Error {
 public:
  ShootingDivergedError(const std::string& what, double best_residual, Vec best_p0)
      : Error(ErrorCode::ShootingDiverged, what),
        best_residual_(best_residual),
        best_p0_(std::move(best_p0)) {}
  double best_residual() const { return best_residual_; }
  const Vec& best_p0() const { return best_p0_; }

 private:
  double best_residual_;
  Vec best_p0_;
};

struct BvpOptions {
  /// Bound on |x(T) - xf| and on the continuity defects between segments.
  double tol = 1e-8;
  double integrator_tol = 1e-11;
  int max_iter = 30;
  /// Shooting segment length; <= 0 uses min(1, 3 / max |Re eig(Ham)|) so
  /// that no segment amplifies perturbations by much more than e^3.
  double segment_time = 0.0;
  /// Segment integrations beyond this norm, times 1 + the largest entry of
  /// the initial guess and boundary data, count as escaped.
  double escape_bound = 1e4;
  /// Initial costate override.
  std::optional<Vec> p0_guess;
  /// Initial (x, p) guess along [0, T]; replaces the linearized solution.
  std::function<Vec(double)> guess;
  /// Fall back to continuation in the boundary data when the direct solve
  /// fails.
  bool continuation = true;
};

struct BvpSolution {
  /// (x, p) samples with inputs u = -g^T p and H filled in.
  Trajectory traj;
  Vec p0;
  /// |x(T) - xf|.
  double residual = 0.0;
  /// Largest continuity defect between shooting segments.
  double defect = 0.0;
  int iterations = 0;
  int segments = 0;
  bool used_continuation = false;
  /// J_T = int |u|^2 / 2 + h(x) dt.
  double cost = 0.0;
};

/// Solves x(0) = x0, x(T) = xf for the Hamiltonian system by multiple
/// shooting with damped Newton (finite-difference segment sensitivities).
/// The default initial guess is the solution of the linearized problem.
/// Throws ShootingDivergedError or IntegratorEscape.
BvpSolution solve_finite_bvp(const HamiltonianSystem& hsys, const Vec& x0, const Vec& xf, double T,
                             const BvpOptions& options = {});

/// Solution of the linearized two-point problem in (xi, eta) coordinates:
/// xi(t) = e^{Ft} xi0, eta(t) = e^{-F^T (t - T)} eta_T.
std::function<Vec(double)> linear_bvp_guess(const SymplecticData& sym, const Vec& x0, const Vec& xf,
                                            double T);

struct ResidenceResult {
  /// Lebesgue measure of {t : s(t) > epsilon}.
  double measure = 0.0;
  /// First time the signal drops to epsilon or below, if it ever does.
  std::optional<double> first_exit;
  /// Last time the signal rises above epsilon again, if it does.
  std::optional<double> last_entry;
  std::vector<std::pair<double, double>> intervals;
};

/// Super-level set measure of a scalar signal on [t0, t1]; crossings are
/// bracketed on `grid` (refined `subdivisions` times per interval) and
/// located by bisection.
ResidenceResult residence_measure(const std::function<double(double)>& signal,
                                  const std::vector<double>& grid, double epsilon,
                                  int subdivisions = 8);

/// Residence measure of s(t) = |u(t)| + |x(t)| (Euclidean norms) from the
/// dense output. x is the first n state components (all when n < 0). u is
/// control(z) when given, else linear interpolation of traj.inputs, else 0.
ResidenceResult turnpike_metric(const Trajectory& traj, double epsilon, int n = -1,
                                const std::function<Vec(const Vec&)>& control = {});

struct TurnpikeEntry {
  double T = 0.0;
  bool converged = false;
  double residence = 0.0;
  std::optional<double> first_exit;
  std::optional<double> last_entry;
  double cost = 0.0;
  double residual = 0.0;
  int iterations = 0;
  std::string error;
  BvpSolution solution;
};

struct TurnpikeOptions {
  double epsilon = 0.1;
  double uniformity_bound = 1.5;
  /// Splice the previous horizon's solution around the turnpike as the next
  /// initial guess.
  bool warm_start = true;
  BvpOptions bvp;
  /// Optional charts for the sufficient condition x0 in pi(stable),
  /// xf in pi(unstable).
  const ManifoldChart* stable_chart = nullptr;
  const ManifoldChart* unstable_chart = nullptr;
  double newton_tol = 1e-8;
};

struct TurnpikeReport {
  double epsilon = 0.0;
  double uniformity_bound = 0.0;
  std::vector<TurnpikeEntry> entries;
  /// max / min residence over converged horizons (1 when all vanish).
  double uniformity = 0.0;
  bool all_converged = false;
  bool uniform = false;
  std::optional<CoverageStatus> x0_status;
  std::optional<CoverageStatus> xf_status;
  /// Set when both charts were supplied.
  std::optional<bool> sufficient_condition;
};

/// Solves the BVP for every horizon and reports residence measures. Per
/// horizon failures are recorded in the entries, not thrown.
TurnpikeReport turnpike_report(const HamiltonianSystem& hsys, const Vec& x0, const Vec& xf,
                               const std::vector<double>& horizons,
                               const TurnpikeOptions& options = {});

/// J_T = int |u|^2 / 2 + h(x) dt along an (x, p) trajectory, Simpson's rule on
/// the dense output.
double trajectory_cost(const HamiltonianSystem& hsys, const Trajectory& traj);

struct InfiniteCost {
  double value = 0.0;
  /// Bound kappa |x(t_switch)|^2 on the neglected tail.
  double tail_bound = 0.0;
  double t_switch = 0.0;
  double kappa = 0.0;
};

/// Integrates the closed loop with cost accumulation until |x| < r_switch =
/// sqrt(tail_tol / kappa), kappa = max(lambda_max(P1) / 2, 1) (1 when the
/// CARE has no stabilizing solution). Throws NoConvergence when |x| does not
/// reach r_switch by t_max.
InfiniteCost infinite_cost(const ControlAffineSystem& sys, const FeedbackLaw& feedback,
                           const Vec& x0, double tail_tol = 1e-10, double t_max = 200.0,
                           double tol = 1e-11);

}  // namespace hamflow
