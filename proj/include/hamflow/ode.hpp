#pragma once

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <limits>
#include <vector>

namespace hamflow {

using Vec = Eigen::VectorXd;

enum class FlowStatus { Completed, Stopped, StepSizeUnderflow, Escape, NonFinite };

struct IntegratorStats {
  long steps = 0;
  long rejected = 0;
  long evaluations = 0;
  double rtol = 0.0;
  double atol = 0.0;
};

/// Continuous extension of one Dormand-Prince step, valid on [t0, t0 + h]
/// (h may be negative).
struct DenseSegment {
  double t0 = 0.0;
  double h = 0.0;
  std::array<Vec, 5> coeff;

  Vec eval(double t) const;
};

/// Sampled solution with dense interpolation. Samples are stored with
/// strictly increasing times regardless of integration direction.
struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  /// Optional per-sample control values (same length as times when present).
  std::vector<Vec> inputs;
  /// Optional per-sample Hamiltonian and accumulated running cost.
  std::vector<double> energy;
  std::vector<double> cost;

  /// One segment per sample interval when the integrator produced them.
  std::vector<DenseSegment> dense;
  /// Optional per-sample derivatives, used for cubic Hermite interpolation
  /// when no dense segments are present.
  std::vector<Vec> derivatives;

  IntegratorStats stats;
  FlowStatus status = FlowStatus::Completed;

  bool empty() const { return times.empty(); }
  std::size_t size() const { return times.size(); }
  double start_time() const { return times.front(); }
  double end_time() const { return times.back(); }
  int dim() const { return states.empty() ? 0 : static_cast<int>(states.front().size()); }

  /// 4 for Dormand-Prince dense output, 3 for Hermite, 1 for linear.
  int interpolant_order() const;

  /// Interpolated state at t (clamped to the sampled range).
  Vec at(double t) const;

  /// Index i of the interval [times[i], times[i+1]] containing t.
  std::size_t interval(double t) const;

  /// Throws DimensionMismatch unless times are strictly increasing and all
  /// samples have uniform dimensions.
  void validate() const;

  /// Reverses storage order; used after integrating backwards in time.
  void reverse();

  /// Appends `other`, dropping its first sample when it duplicates the last
  /// time of this trajectory.
  void append(const Trajectory& other);
};

struct OdeOptions {
  double rtol = 1e-9;
  double atol = 1e-9;
  double initial_step = 0.0;
  double max_step = std::numeric_limits<double>::infinity();
  long max_steps = 1000000;
  /// |y|_inf above this terminates with a finite-escape signal.
  double escape_bound = 1e8;
  /// Step sizes below underflow_factor * |t1 - t0| terminate integration.
  double underflow_factor = 1e-14;
  bool keep_dense = true;
  /// When false, failures are reported through Trajectory::status instead of
  /// exceptions.
  bool throw_on_failure = true;
};

using OdeRhs = std::function<Vec(double, const Vec&)>;
/// Called after every accepted step; returning false stops integration.
using StepObserver = std::function<bool(double, const Vec&)>;

/// Embedded Runge-Kutta 5(4) (Dormand-Prince) with PI step-size control and
/// fourth-order dense output. Integrates from t0 to t1 (t1 < t0 allowed).
Trajectory integrate(const OdeRhs& rhs, double t0, const Vec& y0, double t1,
                     const OdeOptions& options = {}, const StepObserver& observer = {});

}  // namespace hamflow
