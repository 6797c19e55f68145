#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <variant>

#include "hamflow/linalg.hpp"
#include "hamflow/ode.hpp"
#include "hamflow/systems.hpp"

namespace hamflow {

/// Splitting of a linearized vector field into a stable block Fs and an
/// anti-stable block Fu: with z = T (s, u),  T^{-1} M T = diag(Fs, Fu).
struct Splitting {
  Mat T;
  Mat Tinv;
  Mat Fs;
  Mat Fu;
};

/// Hamiltonian system of the optimal control problem,
///   x' =  dH/dp = f(x) - g(x) g(x)^T p,
///   p' = -dH/dx = -[Df(x)^T + sum_j u*_j Dg_j(x)^T] p - Dh(x),
/// with u* = -g(x)^T p and H(x, p) = p^T f(x) - |g(x)^T p|^2 / 2 + h(x).
/// The state is stacked z = (x, p).
///
/// A time-reversed copy negates both the vector field and H.
class HamiltonianSystem {
 public:
  HamiltonianSystem(ControlAffineSystem base, LinearData lin,
                    std::optional<SymplecticData> sym, bool reversed = false);

  const ControlAffineSystem& base() const { return base_; }
  const LinearData& linear() const { return lin_; }
  bool has_symplectic() const { return sym_.has_value(); }
  /// Throws NotStabilizable when the CARE had no stabilizing solution.
  const SymplecticData& sym() const;
  bool reversed() const { return reversed_; }
  int n() const { return base_.n; }
  int m() const { return base_.m; }

  Vec rhs(const Vec& z) const;
  double hval(const Vec& x, const Vec& p) const;
  double hval(const Vec& z) const { return hval(z.head(n()), z.tail(n())); }

  /// Hamiltonian system with t replaced by -t.
  HamiltonianSystem time_reversed() const;

  /// Splitting used by the stable-manifold construction. For the forward
  /// system this is (xi, eta) with Fs = F, Fu = -F^T; for the reversed system
  /// the roles of xi and eta swap.
  Splitting stable_splitting() const;

 private:
  ControlAffineSystem base_;
  LinearData lin_;
  std::optional<SymplecticData> sym_;
  bool reversed_ = false;
  std::string sym_error_;
  friend HamiltonianSystem build_hamiltonian(const ControlAffineSystem&);
};

/// Never throws: if the linear part admits no stabilizing CARE solution the
/// result carries no symplectic data and sym() reports why.
HamiltonianSystem build_hamiltonian(const ControlAffineSystem& sys);

Vec optimal_feedback(const HamiltonianSystem& hsys, const Vec& x, const Vec& p);

struct FlowOptions {
  double tol = 1e-9;
  double escape_bound = 1e8;
  bool throw_on_failure = true;
};

/// Integrates the Hamiltonian flow over t in [0, t_span] (negative spans flow
/// backwards). The result carries (x, p) samples, u = -g^T p and H.
Trajectory flow(const HamiltonianSystem& hsys, const Vec& z0, double t_span,
                const FlowOptions& options = {}, const StepObserver& observer = {});

/// Upper bound on sup_t |H(z(t)) - H(z(0))| from the stored samples.
double max_energy_drift(const Trajectory& traj);

std::pair<Vec, Vec> to_xi_eta(const SymplecticData& sym, const Vec& x, const Vec& p);
std::pair<Vec, Vec> from_xi_eta(const SymplecticData& sym, const Vec& xi, const Vec& eta);

/// Piecewise-constant input: values[i] applies on [breaks[i], breaks[i+1]),
/// the last value until the end of the horizon.
struct PiecewiseConstantInput {
  std::vector<double> breaks;
  std::vector<Vec> values;

  Vec at(double t) const;
};

using InputSource = std::variant<FeedbackLaw, PiecewiseConstantInput>;

/// Simulates x' = f(x) + g(x) u on [0, T] and accumulates
/// J = int |u|^2/2 + h(x) dt as an extra integrator state. The returned
/// trajectory carries x samples, u samples and the running cost.
Trajectory simulate_controlled(const ControlAffineSystem& sys, const Vec& x0,
                               const InputSource& source, double T, double tol = 1e-9);

/// CSV column layout: t, x1..xn, p1..pn, u1..um, H, cost. Columns without
/// data in the trajectory are omitted.
struct CsvLayout {
  int n = 0;
  bool costate = false;
};

void write_trajectory_csv(std::ostream& out, const Trajectory& traj, const CsvLayout& layout);

}  // namespace hamflow
