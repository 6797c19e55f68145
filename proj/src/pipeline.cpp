#include "hamflow/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "hamflow/error.hpp"
#include "hamflow/hamiltonian.hpp"
#include "hamflow/linalg.hpp"
#include "hamflow/ocp.hpp"

namespace hamflow {

namespace {

constexpr const char* kPenaltyConvention = "h = |Cx|^2/2 + h~(x)";

ExperimentConfig apply(ExperimentConfig cfg, const CommandOptions& options) {
  if (options.tol) {
    if (!(*options.tol > 0)) throw Error(ErrorCode::ConfigError, "--tol: must be > 0");
    cfg.tolerances.manifold = *options.tol;
    cfg.tolerances.bvp = *options.tol;
  }
  if (options.seed_count) {
    if (*options.seed_count < 1) throw Error(ErrorCode::ConfigError, "--seed-count: must be >= 1");
    cfg.manifold.seeds_per_radius = *options.seed_count;
  }
  return cfg;
}

ManifoldOptions manifold_options(const ExperimentConfig& cfg) {
  ManifoldOptions mo;
  mo.tol = cfg.tolerances.manifold;
  mo.integrator_tol = cfg.tolerances.integrator;
  mo.check_integrator_tol = cfg.tolerances.integrator;
  mo.check_time = cfg.manifold.check_time;
  return mo;
}

std::string horizon_name(double T) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", T);
  return buf;
}

/// Runs `body`, turning library errors into an exit code and a message
/// naming the stage that failed.
template <typename Body>
CommandResult guarded(const char* command, Body&& body) {
  CommandResult result;
  std::string stage = "setup";
  try {
    body(result, stage);
  } catch (const Error& e) {
    result.exit_code = exit_code_for(e);
    result.messages.push_back(std::string("error: ") + command + ": " + stage + ": " + e.what());
    result.files.clear();
  } catch (const std::exception& e) {
    result.exit_code = ExitNumerical;
    result.messages.push_back(std::string("error: ") + command + ": " + stage + ": " + e.what());
    result.files.clear();
  }
  return result;
}

bool dashboard_passes(const Json& dash) { return dash.at("passes").get<bool>(); }

}  // namespace

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::ConfigError:
    case ErrorCode::ParseError:
    case ErrorCode::UnknownExample:
    case ErrorCode::BadPartition:
      return ExitConfig;
    default:
      return ExitNumerical;
  }
}

Json hypothesis_dashboard(const ControlAffineSystem& sys, const GrowthConfig& growth) {
  Json d;
  d["system"] = sys.name;
  d["n"] = sys.n;
  d["m"] = sys.m;
  d["penalty_convention"] = kPenaltyConvention;

  const Vec zero = Vec::Zero(sys.n);
  d["f0_norm"] = sys.f(zero).norm();
  d["h0"] = sys.h(zero);

  const LinearData lin = linearize(sys);
  d["linearization"] = to_json(lin);
  const int rank_c = static_cast<int>(lin.C.rows());
  d["rank_C"] = rank_c;

  const bool stabilizable = pbh_stabilizable(lin.A, lin.B);
  const bool pbh_det = pbh_detectable(lin.C, lin.A);
  // With C empty the output is identically zero; PBH would only restate
  // that A is Hurwitz, which is the other path.
  const bool detectable = rank_c > 0 && pbh_det;
  const bool free_stable = is_hurwitz(lin.A);
  d["stabilizable"] = stabilizable;
  d["pbh_detectable"] = pbh_det;
  d["detectable"] = detectable;
  d["free_dynamics_hurwitz"] = free_stable;
  const std::string path = detectable ? "detectable" : (free_stable ? "stable_free_dynamics" : "none");
  d["path"] = path;

  Json care;
  bool care_ok = false;
  try {
    const SymplecticData sym = build_symplectic(lin.A, lin.B, lin.C);
    care["residual"] = care_residual(sym.P1, lin.A, lin.B, lin.C).norm();
    care["P1"] = to_json(sym.P1);
    care["closed_loop_abscissa"] = spectral_abscissa(sym.F);
    care_ok = true;
  } catch (const Error& e) {
    care["error"] = e.what();
  }
  care["ok"] = care_ok;
  d["care"] = care;

  const GrowthCertificate cert = growth_certificate(sys, growth.radii, growth.samples);
  d["growth"] = to_json(cert);
  d["coercive"] = cert.coercive;

  std::mt19937 rng(7);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform;
  double mismatch = 0.0;
  for (int k = 0; k < 20; ++k) {
    Vec x(sys.n);
    for (int i = 0; i < sys.n; ++i) x(i) = normal(rng);
    x *= std::pow(uniform(rng), 1.0 / sys.n) / std::max(x.norm(), 1e-300);
    mismatch = std::max(mismatch, jacobian_mismatch(sys, x));
  }
  d["jacobian_mismatch"] = mismatch;

  d["passes"] = stabilizable && path != "none" && care_ok;
  return d;
}

ManifoldChart build_chart(const HamiltonianSystem& hsys, const ExperimentConfig& cfg,
                          ManifoldKind kind) {
  const ManifoldConfig& mc = cfg.manifold;
  const int n = hsys.n();
  const ManifoldOptions mo = manifold_options(cfg);

  std::vector<Vec> seeds;
  if (mc.seeding == "flow") {
    const std::vector<double> reach = mc.reach.empty() ? std::vector<double>{mc.box} : mc.reach;
    seeds = flow_adapted_seeds(hsys, kind, mc.r_max, reach, mc.seeds_per_radius);
  } else {
    seeds = sphere_seeds(n, geometric_radii(mc.r_min, mc.r_max, mc.radii), mc.seeds_per_radius);
  }
  const ManifoldChart local = kind == ManifoldKind::Stable ? local_stable_manifold(hsys, seeds, mo)
                                                           : unstable_manifold(hsys, seeds, mo);

  GlobalizeOptions go;
  go.extend_time = mc.extend_time;
  go.sample_spacing = mc.sample_spacing;
  if (mc.lo) {
    go.bounds.lo = *mc.lo;
    go.bounds.hi = *mc.hi;
    go.bounds.p_max = mc.p_max;
  } else {
    go.bounds = Bounds::box(n, mc.box, mc.p_max);
  }
  return globalize(local, hsys, go, mo);
}

CommandResult cmd_inspect(const ExperimentConfig& config, const CommandOptions& options) {
  return guarded("inspect", [&](CommandResult& r, std::string& stage) {
    const ExperimentConfig cfg = apply(config, options);
    stage = "system";
    const ControlAffineSystem sys = build_system(cfg.system);
    stage = "dashboard";
    const Json dash = hypothesis_dashboard(sys, cfg.growth);
    r.summary = dash;
    r.files["inspect.json"] = dump_json(dash);
    r.messages.push_back(std::string("hypotheses ") + (dashboard_passes(dash) ? "pass" : "fail") +
                         " (path: " + dash.at("path").get<std::string>() + ")");
    if (!dash.at("growth").at("satisfied").get<bool>()) {
      r.messages.push_back("growth certificate not satisfied");
    }
  });
}

CommandResult cmd_manifold(const ExperimentConfig& config, const CommandOptions& options) {
  return guarded("manifold", [&](CommandResult& r, std::string& stage) {
    const ExperimentConfig cfg = apply(config, options);
    stage = "system";
    const ControlAffineSystem sys = build_system(cfg.system);
    stage = "dashboard";
    const Json dash = hypothesis_dashboard(sys, cfg.growth);
    if (!dashboard_passes(dash)) {
      if (!options.force) {
        r.exit_code = ExitNumerical;
        r.messages.push_back("error: manifold: hypothesis dashboard fails (path: " +
                             dash.at("path").get<std::string>() + "); rerun with --force");
        return;
      }
      r.messages.push_back("warning: hypothesis dashboard fails, continuing (--force)");
    }
    stage = "hamiltonian";
    const HamiltonianSystem hsys = build_hamiltonian(sys);

    Json summary;
    summary["penalty_convention"] = kPenaltyConvention;
    std::vector<ManifoldKind> kinds{ManifoldKind::Stable};
    if (cfg.manifold.unstable) kinds.push_back(ManifoldKind::Unstable);
    for (ManifoldKind kind : kinds) {
      const std::string tag = to_string(kind);
      stage = tag + " manifold";
      const ManifoldChart chart = build_chart(hsys, cfg, kind);
      stage = tag + " coverage";
      const CoverageEstimate cov = coverage(chart, hsys, cfg.manifold.queries,
                                            cfg.manifold.newton_tol, manifold_options(cfg));
      double max_h = 0.0;
      for (const auto& p : chart.global_points) max_h = std::max(max_h, std::abs(p.H));
      summary[tag] = {{"points", chart.global_points.size()},
                      {"seeds", chart.seeds.size()},
                      {"failed_seeds", chart.failed_seeds},
                      {"rejected_points", chart.rejected_points},
                      {"max_abs_H", max_h},
                      {"coverage_radius", chart.coverage_radius()},
                      {"covered", cov.count(CoverageStatus::Covered)},
                      {"uncovered", cov.count(CoverageStatus::Uncovered)},
                      {"boundary", cov.count(CoverageStatus::Boundary)}};
      if (cfg.output.json) {
        r.files["chart_" + tag + ".json"] = dump_json(to_json(chart));
        r.files["coverage_" + tag + ".json"] = dump_json(to_json(cov));
      }
      if (cfg.output.csv) {
        std::ostringstream csv;
        write_points_csv(csv, chart);
        r.files["points_" + tag + ".csv"] = csv.str();
      }
      r.messages.push_back(tag + " manifold: " + std::to_string(chart.global_points.size()) +
                           " points, coverage " + std::to_string(cov.count(CoverageStatus::Covered)) +
                           "/" + std::to_string(cov.entries.size()) + " covered");
    }
    r.summary = summary;
    if (cfg.output.json) r.files["manifold.json"] = dump_json(summary);
  });
}

CommandResult cmd_turnpike(const ExperimentConfig& config, const CommandOptions& options) {
  return guarded("turnpike", [&](CommandResult& r, std::string& stage) {
    const ExperimentConfig cfg = apply(config, options);
    if (!cfg.turnpike) throw Error(ErrorCode::ConfigError, "turnpike: section missing");
    const TurnpikeConfig& tc = *cfg.turnpike;
    if (tc.horizons.empty()) throw Error(ErrorCode::ConfigError, "turnpike.horizons: empty");
    stage = "system";
    const ControlAffineSystem sys = build_system(cfg.system);
    const HamiltonianSystem hsys = build_hamiltonian(sys);

    TurnpikeOptions to;
    to.epsilon = tc.epsilon;
    to.uniformity_bound = tc.uniformity_bound;
    to.warm_start = tc.warm_start;
    to.bvp.tol = cfg.tolerances.bvp;
    to.bvp.integrator_tol = cfg.tolerances.integrator;
    to.newton_tol = cfg.manifold.newton_tol;
    std::optional<ManifoldChart> stable, unstable;
    if (tc.check_manifolds) {
      stage = "stable manifold";
      stable = build_chart(hsys, cfg, ManifoldKind::Stable);
      stage = "unstable manifold";
      unstable = build_chart(hsys, cfg, ManifoldKind::Unstable);
      to.stable_chart = &*stable;
      to.unstable_chart = &*unstable;
    }
    stage = "shooting";
    const TurnpikeReport rep = turnpike_report(hsys, tc.x0, tc.xf, tc.horizons, to);

    Json j = to_json(rep);
    j["penalty_convention"] = kPenaltyConvention;
    j["x0"] = to_json(tc.x0);
    j["xf"] = to_json(tc.xf);
    r.summary = j;
    if (cfg.output.json) r.files["turnpike.json"] = dump_json(j);
    if (cfg.output.csv) {
      std::ostringstream csv;
      write_turnpike_csv(csv, rep);
      r.files["turnpike.csv"] = csv.str();
      for (const auto& e : rep.entries) {
        if (!e.converged) continue;
        std::ostringstream traj;
        write_trajectory_csv(traj, e.solution.traj, {hsys.n(), true});
        r.files["trajectory_T" + horizon_name(e.T) + ".csv"] = traj.str();
      }
    }
    for (const auto& e : rep.entries) {
      if (!e.converged) r.messages.push_back("error: T = " + horizon_name(e.T) + ": " + e.error);
    }
    r.messages.push_back("uniformity " + format_number(rep.uniformity) + (rep.uniform ? " within" : " exceeds") +
                         " bound " + format_number(rep.uniformity_bound));
    if (rep.sufficient_condition && !*rep.sufficient_condition) {
      r.messages.push_back("warning: sufficient condition unsatisfied (x0 " +
                           to_string(*rep.x0_status) + " in stable projection, xf " +
                           to_string(*rep.xf_status) + " in unstable projection)");
    }
    if (!rep.all_converged) r.exit_code = ExitNumerical;
  });
}

CommandResult cmd_simulate(const ExperimentConfig& config, const CommandOptions& options) {
  return guarded("simulate", [&](CommandResult& r, std::string& stage) {
    const ExperimentConfig cfg = apply(config, options);
    if (!cfg.simulate) throw Error(ErrorCode::ConfigError, "simulate: section missing");
    const SimulateConfig& sc = *cfg.simulate;
    stage = "system";
    const ControlAffineSystem sys = build_system(cfg.system);
    const HamiltonianSystem hsys = build_hamiltonian(sys);

    stage = "feedback";
    FeedbackLaw law;
    if (sc.feedback == "zero") {
      law = zero_feedback(sys.m);
    } else if (sc.feedback == "lqr") {
      const SymplecticData& sym = hsys.sym();
      law = linear_feedback(hsys.linear().B.transpose() * sym.P1);
      law.name = "lqr";
    } else if (sc.feedback == "backstepping") {
      if (cfg.system.name != "backstepping") {
        throw Error(ErrorCode::ConfigError,
                    "simulate.feedback: backstepping needs the backstepping system");
      }
      law = backstepping_feedback(backstepping_cascade());
    } else {
      stage = "stable manifold";
      auto index = std::make_shared<const ChartIndex>(build_chart(hsys, cfg, ManifoldKind::Stable));
      law = manifold_feedback_law(index, hsys);
    }

    stage = "simulation";
    const Trajectory traj = simulate_controlled(sys, sc.x0, law, sc.T, cfg.tolerances.integrator);
    Json j;
    j["feedback"] = sc.feedback;
    j["penalty_convention"] = kPenaltyConvention;
    j["T"] = sc.T;
    j["x0"] = to_json(sc.x0);
    j["final_state"] = to_json(Vec(traj.states.back()));
    j["cost"] = traj.cost.empty() ? 0.0 : traj.cost.back();
    j["samples"] = traj.size();

    stage = "infinite-horizon cost";
    try {
      const InfiniteCost ic = infinite_cost(sys, law, sc.x0, 1e-10, 200.0, cfg.tolerances.integrator);
      j["infinite_cost"] = {{"value", ic.value}, {"tail_bound", ic.tail_bound},
                            {"t_switch", ic.t_switch}, {"kappa", ic.kappa}};
    } catch (const Error& e) {
      j["infinite_cost"] = {{"error", e.what()}};
    }
    r.summary = j;
    if (cfg.output.json) r.files["simulate.json"] = dump_json(j);
    if (cfg.output.csv) {
      std::ostringstream csv;
      write_trajectory_csv(csv, traj, {sys.n, false});
      r.files["simulate.csv"] = csv.str();
    }
    r.messages.push_back("simulated " + sc.feedback + " feedback to T = " + horizon_name(sc.T) +
                         ", cost " + format_number(j["cost"].get<double>()));
  });
}

void write_outputs(const CommandResult& result, const std::string& dir) {
  namespace fs = std::filesystem;
  if (result.files.empty()) return;
  fs::create_directories(dir);
  for (const auto& [name, content] : result.files) {
    std::ofstream out(fs::path(dir) / name, std::ios::binary);
    if (!out) throw Error(ErrorCode::ConfigError, "cannot write " + (fs::path(dir) / name).string());
    out << content;
  }
}

}  // namespace hamflow
