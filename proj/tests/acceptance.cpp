// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hamflow/config.hpp"
#include "hamflow/error.hpp"
#include "hamflow/expr.hpp"
#include "hamflow/io.hpp"
#include "hamflow/linalg.hpp"
#include "hamflow/manifold.hpp"
#include "hamflow/ocp.hpp"
#include "hamflow/pipeline.hpp"
#include "hamflow/systems.hpp"
#include "oracles.hpp"

using namespace hamflow;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string config_path(const std::string& name) {
  return std::string(HAMFLOW_CONFIGS) + "/" + name;
}

int failures = 0;

void report(int id, const char* title, bool ok, const std::string& detail) {
  std::printf("%s AC%d %s: %s\n", ok ? "PASS" : "FAIL", id, title, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Runs a criterion body, turning exceptions into a failure line.
void run(int id, const char* title, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    const auto [ok, detail] = body();
    report(id, title, ok, detail);
  } catch (const std::exception& e) {
    report(id, title, false, std::string("exception: ") + e.what());
  }
}

Json file_json(const CommandResult& r, const std::string& name) {
  return Json::parse(r.files.at(name));
}

// Suite shared by criteria 2 and 3.
struct RandomSuite {
  std::vector<oracle::LinearSystem> systems;
  int rejected = 0;
};

RandomSuite random_suite() {
  RandomSuite suite;
  std::mt19937 rng(20240611);
  for (int i = 0; i < 20; ++i) suite.systems.push_back(oracle::random_moderate_linear(rng, 20.0, &suite.rejected));
  return suite;
}

std::pair<bool, std::string> scalar_boundary() {
  const auto t0 = Clock::now();
  ExperimentConfig cfg = load_config(config_path("scalar.json"));
  const std::vector<double> in{-2, -1, 0.5, 0.9}, out{1.1, 1.5};
  cfg.manifold.queries.clear();
  for (double x : in) cfg.manifold.queries.push_back(Vec::Constant(1, x));
  for (double x : out) cfg.manifold.queries.push_back(Vec::Constant(1, x));
  const CommandResult r = cmd_manifold(cfg);
  if (r.exit_code != 0) return {false, "manifold command exited " + std::to_string(r.exit_code)};
  const Json chart = file_json(r, "chart_stable.json");
  const Json cov = file_json(r, "coverage_stable.json");
  double max_p = 0.0;
  for (const auto& pt : chart.at("global_points")) {
    max_p = std::max(max_p, vec_from_json(pt.at("p")).lpNorm<Eigen::Infinity>());
  }
  bool ok = max_p <= 1e-6;
  std::string statuses;
  for (const auto& e : cov.at("entries")) {
    const double x = vec_from_json(e.at("query"))(0);
    const std::string st = e.at("status").get<std::string>();
    const bool want_covered = x < 1.0;
    ok = ok && (want_covered ? st == "covered" : st == "uncovered");
    statuses += fmt(" %g:", x) + st;
  }
  const double t = seconds_since(t0);
  ok = ok && t < 10.0;
  return {ok, fmt("max|p| = %.2e;", max_p) + statuses + fmt("; %.2f s", t)};
}

std::pair<bool, std::string> lqr_degeneration(const RandomSuite& suite) {
  const auto t0 = Clock::now();
  std::mt19937 rng(99);
  double chart_err = 0.0, bvp_err = 0.0;
  int points = 0, witnesses = 0, missing = 0;
  for (const auto& s : suite.systems) {
    const int n = static_cast<int>(s.A.rows());
    ExperimentConfig cfg;
    cfg.system.name = "linear";
    cfg.system.A = s.A;
    cfg.system.B = s.B;
    cfg.system.C = s.C;
    cfg.manifold.seeds_per_radius = 8 * n;
    cfg.manifold.box = 1.2;
    cfg.manifold.extend_time = 40.0;
    cfg.manifold.sample_spacing = 0.1;
    const HamiltonianSystem hs = build_hamiltonian(build_system(cfg.system));
    const Mat P1 = oracle::invariant_graph(oracle::hamiltonian_matrix(s.A, s.B, s.C), true);
    const ManifoldChart chart = build_chart(hs, cfg, ManifoldKind::Stable);
    for (const auto& pt : chart.global_points) {
      if (pt.x.norm() > 1.0) continue;
      chart_err = std::max(chart_err, (pt.p - P1 * pt.x).norm());
      ++points;
    }
    std::vector<Vec> queries;
    for (int k = 0; k < 10; ++k) queries.push_back(oracle::ball_point(rng, n));
    const CoverageEstimate cov = coverage(chart, hs, queries, cfg.manifold.newton_tol);
    for (const auto& e : cov.entries) {
      if (e.status != CoverageStatus::Covered) {
        ++missing;
        continue;
      }
      for (const auto& w : e.witnesses) {
        chart_err = std::max(chart_err, (w.p - P1 * w.x).norm());
        ++witnesses;
      }
    }

    const Vec x0 = oracle::ball_point(rng, n), xf = oracle::ball_point(rng, n, 0.5);
    const double T = 2.0;
    const BvpSolution sol = solve_finite_bvp(hs, x0, xf, T);
    const Mat Ham = oracle::hamiltonian_matrix(s.A, s.B, s.C);
    Vec z0(2 * n);
    z0 << x0, oracle::linear_bvp_p0(Ham, x0, xf, T);
    for (int k = 0; k <= 20; ++k) {
      const double t = T * k / 20;
      bvp_err = std::max(bvp_err, (sol.traj.at(t) - oracle::expm_eig(Ham, t) * z0).norm());
    }
  }
  const double t = seconds_since(t0);
  const bool ok = chart_err <= 1e-6 && missing == 0 && bvp_err <= 1e-6 && t < 30.0;
  return {ok, fmt("sup|p - P1 x| = %.2e", chart_err) + " over " + std::to_string(points) +
                  " chart points and " + std::to_string(witnesses) + " witnesses, " +
                  std::to_string(missing) + " uncovered queries" + fmt("; BVP error %.2e", bvp_err) +
                  "; " + std::to_string(suite.rejected) + " draws with |P1| > 20 skipped" +
                  fmt("; %.2f s", t)};
}

std::pair<bool, std::string> structure(const RandomSuite& suite) {
  double care = 0.0, sympl = 0.0, inv = 0.0, off = 0.0;
  for (const auto& s : suite.systems) {
    const int n = static_cast<int>(s.A.rows());
    const SymplecticData d = build_symplectic(s.A, s.B, s.C);
    const Mat J = symplectic_form(n);
    care = std::max(care, care_residual(d.P1, s.A, s.B, s.C).norm());
    sympl = std::max(sympl, (d.L.transpose() * J * d.L - J).norm());
    inv = std::max(inv, (d.L * d.Linv - Mat::Identity(2 * n, 2 * n)).norm());
    const Mat Hd = d.Linv * oracle::hamiltonian_matrix(s.A, s.B, s.C) * d.L;
    off = std::max({off, Hd.topRightCorner(n, n).norm(), Hd.bottomLeftCorner(n, n).norm()});
  }
  const bool ok = care <= 1e-10 && sympl <= 1e-10 && inv <= 1e-10 && off <= 1e-8;
  return {ok, fmt("CARE %.1e", care) + fmt(", L^T J L - J %.1e", sympl) + fmt(", L Linv - I %.1e", inv) +
                  fmt(", off-diagonal %.1e", off)};
}

std::pair<bool, std::string> conservation() {
  std::mt19937 rng(17);
  double worst = 0.0;
  std::string detail;
  for (const auto& name : example_names()) {
    const HamiltonianSystem hs = build_hamiltonian(example_system(name));
    const int n = hs.n();
    double drift = 0.0, max_norm = 0.0, moderate_drift = 0.0;
    int escaped = 0;
    for (int k = 0; k < 20; ++k) {
      const Vec z = oracle::ball_point(rng, 2 * n);
      FlowOptions fo;
      fo.tol = 1e-9;
      fo.throw_on_failure = false;
      const Trajectory tr = flow(hs, z, 10.0, fo);
      if (tr.status != FlowStatus::Completed) {
        ++escaped;
        drift = INFINITY;
      }
      const double H0 = hs.hval(z);
      bool moderate = true;
      for (const Vec& s : tr.states) {
        const double d = std::abs(hs.hval(s) - H0);
        drift = std::max(drift, d);
        max_norm = std::max(max_norm, s.norm());
        moderate = moderate && s.norm() <= 10.0;
        if (moderate) moderate_drift = std::max(moderate_drift, d);
      }
    }
    worst = std::max(worst, drift);
    detail += " " + name + fmt(" %.1e", drift) + " (" + std::to_string(escaped) + "/20 blow up" +
              fmt(", max|z| %.1e", max_norm) + fmt(", %.1e while |z| <= 10)", moderate_drift) + ";";
  }
  return {worst <= 1e-6, "drift per example:" + detail};
}

std::pair<bool, std::string> energy_pinning() {
  const std::vector<std::pair<std::string, std::string>> cases{{"scalar", "scalar.json"},
                                                               {"pendulum", "pendulum.json"},
                                                               {"backstepping", "backstepping.json"},
                                                               {"generator", "generator.json"},
                                                               {"zero_dynamics", "zero_dynamics.json"}};
  double worst = 0.0;
  long points = 0;
  std::string detail;
  for (const auto& [name, file] : cases) {
    const ExperimentConfig cfg = load_config(config_path(file));
    const HamiltonianSystem hs = build_hamiltonian(build_system(cfg.system));
    double w = 0.0;
    for (ManifoldKind kind : {ManifoldKind::Stable, ManifoldKind::Unstable}) {
      const ManifoldChart chart = build_chart(hs, cfg, kind);
      for (const auto& pt : chart.global_points) {
        w = std::max(w, std::abs(hs.hval(pt.x, pt.p)));
        ++points;
      }
    }
    worst = std::max(worst, w);
    detail += " " + name + fmt(" %.1e;", w);
  }
  return {worst <= 1e-6, "max|H| over " + std::to_string(points) + " points:" + detail};
}

std::pair<bool, std::string> turnpike_uniformity() {
  const auto t0 = Clock::now();
  const HamiltonianSystem hs = build_hamiltonian(example_system("backstepping"));
  Vec x0(2), xf(2);
  x0 << 1, 1;
  xf << 0.5, 0;
  TurnpikeOptions opts;
  opts.epsilon = 0.1;
  const TurnpikeReport rep = turnpike_report(hs, x0, xf, {10, 20, 40}, opts);
  std::string res;
  for (const auto& e : rep.entries) res += fmt(" T=%g:", e.T) + fmt("%.4f", e.residence);
  const double t = seconds_since(t0);
  const bool ok = rep.all_converged && rep.uniformity <= 1.5 && t < 60.0;
  return {ok, std::string(rep.all_converged ? "all converged" : "not all converged") + "; residence" + res +
                  fmt("; ratio %.5f", rep.uniformity) + fmt("; %.2f s", t)};
}

std::pair<bool, std::string> stabilizer() {
  const auto t0 = Clock::now();
  const CascadeSystem c = backstepping_cascade();
  const ControlAffineSystem sys = to_system(c);
  const FeedbackLaw law = backstepping_feedback(c);
  std::mt19937 rng(50);
  double worst_final = 0.0, worst_rise = 0.0;
  for (int k = 0; k < 50; ++k) {
    const Vec x0 = oracle::ball_point(rng, 2, 2.0);
    const Trajectory tr = simulate_controlled(sys, x0, law, 50.0, 1e-10);
    double prev = backstepping_lyapunov(c, tr.states.front().head(2));
    for (const Vec& s : tr.states) {
      const double V = backstepping_lyapunov(c, s.head(2));
      worst_rise = std::max(worst_rise, V - prev);
      prev = V;
    }
    worst_final = std::max(worst_final, tr.states.back().head(2).norm());
  }
  const double t = seconds_since(t0);
  const bool ok = worst_final < 1e-4 && worst_rise <= 1e-9 && t < 20.0;
  return {ok, fmt("max |x(50)| = %.2e", worst_final) + fmt(", largest V increase %.1e", worst_rise) +
                  fmt("; %.2f s", t)};
}

std::pair<bool, std::string> dashboard() {
  const ExperimentConfig cfg = load_config(config_path("generator.json"));
  const Json dash = hypothesis_dashboard(build_system(cfg.system), cfg.growth);
  const double fexp = dash.at("growth").at("f_exponent").get<double>();
  const bool satisfied = dash.at("growth").at("satisfied").get<bool>();
  const bool passes = dash.at("passes").get<bool>();

  PluginSpec cubic;
  cubic.states = {"x"};
  cubic.f = {"x^3"};
  cubic.g = {{"1"}};
  cubic.h = "0.5 * x^2";
  const GrowthCertificate cert = growth_certificate(plugin_system(cubic), cfg.growth.radii, cfg.growth.samples);
  const bool ok = fexp >= 0.8 && fexp <= 1.2 && satisfied && passes && std::abs(cert.f_exponent - 3.0) <= 0.05;
  return {ok, fmt("generator f-exponent %.4f", fexp) + (satisfied ? ", growth satisfied" : ", growth not satisfied") +
                  (passes ? ", dashboard passes" : ", dashboard fails") + fmt("; x^3 exponent %.4f", cert.f_exponent)};
}

std::pair<bool, std::string> determinism() {
  std::vector<std::pair<std::string, std::function<CommandResult(const ExperimentConfig&)>>> runs{
      {"scalar.json", [](const ExperimentConfig& c) { return cmd_manifold(c); }},
      {"backstepping.json", [](const ExperimentConfig& c) { return cmd_turnpike(c); }},
      {"lqr.json", [](const ExperimentConfig& c) { return cmd_simulate(c); }}};
  int compared = 0;
  std::string differing;
  for (const auto& [file, cmd] : runs) {
    const ExperimentConfig cfg = load_config(config_path(file));
    const CommandResult a = cmd(cfg);
    const CommandResult b = cmd(cfg);
    for (const auto& [name, content] : a.files) {
      if (name.size() < 5 || name.substr(name.size() - 5) != ".json") continue;
      ++compared;
      const auto it = b.files.find(name);
      if (it == b.files.end() || it->second != content) differing += " " + name;
    }
  }
  return {differing.empty() && compared > 0,
          std::to_string(compared) + " JSON files compared" + (differing.empty() ? "" : "; differ:" + differing)};
}

}  // namespace

int main() {
  const RandomSuite suite = random_suite();
  run(1, "scalar coverage boundary", scalar_boundary);
  run(2, "LQR degeneration", [&] { return lqr_degeneration(suite); });
  run(3, "structure invariants", [&] { return structure(suite); });
  run(4, "Hamiltonian conservation", conservation);
  run(5, "energy pinning", energy_pinning);
  run(6, "turnpike uniformity", turnpike_uniformity);
  run(7, "backstepping stabilizer", stabilizer);
  run(8, "hypothesis dashboard", dashboard);
  run(9, "determinism", determinism);
  return failures == 0 ? 0 : 1;
}
