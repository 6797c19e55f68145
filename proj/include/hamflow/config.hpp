#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hamflow/expr.hpp"
#include "hamflow/systems.hpp"

namespace hamflow {

struct SystemConfig {
  /// Built-in example name, "linear" or "plugin".
  std::string name;
  ExampleOptions example;
  /// linear: x' = A x + B u, h = |Cx|^2 / 2.
  Mat A, B, C;
  std::optional<PluginSpec> plugin;
  /// Resolved path of the plugin file, empty for inline definitions.
  std::string plugin_path;
};

struct ToleranceConfig {
  double integrator = 1e-11;
  double manifold = 1e-10;
  double bvp = 1e-8;
};

struct ManifoldConfig {
  /// "flow" (flow_adapted_seeds) or "sphere" (sphere_seeds on geometric radii).
  std::string seeding = "flow";
  double r_min = 0.02;
  double r_max = 0.1;
  int radii = 3;
  int seeds_per_radius = 32;
  /// Target spheres of the flow-adapted seeding; defaults to the box half width.
  std::vector<double> reach;
  double extend_time = 10.0;
  /// Box [-box, box]^n unless lo / hi are given.
  double box = 2.0;
  std::optional<Vec> lo, hi;
  double p_max = 1e4;
  double sample_spacing = 0.02;
  double check_time = 40.0;
  double newton_tol = 1e-8;
  std::vector<Vec> queries;
  bool unstable = false;
};

struct TurnpikeConfig {
  Vec x0, xf;
  std::vector<double> horizons;
  double epsilon = 0.1;
  double uniformity_bound = 1.5;
  bool warm_start = true;
  /// Build both manifolds and test x0, xf against their projections.
  bool check_manifolds = false;
};

struct SimulateConfig {
  Vec x0;
  double T = 10.0;
  /// zero | backstepping | manifold | lqr
  std::string feedback = "zero";
};

struct GrowthConfig {
  std::vector<double> radii{1.0, 2.0, 4.0, 8.0, 16.0};
  int samples = 64;
};

struct OutputConfig {
  std::string dir = "out";
  bool json = true;
  bool csv = true;
};

struct ExperimentConfig {
  SystemConfig system;
  ToleranceConfig tolerances;
  ManifoldConfig manifold;
  std::optional<TurnpikeConfig> turnpike;
  std::optional<SimulateConfig> simulate;
  GrowthConfig growth;
  OutputConfig output;
};

/// Parses a JSON config. Syntax errors report line and column, semantic
/// errors the offending field path (e.g. "turnpike.horizons[1]"). Both raise
/// ConfigError. `base_dir` resolves relative plugin paths.
ExperimentConfig parse_config(const std::string& text, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);

PluginSpec parse_plugin(const std::string& text);

/// The system selected by the config, with the penalty override applied.
ControlAffineSystem build_system(const SystemConfig& config);

}  // namespace hamflow
