#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hamflow/config.hpp"
#include "hamflow/io.hpp"
#include "hamflow/manifold.hpp"

namespace hamflow {

/// Command-line overrides applied on top of the config.
struct CommandOptions {
  bool force = false;
  std::optional<int> seed_count;
  /// Replaces the manifold and BVP tolerances.
  std::optional<double> tol;
};

enum ExitCode : int { ExitOk = 0, ExitConfig = 2, ExitNumerical = 3 };

/// Everything a command produced. Files are kept in memory (name -> content)
/// and written by write_outputs once the computation is over.
struct CommandResult {
  int exit_code = ExitOk;
  std::map<std::string, std::string> files;
  std::vector<std::string> messages;
  Json summary;
};

/// 2 for configuration and parse problems, 3 for everything else.
int exit_code_for(const Error& e);

/// Hypothesis dashboard: linearization, PBH verdicts, CARE, growth
/// certificate and Jacobian consistency.
Json hypothesis_dashboard(const ControlAffineSystem& sys, const GrowthConfig& growth);

/// Seeds, local chart and globalization as configured.
ManifoldChart build_chart(const HamiltonianSystem& hsys, const ExperimentConfig& config,
                          ManifoldKind kind);

CommandResult cmd_inspect(const ExperimentConfig& config, const CommandOptions& options = {});
CommandResult cmd_manifold(const ExperimentConfig& config, const CommandOptions& options = {});
CommandResult cmd_turnpike(const ExperimentConfig& config, const CommandOptions& options = {});
CommandResult cmd_simulate(const ExperimentConfig& config, const CommandOptions& options = {});

/// Creates `dir` and writes every file of the result into it.
void write_outputs(const CommandResult& result, const std::string& dir);

}  // namespace hamflow
