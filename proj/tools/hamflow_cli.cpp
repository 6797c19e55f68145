#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hamflow/error.hpp"
#include "hamflow/pipeline.hpp"

using namespace hamflow;

int main(int argc, char** argv) {
  CLI::App app{"Stable manifolds and turnpike experiments for control-affine systems"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  bool force = false;
  bool quiet = false;
  std::optional<int> seed_count;
  std::optional<double> tol;

  const char* names[] = {"inspect", "manifold", "turnpike", "simulate"};
  const char* help[] = {"hypothesis dashboard", "stable (and unstable) manifold charts with coverage",
                        "finite-horizon BVPs and residence measures",
                        "closed- or open-loop simulation with cost"};
  for (int i = 0; i < 4; ++i) {
    CLI::App* sub = app.add_subcommand(names[i], help[i]);
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
    sub->add_flag("--force", force, "run even when the hypothesis dashboard fails");
    sub->add_option("--seed-count", seed_count, "manifold seeds per radius");
    sub->add_option("--tol", tol, "manifold and BVP tolerance");
    sub->add_flag("--quiet", quiet, "suppress progress messages");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ExitConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }

  CommandOptions options;
  options.force = force;
  options.seed_count = seed_count;
  options.tol = tol;

  CommandResult result;
  if (command == "inspect") {
    result = cmd_inspect(cfg, options);
  } else if (command == "manifold") {
    result = cmd_manifold(cfg, options);
  } else if (command == "turnpike") {
    result = cmd_turnpike(cfg, options);
  } else {
    result = cmd_simulate(cfg, options);
  }

  try {
    write_outputs(result, out_dir.empty() ? cfg.output.dir : out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ExitNumerical;
  }
  for (const auto& msg : result.messages) {
    const bool problem = msg.rfind("error", 0) == 0 || msg.rfind("warning", 0) == 0;
    if (problem) {
      std::cerr << msg << "\n";
    } else if (!quiet) {
      std::cout << msg << "\n";
    }
  }
  return result.exit_code;
}
