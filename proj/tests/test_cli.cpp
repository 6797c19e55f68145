#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hamflow/error.hpp"
#include "hamflow/pipeline.hpp"

using namespace hamflow;
namespace fs = std::filesystem;

namespace {

std::string config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
    return e.what();
  }
  ADD_FAILURE() << "accepted: " << text;
  return "";
}

std::vector<std::vector<double>> read_csv(const std::string& text, std::string* header) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (header) *header = line;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(cell.empty() ? NAN : std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HAMFLOW_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("hamflow_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const char* kLinear = R"({
  "system": {"name": "linear", "A": [[0, 1], [2, -1]], "B": [[0], [1]], "C": [[1, 0], [0, 1]]},
  "manifold": {"seeds_per_radius": 16, "box": 1.2, "sample_spacing": 0.1,
               "queries": [[0.5, 0.5], [-0.3, 0.8]]},
  "simulate": {"x0": [1, 0], "T": 30, "feedback": "lqr"}
})";

}  // namespace

TEST(Config, SyntaxErrorReportsLineAndColumn) {
  const std::string msg = config_error("{\n  \"system\": {\"name\": \"scalar\",}\n}");
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("column"), std::string::npos) << msg;
}

TEST(Config, FieldLevelMessages) {
  EXPECT_NE(config_error(R"({})").find("system: missing"), std::string::npos);
  EXPECT_NE(config_error(R"({"system": {"name": "nope"}})").find("system.name"), std::string::npos);
  EXPECT_NE(config_error(R"({"system": {"name": "scalar"}, "tolerances": {"bvp": -1}})")
                .find("tolerances.bvp: must be > 0"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"system": {"name": "scalar"},
      "turnpike": {"x0": [1], "xf": [0], "horizons": [5, "ten"]}})")
                .find("turnpike.horizons[1]"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"system": {"name": "scalar"}, "manifold": {"bogus": 1}})")
                .find("manifold.bogus: unknown field"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"system": {"name": "backstepping"}, "simulate": {"x0": [1]}})")
                .find("simulate.x0"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"system": {"name": "plugin", "plugin_file": "missing.json"}})")
                .find("file not found"),
            std::string::npos);
}

TEST(Config, PluginInline) {
  const ExperimentConfig cfg = parse_config(R"({
    "system": {"name": "plugin", "plugin": {
      "states": ["x"], "params": {"a": 2}, "f": ["-a*x"], "g": [["1"]], "h": "x^2/2"}}})");
  const ControlAffineSystem sys = build_system(cfg.system);
  EXPECT_DOUBLE_EQ(sys.f(Vec::Constant(1, 1.5))(0), -3.0);
  EXPECT_DOUBLE_EQ(sys.D2h0(0, 0), 1.0);
}

TEST(Config, GridExpandsToTensorProduct) {
  const ExperimentConfig cfg = parse_config(R"({"system": {"name": "pendulum"},
      "manifold": {"grid": {"lo": [-1, 0], "hi": [1, 2], "count": 3}}})");
  ASSERT_EQ(cfg.manifold.queries.size(), 9u);
  EXPECT_DOUBLE_EQ(cfg.manifold.queries[4](0), 0.0);
  EXPECT_DOUBLE_EQ(cfg.manifold.queries[4](1), 1.0);
}

TEST(Json, CanonicalFormatting) {
  Json j = {{"b", 1.0}, {"a", 2}, {"c", {1.5, INFINITY, NAN}}};
  EXPECT_EQ(dump_json(j),
            "{\n  \"a\": 2,\n  \"b\": 1.000000000000e+00,\n  \"c\": [1.500000000000e+00, \"inf\", "
            "\"nan\"]\n}\n");
  EXPECT_TRUE(std::isinf(json_number(Json("inf"))));
}

TEST(Inspect, GeneratorDashboard) {
  const ExperimentConfig cfg = parse_config(R"({"system": {"name": "generator"}})");
  const CommandResult r = cmd_inspect(cfg);
  ASSERT_EQ(r.exit_code, 0);
  EXPECT_TRUE(r.summary["stabilizable"].get<bool>());
  EXPECT_TRUE(r.summary["detectable"].get<bool>());
  EXPECT_TRUE(r.summary["passes"].get<bool>());
  const double fexp = r.summary["growth"]["f_exponent"].get<double>();
  EXPECT_GE(fexp, 0.8);
  EXPECT_LE(fexp, 1.2);
  EXPECT_TRUE(r.files.count("inspect.json"));
}

TEST(Inspect, ScalarTakesStableFreeDynamicsPath) {
  const CommandResult r = cmd_inspect(parse_config(R"({"system": {"name": "scalar"}})"));
  ASSERT_EQ(r.exit_code, 0);
  EXPECT_FALSE(r.summary["detectable"].get<bool>());
  EXPECT_EQ(r.summary["path"].get<std::string>(), "stable_free_dynamics");
  EXPECT_EQ(r.summary["rank_C"].get<int>(), 0);
  EXPECT_TRUE(r.summary["passes"].get<bool>());
}

TEST(Inspect, FailingDashboardBlocksManifoldUnlessForced) {
  // x' = x + u with h = 0: neither detectable nor stable free dynamics.
  const ExperimentConfig cfg =
      parse_config(R"({"system": {"name": "linear", "A": [[1]], "B": [[1]]}})");
  EXPECT_FALSE(cmd_inspect(cfg).summary["passes"].get<bool>());
  const CommandResult r = cmd_manifold(cfg);
  EXPECT_EQ(r.exit_code, ExitNumerical);
  EXPECT_TRUE(r.files.empty());
  CommandOptions force;
  force.force = true;
  // The CARE has no stabilizing solution, so the forced run fails numerically.
  EXPECT_EQ(cmd_manifold(cfg, force).exit_code, ExitNumerical);
}

TEST(Manifold, ScalarCoverageBoundary) {
  const ExperimentConfig cfg = parse_config(R"({"system": {"name": "scalar"},
    "manifold": {"seeding": "sphere", "r_min": 0.02, "r_max": 0.2, "radii": 4, "seeds_per_radius": 1,
                 "extend_time": 12, "lo": [-3], "hi": [0.999],
                 "queries": [[-2], [-1], [0], [0.5], [0.9], [1.1]]}})");
  const CommandResult r = cmd_manifold(cfg);
  ASSERT_EQ(r.exit_code, 0) << (r.messages.empty() ? "" : r.messages.back());
  const Json cov = Json::parse(r.files.at("coverage_stable.json"));
  const auto& entries = cov["entries"];
  ASSERT_EQ(entries.size(), 6u);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(entries[i]["status"], "covered") << i;
  EXPECT_EQ(entries[5]["status"], "uncovered");
}

TEST(Manifold, LinearChartIsRiccatiSubspace) {
  const ExperimentConfig cfg = parse_config(kLinear);
  const CommandResult r = cmd_manifold(cfg);
  ASSERT_EQ(r.exit_code, 0);
  const ManifoldChart chart = chart_from_json(Json::parse(r.files.at("chart_stable.json")));
  Mat A(2, 2), B(2, 1);
  A << 0, 1, 2, -1;
  B << 0, 1;
  // Riccati solution by hand-checked residual rather than the library.
  const Mat P1 = build_hamiltonian(build_system(cfg.system)).sym().P1;
  const Mat res = P1 * A + A.transpose() * P1 - P1 * B * B.transpose() * P1 + Mat::Identity(2, 2);
  ASSERT_LT(res.norm(), 1e-10);
  for (const auto& pt : chart.global_points) EXPECT_LT((pt.p - P1 * pt.x).norm(), 1e-6);
  // Round trip of every emitted file.
  for (const auto& [name, content] : r.files) {
    if (name.size() > 5 && name.substr(name.size() - 5) == ".json") {
      EXPECT_EQ(dump_json(Json::parse(content)), content) << name;
    }
  }
  std::string header;
  const auto rows = read_csv(r.files.at("points_stable.csv"), &header);
  EXPECT_EQ(header, "x1,x2,p1,p2,H,seed,tau");
  EXPECT_EQ(rows.size(), chart.global_points.size());
}

TEST(Simulate, LqrCostMatchesValueFunction) {
  const ExperimentConfig cfg = parse_config(kLinear);
  const CommandResult r = cmd_simulate(cfg);
  ASSERT_EQ(r.exit_code, 0);
  const Mat P1 = build_hamiltonian(build_system(cfg.system)).sym().P1;
  const double expected = 0.5 * P1(0, 0);
  EXPECT_NEAR(r.summary["infinite_cost"]["value"].get<double>(), expected, 1e-6);
  EXPECT_NEAR(r.summary["cost"].get<double>(), expected, 1e-6);
}

TEST(Simulate, ScalarZeroFeedbackCsvIsLogistic) {
  const CommandResult r = cmd_simulate(parse_config(R"({"system": {"name": "scalar"},
      "simulate": {"x0": [0.5], "T": 10, "feedback": "zero"}})"));
  ASSERT_EQ(r.exit_code, 0);
  std::string header;
  const auto rows = read_csv(r.files.at("simulate.csv"), &header);
  EXPECT_EQ(header.substr(0, 7), "t,x1,u1");
  ASSERT_GT(rows.size(), 10u);
  double prev = 1.0;
  for (const auto& row : rows) {
    const double t = row[0];
    const double e = std::exp(-t);
    EXPECT_NEAR(row[1], 0.5 * e / (0.5 + 0.5 * e), 1e-9);
    EXPECT_LE(row[1], prev);
    prev = row[1];
  }
}

TEST(Simulate, ManifoldFeedbackAtOriginIsZero) {
  const CommandResult r = cmd_simulate(parse_config(R"({"system": {"name": "pendulum"},
      "manifold": {"seeds_per_radius": 8, "box": 0.5},
      "simulate": {"x0": [0, 0], "T": 5, "feedback": "manifold"}})"));
  ASSERT_EQ(r.exit_code, 0) << (r.messages.empty() ? "" : r.messages.back());
  std::string header;
  const auto rows = read_csv(r.files.at("simulate.csv"), &header);
  EXPECT_EQ(header.substr(0, 11), "t,x1,x2,u1,");
  for (const auto& row : rows) EXPECT_EQ(row[3], 0.0);
}

TEST(Turnpike, EmptyHorizonsIsUsageError) {
  const CommandResult r = cmd_turnpike(parse_config(R"({"system": {"name": "scalar"},
      "turnpike": {"x0": [1], "xf": [0], "horizons": []}})"));
  EXPECT_EQ(r.exit_code, ExitConfig);
}

TEST(Turnpike, UncoveredEndpointWarnsButSucceeds) {
  const CommandResult r = cmd_turnpike(parse_config(R"({"system": {"name": "scalar"},
      "manifold": {"seeding": "sphere", "radii": 2, "seeds_per_radius": 1, "extend_time": 12,
                   "lo": [-3], "hi": [3]},
      "turnpike": {"x0": [1.2], "xf": [0], "horizons": [5], "check_manifolds": true}})"));
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_FALSE(r.summary["sufficient_condition"].get<bool>());
  bool warned = false;
  for (const auto& m : r.messages) warned = warned || m.rfind("warning", 0) == 0;
  EXPECT_TRUE(warned);
  EXPECT_TRUE(r.files.count("trajectory_T5.csv"));
}

TEST(Binary, ExitCodes) {
  const fs::path dir = scratch("exit");
  const std::string out = " --out " + (dir / "out").string();
  std::ofstream(dir / "bad.json") << "{\"system\": {\"name\": \"scalar\",}}";
  std::ofstream(dir / "empty.json")
      << R"({"system": {"name": "scalar"}, "turnpike": {"x0": [1], "xf": [0], "horizons": []}})";
  std::ofstream(dir / "unstable.json") << R"({"system": {"name": "linear", "A": [[1]], "B": [[1]]}})";
  EXPECT_EQ(run_cli("inspect --config " + (dir / "bad.json").string() + out), 2);
  EXPECT_EQ(run_cli("inspect --config " + (dir / "nope.json").string() + out), 2);
  EXPECT_EQ(run_cli("inspect" + out), 2);
  EXPECT_EQ(run_cli("turnpike --config " + (dir / "empty.json").string() + out), 2);
  EXPECT_EQ(run_cli("manifold --config " + (dir / "unstable.json").string() + out), 3);
  EXPECT_EQ(run_cli("inspect --config " + std::string(HAMFLOW_CONFIGS) + "/scalar.json" + out), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "inspect.json"));
  EXPECT_EQ(run_cli("simulate --quiet --config " + std::string(HAMFLOW_CONFIGS) + "/lqr.json" + out), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "simulate.csv"));
}
