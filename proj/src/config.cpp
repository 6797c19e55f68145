#include "hamflow/config.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "hamflow/error.hpp"
#include "hamflow/io.hpp"

namespace hamflow {

namespace {

namespace fs = std::filesystem;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw Error(ErrorCode::ConfigError, (path.empty() ? std::string("config") : path) + ": " + msg);
}

std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

Json parse_text(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    std::string msg = e.what();
    // Keep only the reason; the position is reported from the byte offset.
    const auto col = msg.find("column ");
    const auto pos = col == std::string::npos ? col : msg.find(": ", col);
    if (pos != std::string::npos) msg = msg.substr(pos + 2);
    throw Error(ErrorCode::ConfigError, what + " " + line_col(text, e.byte) + ": " + msg);
  }
}

/// Field access with the JSON path kept for messages.
class Node {
 public:
  Node(const Json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const Json& json() const { return j_; }
  const std::string& path() const { return path_; }

  bool has(const std::string& key) const { return j_.is_object() && j_.contains(key); }

  Node operator[](const std::string& key) const {
    if (!has(key)) fail(child(key), "missing required field");
    return Node(j_.at(key), child(key));
  }

  void allow(std::initializer_list<const char*> keys) const {
    if (!j_.is_object()) fail(path_, "expected an object");
    std::set<std::string> ok(keys.begin(), keys.end());
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!ok.count(it.key())) fail(child(it.key()), "unknown field");
    }
  }

  double number() const {
    if (!j_.is_number()) fail(path_, "expected a number, got " + j_.dump());
    const double v = j_.get<double>();
    if (!std::isfinite(v)) fail(path_, "must be finite");
    return v;
  }
  double positive() const {
    const double v = number();
    if (!(v > 0)) fail(path_, "must be > 0");
    return v;
  }
  int count(int min = 1) const {
    if (!j_.is_number_integer()) fail(path_, "expected an integer");
    const int v = j_.get<int>();
    if (v < min) fail(path_, "must be >= " + std::to_string(min));
    return v;
  }
  bool boolean() const {
    if (!j_.is_boolean()) fail(path_, "expected true or false");
    return j_.get<bool>();
  }
  std::string string() const {
    if (!j_.is_string()) fail(path_, "expected a string");
    return j_.get<std::string>();
  }
  std::vector<double> numbers() const {
    if (!j_.is_array()) fail(path_, "expected an array of numbers");
    std::vector<double> v;
    for (std::size_t i = 0; i < j_.size(); ++i) v.push_back(at(i).number());
    return v;
  }
  Vec vec() const {
    if (j_.is_number()) return Vec::Constant(1, number());
    const auto v = numbers();
    return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  Mat mat() const {
    if (j_.is_number()) return Mat::Constant(1, 1, number());
    if (!j_.is_array()) fail(path_, "expected a matrix (array of rows)");
    if (j_.empty()) return Mat(0, 0);
    if (!j_.front().is_array()) return vec().transpose();
    const std::size_t cols = j_.front().size();
    Mat m(j_.size(), cols);
    for (std::size_t i = 0; i < j_.size(); ++i) {
      const auto row = at(i).numbers();
      if (row.size() != cols) fail(at(i).path(), "row length differs from the first row");
      for (std::size_t k = 0; k < cols; ++k) m(i, k) = row[k];
    }
    return m;
  }
  std::vector<std::string> strings() const {
    if (!j_.is_array()) fail(path_, "expected an array of strings");
    std::vector<std::string> v;
    for (std::size_t i = 0; i < j_.size(); ++i) v.push_back(at(i).string());
    return v;
  }
  Node at(std::size_t i) const { return Node(j_.at(i), path_ + "[" + std::to_string(i) + "]"); }
  std::size_t size() const { return j_.size(); }

 private:
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json& j_;
  std::string path_;
};

PluginSpec plugin_from(const Node& node) {
  node.allow({"name", "states", "params", "f", "g", "h"});
  PluginSpec spec;
  if (node.has("name")) spec.name = node["name"].string();
  spec.states = node["states"].strings();
  if (spec.states.empty()) fail(node["states"].path(), "needs at least one state");
  if (node.has("params")) {
    const Node params = node["params"];
    if (!params.json().is_object()) fail(params.path(), "expected an object of numbers");
    for (auto it = params.json().begin(); it != params.json().end(); ++it) {
      spec.params[it.key()] = params[it.key()].number();
    }
  }
  spec.f = node["f"].strings();
  if (spec.f.size() != spec.states.size()) {
    fail(node["f"].path(), "needs one expression per state");
  }
  const Node g = node["g"];
  if (!g.json().is_array() || g.size() != spec.states.size()) {
    fail(g.path(), "needs one row per state");
  }
  for (std::size_t i = 0; i < g.size(); ++i) spec.g.push_back(g.at(i).strings());
  if (node.has("h")) spec.h = node["h"].string();
  return spec;
}

SystemConfig system_from(const Node& node, const std::string& base_dir) {
  node.allow({"name", "epsilon", "generator", "Q", "A", "B", "C", "plugin", "plugin_file"});
  SystemConfig sc;
  sc.name = node["name"].string();
  if (node.has("epsilon")) sc.example.epsilon = node["epsilon"].positive();
  if (node.has("generator")) {
    const Node g = node["generator"];
    g.allow({"a", "b", "c", "d", "delta"});
    auto& p = sc.example.generator;
    if (g.has("a")) p.a = g["a"].number();
    if (g.has("b")) p.b = g["b"].number();
    if (g.has("c")) p.c = g["c"].number();
    if (g.has("d")) p.d = g["d"].number();
    if (g.has("delta")) p.delta = g["delta"].number();
  }
  if (node.has("Q")) sc.example.penalty_Q = node["Q"].mat();

  if (sc.name == "linear") {
    sc.A = node["A"].mat();
    sc.B = node["B"].mat();
    sc.C = node.has("C") ? node["C"].mat() : Mat(0, sc.A.cols());
    if (sc.A.rows() != sc.A.cols() || sc.A.rows() == 0) fail(node["A"].path(), "must be square");
    if (sc.B.rows() != sc.A.rows()) fail(node["B"].path(), "row count must match A");
    if (sc.C.size() > 0 && sc.C.cols() != sc.A.cols()) {
      fail(node["C"].path(), "column count must match A");
    }
  } else if (sc.name == "plugin") {
    if (node.has("plugin") == node.has("plugin_file")) {
      fail(node.path(), "plugin systems need exactly one of plugin, plugin_file");
    }
    if (node.has("plugin")) {
      sc.plugin = plugin_from(node["plugin"]);
    } else {
      fs::path p = node["plugin_file"].string();
      if (p.is_relative()) p = fs::path(base_dir) / p;
      if (!fs::exists(p)) fail(node["plugin_file"].path(), "file not found: " + p.string());
      std::ifstream in(p);
      std::stringstream ss;
      ss << in.rdbuf();
      sc.plugin = parse_plugin(ss.str());
      sc.plugin_path = p.string();
    }
  } else {
    const auto& names = example_names();
    if (std::find(names.begin(), names.end(), sc.name) == names.end()) {
      std::string all = "linear, plugin";
      for (const auto& n : names) all += ", " + n;
      fail(node["name"].path(), "unknown system '" + sc.name + "' (expected one of " + all + ")");
    }
  }
  return sc;
}

ManifoldConfig manifold_from(const Node& node) {
  node.allow({"seeding", "r_min", "r_max", "radii", "seeds_per_radius", "reach", "extend_time",
              "box", "lo", "hi", "p_max", "sample_spacing", "check_time", "newton_tol",
              "queries", "grid", "unstable"});
  ManifoldConfig mc;
  if (node.has("seeding")) {
    mc.seeding = node["seeding"].string();
    if (mc.seeding != "flow" && mc.seeding != "sphere") {
      fail(node["seeding"].path(), "expected flow or sphere");
    }
  }
  if (node.has("r_min")) mc.r_min = node["r_min"].positive();
  if (node.has("r_max")) mc.r_max = node["r_max"].positive();
  if (mc.r_max < mc.r_min) fail(node.path() + ".r_max", "must be >= r_min");
  if (node.has("radii")) mc.radii = node["radii"].count();
  if (node.has("seeds_per_radius")) mc.seeds_per_radius = node["seeds_per_radius"].count();
  if (node.has("reach")) {
    const Node r = node["reach"];
    if (r.json().is_number()) {
      mc.reach = {r.positive()};
    } else {
      mc.reach = r.numbers();
      for (std::size_t i = 0; i < mc.reach.size(); ++i) r.at(i).positive();
    }
  }
  if (node.has("extend_time")) mc.extend_time = node["extend_time"].positive();
  if (node.has("box")) mc.box = node["box"].positive();
  if (node.has("lo")) mc.lo = node["lo"].vec();
  if (node.has("hi")) mc.hi = node["hi"].vec();
  if (mc.lo.has_value() != mc.hi.has_value()) fail(node.path(), "lo and hi go together");
  if (node.has("p_max")) mc.p_max = node["p_max"].positive();
  if (node.has("sample_spacing")) mc.sample_spacing = node["sample_spacing"].positive();
  if (node.has("check_time")) mc.check_time = node["check_time"].positive();
  if (node.has("newton_tol")) mc.newton_tol = node["newton_tol"].positive();
  if (node.has("queries")) {
    const Node q = node["queries"];
    if (!q.json().is_array()) fail(q.path(), "expected an array of points");
    for (std::size_t i = 0; i < q.size(); ++i) mc.queries.push_back(q.at(i).vec());
  }
  if (node.has("grid")) {
    // Tensor grid: {"lo": [...], "hi": [...], "count": k}.
    const Node g = node["grid"];
    g.allow({"lo", "hi", "count"});
    const Vec lo = g["lo"].vec(), hi = g["hi"].vec();
    const int k = g["count"].count(1);
    if (lo.size() != hi.size()) fail(g.path(), "lo and hi differ in length");
    const int n = static_cast<int>(lo.size());
    std::vector<int> idx(n, 0);
    long total = 1;
    for (int i = 0; i < n; ++i) total *= k;
    for (long c = 0; c < total; ++c) {
      Vec x(n);
      long r = c;
      for (int i = 0; i < n; ++i) {
        const int j = static_cast<int>(r % k);
        r /= k;
        x(i) = k == 1 ? lo(i) : lo(i) + (hi(i) - lo(i)) * j / (k - 1);
      }
      mc.queries.push_back(x);
    }
  }
  if (node.has("unstable")) mc.unstable = node["unstable"].boolean();
  return mc;
}

TurnpikeConfig turnpike_from(const Node& node) {
  node.allow({"x0", "xf", "horizons", "epsilon", "uniformity_bound", "warm_start",
              "check_manifolds"});
  TurnpikeConfig tc;
  tc.x0 = node["x0"].vec();
  tc.xf = node["xf"].vec();
  const Node h = node["horizons"];
  tc.horizons = h.numbers();
  for (std::size_t i = 0; i < tc.horizons.size(); ++i) {
    h.at(i).positive();
    if (i > 0 && tc.horizons[i] <= tc.horizons[i - 1]) fail(h.at(i).path(), "horizons must increase");
  }
  if (node.has("epsilon")) tc.epsilon = node["epsilon"].positive();
  if (node.has("uniformity_bound")) tc.uniformity_bound = node["uniformity_bound"].positive();
  if (node.has("warm_start")) tc.warm_start = node["warm_start"].boolean();
  if (node.has("check_manifolds")) tc.check_manifolds = node["check_manifolds"].boolean();
  return tc;
}

SimulateConfig simulate_from(const Node& node) {
  node.allow({"x0", "T", "feedback"});
  SimulateConfig sc;
  sc.x0 = node["x0"].vec();
  if (node.has("T")) sc.T = node["T"].positive();
  if (node.has("feedback")) {
    sc.feedback = node["feedback"].string();
    if (sc.feedback != "zero" && sc.feedback != "backstepping" && sc.feedback != "manifold" &&
        sc.feedback != "lqr") {
      fail(node["feedback"].path(), "expected zero, backstepping, manifold or lqr");
    }
  }
  return sc;
}

}  // namespace

PluginSpec parse_plugin(const std::string& text) {
  const Json j = parse_text(text, "plugin");
  return plugin_from(Node(j, "plugin"));
}

ExperimentConfig parse_config(const std::string& text, const std::string& base_dir) {
  const Json j = parse_text(text, "config");
  const Node root(j, "");
  root.allow({"system", "tolerances", "manifold", "turnpike", "simulate", "growth", "output"});

  ExperimentConfig cfg;
  cfg.system = system_from(root["system"], base_dir);
  if (root.has("tolerances")) {
    const Node t = root["tolerances"];
    t.allow({"integrator", "manifold", "bvp"});
    if (t.has("integrator")) cfg.tolerances.integrator = t["integrator"].positive();
    if (t.has("manifold")) cfg.tolerances.manifold = t["manifold"].positive();
    if (t.has("bvp")) cfg.tolerances.bvp = t["bvp"].positive();
  }
  if (root.has("manifold")) cfg.manifold = manifold_from(root["manifold"]);
  if (root.has("turnpike")) cfg.turnpike = turnpike_from(root["turnpike"]);
  if (root.has("simulate")) cfg.simulate = simulate_from(root["simulate"]);
  if (root.has("growth")) {
    const Node g = root["growth"];
    g.allow({"radii", "samples"});
    if (g.has("radii")) {
      cfg.growth.radii = g["radii"].numbers();
      if (cfg.growth.radii.size() < 2) fail(g["radii"].path(), "needs at least two radii");
      for (std::size_t i = 0; i < cfg.growth.radii.size(); ++i) g["radii"].at(i).positive();
    }
    if (g.has("samples")) cfg.growth.samples = g["samples"].count();
  }
  if (root.has("output")) {
    const Node o = root["output"];
    o.allow({"dir", "formats"});
    if (o.has("dir")) cfg.output.dir = o["dir"].string();
    if (o.has("formats")) {
      cfg.output.json = cfg.output.csv = false;
      const auto formats = o["formats"].strings();
      for (std::size_t i = 0; i < formats.size(); ++i) {
        if (formats[i] == "json") {
          cfg.output.json = true;
        } else if (formats[i] == "csv") {
          cfg.output.csv = true;
        } else {
          fail(o["formats"].at(i).path(), "expected json or csv");
        }
      }
    }
  }

  // Dimension checks need the system.
  const int n = build_system(cfg.system).n;
  auto check_dim = [n](const Vec& v, const std::string& path) {
    if (v.size() != n) fail(path, "expected " + std::to_string(n) + " components");
  };
  if (cfg.turnpike) {
    check_dim(cfg.turnpike->x0, "turnpike.x0");
    check_dim(cfg.turnpike->xf, "turnpike.xf");
  }
  if (cfg.simulate) check_dim(cfg.simulate->x0, "simulate.x0");
  for (std::size_t i = 0; i < cfg.manifold.queries.size(); ++i) {
    check_dim(cfg.manifold.queries[i], "manifold.queries[" + std::to_string(i) + "]");
  }
  if (cfg.manifold.lo) {
    check_dim(*cfg.manifold.lo, "manifold.lo");
    check_dim(*cfg.manifold.hi, "manifold.hi");
  }
  if (cfg.system.example.penalty_Q) {
    const Mat& Q = *cfg.system.example.penalty_Q;
    if (Q.rows() != n || Q.cols() != n) fail("system.Q", "must be " + std::to_string(n) + " x " + std::to_string(n));
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), fs::path(path).parent_path().string().empty()
                                    ? std::string(".")
                                    : fs::path(path).parent_path().string());
}

ControlAffineSystem build_system(const SystemConfig& config) {
  ControlAffineSystem sys;
  if (config.name == "linear") {
    sys = linear_system(config.A, config.B, config.C);
  } else if (config.name == "plugin") {
    sys = plugin_system(*config.plugin);
  } else {
    return example_system(config.name, config.example);
  }
  if (config.example.penalty_Q) sys = with_quadratic_penalty(sys, *config.example.penalty_Q);
  return sys;
}

}  // namespace hamflow
