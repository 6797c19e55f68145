#include "hamflow/io.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "hamflow/error.hpp"

namespace hamflow {

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12e", v);
  return buf;
}

namespace {

void dump(const Json& j, std::ostringstream& out, int indent) {
  const std::string pad(indent, ' ');
  const std::string inner(indent + 2, ' ');
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out << "{}";
        return;
      }
      out << "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out << ",\n";
        first = false;
        out << inner << Json(it.key()).dump() << ": ";
        dump(it.value(), out, indent + 2);
      }
      out << "\n" << pad << "}";
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out << "[]";
        return;
      }
      // Arrays of scalars stay on one line.
      bool flat = true;
      for (const auto& v : j) flat = flat && !v.is_structured();
      if (flat) {
        out << "[";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) out << ", ";
          dump(j[i], out, indent);
        }
        out << "]";
        return;
      }
      out << "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out << ",\n";
        out << inner;
        dump(j[i], out, indent + 2);
      }
      out << "\n" << pad << "]";
      return;
    }
    case Json::value_t::number_float: {
      const double v = j.get<double>();
      if (std::isnan(v)) {
        out << "\"nan\"";
      } else if (std::isinf(v)) {
        out << (v > 0 ? "\"inf\"" : "\"-inf\"");
      } else {
        out << format_number(v);
      }
      return;
    }
    default:
      out << j.dump();
  }
}

}  // namespace

std::string dump_json(const Json& j) {
  std::ostringstream out;
  dump(j, out, 0);
  out << "\n";
  return out.str();
}

double json_number(const Json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    if (s == "nan") return NAN;
  }
  if (j.is_null()) return NAN;
  throw Error(ErrorCode::ParseError, "expected a number, got " + j.dump());
}

Json to_json(const Vec& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json to_json(const Mat& m) {
  Json a = Json::array();
  for (int i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (int k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    a.push_back(row);
  }
  return a;
}

Vec vec_from_json(const Json& j) {
  if (j.is_number()) return Vec::Constant(1, j.get<double>());
  if (!j.is_array()) throw Error(ErrorCode::ParseError, "expected an array of numbers");
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = json_number(j[i]);
  return v;
}

Mat mat_from_json(const Json& j) {
  if (j.is_number()) return Mat::Constant(1, 1, j.get<double>());
  if (!j.is_array()) throw Error(ErrorCode::ParseError, "expected a matrix (array of rows)");
  if (j.empty()) return Mat(0, 0);
  if (!j.front().is_array()) {
    // A flat array is a single row.
    Mat m(1, j.size());
    for (std::size_t k = 0; k < j.size(); ++k) m(0, k) = json_number(j[k]);
    return m;
  }
  const std::size_t cols = j.front().size();
  Mat m(j.size(), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols) {
      throw Error(ErrorCode::ParseError, "matrix rows differ in length");
    }
    for (std::size_t k = 0; k < cols; ++k) m(i, k) = json_number(j[i][k]);
  }
  return m;
}

Json to_json(const LinearData& lin) {
  return {{"A", to_json(lin.A)}, {"B", to_json(lin.B)}, {"C", to_json(lin.C)}};
}

Json to_json(const GrowthCertificate& c) {
  Json j = {{"exponent_p", c.exponent_p},
            {"growth_theta", c.growth_theta},
            {"c_f", c.c_f},
            {"c_g", c.c_g},
            {"c_h", c.c_h},
            {"rho", c.rho},
            {"sample_radii", c.sample_radii},
            {"fit_residual", c.fit_residual},
            {"f_exponent", c.f_exponent},
            {"g_exponent", c.g_exponent},
            {"h_exponent", c.h_exponent},
            {"coercive", c.coercive},
            {"satisfied", c.satisfied}};
  if (c.decay_rate) j["decay_rate"] = *c.decay_rate;
  if (c.decay_gain) j["decay_gain"] = *c.decay_gain;
  return j;
}

Json to_json(const ManifoldChart& chart) {
  Json seeds = Json::array();
  for (const auto& s : chart.seeds) {
    seeds.push_back({{"xi", to_json(s.xi)}, {"eta", to_json(s.eta)}, {"residuals", s.residuals}});
  }
  Json pts = Json::array();
  for (const auto& p : chart.global_points) {
    pts.push_back({{"x", to_json(p.x)},
                   {"p", to_json(p.p)},
                   {"H", p.H},
                   {"flow_check", p.flow_check},
                   {"seed", p.seed},
                   {"tau", p.tau}});
  }
  return {{"kind", to_string(chart.kind)},
          {"tol", chart.tol},
          {"horizon", chart.horizon},
          {"local_radius", chart.local_radius},
          {"check_time", chart.check_time},
          {"check_tol", chart.check_tol},
          {"energy_tol", chart.energy_tol},
          {"failed_seeds", chart.failed_seeds},
          {"rejected_points", chart.rejected_points},
          {"seeds", seeds},
          {"global_points", pts}};
}

ManifoldChart chart_from_json(const Json& j) {
  ManifoldChart c;
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind != "stable" && kind != "unstable") {
      throw Error(ErrorCode::ParseError, "chart kind must be stable or unstable");
    }
    c.kind = kind == "stable" ? ManifoldKind::Stable : ManifoldKind::Unstable;
    c.tol = json_number(j.at("tol"));
    c.horizon = json_number(j.value("horizon", Json(0.0)));
    c.local_radius = json_number(j.value("local_radius", Json(0.0)));
    c.check_time = json_number(j.value("check_time", Json(0.0)));
    c.check_tol = json_number(j.value("check_tol", Json(0.0)));
    c.energy_tol = json_number(j.value("energy_tol", Json(0.0)));
    c.failed_seeds = j.value("failed_seeds", 0);
    c.rejected_points = j.value("rejected_points", 0);
    for (const auto& s : j.at("seeds")) {
      ChartSeed seed;
      seed.xi = vec_from_json(s.at("xi"));
      seed.eta = vec_from_json(s.at("eta"));
      for (const auto& r : s.value("residuals", Json::array())) seed.residuals.push_back(json_number(r));
      c.seeds.push_back(seed);
    }
    for (const auto& p : j.at("global_points")) {
      ChartPoint pt;
      pt.x = vec_from_json(p.at("x"));
      pt.p = vec_from_json(p.at("p"));
      pt.H = json_number(p.at("H"));
      pt.flow_check = json_number(p.at("flow_check"));
      pt.seed = p.value("seed", -1);
      pt.tau = json_number(p.value("tau", Json(0.0)));
      c.global_points.push_back(pt);
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("chart: ") + e.what());
  }
  return c;
}

Json to_json(const CoverageEstimate& cov) {
  Json entries = Json::array();
  for (const auto& e : cov.entries) {
    Json w = Json::array();
    for (const auto& wt : e.witnesses) {
      w.push_back({{"x", to_json(wt.x)}, {"p", to_json(wt.p)}, {"H", wt.H},
                   {"flow_check", wt.flow_check}});
    }
    entries.push_back({{"query", to_json(e.query)},
                       {"status", to_string(e.status)},
                       {"distance", e.distance},
                       {"witnesses", w}});
  }
  return {{"kind", to_string(cov.kind)},
          {"method", cov.method},
          {"snap_radius", cov.snap_radius},
          {"boundary_radius", cov.boundary_radius},
          {"newton_tol", cov.newton_tol},
          {"covered", cov.count(CoverageStatus::Covered)},
          {"uncovered", cov.count(CoverageStatus::Uncovered)},
          {"boundary", cov.count(CoverageStatus::Boundary)},
          {"entries", entries}};
}

namespace {

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(); }

}  // namespace

Json to_json(const TurnpikeReport& rep) {
  Json entries = Json::array();
  for (const auto& e : rep.entries) {
    Json j = {{"T", e.T},
              {"converged", e.converged},
              {"residence_measure", e.residence},
              {"first_exit", optional_number(e.first_exit)},
              {"last_entry", optional_number(e.last_entry)},
              {"cost", e.cost},
              {"residual", e.residual},
              {"iterations", e.iterations}};
    if (e.converged) {
      j["p0"] = to_json(e.solution.p0);
      j["segments"] = e.solution.segments;
      j["defect"] = e.solution.defect;
      j["continuation"] = e.solution.used_continuation;
      j["energy_drift"] = max_energy_drift(e.solution.traj);
    }
    if (!e.error.empty()) j["error"] = e.error;
    entries.push_back(j);
  }
  Json out = {{"epsilon", rep.epsilon},
              {"uniformity_bound", rep.uniformity_bound},
              {"uniformity", rep.uniformity},
              {"all_converged", rep.all_converged},
              {"uniform", rep.uniform},
              {"entries", entries}};
  out["x0_status"] = rep.x0_status ? Json(to_string(*rep.x0_status)) : Json();
  out["xf_status"] = rep.xf_status ? Json(to_string(*rep.xf_status)) : Json();
  out["sufficient_condition"] = rep.sufficient_condition ? Json(*rep.sufficient_condition) : Json();
  return out;
}

void write_points_csv(std::ostream& out, const ManifoldChart& chart) {
  const int n = chart.global_points.empty() ? 0 : static_cast<int>(chart.global_points.front().x.size());
  for (int i = 1; i <= n; ++i) out << (i > 1 ? "," : "") << "x" << i;
  for (int i = 1; i <= n; ++i) out << ",p" << i;
  out << ",H,seed,tau\n";
  for (const auto& pt : chart.global_points) {
    for (int i = 0; i < n; ++i) out << (i ? "," : "") << format_number(pt.x(i));
    for (int i = 0; i < n; ++i) out << "," << format_number(pt.p(i));
    out << "," << format_number(pt.H) << "," << pt.seed << "," << format_number(pt.tau) << "\n";
  }
}

void write_turnpike_csv(std::ostream& out, const TurnpikeReport& rep) {
  out << "T,converged,residence,cost,residual,iterations,first_exit,last_entry\n";
  for (const auto& e : rep.entries) {
    out << format_number(e.T) << "," << (e.converged ? 1 : 0) << "," << format_number(e.residence)
        << "," << format_number(e.cost) << "," << format_number(e.residual) << "," << e.iterations
        << "," << (e.first_exit ? format_number(*e.first_exit) : "") << ","
        << (e.last_entry ? format_number(*e.last_entry) : "") << "\n";
  }
}

}  // namespace hamflow
