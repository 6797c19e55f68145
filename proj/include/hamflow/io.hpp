#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "hamflow/manifold.hpp"
#include "hamflow/ocp.hpp"
#include "hamflow/systems.hpp"

namespace hamflow {

using Json = nlohmann::json;

/// Canonical text: keys sorted, two-space indent, floating point numbers as
/// %.12e, integers verbatim, non-finite numbers as the strings "inf", "-inf"
/// and "nan".
std::string dump_json(const Json& j);

/// Reads "inf" / "-inf" / "nan" strings back as numbers.
double json_number(const Json& j);

Json to_json(const Vec& v);
Json to_json(const Mat& m);
Vec vec_from_json(const Json& j);
Mat mat_from_json(const Json& j);

Json to_json(const LinearData& lin);
Json to_json(const GrowthCertificate& cert);

/// {kind, tol, horizon, local_radius, check_time, check_tol, energy_tol,
///  failed_seeds, rejected_points, seeds:[{xi, eta, residuals}],
///  global_points:[{x, p, H, flow_check, seed, tau}]}
Json to_json(const ManifoldChart& chart);
ManifoldChart chart_from_json(const Json& j);

Json to_json(const CoverageEstimate& cov);
Json to_json(const TurnpikeReport& rep);

/// x-projection point cloud: x1..xn, p1..pn, H, seed, tau.
void write_points_csv(std::ostream& out, const ManifoldChart& chart);
/// T, converged, residence, cost, residual, iterations, first_exit, last_entry.
void write_turnpike_csv(std::ostream& out, const TurnpikeReport& rep);

/// %.12e
std::string format_number(double v);

}  // namespace hamflow
