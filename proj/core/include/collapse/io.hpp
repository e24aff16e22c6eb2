#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "collapse/cases.hpp"
#include "collapse/estimators.hpp"
#include "collapse/geometry.hpp"
#include "collapse/instanton.hpp"
#include "collapse/network.hpp"

namespace collapse {

using Json = nlohmann::json;

// All parsers throw Error{ParseError} whose message names the offending
// field path (e.g. "ybus[1][2]") or the line/column of a syntax error.

Json network_to_json(const NetworkDescription& net);
NetworkDescription network_from_json(const Json& j);
NetworkDescription load_network(const std::filesystem::path& path);
void save_network(const std::filesystem::path& path, const NetworkDescription& net);

Json uncertainty_to_json(const Uncertainty& u);
Uncertainty uncertainty_from_json(const Json& j);

Json experiment_to_json(const ExperimentSpec& spec);
ExperimentSpec experiment_from_json(const Json& j);
ExperimentSpec load_experiment(const std::filesystem::path& path);

/// Parses text, converting syntax errors into Error{ParseError} with line/column.
Json parse_json_text(const std::string& text, const std::string& source = "<input>");
Json read_json_file(const std::filesystem::path& path);

Json to_json(const InstantonSolution& s);
Json to_json(const BoundaryGeometry& g);
Json to_json(const CurvatureInputs& c);
Json to_json(const ProbabilityEstimate& e);
Json to_json(const EstimateDiagnostics& d);
Json to_json(const TangencyPoint& t);

Json vector_to_json(const Vector& v);
Json matrix_to_json(const Matrix& m);

}  // namespace collapse
