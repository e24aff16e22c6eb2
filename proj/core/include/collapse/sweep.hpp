#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "collapse/cases.hpp"
#include "collapse/estimators.hpp"
#include "collapse/geometry.hpp"
#include "collapse/instanton.hpp"

namespace collapse {

/// Instanton, boundary geometry and both LDT orders at one distribution.
struct PointAnalysis {
    InstantonSolution instanton;
    BoundaryGeometry geometry;
    ProbabilityEstimate first_order;
    std::optional<ProbabilityEstimate> second_order;  // empty only if geometry failed
    std::optional<CurvatureInputs> curvature;         // Gaussian case
    std::vector<TangencyPoint> tangency;              // mixture case
    std::vector<std::string> warnings;
    double instanton_seconds = 0.0;
    double geometry_seconds = 0.0;
    double ldt_seconds = 0.0;
};

/// `warm` skips the nominal bracketing and starts Newton from the given point.
PointAnalysis analyze_point(const PowerFlowModel& model, const Uncertainty& dist,
                            const KktPoint* warm = nullptr, const InitOptions& init_options = {},
                            const KktOptions& kkt_options = {});

struct StageTimings {
    double instanton = 0.0;
    double geometry = 0.0;
    double ldt = 0.0;
    double reference = 0.0;
};

struct SweepRow {
    double scale = 0.0;
    bool ok = false;
    std::string error;
    Method reference_method = Method::MC;
    std::optional<ProbabilityEstimate> reference;
    std::optional<ProbabilityEstimate> ldt1;
    std::optional<ProbabilityEstimate> ldt2;
    Vector lambda_star;
    double rate = 0.0;
    int kkt_iterations = 0;
    std::uint64_t seed = 0;
    StageTimings timings;
};

struct SweepResult {
    std::string experiment;
    std::uint64_t seed = 0;
    std::vector<SweepRow> rows;

    [[nodiscard]] std::size_t failed_rows() const;
};

struct SweepOptions {
    std::optional<std::uint64_t> seed;
    unsigned jobs = 1;
    std::optional<double> mc_is_threshold;
    bool warm_start = true;
    bool compute_reference = true;
};

/// Rows run in order of decreasing c; a failing row records its error and
/// the sweep continues.
SweepResult run_sweep(const ExperimentSpec& spec, const SweepOptions& options = {});

/// Per-row reference seed derived from the sweep seed.
std::uint64_t row_seed(std::uint64_t seed, std::size_t row);

/// Long format: method,c,value,std_error,samples,seed,diagnostics
void write_estimates_csv(std::ostream& out, const SweepResult& result);
/// Table format: c,ref_method,reference,reference_std_error,ldt1,ldt2,rate,lambda_star
void write_table_csv(std::ostream& out, const SweepResult& result);
/// Whitespace-separated "c reference ldt1 ldt2" for log-log plots.
void write_plot_data(std::ostream& out, const SweepResult& result);

nlohmann::json to_json(const SweepRow& row);
nlohmann::json to_json(const SweepResult& result);

/// Shortest round-trip text for a double ("%.17g").
std::string format_double(double value);

}  // namespace collapse
