#include <doctest.h>

#include <sstream>

#include "collapse/cases.hpp"
#include "collapse/io.hpp"
#include "collapse/sweep.hpp"

using namespace collapse;

namespace {

SweepResult ldt_only(const std::string& name, bool warm = true) {
    SweepOptions o;
    o.compute_reference = false;
    o.warm_start = warm;
    return run_sweep(builtin_experiment(name), o);
}

}  // namespace

TEST_CASE("rows follow the spec in decreasing c") {
    const SweepResult r = ldt_only("gaussian_2bus");
    const ExperimentSpec spec = builtin_experiment("gaussian_2bus");
    REQUIRE(r.rows.size() == spec.scales.size());
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        CHECK(r.rows[i].scale == spec.scales[i]);
        CHECK(r.rows[i].ok);
        CHECK(r.rows[i].ldt1->value < r.rows[i].ldt2->value);
    }
    CHECK(r.failed_rows() == 0);
}

TEST_CASE("warm starts do not change the instanton") {
    for (const char* name : {"gaussian_2bus", "gmm_2bus", "gaussian_5bus"}) {
        const SweepResult warm = ldt_only(name, true);
        const SweepResult cold = ldt_only(name, false);
        for (std::size_t i = 0; i < warm.rows.size(); ++i)
            CHECK((warm.rows[i].lambda_star - cold.rows[i].lambda_star).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("reference schedule") {
    SweepOptions o;
    o.mc_is_threshold = 0.2;
    ExperimentSpec spec = builtin_experiment("gaussian_2bus");
    spec.mc_samples = 2000;
    spec.is_samples = 2000;
    const SweepResult r = run_sweep(spec, o);
    for (const auto& row : r.rows) {
        CHECK(row.reference_method == (row.scale >= 0.2 ? Method::MC : Method::IS));
        CHECK(row.reference->seed == row_seed(spec.seed, static_cast<std::size_t>(&row - r.rows.data())));
    }
    CHECK(row_seed(1, 0) != row_seed(1, 1));
    CHECK(row_seed(1, 0) != row_seed(2, 0));
}

TEST_CASE("CSV schemas") {
    ExperimentSpec spec = builtin_experiment("gmm_2bus");
    spec.scales = {0.631, 0.05};
    spec.mc_samples = 1000;
    spec.is_samples = 1000;
    const SweepResult r = run_sweep(spec);

    std::ostringstream est, table, plot;
    write_estimates_csv(est, r);
    write_table_csv(table, r);
    write_plot_data(plot, r);
    CHECK(est.str().rfind("method,c,value,std_error,samples,seed,diagnostics\n", 0) == 0);
    CHECK(table.str().rfind("c,ref_method,reference,reference_std_error,ldt1,ldt2,rate,lambda_star\n", 0) == 0);
    CHECK(plot.str().rfind("# c reference ldt1 ldt2\n", 0) == 0);
    CHECK(est.str().find("\nGMM-LDT2,0.63100000000000001,") != std::string::npos);
    CHECK(est.str().find("\nMC,0.63100000000000001,") != std::string::npos);
    CHECK(est.str().find("\nIS,0.050000000000000003,") != std::string::npos);

    // Each diagnostics blob is valid JSON
    std::istringstream lines(est.str());
    std::string line;
    std::getline(lines, line);
    int rows = 0;
    while (std::getline(lines, line)) {
        const auto start = line.find(",\"{");
        REQUIRE(start != std::string::npos);
        std::string blob = line.substr(start + 2, line.size() - start - 3);
        for (std::size_t p = blob.find("\"\""); p != std::string::npos; p = blob.find("\"\"", p + 1)) blob.erase(p, 1);
        CHECK_NOTHROW(parse_json_text(blob));
        ++rows;
    }
    CHECK(rows == 6);

    const Json j = to_json(r);
    CHECK(j["rows"].size() == 2);
    CHECK(j["rows"][0]["ldt2"]["method"] == "GMM-LDT2");
}

TEST_CASE("failing rows are recorded and the sweep continues") {
    // Mean beyond the collapse boundary: every instanton solve fails
    ExperimentSpec spec = builtin_experiment("gaussian_2bus");
    spec.scales = {0.631, 0.1};
    Vector bad(2);
    bad << 0.0, 2.0;
    spec.uncertainty = GaussianModel(bad, covariance(spec.uncertainty));
    SweepOptions o;
    o.compute_reference = false;
    const SweepResult r = run_sweep(spec, o);
    CHECK(r.failed_rows() == 2);
    CHECK_FALSE(r.rows[0].error.empty());

    std::ostringstream est;
    write_estimates_csv(est, r);
    CHECK(est.str().find("FAILED") != std::string::npos);
}

TEST_CASE("format_double round-trips") {
    for (double v : {0.1, 1.0 / 3.0, 2.536e-01, 4.034e-07, 1e300})
        CHECK(std::stod(format_double(v)) == v);
}
