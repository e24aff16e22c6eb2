#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "collapse/cases.hpp"
#include "collapse/error.hpp"
#include "collapse/io.hpp"

using namespace collapse;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& text) {
    const fs::path dir = fs::temp_directory_path() / "collapse_io_test";
    fs::create_directories(dir);
    const fs::path p = dir / name;
    std::ofstream(p) << text;
    return p;
}

std::string parse_error_message(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ParseError);
        return e.what();
    }
    FAIL("expected ParseError");
    return {};
}

}  // namespace

TEST_CASE("network round trip") {
    const NetworkDescription net = build_five_bus();
    const fs::path p = fs::temp_directory_path() / "collapse_five_bus.json";
    save_network(p, net);
    CHECK(structurally_equal(load_network(p), net));
    CHECK(structurally_equal(network_from_json(network_to_json(net)), net));
}

TEST_CASE("network parse errors name the field") {
    Json j = network_to_json(build_five_bus());

    Json no_slack = j;
    no_slack["buses"][0]["type"] = "PQ";
    CHECK(parse_error_message([&] { network_from_json(no_slack); }).find("slack") != std::string::npos);

    Json bad_complex = j;
    bad_complex["ybus"][1][2] = Json::array({1.0});
    CHECK(parse_error_message([&] { network_from_json(bad_complex); }).find("ybus[1][2]") != std::string::npos);

    Json bad_type = j;
    bad_type["buses"][0]["type"] = "generator";
    CHECK(parse_error_message([&] { network_from_json(bad_type); }).find("buses[0].type") != std::string::npos);

    Json missing = j;
    missing.erase("lambda_map");
    CHECK(parse_error_message([&] { network_from_json(missing); }).find("lambda_map") != std::string::npos);
}

TEST_CASE("syntax errors report line and column") {
    const fs::path p = temp_file("broken.json", "{\n  \"buses\": [1,\n}");
    const std::string msg = parse_error_message([&] { load_network(p); });
    CHECK(msg.find("broken.json:3:") != std::string::npos);
    CHECK(parse_error_message([] { parse_json_text("[1, 2", "inline"); }).find("inline:1:") != std::string::npos);
}

TEST_CASE("uncertainty round trip") {
    for (const char* name : {"gaussian_2bus", "gmm_2bus", "gmm_5bus"}) {
        const Uncertainty u = builtin_experiment(name).uncertainty;
        const Uncertainty back = uncertainty_from_json(uncertainty_to_json(u));
        CHECK(back.index() == u.index());
        CHECK((mean(back) - mean(u)).norm() == 0.0);
        CHECK((covariance(back) - covariance(u)).norm() == 0.0);
    }
    const Json bad = parse_json_text(R"({"type": "gaussian", "mean": [0, 0], "covariance": [[1, 0], [0, -1]]})");
    CHECK_THROWS_AS(uncertainty_from_json(bad), Error);
    const Json weights = parse_json_text(R"({"type": "mixture", "components": [
        {"weight": 0.5, "mean": [0], "covariance": [[1]]},
        {"weight": 0.2, "mean": [1], "covariance": [[1]]}]})");
    CHECK_THROWS_AS(uncertainty_from_json(weights), Error);
}

TEST_CASE("experiment files") {
    const ExperimentSpec spec = builtin_experiment("gaussian_2bus");
    const fs::path p = temp_file("exp.json", experiment_to_json(spec).dump(2));
    const ExperimentSpec back = load_experiment(p);
    CHECK(back.name == spec.name);
    CHECK(back.scales == spec.scales);
    CHECK(back.seed == spec.seed);
    CHECK(back.mc_samples == spec.mc_samples);
    CHECK(back.classifier == spec.classifier);

    Json j = experiment_to_json(spec);
    j["scales"] = Json::array({0.1, 0.2});
    CHECK_THROWS_AS(experiment_from_json(j), Error);
    j = experiment_to_json(spec);
    j["classifier"] = "psychic";
    CHECK(parse_error_message([&] { experiment_from_json(j); }).find("classifier") != std::string::npos);
}

TEST_CASE("built-in experiments") {
    const ExperimentSpec t1 = builtin_experiment("gaussian_2bus");
    const std::vector<double> table1 = {6.310e-01, 4.190e-01, 2.783e-01, 1.848e-01, 1.227e-01,
                                        8.149e-02, 5.412e-02, 3.594e-02, 2.387e-02, 1.585e-02};
    CHECK(t1.scales == table1);
    const auto gmm = std::get<GaussianMixtureModel>(builtin_experiment("gmm_2bus").uncertainty);
    CHECK(gmm.component(1).gaussian.mean()(0) == 0.82);
    CHECK(gmm.component(1).gaussian.mean()(1) == 0.52);

    const ExperimentSpec five = builtin_experiment("gaussian_5bus");
    int mc_rows = 0;
    for (double c : five.scales) mc_rows += c >= five.mc_is_threshold ? 1 : 0;
    CHECK(mc_rows == 6);  // MC through c = 1.206e-1
    CHECK_THROWS_AS(builtin_experiment("nope"), Error);
    CHECK(builtin_experiments().size() == 4);
}

TEST_CASE("two-bus boundary residual") {
    Vector a(2), b(2), c(2);
    a << 0, 1;
    b << 2, 0;
    c << 0.703, 0.877;
    CHECK(two_bus_boundary_residual(a) == 0.0);
    CHECK(two_bus_boundary_residual(b) == 0.0);
    CHECK(std::abs(two_bus_boundary_residual(c)) <= 5e-3);
}
