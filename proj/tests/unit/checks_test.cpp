#include <doctest.h>

#include <sstream>
#include <stdexcept>

#include "collapse/checks.hpp"

using namespace collapse::acceptance;

TEST_CASE("check registry") {
    const auto& names = check_names();
    REQUIRE(names.size() == 10);
    CHECK(names.front() == "instanton");
    CHECK(names.back() == "determinism");
    CHECK_THROWS_AS(run_checks({"no_such_check"}), std::invalid_argument);
}

TEST_CASE("prefix selection") {
    const auto results = run_checks({"table1"});
    REQUIRE(results.size() == 2);
    CHECK(results[0].name == "table1_ldt");
    CHECK(results[1].name == "table1_reference");
}

TEST_CASE("derivative check passes on the built-in models") {
    const auto results = run_checks({"derivatives"});
    REQUIRE(results.size() == 1);
    CHECK(results[0].passed);
}

TEST_CASE("injected Jacobian bug is caught and named") {
    CheckOptions opt;
    opt.derivative_targets = {buggy_two_bus_target()};
    const auto results = run_checks({"derivatives"}, opt);
    REQUIRE(results.size() == 1);
    CHECK_FALSE(results[0].passed);
    CHECK(results[0].detail.find("FAILED buggy_two_bus f_x") != std::string::npos);
    // f_lambda is untouched by the bug
    CHECK(results[0].detail.find("buggy_two_bus f_lambda rel err") == std::string::npos);

    std::ostringstream out;
    print_report(out, results);
    CHECK(out.str().rfind("[FAIL]  8 derivatives", 0) == 0);
    CHECK(out.str().find("0/1 checks passed") != std::string::npos);
}
