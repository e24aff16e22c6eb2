#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "collapse/model.hpp"
#include "collapse/rng.hpp"

namespace collapse::acceptance {

struct CheckResult {
    int id = 0;
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

/// A model plus a sampler of (x, lambda) points for derivative checks.
struct DerivativeTarget {
    std::string name;
    ModelPtr model;
    std::function<std::pair<Vector, Vector>(Rng&)> sample;
};

DerivativeTarget two_bus_target();
DerivativeTarget five_bus_target();
/// Two-bus model whose f_x has one wrong entry. Test fixture for the
/// derivative check.
DerivativeTarget buggy_two_bus_target();

struct CheckOptions {
    unsigned jobs = 1;
    /// Models for the derivative suite; empty means two-bus and five-bus.
    std::vector<DerivativeTarget> derivative_targets;
};

/// Check names in report order: instanton, table1_ldt, table1_reference,
/// table2, error_reduction, five_bus, geometry, derivatives, invariance,
/// determinism.
const std::vector<std::string>& check_names();

/// Runs the selected checks (all when `only` is empty). A selector matches a
/// check whose name equals it or starts with it, so "table1" selects both
/// two-bus Gaussian checks. Throws std::invalid_argument for selectors matching nothing.
std::vector<CheckResult> run_checks(const std::vector<std::string>& only, const CheckOptions& options = {});

void print_report(std::ostream& out, const std::vector<CheckResult>& results);

}  // namespace collapse::acceptance
