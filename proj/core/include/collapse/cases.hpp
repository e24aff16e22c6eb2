#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "collapse/distributions.hpp"
#include "collapse/estimators.hpp"
#include "collapse/model.hpp"
#include "collapse/network.hpp"

namespace collapse {

/// l1^2 + 4 l2 - 4; positive means collapsed.
double two_bus_boundary_residual(const Vector& lambda);

/// Five-bus network: bus 1 slack, bus 3 PV (V = 1, P = 0), buses 2/4/5 PQ,
/// uncertain loads (P2, Q2, P4, Q4, P5, Q5).
NetworkDescription build_five_bus();

/// Nominal load mean (1.15, 0.6, 0.7, 0.3, 0.7, 0.4).
Vector five_bus_mean();
/// Repository-defined base covariance for the 5-bus Gaussian sweep.
Matrix five_bus_sigma0();
/// Repository-defined covariance of the second 5-bus mixture component.
Matrix five_bus_mixture_sigma2();

enum class ClassifierMode { Analytic, PowerFlow };

struct ExperimentSpec {
    std::string name;
    std::string model;                 // "two_bus", "five_bus", or a network JSON path
    Uncertainty uncertainty;           // base distribution; row c uses scaled(c)
    std::vector<double> scales;        // strictly decreasing, positive
    double mc_is_threshold = 0.0;      // direct MC when c >= threshold, IS otherwise
    std::size_t mc_samples = 1;
    std::size_t is_samples = 1;
    std::uint64_t seed = 0;
    ClassifierMode classifier = ClassifierMode::PowerFlow;
    std::string output = "out";
};

/// Throws Error{InvalidExperiment}.
void validate(const ExperimentSpec& spec);

/// gaussian_2bus, gmm_2bus, gaussian_5bus, gmm_5bus.
std::vector<ExperimentSpec> builtin_experiments();
/// Throws Error{InvalidExperiment} for unknown names.
ExperimentSpec builtin_experiment(const std::string& name);

/// "two_bus", "five_bus", or a path to a network JSON file.
ModelPtr resolve_model(const std::string& reference);

/// Analytic mode requires the 2-bus model. Power-flow mode warm-starts from
/// the solved state at the distribution mean (Error{NominalInfeasible} otherwise).
CollapseClassifier make_classifier(ClassifierMode mode, const ModelPtr& model, const Vector& mean);

}  // namespace collapse
