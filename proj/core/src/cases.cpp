#include "collapse/cases.hpp"

#include <complex>
#include <sstream>

#include "collapse/error.hpp"
#include "collapse/io.hpp"

namespace collapse {

namespace {

using C = std::complex<double>;

constexpr std::uint64_t kDefaultSeed = 20240611;

Matrix correlated(const Vector& variances, const Matrix& correlation) {
    const Vector sd = variances.cwiseSqrt();
    return sd.asDiagonal() * correlation * sd.asDiagonal();
}

// Load-slot ordering is (P2, Q2, P4, Q4, P5, Q5).
Matrix five_bus_correlation(double same_bus, double cross_p, double cross_q) {
    Matrix R = Matrix::Identity(6, 6);
    for (Index b = 0; b < 3; ++b) {
        R(2 * b, 2 * b + 1) = R(2 * b + 1, 2 * b) = same_bus;
        for (Index o = b + 1; o < 3; ++o) {
            R(2 * b, 2 * o) = R(2 * o, 2 * b) = cross_p;
            R(2 * b + 1, 2 * o + 1) = R(2 * o + 1, 2 * b + 1) = cross_q;
        }
    }
    return R;
}

}  // namespace

double two_bus_boundary_residual(const Vector& lambda) {
    if (lambda.size() != 2) throw Error(ErrorCode::DimensionMismatch, "two-bus boundary needs a length-2 lambda");
    return lambda(0) * lambda(0) + 4.0 * lambda(1) - 4.0;
}

NetworkDescription build_five_bus() {
    NetworkDescription net;
    net.buses = {
        {1, BusType::Slack, 1.0, 0.0, 0.0},
        {2, BusType::PQ, 1.0, 0.0, 0.0},
        {3, BusType::PV, 1.0, 0.0, 0.0},
        {4, BusType::PQ, 1.0, 0.0, 0.0},
        {5, BusType::PQ, 1.0, 0.0, 0.0},
    };
    // Series admittances y_ik; off-diagonals are -y_ik.
    const C y12(1.401, -5.602);
    const C y15(1.841, -7.484);
    const C y23(1.841, -7.484);
    const C y34(0.700, -2.801);
    const C y35(1.130, -4.477);
    const C y45(0.934, -3.435);
    ComplexMatrix Y = ComplexMatrix::Zero(5, 5);
    auto branch = [&Y](Index i, Index k, C y) { Y(i, k) = Y(k, i) = -y; };
    branch(0, 1, y12);
    branch(0, 4, y15);
    branch(1, 2, y23);
    branch(2, 3, y34);
    branch(2, 4, y35);
    branch(3, 4, y45);
    Y(0, 0) = C(3.241, -13.085);
    Y(1, 1) = C(3.242, -12.486);
    Y(2, 2) = C(3.671, -14.762);
    Y(3, 3) = C(1.634, -6.236);
    Y(4, 4) = C(3.905, -15.396);
    net.ybus = Y;
    net.lambda_map = {{2, InjectionKind::P}, {2, InjectionKind::Q}, {4, InjectionKind::P},
                      {4, InjectionKind::Q}, {5, InjectionKind::P}, {5, InjectionKind::Q}};
    return net;
}

Vector five_bus_mean() {
    Vector mu(6);
    mu << 1.15, 0.6, 0.7, 0.3, 0.7, 0.4;
    return mu;
}

Matrix five_bus_sigma0() {
    Vector var(6);
    var << 0.72, 0.576, 0.216, 0.72, 0.72, 0.72;
    return correlated(var, five_bus_correlation(0.1, 0.1, 0.05));
}

Matrix five_bus_mixture_sigma2() {
    Vector var(6);
    var << 0.8, 0.5, 0.3, 0.5, 0.8, 0.5;
    return correlated(var, five_bus_correlation(0.3, 0.15, 0.15));
}

void validate(const ExperimentSpec& spec) {
    auto fail = [&](const std::string& what) {
        throw Error(ErrorCode::InvalidExperiment, "experiment '" + spec.name + "': " + what);
    };
    if (spec.name.empty()) fail("name is empty");
    if (spec.model.empty()) fail("model reference is empty");
    if (spec.scales.empty()) fail("scale list is empty");
    for (std::size_t i = 0; i < spec.scales.size(); ++i) {
        if (!(spec.scales[i] > 0.0)) fail("scales must be positive");
        if (i > 0 && !(spec.scales[i] < spec.scales[i - 1])) fail("scales must be strictly decreasing");
    }
    if (spec.mc_samples < 1 || spec.is_samples < 1) fail("sample counts must be at least 1");
    if (!(spec.mc_is_threshold >= 0.0)) fail("mc_is_threshold must be non-negative");
}

std::vector<ExperimentSpec> builtin_experiments() {
    std::vector<ExperimentSpec> out;

    const std::vector<double> table1 = {6.310e-01, 4.190e-01, 2.783e-01, 1.848e-01, 1.227e-01,
                                        8.149e-02, 5.412e-02, 3.594e-02, 2.387e-02, 1.585e-02};
    Vector mu2(2);
    mu2 << 0.5, 0.3;
    Matrix sigma2 = Vector::Ones(2).asDiagonal();
    sigma2(0, 0) = 0.6;
    out.push_back({"gaussian_2bus", "two_bus", GaussianModel(mu2, sigma2), table1, 0.1227, 400000, 150000,
                   kDefaultSeed, ClassifierMode::Analytic, "out/gaussian_2bus"});

    Vector m1(2), m2(2);
    m1 << 0.45, 0.25;
    m2 << 0.82, 0.52;
    Matrix s1 = Matrix::Zero(2, 2);
    s1.diagonal() << 0.6, 1.0;
    Matrix s2(2, 2);
    s2 << 0.35, 0.08, 0.08, 0.55;
    out.push_back({"gmm_2bus", "two_bus",
                   GaussianMixtureModel({{0.75, GaussianModel(m1, s1)}, {0.25, GaussianModel(m2, s2)}}), table1,
                   0.1227, 1000000, 400000, kDefaultSeed, ClassifierMode::Analytic, "out/gmm_2bus"});

    const std::vector<double> table4 = {6.310e-01, 4.532e-01, 3.255e-01, 2.337e-01, 1.679e-01, 1.206e-01,
                                        8.660e-02, 6.219e-02, 4.467e-02, 3.600e-02, 2.100e-02};
    out.push_back({"gaussian_5bus", "five_bus", GaussianModel(five_bus_mean(), five_bus_sigma0()), table4, 0.1,
                   4000, 3000, kDefaultSeed, ClassifierMode::PowerFlow, "out/gaussian_5bus"});

    Vector mu5(6);
    mu5 << 1.33, 0.66, 0.86, 0.35, 0.85, 0.46;
    Matrix sigma1 = Matrix::Zero(6, 6);
    sigma1.diagonal() << 1.0, 0.8, 0.3, 1.0, 1.0, 1.0;
    const std::vector<double> table5 = {6.310e-01, 3.255e-01, 1.679e-01, 8.660e-02, 4.467e-02};
    out.push_back({"gmm_5bus", "five_bus",
                   GaussianMixtureModel({{0.8, GaussianModel(five_bus_mean(), sigma1)},
                                         {0.2, GaussianModel(mu5, five_bus_mixture_sigma2())}}),
                   table5, 0.2, 6000, 4000, kDefaultSeed, ClassifierMode::PowerFlow, "out/gmm_5bus"});
    return out;
}

ExperimentSpec builtin_experiment(const std::string& name) {
    for (auto& spec : builtin_experiments()) {
        if (spec.name == name) return spec;
    }
    throw Error(ErrorCode::InvalidExperiment, "unknown experiment '" + name + "'");
}

ModelPtr resolve_model(const std::string& reference) {
    if (reference == "two_bus") return build_two_bus();
    if (reference == "five_bus") return build_polar_ac(build_five_bus());
    return build_polar_ac(load_network(reference));
}

CollapseClassifier make_classifier(ClassifierMode mode, const ModelPtr& model, const Vector& mean) {
    if (mode == ClassifierMode::Analytic) {
        if (!model || model->state_dim() != 2 || model->param_dim() != 2) {
            throw Error(ErrorCode::InvalidExperiment, "analytic classifier requires the two-bus model");
        }
        return CollapseClassifier::analytic_two_bus();
    }
    const PowerFlowResult nominal = solve_power_flow(*model, mean, model->flat_start());
    if (!nominal.converged()) throw Error(ErrorCode::NominalInfeasible, "power flow does not solve at the mean");
    return CollapseClassifier::power_flow(model, nominal.x);
}

}  // namespace collapse
