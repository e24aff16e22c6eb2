#include <doctest.h>

#include <cmath>

#include "collapse/cases.hpp"
#include "collapse/error.hpp"
#include "collapse/geometry.hpp"
#include "collapse/instanton.hpp"

using namespace collapse;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Index>(v.size()));
    Index i = 0;
    for (double d : v) out(i++) = d;
    return out;
}

void check_kkt(const PowerFlowModel& m, const InstantonSolution& s) {
    CHECK(eval_f(m, s.x, s.lambda).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((eval_fx(m, s.x, s.lambda).transpose() * s.w).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((eval_flambda(m, s.x, s.lambda).transpose() * s.w).norm() == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(s.k > 0.0);
}

// Minimizes the Gaussian rate along the analytic two-bus boundary lambda2 = 1 - lambda1^2 / 4.
double boundary_minimizer(const GaussianModel& g) {
    auto rate = [&](double l1) { return rate_gaussian(g, vec({l1, 1.0 - l1 * l1 / 4.0})); };
    double best = -2.0;
    for (double l1 = -2.0; l1 <= 2.0; l1 += 1e-4)
        if (rate(l1) < rate(best)) best = l1;
    double lo = best - 1e-4, hi = best + 1e-4;
    for (int i = 0; i < 200; ++i) {
        const double a = lo + (hi - lo) / 3, b = hi - (hi - lo) / 3;
        (rate(a) < rate(b) ? hi : lo) = rate(a) < rate(b) ? b : a;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("isotropic two-bus instanton is the closest bifurcation point") {
    const ModelPtr m = build_two_bus();
    const GaussianModel g(vec({0.5, 0.3}), Matrix::Identity(2, 2));
    const InstantonSolution s = find_instanton(*m, g);
    CHECK(s.lambda(0) == doctest::Approx(0.703).epsilon(1.5e-3));
    CHECK(s.lambda(1) == doctest::Approx(0.877).epsilon(1.5e-3));
    CHECK(std::abs(s.lambda(0) - 0.703) <= 1e-3);
    CHECK(std::abs(s.lambda(1) - 0.877) <= 1e-3);
    CHECK(std::abs(two_bus_boundary_residual(s.lambda)) <= 1e-8);
    CHECK(s.lambda(0) == doctest::Approx(boundary_minimizer(g)).epsilon(1e-7));
    check_kkt(*m, s);
}

TEST_CASE("anisotropic two-bus instanton against a boundary search") {
    const ModelPtr m = build_two_bus();
    const GaussianModel g(vec({0.5, 0.3}), Matrix(vec({0.6, 1.0}).asDiagonal()));
    const InstantonSolution s = find_instanton(*m, g);
    CHECK(std::abs(two_bus_boundary_residual(s.lambda)) <= 1e-8);
    CHECK(std::abs(s.lambda(0) - boundary_minimizer(g)) <= 1e-7);
    check_kkt(*m, s);
    const Vector N = eval_flambda(*m, s.x, s.lambda).transpose() * s.w;
    CHECK((s.k * g.inverse_covariance() * (s.lambda - g.mean()) - N).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(N.dot(s.lambda - g.mean()) > 0.0);
}

TEST_CASE("instanton is invariant under covariance scaling") {
    const ModelPtr m = build_two_bus();
    const GaussianModel g(vec({0.5, 0.3}), Matrix(vec({0.6, 1.0}).asDiagonal()));
    const InstantonSolution base = find_instanton(*m, g);
    for (double c : {0.631, 0.1, 1.585e-2}) {
        const InstantonSolution s = find_instanton(*m, g.scaled(c));
        CHECK((s.lambda - base.lambda).cwiseAbs().maxCoeff() <= 1e-8);
        CHECK(s.rate == doctest::Approx(base.rate / c).epsilon(1e-10));
    }
}

TEST_CASE("warm start reaches the same instanton") {
    const ModelPtr m = build_two_bus();
    const GaussianModel g(vec({0.5, 0.3}), Matrix(vec({0.6, 1.0}).asDiagonal()));
    const InstantonSolution s = find_instanton(*m, g);
    const InstantonSolution w = solve_instanton(*m, g.scaled(0.1), warm_start(s, g.scaled(0.1)));
    CHECK((w.lambda - s.lambda).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(w.iterations <= 2);
}

TEST_CASE("five-bus instanton") {
    const ExperimentSpec spec = builtin_experiment("gaussian_5bus");
    const ModelPtr m = resolve_model(spec.model);
    const auto& g = std::get<GaussianModel>(spec.uncertainty);
    const InstantonSolution s = find_instanton(*m, g);
    CHECK(kkt_residual_gaussian(*m, g, s.point()).cwiseAbs().maxCoeff() <= 1e-8);
    const Matrix J = eval_fx(*m, s.x, s.lambda);
    CHECK(std::abs(J.determinant()) <= 1e-8 * std::pow(J.norm(), J.rows()));
    check_kkt(*m, s);
}

TEST_CASE("mixture instanton") {
    const ModelPtr m = build_two_bus();
    const auto gmm = std::get<GaussianMixtureModel>(builtin_experiment("gmm_2bus").uncertainty);
    const InstantonSolution s = find_instanton(*m, gmm);
    REQUIRE(s.eta);
    CHECK(std::abs(two_bus_boundary_residual(s.lambda)) <= 1e-8);
    CHECK((cgf_gradient(gmm, *s.eta) - s.lambda).cwiseAbs().maxCoeff() <= 1e-8);
    const Vector N = eval_flambda(*m, s.x, s.lambda).transpose() * s.w;
    CHECK((s.k * N - *s.eta).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(kkt_residual_gmm(*m, gmm, s.point()).cwiseAbs().maxCoeff() <= 1e-8);
    check_kkt(*m, s);

    // One component reduces to the Gaussian solve
    const GaussianModel g(vec({0.5, 0.3}), Matrix(vec({0.6, 1.0}).asDiagonal()));
    const InstantonSolution sg = find_instanton(*m, g);
    const InstantonSolution sm = find_instanton(*m, GaussianMixtureModel({{1.0, g}}));
    CHECK((sg.lambda - sm.lambda).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(sm.rate == doctest::Approx(sg.rate).epsilon(1e-10));
}

TEST_CASE("KKT residual structure") {
    const ModelPtr m = build_two_bus();
    const GaussianModel g(vec({0.5, 0.3}), Matrix::Identity(2, 2));
    // Rounded published instanton, boundary state from the closed form, w from the left kernel
    const Vector l = vec({0.703, 0.877});
    // fold of the two-bus equations: tan(alpha) = -l1 / 2, V = 1 / (2 cos(alpha))
    const double alpha = std::atan(-l(0) / 2.0);
    const Vector x = vec({0.5 / std::cos(alpha), alpha});
    Vector w = left_null_vector(eval_fx(*m, x, l));
    const Vector N = eval_flambda(*m, x, l).transpose() * w;
    w /= N.norm();
    if (N.dot(l - g.mean()) < 0) w = -w;
    const Vector Nn = eval_flambda(*m, x, l).transpose() * w;
    const double k = Nn.norm() / (l - g.mean()).norm();
    const KktPoint z{x, l, w, k, std::nullopt};
    CHECK(kkt_residual_gaussian(*m, g, z).cwiseAbs().maxCoeff() <= 1e-3);

    KktPoint zd = z;
    const Vector delta = vec({0.01, -0.02});
    zd.w += delta;
    const Vector r0 = kkt_residual_gaussian(*m, g, z);
    const Vector r1 = kkt_residual_gaussian(*m, g, zd);
    const Vector expected = eval_fx(*m, x, l).transpose() * delta;
    CHECK((r1.segment(2, 2) - r0.segment(2, 2) - expected).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(r0.size() == 2 * 2 + 2 + 1);
}

TEST_CASE("nominal initialization brackets the boundary") {
    const ModelPtr m = build_two_bus();
    const GaussianModel g(vec({0.5, 0.3}), Matrix::Identity(2, 2));
    InitOptions opt;
    opt.direction = vec({0, 1});
    const InstantonInit init = initialize_from_nominal(*m, g, opt);
    // Boundary at lambda2 = (4 - 0.25) / 4 = 0.9375, so t* = 0.6375
    CHECK(std::abs(init.bracket_t - 0.6375) <= 1e-3);
    CHECK(init.bracket_width <= 1e-3);
    const Vector wf = eval_fx(*m, init.point.x, init.point.lambda).transpose() * init.point.w;
    const Eigen::JacobiSVD<Matrix> svd(eval_fx(*m, init.point.x, init.point.lambda));
    // two-bus f_lambda = -I, so |w0| = |N| = 1 and w0 is the smallest left singular vector
    CHECK(wf.norm() == doctest::Approx(svd.singularValues()(1)).epsilon(1e-10));

    opt.direction = vec({0, -1});
    try {
        initialize_from_nominal(*m, g, opt);
        FAIL("expected NoBoundaryFound");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NoBoundaryFound);
    }

    const GaussianModel infeasible(vec({0.0, 2.0}), Matrix::Identity(2, 2));
    try {
        initialize_from_nominal(*m, infeasible);
        FAIL("expected NominalInfeasible");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NominalInfeasible);
    }
}

TEST_CASE("Newton solve from a wrong-side start is corrected") {
    const ModelPtr m = build_two_bus();
    const GaussianModel g(vec({0.5, 0.3}), Matrix::Identity(2, 2));
    const InstantonSolution ref = find_instanton(*m, g);
    KktPoint z = ref.point();
    z.w = -z.w;
    z.k = -z.k;
    // Flipping both w and k is the same point up to the sign convention
    const InstantonSolution s = solve_instanton(*m, g, z);
    CHECK((s.lambda - ref.lambda).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(s.k > 0);
    CHECK((s.w - ref.w).cwiseAbs().maxCoeff() <= 1e-10);
}
