#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "collapse/cases.hpp"
#include "collapse/error.hpp"
#include "collapse/estimators.hpp"
#include "collapse/geometry.hpp"
#include "collapse/instanton.hpp"
#include "collapse/sweep.hpp"

using namespace collapse;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Index>(v.size()));
    Index i = 0;
    for (double d : v) out(i++) = d;
    return out;
}

const GaussianModel& sigma0() {
    static const GaussianModel g = std::get<GaussianModel>(builtin_experiment("gaussian_2bus").uncertainty);
    return g;
}

const GaussianMixtureModel& mixture() {
    static const GaussianMixtureModel g = std::get<GaussianMixtureModel>(builtin_experiment("gmm_2bus").uncertainty);
    return g;
}

}  // namespace

TEST_CASE("method names") {
    for (Method m : {Method::LDT1, Method::LDT2, Method::GMM_LDT1, Method::GMM_LDT2, Method::MC, Method::IS})
        CHECK(method_from_string(to_string(m)) == m);
    CHECK(to_string(Method::GMM_LDT2) == "GMM-LDT2");
    CHECK_THROWS_AS(method_from_string("LDT3"), Error);
}

TEST_CASE("first-order estimate") {
    CHECK(ldt_first_order(0.0).value == 0.5);
    CHECK(standard_normal_tail(30.0) > 0.0);
    const ModelPtr m = build_two_bus();
    const PointAnalysis hi = analyze_point(*m, sigma0().scaled(0.631));
    const PointAnalysis lo = analyze_point(*m, sigma0().scaled(1.585e-2));
    CHECK(hi.first_order.value == doctest::Approx(2.163e-1).epsilon(5e-4));
    CHECK(lo.first_order.value == doctest::Approx(3.684e-7).epsilon(5e-4));
}

TEST_CASE("second-order estimate") {
    const ModelPtr m = build_two_bus();
    const PointAnalysis hi = analyze_point(*m, sigma0().scaled(0.631));
    const PointAnalysis mid = analyze_point(*m, sigma0().scaled(3.594e-2));
    REQUIRE(hi.second_order);
    REQUIRE(mid.second_order);
    CHECK(hi.second_order->value == doctest::Approx(2.378e-1).epsilon(1e-3));
    CHECK(mid.second_order->value == doctest::Approx(5.542e-4).epsilon(1e-3));

    // Flat boundary leaves LDT1 unchanged
    const CurvatureInputs flat = curvature_correction_inputs(sigma0(), hi.instanton.lambda,
                                                             hi.geometry.normal, Matrix::Zero(2, 2));
    CHECK(ldt_second_order(hi.instanton.rate, flat).value == hi.first_order.value);

    // Strong curvature breaks the bracket
    const CurvatureInputs sharp = curvature_correction_inputs(sigma0(), hi.instanton.lambda, hi.geometry.normal,
                                                              hi.geometry.second_form * 100.0);
    try {
        (void)ldt_second_order(hi.instanton.rate, sharp);
        FAIL("expected CurvatureBreakdown");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::CurvatureBreakdown);
    }
}

TEST_CASE("mixture estimates") {
    const ModelPtr m = build_two_bus();
    const PointAnalysis hi = analyze_point(*m, mixture().scaled(0.631));
    const PointAnalysis lo = analyze_point(*m, mixture().scaled(1.585e-2));
    CHECK(hi.first_order.method == Method::GMM_LDT1);
    CHECK(hi.first_order.value == doctest::Approx(2.221e-1).epsilon(1e-3));
    CHECK(lo.first_order.value == doctest::Approx(3.491e-4).epsilon(1e-3));
    const PointAnalysis low2 = analyze_point(*m, mixture().scaled(2.387e-2));
    REQUIRE(low2.second_order);
    CHECK(low2.second_order->value == doctest::Approx(1.917e-3).epsilon(2e-3));

    double sum = 0.0;
    for (double v : hi.second_order->diagnostics.component_values) sum += v;
    CHECK(sum == doctest::Approx(hi.second_order->value).epsilon(1e-12));
}

TEST_CASE("one-component mixture reduces to the Gaussian formulas") {
    const ModelPtr m = build_two_bus();
    const GaussianModel g = sigma0().scaled(0.2);
    const PointAnalysis pg = analyze_point(*m, g);
    const PointAnalysis pm = analyze_point(*m, GaussianMixtureModel({{1.0, g}}));
    CHECK(pm.first_order.value == doctest::Approx(pg.first_order.value).epsilon(1e-10));
    CHECK(pm.second_order->value == doctest::Approx(pg.second_order->value).epsilon(1e-10));
}

TEST_CASE("tangency points") {
    const ModelPtr m = build_two_bus();
    const PointAnalysis p = analyze_point(*m, mixture());
    const Vector& ls = p.instanton.lambda;
    const Vector& N = p.geometry.normal;
    const Matrix& II = p.geometry.second_form;

    SUBCASE("flat boundary gives the Mahalanobis projection") {
        const GaussianModel& c = mixture().component(1).gaussian;
        const TangencyPoint t = gmm_tangency_point(c, ls, N, Matrix::Zero(2, 2));
        const Vector expected =
            c.mean() + c.covariance() * N * (N.dot(ls - c.mean()) / N.dot(c.covariance() * N));
        CHECK((t.lambda - expected).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((t.normal - N).cwiseAbs().maxCoeff() <= 1e-12);
    }
    SUBCASE("component centered on the instanton") {
        const GaussianModel c(ls, Matrix::Identity(2, 2) * 0.3);
        const TangencyPoint t = gmm_tangency_point(c, ls, N, II);
        CHECK((t.lambda - ls).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((t.normal - N).cwiseAbs().maxCoeff() <= 1e-12);
    }
    SUBCASE("minimality on the quadratic curve") {
        const GaussianModel& c = mixture().component(0).gaussian;
        const TangencyPoint t = gmm_tangency_point(c, ls, N, II);
        const Vector d = t.lambda - ls;
        CHECK(std::abs(N.dot(d) + 0.5 * d.dot(II * d)) <= 1e-9);
        const Vector grad = c.inverse_covariance() * (t.lambda - c.mean());
        const Vector Ni = N + II * d;
        CHECK((grad - t.multiplier * Ni).cwiseAbs().maxCoeff() <= 1e-9);

        // Brute force: parameterize the quadric by the tangent coordinate s
        const Vector tan = vec({N(1), -N(0)});
        double best = 1e300;
        Vector best_l;
        for (double s = -3.0; s <= 3.0; s += 1e-4) {
            // solve N.(s tan + r N) + (s tan + r N)^T II (s tan + r N)/2 = 0 for small r
            const double a = 0.5 * N.dot(II * N);
            const double b = 1.0 + s * tan.dot(II * N);
            const double cc = 0.5 * s * s * tan.dot(II * tan);
            const double disc = b * b - 4 * a * cc;
            if (disc < 0) continue;
            const double r = std::abs(a) < 1e-14 ? -cc / b : (-b + std::sqrt(disc)) / (2 * a);
            const Vector l = ls + s * tan + r * N;
            const double v = 0.5 * (l - c.mean()).dot(c.inverse_covariance() * (l - c.mean()));
            if (v < best) {
                best = v;
                best_l = l;
            }
        }
        CHECK((best_l - t.lambda).cwiseAbs().maxCoeff() <= 1e-3);
        CHECK(t.rate <= best + 1e-12);
    }
}

TEST_CASE("classifiers") {
    const CollapseClassifier a = CollapseClassifier::analytic_two_bus();
    CHECK_FALSE(a.collapsed(vec({0, 0})));
    CHECK(a.collapsed(vec({0, 1.0001})));

    const ModelPtr m = build_two_bus();
    const CollapseClassifier pf = make_classifier(ClassifierMode::PowerFlow, m, vec({0.5, 0.3}));
    const Matrix s = sample(GaussianModel(vec({0.5, 0.3}), Matrix(vec({0.6, 1.0}).asDiagonal())), 10000, 17);
    int disagreements = 0;
    for (Index i = 0; i < s.cols(); ++i) {
        const Vector l = s.col(i);
        if (a.collapsed(l) != pf.collapsed(l) && std::abs(two_bus_boundary_residual(l)) > 1e-6) ++disagreements;
    }
    CHECK(disagreements == 0);
    CHECK_THROWS_AS(make_classifier(ClassifierMode::Analytic, resolve_model("five_bus"), five_bus_mean()), Error);
}

TEST_CASE("Monte Carlo") {
    const CollapseClassifier never = CollapseClassifier::custom([](const Vector&) { return false; });
    SamplingOptions o;
    o.samples = 5000;
    o.seed = 3;
    const ProbabilityEstimate z = monte_carlo(sigma0(), never, o);
    CHECK(z.value == 0.0);
    CHECK(*z.std_error == 0.0);

    // Replay the draws by hand
    const CollapseClassifier a = CollapseClassifier::analytic_two_bus();
    const GaussianModel g = sigma0().scaled(0.631);
    o.samples = 10000;
    o.block_size = 4096;
    const ProbabilityEstimate e = monte_carlo(g, a, o);
    std::size_t count = 0;
    for (std::uint64_t block = 0; block * 4096 < o.samples; ++block) {
        const std::size_t n = std::min<std::size_t>(4096, o.samples - block * 4096);
        const Matrix s = sample(g, n, o.seed, block);
        for (Index i = 0; i < s.cols(); ++i) count += a.collapsed(s.col(i)) ? 1 : 0;
    }
    CHECK(e.value == static_cast<double>(count) / 10000.0);
    CHECK(e.diagnostics.collapsed_count == count);

    o.jobs = 3;
    CHECK(monte_carlo(g, a, o).value == e.value);
}

TEST_CASE("Monte Carlo reproduces the largest two-bus reference") {
    SamplingOptions o;
    o.samples = 400000;
    o.seed = 20240611;
    const ProbabilityEstimate e = monte_carlo(sigma0().scaled(0.631), CollapseClassifier::analytic_two_bus(), o);
    CHECK(std::abs(e.value - 2.536e-1) <= 4 * *e.std_error);
}

TEST_CASE("importance sampling") {
    const CollapseClassifier a = CollapseClassifier::analytic_two_bus();
    SamplingOptions o;
    o.samples = 20000;
    o.seed = 5;
    const GaussianModel g = sigma0().scaled(0.2783);
    // Unit weights reproduce direct Monte Carlo exactly
    CHECK(importance_sampling(g, g, a, o).value == monte_carlo(g, a, o).value);

    const ModelPtr m = build_two_bus();
    const GaussianModel low = sigma0().scaled(1.585e-2);
    const InstantonSolution s = find_instanton(*m, low);
    o.samples = 150000;
    const ProbabilityEstimate e = importance_sampling(low, gaussian_is_proposal(low, s.lambda), a, o);
    CHECK(std::abs(e.value - 4.034e-7) <= 4 * *e.std_error);
    CHECK(e.diagnostics.effective_sample_size);
    CHECK(e.diagnostics.flags.empty());

    // A very wide proposal puts nearly all weight on a handful of draws
    o.samples = 2000;
    const ProbabilityEstimate d = importance_sampling(low, low.scaled(25.0), a, o);
    CHECK(std::find(d.diagnostics.flags.begin(), d.diagnostics.flags.end(), "DegenerateWeights") !=
          d.diagnostics.flags.end());
}

TEST_CASE("importance sampling is unbiased") {
    const CollapseClassifier a = CollapseClassifier::analytic_two_bus();
    const ModelPtr m = build_two_bus();
    const GaussianModel g = sigma0().scaled(5.412e-2);
    const InstantonSolution s = find_instanton(*m, g);
    const GaussianModel q = gaussian_is_proposal(g, s.lambda);
    SamplingOptions o;
    o.samples = 4000;
    double mean = 0.0, var = 0.0;
    const int reps = 50;
    for (int r = 0; r < reps; ++r) {
        o.seed = 1000 + static_cast<std::uint64_t>(r);
        const ProbabilityEstimate e = importance_sampling(g, q, a, o);
        mean += e.value / reps;
        var += *e.std_error * *e.std_error / (reps * reps);
    }
    o.samples = 1000000;
    o.seed = 77;
    const ProbabilityEstimate mc = monte_carlo(g, a, o);
    CHECK(std::abs(mean - mc.value) <= 2 * std::sqrt(var + *mc.std_error * *mc.std_error));
}

TEST_CASE("mixture proposal") {
    const ModelPtr m = build_two_bus();
    const PointAnalysis p = analyze_point(*m, mixture());
    const GaussianMixtureModel q = mixture_is_proposal(mixture(), p.instanton.lambda, p.geometry.normal);
    REQUIRE(q.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(q.component(i).weight == mixture().component(i).weight);
        CHECK(std::abs(p.geometry.normal.dot(q.component(i).gaussian.mean() - p.instanton.lambda)) <= 1e-12);
    }
}
