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

struct Solved {
    ModelPtr model;
    GaussianModel g;
    InstantonSolution s;
    BoundaryGeometry geo;
};

Solved solve_two_bus(const Matrix& cov) {
    ModelPtr m = build_two_bus();
    GaussianModel g(vec({0.5, 0.3}), cov);
    InstantonSolution s = find_instanton(*m, g);
    BoundaryGeometry geo = compute_geometry(*m, s);
    return {m, g, s, geo};
}

}  // namespace

TEST_CASE("null vectors") {
    CHECK_THROWS_AS(right_null_vector((Matrix(2, 2) << 0, -4, -4, 0).finished()), Error);
    const Vector v = right_null_vector((Matrix(2, 2) << 1, 0, 0, 0).finished());
    CHECK((v - vec({0, 1})).norm() <= 1e-15);

    // Two-bus f_x at the boundary point of lambda = (0, 1): [[0, -2], [0, 0]], kernel e1
    const ModelPtr m = build_two_bus();
    const Matrix J = eval_fx(*m, vec({0.5, 0}), vec({0, 1}));
    CHECK((right_null_vector(J) - vec({1, 0})).norm() <= 1e-8);
    CHECK((left_null_vector(J).cwiseAbs() - vec({0, 1})).norm() <= 1e-8);
}

TEST_CASE("boundary geometry postconditions") {
    for (const Matrix& cov : {Matrix(Matrix::Identity(2, 2)), Matrix(vec({0.6, 1.0}).asDiagonal())}) {
        const Solved p = solve_two_bus(cov);
        const Matrix J = eval_fx(*p.model, p.s.x, p.s.lambda);
        CHECK((J * p.geo.right_null).norm() <= 1e-8 * J.norm());
        CHECK(p.geo.normal.norm() == doctest::Approx(1.0).epsilon(1e-8));
        CHECK((p.geo.second_form - p.geo.second_form.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK(p.geo.bordered_residuals.maxCoeff() <= 1e-8);
    }
}

TEST_CASE("bordered sensitivities") {
    const Solved p = solve_two_bus(Matrix(vec({0.6, 1.0}).asDiagonal()));
    const PowerFlowModel& m = *p.model;
    const Vector& x = p.s.x;
    const Vector& l = p.s.lambda;
    const StateSensitivity sens = compute_x_lambda(m, x, l, p.s.w, p.geo.right_null);

    // f_x x_lambda + v alpha^T = -f_lambda, and alpha vanishes along the tangent
    const Matrix r = eval_fx(m, x, l) * sens.x_lambda + eval_flambda(m, x, l);
    CHECK((r + p.geo.right_null * sens.alpha.transpose()).cwiseAbs().maxCoeff() <= 1e-8);
    const Vector tn = vec({p.geo.normal(1), -p.geo.normal(0)});
    CHECK((r * tn).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(std::abs(sens.alpha.dot(tn)) <= 1e-8);
    for (Index j = 0; j < 2; ++j) {
        const double b = p.s.w.dot(eval_fxx_bilinear(m, x, l, sens.x_lambda.col(j), p.geo.right_null));
        CHECK(std::abs(b) <= 1e-8);
    }

    // Along the boundary, x(lambda) follows the fold: tan(alpha) = -l1/2, V = 1/(2 cos(alpha))
    const Vector& t = tn;
    auto boundary_state = [](double l1) {
        const double a = std::atan(-l1 / 2.0);
        return vec({0.5 / std::cos(a), a});
    };
    auto on_boundary = [](double l1) { return vec({l1, 1.0 - l1 * l1 / 4.0}); };
    const double h = 1e-4;
    const double s1 = l(0) + h * t(0);
    const double s0 = l(0) - h * t(0);
    const Vector dx = (boundary_state(s1) - boundary_state(s0)) / (on_boundary(s1) - on_boundary(s0)).norm();
    const Vector tangent = (on_boundary(s1) - on_boundary(s0)).normalized();
    CHECK((sens.x_lambda * tangent - dx).cwiseAbs().maxCoeff() <= 1e-3);
}

TEST_CASE("two-bus curvature matches the analytic boundary") {
    for (const Matrix& cov : {Matrix(Matrix::Identity(2, 2)), Matrix(vec({0.6, 1.0}).asDiagonal())}) {
        const Solved p = solve_two_bus(cov);
        const double l1 = p.s.lambda(0);
        CHECK((p.geo.normal - vec({2 * l1, 4}).normalized()).cwiseAbs().maxCoeff() <= 1e-8);
        const Vector t = vec({p.geo.normal(1), -p.geo.normal(0)});
        const double kappa = 0.5 / std::pow(1 + l1 * l1 / 4, 1.5);
        CHECK(t.dot(p.geo.second_form * t) == doctest::Approx(kappa).epsilon(1e-8));
    }
}

TEST_CASE("linear model has a flat second fundamental form") {
    // f = A x - lambda with singular A: boundary is a hyperplane
    const Matrix A = (Matrix(2, 2) << 1, 2, 2, 4).finished();
    FunctionModelCallbacks cb;
    cb.residual = [A](const Vector& x, const Vector& l) { return Vector(A * x - l); };
    cb.state_jacobian = [A](const Vector&, const Vector&) { return A; };
    cb.param_jacobian = [](const Vector&, const Vector&) { return Matrix(-Matrix::Identity(2, 2)); };
    cb.state_jacobian_derivative = [](const Vector&, const Vector&, const Vector&) { return Matrix(Matrix::Zero(2, 2)); };
    cb.flat_start = Vector::Zero(2);
    const ModelPtr m = make_function_model(2, 2, cb);
    const Matrix II = second_fundamental_form(*m, Vector::Zero(2), Vector::Zero(2), vec({2, -1}), Matrix::Ones(2, 2)).form;
    CHECK(II.norm() == 0.0);
}

TEST_CASE("curvature correction inputs") {
    SUBCASE("degenerate rotation") {
        const GaussianModel g(vec({0, 0}), Matrix::Identity(2, 2));
        const CurvatureInputs c = curvature_correction_inputs(g, vec({1.5, 0}), vec({1, 0}), Matrix::Zero(2, 2));
        CHECK((c.rotation - Matrix::Identity(2, 2)).norm() == 0.0);
        CHECK((c.whitening - Matrix::Identity(2, 2)).norm() <= 1e-15);
    }
    SUBCASE("whitening and sign of nu") {
        for (const Matrix& cov : {Matrix(Matrix::Identity(2, 2)), Matrix(vec({0.6, 1.0}).asDiagonal())}) {
            const Solved p = solve_two_bus(cov);
            const CurvatureInputs c = curvature_correction_inputs(p.g, p.s.lambda, p.geo.normal, p.geo.second_form);
            const Vector xi = c.whitening.inverse() * (p.s.lambda - p.g.mean());
            CHECK(xi.squaredNorm() == doctest::Approx(2 * p.s.rate).epsilon(1e-10));
            CHECK(std::abs(xi(1)) <= 1e-10);
            CHECK(c.eigenvalues.size() == 1);
            // outward normal: II is positive along the tangent, so the bracket is below 1
            CHECK(c.eigenvalues(0) > 0.0);
            CHECK(std::abs(c.alignment) >= 1 - 1e-8);
        }
    }
    SUBCASE("misaligned normal") {
        const GaussianModel g(vec({0, 0}), Matrix::Identity(2, 2));
        try {
            curvature_correction_inputs(g, vec({1, 0}), vec({0, 1}), Matrix::Zero(2, 2));
            FAIL("expected AlignmentFailure");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::AlignmentFailure);
        }
    }
}

TEST_CASE("orientation check") {
    const Solved p = solve_two_bus(Matrix::Identity(2, 2));
    CHECK(check_orientation(*p.model, p.s.lambda, p.geo.normal, p.s.x).ok());
    const OrientationCheck flipped = check_orientation(*p.model, p.s.lambda, -p.geo.normal, p.s.x);
    CHECK_FALSE(flipped.ok());
}

TEST_CASE("five-bus geometry") {
    const ExperimentSpec spec = builtin_experiment("gaussian_5bus");
    const ModelPtr m = resolve_model(spec.model);
    const InstantonSolution s = find_instanton(*m, spec.uncertainty);
    const BoundaryGeometry geo = compute_geometry(*m, s);
    CHECK(geo.second_form.rows() == 6);
    CHECK(geo.bordered_residuals.maxCoeff() <= 1e-8);
    CHECK(geo.asymmetry <= 1e-6);
    CHECK(check_orientation(*m, s.lambda, geo.normal, s.x).ok());
}
