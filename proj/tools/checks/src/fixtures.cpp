#include "collapse/cases.hpp"
#include "collapse/checks.hpp"

namespace collapse::acceptance {

namespace {

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

// Delegates to the two-bus model but reports d f1/d alpha off by 1%.
class BuggyTwoBus final : public PowerFlowModel {
  public:
    BuggyTwoBus() : PowerFlowModel(2, 2, {"V", "alpha"}, {"lambda1", "lambda2"}), base_(build_two_bus()) {}

    Vector flat_start() const override { return base_->flat_start(); }
    Vector residual(const Vector& x, const Vector& l) const override { return base_->residual(x, l); }
    Matrix state_jacobian(const Vector& x, const Vector& l) const override {
        Matrix J = base_->state_jacobian(x, l);
        J(0, 1) *= 1.01;
        return J;
    }
    Matrix param_jacobian(const Vector& x, const Vector& l) const override { return base_->param_jacobian(x, l); }
    Matrix state_jacobian_derivative(const Vector& x, const Vector& l, const Vector& v) const override {
        return base_->state_jacobian_derivative(x, l, v);
    }

  private:
    ModelPtr base_;
};

std::pair<Vector, Vector> two_bus_point(Rng& rng) {
    Vector x(2), l(2);
    x << uniform(rng, 0.5, 1.5), uniform(rng, -1.0, 0.3);
    l << uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0);
    return {x, l};
}

}  // namespace

DerivativeTarget two_bus_target() { return {"two_bus", build_two_bus(), two_bus_point}; }

DerivativeTarget buggy_two_bus_target() {
    return {"buggy_two_bus", std::make_shared<BuggyTwoBus>(), two_bus_point};
}

DerivativeTarget five_bus_target() {
    auto sample = [](Rng& rng) {
        Vector x(7), l(6);
        for (Index i = 0; i < 4; ++i) x(i) = uniform(rng, -0.6, 0.3);
        for (Index i = 4; i < 7; ++i) x(i) = uniform(rng, 0.6, 1.2);
        for (Index i = 0; i < 6; ++i) l(i) = uniform(rng, 0.0, 2.0);
        return std::make_pair(x, l);
    };
    return {"five_bus", build_polar_ac(build_five_bus()), sample};
}

}  // namespace collapse::acceptance
