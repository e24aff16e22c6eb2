#include "collapse/model.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#include "collapse/error.hpp"

namespace collapse {

namespace {

void require_size(const Vector& v, Index expected, const char* what) {
    if (v.size() != expected) {
        std::ostringstream msg;
        msg << what << " has length " << v.size() << ", expected " << expected;
        throw Error(ErrorCode::DimensionMismatch, msg.str());
    }
}

void require_point(const PowerFlowModel& model, const Vector& x, const Vector& lambda) {
    require_size(x, model.state_dim(), "state x");
    require_size(lambda, model.param_dim(), "parameter lambda");
}

std::vector<std::string> default_names(const char* prefix, Index count) {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(count));
    for (Index i = 0; i < count; ++i) names.push_back(prefix + std::to_string(i + 1));
    return names;
}

class TwoBusModel final : public PowerFlowModel {
  public:
    TwoBusModel() : PowerFlowModel(2, 2, {"V", "alpha"}, {"lambda1", "lambda2"}) {}

    Vector flat_start() const override { return Vector::Unit(2, 0); }

    Vector residual(const Vector& x, const Vector& lambda) const override {
        const double V = x(0);
        const double a = x(1);
        Vector f(2);
        f(0) = -4.0 * V * std::sin(a) - lambda(0);
        f(1) = -4.0 * V * V + 4.0 * V * std::cos(a) - lambda(1);
        return f;
    }

    Matrix state_jacobian(const Vector& x, const Vector&) const override {
        const double V = x(0);
        const double s = std::sin(x(1));
        const double c = std::cos(x(1));
        Matrix J(2, 2);
        J << -4.0 * s, -4.0 * V * c,
             -8.0 * V + 4.0 * c, -4.0 * V * s;
        return J;
    }

    Matrix param_jacobian(const Vector&, const Vector&) const override {
        return -Matrix::Identity(2, 2);
    }

    Matrix state_jacobian_derivative(const Vector& x, const Vector&, const Vector& v) const override {
        const double V = x(0);
        const double s = std::sin(x(1));
        const double c = std::cos(x(1));
        // Hessians: f1 -> [[0, -4c], [-4c, 4Vs]], f2 -> [[-8, -4s], [-4s, -4Vc]]
        Matrix D(2, 2);
        D(0, 0) = -4.0 * c * v(1);
        D(0, 1) = -4.0 * c * v(0) + 4.0 * V * s * v(1);
        D(1, 0) = -8.0 * v(0) - 4.0 * s * v(1);
        D(1, 1) = -4.0 * s * v(0) - 4.0 * V * c * v(1);
        return D;
    }
};

class FunctionModel final : public PowerFlowModel {
  public:
    FunctionModel(Index n, Index m, FunctionModelCallbacks cb, std::vector<std::string> state_names,
                  std::vector<std::string> param_names)
        : PowerFlowModel(n, m, std::move(state_names), std::move(param_names)), cb_(std::move(cb)) {
        if (!cb_.residual || !cb_.state_jacobian || !cb_.param_jacobian) {
            throw Error(ErrorCode::InvalidNetwork,
                        "function model requires residual, state and parameter Jacobian callbacks");
        }
        if (cb_.flat_start.size() == 0) cb_.flat_start = Vector::Zero(n);
        require_size(cb_.flat_start, n, "flat start");
    }

    Vector flat_start() const override { return cb_.flat_start; }
    Vector residual(const Vector& x, const Vector& l) const override { return cb_.residual(x, l); }
    Matrix state_jacobian(const Vector& x, const Vector& l) const override { return cb_.state_jacobian(x, l); }
    Matrix param_jacobian(const Vector& x, const Vector& l) const override { return cb_.param_jacobian(x, l); }

    Matrix state_jacobian_derivative(const Vector& x, const Vector& l, const Vector& v) const override {
        if (cb_.state_jacobian_derivative) return cb_.state_jacobian_derivative(x, l, v);
        constexpr double h = 1e-5;
        return (cb_.state_jacobian(x + h * v, l) - cb_.state_jacobian(x - h * v, l)) / (2.0 * h);
    }

    bool exact_second_derivatives() const noexcept override {
        return static_cast<bool>(cb_.state_jacobian_derivative);
    }

  private:
    FunctionModelCallbacks cb_;
};

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace

PowerFlowModel::PowerFlowModel(Index n, Index m, std::vector<std::string> state_names,
                               std::vector<std::string> param_names)
    : n_(n), m_(m), state_names_(std::move(state_names)), param_names_(std::move(param_names)) {
    if (state_names_.empty()) state_names_ = default_names("x", n);
    if (param_names_.empty()) param_names_ = default_names("lambda", m);
}

Vector PowerFlowModel::flat_start() const { return Vector::Zero(n_); }

Vector eval_f(const PowerFlowModel& model, const Vector& x, const Vector& lambda) {
    require_point(model, x, lambda);
    return model.residual(x, lambda);
}

Matrix eval_fx(const PowerFlowModel& model, const Vector& x, const Vector& lambda) {
    require_point(model, x, lambda);
    return model.state_jacobian(x, lambda);
}

Matrix eval_flambda(const PowerFlowModel& model, const Vector& x, const Vector& lambda) {
    require_point(model, x, lambda);
    return model.param_jacobian(x, lambda);
}

Matrix eval_fx_directional(const PowerFlowModel& model, const Vector& x, const Vector& lambda,
                           const Vector& v) {
    require_point(model, x, lambda);
    require_size(v, model.state_dim(), "direction v");
    return model.state_jacobian_derivative(x, lambda, v);
}

Vector eval_fxx_bilinear(const PowerFlowModel& model, const Vector& x, const Vector& lambda,
                         const Vector& u, const Vector& v) {
    require_size(u, model.state_dim(), "direction u");
    return eval_fx_directional(model, x, lambda, v) * u;
}

Matrix eval_weighted_hessian(const PowerFlowModel& model, const Vector& x, const Vector& lambda,
                             const Vector& w) {
    require_point(model, x, lambda);
    const Index n = model.state_dim();
    require_size(w, n, "weight w");
    Matrix H(n, n);
    for (Index k = 0; k < n; ++k) {
        H.col(k) = model.state_jacobian_derivative(x, lambda, Vector::Unit(n, k)).transpose() * w;
    }
    return 0.5 * (H + H.transpose());
}

Vector eval_weighted_fxx_row(const PowerFlowModel& model, const Vector& x, const Vector& lambda,
                             const Vector& w, const Vector& v) {
    require_size(w, model.state_dim(), "weight w");
    return eval_fx_directional(model, x, lambda, v).transpose() * w;
}

ModelPtr build_two_bus() { return std::make_shared<TwoBusModel>(); }

ModelPtr make_function_model(Index n, Index m, FunctionModelCallbacks callbacks,
                             std::vector<std::string> state_names,
                             std::vector<std::string> param_names) {
    return std::make_shared<FunctionModel>(n, m, std::move(callbacks), std::move(state_names),
                                           std::move(param_names));
}

PowerFlowResult solve_power_flow(const PowerFlowModel& model, const Vector& lambda, const Vector& x0,
                                 const NewtonOptions& options) {
    require_point(model, x0, lambda);

    PowerFlowResult result;
    result.x = x0;
    Vector r = model.residual(result.x, lambda);
    double norm = inf_norm(r);

    for (int it = 0;; ++it) {
        result.iterations = it;
        result.residual_norm = norm;
        if (!std::isfinite(norm)) {
            result.status = PowerFlowStatus::NoConvergence;
            return result;
        }
        if (norm <= options.tolerance) {
            result.status = PowerFlowStatus::Converged;
            return result;
        }
        if (it == options.max_iterations) break;

        const Eigen::PartialPivLU<Matrix> lu(model.state_jacobian(result.x, lambda));
        if (!(lu.rcond() > options.singular_rcond)) {
            result.status = PowerFlowStatus::SingularJacobian;
            return result;
        }
        const Vector dx = lu.solve(-r);
        if (!dx.allFinite()) {
            result.status = PowerFlowStatus::SingularJacobian;
            return result;
        }

        double step = 1.0;
        bool accepted = false;
        for (int h = 0; h <= options.max_halvings; ++h, step *= 0.5) {
            Vector trial = result.x + step * dx;
            Vector r_trial = model.residual(trial, lambda);
            const double trial_norm = inf_norm(r_trial);
            if (trial_norm < norm) {
                result.x = std::move(trial);
                r = std::move(r_trial);
                norm = trial_norm;
                accepted = true;
                break;
            }
        }
        if (!accepted || result.x.norm() > options.divergence_norm) break;
    }

    result.status = PowerFlowStatus::NoConvergence;
    result.residual_norm = norm;
    return result;
}

}  // namespace collapse
