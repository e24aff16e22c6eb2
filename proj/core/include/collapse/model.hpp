#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "collapse/types.hpp"

namespace collapse {

struct NetworkDescription;

/// Static power-flow residual f(x, lambda) with exact derivatives.
///
/// Implementations must be immutable after construction so one instance can be
/// evaluated from several threads. Parameters are assumed to enter affinely:
/// f_lambda is independent of x, so f_{x lambda} = f_{lambda lambda} = 0.
class PowerFlowModel {
  public:
    virtual ~PowerFlowModel() = default;

    [[nodiscard]] Index state_dim() const noexcept { return n_; }
    [[nodiscard]] Index param_dim() const noexcept { return m_; }
    [[nodiscard]] const std::vector<std::string>& state_names() const noexcept { return state_names_; }
    [[nodiscard]] const std::vector<std::string>& param_names() const noexcept { return param_names_; }

    /// Initial guess used for the nominal solve (flat start for network models).
    [[nodiscard]] virtual Vector flat_start() const;

    [[nodiscard]] virtual Vector residual(const Vector& x, const Vector& lambda) const = 0;
    [[nodiscard]] virtual Matrix state_jacobian(const Vector& x, const Vector& lambda) const = 0;
    [[nodiscard]] virtual Matrix param_jacobian(const Vector& x, const Vector& lambda) const = 0;

    /// Directional derivative of the state Jacobian, d/dt f_x(x + t v, lambda) at t = 0.
    /// Entry (i, j) is sum_k d2 f_i / dx_j dx_k * v_k, so the bilinear action
    /// f_xx(u, v) is this matrix times u.
    [[nodiscard]] virtual Matrix state_jacobian_derivative(const Vector& x, const Vector& lambda,
                                                           const Vector& v) const = 0;

    /// False when second derivatives come from a finite-difference fallback.
    [[nodiscard]] virtual bool exact_second_derivatives() const noexcept { return true; }

  protected:
    PowerFlowModel(Index n, Index m, std::vector<std::string> state_names,
                   std::vector<std::string> param_names);

  private:
    Index n_;
    Index m_;
    std::vector<std::string> state_names_;
    std::vector<std::string> param_names_;
};

using ModelPtr = std::shared_ptr<const PowerFlowModel>;

// Dimension-checked evaluators. All throw Error{DimensionMismatch}.
Vector eval_f(const PowerFlowModel& model, const Vector& x, const Vector& lambda);
Matrix eval_fx(const PowerFlowModel& model, const Vector& x, const Vector& lambda);
Matrix eval_flambda(const PowerFlowModel& model, const Vector& x, const Vector& lambda);
Vector eval_fxx_bilinear(const PowerFlowModel& model, const Vector& x, const Vector& lambda,
                         const Vector& u, const Vector& v);

/// d/dt f_x(x + t v), as in PowerFlowModel::state_jacobian_derivative.
Matrix eval_fx_directional(const PowerFlowModel& model, const Vector& x, const Vector& lambda,
                           const Vector& v);

/// Hessian of the scalar w^T f(x, lambda) with respect to x (symmetric n x n).
/// Assembled from n directional derivatives, one per basis direction.
Matrix eval_weighted_hessian(const PowerFlowModel& model, const Vector& x, const Vector& lambda,
                             const Vector& w);

/// Row vector w^T f_xx(., v) as a column: entry k is w^T f_xx(e_k, v).
Vector eval_weighted_fxx_row(const PowerFlowModel& model, const Vector& x, const Vector& lambda,
                             const Vector& w, const Vector& v);

/// Analytic two-bus model: x = (V, alpha), lambda = (P load, Q load).
///   f1 = -4 V sin(alpha) - lambda1
///   f2 = -4 V^2 + 4 V cos(alpha) - lambda2
ModelPtr build_two_bus();

/// Polar AC mismatch model assembled from a network description.
ModelPtr build_polar_ac(const NetworkDescription& net);

/// Model defined by user callbacks. When no second-derivative callback is
/// given, f_xx is approximated by central differences of the Jacobian with
/// step 1e-5 and exact_second_derivatives() reports false.
struct FunctionModelCallbacks {
    std::function<Vector(const Vector&, const Vector&)> residual;
    std::function<Matrix(const Vector&, const Vector&)> state_jacobian;
    std::function<Matrix(const Vector&, const Vector&)> param_jacobian;
    std::function<Matrix(const Vector&, const Vector&, const Vector&)> state_jacobian_derivative;
    Vector flat_start;
};

ModelPtr make_function_model(Index n, Index m, FunctionModelCallbacks callbacks,
                             std::vector<std::string> state_names = {},
                             std::vector<std::string> param_names = {});

// ---------------------------------------------------------------------------
// Power-flow Newton solve

struct NewtonOptions {
    int max_iterations = 30;
    double tolerance = 1e-9;         // residual infinity norm
    int max_halvings = 8;
    double divergence_norm = 1e6;    // state norm declared divergent
    double singular_rcond = 1e-14;
};

enum class PowerFlowStatus { Converged, NoConvergence, SingularJacobian };

struct PowerFlowResult {
    PowerFlowStatus status = PowerFlowStatus::NoConvergence;
    Vector x;
    int iterations = 0;
    double residual_norm = 0.0;

    [[nodiscard]] bool converged() const noexcept { return status == PowerFlowStatus::Converged; }
};

PowerFlowResult solve_power_flow(const PowerFlowModel& model, const Vector& lambda, const Vector& x0,
                                 const NewtonOptions& options = {});

}  // namespace collapse
