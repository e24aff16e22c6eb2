#pragma once

#include <optional>
#include <vector>

#include "collapse/distributions.hpp"
#include "collapse/model.hpp"

namespace collapse {

/// Unknowns of the instanton system. `eta` is only used for mixtures.
struct KktPoint {
    Vector x;
    Vector lambda;
    Vector w;
    double k = 0.0;
    std::optional<Vector> eta;
};

struct InstantonInit {
    KktPoint point;
    double bracket_t = 0.0;        // ray parameter of the last solvable point
    double bracket_width = 0.0;
    Vector direction;              // unit ray direction used for the bracket
};

struct KktOptions {
    int max_iterations = 60;
    double tolerance = 1e-10;      // KKT residual infinity norm
    double step_tolerance = 1e-14;
    double accept_tolerance = 1e-8;  // residual required when stopping on a tiny step
    int max_halvings = 10;
    double singular_rcond = 1e-15;
};

struct InstantonSolution {
    Vector x;
    Vector lambda;
    Vector w;
    double k = 0.0;
    std::optional<Vector> eta;
    double rate = 0.0;             // I(lambda*)
    double residual_norm = 0.0;
    int iterations = 0;
    std::vector<double> residual_trace;

    /// Boundary normal N = (w^T f_lambda)^T.
    [[nodiscard]] KktPoint point() const { return {x, lambda, w, k, eta}; }
};

// Gaussian system, stacked as
//   f(x, lambda)                          (n)
//   f_x^T w                               (n)
//   k Sigma^{-1}(lambda - mu) - f_lambda^T w   (m)
//   |f_lambda^T w|^2 - 1                  (1)
Vector kkt_residual_gaussian(const PowerFlowModel& model, const GaussianModel& g, const KktPoint& z);
Matrix kkt_jacobian_gaussian(const PowerFlowModel& model, const GaussianModel& g, const KktPoint& z);

// Mixture system with the dual variable eta, stacked as
//   f, f_x^T w, k f_lambda^T w - eta, grad S(eta) - lambda, |f_lambda^T w|^2 - 1
Vector kkt_residual_gmm(const PowerFlowModel& model, const GaussianMixtureModel& gmm, const KktPoint& z);
Matrix kkt_jacobian_gmm(const PowerFlowModel& model, const GaussianMixtureModel& gmm, const KktPoint& z);

/// Packs (x, lambda, w, k[, eta]) into a flat Newton vector and back.
Vector pack(const KktPoint& z);
KktPoint unpack(const Vector& flat, Index n, Index m, bool with_eta);

InstantonSolution solve_instanton_gaussian(const PowerFlowModel& model, const GaussianModel& g,
                                           const KktPoint& init, const KktOptions& options = {});
InstantonSolution solve_instanton_gmm(const PowerFlowModel& model, const GaussianMixtureModel& gmm,
                                      const KktPoint& init, const KktOptions& options = {});
InstantonSolution solve_instanton(const PowerFlowModel& model, const Uncertainty& dist,
                                  const KktPoint& init, const KktOptions& options = {});

struct InitOptions {
    std::optional<Vector> direction;  // defaults to the dominant covariance eigenvector
    double bracket_tolerance = 1e-3;
    double max_t = 1e3;
    /// Re-aim the ray along Sigma N and re-bracket this many times
    /// (Sigma is the pooled covariance for mixtures).
    int refine_steps = 0;
    NewtonOptions power_flow;
};

/// Brackets the boundary along mean + t d and builds (x0, lambda0, w0, k0[, eta0]).
/// Throws Error{NominalInfeasible} or Error{NoBoundaryFound}.
InstantonInit initialize_from_nominal(const PowerFlowModel& model, const Uncertainty& dist,
                                      const InitOptions& options = {});

/// Initialize and solve. A failed Newton solve is retried from a refined ray
/// (refine_steps >= 20); WrongSideSolution is retried once with -w.
InstantonSolution find_instanton(const PowerFlowModel& model, const Uncertainty& dist,
                                 const InitOptions& init_options = {},
                                 const KktOptions& options = {});

/// Adapts a converged solution of one distribution into a starting point
/// for another (covariance-sweep warm start).
KktPoint warm_start(const InstantonSolution& previous, const Uncertainty& next);

}  // namespace collapse
