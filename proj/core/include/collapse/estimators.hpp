#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "collapse/distributions.hpp"
#include "collapse/geometry.hpp"
#include "collapse/model.hpp"

namespace collapse {

enum class Method { LDT1, LDT2, GMM_LDT1, GMM_LDT2, MC, IS };

std::string_view to_string(Method method);
Method method_from_string(std::string_view text);  // throws ParseError

struct EstimateDiagnostics {
    std::vector<double> bracket_terms;        // 1 - beta nu_i / |A^T N| (LDT2)
    std::vector<double> curvature_eigenvalues;
    std::vector<double> component_values;     // pi_i P_i (mixtures)
    std::optional<double> beta;               // sqrt(2 I)
    std::optional<double> effective_sample_size;
    std::size_t collapsed_count = 0;
    std::vector<std::string> flags;           // e.g. "DegenerateWeights", "CurvatureBreakdown:1"
};

struct ProbabilityEstimate {
    double value = 0.0;
    Method method = Method::LDT1;
    std::optional<double> std_error;
    std::optional<std::size_t> samples;
    std::optional<std::uint64_t> seed;
    EstimateDiagnostics diagnostics;
};

/// Phi(-beta) through erfc; accurate in the deep tail.
double standard_normal_tail(double beta);

ProbabilityEstimate ldt_first_order(double rate);

/// Throws Error{CurvatureBreakdown} when any bracket term is <= 0.
ProbabilityEstimate ldt_second_order(double rate, const CurvatureInputs& curvature);

ProbabilityEstimate gmm_ldt_first_order(const GaussianMixtureModel& gmm, const Vector& lambda_star,
                                        const Vector& normal);

struct TangencyPoint {
    Vector lambda;            // Mahalanobis-closest point on the quadratic boundary
    Vector normal;            // N_i = N + II (lambda_i - lambda*), not normalized
    double multiplier = 0.0;
    double rate = 0.0;        // (lambda_i - mu_i)^T Sigma_i^{-1} (lambda_i - mu_i) / 2
    int iterations = 0;
    bool nonpositive_multiplier = false;
};

/// Newton on the Lagrange conditions of
///   min |lambda - mu|^2_{Sigma^{-1}} / 2  s.t.  N^T d + d^T II d / 2 = 0, d = lambda - lambda*.
/// Throws Error{NoConvergence}.
TangencyPoint gmm_tangency_point(const GaussianModel& component, const Vector& lambda_star,
                                 const Vector& normal, const Matrix& second_form);

ProbabilityEstimate gmm_ldt_second_order(const GaussianMixtureModel& gmm, const Vector& lambda_star,
                                         const Vector& normal, const Matrix& second_form,
                                         const std::vector<TangencyPoint>& tangency);
ProbabilityEstimate gmm_ldt_second_order(const GaussianMixtureModel& gmm, const Vector& lambda_star,
                                         const Vector& normal, const Matrix& second_form);

// ---------------------------------------------------------------------------
// Sampling references

/// Decides feasible/collapsed for a parameter vector. Deterministic and
/// safe to call concurrently.
class CollapseClassifier {
  public:
    enum class Mode { Analytic, PowerFlow, Custom };

    /// 2-bus closed-form boundary: collapsed iff l1^2 + 4 l2 - 4 > 0.
    static CollapseClassifier analytic_two_bus();
    /// Collapsed iff Newton from `warm_state` fails (no convergence or singular Jacobian).
    static CollapseClassifier power_flow(ModelPtr model, Vector warm_state, NewtonOptions options = {});
    static CollapseClassifier custom(std::function<bool(const Vector&)> collapsed);

    [[nodiscard]] bool collapsed(const Vector& lambda) const;
    [[nodiscard]] Mode mode() const noexcept { return mode_; }

  private:
    Mode mode_ = Mode::Analytic;
    ModelPtr model_;
    Vector warm_state_;
    NewtonOptions options_;
    std::function<bool(const Vector&)> predicate_;
};

struct SamplingOptions {
    std::size_t samples = 0;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    std::size_t block_size = 4096;  // draws per random stream
    double degenerate_ess_fraction = 0.01;
};

/// Fraction of collapsed draws; std_error = sqrt(p(1 - p) / n).
ProbabilityEstimate monte_carlo(const Uncertainty& dist, const CollapseClassifier& classifier,
                                const SamplingOptions& options);

/// Plain (not self-normalized) importance sampling with weights
/// density(dist) / density(proposal).
ProbabilityEstimate importance_sampling(const Uncertainty& dist, const Uncertainty& proposal,
                                        const CollapseClassifier& classifier,
                                        const SamplingOptions& options);

/// N(lambda*, Sigma): target covariance, mean moved to the instanton.
GaussianModel gaussian_is_proposal(const GaussianModel& g, const Vector& lambda_star);

/// One component per target component (same weights and covariances), each
/// centered at the Mahalanobis projection of mu_i on the tangent hyperplane.
GaussianMixtureModel mixture_is_proposal(const GaussianMixtureModel& gmm, const Vector& lambda_star,
                                         const Vector& normal);

}  // namespace collapse
