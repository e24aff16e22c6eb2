#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "collapse/rng.hpp"
#include "collapse/types.hpp"

namespace collapse {

/// Multivariate normal N(mean, covariance) with cached factorizations.
class GaussianModel {
  public:
    /// Throws Error{InvalidDistribution} if the covariance is not symmetric
    /// positive definite or dimensions disagree.
    GaussianModel(Vector mean, Matrix covariance);

    [[nodiscard]] Index dim() const noexcept { return mean_.size(); }
    [[nodiscard]] const Vector& mean() const noexcept { return mean_; }
    [[nodiscard]] const Matrix& covariance() const noexcept { return cov_; }
    /// Symmetric square root: sqrt_covariance() * sqrt_covariance() == covariance().
    [[nodiscard]] const Matrix& sqrt_covariance() const noexcept { return sqrt_cov_; }
    [[nodiscard]] const Matrix& inv_sqrt_covariance() const noexcept { return inv_sqrt_cov_; }
    [[nodiscard]] const Matrix& inverse_covariance() const noexcept { return inv_cov_; }
    [[nodiscard]] const Matrix& cholesky_factor() const noexcept { return chol_; }
    [[nodiscard]] double log_det() const noexcept { return log_det_; }

    /// N(mean, c * covariance).
    [[nodiscard]] GaussianModel scaled(double c) const;

    /// Draw using the Cholesky transform of standard normals.
    Vector draw(Rng& rng) const;

  private:
    Vector mean_;
    Matrix cov_;
    Matrix chol_;
    Matrix sqrt_cov_;
    Matrix inv_sqrt_cov_;
    Matrix inv_cov_;
    double log_det_ = 0.0;
};

double rate_gaussian(const GaussianModel& g, const Vector& lambda);
Vector rate_gradient_gaussian(const GaussianModel& g, const Vector& lambda);
double log_density(const GaussianModel& g, const Vector& lambda);

struct MixtureComponent {
    double weight;
    GaussianModel gaussian;
};

class GaussianMixtureModel {
  public:
    /// Weights must be positive and sum to 1 within 1e-12; components share a dimension.
    explicit GaussianMixtureModel(std::vector<MixtureComponent> components);

    [[nodiscard]] Index dim() const noexcept { return components_.front().gaussian.dim(); }
    [[nodiscard]] std::size_t size() const noexcept { return components_.size(); }
    [[nodiscard]] const std::vector<MixtureComponent>& components() const noexcept { return components_; }
    [[nodiscard]] const MixtureComponent& component(std::size_t i) const { return components_.at(i); }

    /// Mixture mean sum_i pi_i mu_i.
    [[nodiscard]] Vector mean() const;
    /// Pooled (total) covariance of the mixture.
    [[nodiscard]] Matrix covariance() const;

    /// Every component covariance multiplied by c.
    [[nodiscard]] GaussianMixtureModel scaled(double c) const;

    Vector draw(Rng& rng) const;

  private:
    std::vector<MixtureComponent> components_;
};

/// Normalized component responsibilities rho_i(eta) / sum_j rho_j(eta),
/// rho_i(eta) = pi_i exp(eta^T mu_i + eta^T Sigma_i eta / 2).
Vector cgf_weights(const GaussianMixtureModel& gmm, const Vector& eta);

/// S(eta) = log sum_i rho_i(eta), max-shifted.
double cgf(const GaussianMixtureModel& gmm, const Vector& eta);
Vector cgf_gradient(const GaussianMixtureModel& gmm, const Vector& eta);
Matrix cgf_hessian(const GaussianMixtureModel& gmm, const Vector& eta);

/// Legendre value eta^T lambda - S(eta) at a dual-consistent pair.
/// Throws Error{DualMismatch} if |grad S(eta) - lambda|_inf > tolerance.
double rate_gmm(const GaussianMixtureModel& gmm, const Vector& lambda, const Vector& eta,
                double tolerance = 1e-8);

struct DualSolution {
    Vector eta;
    double rate = 0.0;
    int iterations = 0;
};

/// Rate function I(lambda) = sup_eta eta^T lambda - S(eta), evaluated by a
/// damped Newton ascent on the concave dual objective.
DualSolution rate_gmm_primal(const GaussianMixtureModel& gmm, const Vector& lambda,
                             const Vector* eta_start = nullptr);

double log_density(const GaussianMixtureModel& gmm, const Vector& lambda);

// ---------------------------------------------------------------------------

using Uncertainty = std::variant<GaussianModel, GaussianMixtureModel>;

Index dim(const Uncertainty& u);
Vector mean(const Uncertainty& u);
Matrix covariance(const Uncertainty& u);
Uncertainty scaled(const Uncertainty& u, double c);
double log_density(const Uncertainty& u, const Vector& lambda);
Vector draw(const Uncertainty& u, Rng& rng);

/// `count` draws as the columns of an m x count matrix, from stream `stream`.
Matrix sample(const Uncertainty& u, std::size_t count, std::uint64_t seed, std::uint64_t stream = 0);

}  // namespace collapse
