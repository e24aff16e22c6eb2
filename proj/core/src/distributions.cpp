#include "collapse/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "collapse/error.hpp"

namespace collapse {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void require_dim(Index actual, Index expected, const char* what) {
    if (actual != expected) {
        std::ostringstream msg;
        msg << what << " has dimension " << actual << ", expected " << expected;
        throw Error(ErrorCode::DimensionMismatch, msg.str());
    }
}

double log_sum_exp(const Vector& e) {
    const double top = e.maxCoeff();
    return top + std::log((e.array() - top).exp().sum());
}

// log rho_i(eta) for every component.
Vector cgf_exponents(const GaussianMixtureModel& gmm, const Vector& eta) {
    require_dim(eta.size(), gmm.dim(), "eta");
    Vector e(static_cast<Index>(gmm.size()));
    for (std::size_t i = 0; i < gmm.size(); ++i) {
        const auto& c = gmm.component(i);
        e(static_cast<Index>(i)) = std::log(c.weight) + eta.dot(c.gaussian.mean()) +
                                   0.5 * eta.dot(c.gaussian.covariance() * eta);
    }
    return e;
}

}  // namespace

GaussianModel::GaussianModel(Vector mean, Matrix covariance)
    : mean_(std::move(mean)), cov_(std::move(covariance)) {
    const Index m = mean_.size();
    if (m == 0) throw Error(ErrorCode::InvalidDistribution, "empty mean vector");
    if (cov_.rows() != m || cov_.cols() != m) {
        std::ostringstream msg;
        msg << "covariance is " << cov_.rows() << "x" << cov_.cols() << ", expected " << m << "x" << m;
        throw Error(ErrorCode::InvalidDistribution, msg.str());
    }
    if (!mean_.allFinite() || !cov_.allFinite()) {
        throw Error(ErrorCode::InvalidDistribution, "non-finite mean or covariance");
    }
    const double scale = std::max(1.0, cov_.cwiseAbs().maxCoeff());
    if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw Error(ErrorCode::InvalidDistribution, "covariance is not symmetric");
    }
    cov_ = 0.5 * (cov_ + cov_.transpose());

    const Eigen::LLT<Matrix> llt(cov_);
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorCode::InvalidDistribution, "covariance is not positive definite");
    }
    chol_ = llt.matrixL();
    log_det_ = 2.0 * chol_.diagonal().array().log().sum();
    inv_cov_ = llt.solve(Matrix::Identity(m, m));
    inv_cov_ = 0.5 * (inv_cov_ + inv_cov_.transpose());

    const Eigen::SelfAdjointEigenSolver<Matrix> eig(cov_);
    if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= 0.0) {
        throw Error(ErrorCode::InvalidDistribution, "covariance is not positive definite");
    }
    const Vector root = eig.eigenvalues().cwiseSqrt();
    sqrt_cov_ = eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
    inv_sqrt_cov_ = eig.eigenvectors() * root.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
}

GaussianModel GaussianModel::scaled(double c) const {
    if (!(c > 0.0)) throw Error(ErrorCode::InvalidDistribution, "covariance scale must be positive");
    return GaussianModel(mean_, c * cov_);
}

Vector GaussianModel::draw(Rng& rng) const {
    Vector z(dim());
    for (Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    return mean_ + chol_ * z;
}

double rate_gaussian(const GaussianModel& g, const Vector& lambda) {
    require_dim(lambda.size(), g.dim(), "lambda");
    const Vector y = g.cholesky_factor().triangularView<Eigen::Lower>().solve(lambda - g.mean());
    return 0.5 * y.squaredNorm();
}

Vector rate_gradient_gaussian(const GaussianModel& g, const Vector& lambda) {
    require_dim(lambda.size(), g.dim(), "lambda");
    return g.inverse_covariance() * (lambda - g.mean());
}

double log_density(const GaussianModel& g, const Vector& lambda) {
    const auto m = static_cast<double>(g.dim());
    return -0.5 * (m * kLog2Pi + g.log_det()) - rate_gaussian(g, lambda);
}

// ---------------------------------------------------------------------------

GaussianMixtureModel::GaussianMixtureModel(std::vector<MixtureComponent> components)
    : components_(std::move(components)) {
    if (components_.empty()) throw Error(ErrorCode::InvalidDistribution, "mixture has no components");
    double total = 0.0;
    for (const auto& c : components_) {
        if (!(c.weight > 0.0)) throw Error(ErrorCode::InvalidDistribution, "mixture weights must be positive");
        if (c.gaussian.dim() != components_.front().gaussian.dim()) {
            throw Error(ErrorCode::InvalidDistribution, "mixture components differ in dimension");
        }
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "mixture weights sum to " << total << ", expected 1";
        throw Error(ErrorCode::InvalidDistribution, msg.str());
    }
}

Vector GaussianMixtureModel::mean() const {
    Vector m = Vector::Zero(dim());
    for (const auto& c : components_) m += c.weight * c.gaussian.mean();
    return m;
}

Matrix GaussianMixtureModel::covariance() const {
    const Vector mbar = mean();
    Matrix cov = Matrix::Zero(dim(), dim());
    for (const auto& c : components_) {
        const Vector d = c.gaussian.mean() - mbar;
        cov += c.weight * (c.gaussian.covariance() + d * d.transpose());
    }
    return 0.5 * (cov + cov.transpose());
}

GaussianMixtureModel GaussianMixtureModel::scaled(double c) const {
    std::vector<MixtureComponent> out;
    out.reserve(components_.size());
    for (const auto& comp : components_) out.push_back({comp.weight, comp.gaussian.scaled(c)});
    return GaussianMixtureModel(std::move(out));
}

Vector GaussianMixtureModel::draw(Rng& rng) const {
    const double u = rng.uniform();
    double cumulative = 0.0;
    std::size_t pick = components_.size() - 1;
    for (std::size_t i = 0; i + 1 < components_.size(); ++i) {
        cumulative += components_[i].weight;
        if (u < cumulative) {
            pick = i;
            break;
        }
    }
    return components_[pick].gaussian.draw(rng);
}

Vector cgf_weights(const GaussianMixtureModel& gmm, const Vector& eta) {
    const Vector e = cgf_exponents(gmm, eta);
    Vector w = (e.array() - e.maxCoeff()).exp();
    return w / w.sum();
}

double cgf(const GaussianMixtureModel& gmm, const Vector& eta) {
    return log_sum_exp(cgf_exponents(gmm, eta));
}

Vector cgf_gradient(const GaussianMixtureModel& gmm, const Vector& eta) {
    const Vector w = cgf_weights(gmm, eta);
    Vector g = Vector::Zero(gmm.dim());
    for (std::size_t i = 0; i < gmm.size(); ++i) {
        const auto& c = gmm.component(i).gaussian;
        g += w(static_cast<Index>(i)) * (c.mean() + c.covariance() * eta);
    }
    return g;
}

Matrix cgf_hessian(const GaussianMixtureModel& gmm, const Vector& eta) {
    const Vector w = cgf_weights(gmm, eta);
    const Index m = gmm.dim();
    Vector g = Vector::Zero(m);
    Matrix H = Matrix::Zero(m, m);
    for (std::size_t i = 0; i < gmm.size(); ++i) {
        const auto& c = gmm.component(i).gaussian;
        const Vector mi = c.mean() + c.covariance() * eta;
        const double wi = w(static_cast<Index>(i));
        g += wi * mi;
        H += wi * (c.covariance() + mi * mi.transpose());
    }
    H -= g * g.transpose();
    return 0.5 * (H + H.transpose());
}

double rate_gmm(const GaussianMixtureModel& gmm, const Vector& lambda, const Vector& eta, double tolerance) {
    require_dim(lambda.size(), gmm.dim(), "lambda");
    const Vector grad = cgf_gradient(gmm, eta);
    const double mismatch = (grad - lambda).cwiseAbs().maxCoeff();
    if (mismatch > tolerance * std::max(1.0, lambda.cwiseAbs().maxCoeff())) {
        std::ostringstream msg;
        msg << "grad S(eta) differs from lambda by " << mismatch;
        throw Error(ErrorCode::DualMismatch, msg.str());
    }
    return eta.dot(lambda) - cgf(gmm, eta);
}

DualSolution rate_gmm_primal(const GaussianMixtureModel& gmm, const Vector& lambda, const Vector* eta_start) {
    require_dim(lambda.size(), gmm.dim(), "lambda");
    DualSolution sol;
    if (eta_start != nullptr) {
        require_dim(eta_start->size(), gmm.dim(), "eta start");
        sol.eta = *eta_start;
    } else {
        sol.eta = covariance(Uncertainty{gmm}).llt().solve(lambda - gmm.mean());
    }
    auto objective = [&](const Vector& eta) { return eta.dot(lambda) - cgf(gmm, eta); };
    double value = objective(sol.eta);
    const double tol = 1e-13 * std::max(1.0, lambda.cwiseAbs().maxCoeff());

    for (sol.iterations = 0; sol.iterations < 200; ++sol.iterations) {
        const Vector g = lambda - cgf_gradient(gmm, sol.eta);
        if (g.cwiseAbs().maxCoeff() <= tol) break;
        const Vector step = cgf_hessian(gmm, sol.eta).ldlt().solve(g);
        double t = 1.0;
        bool moved = false;
        for (int h = 0; h < 40; ++h, t *= 0.5) {
            const Vector trial = sol.eta + t * step;
            const double v = objective(trial);
            if (v >= value) {
                sol.eta = trial;
                value = v;
                moved = true;
                break;
            }
        }
        if (!moved) break;
    }
    sol.rate = value;
    return sol;
}

double log_density(const GaussianMixtureModel& gmm, const Vector& lambda) {
    Vector e(static_cast<Index>(gmm.size()));
    for (std::size_t i = 0; i < gmm.size(); ++i) {
        const auto& c = gmm.component(i);
        e(static_cast<Index>(i)) = std::log(c.weight) + log_density(c.gaussian, lambda);
    }
    return log_sum_exp(e);
}

// ---------------------------------------------------------------------------

Index dim(const Uncertainty& u) {
    return std::visit([](const auto& d) { return d.dim(); }, u);
}

Vector mean(const Uncertainty& u) {
    return std::visit([](const auto& d) -> Vector { return d.mean(); }, u);
}

Matrix covariance(const Uncertainty& u) {
    return std::visit([](const auto& d) -> Matrix { return d.covariance(); }, u);
}

Uncertainty scaled(const Uncertainty& u, double c) {
    return std::visit([c](const auto& d) -> Uncertainty { return d.scaled(c); }, u);
}

double log_density(const Uncertainty& u, const Vector& lambda) {
    return std::visit([&](const auto& d) { return log_density(d, lambda); }, u);
}

Vector draw(const Uncertainty& u, Rng& rng) {
    return std::visit([&](const auto& d) { return d.draw(rng); }, u);
}

Matrix sample(const Uncertainty& u, std::size_t count, std::uint64_t seed, std::uint64_t stream) {
    Rng rng(seed, stream);
    Matrix out(dim(u), static_cast<Index>(count));
    for (Index j = 0; j < out.cols(); ++j) out.col(j) = draw(u, rng);
    return out;
}

}  // namespace collapse
