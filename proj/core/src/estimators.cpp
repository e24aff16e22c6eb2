#include "collapse/estimators.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <numbers>
#include <cmath>
#include <sstream>
#include <thread>

#include "collapse/error.hpp"

namespace collapse {

namespace {

void require_dim(Index actual, Index expected, const char* what) {
    if (actual != expected) {
        std::ostringstream msg;
        msg << what << " has dimension " << actual << ", expected " << expected;
        throw Error(ErrorCode::DimensionMismatch, msg.str());
    }
}

// Runs body(block) for every block, spreading blocks over `jobs` threads.
// Each block writes only its own slot, so the merge order is fixed.
template <class Body>
void for_each_block(std::size_t blocks, unsigned jobs, const Body& body) {
    const auto workers = static_cast<std::size_t>(std::max(1U, jobs));
    if (workers == 1 || blocks <= 1) {
        for (std::size_t b = 0; b < blocks; ++b) body(b);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&]() {
        for (std::size_t b = next++; b < blocks; b = next++) {
            try {
                body(b);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t spawn = std::min(workers, blocks);
    pool.reserve(spawn);
    for (std::size_t t = 0; t < spawn; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

std::size_t block_count(const SamplingOptions& options) {
    if (options.samples == 0) throw Error(ErrorCode::InvalidExperiment, "sample count must be at least 1");
    if (options.block_size == 0) throw Error(ErrorCode::InvalidExperiment, "block size must be at least 1");
    return (options.samples + options.block_size - 1) / options.block_size;
}

std::size_t block_length(const SamplingOptions& options, std::size_t block) {
    return std::min(options.block_size, options.samples - block * options.block_size);
}

}  // namespace

std::string_view to_string(Method method) {
    switch (method) {
        case Method::LDT1: return "LDT1";
        case Method::LDT2: return "LDT2";
        case Method::GMM_LDT1: return "GMM-LDT1";
        case Method::GMM_LDT2: return "GMM-LDT2";
        case Method::MC: return "MC";
        case Method::IS: return "IS";
    }
    return "?";
}

Method method_from_string(std::string_view text) {
    for (Method m : {Method::LDT1, Method::LDT2, Method::GMM_LDT1, Method::GMM_LDT2, Method::MC, Method::IS}) {
        if (to_string(m) == text) return m;
    }
    throw Error(ErrorCode::ParseError, "unknown method '" + std::string(text) + "'");
}

double standard_normal_tail(double beta) { return 0.5 * std::erfc(beta / std::numbers::sqrt2); }

ProbabilityEstimate ldt_first_order(double rate) {
    if (!(rate >= 0.0)) throw Error(ErrorCode::InvalidDistribution, "rate must be non-negative");
    ProbabilityEstimate est;
    est.method = Method::LDT1;
    const double beta = std::sqrt(2.0 * rate);
    est.diagnostics.beta = beta;
    est.value = standard_normal_tail(beta);
    return est;
}

ProbabilityEstimate ldt_second_order(double rate, const CurvatureInputs& curvature) {
    ProbabilityEstimate est = ldt_first_order(rate);
    est.method = Method::LDT2;
    const double beta = *est.diagnostics.beta;
    double factor = 1.0;
    for (Index i = 0; i < curvature.eigenvalues.size(); ++i) {
        const double nu = curvature.eigenvalues(i);
        const double bracket = 1.0 - beta * nu / curvature.normal_scale;
        est.diagnostics.curvature_eigenvalues.push_back(nu);
        est.diagnostics.bracket_terms.push_back(bracket);
        if (!(bracket > 0.0)) {
            std::ostringstream msg;
            msg << "curvature bracket " << i + 1 << " is " << bracket;
            throw Error(ErrorCode::CurvatureBreakdown, msg.str());
        }
        factor /= std::sqrt(bracket);
    }
    est.value *= factor;
    return est;
}

ProbabilityEstimate gmm_ldt_first_order(const GaussianMixtureModel& gmm, const Vector& lambda_star,
                                        const Vector& normal) {
    require_dim(lambda_star.size(), gmm.dim(), "lambda*");
    require_dim(normal.size(), gmm.dim(), "normal");
    ProbabilityEstimate est;
    est.method = Method::GMM_LDT1;
    for (const auto& c : gmm.components()) {
        const auto& g = c.gaussian;
        const double spread = std::sqrt(normal.dot(g.covariance() * normal));
        const double term = c.weight * standard_normal_tail(normal.dot(lambda_star - g.mean()) / spread);
        est.diagnostics.component_values.push_back(term);
        est.value += term;
    }
    return est;
}

TangencyPoint gmm_tangency_point(const GaussianModel& component, const Vector& lambda_star,
                                 const Vector& normal, const Matrix& second_form) {
    const Index m = component.dim();
    require_dim(lambda_star.size(), m, "lambda*");
    require_dim(normal.size(), m, "normal");
    const Matrix& P = component.inverse_covariance();
    const Vector& mu = component.mean();

    auto q = [&](const Vector& d) { return normal.dot(d) + 0.5 * d.dot(second_form * d); };
    auto residual = [&](const Vector& lambda, double tau) {
        const Vector d = lambda - lambda_star;
        Vector r(m + 1);
        r.head(m) = P * (lambda - mu) - tau * (normal + second_form * d);
        r(m) = q(d);
        return r;
    };

    TangencyPoint tp;
    tp.lambda = mu - normal * (normal.dot(mu - lambda_star) / normal.squaredNorm());
    {
        const Vector grad = normal + second_form * (tp.lambda - lambda_star);
        tp.multiplier = grad.dot(P * (tp.lambda - mu)) / grad.squaredNorm();
    }

    const double scale = std::max(1.0, lambda_star.cwiseAbs().maxCoeff());
    Vector r = residual(tp.lambda, tp.multiplier);
    for (tp.iterations = 0;; ++tp.iterations) {
        if (r.cwiseAbs().maxCoeff() <= 1e-13 * scale) break;
        if (tp.iterations == 100) throw Error(ErrorCode::NoConvergence, "tangency-point Newton did not converge");
        const Vector grad = normal + second_form * (tp.lambda - lambda_star);
        Matrix J = Matrix::Zero(m + 1, m + 1);
        J.topLeftCorner(m, m) = P - tp.multiplier * second_form;
        J.topRightCorner(m, 1) = -grad;
        J.bottomLeftCorner(1, m) = grad.transpose();
        const Vector step = J.fullPivLu().solve(-r);
        if (!step.allFinite()) throw Error(ErrorCode::NoConvergence, "tangency-point Newton step is singular");

        double t = 1.0;
        Vector lambda_trial;
        double tau_trial = 0.0;
        Vector r_trial;
        for (int h = 0; h <= 30; ++h, t *= 0.5) {
            lambda_trial = tp.lambda + t * step.head(m);
            tau_trial = tp.multiplier + t * step(m);
            r_trial = residual(lambda_trial, tau_trial);
            if (r_trial.norm() < r.norm()) break;
        }
        if (!(r_trial.norm() < r.norm())) {
            if (r.cwiseAbs().maxCoeff() <= 1e-10 * scale) break;
            throw Error(ErrorCode::NoConvergence, "tangency-point Newton stalled");
        }
        tp.lambda = std::move(lambda_trial);
        tp.multiplier = tau_trial;
        r = std::move(r_trial);
    }

    tp.normal = normal + second_form * (tp.lambda - lambda_star);
    tp.rate = rate_gaussian(component, tp.lambda);
    tp.nonpositive_multiplier = !(tp.multiplier > 0.0);
    return tp;
}

ProbabilityEstimate gmm_ldt_second_order(const GaussianMixtureModel& gmm, const Vector& lambda_star,
                                         const Vector& normal, const Matrix& second_form,
                                         const std::vector<TangencyPoint>& tangency) {
    if (tangency.size() != gmm.size()) {
        throw Error(ErrorCode::DimensionMismatch, "one tangency point per mixture component is required");
    }
    const ProbabilityEstimate first = gmm_ldt_first_order(gmm, lambda_star, normal);
    ProbabilityEstimate est;
    est.method = Method::GMM_LDT2;
    for (std::size_t i = 0; i < gmm.size(); ++i) {
        const auto& c = gmm.component(i);
        const TangencyPoint& tp = tangency[i];
        double term = first.diagnostics.component_values[i];
        const std::string id = std::to_string(i + 1);
        if (tp.nonpositive_multiplier) {
            est.diagnostics.flags.push_back("NonpositiveMultiplier:" + id);
        } else {
            try {
                const double len = tp.normal.norm();
                const CurvatureInputs curv =
                    curvature_correction_inputs(c.gaussian, tp.lambda, tp.normal / len, second_form / len);
                const ProbabilityEstimate p2 = ldt_second_order(tp.rate, curv);
                term = c.weight * p2.value;
                for (double b : p2.diagnostics.bracket_terms) est.diagnostics.bracket_terms.push_back(b);
                for (double nu : p2.diagnostics.curvature_eigenvalues) {
                    est.diagnostics.curvature_eigenvalues.push_back(nu);
                }
            } catch (const Error& e) {
                if (e.code() != ErrorCode::CurvatureBreakdown && e.code() != ErrorCode::AlignmentFailure) throw;
                est.diagnostics.flags.push_back(std::string(to_string(e.code())) + ":" + id);
            }
        }
        est.diagnostics.component_values.push_back(term);
        est.value += term;
    }
    return est;
}

ProbabilityEstimate gmm_ldt_second_order(const GaussianMixtureModel& gmm, const Vector& lambda_star,
                                         const Vector& normal, const Matrix& second_form) {
    std::vector<TangencyPoint> tangency;
    tangency.reserve(gmm.size());
    for (const auto& c : gmm.components()) {
        tangency.push_back(gmm_tangency_point(c.gaussian, lambda_star, normal, second_form));
    }
    return gmm_ldt_second_order(gmm, lambda_star, normal, second_form, tangency);
}

// ---------------------------------------------------------------------------

CollapseClassifier CollapseClassifier::analytic_two_bus() {
    CollapseClassifier c;
    c.mode_ = Mode::Analytic;
    return c;
}

CollapseClassifier CollapseClassifier::power_flow(ModelPtr model, Vector warm_state, NewtonOptions options) {
    if (!model) throw Error(ErrorCode::InvalidNetwork, "power-flow classifier needs a model");
    require_dim(warm_state.size(), model->state_dim(), "warm state");
    CollapseClassifier c;
    c.mode_ = Mode::PowerFlow;
    c.model_ = std::move(model);
    c.warm_state_ = std::move(warm_state);
    c.options_ = options;
    return c;
}

CollapseClassifier CollapseClassifier::custom(std::function<bool(const Vector&)> collapsed) {
    CollapseClassifier c;
    c.mode_ = Mode::Custom;
    c.predicate_ = std::move(collapsed);
    return c;
}

bool CollapseClassifier::collapsed(const Vector& lambda) const {
    switch (mode_) {
        case Mode::Analytic:
            require_dim(lambda.size(), 2, "lambda");
            return lambda(0) * lambda(0) + 4.0 * lambda(1) - 4.0 > 0.0;
        case Mode::PowerFlow:
            return !solve_power_flow(*model_, lambda, warm_state_, options_).converged();
        case Mode::Custom:
            return predicate_(lambda);
    }
    return false;
}

ProbabilityEstimate monte_carlo(const Uncertainty& dist, const CollapseClassifier& classifier,
                                const SamplingOptions& options) {
    const std::size_t blocks = block_count(options);
    std::vector<std::size_t> hits(blocks, 0);
    for_each_block(blocks, options.jobs, [&](std::size_t b) {
        Rng rng(options.seed, b);
        std::size_t count = 0;
        for (std::size_t i = 0, len = block_length(options, b); i < len; ++i) {
            if (classifier.collapsed(draw(dist, rng))) ++count;
        }
        hits[b] = count;
    });

    ProbabilityEstimate est;
    est.method = Method::MC;
    const auto n = static_cast<double>(options.samples);
    for (std::size_t h : hits) est.diagnostics.collapsed_count += h;
    est.value = static_cast<double>(est.diagnostics.collapsed_count) / n;
    est.std_error = std::sqrt(est.value * (1.0 - est.value) / n);
    est.samples = options.samples;
    est.seed = options.seed;
    return est;
}

ProbabilityEstimate importance_sampling(const Uncertainty& dist, const Uncertainty& proposal,
                                        const CollapseClassifier& classifier, const SamplingOptions& options) {
    if (dim(dist) != dim(proposal)) throw Error(ErrorCode::DimensionMismatch, "proposal dimension differs");
    const std::size_t blocks = block_count(options);
    struct Partial {
        double sum = 0.0;
        double sum_sq = 0.0;
        std::size_t hits = 0;
    };
    std::vector<Partial> parts(blocks);
    for_each_block(blocks, options.jobs, [&](std::size_t b) {
        Rng rng(options.seed, b);
        Partial p;
        for (std::size_t i = 0, len = block_length(options, b); i < len; ++i) {
            const Vector lambda = draw(proposal, rng);
            if (!classifier.collapsed(lambda)) continue;
            const double w = std::exp(log_density(dist, lambda) - log_density(proposal, lambda));
            p.sum += w;
            p.sum_sq += w * w;
            ++p.hits;
        }
        parts[b] = p;
    });

    Partial total;
    for (const Partial& p : parts) {
        total.sum += p.sum;
        total.sum_sq += p.sum_sq;
        total.hits += p.hits;
    }
    ProbabilityEstimate est;
    est.method = Method::IS;
    const auto n = static_cast<double>(options.samples);
    est.value = total.sum / n;
    const double var = options.samples > 1 ? std::max(0.0, (total.sum_sq / n - est.value * est.value) * n / (n - 1.0))
                                           : 0.0;
    est.std_error = std::sqrt(var / n);
    est.samples = options.samples;
    est.seed = options.seed;
    est.diagnostics.collapsed_count = total.hits;
    const double ess = total.sum_sq > 0.0 ? total.sum * total.sum / total.sum_sq : 0.0;
    est.diagnostics.effective_sample_size = ess;
    if (ess < options.degenerate_ess_fraction * n) est.diagnostics.flags.emplace_back("DegenerateWeights");
    return est;
}

GaussianModel gaussian_is_proposal(const GaussianModel& g, const Vector& lambda_star) {
    require_dim(lambda_star.size(), g.dim(), "lambda*");
    return GaussianModel(lambda_star, g.covariance());
}

GaussianMixtureModel mixture_is_proposal(const GaussianMixtureModel& gmm, const Vector& lambda_star,
                                         const Vector& normal) {
    require_dim(lambda_star.size(), gmm.dim(), "lambda*");
    require_dim(normal.size(), gmm.dim(), "normal");
    std::vector<MixtureComponent> out;
    out.reserve(gmm.size());
    for (const auto& c : gmm.components()) {
        const Matrix& S = c.gaussian.covariance();
        const Vector& mu = c.gaussian.mean();
        const Vector center = mu + S * normal * (normal.dot(lambda_star - mu) / normal.dot(S * normal));
        out.push_back({c.weight, GaussianModel(center, S)});
    }
    return GaussianMixtureModel(std::move(out));
}

}  // namespace collapse
