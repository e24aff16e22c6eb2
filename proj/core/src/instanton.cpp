#include "collapse/instanton.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "collapse/error.hpp"

namespace collapse {

namespace {

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

void require_dims(const PowerFlowModel& model, Index m_dist, const KktPoint& z, bool with_eta) {
    const Index n = model.state_dim();
    const Index m = model.param_dim();
    std::ostringstream msg;
    if (m_dist != m) msg << "distribution dimension " << m_dist << " differs from parameter dimension " << m;
    else if (z.x.size() != n) msg << "x has length " << z.x.size() << ", expected " << n;
    else if (z.lambda.size() != m) msg << "lambda has length " << z.lambda.size() << ", expected " << m;
    else if (z.w.size() != n) msg << "w has length " << z.w.size() << ", expected " << n;
    else if (with_eta && (!z.eta || z.eta->size() != m)) msg << "eta missing or not of length " << m;
    const std::string text = msg.str();
    if (!text.empty()) throw Error(ErrorCode::DimensionMismatch, text);
}

// Blocks shared by both systems: f and f_x^T w with their derivatives.
void fill_common_jacobian(const PowerFlowModel& model, const KktPoint& z, Matrix& J) {
    const Index n = model.state_dim();
    const Index m = model.param_dim();
    const Matrix fx = model.state_jacobian(z.x, z.lambda);
    const Matrix fl = model.param_jacobian(z.x, z.lambda);
    J.block(0, 0, n, n) = fx;
    J.block(0, n, n, m) = fl;
    J.block(n, 0, n, n) = eval_weighted_hessian(model, z.x, z.lambda, z.w);
    J.block(n, n + m, n, n) = fx.transpose();
    const Vector N = fl.transpose() * z.w;
    J.block(2 * n + m + (z.eta ? m : 0), n + m, 1, n) = 2.0 * (fl * N).transpose();
}

struct NewtonSystem {
    std::function<Vector(const KktPoint&)> residual;
    std::function<Matrix(const KktPoint&)> jacobian;
};

InstantonSolution newton(const NewtonSystem& sys, KktPoint z, Index n, Index m, const KktOptions& opt) {
    const bool with_eta = z.eta.has_value();
    InstantonSolution sol;
    Vector G = sys.residual(z);
    double merit = G.norm();

    for (int it = 0;; ++it) {
        sol.iterations = it;
        const double res = inf_norm(G);
        sol.residual_trace.push_back(res);
        if (!std::isfinite(res)) throw Error(ErrorCode::NoConvergence, "KKT residual is not finite");
        if (res <= opt.tolerance) break;
        if (it == opt.max_iterations) {
            std::ostringstream msg;
            msg << "KKT Newton stopped after " << it << " iterations with residual " << res;
            throw Error(ErrorCode::NoConvergence, msg.str());
        }

        const Eigen::PartialPivLU<Matrix> lu(sys.jacobian(z));
        const double rcond = lu.rcond();
        if (!(rcond > opt.singular_rcond)) {
            std::ostringstream msg;
            msg << "KKT Jacobian is singular (rcond " << rcond << ")";
            throw Error(ErrorCode::SingularKKTJacobian, msg.str());
        }
        const Vector flat = pack(z);
        const Vector step = lu.solve(-G);
        if (inf_norm(step) <= opt.step_tolerance * std::max(1.0, inf_norm(flat))) {
            if (res <= opt.accept_tolerance) break;
            std::ostringstream msg;
            msg << "KKT Newton step vanished with residual " << res;
            throw Error(ErrorCode::NoConvergence, msg.str());
        }

        double t = 1.0;
        KktPoint trial;
        Vector G_trial;
        for (int h = 0; h <= opt.max_halvings; ++h, t *= 0.5) {
            trial = unpack(flat + t * step, n, m, with_eta);
            G_trial = sys.residual(trial);
            if (G_trial.allFinite() && G_trial.norm() < merit) break;
        }
        z = std::move(trial);
        G = std::move(G_trial);
        merit = G.norm();
    }

    sol.residual_norm = inf_norm(G);
    sol.x = z.x;
    sol.lambda = z.lambda;
    sol.w = z.w;
    sol.k = z.k;
    sol.eta = z.eta;
    return sol;
}

// k > 0 fixes the sign of w; then N must point away from the mean.
void canonicalize(const PowerFlowModel& model, const Vector& center, InstantonSolution& sol) {
    if (sol.k < 0.0) {
        sol.w = -sol.w;
        sol.k = -sol.k;
    }
    const Vector N = model.param_jacobian(sol.x, sol.lambda).transpose() * sol.w;
    if (!(N.dot(sol.lambda - center) > 0.0)) {
        throw Error(ErrorCode::WrongSideSolution, "boundary normal points toward the mean at the solution");
    }
}

Vector dominant_direction(const Matrix& cov) {
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    Vector d = eig.eigenvectors().col(cov.rows() - 1);
    if (d.sum() < 0.0) d = -d;
    return d;
}

}  // namespace

// ---------------------------------------------------------------------------

Vector pack(const KktPoint& z) {
    const Index n = z.x.size();
    const Index m = z.lambda.size();
    const Index e = z.eta ? m : 0;
    Vector flat(2 * n + m + 1 + e);
    flat << z.x, z.lambda, z.w, z.k, (z.eta ? *z.eta : Vector());
    return flat;
}

KktPoint unpack(const Vector& flat, Index n, Index m, bool with_eta) {
    const Index expected = 2 * n + m + 1 + (with_eta ? m : 0);
    if (flat.size() != expected) {
        throw Error(ErrorCode::DimensionMismatch, "packed KKT vector has wrong length");
    }
    KktPoint z;
    z.x = flat.segment(0, n);
    z.lambda = flat.segment(n, m);
    z.w = flat.segment(n + m, n);
    z.k = flat(2 * n + m);
    if (with_eta) z.eta = flat.segment(2 * n + m + 1, m);
    return z;
}

Vector kkt_residual_gaussian(const PowerFlowModel& model, const GaussianModel& g, const KktPoint& z) {
    require_dims(model, g.dim(), z, false);
    const Index n = model.state_dim();
    const Index m = model.param_dim();
    const Matrix fl = model.param_jacobian(z.x, z.lambda);
    const Vector N = fl.transpose() * z.w;
    Vector G(2 * n + m + 1);
    G.segment(0, n) = model.residual(z.x, z.lambda);
    G.segment(n, n) = model.state_jacobian(z.x, z.lambda).transpose() * z.w;
    G.segment(2 * n, m) = z.k * rate_gradient_gaussian(g, z.lambda) - N;
    G(2 * n + m) = N.squaredNorm() - 1.0;
    return G;
}

Matrix kkt_jacobian_gaussian(const PowerFlowModel& model, const GaussianModel& g, const KktPoint& z) {
    require_dims(model, g.dim(), z, false);
    const Index n = model.state_dim();
    const Index m = model.param_dim();
    Matrix J = Matrix::Zero(2 * n + m + 1, 2 * n + m + 1);
    fill_common_jacobian(model, z, J);
    const Matrix fl = model.param_jacobian(z.x, z.lambda);
    J.block(2 * n, n, m, m) = z.k * g.inverse_covariance();
    J.block(2 * n, n + m, m, n) = -fl.transpose();
    J.block(2 * n, 2 * n + m, m, 1) = rate_gradient_gaussian(g, z.lambda);
    return J;
}

Vector kkt_residual_gmm(const PowerFlowModel& model, const GaussianMixtureModel& gmm, const KktPoint& z) {
    require_dims(model, gmm.dim(), z, true);
    const Index n = model.state_dim();
    const Index m = model.param_dim();
    const Vector N = model.param_jacobian(z.x, z.lambda).transpose() * z.w;
    Vector G(2 * n + 2 * m + 1);
    G.segment(0, n) = model.residual(z.x, z.lambda);
    G.segment(n, n) = model.state_jacobian(z.x, z.lambda).transpose() * z.w;
    G.segment(2 * n, m) = z.k * N - *z.eta;
    G.segment(2 * n + m, m) = cgf_gradient(gmm, *z.eta) - z.lambda;
    G(2 * n + 2 * m) = N.squaredNorm() - 1.0;
    return G;
}

Matrix kkt_jacobian_gmm(const PowerFlowModel& model, const GaussianMixtureModel& gmm, const KktPoint& z) {
    require_dims(model, gmm.dim(), z, true);
    const Index n = model.state_dim();
    const Index m = model.param_dim();
    const Index size = 2 * n + 2 * m + 1;
    Matrix J = Matrix::Zero(size, size);
    fill_common_jacobian(model, z, J);
    const Matrix fl = model.param_jacobian(z.x, z.lambda);
    const Index eta_col = 2 * n + m + 1;
    J.block(2 * n, n + m, m, n) = z.k * fl.transpose();
    J.block(2 * n, 2 * n + m, m, 1) = fl.transpose() * z.w;
    J.block(2 * n, eta_col, m, m) = -Matrix::Identity(m, m);
    J.block(2 * n + m, n, m, m) = -Matrix::Identity(m, m);
    J.block(2 * n + m, eta_col, m, m) = cgf_hessian(gmm, *z.eta);
    return J;
}

InstantonSolution solve_instanton_gaussian(const PowerFlowModel& model, const GaussianModel& g,
                                           const KktPoint& init, const KktOptions& options) {
    KktPoint z = init;
    z.eta.reset();
    require_dims(model, g.dim(), z, false);
    const NewtonSystem sys{[&](const KktPoint& p) { return kkt_residual_gaussian(model, g, p); },
                           [&](const KktPoint& p) { return kkt_jacobian_gaussian(model, g, p); }};
    InstantonSolution sol = newton(sys, std::move(z), model.state_dim(), model.param_dim(), options);
    canonicalize(model, g.mean(), sol);
    sol.rate = rate_gaussian(g, sol.lambda);
    return sol;
}

InstantonSolution solve_instanton_gmm(const PowerFlowModel& model, const GaussianMixtureModel& gmm,
                                      const KktPoint& init, const KktOptions& options) {
    KktPoint z = init;
    if (!z.eta) z.eta = gmm.covariance().llt().solve(z.lambda - gmm.mean());
    require_dims(model, gmm.dim(), z, true);
    const NewtonSystem sys{[&](const KktPoint& p) { return kkt_residual_gmm(model, gmm, p); },
                           [&](const KktPoint& p) { return kkt_jacobian_gmm(model, gmm, p); }};
    InstantonSolution sol = newton(sys, std::move(z), model.state_dim(), model.param_dim(), options);
    canonicalize(model, gmm.mean(), sol);
    sol.rate = rate_gmm(gmm, sol.lambda, *sol.eta);
    return sol;
}

InstantonSolution solve_instanton(const PowerFlowModel& model, const Uncertainty& dist, const KktPoint& init,
                                  const KktOptions& options) {
    if (const auto* g = std::get_if<GaussianModel>(&dist)) return solve_instanton_gaussian(model, *g, init, options);
    return solve_instanton_gmm(model, std::get<GaussianMixtureModel>(dist), init, options);
}

// ---------------------------------------------------------------------------

namespace {

struct Bracket {
    double t_ok = 0.0;
    double t_bad = 0.0;
    Vector x_ok;
};

Bracket bracket_ray(const PowerFlowModel& model, const Vector& center, const Vector& d, const Vector& x_nominal,
                    const InitOptions& options) {
    Bracket b;
    b.x_ok = x_nominal;
    b.t_bad = -1.0;
    const double scale = std::max(1.0, center.norm());
    double h = 1e-2 * scale;
    while (b.t_bad < 0.0) {
        const double t = std::min(b.t_ok + h, options.max_t);
        const PowerFlowResult pf = solve_power_flow(model, center + t * d, b.x_ok, options.power_flow);
        if (pf.converged()) {
            b.t_ok = t;
            b.x_ok = pf.x;
            if (t >= options.max_t) {
                std::ostringstream msg;
                msg << "power flow still solvable at t = " << t << " along the initialization ray";
                throw Error(ErrorCode::NoBoundaryFound, msg.str());
            }
            h = std::min(2.0 * h, 0.25 * scale);
        } else {
            b.t_bad = t;
        }
    }
    while (b.t_bad - b.t_ok > options.bracket_tolerance) {
        const double t = 0.5 * (b.t_ok + b.t_bad);
        const PowerFlowResult pf = solve_power_flow(model, center + t * d, b.x_ok, options.power_flow);
        if (pf.converged()) {
            b.t_ok = t;
            b.x_ok = pf.x;
        } else {
            b.t_bad = t;
        }
    }
    return b;
}

// Left singular vector of f_x, signed along d and scaled so |f_lambda^T w| = 1.
Vector boundary_weight(const PowerFlowModel& model, const Vector& x, const Vector& lambda, const Vector& d) {
    const Eigen::JacobiSVD<Matrix> svd(model.state_jacobian(x, lambda), Eigen::ComputeFullU);
    Vector w = svd.matrixU().col(model.state_dim() - 1);
    const Vector N = model.param_jacobian(x, lambda).transpose() * w;
    if (N.dot(d) < 0.0) w = -w;
    const double nn = N.norm();
    return nn > 0.0 ? Vector(w / nn) : w;
}

}  // namespace

InstantonInit initialize_from_nominal(const PowerFlowModel& model, const Uncertainty& dist,
                                      const InitOptions& options) {
    const Index m = model.param_dim();
    if (dim(dist) != m) throw Error(ErrorCode::DimensionMismatch, "distribution dimension differs from model");
    const Vector center = mean(dist);
    const Matrix cov = covariance(dist);

    Vector d = options.direction ? *options.direction : dominant_direction(cov);
    if (d.size() != m || !(d.norm() > 0.0)) {
        throw Error(ErrorCode::DimensionMismatch, "initialization direction has wrong length or is zero");
    }
    d.normalize();

    const PowerFlowResult nominal = solve_power_flow(model, center, model.flat_start(), options.power_flow);
    if (!nominal.converged()) throw Error(ErrorCode::NominalInfeasible, "power flow does not solve at the mean");

    Bracket b = bracket_ray(model, center, d, nominal.x, options);
    Vector w = boundary_weight(model, b.x_ok, center + b.t_ok * d, d);
    for (int step = 0; step < options.refine_steps; ++step) {
        const Vector N = model.param_jacobian(b.x_ok, center + b.t_ok * d).transpose() * w;
        Vector next = cov * N;
        if (!(next.norm() > 0.0)) break;
        next.normalize();
        const double change = (next - d).norm();
        d = next;
        b = bracket_ray(model, center, d, nominal.x, options);
        w = boundary_weight(model, b.x_ok, center + b.t_ok * d, d);
        if (change < 1e-6) break;
    }

    InstantonInit init;
    init.bracket_t = b.t_ok;
    init.bracket_width = b.t_bad - b.t_ok;
    init.direction = d;

    KktPoint& z = init.point;
    z.x = b.x_ok;
    z.lambda = center + b.t_ok * d;
    z.w = w;
    const Vector N = model.param_jacobian(z.x, z.lambda).transpose() * z.w;
    const Vector grad = cov.llt().solve(z.lambda - center);
    if (std::holds_alternative<GaussianModel>(dist)) {
        z.k = grad.squaredNorm() > 0.0 ? grad.dot(N) / grad.squaredNorm() : 1.0;
    } else {
        z.eta = grad;
        z.k = N.dot(grad);
    }
    return init;
}

InstantonSolution find_instanton(const PowerFlowModel& model, const Uncertainty& dist,
                                 const InitOptions& init_options, const KktOptions& options) {
    auto attempt = [&](const InitOptions& io) {
        const InstantonInit init = initialize_from_nominal(model, dist, io);
        try {
            return solve_instanton(model, dist, init.point, options);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::WrongSideSolution) throw;
        }
        KktPoint flipped = init.point;
        flipped.w = -flipped.w;
        flipped.k = -flipped.k;
        return solve_instanton(model, dist, flipped, options);
    };
    try {
        return attempt(init_options);
    } catch (const Error& e) {
        const bool newton_failed = e.code() == ErrorCode::NoConvergence || e.code() == ErrorCode::SingularKKTJacobian;
        if (!newton_failed || init_options.refine_steps >= 20) throw;
    }
    InitOptions refined = init_options;
    refined.refine_steps = 20;
    return attempt(refined);
}

KktPoint warm_start(const InstantonSolution& previous, const Uncertainty& next) {
    KktPoint z{previous.x, previous.lambda, previous.w, previous.k, std::nullopt};
    if (previous.lambda.size() != dim(next)) {
        throw Error(ErrorCode::DimensionMismatch, "warm start dimension differs from the distribution");
    }
    if (const auto* g = std::get_if<GaussianModel>(&next)) {
        // |N| = 1 fixes k once the gradient direction is known.
        const double gn = rate_gradient_gaussian(*g, z.lambda).norm();
        if (gn > 0.0) z.k = 1.0 / gn;
    } else {
        const auto& gmm = std::get<GaussianMixtureModel>(next);
        const Vector* start = previous.eta ? &*previous.eta : nullptr;
        DualSolution dual = rate_gmm_primal(gmm, z.lambda, start);
        z.k = dual.eta.norm();
        z.eta = std::move(dual.eta);
    }
    return z;
}

}  // namespace collapse
