#include "collapse/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "collapse/error.hpp"

namespace collapse {

namespace {

void fix_sign(Vector& v) {
    for (Index i = 0; i < v.size(); ++i) {
        if (std::abs(v(i)) > 1e-14) {
            if (v(i) < 0.0) v = -v;
            return;
        }
    }
}

double relative_asymmetry(const Matrix& M) {
    if (M.size() == 0) return 0.0;
    return (M - M.transpose()).cwiseAbs().maxCoeff() / std::max(1.0, M.cwiseAbs().maxCoeff());
}

}  // namespace

Vector right_null_vector(const Matrix& J, double rel_tol) {
    if (J.rows() != J.cols() || J.rows() == 0) {
        throw Error(ErrorCode::DimensionMismatch, "null vector requires a non-empty square matrix");
    }
    const Eigen::JacobiSVD<Matrix> svd(J, Eigen::ComputeFullV);
    const Vector& s = svd.singularValues();
    const double smax = s(0);
    const double smin = s(s.size() - 1);
    if (!(smin <= rel_tol * smax)) {
        std::ostringstream msg;
        msg << "matrix is not numerically singular (sigma_min/sigma_max = " << smin / smax << ")";
        throw Error(ErrorCode::NotSingular, msg.str());
    }
    Vector v = svd.matrixV().col(J.cols() - 1);
    fix_sign(v);
    return v;
}

Vector left_null_vector(const Matrix& J) {
    if (J.rows() != J.cols() || J.rows() == 0) {
        throw Error(ErrorCode::DimensionMismatch, "null vector requires a non-empty square matrix");
    }
    const Eigen::JacobiSVD<Matrix> svd(J, Eigen::ComputeFullU);
    Vector w = svd.matrixU().col(J.rows() - 1);
    fix_sign(w);
    return w;
}

StateSensitivity compute_x_lambda(const PowerFlowModel& model, const Vector& x, const Vector& lambda,
                                  const Vector& w, const Vector& v) {
    const Index n = model.state_dim();
    const Index m = model.param_dim();
    if (v.size() != n) throw Error(ErrorCode::DimensionMismatch, "right null vector has wrong length");

    Matrix M = Matrix::Zero(n + 1, n + 1);
    M.topLeftCorner(n, n) = eval_fx(model, x, lambda);
    M.topRightCorner(n, 1) = v;
    M.bottomLeftCorner(1, n) = eval_weighted_fxx_row(model, x, lambda, w, v).transpose();

    StateSensitivity out;
    const Eigen::JacobiSVD<Matrix> svd(M);
    const Vector& s = svd.singularValues();
    out.condition = s(n) > 0.0 ? s(0) / s(n) : std::numeric_limits<double>::infinity();
    if (!(out.condition <= 1e12)) {
        std::ostringstream msg;
        msg << "bordered matrix is singular (condition " << out.condition << ")";
        throw Error(ErrorCode::BorderedSingular, msg.str());
    }

    const Matrix fl = eval_flambda(model, x, lambda);
    Matrix rhs = Matrix::Zero(n + 1, m);
    rhs.topRows(n) = -fl;
    const Eigen::FullPivLU<Matrix> lu(M);
    const Matrix sol = lu.solve(rhs);

    out.x_lambda = sol.topRows(n);
    out.alpha = sol.row(n).transpose();
    out.residuals.resize(m);
    for (Index j = 0; j < m; ++j) out.residuals(j) = (M * sol.col(j) - rhs.col(j)).norm();
    return out;
}

SecondFundamentalForm second_fundamental_form(const PowerFlowModel& model, const Vector& x,
                                              const Vector& lambda, const Vector& w,
                                              const Matrix& x_lambda) {
    const Index m = model.param_dim();
    if (x_lambda.rows() != model.state_dim() || x_lambda.cols() != m) {
        throw Error(ErrorCode::DimensionMismatch, "x_lambda has wrong shape");
    }
    Matrix II(m, m);
    for (Index l = 0; l < m; ++l) {
        const Vector row = eval_weighted_fxx_row(model, x, lambda, w, x_lambda.col(l));
        II.col(l) = x_lambda.transpose() * row;
    }
    SecondFundamentalForm out;
    out.asymmetry = relative_asymmetry(II);
    out.form = 0.5 * (II + II.transpose());
    return out;
}

BoundaryGeometry compute_geometry(const PowerFlowModel& model, const InstantonSolution& instanton) {
    const Vector& x = instanton.x;
    const Vector& lambda = instanton.lambda;
    BoundaryGeometry g;
    g.normal = eval_flambda(model, x, lambda).transpose() * instanton.w;
    g.right_null = right_null_vector(eval_fx(model, x, lambda));
    StateSensitivity sens = compute_x_lambda(model, x, lambda, instanton.w, g.right_null);
    SecondFundamentalForm II = second_fundamental_form(model, x, lambda, instanton.w, sens.x_lambda);
    g.x_lambda = std::move(sens.x_lambda);
    g.alpha = std::move(sens.alpha);
    g.bordered_residuals = std::move(sens.residuals);
    g.bordered_condition = sens.condition;
    g.second_form = std::move(II.form);
    g.asymmetry = II.asymmetry;
    return g;
}

CurvatureInputs curvature_correction_inputs(const GaussianModel& g, const Vector& lambda_star,
                                            const Vector& normal, const Matrix& second_form,
                                            double alignment_tol) {
    const Index m = g.dim();
    if (lambda_star.size() != m || normal.size() != m || second_form.rows() != m || second_form.cols() != m) {
        throw Error(ErrorCode::DimensionMismatch, "curvature inputs disagree in dimension");
    }
    CurvatureInputs out;
    Vector u = g.inv_sqrt_covariance() * (lambda_star - g.mean());
    const double un = u.norm();
    if (!(un > 0.0)) throw Error(ErrorCode::AlignmentFailure, "instanton coincides with the mean");
    u /= un;

    Vector h = u - Vector::Unit(m, 0);
    const double hn = h.squaredNorm();
    out.rotation = Matrix::Identity(m, m);
    if (hn > 1e-28) out.rotation -= 2.0 * h * h.transpose() / hn;
    out.whitening = g.sqrt_covariance() * out.rotation;

    const Vector an = out.whitening.transpose() * normal;
    out.normal_scale = an.norm();
    out.alignment = out.normal_scale > 0.0 ? an(0) / out.normal_scale : 0.0;
    if (!(std::abs(out.alignment) >= 1.0 - alignment_tol)) {
        std::ostringstream msg;
        msg << "A^T N is not aligned with e1 (cosine " << out.alignment << ")";
        throw Error(ErrorCode::AlignmentFailure, msg.str());
    }

    const Matrix curv = out.whitening.transpose() * second_form * out.whitening;
    out.shape = curv / out.normal_scale;
    const Matrix block = curv.bottomRightCorner(m - 1, m - 1);
    out.asymmetry = relative_asymmetry(block);
    if (m > 1) {
        const Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (block + block.transpose()), Eigen::EigenvaluesOnly);
        out.eigenvalues = eig.eigenvalues();
    } else {
        out.eigenvalues.resize(0);
    }
    return out;
}

OrientationCheck check_orientation(const PowerFlowModel& model, const Vector& lambda_star,
                                   const Vector& normal, const Vector& x_start, double eps_rel,
                                   const NewtonOptions& options) {
    const double eps = eps_rel * std::max(1.0, lambda_star.norm());
    const Eigen::JacobiSVD<Matrix> svd(eval_fx(model, x_start, lambda_star), Eigen::ComputeFullV);
    const Vector v = svd.matrixV().col(model.state_dim() - 1);
    // Near a fold the two branches sit O(sqrt(eps)) away along v.
    const double delta = std::sqrt(eps);
    const Vector starts[3] = {x_start, x_start + delta * v, x_start - delta * v};

    auto solvable = [&](const Vector& lambda) {
        return std::any_of(std::begin(starts), std::end(starts), [&](const Vector& x0) {
            return solve_power_flow(model, lambda, x0, options).converged();
        });
    };
    OrientationCheck out;
    out.outward_fails = !solvable(lambda_star + eps * normal);
    out.inward_solves = solvable(lambda_star - eps * normal);
    return out;
}

}  // namespace collapse
