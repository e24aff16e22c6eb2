#pragma once

#include "collapse/distributions.hpp"
#include "collapse/instanton.hpp"
#include "collapse/model.hpp"

namespace collapse {

/// Unit v minimizing |J v| (via SVD), first nonzero component positive.
/// Throws Error{NotSingular} unless sigma_min <= rel_tol * sigma_max.
Vector right_null_vector(const Matrix& J, double rel_tol = 1e-6);

/// Left counterpart: unit w minimizing |J^T w|. No singularity check.
Vector left_null_vector(const Matrix& J);

struct StateSensitivity {
    Matrix x_lambda;          // n x m
    Vector alpha;             // bordered auxiliary scalars
    Vector residuals;         // per-column bordered-solve residual norms
    double condition = 0.0;   // 2-norm condition number of the bordered matrix
};

/// Column-wise solves of [[f_x, v], [w^T f_xx(., v), 0]] [x_lj; a_j] = [-f_lj; 0].
/// Throws Error{BorderedSingular} when the condition number exceeds 1e12.
StateSensitivity compute_x_lambda(const PowerFlowModel& model, const Vector& x, const Vector& lambda,
                                  const Vector& w, const Vector& v);

struct SecondFundamentalForm {
    Matrix form;              // symmetrized m x m
    double asymmetry = 0.0;   // max |II - II^T| / max(1, max |II|) before symmetrizing
};

SecondFundamentalForm second_fundamental_form(const PowerFlowModel& model, const Vector& x,
                                              const Vector& lambda, const Vector& w,
                                              const Matrix& x_lambda);

struct BoundaryGeometry {
    Vector normal;            // N, unit length
    Vector right_null;        // v*, unit length
    Matrix x_lambda;
    Matrix second_form;       // II
    Vector alpha;
    Vector bordered_residuals;
    double bordered_condition = 0.0;
    double asymmetry = 0.0;
};

BoundaryGeometry compute_geometry(const PowerFlowModel& model, const InstantonSolution& instanton);

/// Whitening/rotation data for the second-order correction.
struct CurvatureInputs {
    Matrix rotation;          // Householder R with R^T Sigma^{-1/2}(l* - mu) along e1
    Matrix whitening;         // A = Sigma^{1/2} R
    Matrix shape;             // S = A^T II A / |A^T N|
    Vector eigenvalues;       // nu_i of the trailing block of A^T II A (first row/column removed)
    double normal_scale = 0.0;  // |A^T N|
    double alignment = 0.0;     // <A^T N / |A^T N|, e1>
    double asymmetry = 0.0;
};

/// Throws Error{AlignmentFailure} if |alignment| < 1 - alignment_tol.
CurvatureInputs curvature_correction_inputs(const GaussianModel& g, const Vector& lambda_star,
                                            const Vector& normal, const Matrix& second_form,
                                            double alignment_tol = 1e-8);

/// Power flow must fail at l* + eps N and succeed at l* - eps N,
/// eps = eps_rel * max(1, |l*|). Newton starts from `x_start` (e.g. x*).
struct OrientationCheck {
    bool outward_fails = false;
    bool inward_solves = false;
    [[nodiscard]] bool ok() const noexcept { return outward_fails && inward_solves; }
};

OrientationCheck check_orientation(const PowerFlowModel& model, const Vector& lambda_star,
                                   const Vector& normal, const Vector& x_start,
                                   double eps_rel = 1e-3, const NewtonOptions& options = {});

}  // namespace collapse
