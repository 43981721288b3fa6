#pragma once

#include <Eigen/Core>

#include "nfield/kernel.hpp"

namespace nf {

/// Spectral data of the definite part +-K^ defining the nonlocal
/// subspace H1 = (ker +-K^)^perp and its norm ||v||_1 = ||(+-K^)^{-1/2} v||.
///
/// Eigenpairs with lambda <= rank_tol * lambda_max are assigned to the
/// kernel; the pseudo-inverse square root is only defined on the
/// retained span, so ||(+-K^)^{-1/2}|| is reported restricted to it
/// (= 1/sqrt(lambda_rank)).
struct NonlocalMetric {
    GridPtr grid;
    int sign = +1;                 // +1: K^ non-negative, -1: non-positive
    Eigen::VectorXd eigenvalues;   // descending, strictly positive
    Eigen::MatrixXd eigenfields;   // n x rank, rho-orthonormal columns
    Eigen::VectorXd dweights;      // rho_i q_i
    int rank = 0;
    double rank_tol = 0.0;
    double sqrt_norm = 0.0;        // ||(+-K^)^{1/2}|| = sqrt(lambda_1)
    double sqrt_pinv_norm = 0.0;   // 1/sqrt(lambda_rank), restricted to H1

    /// rho-inner-product coefficients <u, e_i>_rho.
    Eigen::VectorXd coefficients(const Eigen::VectorXd& u) const;

    /// Norm of u - P1 u where P1 projects onto the retained span.
    double h1_residual(const Eigen::VectorXd& u) const;

    Eigen::VectorXd project(const Eigen::VectorXd& u) const;

    /// ||u||_1 without a membership check (used by monitors that track
    /// the residual separately).
    double h1_norm_projected(const Eigen::VectorXd& u) const;
};

NonlocalMetric build_metric(const SymDecomposition& dec, const Weight& w,
                            double rank_tol = 1e-10);

/// ||u||_1; raises SubspaceMembershipError when the projection
/// residual exceeds 1e-6 ||u||.
double h1_norm(const NonlocalMetric& m, const Field& u);

/// Spectral action lambda^{+-1/2} on coefficients. power = +1 applies
/// (+-K^)^{1/2}, power = -1 the pseudo-inverse square root (membership
/// checked).
Field sqrt_apply(const NonlocalMetric& m, const Field& u, int power);

/// Smallest mode count r with sqrt(sum_{i>r} lambda_i) * R <= eps,
/// certifying an eps-net dimension for the H1 ball of radius R in H.
int compact_ball_cover(const NonlocalMetric& m, double R, double eps);

/// Discrete operator norm of (+-K^)^{-1} K~ on H (the constant C_K~ of
/// the antisymmetric-domination assumption). Infinite when K~ maps
/// outside range(K^) by more than tolerance.
double antisym_domination(const NonlocalMetric& m, const SymDecomposition& dec,
                          double range_tol = 1e-8);

}  // namespace nf
