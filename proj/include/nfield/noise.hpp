#pragma once

#include <Eigen/Core>
#include <memory>
#include <optional>
#include <vector>

#include "nfield/activation.hpp"
#include "nfield/kernel.hpp"
#include "nfield/nonlocal.hpp"

namespace nf {

/// Noise coefficient B : H -> L2(V, H) over a finite mode truncation
/// of the cylindrical Wiener process.
///
/// additive          B(u) xi = sum_k sigma_k xi_k phi_k
/// pointwise         B(u) xi | node i  =  b(u_i) xi_i  (node-indexed modes)
/// kernel_mollified  B(u) xi = (1/sqrt(N)) K( sqrt(f(u)) * white synthesis ),
///                   the discrete form of  w(x,y) sqrt(f(u(y))) dW(t,dy).
struct NoiseModel {
    enum class Kind { additive, pointwise, kernel_mollified };

    Kind kind = Kind::additive;
    GridPtr grid;
    int m_modes = 0;

    // additive
    Eigen::VectorXd sigma;
    Eigen::MatrixXd modes;  // n x m, one mode field per column

    // pointwise: b(x) = b_scale * base(x) + b_offset
    Activation pointwise_base = Activation::constant(0.0);
    double b_scale = 0.0, b_offset = 0.0;

    // kernel_mollified
    std::shared_ptr<const KernelOperator> kernel;
    Activation rate = Activation::logistic();
    double population = 1.0;

    static NoiseModel additive(GridPtr grid, Eigen::VectorXd sigma,
                               Eigen::MatrixXd modes);
    static NoiseModel pointwise(GridPtr grid, Activation base, double scale,
                                double offset = 0.0);
    static NoiseModel kernel_mollified(std::shared_ptr<const KernelOperator> K,
                                       Activation rate, double population);

    double b_map(double x) const { return b_scale * pointwise_base(x) + b_offset; }
};

Field apply_noise(const NoiseModel& B, const Field& u, const Eigen::VectorXd& xi,
                  const Weight& w);
Eigen::VectorXd apply_noise(const NoiseModel& B, const Eigen::VectorXd& u,
                            const Eigen::VectorXd& xi, const Weight& w);

/// Hilbert-Schmidt norm ||B(u)||_{L2(V,H)} over the mode truncation.
double hs_norm(const NoiseModel& B, const Eigen::VectorXd& u, const Weight& w);

/// ||B(u)||_{L2(V,H1)}: mode images measured in the nonlocal norm after
/// projection. `residual` (if given) receives the worst relative
/// off-subspace component over the modes.
double hs_norm_h1(const NoiseModel& B, const Eigen::VectorXd& u, const Weight& w,
                  const NonlocalMetric& m, double* residual = nullptr);

struct NoiseConstants {
    double c_b = 0.0;        // Lipschitz constant of B
    double b0 = 0.0;         // ||B(0)||_{L2(V,H)}
    bool c_b_exact = true;
    double audit_max_ratio = 0.0;
    bool audit_violated = false;

    std::optional<double> c_b_h1;        // C~_B
    std::optional<double> c_b_h1_const;  // C~~_B
    bool h1_exact = false;
    double h1_fit_residual = 0.0;  // max envelope residual over samples
    double h1_mode_residual = 0.0; // worst off-H1 component of mode images
};

/// C_B exactly where a closed form exists (additive: 0, pointwise:
/// Lip(b)); for kernel_mollified the analytic bound ||K|| Lip(sqrt f) /
/// sqrt(N) audited against sampled ratios. H1 constants are an affine
/// envelope fit over random u in H1 when a metric is supplied.
NoiseConstants estimate_constants(const NoiseModel& B, const Weight& w,
                                  const NonlocalMetric* metric, int trials,
                                  std::uint64_t seed);

}  // namespace nf
