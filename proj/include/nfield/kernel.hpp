#pragma once

#include <Eigen/Core>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nfield/grid.hpp"

namespace nf {

enum class Definiteness { non_negative, non_positive, indefinite };

std::string to_string(Definiteness d);

/// Connectivity kernel catalogue. All closed-form entries are
/// shift-invariant; `table` supplies an explicit matrix.
struct KernelSpec {
    enum class Family {
        gaussian,
        exp_sqrt,
        rational,
        sinc_product,
        cosine_sum,
        mexican_hat,
        mexican_hat2,
        mexican_hat3,
        damped_trig,
        wizard_hat,
        constant,
        table,
        custom_convolution,
    };

    Family family = Family::gaussian;
    double scale = 1.0;
    bool shift_invariant = true;

    double m = 1.0;                  // gaussian / exp_sqrt / rational
    double A = 0.0, s = 0.0;         // mexican_hat2
    double Gamma = 0.0, gamma1 = 0.0, gamma2 = 0.0;  // mexican_hat3
    double b = 0.0;                  // damped_trig
    double c = 0.0;                  // constant
    std::vector<double> cos_a;       // cosine_sum amplitudes
    std::vector<std::array<double, 2>> cos_m;  // cosine_sum frequencies
    Eigen::MatrixXd table_values;    // table
    std::vector<std::pair<double, double>> profile;  // custom_convolution (offset, J)

    std::string name() const;

    /// Kernel value at separation x - y (shift-invariant families only).
    double eval_offset(const std::array<double, 2>& r, int dim) const;

    static KernelSpec gaussian(double m = 1.0, double scale = 1.0);
    static KernelSpec exp_sqrt(double m = 1.0, double scale = 1.0);
    static KernelSpec rational(double m = 1.0, double scale = 1.0);
    static KernelSpec sinc_product(double scale = 1.0);
    static KernelSpec cosine_sum(std::vector<double> a,
                                 std::vector<std::array<double, 2>> m,
                                 double scale = 1.0);
    static KernelSpec mexican_hat(double scale = 1.0);
    static KernelSpec mexican_hat2(double A, double s, double scale = 1.0);
    static KernelSpec mexican_hat3(double Gamma, double gamma1, double gamma2,
                                   double scale = 1.0);
    static KernelSpec damped_trig(double b, double scale = 1.0);
    static KernelSpec wizard_hat(double scale = 1.0);
    static KernelSpec constant(double c, double scale = 1.0);
    static KernelSpec table(Eigen::MatrixXd values);
    static KernelSpec custom_convolution(std::vector<std::pair<double, double>> profile,
                                         double scale = 1.0);
};

namespace detail {
class FastConv;
}

/// Dense matrix realization W_ij = w(x_i, x_j) of the integral
/// operator (Ku)(x) = int w(x,y) u(y) dy on a grid. Shift-invariant
/// kernels additionally carry a zero-padded FFT convolution path that
/// matches the dense apply to roundoff.
struct KernelOperator {
    GridPtr grid;
    Eigen::MatrixXd matrix;
    bool convolutional = false;
    Eigen::VectorXd conv_offsets;  // J on the (2n-1) offset grid per axis
    std::shared_ptr<const detail::FastConv> fast;

    Eigen::Index size() const { return matrix.rows(); }
};

KernelOperator assemble(const KernelSpec& spec, GridPtr grid,
                        bool parallel = true);

Field apply(const KernelOperator& K, const Field& u);
Eigen::VectorXd apply(const KernelOperator& K, const Eigen::VectorXd& u);
Eigen::VectorXd apply_dense(const KernelOperator& K, const Eigen::VectorXd& u);
Eigen::VectorXd apply_fast(const KernelOperator& K, const Eigen::VectorXd& u);

struct NormReport {
    double norm = 0.0;  // discrete operator norm on L2(U, rho)
    std::optional<double> sqrt_kappa;    // case (i) bound
    std::optional<double> k_rho;         // case (ii) bound, C(d) := 1
    std::optional<double> k_lambda_rho;  // case (iii) bound
    bool within_bounds = true;
    std::vector<std::string> notes;
};

/// Largest singular value of the operator in rho-orthonormal
/// coordinates, plus the analytic upper bounds whose ingredients are
/// finite on this data.
NormReport operator_norm_report(const KernelOperator& K, const Weight& w);
double operator_norm(const KernelOperator& K, const Weight& w);

/// Symmetric/antisymmetric split with the definiteness verdict of the
/// quadratic form  int int  w^(x,y) u(x) u(y) rho(x) rho(y) dx dy.
struct SymDecomposition {
    GridPtr grid;
    Eigen::MatrixXd sym;      // W^
    Eigen::MatrixXd antisym;  // W~ = W - W^
    Definiteness definiteness = Definiteness::indefinite;
    double lambda_min = 0.0, lambda_max = 0.0;
    double tol = 0.0;
    // Eigen system of the symmetric form matrix G = D^{1/2} W^ D^{1/2},
    // D = diag(rho_i q_i); ascending order as returned by the solver.
    Eigen::VectorXd form_eigenvalues;
    Eigen::MatrixXd form_eigenvectors;
    Eigen::VectorXd dweights;  // rho_i q_i

    bool symmetric_kernel(double rel_tol = 1e-12) const;
};

SymDecomposition decompose(const KernelOperator& K, const Weight& w,
                           double tol = 1e-8);

}  // namespace nf
