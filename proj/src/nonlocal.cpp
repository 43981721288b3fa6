#include "nfield/nonlocal.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>

namespace nf {

Eigen::VectorXd NonlocalMetric::coefficients(const Eigen::VectorXd& u) const {
    return eigenfields.transpose() * dweights.cwiseProduct(u);
}

Eigen::VectorXd NonlocalMetric::project(const Eigen::VectorXd& u) const {
    return eigenfields * coefficients(u);
}

double NonlocalMetric::h1_residual(const Eigen::VectorXd& u) const {
    const Eigen::VectorXd r = u - project(u);
    return std::sqrt((r.array().square() * dweights.array()).sum());
}

double NonlocalMetric::h1_norm_projected(const Eigen::VectorXd& u) const {
    const Eigen::VectorXd c = coefficients(u);
    return std::sqrt((c.array().square() / eigenvalues.array()).sum());
}

NonlocalMetric build_metric(const SymDecomposition& dec, const Weight& w,
                            double rank_tol) {
    if (dec.definiteness == Definiteness::indefinite)
        throw DefinitenessError(
            "build_metric: symmetric part is indefinite; H1 is undefined");
    require_same_grid(*dec.grid, *w.grid, "build_metric");

    NonlocalMetric m;
    m.grid = dec.grid;
    m.sign = dec.definiteness == Definiteness::non_positive ? -1 : +1;
    m.rank_tol = rank_tol;
    m.dweights = dec.dweights;

    // eigenvalues of +-G, descending
    const Eigen::Index n = dec.form_eigenvalues.size();
    Eigen::VectorXd vals(n);
    for (Eigen::Index i = 0; i < n; ++i)
        vals[i] = m.sign * dec.form_eigenvalues[i];
    double lambda_max = vals.maxCoeff();
    if (lambda_max <= 0.0)
        throw TrivialSubspaceError("build_metric: H1 = {0} (zero operator)");
    const double cut = rank_tol * lambda_max;

    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < n; ++i)
        if (vals[i] > cut) keep.push_back(i);
    if (keep.empty())
        throw TrivialSubspaceError("build_metric: no eigenvalue above rank_tol");
    std::sort(keep.begin(), keep.end(),
              [&](Eigen::Index a, Eigen::Index b) { return vals[a] > vals[b]; });

    m.rank = static_cast<int>(keep.size());
    m.eigenvalues.resize(m.rank);
    m.eigenfields.resize(n, m.rank);
    const Eigen::VectorXd inv_sqd = dec.dweights.cwiseSqrt().cwiseInverse();
    for (int k = 0; k < m.rank; ++k) {
        m.eigenvalues[k] = vals[keep[k]];
        // back-transform D^{-1/2} v to a rho-orthonormal field
        m.eigenfields.col(k) =
            inv_sqd.cwiseProduct(dec.form_eigenvectors.col(keep[k]));
        // fix an overall sign for reproducibility: largest-|entry| positive
        Eigen::Index imax;
        m.eigenfields.col(k).cwiseAbs().maxCoeff(&imax);
        if (m.eigenfields(imax, k) < 0) m.eigenfields.col(k) *= -1.0;
    }
    m.sqrt_norm = std::sqrt(m.eigenvalues[0]);
    m.sqrt_pinv_norm = 1.0 / std::sqrt(m.eigenvalues[m.rank - 1]);
    return m;
}

static void require_membership(const NonlocalMetric& m, const Eigen::VectorXd& u,
                               const char* where) {
    const double nu = std::sqrt((u.array().square() * m.dweights.array()).sum());
    const double res = m.h1_residual(u);
    if (res > 1e-6 * std::max(nu, std::numeric_limits<double>::min()))
        throw SubspaceMembershipError(
            std::string(where) + ": field lies outside H1 (residual " +
                std::to_string(res) + ")",
            res);
}

double h1_norm(const NonlocalMetric& m, const Field& u) {
    require_same_grid(*m.grid, *u.grid, "h1_norm");
    require_membership(m, u.values, "h1_norm");
    return m.h1_norm_projected(u.values);
}

Field sqrt_apply(const NonlocalMetric& m, const Field& u, int power) {
    require_same_grid(*m.grid, *u.grid, "sqrt_apply");
    if (power != +1 && power != -1)
        throw ConstraintError("sqrt_apply: power must be +1 (square root) or -1");
    if (power == -1) require_membership(m, u.values, "sqrt_apply");
    Eigen::VectorXd c = m.coefficients(u.values);
    for (int k = 0; k < m.rank; ++k) {
        const double s = std::sqrt(m.eigenvalues[k]);
        c[k] = power == +1 ? c[k] * s : c[k] / s;
    }
    return Field(u.grid, m.eigenfields * c);
}

int compact_ball_cover(const NonlocalMetric& m, double R, double eps) {
    if (!(R > 0) || !(eps > 0))
        throw ConstraintError("compact_ball_cover requires R > 0 and eps > 0");
    // tail(r) = sum_{i > r} lambda_i
    double tail = m.eigenvalues.sum();
    for (int r = 0; r <= m.rank; ++r) {
        if (std::sqrt(tail) * R <= eps) return r;
        if (r < m.rank) tail -= m.eigenvalues[r];
        if (tail < 0) tail = 0;
    }
    return m.rank;
}

double antisym_domination(const NonlocalMetric& m, const SymDecomposition& dec,
                          double range_tol) {
    // l2 coordinates: A~ = D^{1/2} W~ D^{1/2}; C_K~ = || V L^{-1} V^T A~ ||_2
    const Eigen::VectorXd sqd = dec.dweights.cwiseSqrt();
    const Eigen::MatrixXd At = sqd.asDiagonal() * dec.antisym * sqd.asDiagonal();
    const double at_norm = At.cwiseAbs().maxCoeff();
    if (at_norm == 0.0) return 0.0;  // symmetric kernel

    // V in l2 coordinates (orthonormal): D^{1/2} eigenfields
    Eigen::MatrixXd V(dec.form_eigenvectors.rows(), m.rank);
    for (int k = 0; k < m.rank; ++k)
        V.col(k) = sqd.cwiseProduct(m.eigenfields.col(k));

    const Eigen::MatrixXd C = V.transpose() * At;       // r x n
    const Eigen::MatrixXd resid = At - V * C;           // off-range part
    Eigen::BDCSVD<Eigen::MatrixXd> rs(resid);
    const double off = rs.singularValues().size() ? rs.singularValues()[0] : 0.0;
    Eigen::BDCSVD<Eigen::MatrixXd> fs(At);
    const double full = fs.singularValues()[0];
    if (off > range_tol * std::max(1.0, full))
        return std::numeric_limits<double>::infinity();

    Eigen::MatrixXd scaled = C;
    for (int k = 0; k < m.rank; ++k) scaled.row(k) /= m.eigenvalues[k];
    Eigen::BDCSVD<Eigen::MatrixXd> svd(scaled);
    return svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
}

}  // namespace nf
