#include "nfield/kernel.hpp"

#include <fftw3.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace nf {

std::string to_string(Definiteness d) {
    switch (d) {
        case Definiteness::non_negative: return "non_negative";
        case Definiteness::non_positive: return "non_positive";
        default: return "indefinite";
    }
}

// ---------------------------------------------------------------------------
// Kernel catalogue

std::string KernelSpec::name() const {
    switch (family) {
        case Family::gaussian: return "gaussian";
        case Family::exp_sqrt: return "exp_sqrt";
        case Family::rational: return "rational";
        case Family::sinc_product: return "sinc_product";
        case Family::cosine_sum: return "cosine_sum";
        case Family::mexican_hat: return "mexican_hat";
        case Family::mexican_hat2: return "mexican_hat2";
        case Family::mexican_hat3: return "mexican_hat3";
        case Family::damped_trig: return "damped_trig";
        case Family::wizard_hat: return "wizard_hat";
        case Family::constant: return "constant";
        case Family::table: return "table";
        case Family::custom_convolution: return "custom_convolution";
    }
    return "?";
}

static double interp_profile(const std::vector<std::pair<double, double>>& p,
                             double t) {
    if (p.empty() || t < p.front().first || t > p.back().first) return 0.0;
    auto it = std::lower_bound(p.begin(), p.end(), t,
                               [](const auto& a, double v) { return a.first < v; });
    if (it == p.begin()) return it->second;
    const auto [x1, y1] = *it;
    const auto [x0, y0] = *(it - 1);
    if (x1 == x0) return y0;
    return y0 + (y1 - y0) * (t - x0) / (x1 - x0);
}

double KernelSpec::eval_offset(const std::array<double, 2>& r, int dim) const {
    const double r2 = (dim == 1) ? r[0] * r[0] : r[0] * r[0] + r[1] * r[1];
    const double rn = std::sqrt(r2);
    double v = 0.0;
    switch (family) {
        case Family::gaussian:
            v = std::exp(-0.5 * m * r2);
            break;
        case Family::exp_sqrt:
            v = std::exp(-std::sqrt(m * r2));
            break;
        case Family::rational:
            v = 1.0 / (1.0 + 0.5 * m * r2);
            break;
        case Family::sinc_product: {
            v = 1.0;
            for (int a = 0; a < dim; ++a)
                v *= (r[a] == 0.0) ? 1.0 : std::sin(r[a]) / r[a];
            break;
        }
        case Family::cosine_sum: {
            v = 0.0;
            for (std::size_t i = 0; i < cos_a.size(); ++i) {
                double dot = cos_m[i][0] * r[0];
                if (dim == 2) dot += cos_m[i][1] * r[1];
                v += cos_a[i] * std::cos(dot);
            }
            break;
        }
        case Family::mexican_hat:
            v = (1.0 - r2) * std::exp(-0.5 * r2);
            break;
        case Family::mexican_hat2:
            v = std::exp(-0.5 * r2) - A * std::exp(-r2 / (s * s));
            break;
        case Family::mexican_hat3:
            v = std::exp(-gamma1 * rn) - Gamma * std::exp(-gamma2 * rn);
            break;
        case Family::damped_trig:
            v = std::exp(-b * rn) * (b * std::sin(rn) + std::cos(rn));
            break;
        case Family::wizard_hat:
            v = 0.25 * (1.0 - rn) * std::exp(-rn);
            break;
        case Family::constant:
            v = c;
            break;
        case Family::custom_convolution:
            v = (dim == 1) ? interp_profile(profile, r[0]) : interp_profile(profile, rn);
            break;
        case Family::table:
            throw ConstraintError("table kernels have no offset form");
    }
    return scale * v;
}

KernelSpec KernelSpec::gaussian(double m, double scale) {
    if (m < 0) throw ConstraintError("gaussian requires M non-negative definite (m >= 0)");
    KernelSpec k;
    k.family = Family::gaussian;
    k.m = m;
    k.scale = scale;
    return k;
}

KernelSpec KernelSpec::exp_sqrt(double m, double scale) {
    if (m < 0) throw ConstraintError("exp_sqrt requires M non-negative definite (m >= 0)");
    KernelSpec k;
    k.family = Family::exp_sqrt;
    k.m = m;
    k.scale = scale;
    return k;
}

KernelSpec KernelSpec::rational(double m, double scale) {
    if (m < 0) throw ConstraintError("rational requires M non-negative definite (m >= 0)");
    KernelSpec k;
    k.family = Family::rational;
    k.m = m;
    k.scale = scale;
    return k;
}

KernelSpec KernelSpec::sinc_product(double scale) {
    KernelSpec k;
    k.family = Family::sinc_product;
    k.scale = scale;
    return k;
}

KernelSpec KernelSpec::cosine_sum(std::vector<double> a,
                                  std::vector<std::array<double, 2>> m,
                                  double scale) {
    if (a.size() != m.size() || a.empty())
        throw ConstraintError("cosine_sum requires matching non-empty a_i, m_i lists");
    double sum = 0.0;
    for (double ai : a) {
        if (ai < 0) throw ConstraintError("cosine_sum requires a_i >= 0");
        sum += ai;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw ConstraintError("cosine_sum requires sum a_i = 1");
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = i + 1; j < m.size(); ++j) {
            const bool eq = m[i][0] == m[j][0] && m[i][1] == m[j][1];
            const bool neg = m[i][0] == -m[j][0] && m[i][1] == -m[j][1];
            if (eq || neg)
                throw ConstraintError("cosine_sum requires m_i != +-m_j for i != j");
        }
    KernelSpec k;
    k.family = Family::cosine_sum;
    k.cos_a = std::move(a);
    k.cos_m = std::move(m);
    k.scale = scale;
    return k;
}

KernelSpec KernelSpec::mexican_hat(double scale) {
    KernelSpec k;
    k.family = Family::mexican_hat;
    k.scale = scale;
    return k;
}

KernelSpec KernelSpec::mexican_hat2(double A, double s, double scale) {
    if (!(A > 0) || !(s >= std::sqrt(2.0)) || !(s <= std::sqrt(2.0) / A))
        throw ConstraintError("mexican_hat2 requires sqrt(2) <= s <= sqrt(2)/A");
    KernelSpec k;
    k.family = Family::mexican_hat2;
    k.A = A;
    k.s = s;
    k.scale = scale;
    return k;
}

KernelSpec KernelSpec::mexican_hat3(double Gamma, double gamma1, double gamma2,
                                    double scale) {
    if (!(gamma1 > gamma2) || !(gamma2 > 0))
        throw ConstraintError("mexican_hat3 requires gamma1 > gamma2 > 0");
    if (!(Gamma > 0) || !(Gamma <= gamma2 / gamma1))
        throw ConstraintError("mexican_hat3 requires 0 < Gamma <= gamma2/gamma1");
    KernelSpec k;
    k.family = Family::mexican_hat3;
    k.Gamma = Gamma;
    k.gamma1 = gamma1;
    k.gamma2 = gamma2;
    k.scale = scale;
    return k;
}

KernelSpec KernelSpec::damped_trig(double b, double scale) {
    if (!(b > 0)) throw ConstraintError("damped_trig requires b > 0");
    KernelSpec k;
    k.family = Family::damped_trig;
    k.b = b;
    k.scale = scale;
    return k;
}

KernelSpec KernelSpec::wizard_hat(double scale) {
    KernelSpec k;
    k.family = Family::wizard_hat;
    k.scale = scale;
    return k;
}

KernelSpec KernelSpec::constant(double c, double scale) {
    KernelSpec k;
    k.family = Family::constant;
    k.c = c;
    k.scale = scale;
    return k;
}

KernelSpec KernelSpec::table(Eigen::MatrixXd values) {
    if (values.rows() != values.cols() || values.rows() < 1)
        throw ConstraintError("table kernel requires a square matrix");
    if (!values.allFinite())
        throw ConstraintError("table kernel requires finite entries");
    KernelSpec k;
    k.family = Family::table;
    k.table_values = std::move(values);
    k.shift_invariant = false;
    return k;
}

KernelSpec KernelSpec::custom_convolution(
    std::vector<std::pair<double, double>> profile, double scale) {
    if (profile.size() < 2)
        throw ConstraintError("custom_convolution requires at least two profile samples");
    for (std::size_t i = 1; i < profile.size(); ++i)
        if (!(profile[i].first > profile[i - 1].first))
            throw ConstraintError("custom_convolution requires strictly increasing offsets");
    KernelSpec k;
    k.family = Family::custom_convolution;
    k.profile = std::move(profile);
    k.scale = scale;
    return k;
}

// ---------------------------------------------------------------------------
// Fast convolution path: zero-padded (linear) FFT convolution matching
// the integral over U. Never circular wrap.

namespace detail {

class FastConv {
public:
    // offsets: kernel samples J(x_i - x_j) on the (2n-1) offset grid
    // per axis, stored with offset (i-j) mapped to index (i-j)+(n-1).
    FastConv(int dim, int n0, int n1, const Eigen::VectorXd& offsets)
        : dim_(dim), n0_(n0), n1_(n1) {
        if (dim_ == 1) {
            L0_ = 2 * n0_ - 1;
            L1_ = 1;
        } else {
            L0_ = 2 * n0_ - 1;
            L1_ = 2 * n1_ - 1;
        }
        cplx_ = L0_ * (L1_ / 2 + 1);
        if (dim_ == 1) cplx_ = L0_ / 2 + 1;

        kernel_hat_ = alloc_complex();
        double* buf = fftw_alloc_real(real_size());
        {
            std::lock_guard<std::mutex> lock(plan_mutex());
            if (dim_ == 1) {
                fwd_ = fftw_plan_dft_r2c_1d(L0_, buf, kernel_hat_, FFTW_ESTIMATE);
                bwd_ = fftw_plan_dft_c2r_1d(L0_, kernel_hat_, buf, FFTW_ESTIMATE);
            } else {
                fwd_ = fftw_plan_dft_r2c_2d(L0_, L1_, buf, kernel_hat_, FFTW_ESTIMATE);
                bwd_ = fftw_plan_dft_c2r_2d(L0_, L1_, kernel_hat_, buf, FFTW_ESTIMATE);
            }
        }
        std::fill(buf, buf + real_size(), 0.0);
        for (Eigen::Index i = 0; i < offsets.size(); ++i) buf[i] = offsets[i];
        fftw_execute_dft_r2c(fwd_, buf, kernel_hat_);
        fftw_free(buf);
    }

    ~FastConv() {
        std::lock_guard<std::mutex> lock(plan_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(kernel_hat_);
    }

    FastConv(const FastConv&) = delete;
    FastConv& operator=(const FastConv&) = delete;

    // out_i = sum_j offsets[i-j] v_j, restricted to the physical grid.
    Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
        double* buf = fftw_alloc_real(real_size());
        fftw_complex* hat = alloc_complex();
        std::fill(buf, buf + real_size(), 0.0);
        if (dim_ == 1) {
            for (int j = 0; j < n0_; ++j) buf[j] = v[j];
        } else {
            for (int i = 0; i < n0_; ++i)
                for (int j = 0; j < n1_; ++j)
                    buf[static_cast<size_t>(i) * L1_ + j] = v[static_cast<Eigen::Index>(i) * n1_ + j];
        }
        fftw_execute_dft_r2c(fwd_, buf, hat);
        const double inv = 1.0 / (static_cast<double>(L0_) * L1_);
        for (Eigen::Index k = 0; k < cplx_; ++k) {
            const double re = hat[k][0] * kernel_hat_[k][0] - hat[k][1] * kernel_hat_[k][1];
            const double im = hat[k][0] * kernel_hat_[k][1] + hat[k][1] * kernel_hat_[k][0];
            hat[k][0] = re * inv;
            hat[k][1] = im * inv;
        }
        fftw_execute_dft_c2r(bwd_, hat, buf);
        Eigen::VectorXd out(static_cast<Eigen::Index>(n0_) * (dim_ == 1 ? 1 : n1_));
        if (dim_ == 1) {
            for (int i = 0; i < n0_; ++i) out[i] = buf[i + n0_ - 1];
        } else {
            for (int i = 0; i < n0_; ++i)
                for (int j = 0; j < n1_; ++j)
                    out[static_cast<Eigen::Index>(i) * n1_ + j] =
                        buf[static_cast<size_t>(i + n0_ - 1) * L1_ + (j + n1_ - 1)];
        }
        fftw_free(hat);
        fftw_free(buf);
        return out;
    }

private:
    static std::mutex& plan_mutex() {
        static std::mutex m;
        return m;
    }

    Eigen::Index real_size() const { return static_cast<Eigen::Index>(L0_) * L1_; }
    fftw_complex* alloc_complex() const {
        return static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * cplx_));
    }

    int dim_, n0_, n1_;
    int L0_, L1_;
    Eigen::Index cplx_;
    fftw_complex* kernel_hat_;
    fftw_plan fwd_, bwd_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Assembly and application

KernelOperator assemble(const KernelSpec& spec, GridPtr grid, bool parallel) {
    const Eigen::Index n = grid->size();
    KernelOperator K;
    K.grid = grid;

    if (spec.family == KernelSpec::Family::table) {
        if (spec.table_values.rows() != n)
            throw GridMismatchError("table kernel size does not match grid");
        K.matrix = spec.scale * spec.table_values;
        K.convolutional = false;
        return K;
    }

    K.matrix.resize(n, n);
    const int dim = grid->dim();
#pragma omp parallel for schedule(static) if (parallel)
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto xi = grid->node(i);
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto xj = grid->node(j);
            K.matrix(i, j) = spec.eval_offset({xi[0] - xj[0], xi[1] - xj[1]}, dim);
        }
    }
    if (!K.matrix.allFinite())
        throw ConstraintError("kernel assembly produced non-finite entries");

    K.convolutional = spec.shift_invariant;
    if (K.convolutional) {
        // offset table J((i-j) h) per axis
        if (dim == 1) {
            const int n0 = grid->npts(0);
            Eigen::VectorXd off(2 * n0 - 1);
            for (int k = -(n0 - 1); k <= n0 - 1; ++k)
                off[k + n0 - 1] = spec.eval_offset({k * grid->spacing(0), 0.0}, 1);
            K.conv_offsets = off;
            K.fast = std::make_shared<detail::FastConv>(1, n0, 1, off);
        } else {
            const int n0 = grid->npts(0), n1 = grid->npts(1);
            Eigen::VectorXd off(static_cast<Eigen::Index>(2 * n0 - 1) * (2 * n1 - 1));
            for (int a = -(n0 - 1); a <= n0 - 1; ++a)
                for (int bq = -(n1 - 1); bq <= n1 - 1; ++bq)
                    off[static_cast<Eigen::Index>(a + n0 - 1) * (2 * n1 - 1) + (bq + n1 - 1)] =
                        spec.eval_offset({a * grid->spacing(0), bq * grid->spacing(1)}, 2);
            K.conv_offsets = off;
            K.fast = std::make_shared<detail::FastConv>(2, n0, n1, off);
        }
    }
    return K;
}

Eigen::VectorXd apply_dense(const KernelOperator& K, const Eigen::VectorXd& u) {
    return K.matrix * (K.grid->quad().cwiseProduct(u));
}

Eigen::VectorXd apply_fast(const KernelOperator& K, const Eigen::VectorXd& u) {
    if (!K.fast) throw ConstraintError("kernel has no fast convolution path");
    return K.fast->apply(K.grid->quad().cwiseProduct(u));
}

Eigen::VectorXd apply(const KernelOperator& K, const Eigen::VectorXd& u) {
    if (u.size() != K.size())
        throw GridMismatchError("apply: field size does not match kernel");
    // dense matvec wins below a few hundred nodes
    if (K.fast && K.size() >= 512) return apply_fast(K, u);
    return apply_dense(K, u);
}

Field apply(const KernelOperator& K, const Field& u) {
    require_same_grid(*K.grid, *u.grid, "apply");
    return Field(u.grid, apply(K, u.values));
}

// ---------------------------------------------------------------------------
// Operator norm

namespace {

// Minimal radially decreasing majorant of a shift-invariant kernel,
// j0(r) = sup_{|x| >= r} |J(x)| over the sampled offsets, integrated
// over the full offset box with trapezoidal weights.
double majorant_l1(const KernelOperator& K) {
    const Grid& g = *K.grid;
    if (K.conv_offsets.size() == 0)
        return std::numeric_limits<double>::quiet_NaN();
    const int m0 = 2 * g.npts(0) - 1;
    const int m1 = g.dim() == 2 ? 2 * g.npts(1) - 1 : 1;
    const double h0 = g.spacing(0);
    const double h1 = g.dim() == 2 ? g.spacing(1) : 1.0;

    std::vector<std::pair<double, double>> pts;  // (|offset|, |J|)
    std::vector<double> qoff;                    // trapezoid weight per offset
    pts.reserve(K.conv_offsets.size());
    qoff.reserve(K.conv_offsets.size());
    for (int a = 0; a < m0; ++a) {
        const double dx = (a - (g.npts(0) - 1)) * h0;
        const double wa = (a == 0 || a == m0 - 1) ? 0.5 * h0 : h0;
        for (int b2 = 0; b2 < m1; ++b2) {
            const double dy = g.dim() == 2 ? (b2 - (g.npts(1) - 1)) * h1 : 0.0;
            const double wb = (g.dim() == 2)
                                  ? ((b2 == 0 || b2 == m1 - 1) ? 0.5 * h1 : h1)
                                  : 1.0;
            const Eigen::Index idx = static_cast<Eigen::Index>(a) * m1 + b2;
            pts.push_back({std::hypot(dx, dy), std::abs(K.conv_offsets[idx])});
            qoff.push_back(wa * wb);
        }
    }
    std::vector<std::size_t> order(pts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return pts[a].first < pts[b].first; });
    // suffix max over radius gives the decreasing envelope, integrated
    // at the same sample points
    std::vector<double> env(pts.size());
    double running = 0.0;
    for (std::size_t i = order.size(); i-- > 0;) {
        running = std::max(running, pts[order[i]].second);
        env[order[i]] = running;
    }
    double integral = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) integral += env[i] * qoff[i];
    return integral;
}

}  // namespace

NormReport operator_norm_report(const KernelOperator& K, const Weight& w) {
    require_same_grid(*K.grid, *w.grid, "operator_norm");
    const Eigen::VectorXd& q = K.grid->quad();
    const Eigen::VectorXd d = w.rho.cwiseProduct(q);

    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < d.size(); ++i)
        if (w.rho[i] > 0.0) support.push_back(i);
    if (support.empty())
        throw WeightDegenerateError("operator_norm: weight vanishes everywhere");

    NormReport rep;
    const Eigen::Index ns = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd M(ns, ns);
    for (Eigen::Index a = 0; a < ns; ++a) {
        const Eigen::Index i = support[a];
        const double ri = std::sqrt(d[i]);
        for (Eigen::Index b = 0; b < ns; ++b) {
            const Eigen::Index j = support[b];
            M(a, b) = ri * K.matrix(i, j) * q[j] / std::sqrt(d[j]);
        }
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(M);
    rep.norm = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;

    CaseReport cases = case_diagnostics(*K.grid, w, K);
    const double tol = 1e-8 * std::max(1.0, rep.norm);
    if (cases.case_i) {
        rep.sqrt_kappa = std::sqrt(cases.kappa);
        if (rep.norm > *rep.sqrt_kappa + tol) {
            rep.within_bounds = false;
            rep.notes.push_back("norm exceeds sqrt(kappa)");
        }
    }
    if (cases.case_ii && cases.a2_lower) {
        // C(d) of the maximal-function theorem is taken as 1; exact for
        // constant weights, informational otherwise.
        rep.k_rho = *cases.a2_lower * majorant_l1(K);
        const bool rho_const =
            (w.rho.array() == w.rho[0]).all();
        if (rho_const && rep.norm > *rep.k_rho + tol) {
            rep.within_bounds = false;
            rep.notes.push_back("norm exceeds K_rho");
        }
    }
    if (cases.case_iii && cases.inverse_mass) {
        rep.k_lambda_rho = std::sqrt(cases.lambda_sup * *cases.inverse_mass);
        if (rep.norm > *rep.k_lambda_rho + tol) {
            rep.within_bounds = false;
            rep.notes.push_back("norm exceeds K_{Lambda,rho}");
        }
    }
    return rep;
}

double operator_norm(const KernelOperator& K, const Weight& w) {
    return operator_norm_report(K, w).norm;
}

// ---------------------------------------------------------------------------
// Symmetric / antisymmetric decomposition

bool SymDecomposition::symmetric_kernel(double rel_tol) const {
    const double a = antisym.cwiseAbs().maxCoeff();
    const double s = std::max(1.0, sym.cwiseAbs().maxCoeff());
    return a <= rel_tol * s;
}

SymDecomposition decompose(const KernelOperator& K, const Weight& w,
                           double tol) {
    require_same_grid(*K.grid, *w.grid, "decompose");
    SymDecomposition dec;
    dec.grid = K.grid;
    dec.sym = 0.5 * (K.matrix + K.matrix.transpose());
    dec.antisym = K.matrix - dec.sym;
    dec.tol = tol;
    dec.dweights = w.rho.cwiseProduct(K.grid->quad());

    const Eigen::VectorXd sqd = dec.dweights.cwiseSqrt();
    Eigen::MatrixXd G = sqd.asDiagonal() * dec.sym * sqd.asDiagonal();
    G = 0.5 * (G + G.transpose());  // enforce exact symmetry for the solver

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    dec.form_eigenvalues = es.eigenvalues();
    dec.form_eigenvectors = es.eigenvectors();
    dec.lambda_min = dec.form_eigenvalues.minCoeff();
    dec.lambda_max = dec.form_eigenvalues.maxCoeff();

    const double lo = -tol * std::max(1.0, dec.lambda_max);
    const double hi = tol * std::max(1.0, std::abs(dec.lambda_min));
    if (dec.lambda_min >= lo)
        dec.definiteness = Definiteness::non_negative;
    else if (dec.lambda_max <= hi)
        dec.definiteness = Definiteness::non_positive;
    else
        dec.definiteness = Definiteness::indefinite;
    return dec;
}

}  // namespace nf
