#include "nfield/grid.hpp"

#include <cmath>
#include <limits>

#include "nfield/kernel.hpp"

namespace nf {

Grid::Grid(int dim, std::array<double, 2> lo, std::array<double, 2> hi,
           std::array<int, 2> npts)
    : dim_(dim), lo_(lo), hi_(hi), npts_(npts) {
    if (dim != 1 && dim != 2)
        throw ConstraintError("grid dimension must be 1 or 2");
    if (dim == 1) {
        npts_[1] = 1;
        lo_[1] = hi_[1] = 0.0;
    }
    size_ = 1;
    for (int a = 0; a < dim_; ++a) {
        if (npts_[a] < 2) throw ConstraintError("grid requires n >= 2 per axis");
        if (!(hi_[a] > lo_[a]))
            throw ConstraintError("grid bounds require b > a per axis");
        h_[a] = (hi_[a] - lo_[a]) / (npts_[a] - 1);
        size_ *= npts_[a];
    }
    if (dim_ == 1) h_[1] = 1.0;

    quad_.resize(size_);
    auto axis_weight = [&](int a, int i) {
        return (i == 0 || i == npts_[a] - 1) ? 0.5 * h_[a] : h_[a];
    };
    if (dim_ == 1) {
        for (int i = 0; i < npts_[0]; ++i) quad_[i] = axis_weight(0, i);
    } else {
        Eigen::Index k = 0;
        for (int i = 0; i < npts_[0]; ++i)
            for (int j = 0; j < npts_[1]; ++j, ++k)
                quad_[k] = axis_weight(0, i) * axis_weight(1, j);
    }
}

double Grid::cell_volume() const {
    double v = 1.0;
    for (int a = 0; a < dim_; ++a) v *= h_[a];
    return v;
}

std::array<double, 2> Grid::node(Eigen::Index flat) const {
    if (dim_ == 1) return {coord(0, static_cast<int>(flat)), 0.0};
    const int j = static_cast<int>(flat % npts_[1]);
    const int i = static_cast<int>(flat / npts_[1]);
    return {coord(0, i), coord(1, j)};
}

double Grid::truncation_radius() const {
    double r2 = 0.0;
    for (int a = 0; a < dim_; ++a) {
        const double half = 0.5 * (hi_[a] - lo_[a]);
        r2 += half * half;
    }
    return std::sqrt(r2);
}

bool Grid::same_as(const Grid& o) const {
    if (dim_ != o.dim_) return false;
    for (int a = 0; a < dim_; ++a)
        if (lo_[a] != o.lo_[a] || hi_[a] != o.hi_[a] || npts_[a] != o.npts_[a])
            return false;
    return true;
}

GridPtr make_grid_1d(double lo, double hi, int n) {
    return std::make_shared<Grid>(1, std::array<double, 2>{lo, 0.0},
                                  std::array<double, 2>{hi, 0.0},
                                  std::array<int, 2>{n, 1});
}

GridPtr make_grid_2d(double lo0, double hi0, int n0, double lo1, double hi1,
                     int n1) {
    return std::make_shared<Grid>(2, std::array<double, 2>{lo0, lo1},
                                  std::array<double, 2>{hi0, hi1},
                                  std::array<int, 2>{n0, n1});
}

static Weight finish_weight(GridPtr grid, Eigen::VectorXd rho) {
    if (rho.size() != grid->size())
        throw GridMismatchError("weight value count does not match grid");
    if ((rho.array() < 0.0).any())
        throw ConstraintError("weight requires rho >= 0 at every node");
    Weight w;
    w.grid = grid;
    w.rho = std::move(rho);
    const Eigen::VectorXd& q = grid->quad();
    w.mass = (w.rho.array() * q.array()).sum();
    if ((w.rho.array() > 0.0).all())
        w.inverse_mass = (q.array() / w.rho.array()).sum();
    return w;
}

Weight Weight::constant(GridPtr grid, double c) {
    return finish_weight(grid, Eigen::VectorXd::Constant(grid->size(), c));
}

Weight Weight::abs_pow(GridPtr grid, double exponent) {
    Eigen::VectorXd rho(grid->size());
    for (Eigen::Index i = 0; i < grid->size(); ++i) {
        const auto x = grid->node(i);
        double r = std::abs(x[0]);
        if (grid->dim() == 2) r = std::hypot(x[0], x[1]);
        rho[i] = std::pow(r, exponent);
    }
    return finish_weight(grid, std::move(rho));
}

Weight Weight::from_values(GridPtr grid, Eigen::VectorXd values) {
    return finish_weight(grid, std::move(values));
}

bool Weight::strictly_positive() const { return (rho.array() > 0.0).all(); }

Field::Field(GridPtr g, Eigen::VectorXd v) : grid(std::move(g)), values(std::move(v)) {
    if (values.size() != grid->size())
        throw GridMismatchError("field value count does not match grid");
    if (!values.allFinite()) throw ConstraintError("field entries must be finite");
}

Field Field::zero(GridPtr g) {
    return Field(g, Eigen::VectorXd::Zero(g->size()));
}

Field Field::constant(GridPtr g, double c) {
    return Field(g, Eigen::VectorXd::Constant(g->size(), c));
}

void require_same_grid(const Grid& a, const Grid& b, const char* where) {
    if (!a.same_as(b))
        throw GridMismatchError(std::string(where) + ": grids do not match");
}

double inner_product(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                     const Weight& w) {
    return (u.array() * v.array() * w.rho.array() * w.grid->quad().array()).sum();
}

double weighted_norm(const Eigen::VectorXd& u, const Weight& w) {
    return std::sqrt(std::abs(inner_product(u, u, w)));
}

double inner_product(const Field& u, const Field& v, const Weight& w) {
    require_same_grid(*u.grid, *v.grid, "inner_product");
    require_same_grid(*u.grid, *w.grid, "inner_product");
    return inner_product(u.values, v.values, w);
}

double weighted_norm(const Field& u, const Weight& w) {
    require_same_grid(*u.grid, *w.grid, "weighted_norm");
    return weighted_norm(u.values, w);
}

namespace {

// Trapezoidal sums of f over the node range [i0, i1] along one axis
// via prefix sums: full sum minus half the end values.
struct PrefixSums1d {
    std::vector<double> acc;  // acc[i] = sum_{k<i} v[k]
    const Eigen::VectorXd* v;

    explicit PrefixSums1d(const Eigen::VectorXd& values) : v(&values) {
        acc.assign(values.size() + 1, 0.0);
        for (Eigen::Index i = 0; i < values.size(); ++i)
            acc[i + 1] = acc[i] + values[i];
    }

    double trapz(int i0, int i1, double h) const {
        const double full = acc[i1 + 1] - acc[i0];
        return h * (full - 0.5 * ((*v)[i0] + (*v)[i1]));
    }
};

double a2_search_1d(const Grid& grid, const Eigen::VectorXd& rho,
                    const Eigen::VectorXd& rho_inv, int max_levels) {
    const int n = grid.npts(0);
    const double h = grid.spacing(0);
    PrefixSums1d ps_rho(rho), ps_inv(rho_inv);
    double best = 0.0;
    for (int level = 0; level <= max_levels; ++level) {
        int span = (n - 1) >> level;
        if (span < 1) span = 1;
        for (int i0 = 0; i0 + span < n; ++i0) {
            const int i1 = i0 + span;
            const double len = span * h;
            const double avg = ps_rho.trapz(i0, i1, h) / len;
            const double avg_inv = ps_inv.trapz(i0, i1, h) / len;
            best = std::max(best, avg * avg_inv);
        }
        if (span == 1) break;
    }
    return best;
}

// 2d rectangle trapezoid sums from four prefix arrays.
struct PrefixSums2d {
    int nx, ny;
    std::vector<double> rect;  // rect[(i)*(ny+1)+j] = sum over [0,i) x [0,j)
    const Eigen::VectorXd* v;

    PrefixSums2d(const Eigen::VectorXd& values, int nx, int ny)
        : nx(nx), ny(ny), v(&values) {
        rect.assign(static_cast<size_t>(nx + 1) * (ny + 1), 0.0);
        for (int i = 0; i < nx; ++i)
            for (int j = 0; j < ny; ++j)
                at(i + 1, j + 1) = value(i, j) + at(i, j + 1) + at(i + 1, j) - at(i, j);
    }

    double& at(int i, int j) { return rect[static_cast<size_t>(i) * (ny + 1) + j]; }
    double at(int i, int j) const {
        return rect[static_cast<size_t>(i) * (ny + 1) + j];
    }
    double value(int i, int j) const { return (*v)[static_cast<Eigen::Index>(i) * ny + j]; }

    double plain(int i0, int i1, int j0, int j1) const {
        return at(i1 + 1, j1 + 1) - at(i0, j1 + 1) - at(i1 + 1, j0) + at(i0, j0);
    }

    double row(int i, int j0, int j1) const { return plain(i, i, j0, j1); }
    double col(int j, int i0, int i1) const { return plain(i0, i1, j, j); }

    double trapz(int i0, int i1, int j0, int j1, double hx, double hy) const {
        double s = plain(i0, i1, j0, j1);
        s -= 0.5 * (row(i0, j0, j1) + row(i1, j0, j1));
        s -= 0.5 * (col(j0, i0, i1) + col(j1, i0, i1));
        s += 0.25 * (value(i0, j0) + value(i0, j1) + value(i1, j0) + value(i1, j1));
        return s * hx * hy;
    }
};

double a2_search_2d(const Grid& grid, const Eigen::VectorXd& rho,
                    const Eigen::VectorXd& rho_inv, int max_levels) {
    const int nx = grid.npts(0), ny = grid.npts(1);
    const double hx = grid.spacing(0), hy = grid.spacing(1);
    PrefixSums2d ps_rho(rho, nx, ny), ps_inv(rho_inv, nx, ny);
    const int base = std::min(nx, ny) - 1;
    double best = 0.0;
    for (int level = 0; level <= max_levels; ++level) {
        int span = base >> level;
        if (span < 1) span = 1;
        for (int i0 = 0; i0 + span < nx; ++i0)
            for (int j0 = 0; j0 + span < ny; ++j0) {
                const double area = span * hx * span * hy;
                const double avg =
                    ps_rho.trapz(i0, i0 + span, j0, j0 + span, hx, hy) / area;
                const double avg_inv =
                    ps_inv.trapz(i0, i0 + span, j0, j0 + span, hx, hy) / area;
                best = std::max(best, avg * avg_inv);
            }
        if (span == 1) break;
    }
    return best;
}

}  // namespace

double estimate_a2_constant(const Weight& w, const Grid& grid, int max_levels) {
    require_same_grid(*w.grid, grid, "estimate_a2_constant");
    if (max_levels < 1) throw ConstraintError("estimate_a2_constant: max_levels >= 1");
    if (!w.strictly_positive())
        throw WeightDegenerateError("estimate_a2_constant: rho must be > 0 at every node");
    const Eigen::VectorXd rho_inv = w.rho.cwiseInverse();
    if (grid.dim() == 1) return a2_search_1d(grid, w.rho, rho_inv, max_levels);
    return a2_search_2d(grid, w.rho, rho_inv, max_levels);
}

CaseReport case_diagnostics(const Grid& grid, const Weight& w,
                            const KernelOperator& kernel) {
    require_same_grid(grid, *w.grid, "case_diagnostics");
    require_same_grid(grid, *kernel.grid, "case_diagnostics");
    CaseReport rep;
    const Eigen::VectorXd& q = grid.quad();
    const Eigen::MatrixXd& W = kernel.matrix;

    // kappa = int int w^2 dx dy (Lebesgue on both arguments)
    rep.kappa = q.dot(W.cwiseAbs2() * q);
    // Lambda = int sup_y w(x,y)^2 rho(x) dx
    const Eigen::VectorXd row_sup = W.cwiseAbs2().rowwise().maxCoeff();
    rep.lambda_sup = (row_sup.array() * w.rho.array() * q.array()).sum();
    rep.mass = w.mass;
    rep.inverse_mass = w.inverse_mass;
    rep.truncation_radius = grid.truncation_radius();

    const bool rho_is_one = (w.rho.array() == 1.0).all();
    const bool rho_positive = w.strictly_positive();
    if (rho_positive)
        rep.a2_lower = estimate_a2_constant(w, grid, 12);
    else
        rep.notes.push_back("rho has a zero node: A2 estimate and case (iii) disabled");

    rep.case_i = rho_is_one && std::isfinite(rep.kappa);
    if (!rho_is_one) rep.notes.push_back("case (i) requires rho == 1");

    rep.case_ii = kernel.convolutional && rho_positive && rep.a2_lower.has_value() &&
                  std::isfinite(rep.mass);
    if (!kernel.convolutional)
        rep.notes.push_back("case (ii) requires a convolution kernel");

    rep.case_iii = rho_positive && w.inverse_mass.has_value() &&
                   std::isfinite(rep.lambda_sup);
    return rep;
}

}  // namespace nf
