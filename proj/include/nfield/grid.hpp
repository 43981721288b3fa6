#pragma once

#include <Eigen/Core>
#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nfield/errors.hpp"

namespace nf {

/// Uniform tensor grid on a closed box in d = 1 or 2 dimensions.
/// Nodes are ordered lexicographically (first axis major). Quadrature
/// weights follow the composite trapezoidal rule: boundary nodes carry
/// h/2 per axis, interior nodes h.
class Grid {
public:
    Grid(int dim, std::array<double, 2> lo, std::array<double, 2> hi,
         std::array<int, 2> npts);

    int dim() const { return dim_; }
    double lo(int axis) const { return lo_[axis]; }
    double hi(int axis) const { return hi_[axis]; }
    int npts(int axis) const { return npts_[axis]; }
    double spacing(int axis) const { return h_[axis]; }

    Eigen::Index size() const { return size_; }

    /// Product of axis spacings (the h^d cell volume).
    double cell_volume() const;

    double coord(int axis, int i) const { return lo_[axis] + h_[axis] * i; }

    std::array<double, 2> node(Eigen::Index flat) const;

    /// Trapezoidal quadrature weight per node.
    const Eigen::VectorXd& quad() const { return quad_; }

    /// Half the box diagonal; logged as truncation radius for
    /// whole-space setups realized on a box.
    double truncation_radius() const;

    bool same_as(const Grid& other) const;

private:
    int dim_;
    std::array<double, 2> lo_, hi_;
    std::array<int, 2> npts_;
    std::array<double, 2> h_;
    Eigen::Index size_;
    Eigen::VectorXd quad_;
};

using GridPtr = std::shared_ptr<const Grid>;

GridPtr make_grid_1d(double lo, double hi, int n);
GridPtr make_grid_2d(double lo0, double hi0, int n0, double lo1, double hi1,
                     int n1);

/// Non-negative weight rho sampled at the nodes, with the discrete
/// L1 mass and, when all rho_i > 0, the mass of 1/rho.
struct Weight {
    GridPtr grid;
    Eigen::VectorXd rho;
    double mass = 0.0;
    std::optional<double> inverse_mass;

    static Weight constant(GridPtr grid, double c);
    static Weight abs_pow(GridPtr grid, double exponent);
    static Weight from_values(GridPtr grid, Eigen::VectorXd values);

    bool strictly_positive() const;
};

struct Field {
    GridPtr grid;
    Eigen::VectorXd values;

    Field() = default;
    Field(GridPtr g, Eigen::VectorXd v);

    static Field zero(GridPtr g);
    static Field constant(GridPtr g, double c);
};

void require_same_grid(const Grid& a, const Grid& b, const char* where);

double inner_product(const Field& u, const Field& v, const Weight& w);
double weighted_norm(const Field& u, const Weight& w);

// Vector forms used in hot loops; grids are trusted to match.
double inner_product(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                     const Weight& w);
double weighted_norm(const Eigen::VectorXd& u, const Weight& w);

/// Lower bound for the Muckenhoupt A2 constant over grid-aligned
/// dyadic cubes and their translates, down to `max_levels` refinements.
double estimate_a2_constant(const Weight& w, const Grid& grid, int max_levels);

class KernelOperator;  // kernel.hpp

/// Which of the three space/kernel/weight cases hold on the
/// discretized data, with every constant that enters them.
struct CaseReport {
    bool case_i = false;    // bounded box, rho == 1, kappa finite
    bool case_ii = false;   // convolution kernel, rho in A2 (lower bound), rho in L1
    bool case_iii = false;  // rho > 0 a.e., rho and 1/rho in L1, Lambda finite
    double kappa = 0.0;     // int int w^2 dx dy
    double lambda_sup = 0.0;  // int sup_y w(x,y)^2 rho(x) dx
    double mass = 0.0;
    std::optional<double> inverse_mass;
    std::optional<double> a2_lower;
    double truncation_radius = 0.0;
    std::vector<std::string> notes;
};

CaseReport case_diagnostics(const Grid& grid, const Weight& w,
                            const KernelOperator& kernel);

}  // namespace nf
