#pragma once

#include <Eigen/Core>

#include "nfield/grid.hpp"
#include "nfield/rng.hpp"

namespace nftest {

inline Eigen::VectorXd random_field(nf::GridPtr grid, nf::PathRng& rng,
                                    double scale = 1.0) {
    Eigen::VectorXd u(grid->size());
    rng.fill_normal(u);
    return scale * u;
}

// fields evaluated from a scalar function of x (first axis)
template <typename F>
Eigen::VectorXd eval_field(nf::GridPtr grid, F&& f) {
    Eigen::VectorXd u(grid->size());
    for (Eigen::Index i = 0; i < grid->size(); ++i) u[i] = f(grid->node(i)[0]);
    return u;
}

}  // namespace nftest
