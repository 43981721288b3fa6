#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nfield/grid.hpp"

namespace nf {

/// Scalar activation with certified Lipschitz data. Heaviside is
/// evaluable for exploratory runs but barred from every certificate
/// path (certificate_eligible = false).
struct Activation {
    enum class Kind {
        relu,
        logistic,
        tanh,
        heaviside,
        sqrt_logistic,
        constant,
        custom,
    };

    Kind kind = Kind::logistic;
    double lip = 0.25;
    double f0 = 0.5;
    bool monotone = true;
    bool certificate_eligible = true;

    double const_value = 0.0;                  // constant
    std::vector<double> xs, ys;                // custom sample table
    double declared_lip = 0.0;                 // custom

    double operator()(double x) const;

    std::string name() const;

    static Activation relu();
    static Activation logistic();
    static Activation tanh();
    static Activation heaviside();
    static Activation sqrt_logistic();
    static Activation constant(double c);
    static Activation custom(std::vector<double> xs, std::vector<double> ys,
                             double declared_lip);
};

/// (Lip(f), f(0)) for certificate use. Custom variants are audited
/// against their declared constant on the sample table first.
std::pair<double, double> lipschitz_data(const Activation& a);

Field nemytskii(const Activation& a, const Field& u);
Eigen::VectorXd nemytskii(const Activation& a, const Eigen::VectorXd& u);

}  // namespace nf
