#include "nfield/activation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nf {

double Activation::operator()(double x) const {
    switch (kind) {
        case Kind::relu: return x > 0.0 ? x : 0.0;
        case Kind::logistic: return 1.0 / (1.0 + std::exp(-x));
        case Kind::tanh: return std::tanh(x);
        case Kind::heaviside: return x >= 0.0 ? 1.0 : 0.0;
        case Kind::sqrt_logistic: return std::sqrt(1.0 / (1.0 + std::exp(-x)));
        case Kind::constant: return const_value;
        case Kind::custom: {
            // linear interpolation, clamped outside the sample range
            if (x <= xs.front()) return ys.front();
            if (x >= xs.back()) return ys.back();
            auto it = std::upper_bound(xs.begin(), xs.end(), x);
            const std::size_t i = static_cast<std::size_t>(it - xs.begin());
            const double t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
            return ys[i - 1] + t * (ys[i] - ys[i - 1]);
        }
    }
    return 0.0;
}

std::string Activation::name() const {
    switch (kind) {
        case Kind::relu: return "relu";
        case Kind::logistic: return "logistic";
        case Kind::tanh: return "tanh";
        case Kind::heaviside: return "heaviside";
        case Kind::sqrt_logistic: return "sqrt_logistic";
        case Kind::constant: return "constant";
        case Kind::custom: return "custom";
    }
    return "?";
}

Activation Activation::relu() {
    Activation a;
    a.kind = Kind::relu;
    a.lip = 1.0;
    a.f0 = 0.0;
    a.monotone = true;
    a.certificate_eligible = true;
    return a;
}

Activation Activation::logistic() {
    Activation a;
    a.kind = Kind::logistic;
    a.lip = 0.25;  // f' = f(1-f), maximal at 0
    a.f0 = 0.5;
    a.monotone = true;
    a.certificate_eligible = true;
    return a;
}

Activation Activation::tanh() {
    Activation a;
    a.kind = Kind::tanh;
    a.lip = 1.0;
    a.f0 = 0.0;
    a.monotone = true;
    a.certificate_eligible = true;
    return a;
}

Activation Activation::heaviside() {
    Activation a;
    a.kind = Kind::heaviside;
    a.lip = std::numeric_limits<double>::infinity();
    a.f0 = 1.0;  // 1_{[0,inf)} includes 0
    a.monotone = true;
    a.certificate_eligible = false;
    return a;
}

Activation Activation::sqrt_logistic() {
    Activation a;
    a.kind = Kind::sqrt_logistic;
    a.lip = 1.0 / (3.0 * std::sqrt(3.0));  // maximum of (sqrt f)' at -log 2
    a.f0 = std::sqrt(0.5);
    a.monotone = true;
    a.certificate_eligible = true;
    return a;
}

Activation Activation::constant(double c) {
    Activation a;
    a.kind = Kind::constant;
    a.const_value = c;
    a.lip = 0.0;
    a.f0 = c;
    a.monotone = true;
    a.certificate_eligible = true;
    return a;
}

Activation Activation::custom(std::vector<double> xs, std::vector<double> ys,
                              double declared_lip) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw ConstraintError("custom activation requires >= 2 (x, f(x)) samples");
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (!(xs[i] > xs[i - 1]))
            throw ConstraintError("custom activation requires strictly increasing x samples");
    if (declared_lip < 0)
        throw ConstraintError("custom activation requires declared Lip >= 0");
    Activation a;
    a.kind = Kind::custom;
    a.xs = std::move(xs);
    a.ys = std::move(ys);
    a.declared_lip = declared_lip;
    a.lip = declared_lip;
    a.f0 = a(0.0);
    bool mono = true;
    for (std::size_t i = 1; i < a.ys.size(); ++i)
        if (a.ys[i] < a.ys[i - 1]) mono = false;
    a.monotone = mono;
    a.certificate_eligible = true;
    return a;
}

std::pair<double, double> lipschitz_data(const Activation& a) {
    if (!a.certificate_eligible)
        throw NotLipschitzError("activation '" + a.name() +
                                "' has no certified Lipschitz constant");
    if (a.kind == Activation::Kind::custom) {
        // audit the declared constant against the sample table
        for (std::size_t i = 1; i < a.xs.size(); ++i) {
            const double slope =
                std::abs((a.ys[i] - a.ys[i - 1]) / (a.xs[i] - a.xs[i - 1]));
            if (slope > a.declared_lip + 1e-12)
                throw DeclaredConstantError(
                    "custom activation violates declared Lip between x = " +
                    std::to_string(a.xs[i - 1]) + " and x = " +
                    std::to_string(a.xs[i]) + " (slope " + std::to_string(slope) +
                    ")");
        }
    }
    return {a.lip, a.f0};
}

Eigen::VectorXd nemytskii(const Activation& a, const Eigen::VectorXd& u) {
    Eigen::VectorXd out(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) out[i] = a(u[i]);
    return out;
}

Field nemytskii(const Activation& a, const Field& u) {
    return Field(u.grid, nemytskii(a, u.values));
}

}  // namespace nf
