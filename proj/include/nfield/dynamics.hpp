#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <vector>

#include "nfield/activation.hpp"
#include "nfield/kernel.hpp"
#include "nfield/noise.hpp"
#include "nfield/nonlocal.hpp"

namespace nf {

enum class Scheme { exponential_euler, euler_maruyama };

struct SimConfig {
    double alpha = 1.0;
    double T = 1.0;
    double dt = 1e-2;
    Scheme scheme = Scheme::exponential_euler;
    int n_paths = 1;
    std::uint64_t seed = 0;
    int record_stride = 1;

    void validate() const;
    int n_steps() const;
};

/// The discretized model du = -alpha u dt + K F(u) dt + B(u) dW.
struct Model {
    GridPtr grid;
    Weight weight;
    std::optional<KernelOperator> kernel;
    Activation f = Activation::logistic();
    NoiseModel noise;

    Eigen::VectorXd drift_kf(const Eigen::VectorXd& u) const;
};

/// phi_1(z) = (e^z - 1)/z, the exponential-integrator drift weight.
double phi1(double z);

/// One step of the mild-form integrator.
///   exponential_euler: u+ = e^{-a dt} u + phi1(-a dt) dt KF(u)
///                           + e^{-a dt} B(u)(sqrt(dt) xi)
///   euler_maruyama:    u+ = u + dt(-a u + KF(u)) + B(u)(sqrt(dt) xi)
Eigen::VectorXd step(const Eigen::VectorXd& u, const Model& model,
                     const SimConfig& cfg, const Eigen::VectorXd& xi);

struct Trajectory {
    std::vector<double> times;
    std::vector<Eigen::VectorXd> states;
    std::uint64_t path_seed = 0;
};

/// Integrate one path to T; deterministic given (cfg.seed, path_index).
/// Non-finite states abort with BlowUpError carrying the time stamp.
Trajectory simulate(const Eigen::VectorXd& u0, const SimConfig& cfg,
                    const Model& model, int path_index = 0);

struct EnsembleStats {
    std::vector<double> times;
    std::vector<double> p_list;
    Eigen::MatrixXd moment;   // times x p
    Eigen::MatrixXd stderr_;  // times x p
    double blowup_fraction = 0.0;
    bool envelope_warning = false;  // growth beyond an exponential fit
};

/// Monte Carlo estimates of E||u(t)||^p. Paths are independent work
/// units; with parallel = false a plain serial loop is used (the
/// reference implementation used in tests and the benchmark). Results
/// are bit-identical either way.
EnsembleStats ensemble_moments(const Eigen::VectorXd& u0, const SimConfig& cfg,
                               const Model& model,
                               const std::vector<double>& p_list,
                               bool parallel = true);

struct InvarianceConstants {
    double beta = 0.0;
    double gamma_delta = 0.0;
    double eta = 0.0;  // drift budget of the monitored inequality
    double delta = 0.5;
};

struct EnergyReport {
    std::vector<double> times;
    Eigen::VectorXd sup_term;   // (1-delta) E sup_{s<=t} ||u||_1^2
    Eigen::VectorXd int_term;   // gamma(delta) E int_0^t ||u||_1^2 ds
    Eigen::VectorXd rhs;        // ||u0||_1^2 + eta t
    Eigen::VectorXd se;         // 3-SE statistical tolerance basis
    std::vector<int> violations;  // indices with lhs > rhs + 3 se
    double max_h1_residual = 0.0;
    bool ok() const { return violations.empty(); }
};

/// Audit of the invariance energy estimate
///   (1-delta) E sup ||u||_1^2 + gamma(delta) E int ||u||_1^2 <= ||u0||_1^2 + eta t
/// along stored trajectories.
EnergyReport h1_energy_monitor(const std::vector<Trajectory>& ensemble,
                               const NonlocalMetric& metric, const Weight& w,
                               const InvarianceConstants& constants);

/// Online ensemble version (does not store states).
EnergyReport invariance_monitor(const Eigen::VectorXd& u0, const SimConfig& cfg,
                                const Model& model, const NonlocalMetric& metric,
                                const InvarianceConstants& constants,
                                bool parallel = true);

}  // namespace nf
