#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "nfield/activation.hpp"
#include "nfield/dynamics.hpp"

namespace nf {

/// Initial law nu_0^k for the membrane potentials of one population.
struct InitialLaw {
    enum class Kind { constant, uniform, gaussian };
    Kind kind = Kind::constant;
    double a = 0.0, b = 0.0;  // constant: a; uniform: [a,b]; gaussian: mean a, sd b
};

/// Finite-N multi-population Poisson-jump system
///   dX^{k,i} = -alpha X^{k,i} dt
///              + sum_l w~(k,l) (1/N_l) sum_j 1_{z <= f(X^{l,j}_{t-})} pi^{l,j}(dt,dz).
struct ParticleConfig {
    int P = 1;
    std::vector<int> N_k;
    Eigen::MatrixXd w_tilde;  // P x P
    double alpha = 1.0;
    Activation f = Activation::logistic();
    double T = 1.0;
    double dt_report = 0.1;
    std::vector<InitialLaw> initial;  // one per population
    std::uint64_t seed = 0;
    double cap_safety = 2.0;  // rate cap for unbounded f: f(cap_safety * max potential)

    void validate() const;
    int total() const;
};

struct PopulationPath {
    std::vector<double> times;
    Eigen::MatrixXd mean;  // times x P
    Eigen::MatrixXd var;   // times x P
    Eigen::MatrixXd jumps; // times x P, cumulative accepted jumps
    std::int64_t candidates = 0;
    std::int64_t accepted = 0;
    std::int64_t cap_refreshes = 0;
    std::int64_t negative_rate_clips = 0;
};

/// Exact event-driven simulation by Poisson thinning: candidates from
/// a dominating rate N f^, acceptance with probability f(X_{t-})/f^;
/// potentials decay exactly between events.
PopulationPath simulate_particles(const ParticleConfig& cfg);

struct CompareReport {
    std::vector<double> N_values;
    std::vector<double> discrepancy;      // max over time/pop |particle - field|
    std::vector<double> ci_low, ci_high;  // bootstrap over runs
    bool decreasing = false;
    std::vector<std::string> notes;
};

/// Particle-vs-SPDE comparison on [0,1]: populations k = 1..P sit at
/// x = k/P with w~(k,l) = w(k/P, l/P)/P (box-width quadrature factor),
/// the field side runs kernel-mollified noise of scale N, and the
/// per-population means are compared with the field averaged over the
/// matching sub-box of width 1/P.
CompareReport meanfield_compare(const KernelSpec& kernel, const Activation& f,
                                double alpha, int P, int grid_n,
                                const std::vector<double>& N_values,
                                double T, double dt, int n_runs,
                                std::uint64_t seed,
                                const InitialLaw& initial);

}  // namespace nf
