#pragma once

#include <Eigen/Core>
#include <map>
#include <string>
#include <vector>

#include "nfield/dynamics.hpp"

namespace nf {

/// One evaluated assumption: every constituent constant, the margin,
/// and which constants were estimated rather than exact.
struct Certificate {
    std::string assumption;  // "ergodicity", "invariance", "monotone"
    std::map<std::string, double> constants;
    double margin = 0.0;
    bool pass = false;
    bool applicable = true;
    std::vector<std::string> empirical_flags;
    std::string note;
};

struct CertifyResult {
    Certificate ergodicity;
    Certificate invariance;
    Certificate monotone;

    std::vector<const Certificate*> all() const {
        return {&ergodicity, &invariance, &monotone};
    }
};

/// Evaluate the three certificates from the model constants.
///   ergodicity: margin 2a - lambda~,  lambda~ = 2 sqrt2 ||K|| Lip(f) + C_B
///   invariance: margin gamma(delta) = 2a - beta - (9/delta) C~~_B
///   monotone:   margin 2a - C~_B (f monotone, w symmetric non-positive)
CertifyResult certify(const Model& model, const SymDecomposition& dec,
                      const NonlocalMetric* metric, const NoiseConstants& nc,
                      double alpha, double delta);

struct CouplingReport {
    std::vector<double> times;
    Eigen::VectorXd mean_sq, se;        // E||u(t,v)-u(t,z)||^2 and its SE
    Eigen::VectorXd mean_sq_h1, se_h1;  // present when a metric is attached
    double fitted_rate = 0.0, fit_se = 0.0;
    double fitted_rate_h1 = 0.0, fit_se_h1 = 0.0;
    double bound_rate = 0.0;  // lambda - 2 alpha
    double initial_sq = 0.0, initial_sq_h1 = 0.0;
    double max_h1_residual = 0.0;
};

/// Synchronous coupling: n_paths pairs driven by identical mode draws.
CouplingReport couple(const Eigen::VectorXd& v, const Eigen::VectorXd& z,
                      const SimConfig& cfg, const Model& model, double lambda,
                      const NonlocalMetric* metric = nullptr,
                      bool parallel = true);

/// Time-averaged occupation measure over [burn_in*T, T], pooled over
/// paths with uniform weights.
struct OccupationMeasure {
    GridPtr grid;
    std::vector<Eigen::VectorXd> samples;
    std::vector<double> weights;  // sum to 1
    double horizon = 0.0;
    double burn_in = 0.1;
};

/// Fixed probe dictionary for Fortet-Mourier-style distances:
/// clamped coordinate functionals u -> tanh(<u, g_k>_rho) for
/// rho-normalized probe fields plus u -> tanh(||u||^2/(1+||u||)).
/// Every member is bounded by 1 with Lipschitz constant <= 1.
struct Dictionary {
    std::string version;
    GridPtr grid;
    std::vector<Eigen::VectorXd> probes;  // rho-normalized
    Eigen::VectorXd dmass;                // rho_i q_i

    int size() const { return static_cast<int>(probes.size()) + 1; }
    double evaluate(int k, const Eigen::VectorXd& u) const;
};

Dictionary make_dictionary(GridPtr grid, const Weight& w, int n_probes = 8);

/// max_k |mean_A(phi_k) - mean_B(phi_k)|: a lower bound for the
/// Fortet-Mourier distance, a pseudometric by construction.
double fm_distance(const OccupationMeasure& A, const OccupationMeasure& B,
                   const Dictionary& dict);

struct TightnessRow {
    double horizon = 0.0;
    double radius = 0.0;      // R
    double empirical = 0.0;   // mass of {gamma ||.||_1^2 <= R}
    double bound = 0.0;       // 1 - (||v||_1^2 + eta)/R
    bool ok = true;
};

struct KBReport {
    std::vector<OccupationMeasure> measures;
    std::vector<double> horizons;
    std::vector<double> fm_successive;  // d(Q_{T_i}, Q_{T_{i+1}})
    std::vector<TightnessRow> tightness;
    double max_h1_residual = 0.0;
    std::string dictionary_version;
};

/// Krylov-Bogoliubov occupation measures at increasing horizons with
/// the tightness diagnostic (when a metric is attached; requires
/// v in H1) and successive dictionary distances.
KBReport krylov_bogoliubov(const Eigen::VectorXd& v, const SimConfig& cfg,
                           const Model& model, const std::vector<double>& horizons,
                           const NonlocalMetric* metric = nullptr,
                           double gamma = 0.0, double eta = 0.0,
                           double burn_in = 0.1, bool parallel = true);

struct SecondMomentReport {
    double c_tilde = 0.0;
    double gamma_tilde = 0.0;
    double c_hat = 0.0;      // C~ / gamma~
    double empirical = 0.0;  // int ||u||^2 dQ_T
    double se = 0.0;
    bool pass = false;
};

/// Check int ||u||^2 dmu <= C^ = C~/gamma~ with the constants taken
/// from a passing ergodicity certificate.
SecondMomentReport second_moment_bound(const Certificate& ergodicity,
                                       const OccupationMeasure& occ,
                                       const Weight& w);

}  // namespace nf
