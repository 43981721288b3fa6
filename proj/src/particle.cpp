#include "nfield/particle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nfield/rng.hpp"

namespace nf {

void ParticleConfig::validate() const {
    if (P < 1) throw ConstraintError("particle: P >= 1 populations required");
    if (static_cast<int>(N_k.size()) != P)
        throw ConstraintError("particle: N_k must list one size per population");
    for (int nk : N_k)
        if (nk < 1) throw ConstraintError("particle: N_k >= 1 required");
    if (w_tilde.rows() != P || w_tilde.cols() != P)
        throw ConstraintError("particle: w_tilde must be P x P");
    if (!(alpha > 0)) throw ConstraintError("particle: alpha > 0 required");
    if (!(T > 0) || !(dt_report > 0))
        throw ConstraintError("particle: T > 0 and dt_report > 0 required");
    if (static_cast<int>(initial.size()) != P)
        throw ConstraintError("particle: one initial law per population required");
}

int ParticleConfig::total() const {
    return std::accumulate(N_k.begin(), N_k.end(), 0);
}

namespace {

bool rate_is_bounded(const Activation& f, double* bound) {
    switch (f.kind) {
        case Activation::Kind::logistic:
        case Activation::Kind::heaviside:
        case Activation::Kind::sqrt_logistic:
        case Activation::Kind::tanh:
            *bound = 1.0;
            return true;
        case Activation::Kind::constant:
            *bound = std::max(f.const_value, 0.0);
            return true;
        case Activation::Kind::custom: {
            double m = 0.0;
            for (double y : f.ys) m = std::max(m, y);
            *bound = m;
            return true;
        }
        case Activation::Kind::relu:
            return false;
    }
    return false;
}

double sample_initial(const InitialLaw& law, PathRng& rng) {
    switch (law.kind) {
        case InitialLaw::Kind::constant: return law.a;
        case InitialLaw::Kind::uniform:
            return law.a + (law.b - law.a) * rng.uniform_co();
        case InitialLaw::Kind::gaussian: return law.a + law.b * rng.normal();
    }
    return 0.0;
}

}  // namespace

PopulationPath simulate_particles(const ParticleConfig& cfg) {
    cfg.validate();
    const int P = cfg.P;
    const int N = cfg.total();
    PathRng rng(cfg.seed, 0x706172ULL);

    // X_i(t) = g(t) D_i + C_{pop(i)}(t): decay scales g and C, a jump
    // shifts C only, so per-neuron deviations D_i never change.
    std::vector<double> D(N);
    std::vector<int> pop_of(N);
    std::vector<double> C(P, 0.0);
    std::vector<double> sumD(P, 0.0), sumD2(P, 0.0), maxD(P, 0.0);
    std::vector<int> offset(P, 0);
    {
        int idx = 0;
        for (int k = 0; k < P; ++k) {
            offset[k] = idx;
            double mx = -std::numeric_limits<double>::infinity();
            for (int i = 0; i < cfg.N_k[k]; ++i, ++idx) {
                D[idx] = sample_initial(cfg.initial[k], rng);
                pop_of[idx] = k;
                sumD[k] += D[idx];
                sumD2[k] += D[idx] * D[idx];
                mx = std::max(mx, D[idx]);
            }
            maxD[k] = mx;
        }
    }
    double g = 1.0;

    auto max_potential = [&]() {
        double m = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < P; ++k) m = std::max(m, g * maxD[k] + C[k]);
        return m;
    };

    PopulationPath path;
    double fbar = 0.0;
    double cap_potential = std::numeric_limits<double>::infinity();
    const bool bounded = rate_is_bounded(cfg.f, &fbar);
    if (!bounded) {
        // refreshing cap: valid while every potential stays below
        // cap_safety * (max potential at refresh time)
        cap_potential = std::max(cfg.cap_safety * max_potential(), 1.0);
        fbar = cfg.f(cap_potential);
        if (!(fbar > 0)) fbar = 1.0;
    }
    if (fbar <= 0.0) {
        // zero-rate system: pure decay, no events
        fbar = 0.0;
    }

    std::vector<double> jumps(P, 0.0);
    const int n_report = static_cast<int>(std::llround(cfg.T / cfg.dt_report));
    path.mean.resize(n_report + 1, P);
    path.var.resize(n_report + 1, P);
    path.jumps.resize(n_report + 1, P);

    auto record = [&](int row) {
        path.times.push_back(row * cfg.dt_report);
        for (int k = 0; k < P; ++k) {
            const double nk = cfg.N_k[k];
            const double mean = g * sumD[k] / nk + C[k];
            const double meanD = sumD[k] / nk;
            const double varD = std::max(0.0, sumD2[k] / nk - meanD * meanD);
            path.mean(row, k) = mean;
            path.var(row, k) = g * g * varD;
            path.jumps(row, k) = jumps[k];
        }
    };
    record(0);

    double t = 0.0;
    int row = 1;
    while (row <= n_report) {
        // fbar may change on cap refreshes; the exponential clock is
        // memoryless, so redrawing at the new rate is exact
        const double total_rate = fbar * N;
        double t_next = total_rate > 0
                            ? t + rng.exponential(total_rate)
                            : std::numeric_limits<double>::infinity();
        // flush report times that precede the candidate
        while (row <= n_report && row * cfg.dt_report <= t_next) {
            const double tr = row * cfg.dt_report;
            const double decay = std::exp(-cfg.alpha * (tr - t));
            g *= decay;
            for (int k = 0; k < P; ++k) C[k] *= decay;
            t = tr;
            record(row);
            ++row;
        }
        if (row > n_report || !(t_next < std::numeric_limits<double>::infinity()))
            break;
        ++path.candidates;
        const double decay = std::exp(-cfg.alpha * (t_next - t));
        g *= decay;
        for (int k = 0; k < P; ++k) C[k] *= decay;
        t = t_next;

        // uniform neuron pick matches the per-neuron dominating rate fbar
        const int idx = static_cast<int>(rng.uniform_co() * N) % N;
        const int l = pop_of[idx];
        const double x = g * D[idx] + C[l];
        double rate = cfg.f(x);
        if (rate < 0.0) {
            rate = 0.0;
            ++path.negative_rate_clips;
        }
        if (rng.uniform_co() * fbar < rate) {
            ++path.accepted;
            for (int k = 0; k < P; ++k) {
                C[k] += cfg.w_tilde(k, l) / cfg.N_k[l];
                jumps[k] += 1.0;
            }
            if (!bounded && max_potential() > cap_potential) {
                cap_potential = std::max(cfg.cap_safety * max_potential(), 1.0);
                fbar = cfg.f(cap_potential);
                ++path.cap_refreshes;
                // rate changed: candidate clock restarts from t
            }
        }
    }
    return path;
}

// ---------------------------------------------------------------------------
// Mean-field comparison

CompareReport meanfield_compare(const KernelSpec& kernel, const Activation& f,
                                double alpha, int P, int grid_n,
                                const std::vector<double>& N_values,
                                double T, double dt, int n_runs,
                                std::uint64_t seed, const InitialLaw& initial) {
    if (P < 1 || grid_n < 2 * P)
        throw ConstraintError("meanfield_compare: grid must resolve P sub-boxes");
    CompareReport rep;
    rep.N_values = N_values;

    GridPtr grid = make_grid_1d(0.0, 1.0, grid_n);
    Weight w = Weight::constant(grid, 1.0);
    auto K = std::make_shared<KernelOperator>(assemble(kernel, grid));

    // particle connectivity from the kernel at the k/P anchors, with the
    // 1/P box-width quadrature factor so both drifts integrate over [0,1]
    Eigen::MatrixXd w_tilde(P, P);
    for (int k = 0; k < P; ++k)
        for (int l = 0; l < P; ++l) {
            const double xk = double(k + 1) / P, xl = double(l + 1) / P;
            w_tilde(k, l) = kernel.eval_offset({xk - xl, 0.0}, 1) / P;
        }

    // sub-box node sets (box k = ((k-1)/P, k/P], first box closed at 0)
    std::vector<std::vector<Eigen::Index>> box(P);
    for (Eigen::Index i = 0; i < grid->size(); ++i) {
        const double x = grid->node(i)[0];
        int k = std::min<int>(P - 1, static_cast<int>(std::floor(x * P - 1e-12)));
        if (k < 0) k = 0;
        box[k].push_back(i);
    }

    const double dt_report = 0.1;

    for (double N : N_values) {
        std::vector<double> run_disc(n_runs, 0.0);
        for (int r = 0; r < n_runs; ++r) {
            // particle side
            ParticleConfig pc;
            pc.P = P;
            pc.N_k.assign(P, std::max(1, static_cast<int>(std::llround(N / P))));
            pc.w_tilde = w_tilde;
            pc.alpha = alpha;
            pc.f = f;
            pc.T = T;
            pc.dt_report = dt_report;
            pc.initial.assign(P, initial);
            pc.seed = seed + 1000003ULL * r + static_cast<std::uint64_t>(N);
            const PopulationPath pp = simulate_particles(pc);

            // field side with matching kernel-mollified noise
            Model model;
            model.grid = grid;
            model.weight = w;
            model.kernel = *K;
            model.f = f;
            model.noise = NoiseModel::kernel_mollified(K, f, N);

            SimConfig cfg;
            cfg.alpha = alpha;
            cfg.T = T;
            cfg.dt = dt;
            cfg.seed = pc.seed ^ 0x5a5a5a5aULL;
            cfg.record_stride =
                std::max(1, static_cast<int>(std::llround(dt_report / dt)));
            Eigen::VectorXd u0(grid->size());
            {
                PathRng r0(cfg.seed, 0xf1e1dULL);
                for (Eigen::Index i = 0; i < u0.size(); ++i)
                    u0[i] = sample_initial(initial, r0);
                if (initial.kind == InitialLaw::Kind::constant)
                    u0.setConstant(initial.a);
            }
            const Trajectory traj = simulate(u0, cfg, model, /*path=*/r);

            // max-over-time discrepancy between population means and
            // sub-box averages
            double disc = 0.0;
            for (std::size_t it = 0; it < pp.times.size(); ++it) {
                // match the trajectory snapshot at this report time
                std::size_t jt = 0;
                double best = std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < traj.times.size(); ++j) {
                    const double d = std::abs(traj.times[j] - pp.times[it]);
                    if (d < best) {
                        best = d;
                        jt = j;
                    }
                }
                for (int k = 0; k < P; ++k) {
                    double num = 0.0, den = 0.0;
                    for (Eigen::Index i : box[k]) {
                        num += traj.states[jt][i] * grid->quad()[i];
                        den += grid->quad()[i];
                    }
                    disc = std::max(disc, std::abs(num / den - pp.mean(it, k)));
                }
            }
            run_disc[r] = disc;
        }
        double mean = 0.0;
        for (double d : run_disc) mean += d;
        mean /= n_runs;
        rep.discrepancy.push_back(mean);

        // bootstrap CI over runs
        PathRng brg(seed, 0xb007ULL);
        std::vector<double> boots(200);
        for (auto& bv : boots) {
            double s = 0.0;
            for (int i = 0; i < n_runs; ++i)
                s += run_disc[static_cast<int>(brg.uniform_co() * n_runs) % n_runs];
            bv = s / n_runs;
        }
        std::sort(boots.begin(), boots.end());
        rep.ci_low.push_back(boots[static_cast<std::size_t>(0.025 * boots.size())]);
        rep.ci_high.push_back(boots[static_cast<std::size_t>(0.975 * boots.size())]);
    }

    rep.decreasing = true;
    for (std::size_t i = 1; i < rep.discrepancy.size(); ++i)
        if (!(rep.discrepancy[i] < rep.discrepancy[i - 1])) rep.decreasing = false;
    return rep;
}

}  // namespace nf
