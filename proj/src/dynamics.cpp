#include "nfield/dynamics.hpp"

#include <cmath>
#include <limits>

#include "nfield/rng.hpp"

namespace nf {

void SimConfig::validate() const {
    if (!(alpha > 0)) throw ConstraintError("SimConfig requires alpha > 0");
    if (!(dt > 0) || !(dt <= T)) throw ConstraintError("SimConfig requires 0 < dt <= T");
    if (n_paths < 1) throw ConstraintError("SimConfig requires n_paths >= 1");
    if (record_stride < 1) throw ConstraintError("SimConfig requires record_stride >= 1");
}

int SimConfig::n_steps() const {
    return static_cast<int>(std::llround(T / dt));
}

Eigen::VectorXd Model::drift_kf(const Eigen::VectorXd& u) const {
    if (!kernel) return Eigen::VectorXd::Zero(u.size());
    return apply(*kernel, nemytskii(f, u));
}

double phi1(double z) {
    if (std::abs(z) < 1e-5) return 1.0 + z * (0.5 + z / 6.0);
    return std::expm1(z) / z;
}

Eigen::VectorXd step(const Eigen::VectorXd& u, const Model& model,
                     const SimConfig& cfg, const Eigen::VectorXd& xi) {
    const double dt = cfg.dt;
    const Eigen::VectorXd kf = model.drift_kf(u);
    const Eigen::VectorXd noise =
        apply_noise(model.noise, u, std::sqrt(dt) * xi, model.weight);
    if (cfg.scheme == Scheme::exponential_euler) {
        const double decay = std::exp(-cfg.alpha * dt);
        const double drift_w = phi1(-cfg.alpha * dt) * dt;
        return decay * u + drift_w * kf + decay * noise;
    }
    return u + dt * (-cfg.alpha * u + kf) + noise;
}

Trajectory simulate(const Eigen::VectorXd& u0, const SimConfig& cfg,
                    const Model& model, int path_index) {
    cfg.validate();
    if (!u0.allFinite()) throw ConstraintError("simulate: initial field not finite");
    PathRng rng(cfg.seed, static_cast<std::uint64_t>(path_index));
    Trajectory traj;
    traj.path_seed = static_cast<std::uint64_t>(path_index);
    const int n_steps = cfg.n_steps();
    Eigen::VectorXd u = u0;
    Eigen::VectorXd xi(model.noise.m_modes);
    traj.times.push_back(0.0);
    traj.states.push_back(u);
    for (int k = 1; k <= n_steps; ++k) {
        rng.fill_normal(xi);
        u = step(u, model, cfg, xi);
        if (!u.allFinite())
            throw BlowUpError("path blew up at t = " + std::to_string(k * cfg.dt),
                              k * cfg.dt);
        if (k % cfg.record_stride == 0 || k == n_steps) {
            traj.times.push_back(k * cfg.dt);
            traj.states.push_back(u);
        }
    }
    return traj;
}

namespace {

std::vector<double> record_times(const SimConfig& cfg) {
    std::vector<double> t{0.0};
    const int n_steps = cfg.n_steps();
    for (int k = 1; k <= n_steps; ++k)
        if (k % cfg.record_stride == 0 || k == n_steps) t.push_back(k * cfg.dt);
    return t;
}

}  // namespace

EnsembleStats ensemble_moments(const Eigen::VectorXd& u0, const SimConfig& cfg,
                               const Model& model,
                               const std::vector<double>& p_list,
                               bool parallel) {
    cfg.validate();
    for (double p : p_list)
        if (p < 2.0) throw ConstraintError("ensemble_moments requires p >= 2");

    EnsembleStats stats;
    stats.times = record_times(cfg);
    stats.p_list = p_list;
    const int nt = static_cast<int>(stats.times.size());
    const int np = static_cast<int>(p_list.size());
    const int P = cfg.n_paths;
    const int n_steps = cfg.n_steps();

    // per-path records so the reduction order never depends on threads
    Eigen::MatrixXd values(P, nt * np);
    std::vector<char> blown(P, 0);

#pragma omp parallel for schedule(static) if (parallel)
    for (int p = 0; p < P; ++p) {
        PathRng rng(cfg.seed, static_cast<std::uint64_t>(p));
        Eigen::VectorXd u = u0;
        Eigen::VectorXd xi(model.noise.m_modes);
        int slot = 0;
        const double nrm0 = weighted_norm(u, model.weight);
        for (int j = 0; j < np; ++j)
            values(p, slot * np + j) = std::pow(nrm0, p_list[j]);
        ++slot;
        for (int k = 1; k <= n_steps; ++k) {
            rng.fill_normal(xi);
            u = step(u, model, cfg, xi);
            if (!u.allFinite()) {
                blown[p] = 1;
                break;
            }
            if (k % cfg.record_stride == 0 || k == n_steps) {
                const double nrm = weighted_norm(u, model.weight);
                for (int j = 0; j < np; ++j)
                    values(p, slot * np + j) = std::pow(nrm, p_list[j]);
                ++slot;
            }
        }
    }

    stats.moment.setZero(nt, np);
    stats.stderr_.setZero(nt, np);
    int alive = 0;
    for (int p = 0; p < P; ++p)
        if (!blown[p]) ++alive;
    stats.blowup_fraction = double(P - alive) / double(P);
    if (alive == 0) return stats;

    for (int t = 0; t < nt; ++t)
        for (int j = 0; j < np; ++j) {
            double s = 0.0, ss = 0.0;
            for (int p = 0; p < P; ++p) {
                if (blown[p]) continue;
                const double v = values(p, t * np + j);
                s += v;
                ss += v * v;
            }
            const double mean = s / alive;
            stats.moment(t, j) = mean;
            if (alive > 1) {
                const double var = std::max(0.0, (ss - alive * mean * mean) / (alive - 1));
                stats.stderr_(t, j) = std::sqrt(var / alive);
            }
        }

    // red flag when the estimate escapes an exponential envelope fit
    for (int j = 0; j < np && !stats.envelope_warning; ++j) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        int m = 0;
        for (int t = 0; t < nt; ++t) {
            const double y = stats.moment(t, j);
            if (y <= 0) continue;
            const double ly = std::log(y);
            sx += stats.times[t];
            sy += ly;
            sxx += stats.times[t] * stats.times[t];
            sxy += stats.times[t] * ly;
            ++m;
        }
        if (m < 3) continue;
        const double denom = m * sxx - sx * sx;
        if (denom <= 0) continue;
        const double slope = (m * sxy - sx * sy) / denom;
        const double icept = (sy - slope * sx) / m;
        for (int t = 0; t < nt; ++t) {
            const double y = stats.moment(t, j);
            if (y <= 0) continue;
            if (std::log(y) > icept + slope * stats.times[t] + std::log(3.0)) {
                stats.envelope_warning = true;
                break;
            }
        }
    }
    return stats;
}

// ---------------------------------------------------------------------------
// Invariance energy monitor

namespace {

struct EnergyAccum {
    // per recorded time: running sup ||u||_1^2 and int_0^t ||u||_1^2 ds
    std::vector<double> sup, integral;
    double max_residual = 0.0;
    bool blown = false;
};

EnergyAccum monitor_path(const Eigen::VectorXd& u0, const SimConfig& cfg,
                         const Model& model, const NonlocalMetric& metric,
                         int path_index) {
    PathRng rng(cfg.seed, static_cast<std::uint64_t>(path_index));
    EnergyAccum acc;
    const int n_steps = cfg.n_steps();
    Eigen::VectorXd u = u0;
    Eigen::VectorXd xi(model.noise.m_modes);

    auto h1sq = [&](const Eigen::VectorXd& v) {
        const double nrm = weighted_norm(v, model.weight);
        if (nrm > 0.0)
            acc.max_residual = std::max(acc.max_residual, metric.h1_residual(v) / nrm);
        const double h = metric.h1_norm_projected(v);
        return h * h;
    };

    double cur = h1sq(u);
    double sup = cur, integral = 0.0;
    acc.sup.push_back(sup);
    acc.integral.push_back(integral);
    for (int k = 1; k <= n_steps; ++k) {
        rng.fill_normal(xi);
        u = step(u, model, cfg, xi);
        if (!u.allFinite()) {
            acc.blown = true;
            return acc;
        }
        const double next = h1sq(u);
        integral += 0.5 * (cur + next) * cfg.dt;
        cur = next;
        sup = std::max(sup, cur);
        if (k % cfg.record_stride == 0 || k == n_steps) {
            acc.sup.push_back(sup);
            acc.integral.push_back(integral);
        }
    }
    return acc;
}

EnergyReport reduce_energy(const std::vector<EnergyAccum>& accs,
                           const std::vector<double>& times, double u0_h1_sq,
                           const InvarianceConstants& cst) {
    EnergyReport rep;
    rep.times = times;
    const int nt = static_cast<int>(times.size());
    const int P = static_cast<int>(accs.size());
    rep.sup_term.resize(nt);
    rep.int_term.resize(nt);
    rep.rhs.resize(nt);
    rep.se.resize(nt);
    for (const auto& a : accs)
        rep.max_h1_residual = std::max(rep.max_h1_residual, a.max_residual);
    for (int t = 0; t < nt; ++t) {
        double s = 0, ss = 0;
        for (int p = 0; p < P; ++p) {
            const double lhs = (1.0 - cst.delta) * accs[p].sup[t] +
                               cst.gamma_delta * accs[p].integral[t];
            s += lhs;
            ss += lhs * lhs;
        }
        const double mean = s / P;
        const double var = P > 1 ? std::max(0.0, (ss - P * mean * mean) / (P - 1)) : 0.0;
        rep.se[t] = std::sqrt(var / P);
        double sup_mean = 0, int_mean = 0;
        for (int p = 0; p < P; ++p) {
            sup_mean += accs[p].sup[t];
            int_mean += accs[p].integral[t];
        }
        rep.sup_term[t] = (1.0 - cst.delta) * sup_mean / P;
        rep.int_term[t] = cst.gamma_delta * int_mean / P;
        rep.rhs[t] = u0_h1_sq + cst.eta * times[t];
        if (rep.sup_term[t] + rep.int_term[t] > rep.rhs[t] + 3.0 * rep.se[t])
            rep.violations.push_back(t);
    }
    return rep;
}

}  // namespace

EnergyReport invariance_monitor(const Eigen::VectorXd& u0, const SimConfig& cfg,
                                const Model& model, const NonlocalMetric& metric,
                                const InvarianceConstants& constants,
                                bool parallel) {
    cfg.validate();
    const double res0 = metric.h1_residual(u0);
    const double nrm0 = weighted_norm(u0, model.weight);
    if (res0 > 1e-6 * std::max(nrm0, 1e-300))
        throw SubspaceMembershipError("invariance_monitor: u0 outside H1", res0);

    std::vector<EnergyAccum> accs(cfg.n_paths);
#pragma omp parallel for schedule(static) if (parallel)
    for (int p = 0; p < cfg.n_paths; ++p)
        accs[p] = monitor_path(u0, cfg, model, metric, p);
    for (const auto& a : accs)
        if (a.blown) throw BlowUpError("monitored path blew up", cfg.T);

    const double h0 = metric.h1_norm_projected(u0);
    EnergyReport rep = reduce_energy(accs, record_times(cfg), h0 * h0, constants);
    if (rep.max_h1_residual > 1e-4)
        throw SubspaceMembershipError(
            "invariance_monitor: states drifted out of H1 (relative residual " +
                std::to_string(rep.max_h1_residual) + ")",
            rep.max_h1_residual);
    return rep;
}

EnergyReport h1_energy_monitor(const std::vector<Trajectory>& ensemble,
                               const NonlocalMetric& metric, const Weight& w,
                               const InvarianceConstants& constants) {
    if (ensemble.empty())
        throw ConstraintError("h1_energy_monitor: empty ensemble");
    const auto& times = ensemble.front().times;
    std::vector<EnergyAccum> accs;
    accs.reserve(ensemble.size());
    for (const auto& traj : ensemble) {
        if (traj.times.size() != times.size())
            throw ConstraintError("h1_energy_monitor: inconsistent snapshot times");
        EnergyAccum acc;
        double sup = 0.0, integral = 0.0, prev = 0.0;
        for (std::size_t k = 0; k < traj.states.size(); ++k) {
            const Eigen::VectorXd& u = traj.states[k];
            const double nrm = weighted_norm(u, w);
            if (nrm > 0.0)
                acc.max_residual =
                    std::max(acc.max_residual, metric.h1_residual(u) / nrm);
            const double h = metric.h1_norm_projected(u);
            const double cur = h * h;
            if (k > 0) integral += 0.5 * (prev + cur) * (traj.times[k] - traj.times[k - 1]);
            prev = cur;
            sup = std::max(sup, cur);
            acc.sup.push_back(sup);
            acc.integral.push_back(integral);
        }
        accs.push_back(std::move(acc));
    }
    const Eigen::VectorXd& u0 = ensemble.front().states.front();
    const double h0 = metric.h1_norm_projected(u0);
    EnergyReport rep = reduce_energy(accs, times, h0 * h0, constants);
    if (rep.max_h1_residual > 1e-4)
        throw SubspaceMembershipError(
            "h1_energy_monitor: states outside H1 (relative residual " +
                std::to_string(rep.max_h1_residual) + ")",
            rep.max_h1_residual);
    return rep;
}

}  // namespace nf
