#include "nfield/ergodicity.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "nfield/rng.hpp"

namespace nf {

namespace {

struct LineFit {
    double slope = 0.0, se = 0.0;
    int points = 0;
};

// least-squares slope of log(y) against t
LineFit fit_log_rate(const std::vector<double>& t, const Eigen::VectorXd& y) {
    LineFit fit;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!(y[static_cast<Eigen::Index>(i)] > 0)) continue;
        const double ly = std::log(y[static_cast<Eigen::Index>(i)]);
        sx += t[i];
        sy += ly;
        sxx += t[i] * t[i];
        sxy += t[i] * ly;
        ++m;
    }
    fit.points = m;
    if (m < 3) return fit;
    const double denom = m * sxx - sx * sx;
    if (denom <= 0) return fit;
    fit.slope = (m * sxy - sx * sy) / denom;
    const double icept = (sy - fit.slope * sx) / m;
    double rss = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!(y[static_cast<Eigen::Index>(i)] > 0)) continue;
        const double r =
            std::log(y[static_cast<Eigen::Index>(i)]) - (icept + fit.slope * t[i]);
        rss += r * r;
    }
    fit.se = std::sqrt(rss / (m - 2) / (sxx - sx * sx / m));
    return fit;
}

}  // namespace

// ---------------------------------------------------------------------------
// Certificates

CertifyResult certify(const Model& model, const SymDecomposition& dec,
                      const NonlocalMetric* metric, const NoiseConstants& nc,
                      double alpha, double delta) {
    if (!(delta > 0) || !(delta < 1))
        throw ConstraintError("certify requires delta in (0,1)");
    const auto [lip, f0] = lipschitz_data(model.f);  // throws for heaviside
    const double mass = model.weight.mass;
    const double sqrt_mass = std::sqrt(mass);
    const double norm_k =
        model.kernel ? operator_norm(*model.kernel, model.weight) : 0.0;

    std::vector<std::string> flags;
    if (!nc.c_b_exact) flags.push_back("C_B");
    if (!nc.h1_exact && nc.c_b_h1) {
        flags.push_back("Ct_B");
        flags.push_back("Ctt_B");
    }

    CertifyResult out;

    // --- ergodicity: lambda~ = 2 sqrt2 ||K|| Lip(f) + C_B < 2 alpha
    {
        Certificate c;
        c.assumption = "ergodicity";
        const double lambda_tilde = 2.0 * std::sqrt(2.0) * norm_k * lip + nc.c_b;
        const double lambda = 2.0 * norm_k * lip + nc.c_b;
        const double gamma_tilde = 2.0 * alpha - lambda_tilde - delta;
        const double c_tilde =
            2.0 * std::sqrt(2.0) * norm_k * f0 * f0 * mass + nc.b0;
        c.constants = {
            {"alpha", alpha},
            {"norm_K", norm_k},
            {"lip_f", lip},
            {"f0", f0},
            {"mass", mass},
            {"C_B", nc.c_b},
            {"B0", nc.b0},
            {"lambda_tilde", lambda_tilde},
            {"lambda", lambda},
            {"delta", delta},
            {"C_tilde", c_tilde},
            {"gamma_tilde", gamma_tilde},
        };
        if (gamma_tilde > 0) c.constants["C_hat"] = c_tilde / gamma_tilde;
        c.margin = 2.0 * alpha - lambda_tilde;
        c.pass = c.margin > 0;
        c.empirical_flags = flags;
        out.ergodicity = std::move(c);
    }

    // --- invariance: gamma(delta) = 2 alpha - beta - (9/delta) Ctt_B > 0
    {
        Certificate c;
        c.assumption = "invariance";
        if (dec.definiteness == Definiteness::indefinite || metric == nullptr) {
            c.applicable = false;
            c.note = dec.definiteness == Definiteness::indefinite
                         ? "symmetric part is indefinite; H1 is undefined"
                         : "no nonlocal metric supplied";
        } else if (!nc.c_b_h1 || !nc.c_b_h1_const) {
            c.applicable = false;
            c.note = "H1 noise constants unavailable";
        } else {
            const double c_check = antisym_domination(*metric, dec);
            const double pinv_sq = metric->sqrt_pinv_norm * metric->sqrt_pinv_norm;
            const double ct_b = *nc.c_b_h1;
            const double ctt_b = *nc.c_b_h1_const;
            const double beta = std::sqrt(2.0) * (1.0 + c_check) * pinv_sq *
                                    (lip + std::abs(f0) * sqrt_mass) +
                                ct_b;
            const double gamma_delta = 2.0 * alpha - beta - (9.0 / delta) * ctt_b;
            const double eta = std::sqrt(2.0) * std::abs(f0) * sqrt_mass + ctt_b;
            const double eta_prop =
                std::sqrt(2.0) * std::abs(f0) * sqrt_mass + (1.0 + 9.0 / delta) * ctt_b;
            c.constants = {
                {"alpha", alpha},
                {"lip_f", lip},
                {"f0", f0},
                {"mass", mass},
                {"C_Kcheck", c_check},
                {"sqrt_pinv_norm_sq", pinv_sq},
                {"rank", double(metric->rank)},
                {"rank_tol", metric->rank_tol},
                {"Ct_B", ct_b},
                {"Ctt_B", ctt_b},
                {"beta", beta},
                {"delta", delta},
                {"gamma_delta", gamma_delta},
                {"eta", eta},
                {"eta_prop", eta_prop},
            };
            c.margin = gamma_delta;
            c.pass = c.margin > 0 && std::isfinite(beta);
            c.empirical_flags = flags;
            if (!std::isfinite(c_check))
                c.note = "antisymmetric part maps outside range(K^): C_Kcheck infinite";
        }
        out.invariance = std::move(c);
    }

    // --- monotone: f non-decreasing, w symmetric non-positive definite,
    //     margin 2 alpha - Ct_B
    {
        Certificate c;
        c.assumption = "monotone";
        const bool sym = dec.symmetric_kernel();
        if (!model.f.monotone || dec.definiteness != Definiteness::non_positive ||
            !sym) {
            c.applicable = false;
            if (!model.f.monotone)
                c.note = "activation is not monotone";
            else if (!sym)
                c.note = "kernel is not symmetric";
            else
                c.note = "symmetric part is not non-positive definite";
        } else {
            const double ct_b = nc.c_b_h1.value_or(0.0);
            c.constants = {
                {"alpha", alpha},
                {"Ct_B", ct_b},
            };
            c.margin = 2.0 * alpha - ct_b;
            c.pass = c.margin > 0;
            c.empirical_flags = flags;
        }
        out.monotone = std::move(c);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synchronous coupling

CouplingReport couple(const Eigen::VectorXd& v, const Eigen::VectorXd& z,
                      const SimConfig& cfg, const Model& model, double lambda,
                      const NonlocalMetric* metric, bool parallel) {
    cfg.validate();
    if (!v.allFinite() || !z.allFinite())
        throw ConstraintError("couple: initial fields must be finite");
    if ((v - z).cwiseAbs().maxCoeff() == 0.0)
        throw ConstraintError("couple requires v != z");

    CouplingReport rep;
    rep.bound_rate = lambda - 2.0 * cfg.alpha;
    rep.initial_sq = std::pow(weighted_norm(Eigen::VectorXd(v - z), model.weight), 2);

    const int n_steps = cfg.n_steps();
    std::vector<double> times{0.0};
    for (int k = 1; k <= n_steps; ++k)
        if (k % cfg.record_stride == 0 || k == n_steps) times.push_back(k * cfg.dt);
    const int nt = static_cast<int>(times.size());
    const int P = cfg.n_paths;

    Eigen::MatrixXd dist(P, nt);
    Eigen::MatrixXd dist_h1;
    std::vector<double> path_residual(P, 0.0);
    if (metric) dist_h1.resize(P, nt);

    std::vector<char> blown(P, 0);
#pragma omp parallel for schedule(static) if (parallel)
    for (int p = 0; p < P; ++p) {
        PathRng rng(cfg.seed, static_cast<std::uint64_t>(p));
        Eigen::VectorXd u1 = v, u2 = z;
        Eigen::VectorXd xi(model.noise.m_modes);
        int slot = 0;
        auto record = [&]() {
            const Eigen::VectorXd d = u1 - u2;
            dist(p, slot) = std::pow(weighted_norm(d, model.weight), 2);
            if (metric) {
                const double nd = weighted_norm(d, model.weight);
                if (nd > 0.0)
                    path_residual[p] =
                        std::max(path_residual[p], metric->h1_residual(d) / nd);
                const double h = metric->h1_norm_projected(d);
                dist_h1(p, slot) = h * h;
            }
            ++slot;
        };
        record();
        for (int k = 1; k <= n_steps; ++k) {
            rng.fill_normal(xi);  // identical draws drive both copies
            u1 = step(u1, model, cfg, xi);
            u2 = step(u2, model, cfg, xi);
            if (!u1.allFinite() || !u2.allFinite()) {
                blown[p] = 1;  // surfaced below; throwing inside omp is fatal
                break;
            }
            if (k % cfg.record_stride == 0 || k == n_steps) record();
        }
    }
    for (int p = 0; p < P; ++p)
        if (blown[p]) throw BlowUpError("coupled pair blew up", cfg.T);

    rep.times = times;
    rep.mean_sq.resize(nt);
    rep.se.resize(nt);
    for (int t = 0; t < nt; ++t) {
        double s = 0, ss = 0;
        for (int p = 0; p < P; ++p) {
            s += dist(p, t);
            ss += dist(p, t) * dist(p, t);
        }
        const double mean = s / P;
        rep.mean_sq[t] = mean;
        rep.se[t] = P > 1 ? std::sqrt(std::max(0.0, (ss - P * mean * mean) / (P - 1)) / P)
                          : 0.0;
    }
    const LineFit fit = fit_log_rate(times, rep.mean_sq);
    rep.fitted_rate = fit.slope;
    rep.fit_se = fit.se;

    if (metric) {
        for (int p = 0; p < P; ++p)
            rep.max_h1_residual = std::max(rep.max_h1_residual, path_residual[p]);
        rep.mean_sq_h1.resize(nt);
        rep.se_h1.resize(nt);
        for (int t = 0; t < nt; ++t) {
            double s = 0, ss = 0;
            for (int p = 0; p < P; ++p) {
                s += dist_h1(p, t);
                ss += dist_h1(p, t) * dist_h1(p, t);
            }
            const double mean = s / P;
            rep.mean_sq_h1[t] = mean;
            rep.se_h1[t] =
                P > 1 ? std::sqrt(std::max(0.0, (ss - P * mean * mean) / (P - 1)) / P)
                      : 0.0;
        }
        const Eigen::VectorXd d0 = v - z;
        const double h0 = metric->h1_norm_projected(d0);
        rep.initial_sq_h1 = h0 * h0;
        const LineFit f1 = fit_log_rate(times, rep.mean_sq_h1);
        rep.fitted_rate_h1 = f1.slope;
        rep.fit_se_h1 = f1.se;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Probe dictionary and Fortet-Mourier-style distance

double Dictionary::evaluate(int k, const Eigen::VectorXd& u) const {
    const int np = static_cast<int>(probes.size());
    if (k < np) {
        const double ip = (u.array() * probes[k].array() * dmass.array()).sum();
        return std::tanh(ip);
    }
    const double nrm = std::sqrt((u.array().square() * dmass.array()).sum());
    return std::tanh(nrm * nrm / (1.0 + nrm));
}

Dictionary make_dictionary(GridPtr grid, const Weight& w, int n_probes) {
    Dictionary dict;
    dict.version = "fm-probes-v1";
    dict.grid = grid;
    dict.dmass = w.rho.cwiseProduct(grid->quad());
    const Eigen::Index n = grid->size();

    auto xhat = [&](Eigen::Index i) {
        const auto x = grid->node(i);
        return (x[0] - grid->lo(0)) / (grid->hi(0) - grid->lo(0));
    };
    std::vector<std::function<double(double)>> shapes = {
        [](double) { return 1.0; },
        [](double t) { return 2.0 * t - 1.0; },
        [](double t) { return (2.0 * t - 1.0) * (2.0 * t - 1.0); },
        [](double t) { return std::cos(2.0 * M_PI * t); },
        [](double t) { return std::sin(2.0 * M_PI * t); },
        [](double t) { return std::cos(4.0 * M_PI * t); },
        [](double t) { return std::sin(4.0 * M_PI * t); },
        [](double t) { return std::cos(M_PI * t); },
    };
    const int m = std::min<int>(n_probes, static_cast<int>(shapes.size()));
    for (int k = 0; k < m; ++k) {
        Eigen::VectorXd g(n);
        for (Eigen::Index i = 0; i < n; ++i) g[i] = shapes[k](xhat(i));
        const double nrm = std::sqrt((g.array().square() * dict.dmass.array()).sum());
        if (nrm <= 0.0) continue;
        // 1-Lipschitz clamped coordinate functional needs ||g||_rho <= 1
        dict.probes.push_back(g / nrm);
    }
    return dict;
}

static double dict_mean(const OccupationMeasure& A, const Dictionary& dict, int k) {
    double s = 0.0;
    for (std::size_t i = 0; i < A.samples.size(); ++i)
        s += A.weights[i] * dict.evaluate(k, A.samples[i]);
    return s;
}

double fm_distance(const OccupationMeasure& A, const OccupationMeasure& B,
                   const Dictionary& dict) {
    require_same_grid(*A.grid, *B.grid, "fm_distance");
    require_same_grid(*A.grid, *dict.grid, "fm_distance");
    double d = 0.0;
    for (int k = 0; k < dict.size(); ++k)
        d = std::max(d, std::abs(dict_mean(A, dict, k) - dict_mean(B, dict, k)));
    return d;
}

// ---------------------------------------------------------------------------
// Krylov-Bogoliubov occupation measures

KBReport krylov_bogoliubov(const Eigen::VectorXd& v, const SimConfig& cfg,
                           const Model& model, const std::vector<double>& horizons,
                           const NonlocalMetric* metric, double gamma, double eta,
                           double burn_in, bool parallel) {
    cfg.validate();
    if (horizons.empty()) throw ConstraintError("krylov_bogoliubov: no horizons");
    for (std::size_t i = 1; i < horizons.size(); ++i)
        if (!(horizons[i] > horizons[i - 1]))
            throw ConstraintError("krylov_bogoliubov: horizons must increase");
    if (metric) {
        const double res = metric->h1_residual(v);
        const double nrm = weighted_norm(v, model.weight);
        if (res > 1e-6 * std::max(nrm, 1e-300))
            throw SubspaceMembershipError(
                "krylov_bogoliubov: v outside H1 with tightness requested", res);
    }

    SimConfig run = cfg;
    run.T = horizons.back();
    const int n_steps = run.n_steps();
    const int P = cfg.n_paths;

    // snapshots at the record stride, kept per path
    std::vector<std::vector<double>> snap_t(P);
    std::vector<std::vector<Eigen::VectorXd>> snap_u(P);

    std::vector<char> blown(P, 0);
#pragma omp parallel for schedule(static) if (parallel)
    for (int p = 0; p < P; ++p) {
        PathRng rng(run.seed, static_cast<std::uint64_t>(p));
        Eigen::VectorXd u = v;
        Eigen::VectorXd xi(model.noise.m_modes);
        for (int k = 1; k <= n_steps; ++k) {
            rng.fill_normal(xi);
            u = step(u, model, run, xi);
            if (!u.allFinite()) {
                blown[p] = 1;
                break;
            }
            if (k % run.record_stride == 0) {
                snap_t[p].push_back(k * run.dt);
                snap_u[p].push_back(u);
            }
        }
    }
    for (int p = 0; p < P; ++p)
        if (blown[p]) throw BlowUpError("KB path blew up", run.T);

    KBReport rep;
    rep.horizons = horizons;
    for (double T : horizons) {
        OccupationMeasure occ;
        occ.grid = model.grid;
        occ.horizon = T;
        occ.burn_in = burn_in;
        const double t0 = burn_in * T;
        for (int p = 0; p < P; ++p)
            for (std::size_t k = 0; k < snap_t[p].size(); ++k)
                if (snap_t[p][k] > t0 && snap_t[p][k] <= T)
                    occ.samples.push_back(snap_u[p][k]);
        if (occ.samples.empty())
            throw ConstraintError("krylov_bogoliubov: no samples inside horizon " +
                                  std::to_string(T));
        occ.weights.assign(occ.samples.size(), 1.0 / occ.samples.size());
        rep.measures.push_back(std::move(occ));
    }

    const Dictionary dict = make_dictionary(model.grid, model.weight);
    rep.dictionary_version = dict.version;
    for (std::size_t i = 0; i + 1 < rep.measures.size(); ++i)
        rep.fm_successive.push_back(
            fm_distance(rep.measures[i], rep.measures[i + 1], dict));

    if (metric) {
        const double h0 = metric->h1_norm_projected(v);
        const double base = h0 * h0 + eta;
        for (const auto& occ : rep.measures) {
            double max_res = 0.0;
            for (const double r : {2.0, 4.0, 10.0}) {
                TightnessRow row;
                row.horizon = occ.horizon;
                row.radius = r * std::max(base, 1e-12);
                row.bound = 1.0 - base / row.radius;
                int inside = 0;
                for (std::size_t i = 0; i < occ.samples.size(); ++i) {
                    const double h = metric->h1_norm_projected(occ.samples[i]);
                    const double nrm = weighted_norm(occ.samples[i], model.weight);
                    if (nrm > 0.0)
                        max_res = std::max(max_res,
                                           metric->h1_residual(occ.samples[i]) / nrm);
                    if (gamma * h * h <= row.radius) ++inside;
                }
                row.empirical = double(inside) / double(occ.samples.size());
                row.ok = row.empirical >= row.bound;
                rep.tightness.push_back(row);
            }
            rep.max_h1_residual = std::max(rep.max_h1_residual, max_res);
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Second-moment bound

SecondMomentReport second_moment_bound(const Certificate& ergodicity,
                                       const OccupationMeasure& occ,
                                       const Weight& w) {
    if (!ergodicity.pass)
        throw ConstraintError(
            "second_moment_bound requires a passing ergodicity certificate");
    SecondMomentReport rep;
    rep.c_tilde = ergodicity.constants.at("C_tilde");
    rep.gamma_tilde = ergodicity.constants.at("gamma_tilde");
    if (!(rep.gamma_tilde > 0))
        throw ConstraintError("second_moment_bound: gamma~ <= 0 at this delta");
    rep.c_hat = rep.c_tilde / rep.gamma_tilde;

    const std::size_t n = occ.samples.size();
    std::vector<double> vals(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double nrm = weighted_norm(occ.samples[i], w);
        vals[i] = nrm * nrm;
    }
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += occ.weights[i] * vals[i];
    rep.empirical = mean;

    // batch means over the (path-major) sample order absorb serial
    // correlation within paths
    const int B = std::min<int>(16, static_cast<int>(n));
    std::vector<double> batch(B, 0.0);
    std::vector<double> bw(B, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const int b = static_cast<int>(i * B / n);
        batch[b] += vals[i];
        bw[b] += 1.0;
    }
    double bm = 0.0;
    for (int b = 0; b < B; ++b) {
        batch[b] /= std::max(1.0, bw[b]);
        bm += batch[b] / B;
    }
    double var = 0.0;
    for (int b = 0; b < B; ++b) var += (batch[b] - bm) * (batch[b] - bm);
    var /= std::max(1, B - 1);
    rep.se = std::sqrt(var / B);

    rep.pass = rep.empirical <= rep.c_hat + 3.0 * rep.se;
    return rep;
}

}  // namespace nf
