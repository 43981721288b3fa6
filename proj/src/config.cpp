#include "nfield/config.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "nfield/ergodicity.hpp"
#include "nfield/io.hpp"
#include "nfield/particle.hpp"
#include "nfield/version.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace nf {

using json = nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Strict parsing: unknown keys are rejected everywhere.

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

template <typename T>
T get_req(const json& j, const std::string& where, const char* key) {
    if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + ": bad value for '" + key + "': " + e.what());
    }
}

template <typename T>
T get_opt(const json& j, const std::string& where, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + ": bad value for '" + key + "': " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Section builders

GridPtr parse_grid(const json& j) {
    check_keys(j, "space", {"dim", "bounds", "points", "weight"});
    const int dim = get_req<int>(j, "space", "dim");
    const auto bounds = get_req<std::vector<std::vector<double>>>(j, "space", "bounds");
    const auto points = get_req<std::vector<int>>(j, "space", "points");
    if (static_cast<int>(bounds.size()) != dim ||
        static_cast<int>(points.size()) != dim)
        throw ConfigError("space: bounds/points must list one entry per axis");
    for (const auto& b : bounds)
        if (b.size() != 2) throw ConfigError("space: each bound is [a, b]");
    if (dim == 1) return make_grid_1d(bounds[0][0], bounds[0][1], points[0]);
    return make_grid_2d(bounds[0][0], bounds[0][1], points[0], bounds[1][0],
                        bounds[1][1], points[1]);
}

Weight parse_weight(const json& jspace, GridPtr grid) {
    if (!jspace.contains("weight")) return Weight::constant(grid, 1.0);
    const json& j = jspace.at("weight");
    check_keys(j, "space.weight", {"formula", "value", "exponent", "values"});
    const std::string formula = get_opt<std::string>(j, "space.weight", "formula",
                                                     j.contains("values") ? "table" : "const");
    if (formula == "const")
        return Weight::constant(grid, get_opt<double>(j, "space.weight", "value", 1.0));
    if (formula == "abs_pow")
        return Weight::abs_pow(grid, get_req<double>(j, "space.weight", "exponent"));
    if (formula == "table") {
        const auto vals = get_req<std::vector<double>>(j, "space.weight", "values");
        return Weight::from_values(
            grid, Eigen::Map<const Eigen::VectorXd>(vals.data(), vals.size()));
    }
    throw ConfigError("space.weight: unknown formula '" + formula + "'");
}

Eigen::MatrixXd read_kernel_table(const std::filesystem::path& path,
                                  Eigen::Index n) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open kernel table: " + path.string());
    if (path.extension() == ".csv") {
        Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, n);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::replace(line.begin(), line.end(), ',', ' ');
            std::istringstream ss(line);
            Eigen::Index i, j;
            double v;
            if (ss >> i >> j >> v) {
                if (i < 0 || i >= n || j < 0 || j >= n)
                    throw ConfigError("kernel table index out of range");
                W(i, j) = v;
            }
        }
        return W;
    }
    // dense file with one-line header (n, d, h)
    Eigen::Index rows;
    int d;
    double h;
    if (!(in >> rows >> d >> h))
        throw ConfigError("kernel matrix file must start with 'n d h'");
    if (rows != n) throw ConfigError("kernel matrix size does not match grid");
    Eigen::MatrixXd W(rows, rows);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < rows; ++j)
            if (!(in >> W(i, j))) throw ConfigError("kernel matrix file truncated");
    return W;
}

KernelSpec parse_kernel_spec(const json& j, GridPtr grid) {
    check_keys(j, "kernel",
               {"variant", "scale", "m", "A", "s", "Gamma", "gamma1", "gamma2",
                "b", "c", "a", "freqs", "file", "profile", "normalize_norm"});
    const std::string v = get_req<std::string>(j, "kernel", "variant");
    const double scale = get_opt<double>(j, "kernel", "scale", 1.0);
    if (v == "gaussian")
        return KernelSpec::gaussian(get_opt<double>(j, "kernel", "m", 1.0), scale);
    if (v == "exp_sqrt")
        return KernelSpec::exp_sqrt(get_opt<double>(j, "kernel", "m", 1.0), scale);
    if (v == "rational")
        return KernelSpec::rational(get_opt<double>(j, "kernel", "m", 1.0), scale);
    if (v == "sinc_product") return KernelSpec::sinc_product(scale);
    if (v == "cosine_sum") {
        const auto a = get_req<std::vector<double>>(j, "kernel", "a");
        const auto freqs = get_req<std::vector<std::vector<double>>>(j, "kernel", "freqs");
        std::vector<std::array<double, 2>> m;
        for (const auto& f : freqs) {
            if (f.empty() || f.size() > 2)
                throw ConfigError("kernel.freqs entries must have 1 or 2 components");
            m.push_back({f[0], f.size() == 2 ? f[1] : 0.0});
        }
        return KernelSpec::cosine_sum(a, m, scale);
    }
    if (v == "mexican_hat") return KernelSpec::mexican_hat(scale);
    if (v == "mexican_hat2")
        return KernelSpec::mexican_hat2(get_req<double>(j, "kernel", "A"),
                                        get_req<double>(j, "kernel", "s"), scale);
    if (v == "mexican_hat3")
        return KernelSpec::mexican_hat3(get_req<double>(j, "kernel", "Gamma"),
                                        get_req<double>(j, "kernel", "gamma1"),
                                        get_req<double>(j, "kernel", "gamma2"), scale);
    if (v == "damped_trig")
        return KernelSpec::damped_trig(get_req<double>(j, "kernel", "b"), scale);
    if (v == "wizard_hat") return KernelSpec::wizard_hat(scale);
    if (v == "constant")
        return KernelSpec::constant(get_req<double>(j, "kernel", "c"), scale);
    if (v == "table") {
        const std::string file = get_req<std::string>(j, "kernel", "file");
        return KernelSpec::table(read_kernel_table(file, grid->size()));
    }
    if (v == "custom_convolution") {
        const auto prof = get_req<std::vector<std::vector<double>>>(j, "kernel", "profile");
        std::vector<std::pair<double, double>> p;
        for (const auto& row : prof) {
            if (row.size() != 2)
                throw ConfigError("kernel.profile entries must be [offset, value]");
            p.push_back({row[0], row[1]});
        }
        return KernelSpec::custom_convolution(p, scale);
    }
    throw ConfigError("kernel: unknown variant '" + v + "'");
}

Activation parse_activation(const json& j) {
    check_keys(j, "activation", {"variant", "value", "file", "lip", "xs", "ys"});
    const std::string v = get_req<std::string>(j, "activation", "variant");
    if (v == "relu") return Activation::relu();
    if (v == "logistic") return Activation::logistic();
    if (v == "tanh") return Activation::tanh();
    if (v == "heaviside") return Activation::heaviside();
    if (v == "sqrt_logistic") return Activation::sqrt_logistic();
    if (v == "constant")
        return Activation::constant(get_req<double>(j, "activation", "value"));
    if (v == "custom") {
        const double lip = get_req<double>(j, "activation", "lip");
        if (j.contains("file")) {
            auto [xs, ys] = read_xy_csv(get_req<std::string>(j, "activation", "file"));
            return Activation::custom(xs, ys, lip);
        }
        return Activation::custom(get_req<std::vector<double>>(j, "activation", "xs"),
                                  get_req<std::vector<double>>(j, "activation", "ys"),
                                  lip);
    }
    throw ConfigError("activation: unknown variant '" + v + "'");
}

Eigen::MatrixXd fourier_modes(const Grid& grid, int m) {
    Eigen::MatrixXd modes(grid.size(), m);
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
        const double t =
            (grid.node(i)[0] - grid.lo(0)) / (grid.hi(0) - grid.lo(0));
        for (int k = 0; k < m; ++k) {
            if (k == 0)
                modes(i, k) = 1.0;
            else {
                const int jf = (k + 1) / 2;
                modes(i, k) = (k % 2 == 1)
                                  ? std::sqrt(2.0) * std::cos(2.0 * M_PI * jf * t)
                                  : std::sqrt(2.0) * std::sin(2.0 * M_PI * jf * t);
            }
        }
    }
    return modes;
}

// resolved model pieces for one run
struct Setup {
    GridPtr grid;
    Weight weight;
    std::shared_ptr<KernelOperator> kernel;  // null when the model has K = 0
    Activation f = Activation::logistic();
    std::optional<SymDecomposition> dec;
    std::optional<NonlocalMetric> metric;
    std::string metric_note;
    Model model;
    SimConfig sim;
    json experiment;
    std::filesystem::path outdir;
    std::uint64_t seed = 0;
    json resolved;
    double delta = 0.5;
    int trials = 200;
};

NoiseModel parse_noise(const json& j, const Setup& s) {
    check_keys(j, "noise",
               {"variant", "sigma", "modes", "modes_file", "b", "scale", "offset",
                "population"});
    const std::string v = get_req<std::string>(j, "noise", "variant");
    if (v == "additive") {
        const auto sig = get_req<std::vector<double>>(j, "noise", "sigma");
        const int m = static_cast<int>(sig.size());
        Eigen::VectorXd sigma = Eigen::Map<const Eigen::VectorXd>(sig.data(), m);
        Eigen::MatrixXd modes;
        if (j.contains("modes_file")) {
            modes = read_dense_matrix(get_req<std::string>(j, "noise", "modes_file"));
            if (modes.cols() < m || modes.rows() != s.grid->size())
                throw ConfigError("noise.modes_file shape mismatch");
            modes = modes.leftCols(m);
        } else {
            const std::string family =
                get_opt<std::string>(j, "noise", "modes", "fourier");
            if (family == "fourier") {
                modes = fourier_modes(*s.grid, m);
            } else if (family == "h1_eigen") {
                if (!s.metric)
                    throw ConfigError(
                        "noise.modes = h1_eigen needs a definite kernel metric" +
                        (s.metric_note.empty() ? "" : " (" + s.metric_note + ")"));
                if (s.metric->rank < m)
                    throw ConfigError("noise.modes = h1_eigen: rank below mode count");
                modes = s.metric->eigenfields.leftCols(m);
            } else if (family == "nodes") {
                if (m != s.grid->size())
                    throw ConfigError("noise.modes = nodes requires sigma per node");
                const Eigen::VectorXd d =
                    s.weight.rho.cwiseProduct(s.grid->quad()).cwiseSqrt();
                modes = Eigen::MatrixXd::Zero(s.grid->size(), m);
                for (int k = 0; k < m; ++k)
                    if (d[k] > 0) modes(k, k) = 1.0 / d[k];
            } else {
                throw ConfigError("noise.modes: unknown family '" + family + "'");
            }
        }
        return NoiseModel::additive(s.grid, std::move(sigma), std::move(modes));
    }
    if (v == "pointwise") {
        const std::string base = get_opt<std::string>(j, "noise", "b", "tanh");
        Activation act = Activation::tanh();
        if (base == "tanh")
            act = Activation::tanh();
        else if (base == "logistic")
            act = Activation::logistic();
        else if (base == "relu")
            act = Activation::relu();
        else if (base == "identity")
            act = Activation::custom({-1e6, 1e6}, {-1e6, 1e6}, 1.0);
        else
            throw ConfigError("noise.b: unknown scalar map '" + base + "'");
        return NoiseModel::pointwise(s.grid, act,
                                     get_opt<double>(j, "noise", "scale", 1.0),
                                     get_opt<double>(j, "noise", "offset", 0.0));
    }
    if (v == "kernel_mollified") {
        if (!s.kernel)
            throw ConfigError("kernel_mollified noise requires a kernel section");
        return NoiseModel::kernel_mollified(
            s.kernel, s.f, get_req<double>(j, "noise", "population"));
    }
    throw ConfigError("noise: unknown variant '" + v + "'");
}

Eigen::VectorXd parse_initial(const json& j, const Setup& s, const char* where) {
    check_keys(j, where, {"formula", "value", "amplitude", "center", "width",
                          "index", "values"});
    const std::string formula = get_opt<std::string>(j, where, "formula", "zero");
    const Eigen::Index n = s.grid->size();
    if (formula == "zero") return Eigen::VectorXd::Zero(n);
    if (formula == "const")
        return Eigen::VectorXd::Constant(n, get_req<double>(j, where, "value"));
    if (formula == "bump") {
        const double a = get_opt<double>(j, where, "amplitude", 1.0);
        const double c = get_opt<double>(j, where, "center", 0.0);
        const double wdt = get_opt<double>(j, where, "width", 1.0);
        Eigen::VectorXd u(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto x = s.grid->node(i);
            const double r2 = s.grid->dim() == 1
                                  ? (x[0] - c) * (x[0] - c)
                                  : (x[0] - c) * (x[0] - c) + x[1] * x[1];
            u[i] = a * std::exp(-0.5 * r2 / (wdt * wdt));
        }
        return u;
    }
    if (formula == "mode") {
        if (!s.metric)
            throw ConfigError(std::string(where) +
                              ": formula 'mode' needs a definite kernel metric");
        const int idx = get_opt<int>(j, where, "index", 0);
        if (idx < 0 || idx >= s.metric->rank)
            throw ConfigError(std::string(where) + ": mode index out of range");
        return get_opt<double>(j, where, "amplitude", 1.0) *
               s.metric->eigenfields.col(idx);
    }
    if (formula == "values") {
        const auto vals = get_req<std::vector<double>>(j, where, "values");
        if (static_cast<Eigen::Index>(vals.size()) != n)
            throw ConfigError(std::string(where) + ": values length != node count");
        return Eigen::Map<const Eigen::VectorXd>(vals.data(), n);
    }
    throw ConfigError(std::string(where) + ": unknown formula '" + formula + "'");
}

Setup build_setup(const json& cfg, const RunOverrides& overrides) {
    check_keys(cfg, "config",
               {"space", "kernel", "activation", "noise", "dynamics", "experiment",
                "output_dir", "seed"});
    Setup s;
    if (!cfg.contains("space")) throw ConfigError("config: missing 'space' section");
    s.grid = parse_grid(cfg.at("space"));
    s.weight = parse_weight(cfg.at("space"), s.grid);

    if (!cfg.contains("activation"))
        throw ConfigError("config: missing 'activation' section");
    s.f = parse_activation(cfg.at("activation"));

    if (cfg.contains("kernel")) {
        KernelSpec spec = parse_kernel_spec(cfg.at("kernel"), s.grid);
        KernelOperator K = assemble(spec, s.grid);
        if (cfg.at("kernel").contains("normalize_norm")) {
            const double target =
                cfg.at("kernel").at("normalize_norm").get<double>();
            const double nrm = operator_norm(K, s.weight);
            if (!(nrm > 0))
                throw ConfigError("kernel.normalize_norm: zero operator");
            spec.scale *= target / nrm;
            if (spec.family == KernelSpec::Family::table)
                spec.table_values *= target / nrm;
            K = assemble(spec, s.grid);
        }
        s.kernel = std::make_shared<KernelOperator>(std::move(K));
        s.dec = decompose(*s.kernel, s.weight);
        if (s.dec->definiteness != Definiteness::indefinite) {
            try {
                s.metric = build_metric(*s.dec, s.weight);
            } catch (const TrivialSubspaceError& e) {
                s.metric_note = e.what();
            }
        } else {
            s.metric_note = "symmetric part is indefinite";
        }
    }

    if (!cfg.contains("noise")) throw ConfigError("config: missing 'noise' section");
    s.model.grid = s.grid;
    s.model.weight = s.weight;
    if (s.kernel) s.model.kernel = *s.kernel;
    s.model.f = s.f;
    s.model.noise = parse_noise(cfg.at("noise"), s);

    const json& dyn = cfg.contains("dynamics") ? cfg.at("dynamics") : json::object();
    check_keys(dyn, "dynamics",
               {"alpha", "T", "dt", "scheme", "n_paths", "record_stride"});
    s.sim.alpha = get_opt<double>(dyn, "dynamics", "alpha", 1.0);
    s.sim.T = get_opt<double>(dyn, "dynamics", "T", 1.0);
    s.sim.dt = get_opt<double>(dyn, "dynamics", "dt", 1e-2);
    const std::string scheme =
        get_opt<std::string>(dyn, "dynamics", "scheme", "exponential_euler");
    if (scheme == "exponential_euler")
        s.sim.scheme = Scheme::exponential_euler;
    else if (scheme == "euler_maruyama")
        s.sim.scheme = Scheme::euler_maruyama;
    else
        throw ConfigError("dynamics.scheme: unknown scheme '" + scheme + "'");
    s.sim.n_paths = get_opt<int>(dyn, "dynamics", "n_paths", 1);
    s.sim.record_stride = get_opt<int>(dyn, "dynamics", "record_stride", 1);

    if (!cfg.contains("experiment"))
        throw ConfigError("config: missing 'experiment' section");
    s.experiment = cfg.at("experiment");

    s.seed = get_opt<std::uint64_t>(cfg, "config", "seed", 0);
    if (overrides.seed) s.seed = *overrides.seed;
    s.sim.seed = s.seed;

    std::string outdir = get_opt<std::string>(cfg, "config", "output_dir", "out");
    if (overrides.output_dir) outdir = *overrides.output_dir;
    std::filesystem::path out(outdir);
    if (out.is_relative()) {
        if (const char* root = std::getenv("NFIELD_OUTPUT_ROOT")) out = root / out;
    }
    s.outdir = out;

    s.delta = get_opt<double>(s.experiment, "experiment", "delta", 0.5);
    s.trials = get_opt<int>(s.experiment, "experiment", "trials", 200);

    // resolved configuration for the manifest (seed/output after overrides)
    s.resolved = cfg;
    s.resolved["seed"] = s.seed;
    s.resolved["output_dir"] = s.outdir.string();
    return s;
}

// ---------------------------------------------------------------------------
// Artifact helpers

json certificate_json(const Certificate& c) {
    json j;
    j["assumption"] = c.assumption;
    j["applicable"] = c.applicable;
    if (!c.applicable) {
        j["note"] = c.note;
        return j;
    }
    j["constants"] = c.constants;
    j["margin"] = c.margin;
    j["verdict"] = c.pass ? "pass" : "fail";
    j["empirical_constants"] = c.empirical_flags;
    if (!c.note.empty()) j["note"] = c.note;
    return j;
}

void write_manifest(const Setup& s, const std::string& experiment,
                    double wall_sec, const json& extra = json::object()) {
    json m;
    m["tool"] = "nfield";
    m["version"] = kVersion;
    m["experiment"] = experiment;
    m["config"] = s.resolved;
    m["wall_clock_sec"] = wall_sec;
    json grid;
    grid["dim"] = s.grid->dim();
    grid["nodes"] = s.grid->size();
    grid["truncation_radius"] = s.grid->truncation_radius();
    m["grid"] = grid;
    for (const auto& [k, v] : extra.items()) m[k] = v;
    std::ofstream out(s.outdir / "manifest.json");
    out << m.dump(2) << '\n';
}

NoiseConstants setup_noise_constants(const Setup& s) {
    return estimate_constants(s.model.noise, s.weight,
                              s.metric ? &*s.metric : nullptr, s.trials, s.seed);
}

CertifyResult setup_certify(const Setup& s, const NoiseConstants& nc) {
    if (!s.dec) {
        // no kernel: decompose a zero operator so certificates still evaluate
        KernelSpec zero = KernelSpec::constant(0.0);
        KernelOperator K0 = assemble(zero, s.grid);
        SymDecomposition dec0 = decompose(K0, s.weight);
        return certify(s.model, dec0, nullptr, nc, s.sim.alpha, s.delta);
    }
    return certify(s.model, *s.dec, s.metric ? &*s.metric : nullptr, nc,
                   s.sim.alpha, s.delta);
}

// ---------------------------------------------------------------------------
// Experiments

int run_simulate(Setup& s) {
    check_keys(s.experiment, "experiment",
               {"type", "initial", "p_list", "export_trajectory", "delta", "trials"});
    const Eigen::VectorXd u0 =
        s.experiment.contains("initial")
            ? parse_initial(s.experiment.at("initial"), s, "experiment.initial")
            : Eigen::VectorXd::Zero(s.grid->size());
    const auto p_list =
        get_opt<std::vector<double>>(s.experiment, "experiment", "p_list", {2.0});

    const EnsembleStats stats = ensemble_moments(u0, s.sim, s.model, p_list);
    {
        CsvWriter csv(s.outdir / "moments.csv", {"time", "p", "estimate", "stderr"});
        for (std::size_t t = 0; t < stats.times.size(); ++t)
            for (std::size_t j = 0; j < p_list.size(); ++j)
                csv.row({stats.times[t], p_list[j], stats.moment(t, j),
                         stats.stderr_(t, j)});
    }
    if (get_opt<bool>(s.experiment, "experiment", "export_trajectory", false)) {
        const Trajectory traj = simulate(u0, s.sim, s.model, 0);
        std::vector<std::string> header{"time"};
        for (Eigen::Index i = 0; i < s.grid->size(); ++i)
            header.push_back("node" + std::to_string(i));
        CsvWriter csv(s.outdir / "trajectory.csv", header);
        for (std::size_t k = 0; k < traj.times.size(); ++k) {
            std::vector<double> row{traj.times[k]};
            for (Eigen::Index i = 0; i < s.grid->size(); ++i)
                row.push_back(traj.states[k][i]);
            csv.row(row);
        }
    }
    json extra;
    extra["blowup_fraction"] = stats.blowup_fraction;
    extra["envelope_warning"] = stats.envelope_warning;
    write_manifest(s, "simulate", 0.0, extra);
    return 0;
}

int run_certify(Setup& s) {
    check_keys(s.experiment, "experiment", {"type", "delta", "trials"});
    const NoiseConstants nc = setup_noise_constants(s);
    const CertifyResult res = setup_certify(s, nc);
    json j;
    j["ergodicity"] = certificate_json(res.ergodicity);
    j["invariance"] = certificate_json(res.invariance);
    j["monotone"] = certificate_json(res.monotone);
    j["noise_audit"] = {{"max_ratio", nc.audit_max_ratio},
                        {"violated_analytic_bound", nc.audit_violated},
                        {"h1_fit_residual", nc.h1_fit_residual},
                        {"h1_mode_residual", nc.h1_mode_residual}};
    std::ofstream out(s.outdir / "certificates.json");
    out << j.dump(2) << '\n';
    write_manifest(s, "certify", 0.0);
    // exit 2 distinguishes a scientific negative result from tooling errors
    return res.ergodicity.pass ? 0 : 2;
}

int run_spectrum(Setup& s) {
    check_keys(s.experiment, "experiment",
               {"type", "rank_tol", "export_eigenvectors", "delta", "trials"});
    if (!s.kernel) throw ConfigError("spectrum experiment requires a kernel");
    const NormReport nrep = operator_norm_report(*s.kernel, s.weight);
    json j;
    j["definiteness"] = to_string(s.dec->definiteness);
    j["lambda_min_form"] = s.dec->lambda_min;
    j["lambda_max_form"] = s.dec->lambda_max;
    j["operator_norm"] = nrep.norm;
    if (nrep.sqrt_kappa) j["sqrt_kappa"] = *nrep.sqrt_kappa;
    if (nrep.k_rho) j["k_rho"] = *nrep.k_rho;
    if (nrep.k_lambda_rho) j["k_lambda_rho"] = *nrep.k_lambda_rho;
    j["within_bounds"] = nrep.within_bounds;
    if (s.metric) {
        j["rank"] = s.metric->rank;
        j["sqrt_norm"] = s.metric->sqrt_norm;
        j["sqrt_pinv_norm"] = s.metric->sqrt_pinv_norm;
        CsvWriter csv(s.outdir / "spectrum.csv", {"index", "eigenvalue"});
        for (int k = 0; k < s.metric->rank; ++k)
            csv.row({double(k), s.metric->eigenvalues[k]});
        if (get_opt<bool>(s.experiment, "experiment", "export_eigenvectors", false))
            write_dense_matrix(s.outdir / "eigenvectors.mat", s.metric->eigenfields);
    } else {
        j["metric_note"] = s.metric_note;
    }
    std::ofstream out(s.outdir / "spectrum.json");
    out << j.dump(2) << '\n';
    write_manifest(s, "spectrum", 0.0);
    return 0;
}

int run_invariant(Setup& s) {
    check_keys(s.experiment, "experiment",
               {"type", "initial", "horizons", "delta", "trials", "burn_in",
                "second_moment", "energy_monitor"});
    const Eigen::VectorXd v =
        parse_initial(s.experiment.at("initial"), s, "experiment.initial");
    const auto horizons =
        get_req<std::vector<double>>(s.experiment, "experiment", "horizons");
    const double burn_in = get_opt<double>(s.experiment, "experiment", "burn_in", 0.1);

    const NoiseConstants nc = setup_noise_constants(s);
    const CertifyResult certs = setup_certify(s, nc);

    double gamma = 0.0, eta = 0.0;
    const bool tightness = s.metric && certs.invariance.applicable;
    if (tightness) {
        gamma = 2.0 * s.sim.alpha - certs.invariance.constants.at("beta");
        eta = certs.invariance.constants.at("eta");
    }
    const KBReport kb = krylov_bogoliubov(v, s.sim, s.model, horizons,
                                          tightness ? &*s.metric : nullptr, gamma,
                                          eta, burn_in);

    {
        CsvWriter csv(s.outdir / "kb_fm.csv", {"horizon_a", "horizon_b", "distance"});
        for (std::size_t i = 0; i < kb.fm_successive.size(); ++i)
            csv.row({horizons[i], horizons[i + 1], kb.fm_successive[i]});
    }
    if (!kb.tightness.empty()) {
        CsvWriter csv(s.outdir / "tightness.csv",
                      {"horizon", "radius", "empirical_mass", "bound"});
        for (const auto& row : kb.tightness)
            csv.row({row.horizon, row.radius, row.empirical, row.bound});
    }

    json j;
    j["dictionary"] = kb.dictionary_version;
    j["fm_successive"] = kb.fm_successive;
    j["burn_in"] = burn_in;
    j["max_h1_residual"] = kb.max_h1_residual;
    j["certificates"] = {{"ergodicity", certificate_json(certs.ergodicity)},
                         {"invariance", certificate_json(certs.invariance)},
                         {"monotone", certificate_json(certs.monotone)}};

    if (get_opt<bool>(s.experiment, "experiment", "second_moment", true) &&
        certs.ergodicity.pass) {
        const SecondMomentReport sm =
            second_moment_bound(certs.ergodicity, kb.measures.back(), s.weight);
        j["second_moment"] = {{"c_hat", sm.c_hat},
                              {"empirical", sm.empirical},
                              {"se", sm.se},
                              {"pass", sm.pass}};
    }

    if (get_opt<bool>(s.experiment, "experiment", "energy_monitor", false)) {
        if (!s.metric || !certs.invariance.applicable)
            throw ConfigError("energy_monitor needs an applicable invariance certificate");
        InvarianceConstants ic;
        ic.beta = certs.invariance.constants.at("beta");
        ic.gamma_delta = certs.invariance.constants.at("gamma_delta");
        ic.eta = certs.invariance.constants.at("eta_prop");
        ic.delta = s.delta;
        const EnergyReport er = invariance_monitor(v, s.sim, s.model, *s.metric, ic);
        CsvWriter csv(s.outdir / "energy.csv",
                      {"time", "sup_term", "int_term", "lhs", "rhs", "se"});
        for (std::size_t t = 0; t < er.times.size(); ++t)
            csv.row({er.times[t], er.sup_term[t], er.int_term[t],
                     er.sup_term[t] + er.int_term[t], er.rhs[t], er.se[t]});
        j["energy_violations"] = er.violations.size();
    }

    std::ofstream out(s.outdir / "kb.json");
    out << j.dump(2) << '\n';
    write_manifest(s, "invariant", 0.0);
    return 0;
}

int run_couple(Setup& s) {
    check_keys(s.experiment, "experiment", {"type", "v", "z", "delta", "trials"});
    const Eigen::VectorXd v = parse_initial(s.experiment.at("v"), s, "experiment.v");
    const Eigen::VectorXd z = parse_initial(s.experiment.at("z"), s, "experiment.z");

    const NoiseConstants nc = setup_noise_constants(s);
    const CertifyResult certs = setup_certify(s, nc);
    const double lambda = certs.ergodicity.constants.at("lambda");

    // the H1 distance is only meaningful when the initial difference
    // lies in H1
    const NonlocalMetric* metric = nullptr;
    if (s.metric) {
        const Eigen::VectorXd d0 = v - z;
        const double nrm = weighted_norm(d0, s.weight);
        if (nrm > 0 && s.metric->h1_residual(d0) <= 1e-6 * nrm)
            metric = &*s.metric;
    }
    const CouplingReport rep = couple(v, z, s.sim, s.model, lambda, metric);

    const bool has_h1 = rep.mean_sq_h1.size() > 0;
    std::vector<std::string> header{"time", "mean_sq_dist", "stderr"};
    if (has_h1) {
        header.push_back("mean_sq_dist_h1");
        header.push_back("stderr_h1");
    }
    CsvWriter csv(s.outdir / "coupling.csv", header);
    for (std::size_t t = 0; t < rep.times.size(); ++t) {
        std::vector<double> row{rep.times[t], rep.mean_sq[t], rep.se[t]};
        if (has_h1) {
            row.push_back(rep.mean_sq_h1[t]);
            row.push_back(rep.se_h1[t]);
        }
        csv.row(row);
    }

    // envelope audit whenever the ergodicity certificate passed
    bool envelope_ok = true;
    if (certs.ergodicity.pass) {
        for (std::size_t t = 0; t < rep.times.size(); ++t) {
            const double env =
                rep.initial_sq * std::exp(rep.bound_rate * rep.times[t]);
            const double tol =
                rep.mean_sq[t] > 0 ? 3.0 * rep.se[t] : 0.0;
            if (rep.mean_sq[t] > env + tol + 1e-14) envelope_ok = false;
        }
    }

    json j;
    j["fitted_rate"] = rep.fitted_rate;
    j["fit_se"] = rep.fit_se;
    j["bound_rate"] = rep.bound_rate;
    j["initial_sq"] = rep.initial_sq;
    j["envelope_ok"] = envelope_ok;
    if (has_h1) {
        j["fitted_rate_h1"] = rep.fitted_rate_h1;
        j["fit_se_h1"] = rep.fit_se_h1;
        j["initial_sq_h1"] = rep.initial_sq_h1;
        j["max_h1_residual"] = rep.max_h1_residual;
    }
    j["certificates"] = {{"ergodicity", certificate_json(certs.ergodicity)},
                         {"monotone", certificate_json(certs.monotone)}};
    std::ofstream out(s.outdir / "coupling.json");
    out << j.dump(2) << '\n';
    write_manifest(s, "couple", 0.0);
    return 0;
}

InitialLaw parse_law(const json& j, const char* where) {
    check_keys(j, where, {"law", "a", "b"});
    InitialLaw law;
    const std::string name = get_opt<std::string>(j, where, "law", "constant");
    if (name == "constant")
        law.kind = InitialLaw::Kind::constant;
    else if (name == "uniform")
        law.kind = InitialLaw::Kind::uniform;
    else if (name == "gaussian")
        law.kind = InitialLaw::Kind::gaussian;
    else
        throw ConfigError(std::string(where) + ": unknown law '" + name + "'");
    law.a = get_opt<double>(j, where, "a", 0.0);
    law.b = get_opt<double>(j, where, "b", 0.0);
    return law;
}

int run_particle(Setup& s) {
    check_keys(s.experiment, "experiment",
               {"type", "P", "N", "T", "dt_report", "initial", "w_tilde", "delta",
                "trials"});
    ParticleConfig pc;
    pc.P = get_req<int>(s.experiment, "experiment", "P");
    const auto N = get_req<std::vector<int>>(s.experiment, "experiment", "N");
    pc.N_k = N;
    pc.alpha = s.sim.alpha;
    pc.f = s.f;
    pc.T = get_opt<double>(s.experiment, "experiment", "T", s.sim.T);
    pc.dt_report = get_opt<double>(s.experiment, "experiment", "dt_report", 0.1);
    pc.seed = s.seed;
    pc.initial.assign(
        pc.P, parse_law(s.experiment.contains("initial") ? s.experiment.at("initial")
                                                         : json::object(),
                        "experiment.initial"));
    if (s.experiment.contains("w_tilde")) {
        const auto rows =
            get_req<std::vector<std::vector<double>>>(s.experiment, "experiment", "w_tilde");
        pc.w_tilde.resize(pc.P, pc.P);
        for (int i = 0; i < pc.P; ++i) {
            if (static_cast<int>(rows[i].size()) != pc.P)
                throw ConfigError("experiment.w_tilde must be P x P");
            for (int j2 = 0; j2 < pc.P; ++j2) pc.w_tilde(i, j2) = rows[i][j2];
        }
    } else {
        // populations at x = k/P on [0,1]: w~(k,l) = w(k/P, l/P)/P
        if (!s.resolved.contains("kernel"))
            throw ConfigError("particle: give w_tilde or a shift-invariant kernel");
        const KernelSpec spec = parse_kernel_spec(s.resolved.at("kernel"), s.grid);
        if (!spec.shift_invariant)
            throw ConfigError("particle: table kernels need explicit w_tilde");
        pc.w_tilde.resize(pc.P, pc.P);
        for (int k = 0; k < pc.P; ++k)
            for (int l = 0; l < pc.P; ++l)
                pc.w_tilde(k, l) =
                    spec.eval_offset({double(k - l) / pc.P, 0.0}, 1) / pc.P;
    }

    const PopulationPath path = simulate_particles(pc);
    CsvWriter csv(s.outdir / "particle.csv", {"time", "pop", "mean", "var", "jumps"});
    for (std::size_t t = 0; t < path.times.size(); ++t)
        for (int k = 0; k < pc.P; ++k)
            csv.row({path.times[t], double(k), path.mean(t, k), path.var(t, k),
                     path.jumps(t, k)});
    json j;
    j["candidates"] = path.candidates;
    j["accepted"] = path.accepted;
    j["cap_refreshes"] = path.cap_refreshes;
    j["negative_rate_clips"] = path.negative_rate_clips;
    std::ofstream out(s.outdir / "particle.json");
    out << j.dump(2) << '\n';
    write_manifest(s, "particle", 0.0);
    return 0;
}

int run_compare(Setup& s) {
    check_keys(s.experiment, "experiment",
               {"type", "P", "N_ladder", "n_runs", "T", "initial", "delta",
                "trials"});
    if (!s.kernel) throw ConfigError("compare experiment requires a kernel");
    // the comparison rebuilds its own [0,1] grid and kernel spec
    const json& jk = s.resolved.at("kernel");
    KernelSpec spec = parse_kernel_spec(jk, s.grid);
    const int P = get_req<int>(s.experiment, "experiment", "P");
    const auto ladder =
        get_req<std::vector<double>>(s.experiment, "experiment", "N_ladder");
    const int n_runs = get_opt<int>(s.experiment, "experiment", "n_runs", 5);
    const double T = get_opt<double>(s.experiment, "experiment", "T", s.sim.T);
    const InitialLaw law = parse_law(
        s.experiment.contains("initial") ? s.experiment.at("initial") : json::object(),
        "experiment.initial");

    const CompareReport rep =
        meanfield_compare(spec, s.f, s.sim.alpha, P, s.grid->npts(0), ladder, T,
                          s.sim.dt, n_runs, s.seed, law);
    CsvWriter csv(s.outdir / "compare.csv", {"N", "discrepancy", "ci_low", "ci_high"});
    for (std::size_t i = 0; i < rep.N_values.size(); ++i)
        csv.row({rep.N_values[i], rep.discrepancy[i], rep.ci_low[i], rep.ci_high[i]});
    json j;
    j["decreasing"] = rep.decreasing;
    std::ofstream out(s.outdir / "compare.json");
    out << j.dump(2) << '\n';
    write_manifest(s, "compare", 0.0);
    return 0;
}

json load_config_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config parse error: " + std::string(e.what()));
    }
    // a manifest is itself runnable: its resolved config reproduces the run
    if (j.contains("tool") && j.contains("config")) return j.at("config");
    return j;
}

}  // namespace

int run_experiment(const std::filesystem::path& config_path,
                   const RunOverrides& overrides) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
#ifdef _OPENMP
        if (overrides.threads) omp_set_num_threads(*overrides.threads);
#endif
        const json cfg = load_config_json(config_path);
        Setup s = build_setup(cfg, overrides);
        std::filesystem::create_directories(s.outdir);
        const std::string type =
            get_req<std::string>(s.experiment, "experiment", "type");
        int code = 0;
        if (type == "simulate")
            code = run_simulate(s);
        else if (type == "certify")
            code = run_certify(s);
        else if (type == "spectrum")
            code = run_spectrum(s);
        else if (type == "invariant")
            code = run_invariant(s);
        else if (type == "couple")
            code = run_couple(s);
        else if (type == "particle")
            code = run_particle(s);
        else if (type == "compare")
            code = run_compare(s);
        else
            throw ConfigError("experiment.type: unknown experiment '" + type + "'");
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        // refresh the manifest wall clock without re-running
        {
            std::ifstream in(s.outdir / "manifest.json");
            if (in) {
                json m = json::parse(in);
                in.close();
                m["wall_clock_sec"] = wall;
                std::ofstream out(s.outdir / "manifest.json");
                out << m.dump(2) << '\n';
            }
        }
        return code;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

int validate_config(const std::filesystem::path& config_path) {
    try {
        const json cfg = load_config_json(config_path);
        Setup s = build_setup(cfg, RunOverrides{});
        const std::string type =
            get_req<std::string>(s.experiment, "experiment", "type");
        std::cout << "ok: experiment '" << type << "' on " << s.grid->dim()
                  << "d grid with " << s.grid->size() << " nodes, h = ";
        for (int a = 0; a < s.grid->dim(); ++a)
            std::cout << (a ? " x " : "") << s.grid->spacing(a);
        std::cout << ", weight mass " << s.weight.mass << '\n';
        if (s.kernel) {
            const CaseReport cases = case_diagnostics(*s.grid, s.weight, *s.kernel);
            std::cout << "cases: (i) " << (cases.case_i ? "yes" : "no") << ", (ii) "
                      << (cases.case_ii ? "yes" : "no") << ", (iii) "
                      << (cases.case_iii ? "yes" : "no") << '\n';
            std::cout << "definiteness: " << to_string(s.dec->definiteness) << '\n';
        }
        if (type == "certify" || type == "couple" || type == "invariant") {
            if (!s.f.certificate_eligible)
                throw NotLipschitzError("activation '" + s.f.name() +
                                        "' is not certificate-eligible");
            const NoiseConstants nc =
                estimate_constants(s.model.noise, s.weight,
                                   s.metric ? &*s.metric : nullptr,
                                   std::min(s.trials, 50), s.seed);
            const CertifyResult certs = setup_certify(s, nc);
            std::cout << "certificate preview: ergodicity margin "
                      << certs.ergodicity.margin
                      << (certs.ergodicity.pass ? " (pass)" : " (fail)") << '\n';
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "invalid: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace nf
