// Timing comparison of the OpenMP-parallel paths against their serial
// reference implementations: kernel assembly, dense vs FFT apply, and
// ensemble integration. The parallel results are required to be
// bit-identical to the serial ones; this binary reports the speedups.

#include <chrono>
#include <cstdio>

#include "nfield/dynamics.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace nf;
namespace chrono = std::chrono;

static double seconds(chrono::steady_clock::time_point a,
                      chrono::steady_clock::time_point b) {
    return chrono::duration<double>(b - a).count();
}

int main() {
#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("OpenMP not enabled\n");
#endif

    const int n = 1025;
    GridPtr grid = make_grid_1d(-8.0, 8.0, n);
    Weight w = Weight::constant(grid, 1.0);

    auto t0 = chrono::steady_clock::now();
    KernelOperator K_serial = assemble(KernelSpec::gaussian(), grid, false);
    auto t1 = chrono::steady_clock::now();
    KernelOperator K = assemble(KernelSpec::gaussian(), grid, true);
    auto t2 = chrono::steady_clock::now();
    const double asm_serial = seconds(t0, t1), asm_par = seconds(t1, t2);
    const double asm_diff = (K_serial.matrix - K.matrix).cwiseAbs().maxCoeff();
    std::printf("assembly %d^2: serial %.3fs, parallel %.3fs (x%.1f), max diff %g\n",
                n, asm_serial, asm_par, asm_serial / asm_par, asm_diff);

    Eigen::VectorXd u(n);
    for (int i = 0; i < n; ++i) u[i] = std::sin(0.37 * i);
    const int reps = 200;
    t0 = chrono::steady_clock::now();
    Eigen::VectorXd dense_out;
    for (int r = 0; r < reps; ++r) dense_out = apply_dense(K, u);
    t1 = chrono::steady_clock::now();
    Eigen::VectorXd fast_out;
    for (int r = 0; r < reps; ++r) fast_out = apply_fast(K, u);
    t2 = chrono::steady_clock::now();
    const double rel =
        (dense_out - fast_out).norm() / std::max(1e-300, dense_out.norm());
    std::printf("apply x%d: dense %.3fs, fft %.3fs (x%.1f), rel diff %g\n", reps,
                seconds(t0, t1), seconds(t1, t2),
                seconds(t0, t1) / seconds(t1, t2), rel);

    // ensemble: serial reference vs parallel paths
    GridPtr g2 = make_grid_1d(0.0, 1.0, 101);
    Model model;
    model.grid = g2;
    model.weight = Weight::constant(g2, 1.0);
    model.f = Activation::logistic();
    model.kernel = assemble(KernelSpec::gaussian(1.0, 0.4), g2);
    Eigen::VectorXd sigma = Eigen::VectorXd::Constant(8, 0.3);
    Eigen::MatrixXd modes(g2->size(), 8);
    for (Eigen::Index i = 0; i < g2->size(); ++i)
        for (int k = 0; k < 8; ++k)
            modes(i, k) = std::cos(M_PI * k * g2->node(i)[0]);
    model.noise = NoiseModel::additive(g2, sigma, modes);

    SimConfig cfg;
    cfg.alpha = 1.0;
    cfg.T = 1.0;
    cfg.dt = 1e-3;
    cfg.n_paths = 256;
    cfg.seed = 7;
    cfg.record_stride = 100;

    Eigen::VectorXd u0 = Eigen::VectorXd::Zero(g2->size());
    t0 = chrono::steady_clock::now();
    EnsembleStats serial = ensemble_moments(u0, cfg, model, {2.0}, false);
    t1 = chrono::steady_clock::now();
    EnsembleStats parallel = ensemble_moments(u0, cfg, model, {2.0}, true);
    t2 = chrono::steady_clock::now();
    const double mdiff =
        (serial.moment - parallel.moment).cwiseAbs().maxCoeff();
    std::printf("ensemble %d paths: serial %.3fs, parallel %.3fs (x%.1f), max diff %g\n",
                cfg.n_paths, seconds(t0, t1), seconds(t1, t2),
                seconds(t0, t1) / seconds(t1, t2), mdiff);
    return 0;
}
