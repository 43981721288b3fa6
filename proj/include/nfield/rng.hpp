#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>

namespace nf {

// Deterministic stream derivation: stream k is seeded by mixing
// (master_seed, k), so ensembles are order-independent and identical
// across thread counts. Gaussian variates are produced by an explicit
// Box-Muller transform instead of std::normal_distribution, whose
// output is implementation-defined.
class PathRng {
public:
    PathRng(std::uint64_t master_seed, std::uint64_t stream)
        : engine_(mix(master_seed, stream)) {}

    // uniform in (0,1]
    double uniform_oc() {
        return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    }

    // uniform in [0,1)
    double uniform_co() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_oc();
        const double u2 = uniform_co();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    void fill_normal(Eigen::VectorXd& out) {
        for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = normal();
    }

    double exponential(double rate) { return -std::log(uniform_oc()) / rate; }

    std::uint64_t next_u64() { return engine_(); }

private:
    // splitmix64 finalizer applied twice to decorrelate (seed, stream) pairs
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        auto split = [](std::uint64_t x) {
            x += 0x9e3779b97f4a7c15ULL;
            x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
            x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
            return x ^ (x >> 31);
        };
        return split(split(a) ^ split(b + 0x632be59bd9b4e019ULL));
    }

    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace nf
