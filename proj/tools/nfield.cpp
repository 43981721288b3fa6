#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "nfield/config.hpp"
#include "nfield/version.hpp"

int main(int argc, char** argv) {
    CLI::App app{"nfield - stochastic neural field laboratory"};
    app.set_version_flag("--version", nf::kVersion);
    app.require_subcommand(1);

    std::string config_path;
    nf::RunOverrides overrides;
    std::uint64_t seed = 0;
    std::string outdir;
    int threads = 0;

    auto* run = app.add_subcommand("run", "execute an experiment configuration");
    run->add_option("config", config_path, "configuration file (or manifest)")
        ->required();
    auto* seed_opt = run->add_option("--seed", seed, "override the master seed");
    auto* out_opt =
        run->add_option("--output-dir", outdir, "override the output directory");
    auto* thr_opt = run->add_option("--threads", threads, "OpenMP thread count");

    auto* validate = app.add_subcommand("validate", "dry-run configuration checks");
    validate->add_option("config", config_path, "configuration file")->required();

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) {
        if (*seed_opt) overrides.seed = seed;
        if (*out_opt) overrides.output_dir = outdir;
        if (*thr_opt) overrides.threads = threads;
        return nf::run_experiment(config_path, overrides);
    }
    return nf::validate_config(config_path);
}
