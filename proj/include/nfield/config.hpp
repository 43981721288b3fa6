#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace nf {

struct RunOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
    std::optional<int> threads;
};

/// Execute the experiment named by the configuration file, writing all
/// artifacts plus a manifest into the output directory.
/// Exit status: 0 success, 1 error, 2 certificate evaluated and failed.
int run_experiment(const std::filesystem::path& config_path,
                   const RunOverrides& overrides);

/// Dry-run checks: strict parse, parameter constraints, case
/// diagnostics, certificate preview. No simulation, no artifacts.
int validate_config(const std::filesystem::path& config_path);

}  // namespace nf
