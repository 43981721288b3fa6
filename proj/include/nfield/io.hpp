#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace nf {

/// Floats serialized with 17 significant digits so round trips are
/// bit-exact.
std::string format_double(double x);

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path,
              const std::vector<std::string>& header);

    void row(const std::vector<double>& values);
    void row_mixed(const std::vector<std::string>& cells);

private:
    std::ofstream out_;
    std::size_t n_cols_;
};

Eigen::MatrixXd read_dense_matrix(const std::filesystem::path& path);
void write_dense_matrix(const std::filesystem::path& path,
                        const Eigen::MatrixXd& m);

/// Two-column CSV (x, f(x)); header row optional.
std::pair<std::vector<double>, std::vector<double>> read_xy_csv(
    const std::filesystem::path& path);

}  // namespace nf
