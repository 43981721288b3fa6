#include "nfield/io.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "nfield/errors.hpp"

namespace nf {

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path,
                     const std::vector<std::string>& header)
    : out_(path), n_cols_(header.size()) {
    if (!out_) throw ConfigError("cannot open for writing: " + path.string());
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) out_ << ',';
        out_ << header[i];
    }
    out_ << '\n';
}

void CsvWriter::row(const std::vector<double>& values) {
    if (values.size() != n_cols_)
        throw ConfigError("csv row width does not match header");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out_ << ',';
        out_ << format_double(values[i]);
    }
    out_ << '\n';
}

void CsvWriter::row_mixed(const std::vector<std::string>& cells) {
    if (cells.size() != n_cols_)
        throw ConfigError("csv row width does not match header");
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out_ << ',';
        out_ << cells[i];
    }
    out_ << '\n';
}

Eigen::MatrixXd read_dense_matrix(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open matrix file: " + path.string());
    Eigen::Index rows, cols;
    if (!(in >> rows >> cols) || rows < 1 || cols < 1)
        throw ConfigError("matrix file must start with 'rows cols': " + path.string());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            if (!(in >> m(i, j)))
                throw ConfigError("matrix file truncated: " + path.string());
    return m;
}

void write_dense_matrix(const std::filesystem::path& path,
                        const Eigen::MatrixXd& m) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path.string());
    out << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out << ' ';
            out << format_double(m(i, j));
        }
        out << '\n';
    }
}

std::pair<std::vector<double>, std::vector<double>> read_xy_csv(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open csv file: " + path.string());
    std::vector<double> xs, ys;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        double x, y;
        if (ss >> x >> y) {
            xs.push_back(x);
            ys.push_back(y);
        }
        // non-numeric lines (headers) are skipped
    }
    if (xs.size() < 2)
        throw ConfigError("csv file needs at least two (x, y) rows: " + path.string());
    return {xs, ys};
}

}  // namespace nf
