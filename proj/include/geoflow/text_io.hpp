#pragma once

#include <complex>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace geoflow {

/// Shortest round-trip decimal text (17 significant digits).
std::string format_double(double x);

/// Minimal CSV writer with a fixed header and ordered rows.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header);
    ~CsvWriter();
    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    void row(const std::vector<std::string>& fields);

private:
    struct Impl;
    Impl* impl_;
    std::size_t columns_;
};

void write_vertex_csv(const std::string& path, const Eigen::VectorXd& values);
void write_vertex_csv(const std::string& path, const Eigen::VectorXcd& values);

/// Triplet dump: header `rows cols nnz`, then `i j value` lines.
void write_triplets(std::ostream& out, const Eigen::SparseMatrix<double>& A);
void write_triplets(const std::string& path, const Eigen::SparseMatrix<double>& A);
Eigen::SparseMatrix<double> read_triplets(std::istream& in);

} // namespace geoflow
