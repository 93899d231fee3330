#include "geoflow/text_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "geoflow/errors.hpp"

namespace geoflow {

std::string format_double(double x) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

struct CsvWriter::Impl {
    std::ofstream out;
};

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : impl_(new Impl), columns_(header.size()) {
    impl_->out.open(path);
    if (!impl_->out) {
        delete impl_;
        throw ValidationError("csv: cannot open " + path);
    }
    row(header);
}

CsvWriter::~CsvWriter() { delete impl_; }

void CsvWriter::row(const std::vector<std::string>& fields) {
    if (fields.size() != columns_) throw ValidationError("csv: row width does not match header");
    for (std::size_t i = 0; i < fields.size(); ++i) impl_->out << (i ? "," : "") << fields[i];
    impl_->out << '\n';
}

void write_vertex_csv(const std::string& path, const Eigen::VectorXd& values) {
    CsvWriter csv(path, {"vertex_id", "value"});
    for (Eigen::Index i = 0; i < values.size(); ++i) csv.row({std::to_string(i), format_double(values[i])});
}

void write_vertex_csv(const std::string& path, const Eigen::VectorXcd& values) {
    CsvWriter csv(path, {"vertex_id", "re", "im"});
    for (Eigen::Index i = 0; i < values.size(); ++i)
        csv.row({std::to_string(i), format_double(values[i].real()), format_double(values[i].imag())});
}

void write_triplets(std::ostream& out, const Eigen::SparseMatrix<double>& A) {
    out << A.rows() << ' ' << A.cols() << ' ' << A.nonZeros() << '\n';
    for (int k = 0; k < A.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
            out << it.row() << ' ' << it.col() << ' ' << format_double(it.value()) << '\n';
}

void write_triplets(const std::string& path, const Eigen::SparseMatrix<double>& A) {
    std::ofstream out(path);
    if (!out) throw ValidationError("triplets: cannot open " + path);
    write_triplets(out, A);
}

Eigen::SparseMatrix<double> read_triplets(std::istream& in) {
    long rows = 0, cols = 0, nnz = 0;
    if (!(in >> rows >> cols >> nnz) || rows < 0 || cols < 0 || nnz < 0) throw ValidationError("triplets: bad header");
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(nnz);
    for (long k = 0; k < nnz; ++k) {
        long i, j;
        double v;
        if (!(in >> i >> j >> v) || i < 0 || j < 0 || i >= rows || j >= cols)
            throw ValidationError("triplets: bad entry");
        trip.emplace_back(i, j, v);
    }
    Eigen::SparseMatrix<double> A(rows, cols);
    A.setFromTriplets(trip.begin(), trip.end());
    return A;
}

} // namespace geoflow
