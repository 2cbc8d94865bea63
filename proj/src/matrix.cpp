#include "csbrnn/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "csbrnn/errors.hpp"

namespace csbrnn {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) {
        throw DimensionError("dense matrix " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                             " given " + std::to_string(values_.size()) + " values");
    }
}

std::size_t DenseMatrix::count_nonzero() const {
    return static_cast<std::size_t>(
        std::count_if(values_.begin(), values_.end(), [](double v) { return v != 0.0; }));
}

void validate(const BlockShape& shape) {
    if (shape.block_rows == 0 || shape.block_cols == 0) {
        throw ShapeError("block shape must be at least 1x1");
    }
}

DenseMatrix pad_to_blocks(const DenseMatrix& m, const BlockShape& shape) {
    validate(shape);
    const std::size_t rows = round_up(m.rows(), shape.block_rows);
    const std::size_t cols = round_up(m.cols(), shape.block_cols);
    if (rows == m.rows() && cols == m.cols()) return m;
    DenseMatrix out(rows, cols);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        std::copy(m.row(r).begin(), m.row(r).end(), out.row(r).begin());
    }
    return out;
}

DenseMatrix crop(const DenseMatrix& m, std::size_t rows, std::size_t cols) {
    if (rows > m.rows() || cols > m.cols()) {
        throw DimensionError("crop target exceeds matrix shape");
    }
    if (rows == m.rows() && cols == m.cols()) return m;
    DenseMatrix out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(m.row(r).begin(), cols, out.row(r).begin());
    }
    return out;
}

Vector dense_mvm(const DenseMatrix& m, std::span<const double> x) {
    if (x.size() != m.cols()) {
        throw DimensionError("dense_mvm: x has length " + std::to_string(x.size()) +
                             ", matrix has " + std::to_string(m.cols()) + " columns");
    }
    Vector y(m.rows(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        double acc = 0.0;
        const auto row = m.row(r);
        for (std::size_t c = 0; c < m.cols(); ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
    return y;
}

double frobenius_norm(const DenseMatrix& m) {
    double acc = 0.0;
    for (double v : m.values()) acc += v * v;
    return std::sqrt(acc);
}

double max_abs(std::span<const double> v) {
    double out = 0.0;
    for (double x : v) out = std::max(out, std::abs(x));
    return out;
}

namespace {

template <class Op>
DenseMatrix elementwise(const DenseMatrix& a, const DenseMatrix& b, Op op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError("elementwise op on mismatched shapes");
    }
    DenseMatrix out(a.rows(), a.cols());
    auto av = a.values();
    auto bv = b.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = op(av[i], bv[i]);
    return out;
}

}  // namespace

DenseMatrix operator+(const DenseMatrix& a, const DenseMatrix& b) {
    return elementwise(a, b, [](double x, double y) { return x + y; });
}

DenseMatrix operator-(const DenseMatrix& a, const DenseMatrix& b) {
    return elementwise(a, b, [](double x, double y) { return x - y; });
}

}  // namespace csbrnn
