#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace csbrnn {

using Vector = std::vector<double>;

// Row-major dense matrix.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return values_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }

    std::size_t count_nonzero() const;

    bool operator==(const DenseMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

struct BlockShape {
    std::size_t block_rows = 1;
    std::size_t block_cols = 1;

    bool operator==(const BlockShape&) const = default;
};

void validate(const BlockShape& shape);

inline std::size_t round_up(std::size_t value, std::size_t multiple) {
    return (value + multiple - 1) / multiple * multiple;
}

inline std::size_t ceil_div(std::size_t value, std::size_t divisor) {
    return (value + divisor - 1) / divisor;
}

// Zero-pads `m` on the bottom/right up to the next multiple of the block shape.
DenseMatrix pad_to_blocks(const DenseMatrix& m, const BlockShape& shape);

// Top-left rows x cols corner of `m`.
DenseMatrix crop(const DenseMatrix& m, std::size_t rows, std::size_t cols);

Vector dense_mvm(const DenseMatrix& m, std::span<const double> x);

double frobenius_norm(const DenseMatrix& m);
double max_abs(std::span<const double> v);

DenseMatrix operator+(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix operator-(const DenseMatrix& a, const DenseMatrix& b);

}  // namespace csbrnn
