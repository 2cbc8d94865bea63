#include "csbrnn/projection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "csbrnn/errors.hpp"

namespace csbrnn {

double per_dimension_rate(double fraction) {
    if (!(fraction >= 0.0 && fraction < 1.0)) {
        throw Error("prune fraction must lie in [0, 1), got " + std::to_string(fraction));
    }
    return 1.0 - std::sqrt(1.0 - fraction);
}

std::size_t prune_count(double p, std::size_t count) {
    // The epsilon absorbs rounding in 1 - sqrt(1 - PR) landing just below an
    // integer product (e.g. p*count = 31.999999999).
    const double exact = p * static_cast<double>(count);
    return static_cast<std::size_t>(std::floor(exact + 1e-9));
}

namespace {

void check_aligned(const DenseMatrix& w, const BlockShape& shape) {
    validate(shape);
    if (w.rows() % shape.block_rows != 0 || w.cols() % shape.block_cols != 0) {
        throw ShapeError("projection input must be a multiple of the block shape");
    }
}

// Indices of the k smallest norms, ties broken towards the higher index.
std::vector<std::size_t> weakest(const std::vector<double>& norms, std::size_t k) {
    std::vector<std::size_t> order(norms.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (norms[a] != norms[b]) return norms[a] < norms[b];
        return a > b;
    });
    order.resize(k);
    std::sort(order.begin(), order.end());
    return order;
}

}  // namespace

SegmentPrune row_prune(DenseMatrix& w, const BlockShape& shape, std::size_t block_col, double p) {
    check_aligned(w, shape);
    if (!(p >= 0.0 && p < 1.0)) throw Error("row_prune: p must lie in [0, 1)");
    if (block_col >= w.cols() / shape.block_cols) throw IndexError("row_prune: block column out of range");

    const std::size_t c0 = block_col * shape.block_cols;
    // Segment r is row r restricted to this block-column, so the segment id is
    // also (block_index * block_rows + in_block_row).
    std::vector<double> norms(w.rows(), 0.0);
    for (std::size_t r = 0; r < w.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t c = c0; c < c0 + shape.block_cols; ++c) acc += w(r, c) * w(r, c);
        norms[r] = acc;
    }
    SegmentPrune out{w.rows(), weakest(norms, prune_count(p, w.rows()))};
    for (std::size_t r : out.pruned) {
        for (std::size_t c = c0; c < c0 + shape.block_cols; ++c) w(r, c) = 0.0;
    }
    return out;
}

SegmentPrune column_prune(DenseMatrix& w, const BlockShape& shape, std::size_t block_row,
                          double p) {
    check_aligned(w, shape);
    if (!(p >= 0.0 && p < 1.0)) throw Error("column_prune: p must lie in [0, 1)");
    if (block_row >= w.rows() / shape.block_rows) throw IndexError("column_prune: block row out of range");

    const std::size_t r0 = block_row * shape.block_rows;
    std::vector<double> norms(w.cols(), 0.0);
    for (std::size_t r = r0; r < r0 + shape.block_rows; ++r) {
        const auto row = w.row(r);
        for (std::size_t c = 0; c < w.cols(); ++c) norms[c] += row[c] * row[c];
    }
    SegmentPrune out{w.cols(), weakest(norms, prune_count(p, w.cols()))};
    for (std::size_t r = r0; r < r0 + shape.block_rows; ++r) {
        for (std::size_t c : out.pruned) w(r, c) = 0.0;
    }
    return out;
}

ProjectionTrace project_csb_traced(const DenseMatrix& w, const BlockShape& shape, double fraction) {
    ProjectionTrace trace;
    trace.per_dimension_rate = per_dimension_rate(fraction);
    DenseMatrix z = pad_to_blocks(w, shape);
    const std::size_t gr = z.rows() / shape.block_rows;
    const std::size_t gc = z.cols() / shape.block_cols;
    trace.row_prunes.reserve(gc);
    trace.column_prunes.reserve(gr);
    for (std::size_t j = 0; j < gc; ++j) {
        trace.row_prunes.push_back(row_prune(z, shape, j, trace.per_dimension_rate));
    }
    for (std::size_t i = 0; i < gr; ++i) {
        trace.column_prunes.push_back(column_prune(z, shape, i, trace.per_dimension_rate));
    }
    trace.result = crop(z, w.rows(), w.cols());
    return trace;
}

DenseMatrix project_csb(const DenseMatrix& w, const BlockShape& shape, double fraction) {
    return project_csb_traced(w, shape, fraction).result;
}

}  // namespace csbrnn
