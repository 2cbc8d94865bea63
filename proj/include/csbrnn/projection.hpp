#pragma once

// Euclidean projection onto the CSB pattern: inside every block-column, zero
// the in-block row segments with the smallest l2 norms; then inside every
// block-row, do the same for in-block column segments.

#include <cstddef>
#include <vector>

#include "csbrnn/matrix.hpp"

namespace csbrnn {

// Segments zeroed by one row_prune / column_prune call. Segment ids are
// block_index * block_extent + in_block_index along the pruned axis, i.e. the
// absolute row (or column) number.
struct SegmentPrune {
    std::size_t segment_count = 0;
    std::vector<std::size_t> pruned;  // ascending
};

// Per-dimension rate that yields `fraction` overall: 1 - sqrt(1 - fraction).
double per_dimension_rate(double fraction);

// floor(p * count).
std::size_t prune_count(double p, std::size_t count);

// Zeroes the floor(p * segments) weakest row segments of block-column
// `block_col`. Ties go to the higher (block, row) first. `w` must already be a
// multiple of the block shape.
SegmentPrune row_prune(DenseMatrix& w, const BlockShape& shape, std::size_t block_col, double p);

// Transpose dual of row_prune over the column segments of block-row `block_row`.
SegmentPrune column_prune(DenseMatrix& w, const BlockShape& shape, std::size_t block_row,
                          double p);

struct ProjectionTrace {
    DenseMatrix result;
    double per_dimension_rate = 0.0;
    std::vector<SegmentPrune> row_prunes;     // one per block-column
    std::vector<SegmentPrune> column_prunes;  // one per block-row
};

// Row pruning on every block-column, then column pruning on every block-row of
// the row-pruned matrix. Shapes that are not block multiples are padded for
// the projection and cropped back afterwards.
ProjectionTrace project_csb_traced(const DenseMatrix& w, const BlockShape& shape, double fraction);

DenseMatrix project_csb(const DenseMatrix& w, const BlockShape& shape, double fraction);

}  // namespace csbrnn
