#pragma once

// Compressed structured block (CSB) sparse format.
//
// A matrix is tiled into block_rows x block_cols blocks. Inside each block the
// rows and columns that survived pruning form a dense "kernel" matrix that is
// stored at their cross-points. Five arrays in three groups describe the whole
// matrix:
//
//   kernel_rows[b], kernel_cols[b]   kernel dims, one pair per block
//   row_idx, col_idx                 in-block indices of kept rows / columns,
//                                    concatenated over blocks
//   val                              kernel values, concatenated over blocks,
//                                    each kernel row-major
//
// Blocks are visited in row-major order and no per-block offsets are stored;
// consumers walk the arrays sequentially (see BlockCursor) or build a
// transient offset table (block_spans).

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "csbrnn/matrix.hpp"

namespace csbrnn {

struct CsbMatrix {
    std::size_t rows = 0;  // padded dense shape
    std::size_t cols = 0;
    BlockShape block_shape;

    std::vector<std::uint16_t> kernel_rows;
    std::vector<std::uint16_t> kernel_cols;
    std::vector<std::uint16_t> row_idx;
    std::vector<std::uint16_t> col_idx;
    std::vector<double> val;

    std::size_t block_grid_rows() const { return rows / block_shape.block_rows; }
    std::size_t block_grid_cols() const { return cols / block_shape.block_cols; }
    std::size_t block_count() const { return block_grid_rows() * block_grid_cols(); }

    bool operator==(const CsbMatrix&) const = default;
};

// Throws FormatError(invariant) naming the first offending block.
void validate(const CsbMatrix& csb);

// Offsets of one block's slices inside the concatenated arrays.
struct BlockSpan {
    std::size_t kernel_rows = 0;
    std::size_t kernel_cols = 0;
    std::size_t row_offset = 0;
    std::size_t col_offset = 0;
    std::size_t val_offset = 0;
};

// Sequential walker over the blocks of a CSB matrix in row-major order.
class BlockCursor {
public:
    explicit BlockCursor(const CsbMatrix& csb) : csb_(&csb) {}

    bool done() const { return block_ >= csb_->block_count(); }
    std::size_t block() const { return block_; }
    BlockSpan span() const;
    void advance();

private:
    const CsbMatrix* csb_;
    std::size_t block_ = 0;
    std::size_t row_offset_ = 0;
    std::size_t col_offset_ = 0;
    std::size_t val_offset_ = 0;
};

// Transient offset table for random block access (scheduler, simulator).
std::vector<BlockSpan> block_spans(const CsbMatrix& csb);

enum class Padding { zero_pad, require_exact };

// Pads (or, with Padding::require_exact, rejects) shapes that are not
// multiples of the block shape. A block row/column is kept iff it holds at
// least one nonzero.
CsbMatrix encode(const DenseMatrix& dense, const BlockShape& shape,
                 Padding padding = Padding::zero_pad);

// Returns the padded dense matrix.
DenseMatrix decode(const CsbMatrix& csb);

// Reference kernel: blocks in row-major order, gather x through col_idx,
// scatter partial sums through row_idx.
Vector csb_mvm(const CsbMatrix& csb, std::span<const double> x);

// Same result with block rows distributed over OpenMP threads. Each output
// element is accumulated in the same order as csb_mvm, so results are
// bit-identical.
Vector csb_mvm_parallel(const CsbMatrix& csb, std::span<const double> x);

// Normalised index overhead: (|row_idx| + |col_idx| + 2 * blocks) / |val|.
double nio(const CsbMatrix& csb);

// Index elements a CSR encoding of the same nonzeros needs: nnz column
// indices plus rows + 1 row pointers.
std::size_t csr_index_count(const DenseMatrix& dense);

std::size_t nonzero_count(const CsbMatrix& csb);

}  // namespace csbrnn
