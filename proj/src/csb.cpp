#include "csbrnn/csb.hpp"

#include <limits>
#include <string>

#include "csbrnn/errors.hpp"

namespace csbrnn {

namespace {

std::string block_name(const CsbMatrix& csb, std::size_t b) {
    const std::size_t gc = csb.block_grid_cols();
    return "block " + std::to_string(b) + " (" + std::to_string(b / gc) + "," +
           std::to_string(b % gc) + ")";
}

[[noreturn]] void invariant(const std::string& what) {
    throw FormatError(FormatErrorKind::invariant, what);
}

}  // namespace

void validate(const CsbMatrix& csb) {
    const auto& s = csb.block_shape;
    if (s.block_rows == 0 || s.block_cols == 0) invariant("zero block dimension");
    if (csb.rows % s.block_rows != 0 || csb.cols % s.block_cols != 0) {
        invariant("shape " + std::to_string(csb.rows) + "x" + std::to_string(csb.cols) +
                  " is not a multiple of the block shape");
    }
    const std::size_t blocks = csb.block_count();
    if (csb.kernel_rows.size() != blocks || csb.kernel_cols.size() != blocks) {
        invariant("expected " + std::to_string(blocks) + " kernel dims, got " +
                  std::to_string(csb.kernel_rows.size()) + "/" +
                  std::to_string(csb.kernel_cols.size()));
    }

    std::size_t ro = 0, co = 0, vo = 0;
    for (std::size_t b = 0; b < blocks; ++b) {
        const std::size_t kr = csb.kernel_rows[b];
        const std::size_t kc = csb.kernel_cols[b];
        if (kr > s.block_rows || kc > s.block_cols) {
            invariant(block_name(csb, b) + ": kernel " + std::to_string(kr) + "x" +
                      std::to_string(kc) + " exceeds block shape");
        }
        if (ro + kr > csb.row_idx.size() || co + kc > csb.col_idx.size()) {
            invariant(block_name(csb, b) + ": index arrays too short");
        }
        for (std::size_t i = 0; i < kr; ++i) {
            const std::size_t idx = csb.row_idx[ro + i];
            if (idx >= s.block_rows || (i > 0 && idx <= csb.row_idx[ro + i - 1])) {
                invariant(block_name(csb, b) + ": row indices must be strictly increasing in [0, " +
                          std::to_string(s.block_rows) + ")");
            }
        }
        for (std::size_t i = 0; i < kc; ++i) {
            const std::size_t idx = csb.col_idx[co + i];
            if (idx >= s.block_cols || (i > 0 && idx <= csb.col_idx[co + i - 1])) {
                invariant(block_name(csb, b) + ": column indices must be strictly increasing in [0, " +
                          std::to_string(s.block_cols) + ")");
            }
        }
        ro += kr;
        co += kc;
        vo += kr * kc;
    }
    if (ro != csb.row_idx.size()) invariant("row_idx length does not match kernel row counts");
    if (co != csb.col_idx.size()) invariant("col_idx length does not match kernel column counts");
    if (vo != csb.val.size()) invariant("val length does not match kernel sizes");
}

BlockSpan BlockCursor::span() const {
    return {csb_->kernel_rows[block_], csb_->kernel_cols[block_], row_offset_, col_offset_,
            val_offset_};
}

void BlockCursor::advance() {
    const std::size_t kr = csb_->kernel_rows[block_];
    const std::size_t kc = csb_->kernel_cols[block_];
    row_offset_ += kr;
    col_offset_ += kc;
    val_offset_ += kr * kc;
    ++block_;
}

std::vector<BlockSpan> block_spans(const CsbMatrix& csb) {
    std::vector<BlockSpan> spans;
    spans.reserve(csb.block_count());
    for (BlockCursor cur(csb); !cur.done(); cur.advance()) spans.push_back(cur.span());
    return spans;
}

CsbMatrix encode(const DenseMatrix& dense, const BlockShape& shape, Padding padding) {
    validate(shape);
    if (shape.block_rows > std::numeric_limits<std::uint16_t>::max() ||
        shape.block_cols > std::numeric_limits<std::uint16_t>::max()) {
        throw ShapeError("block dimensions must fit in 16 bits");
    }
    const bool aligned =
        dense.rows() % shape.block_rows == 0 && dense.cols() % shape.block_cols == 0;
    if (!aligned && padding == Padding::require_exact) {
        throw ShapeError("matrix " + std::to_string(dense.rows()) + "x" +
                         std::to_string(dense.cols()) + " is not a multiple of block " +
                         std::to_string(shape.block_rows) + "x" +
                         std::to_string(shape.block_cols) + " and padding is disabled");
    }
    const DenseMatrix m = aligned ? dense : pad_to_blocks(dense, shape);

    CsbMatrix csb;
    csb.rows = m.rows();
    csb.cols = m.cols();
    csb.block_shape = shape;
    const std::size_t gr = csb.block_grid_rows();
    const std::size_t gc = csb.block_grid_cols();
    csb.kernel_rows.reserve(gr * gc);
    csb.kernel_cols.reserve(gr * gc);

    std::vector<std::uint16_t> kept_rows, kept_cols;
    for (std::size_t bi = 0; bi < gr; ++bi) {
        for (std::size_t bj = 0; bj < gc; ++bj) {
            const std::size_t r0 = bi * shape.block_rows;
            const std::size_t c0 = bj * shape.block_cols;
            kept_rows.clear();
            kept_cols.clear();
            for (std::size_t r = 0; r < shape.block_rows; ++r) {
                for (std::size_t c = 0; c < shape.block_cols; ++c) {
                    if (m(r0 + r, c0 + c) != 0.0) {
                        kept_rows.push_back(static_cast<std::uint16_t>(r));
                        break;
                    }
                }
            }
            for (std::size_t c = 0; c < shape.block_cols; ++c) {
                for (std::size_t r = 0; r < shape.block_rows; ++r) {
                    if (m(r0 + r, c0 + c) != 0.0) {
                        kept_cols.push_back(static_cast<std::uint16_t>(c));
                        break;
                    }
                }
            }
            // A kernel needs both kept rows and kept columns; one without the
            // other cannot hold a nonzero.
            csb.kernel_rows.push_back(static_cast<std::uint16_t>(kept_rows.size()));
            csb.kernel_cols.push_back(static_cast<std::uint16_t>(kept_cols.size()));
            csb.row_idx.insert(csb.row_idx.end(), kept_rows.begin(), kept_rows.end());
            csb.col_idx.insert(csb.col_idx.end(), kept_cols.begin(), kept_cols.end());
            for (auto r : kept_rows) {
                for (auto c : kept_cols) csb.val.push_back(m(r0 + r, c0 + c));
            }
        }
    }
    return csb;
}

DenseMatrix decode(const CsbMatrix& csb) {
    validate(csb);
    DenseMatrix m(csb.rows, csb.cols);
    const std::size_t gc = csb.block_grid_cols();
    const auto& s = csb.block_shape;
    for (BlockCursor cur(csb); !cur.done(); cur.advance()) {
        const BlockSpan sp = cur.span();
        const std::size_t r0 = cur.block() / gc * s.block_rows;
        const std::size_t c0 = cur.block() % gc * s.block_cols;
        for (std::size_t i = 0; i < sp.kernel_rows; ++i) {
            for (std::size_t j = 0; j < sp.kernel_cols; ++j) {
                m(r0 + csb.row_idx[sp.row_offset + i], c0 + csb.col_idx[sp.col_offset + j]) =
                    csb.val[sp.val_offset + i * sp.kernel_cols + j];
            }
        }
    }
    return m;
}

namespace {

void check_mvm_dims(const CsbMatrix& csb, std::span<const double> x) {
    if (x.size() != csb.cols) {
        throw DimensionError("csb_mvm: x has length " + std::to_string(x.size()) +
                             ", matrix has " + std::to_string(csb.cols) + " columns");
    }
}

// One block's contribution; shared by the serial and parallel kernels so both
// accumulate in the same order.
inline void accumulate_block(const CsbMatrix& csb, const BlockSpan& sp, std::size_t r0,
                             std::size_t c0, std::span<const double> x, double* y) {
    const double* v = csb.val.data() + sp.val_offset;
    const std::uint16_t* ci = csb.col_idx.data() + sp.col_offset;
    for (std::size_t i = 0; i < sp.kernel_rows; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < sp.kernel_cols; ++j) acc += v[j] * x[c0 + ci[j]];
        y[r0 + csb.row_idx[sp.row_offset + i]] += acc;
        v += sp.kernel_cols;
    }
}

}  // namespace

Vector csb_mvm(const CsbMatrix& csb, std::span<const double> x) {
    check_mvm_dims(csb, x);
    Vector y(csb.rows, 0.0);
    const std::size_t gc = csb.block_grid_cols();
    const auto& s = csb.block_shape;
    for (BlockCursor cur(csb); !cur.done(); cur.advance()) {
        accumulate_block(csb, cur.span(), cur.block() / gc * s.block_rows,
                         cur.block() % gc * s.block_cols, x, y.data());
    }
    return y;
}

Vector csb_mvm_parallel(const CsbMatrix& csb, std::span<const double> x) {
    check_mvm_dims(csb, x);
    Vector y(csb.rows, 0.0);
    const std::vector<BlockSpan> spans = block_spans(csb);
    const auto gr = static_cast<std::ptrdiff_t>(csb.block_grid_rows());
    const std::size_t gc = csb.block_grid_cols();
    const auto& s = csb.block_shape;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t bi = 0; bi < gr; ++bi) {
        const std::size_t r0 = static_cast<std::size_t>(bi) * s.block_rows;
        for (std::size_t bj = 0; bj < gc; ++bj) {
            accumulate_block(csb, spans[static_cast<std::size_t>(bi) * gc + bj], r0,
                             bj * s.block_cols, x, y.data());
        }
    }
    return y;
}

double nio(const CsbMatrix& csb) {
    if (csb.val.empty()) throw EmptyInputError("nio: matrix has no stored values");
    const double index_elems = static_cast<double>(csb.row_idx.size() + csb.col_idx.size() +
                                                   2 * csb.block_count());
    return index_elems / static_cast<double>(csb.val.size());
}

std::size_t csr_index_count(const DenseMatrix& dense) {
    return dense.count_nonzero() + dense.rows() + 1;
}

std::size_t nonzero_count(const CsbMatrix& csb) {
    std::size_t n = 0;
    for (double v : csb.val) n += v != 0.0;
    return n;
}

}  // namespace csbrnn
