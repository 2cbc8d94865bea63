#pragma once

#include <random>
#include <vector>

#include "csbrnn/csb.hpp"
#include "csbrnn/schedule.hpp"

namespace fixture {

using namespace csbrnn;

// CSB matrix over a grid of blocks where block (r, c) keeps a dims[r][c]
// kernel. Kept rows/columns are spread over the block so index slices are
// not trivially 0..m-1.
inline CsbMatrix with_kernels(const std::vector<std::vector<KernelDims>>& dims, BlockShape shape,
                              std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.5, 1.5);
    const std::size_t gr = dims.size(), gc = dims[0].size();
    DenseMatrix d(gr * shape.block_rows, gc * shape.block_cols);
    for (std::size_t r = 0; r < gr; ++r) {
        for (std::size_t c = 0; c < gc; ++c) {
            std::vector<std::size_t> rows(shape.block_rows), cols(shape.block_cols);
            for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
            for (std::size_t i = 0; i < cols.size(); ++i) cols[i] = i;
            std::shuffle(rows.begin(), rows.end(), rng);
            std::shuffle(cols.begin(), cols.end(), rng);
            for (std::size_t a = 0; a < dims[r][c].rows; ++a)
                for (std::size_t b = 0; b < dims[r][c].cols; ++b)
                    d(r * shape.block_rows + rows[a], c * shape.block_cols + cols[b]) = uni(rng);
        }
    }
    return encode(d, shape);
}

// The K=1, L=2, P=Q=2 example: kernels 4x4 and 4x8 in 8x8 blocks.
inline CsbMatrix worked_example() {
    return with_kernels({{{4, 4}, {4, 8}}}, {8, 8});
}

inline EngineConfig worked_config(SharingMode mode) {
    EngineConfig cfg;
    cfg.grid_rows = 1;
    cfg.grid_cols = 2;
    cfg.pe_rows = 2;
    cfg.pe_cols = 2;
    cfg.mode = mode;
    return cfg;
}

// Random CSB matrix with per-block kernel dims drawn from a skewed law.
inline CsbMatrix random_kernels(std::mt19937_64& rng, std::size_t gr, std::size_t gc, BlockShape shape) {
    std::vector<std::vector<KernelDims>> dims(gr, std::vector<KernelDims>(gc));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& row : dims) {
        for (auto& k : row) {
            const double a = u(rng), b = u(rng);
            k.rows = std::size_t(a * a * double(shape.block_rows + 1));
            k.cols = std::size_t(b * b * double(shape.block_cols + 1));
            k.rows = std::min(k.rows, shape.block_rows);
            k.cols = std::min(k.cols, shape.block_cols);
            if (k.rows == 0 || k.cols == 0) k.rows = k.cols = 0;
        }
    }
    return with_kernels(dims, shape, rng());
}

}  // namespace fixture
