#pragma once

// Synthetic weight matrices with strongly uneven block workloads, used for
// the utilization and index-overhead sweeps.
//
// Matrices are generated on a grid of square tiles whose magnitudes follow a
// log-normal law, so a few tiles dominate their neighbourhood and survive
// pruning almost whole while most are pruned to small kernels. The diagonal
// kind adds a dense band along the tile diagonal on top of that.

#include <cstdint>
#include <string>
#include <vector>

#include "csbrnn/csb.hpp"
#include "csbrnn/matrix.hpp"

namespace csbrnn {

enum class SuiteKind { lognormal, diagonal };

const char* to_string(SuiteKind kind);

struct SuiteSpec {
    std::size_t count = 60;
    std::size_t rows = 512;
    std::size_t cols = 512;
    std::size_t tile = 16;
    double sigma = 1.5;             // log-std of tile magnitudes
    double diagonal_boost = 8.0;    // extra magnitude on the band
    std::size_t diagonal_every = 3;  // every n-th matrix is a diagonal one
    std::uint64_t seed = 7;
};

struct SuiteEntry {
    std::string id;
    SuiteKind kind = SuiteKind::lognormal;
    std::uint64_t seed = 0;
    DenseMatrix raw;
};

DenseMatrix imbalanced_matrix(std::size_t rows, std::size_t cols, std::size_t tile, SuiteKind kind,
                              double sigma, double diagonal_boost, std::uint64_t seed);

std::vector<SuiteEntry> imbalance_suite(const SuiteSpec& spec);

// CSB projection of the raw matrix at `fraction`, encoded.
CsbMatrix prune_entry(const SuiteEntry& entry, const BlockShape& block, double fraction);

}  // namespace csbrnn
