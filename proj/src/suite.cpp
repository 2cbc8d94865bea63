#include "csbrnn/suite.hpp"

#include <cmath>
#include <random>

#include "csbrnn/errors.hpp"
#include "csbrnn/projection.hpp"

namespace csbrnn {

const char* to_string(SuiteKind kind) {
    return kind == SuiteKind::lognormal ? "lognormal" : "diagonal";
}

DenseMatrix imbalanced_matrix(std::size_t rows, std::size_t cols, std::size_t tile, SuiteKind kind,
                              double sigma, double diagonal_boost, std::uint64_t seed) {
    if (rows == 0 || cols == 0 || tile == 0) throw ConfigError("suite matrix dims and tile must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t tr = ceil_div(rows, tile), tc = ceil_div(cols, tile);
    std::vector<double> scale(tr * tc);
    for (std::size_t a = 0; a < tr; ++a) {
        for (std::size_t b = 0; b < tc; ++b) {
            double s = std::exp(sigma * normal(rng));
            if (kind == SuiteKind::diagonal) {
                // Band along the diagonal of a possibly non-square tile grid.
                const double d = std::abs(double(a) / double(tr) - double(b) / double(tc));
                if (d * double(std::max(tr, tc)) < 1.0) s *= diagonal_boost;
            }
            scale[a * tc + b] = s;
        }
    }
    DenseMatrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = normal(rng) * scale[(r / tile) * tc + c / tile];
    }
    return m;
}

std::vector<SuiteEntry> imbalance_suite(const SuiteSpec& spec) {
    std::vector<SuiteEntry> out;
    out.reserve(spec.count);
    for (std::size_t k = 0; k < spec.count; ++k) {
        SuiteEntry e;
        e.kind = spec.diagonal_every != 0 && k % spec.diagonal_every == spec.diagonal_every - 1
                     ? SuiteKind::diagonal
                     : SuiteKind::lognormal;
        e.seed = spec.seed * 1000003u + k;
        e.id = std::string(to_string(e.kind)) + "-" + std::to_string(k);
        e.raw = imbalanced_matrix(spec.rows, spec.cols, spec.tile, e.kind, spec.sigma, spec.diagonal_boost, e.seed);
        out.push_back(std::move(e));
    }
    return out;
}

CsbMatrix prune_entry(const SuiteEntry& entry, const BlockShape& block, double fraction) {
    return encode(project_csb(entry.raw, block, fraction), block);
}

}  // namespace csbrnn
