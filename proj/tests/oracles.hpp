#pragma once

// Independent reference implementations used by the tests. None of these
// call into the library code they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "csbrnn/matrix.hpp"

namespace oracle {

using csbrnn::DenseMatrix;
using csbrnn::Vector;

// Random matrix whose every block keeps a random subset of rows and columns.
inline DenseMatrix random_csb_pattern(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                                      std::size_t br, std::size_t bc, double keep = 0.5) {
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::bernoulli_distribution coin(keep);
    DenseMatrix d(rows, cols);
    for (std::size_t r0 = 0; r0 < rows; r0 += br) {
        for (std::size_t c0 = 0; c0 < cols; c0 += bc) {
            std::vector<char> kr(br), kc(bc);
            for (auto& k : kr) k = coin(rng);
            for (auto& k : kc) k = coin(rng);
            for (std::size_t r = 0; r < br && r0 + r < rows; ++r) {
                for (std::size_t c = 0; c < bc && c0 + c < cols; ++c) {
                    if (kr[r] && kc[c]) {
                        double v = 0.0;
                        while (v == 0.0) v = uni(rng);
                        d(r0 + r, c0 + c) = v;
                    }
                }
            }
        }
    }
    return d;
}

inline Vector random_vector(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    Vector v(n);
    for (auto& x : v) x = uni(rng);
    return v;
}

inline Vector mvm(const DenseMatrix& m, const Vector& x) {
    Vector y(m.rows(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        long double s = 0.0L;
        for (std::size_t c = 0; c < m.cols() && c < x.size(); ++c) s += (long double)m(r, c) * x[c];
        y[r] = double(s);
    }
    return y;
}

inline double max_abs_diff(const Vector& a, const Vector& b) {
    double d = 0.0;
    const std::size_t n = std::max(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
        const double x = i < a.size() ? a[i] : 0.0, y = i < b.size() ? b[i] : 0.0;
        d = std::max(d, std::abs(x - y));
    }
    return d;
}

inline double inf_norm(const Vector& a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace oracle
