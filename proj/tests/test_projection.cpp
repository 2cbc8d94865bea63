#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "csbrnn/csb.hpp"
#include "csbrnn/projection.hpp"
#include "oracles.hpp"

using namespace csbrnn;

namespace {

DenseMatrix gaussian(std::mt19937_64& rng, std::size_t r, std::size_t c) {
    std::normal_distribution<double> n(0.0, 1.0);
    DenseMatrix m(r, c);
    for (auto& v : m.values()) v = n(rng);
    return m;
}

// Sort-and-threshold reference for one block-column: every in-block row
// segment is ranked by (norm, -index) and the floor(p * count) smallest go.
std::vector<std::size_t> oracle_row_prune(const DenseMatrix& w, const BlockShape& s, std::size_t bc, double p) {
    std::vector<std::pair<double, std::size_t>> seg;
    for (std::size_t r = 0; r < w.rows(); ++r) {
        double sq = 0.0;
        for (std::size_t c = bc * s.block_cols; c < (bc + 1) * s.block_cols; ++c) sq += w(r, c) * w(r, c);
        seg.push_back({sq, r});
    }
    std::sort(seg.begin(), seg.end(), [](auto a, auto b) {
        return a.first != b.first ? a.first < b.first : a.second > b.second;
    });
    const auto k = std::size_t(std::floor(p * double(seg.size())));
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(seg[i].second);
    std::sort(out.begin(), out.end());
    return out;
}

bool row_zero(const DenseMatrix& w, std::size_t r, std::size_t c0, std::size_t c1) {
    for (std::size_t c = c0; c < c1; ++c) {
        if (w(r, c) != 0.0) return false;
    }
    return true;
}

}  // namespace

TEST(PerDimensionRate, ClosedForms) {
    EXPECT_DOUBLE_EQ(per_dimension_rate(0.75), 0.5);
    EXPECT_DOUBLE_EQ(per_dimension_rate(0.9375), 0.75);
    EXPECT_DOUBLE_EQ(per_dimension_rate(0.0), 0.0);
}

TEST(RowPrune, ZeroesTheTwoSmallestNorms) {
    // Block-column of two 2x2 blocks; row-segment norms 5, 0.1, 3, 0.2.
    DenseMatrix w(4, 2, {3, 4, 0.1, 0, 0, 3, 0, 0.2});
    const SegmentPrune pr = row_prune(w, {2, 2}, 0, 0.5);
    EXPECT_EQ(pr.segment_count, 4u);
    EXPECT_EQ(pr.pruned, (std::vector<std::size_t>{1, 3}));
    EXPECT_EQ(w, DenseMatrix(4, 2, {3, 4, 0, 0, 0, 3, 0, 0}));
}

TEST(RowPrune, ZeroFractionIsIdentity) {
    std::mt19937_64 rng(1);
    DenseMatrix w = gaussian(rng, 8, 8);
    const DenseMatrix before = w;
    EXPECT_TRUE(row_prune(w, {4, 4}, 1, 0.0).pruned.empty());
    EXPECT_TRUE(column_prune(w, {4, 4}, 0, 0.0).pruned.empty());
    EXPECT_EQ(w, before);
}

TEST(RowPrune, TiesPruneHigherIndicesFirst) {
    DenseMatrix w(4, 2, 1.0);
    EXPECT_EQ(row_prune(w, {2, 2}, 0, 0.5).pruned, (std::vector<std::size_t>{2, 3}));
}

TEST(ColumnPrune, SmallestOfFour) {
    DenseMatrix w(1, 4, {4, 3, 2, 1});
    EXPECT_EQ(column_prune(w, {1, 4}, 0, 0.25).pruned, (std::vector<std::size_t>{3}));
    EXPECT_EQ(w, DenseMatrix(1, 4, {4, 3, 2, 0}));
}

TEST(ColumnPrune, TransposeDualOfRowPrune) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 30; ++t) {
        DenseMatrix w = gaussian(rng, 12, 8);
        DenseMatrix wt(8, 12);
        for (std::size_t r = 0; r < 12; ++r)
            for (std::size_t c = 0; c < 8; ++c) wt(c, r) = w(r, c);
        const double p = 0.1 * double(t % 10);
        const auto a = column_prune(w, {4, 2}, 1, p);
        const auto b = row_prune(wt, {2, 4}, 1, p);
        EXPECT_EQ(a.pruned, b.pruned);
        for (std::size_t r = 0; r < 12; ++r)
            for (std::size_t c = 0; c < 8; ++c) ASSERT_EQ(w(r, c), wt(c, r));
    }
}

TEST(RowPrune, MatchesSortOracle) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 50; ++t) {
        DenseMatrix w = gaussian(rng, 16, 12);
        // a few exact ties and zero rows
        for (std::size_t c = 0; c < 12; ++c) w(5, c) = w(9, c) = (c % 2 ? 0.5 : -0.5);
        for (std::size_t c = 0; c < 12; ++c) w(14, c) = 0.0;
        const double p = std::uniform_real_distribution<double>(0.0, 0.99)(rng);
        const BlockShape s{4, 4};
        const std::size_t bc = t % 3;
        const auto expect = oracle_row_prune(w, s, bc, p);
        EXPECT_EQ(row_prune(w, s, bc, p).pruned, expect);
        for (auto r : expect) EXPECT_TRUE(row_zero(w, r, bc * 4, bc * 4 + 4));
    }
}

TEST(ProjectCsb, CountsIdempotenceAndLosslessEncoding) {
    std::mt19937_64 rng(4);
    for (double pr : {0.5, 0.75, 0.9375}) {
        for (int t = 0; t < 20; ++t) {
            const BlockShape s{std::size_t(4) << (t % 3), std::size_t(4) << ((t + 1) % 3)};
            const DenseMatrix w = gaussian(rng, s.block_rows * (1 + t % 4), s.block_cols * (2 + t % 3));
            const ProjectionTrace tr = project_csb_traced(w, s, pr);
            const double p = 1.0 - std::sqrt(1.0 - pr);
            for (const auto& sp : tr.row_prunes) {
                EXPECT_EQ(sp.pruned.size(), std::size_t(std::floor(p * double(sp.segment_count))));
            }
            for (const auto& sp : tr.column_prunes) {
                EXPECT_EQ(sp.pruned.size(), std::size_t(std::floor(p * double(sp.segment_count))));
            }
            EXPECT_EQ(decode(encode(tr.result, s)), tr.result);
            EXPECT_EQ(project_csb(tr.result, s, pr), tr.result);
        }
    }
}

TEST(ProjectCsb, RaggedShapesAreCroppedBack) {
    std::mt19937_64 rng(5);
    const DenseMatrix w = gaussian(rng, 10, 13);
    const DenseMatrix z = project_csb(w, {4, 4}, 0.75);
    EXPECT_EQ(z.rows(), 10u);
    EXPECT_EQ(z.cols(), 13u);
    EXPECT_EQ(project_csb(z, {4, 4}, 0.75), z);
}

TEST(ProjectCsb, ColumnNormsSeeRowPruning) {
    // On the raw matrix column 1 is the stronger one (norm 2.6 vs 2). Row
    // pruning removes two of its entries first, so column 1 goes instead.
    const DenseMatrix w(4, 2, {2, 0, 0, 1.5, 0, 1.5, 0, 1.5});
    const ProjectionTrace tr = project_csb_traced(w, {4, 2}, 0.75);
    EXPECT_EQ(tr.row_prunes[0].pruned, (std::vector<std::size_t>{2, 3}));
    EXPECT_EQ(tr.column_prunes[0].pruned, (std::vector<std::size_t>{1}));
    EXPECT_EQ(tr.result, DenseMatrix(4, 2, {2, 0, 0, 0, 0, 0, 0, 0}));
}

TEST(ProjectCsb, KeepsTheStrongestEntriesOfADenseBlock) {
    // Segment pruning on a single block keeps a (1-p)^2 share exactly.
    std::mt19937_64 rng(6);
    const DenseMatrix w = gaussian(rng, 16, 16);
    const DenseMatrix z = project_csb(w, {16, 16}, 0.75);
    EXPECT_EQ(z.count_nonzero(), 64u);
}

TEST(ProjectCsb, KeepFractionBand) {
    // Row segments emptied by the row stage count toward the column stage's
    // quota, so the kept share lands above (1-p)^2 but never above 1-p.
    std::mt19937_64 rng(7);
    for (double pr : {0.5, 0.75, 0.9375}) {
        const double p = per_dimension_rate(pr);
        for (int t = 0; t < 20; ++t) {
            const DenseMatrix w = gaussian(rng, 64, 64);
            const DenseMatrix z = project_csb(w, {8, 8}, pr);
            const double kept = double(z.count_nonzero()) / double(w.size());
            const double keep_rows = 1.0 - std::floor(p * 64.0) / 64.0;
            EXPECT_GE(kept, keep_rows * keep_rows) << "PR " << pr;
            EXPECT_LE(kept, keep_rows * keep_rows + 3.0 / 64.0) << "PR " << pr;
        }
    }
}
