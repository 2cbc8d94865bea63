#include <gtest/gtest.h>

#include <random>

#include "csbrnn/csb.hpp"
#include "csbrnn/csb_io.hpp"
#include "csbrnn/errors.hpp"
#include "oracles.hpp"

using namespace csbrnn;

namespace {

DenseMatrix example1() {
    return DenseMatrix(4, 4, {1, 0, 2, 0, 0, 0, 0, 0, 0, 3, 0, 0, 0, 4, 0, 0});
}

template <typename T>
std::vector<T> vec(std::initializer_list<T> v) {
    return v;
}

}  // namespace

TEST(Encode, Example1Arrays) {
    const CsbMatrix csb = encode(example1(), {2, 2});
    EXPECT_EQ(csb.kernel_rows, vec<std::uint16_t>({1, 1, 2, 0}));
    EXPECT_EQ(csb.kernel_cols, vec<std::uint16_t>({1, 1, 1, 0}));
    EXPECT_EQ(csb.row_idx, vec<std::uint16_t>({0, 0, 0, 1}));
    EXPECT_EQ(csb.col_idx, vec<std::uint16_t>({0, 0, 1}));
    EXPECT_EQ(csb.val, vec<double>({1, 2, 3, 4}));
}

TEST(Encode, AllZero) {
    const CsbMatrix csb = encode(DenseMatrix(4, 4), {2, 2});
    EXPECT_EQ(csb.kernel_rows, vec<std::uint16_t>({0, 0, 0, 0}));
    EXPECT_EQ(csb.kernel_cols, vec<std::uint16_t>({0, 0, 0, 0}));
    EXPECT_TRUE(csb.row_idx.empty());
    EXPECT_TRUE(csb.col_idx.empty());
    EXPECT_TRUE(csb.val.empty());
    EXPECT_EQ(decode(csb), DenseMatrix(4, 4));
}

TEST(Encode, FullyDenseSingleBlock) {
    const DenseMatrix d(2, 2, {1, 2, 3, 4});
    const CsbMatrix csb = encode(d, {2, 2});
    EXPECT_EQ(csb.kernel_rows, vec<std::uint16_t>({2}));
    EXPECT_EQ(csb.kernel_cols, vec<std::uint16_t>({2}));
    EXPECT_EQ(csb.row_idx, vec<std::uint16_t>({0, 1}));
    EXPECT_EQ(csb.col_idx, vec<std::uint16_t>({0, 1}));
    EXPECT_EQ(csb.val, vec<double>({1, 2, 3, 4}));
    EXPECT_EQ(decode(csb), d);
}

TEST(Encode, PadsOrRejectsRaggedShapes) {
    const DenseMatrix d(3, 5, 1.0);
    const CsbMatrix csb = encode(d, {2, 2});
    EXPECT_EQ(csb.rows, 4u);
    EXPECT_EQ(csb.cols, 6u);
    EXPECT_EQ(crop(decode(csb), 3, 5), d);
    EXPECT_THROW(encode(d, {2, 2}, Padding::require_exact), ShapeError);
}

TEST(Encode, RoundTripRandomPatterns) {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 200; ++t) {
        const std::size_t br = 1 + rng() % 8, bc = 1 + rng() % 8;
        const std::size_t rows = br * (1 + rng() % 6), cols = bc * (1 + rng() % 6);
        const DenseMatrix d = oracle::random_csb_pattern(rng, rows, cols, br, bc);
        const CsbMatrix csb = encode(d, {br, bc});
        ASSERT_EQ(decode(csb), d);
        // Storage accounting: one stored value per nonzero cross-point.
        EXPECT_EQ(csb.val.size(), d.count_nonzero());
        validate(csb);
    }
}

TEST(Validate, NamesOffendingBlock) {
    CsbMatrix csb = encode(example1(), {2, 2});
    csb.row_idx[2] = 1;  // block 2 now has row indices {1, 1}
    try {
        validate(csb);
        FAIL() << "expected a format error";
    } catch (const FormatError& e) {
        EXPECT_EQ(e.kind(), FormatErrorKind::invariant);
        EXPECT_NE(std::string(e.what()).find("block 2"), std::string::npos) << e.what();
    }
    EXPECT_THROW(decode(csb), FormatError);
}

TEST(CsbMvm, Example1) {
    const CsbMatrix csb = encode(example1(), {2, 2});
    EXPECT_EQ(csb_mvm(csb, Vector{1, 1, 1, 1}), (Vector{3, 0, 3, 4}));
    EXPECT_EQ(csb_mvm(csb, Vector(4, 0.0)), Vector(4, 0.0));
}

TEST(CsbMvm, Identity) {
    const CsbMatrix csb = encode(DenseMatrix(2, 2, {1, 0, 0, 1}), {2, 2});
    EXPECT_EQ(csb_mvm(csb, Vector{2.5, -7}), (Vector{2.5, -7}));
}

TEST(CsbMvm, LengthMismatch) {
    const CsbMatrix csb = encode(example1(), {2, 2});
    EXPECT_THROW(csb_mvm(csb, Vector(3, 1.0)), DimensionError);
    EXPECT_THROW(csb_mvm_parallel(csb, Vector(5, 1.0)), DimensionError);
}

TEST(CsbMvm, MatchesDenseOracleAndParallelIsBitIdentical) {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 100; ++t) {
        const std::size_t b = std::size_t(1) << (rng() % 5);
        const std::size_t rows = b * (1 + rng() % 8), cols = b * (1 + rng() % 8);
        const DenseMatrix d = oracle::random_csb_pattern(rng, rows, cols, b, b, 0.4);
        const CsbMatrix csb = encode(d, {b, b});
        const Vector x = oracle::random_vector(rng, cols);
        const Vector y = csb_mvm(csb, x);
        const Vector ref = oracle::mvm(d, x);
        ASSERT_LE(oracle::max_abs_diff(y, ref), 1e-9 * (1.0 + oracle::inf_norm(ref)));
        ASSERT_EQ(csb_mvm_parallel(csb, x), y);
    }
}

TEST(Nio, Example1) { EXPECT_DOUBLE_EQ(nio(encode(example1(), {2, 2})), 3.75); }

TEST(Nio, FullyDenseClosedForm) {
    for (std::size_t r : {1u, 3u, 8u}) {
        for (std::size_t c : {1u, 5u, 16u}) {
            const CsbMatrix csb = encode(DenseMatrix(r, c, 1.0), {r, c});
            EXPECT_DOUBLE_EQ(nio(csb), double(r + c + 2) / double(r * c));
        }
    }
}

TEST(Nio, EmptyMatrixIsAnError) { EXPECT_THROW(nio(encode(DenseMatrix(4, 4), {2, 2})), EmptyInputError); }

TEST(Nio, InvariantUnderScaling) {
    std::mt19937_64 rng(8);
    DenseMatrix d = oracle::random_csb_pattern(rng, 32, 32, 8, 8);
    const double before = nio(encode(d, {8, 8}));
    for (auto& v : d.values()) v *= -3.5;
    EXPECT_DOUBLE_EQ(nio(encode(d, {8, 8})), before);
}

TEST(Nio, CsrBaselineCount) {
    // 3 nonzeros in a 4x4 matrix: 3 column indices + 5 row pointers.
    const DenseMatrix d(4, 4, {1, 0, 0, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 3, 0, 0});
    EXPECT_EQ(csr_index_count(d), 8u);
}

TEST(Serialize, Example1Layout) {
    const auto bytes = serialize(encode(example1(), {2, 2}));
    const std::vector<std::uint8_t> head(bytes.begin(), bytes.begin() + 24);
    const std::vector<std::uint8_t> expect{'C', 'S', 'B', '1', 4, 0, 0, 0, 4, 0, 0, 0,
                                           2,   0,   0,   0,   2, 0, 0, 0, 4, 0, 0, 0};
    EXPECT_EQ(head, expect);
    // header + 4 blocks * 2 u16 + 4 + 3 u16 indices + 4 f32 values
    EXPECT_EQ(bytes.size(), 24u + 16u + 14u + 16u);
    // kernel dims of block 2 are (2, 1)
    EXPECT_EQ(bytes[24 + 8], 2);
    EXPECT_EQ(bytes[24 + 10], 1);
}

TEST(Serialize, RoundTripIsBitExact) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 50; ++t) {
        const DenseMatrix d = oracle::random_csb_pattern(rng, 24, 40, 8, 8);
        const auto bytes = serialize(encode(d, {8, 8}));
        const CsbMatrix back = deserialize(bytes);
        EXPECT_EQ(serialize(back), bytes);
        // binary32 on disk
        const CsbMatrix orig = encode(d, {8, 8});
        for (std::size_t i = 0; i < back.val.size(); ++i) EXPECT_EQ(back.val[i], double(float(orig.val[i])));
    }
}

TEST(Serialize, ErrorCategories) {
    auto bytes = serialize(encode(example1(), {2, 2}));
    auto kind_of = [](const std::vector<std::uint8_t>& b) {
        try {
            deserialize(b);
        } catch (const FormatError& e) {
            return e.kind();
        }
        return FormatErrorKind::syntax;
    };
    auto bad = bytes;
    bad[0] = 'X';
    bad[1] = 'X';
    bad[2] = 'X';
    bad[3] = 'X';
    EXPECT_EQ(kind_of(bad), FormatErrorKind::bad_magic);
    EXPECT_EQ(kind_of({bytes.begin(), bytes.end() - 1}), FormatErrorKind::truncated);
    auto longer = bytes;
    longer.push_back(0);
    EXPECT_EQ(kind_of(longer), FormatErrorKind::trailing_bytes);
    auto broken = bytes;
    broken[20] = 5;  // block_count
    EXPECT_EQ(kind_of(broken), FormatErrorKind::invariant);
    auto unsorted = bytes;
    unsorted[24 + 16 + 4] = 1;  // row_idx of block 2 becomes {1, 1}
    EXPECT_EQ(kind_of(unsorted), FormatErrorKind::invariant);
}
