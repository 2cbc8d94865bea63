#include <gtest/gtest.h>

#include <set>

#include "csbrnn/errors.hpp"
#include "csbrnn/sweep.hpp"

using namespace csbrnn;

namespace {

SweepSpec tiny() {
    SweepSpec s;
    s.suite.count = 3;
    s.suite.rows = s.suite.cols = 64;
    s.block_sizes = {8, 16};
    return s;
}

}  // namespace

TEST(Suite, DeterministicAndTagged) {
    SuiteSpec spec;
    spec.count = 6;
    spec.rows = spec.cols = 32;
    const auto a = imbalance_suite(spec), b = imbalance_suite(spec);
    ASSERT_EQ(a.size(), 6u);
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(a[k].raw, b[k].raw);
        EXPECT_EQ(a[k].kind, k % 3 == 2 ? SuiteKind::diagonal : SuiteKind::lognormal);
    }
    EXPECT_EQ(a[2].id, "diagonal-2");
    spec.seed = 8;
    EXPECT_NE(imbalance_suite(spec)[0].raw, a[0].raw);
}

TEST(Sweep, CardinalityAndOrder) {
    SweepSpec s = tiny();
    const auto rows = run_sweep(s);
    ASSERT_EQ(rows.size(), 3u * 2u * 4u);
    EXPECT_EQ(rows[0].matrix_id, "lognormal-0");
    EXPECT_EQ(rows[0].block, 8u);
    EXPECT_EQ(rows[0].mode, SharingMode::none);
    EXPECT_EQ(rows[3].mode, SharingMode::two_d);
    EXPECT_EQ(rows[4].block, 16u);
    for (const auto& r : rows) EXPECT_DOUBLE_EQ(r.prune_ratio, 4.0);
}

TEST(Sweep, JobCountDoesNotChangeResults) {
    SweepSpec s = tiny();
    const auto a = run_sweep(s);
    s.jobs = 3;
    const auto b = run_sweep(s);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(a[k].matrix_id, b[k].matrix_id);
        EXPECT_EQ(a[k].cycles, b[k].cycles);
        EXPECT_EQ(a[k].nio, b[k].nio);
    }
}

TEST(Sweep, Validation) {
    SweepSpec s = tiny();
    s.modes.clear();
    EXPECT_THROW(run_sweep(s), ConfigError);
    s = tiny();
    s.prune_fraction = 1.0;
    EXPECT_THROW(run_sweep(s), ConfigError);
    s = tiny();
    s.jobs = 0;
    EXPECT_THROW(run_sweep(s), ConfigError);
}
