#include <gtest/gtest.h>

#include "csbrnn/errors.hpp"
#include "run_config.hpp"

using csbrnn::ConfigError;
using csbtool::parse_run_config;

TEST(RunConfig, DefaultsFromEmptyObject) {
    const auto cfg = parse_run_config("{}", nullptr);
    EXPECT_EQ(cfg.seed, 1u);
    EXPECT_EQ(cfg.engine.grid_rows, 4u);
    EXPECT_EQ(cfg.sweep.block_sizes.size(), 4u);
}

TEST(RunConfig, ReadsSections) {
    const auto cfg = parse_run_config(R"({
        "seed": 9,
        "task": {"rows": 32, "cols": 16, "teacher_prune_fraction": 0.5, "teacher_block": "8x8"},
        "prune": {"block": [8, 4], "init_step": 0.05, "sgd": {"batch_size": 16}},
        "engine": {"grid": "2x3", "pe": [2, 2], "mode": "horizontal", "balance": "two_sided"},
        "sweep": {"count": 4, "block_sizes": [16], "modes": ["none", "two_d"]}
    })", nullptr);
    EXPECT_EQ(cfg.task.seed, 9u);
    EXPECT_EQ(cfg.sweep.suite.seed, 9u);
    EXPECT_EQ(cfg.task.rows, 32u);
    EXPECT_DOUBLE_EQ(*cfg.task.teacher_prune_fraction, 0.5);
    EXPECT_EQ(cfg.task.teacher_block.block_rows, 8u);
    EXPECT_EQ(cfg.prune.block_shape.block_cols, 4u);
    EXPECT_EQ(cfg.prune.sgd.batch_size, 16u);
    EXPECT_EQ(cfg.engine.grid_cols, 3u);
    EXPECT_EQ(cfg.engine.mode, csbrnn::SharingMode::horizontal);
    EXPECT_EQ(cfg.solver.balance, csbrnn::BalanceBound::two_sided);
    EXPECT_EQ(cfg.sweep.engine.grid_cols, 3u);
    EXPECT_EQ(cfg.sweep.modes.size(), 2u);
}

TEST(RunConfig, EnvironmentSeedWins) {
    EXPECT_EQ(parse_run_config(R"({"seed": 3})", "17").seed, 17u);
    EXPECT_THROW(parse_run_config("{}", "abc"), ConfigError);
}

TEST(RunConfig, Rejections) {
    EXPECT_THROW(parse_run_config(R"({"sed": 1})", nullptr), ConfigError);
    EXPECT_THROW(parse_run_config(R"({"task": {"rows": 4, "colz": 4}})", nullptr), ConfigError);
    EXPECT_THROW(parse_run_config(R"({"prune": {"init_prune_fraction": 0.995}})", nullptr), ConfigError);
    EXPECT_THROW(parse_run_config(R"({"engine": {"grid": "4by4"}})", nullptr), ConfigError);
    EXPECT_THROW(parse_run_config(R"({"engine": {"mode": "sideways"}})", nullptr), ConfigError);
    EXPECT_THROW(parse_run_config(R"({"task": {"rows": -1}})", nullptr), ConfigError);
    EXPECT_THROW(parse_run_config("{", nullptr), ConfigError);
    EXPECT_THROW(parse_run_config("[]", nullptr), ConfigError);
}

TEST(RunConfig, Dims) {
    EXPECT_EQ(csbtool::parse_dims("4x8"), (std::pair<std::size_t, std::size_t>{4, 8}));
    EXPECT_EQ(csbtool::parse_dims("16"), (std::pair<std::size_t, std::size_t>{16, 16}));
    for (const char* bad : {"", "x", "4x", "0x4", "4x4x4", "a"}) EXPECT_THROW(csbtool::parse_dims(bad), ConfigError) << bad;
}
