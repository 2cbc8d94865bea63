#pragma once

// JSON run configuration shared by the prune and sweep subcommands.
//
//   {
//     "seed": 1,
//     "output_dir": "out",
//     "task":   { "rows", "cols", "train_samples", "validation_samples",
//                 "noise_sigma", "teacher_prune_fraction", "teacher_block" },
//     "prune":  { "block", "init_prune_fraction", "init_step", "target_loss",
//                 "target_loss_factor", "epochs_per_round", "baseline_epochs",
//                 "rho", "max_fraction", "max_rounds",
//                 "sgd": { "learning_rate", "batch_size", "steps_per_epoch" } },
//     "engine": { "grid": "4x4", "pe": "4x4", "mode", "balance", "max_nodes" },
//     "sweep":  { "count", "rows", "cols", "tile", "sigma", "diagonal_boost",
//                 "diagonal_every", "prune_fraction", "block_sizes", "modes" }
//   }
//
// Every section and key is optional; unknown keys are rejected. Block shapes
// are "RxC" strings or [r, c] pairs. CSB_SEED in the environment replaces the
// seed.

#include <cstdint>
#include <filesystem>
#include <string>

#include "csbrnn/admm.hpp"
#include "csbrnn/schedule.hpp"
#include "csbrnn/sweep.hpp"

namespace csbtool {

struct RunConfig {
    std::uint64_t seed = 1;
    std::filesystem::path output_dir = "out";
    csbrnn::TaskSpec task;
    csbrnn::PruneConfig prune;
    csbrnn::EngineConfig engine;
    csbrnn::SolverOptions solver;
    csbrnn::SweepSpec sweep;
};

// Throws csbrnn::ConfigError for unreadable files, bad JSON, unknown keys and
// out-of-range values.
RunConfig parse_run_config(const std::string& json_text, const char* env_seed);
RunConfig load_run_config(const std::filesystem::path& path);

// "4x8" -> {4, 8}; "16" -> {16, 16}.
std::pair<std::size_t, std::size_t> parse_dims(const std::string& text);

}  // namespace csbtool
