#pragma once

// Block-size x sharing-mode sweeps over the imbalance suite.

#include <cstdint>
#include <vector>

#include "csbrnn/engine.hpp"
#include "csbrnn/schedule.hpp"
#include "csbrnn/suite.hpp"

namespace csbrnn {

struct SweepSpec {
    SuiteSpec suite;
    std::vector<std::size_t> block_sizes{16, 32, 64, 128};
    std::vector<SharingMode> modes{SharingMode::none, SharingMode::vertical, SharingMode::horizontal,
                                   SharingMode::two_d};
    double prune_fraction = 0.75;
    EngineConfig engine;  // mode is taken from `modes`
    SolverOptions solver;
    bool verify = true;  // compare every simulated output with csb_mvm
    std::size_t jobs = 1;
};

void validate(const SweepSpec& spec);

// One row per (matrix, block size, mode), in that nesting order whatever the
// job count. Throws MismatchError if verification fails.
std::vector<ReportRow> run_sweep(const SweepSpec& spec);

}  // namespace csbrnn
