#pragma once

// ADMM-based CSB pruning on a teacher-student regression task.
//
// The training objective is f(W) = mean_i ||W x_i - y_i||^2. One ADMM epoch
// runs SGD on f(W) + rho/2 ||W - Z + U||_F^2, projects W + U onto the CSB
// pattern to get Z, and accumulates U += W - Z. The progressive search raises
// the prune fraction while the projected Z stays within the target loss and
// bisects back once it does not.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "csbrnn/csb.hpp"
#include "csbrnn/matrix.hpp"

namespace csbrnn {

struct SgdParams {
    double learning_rate = 0.05;
    std::size_t batch_size = 64;
    std::size_t steps_per_epoch = 16;
};

struct PruneConfig {
    BlockShape block_shape{16, 16};
    double init_prune_fraction = 0.5;
    double init_step = 0.1;
    // Absolute pass threshold on validation loss. When unset the threshold is
    // target_loss_factor times the trained dense baseline's loss.
    std::optional<double> target_loss;
    double target_loss_factor = 1.1;
    std::size_t epochs_per_round = 100;
    std::size_t baseline_epochs = 200;
    double rho = 1.0;
    SgdParams sgd;
    double max_fraction = 0.99;
    std::size_t max_rounds = 64;
};

void validate(const PruneConfig& cfg);

struct TaskSpec {
    std::size_t rows = 64;  // output dim of the teacher
    std::size_t cols = 64;  // input dim
    std::size_t train_samples = 1024;
    std::size_t validation_samples = 512;
    double noise_sigma = 0.01;
    // When set, the teacher is projected onto the CSB pattern at this fraction.
    std::optional<double> teacher_prune_fraction;
    BlockShape teacher_block{16, 16};
    std::uint64_t seed = 1;
};

// Samples are stored one per row: x rows are inputs, y rows the targets.
struct SyntheticTask {
    DenseMatrix teacher;
    DenseMatrix train_x, train_y;
    DenseMatrix validation_x, validation_y;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    static SyntheticTask generate(const TaskSpec& spec);
};

struct AdmmState {
    DenseMatrix w_star;
    DenseMatrix z;
    DenseMatrix u;
    std::size_t epoch = 0;

    static AdmmState start_from(const DenseMatrix& w);
};

// Mean over `rows` of ||W x - y||^2.
double batch_loss(const DenseMatrix& w, const DenseMatrix& x, const DenseMatrix& y,
                  std::span<const std::size_t> rows);

// f(W) + rho/2 ||W - Z + U||^2 on a batch, and its analytic gradient
// (2/B) sum (Wx - y) x^T + rho (W - Z + U).
double augmented_loss(const DenseMatrix& w, const DenseMatrix& z, const DenseMatrix& u, double rho,
                      const DenseMatrix& x, const DenseMatrix& y, std::span<const std::size_t> rows);
DenseMatrix augmented_gradient(const DenseMatrix& w, const DenseMatrix& z, const DenseMatrix& u,
                               double rho, const DenseMatrix& x, const DenseMatrix& y,
                               std::span<const std::size_t> rows);

// Validation MSE of `w`.
double eval_loss(const DenseMatrix& w, const SyntheticTask& task);

// One epoch of mini-batch SGD on W*; Z and U are untouched. Batches are drawn
// from a permutation seeded by (task.seed, state.epoch), so epochs replay
// deterministically. Throws TrainingError on a non-finite loss.
AdmmState sgd_epoch(AdmmState state, const SyntheticTask& task, const PruneConfig& cfg);

// epochs_per_round x {sgd_epoch; Z = project(W* + U); U += W* - Z}.
AdmmState admm_round(AdmmState state, const SyntheticTask& task, const PruneConfig& cfg,
                     double fraction);

// Plain SGD (rho = 0) from a zero matrix for cfg.baseline_epochs.
DenseMatrix train_dense_baseline(const SyntheticTask& task, const PruneConfig& cfg);

struct RoundRecord {
    double fraction = 0.0;
    double step = 0.0;  // step in effect when the round ran
    double validation_loss = 0.0;
    bool passed = false;
};

struct SearchOutcome {
    std::vector<RoundRecord> rounds;
    std::optional<std::size_t> final_round;  // index of the last passing round
};

// The progressive rate controller on its own. `round` trains/evaluates at a
// fraction and reports {loss, passed}. A passing round whose increment makes
// no progress (clamped at max_fraction, or lost to floating point) halves the
// step, which is what lets an always-passing run terminate.
struct RoundResult {
    double validation_loss = 0.0;
    bool passed = false;
};
SearchOutcome progressive_search(double init_fraction, double init_step, double max_fraction,
                                 std::size_t max_rounds,
                                 const std::function<RoundResult(double fraction)>& round);

struct PruneReport {
    double baseline_loss = 0.0;
    double target_loss = 0.0;
    double final_fraction = 0.0;
    double compression_ratio = 1.0;  // 1 / (1 - final_fraction)
    double final_loss = 0.0;
    std::vector<RoundRecord> rounds;
    DenseMatrix final_z;
    CsbMatrix final_model;
};

PruneReport progressive_prune(const SyntheticTask& task, const PruneConfig& cfg);

}  // namespace csbrnn
