#include "csbrnn/admm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "csbrnn/errors.hpp"
#include "csbrnn/projection.hpp"

namespace csbrnn {

void validate(const PruneConfig& cfg) {
    validate(cfg.block_shape);
    if (!(cfg.max_fraction > 0.0 && cfg.max_fraction < 1.0)) {
        throw ConfigError("max_fraction must lie in (0, 1)");
    }
    if (!(cfg.init_prune_fraction >= 0.0 && cfg.init_prune_fraction < cfg.max_fraction)) {
        throw ConfigError("init_prune_fraction must lie in [0, max_fraction)");
    }
    if (!(cfg.init_step > 0.0)) throw ConfigError("init_step must be positive");
    if (!(cfg.rho >= 0.0)) throw ConfigError("rho must be non-negative");
    if (cfg.target_loss && !(*cfg.target_loss >= 0.0)) throw ConfigError("target_loss must be >= 0");
    if (!(cfg.target_loss_factor >= 1.0)) throw ConfigError("target_loss_factor must be >= 1");
    if (cfg.sgd.batch_size == 0 || cfg.sgd.steps_per_epoch == 0) {
        throw ConfigError("sgd batch_size and steps_per_epoch must be positive");
    }
    if (!(cfg.sgd.learning_rate > 0.0)) throw ConfigError("sgd learning_rate must be positive");
    if (cfg.epochs_per_round == 0) throw ConfigError("epochs_per_round must be positive");
    if (cfg.max_rounds == 0) throw ConfigError("max_rounds must be positive");
}

namespace {

DenseMatrix gaussian_matrix(std::size_t rows, std::size_t cols, double sigma, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, sigma);
    DenseMatrix m(rows, cols);
    for (double& v : m.values()) v = dist(rng);
    return m;
}

void make_targets(const DenseMatrix& teacher, const DenseMatrix& x, double sigma,
                  std::mt19937_64& rng, DenseMatrix& y) {
    std::normal_distribution<double> noise(0.0, sigma);
    y = DenseMatrix(x.rows(), teacher.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const Vector t = dense_mvm(teacher, x.row(i));
        for (std::size_t r = 0; r < t.size(); ++r) {
            y(i, r) = t[r] + (sigma > 0.0 ? noise(rng) : 0.0);
        }
    }
}

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

}  // namespace

SyntheticTask SyntheticTask::generate(const TaskSpec& spec) {
    if (spec.rows == 0 || spec.cols == 0 || spec.train_samples == 0 || spec.validation_samples == 0) {
        throw ConfigError("task dimensions and sample counts must be positive");
    }
    if (!(spec.noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
    std::mt19937_64 rng(spec.seed);
    SyntheticTask task;
    task.seed = spec.seed;
    task.noise_sigma = spec.noise_sigma;
    task.teacher = gaussian_matrix(spec.rows, spec.cols, 1.0 / std::sqrt(double(spec.cols)), rng);
    if (spec.teacher_prune_fraction) {
        task.teacher = project_csb(task.teacher, spec.teacher_block, *spec.teacher_prune_fraction);
    }
    task.train_x = gaussian_matrix(spec.train_samples, spec.cols, 1.0, rng);
    make_targets(task.teacher, task.train_x, spec.noise_sigma, rng, task.train_y);
    task.validation_x = gaussian_matrix(spec.validation_samples, spec.cols, 1.0, rng);
    make_targets(task.teacher, task.validation_x, spec.noise_sigma, rng, task.validation_y);
    return task;
}

AdmmState AdmmState::start_from(const DenseMatrix& w) {
    return {w, w, DenseMatrix(w.rows(), w.cols()), 0};
}

double batch_loss(const DenseMatrix& w, const DenseMatrix& x, const DenseMatrix& y,
                  std::span<const std::size_t> rows) {
    if (w.cols() != x.cols() || w.rows() != y.cols()) {
        throw DimensionError("loss: weight shape does not match the samples");
    }
    if (rows.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i : rows) {
        const Vector pred = dense_mvm(w, x.row(i));
        double sq = 0.0;
        for (std::size_t r = 0; r < pred.size(); ++r) {
            const double d = pred[r] - y(i, r);
            sq += d * d;
        }
        total += sq;
    }
    return total / static_cast<double>(rows.size());
}

double augmented_loss(const DenseMatrix& w, const DenseMatrix& z, const DenseMatrix& u, double rho,
                      const DenseMatrix& x, const DenseMatrix& y, std::span<const std::size_t> rows) {
    double penalty = 0.0;
    auto wv = w.values();
    auto zv = z.values();
    auto uv = u.values();
    for (std::size_t k = 0; k < wv.size(); ++k) {
        const double d = wv[k] - zv[k] + uv[k];
        penalty += d * d;
    }
    return batch_loss(w, x, y, rows) + 0.5 * rho * penalty;
}

DenseMatrix augmented_gradient(const DenseMatrix& w, const DenseMatrix& z, const DenseMatrix& u,
                               double rho, const DenseMatrix& x, const DenseMatrix& y,
                               std::span<const std::size_t> rows) {
    DenseMatrix grad(w.rows(), w.cols());
    if (!rows.empty()) {
        const double scale = 2.0 / static_cast<double>(rows.size());
        for (std::size_t i : rows) {
            const auto xi = x.row(i);
            Vector residual = dense_mvm(w, xi);
            for (std::size_t r = 0; r < residual.size(); ++r) {
                const double g = scale * (residual[r] - y(i, r));
                auto grow = grad.row(r);
                for (std::size_t c = 0; c < xi.size(); ++c) grow[c] += g * xi[c];
            }
        }
    }
    if (rho != 0.0) {
        auto gv = grad.values();
        auto wv = w.values();
        auto zv = z.values();
        auto uv = u.values();
        for (std::size_t k = 0; k < gv.size(); ++k) gv[k] += rho * (wv[k] - zv[k] + uv[k]);
    }
    return grad;
}

double eval_loss(const DenseMatrix& w, const SyntheticTask& task) {
    const auto rows = all_rows(task.validation_x.rows());
    return batch_loss(w, task.validation_x, task.validation_y, rows);
}

AdmmState sgd_epoch(AdmmState state, const SyntheticTask& task, const PruneConfig& cfg) {
    const std::size_t n = task.train_x.rows();
    std::vector<std::size_t> order = all_rows(n);
    std::seed_seq seq{static_cast<std::uint32_t>(task.seed), static_cast<std::uint32_t>(task.seed >> 32),
                      static_cast<std::uint32_t>(state.epoch), 0x5eedu};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);

    const std::size_t batch = std::min(cfg.sgd.batch_size, n);
    std::size_t cursor = 0;
    for (std::size_t step = 0; step < cfg.sgd.steps_per_epoch; ++step) {
        if (cursor + batch > n) {
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        const std::span<const std::size_t> rows(order.data() + cursor, batch);
        cursor += batch;
        const DenseMatrix grad =
            augmented_gradient(state.w_star, state.z, state.u, cfg.rho, task.train_x, task.train_y, rows);
        auto wv = state.w_star.values();
        auto gv = grad.values();
        bool finite = true;
        for (std::size_t k = 0; k < wv.size(); ++k) {
            wv[k] -= cfg.sgd.learning_rate * gv[k];
            finite = finite && std::isfinite(wv[k]);
        }
        if (!finite) {
            throw TrainingError("SGD diverged at step " +
                                std::to_string(state.epoch * cfg.sgd.steps_per_epoch + step) +
                                " (epoch " + std::to_string(state.epoch) + ")");
        }
    }
    ++state.epoch;
    return state;
}

AdmmState admm_round(AdmmState state, const SyntheticTask& task, const PruneConfig& cfg,
                     double fraction) {
    for (std::size_t e = 0; e < cfg.epochs_per_round; ++e) {
        state = sgd_epoch(std::move(state), task, cfg);
        state.z = project_csb(state.w_star + state.u, cfg.block_shape, fraction);
        auto uv = state.u.values();
        auto wv = state.w_star.values();
        auto zv = state.z.values();
        for (std::size_t k = 0; k < uv.size(); ++k) uv[k] += wv[k] - zv[k];
    }
    return state;
}

DenseMatrix train_dense_baseline(const SyntheticTask& task, const PruneConfig& cfg) {
    PruneConfig plain = cfg;
    plain.rho = 0.0;
    AdmmState state = AdmmState::start_from(DenseMatrix(task.teacher.rows(), task.teacher.cols()));
    for (std::size_t e = 0; e < cfg.baseline_epochs; ++e) state = sgd_epoch(std::move(state), task, plain);
    return state.w_star;
}

SearchOutcome progressive_search(double init_fraction, double init_step, double max_fraction,
                                 std::size_t max_rounds,
                                 const std::function<RoundResult(double fraction)>& round) {
    SearchOutcome out;
    double fraction = std::clamp(init_fraction, 0.0, max_fraction);
    double step = init_step;
    bool over_pruned_once = false;
    const double stop_step = init_step / 4.0;

    for (std::size_t n = 0; n < max_rounds; ++n) {
        const RoundResult r = round(fraction);
        out.rounds.push_back({fraction, step, r.validation_loss, r.passed});
        double next;
        if (!r.passed) {
            over_pruned_once = true;
            step /= 2.0;
            next = fraction - step;
        } else {
            out.final_round = out.rounds.size() - 1;
            if (over_pruned_once) step /= 2.0;
            next = std::min(fraction + step, max_fraction);
            if (next == fraction) step /= 2.0;
        }
        if (r.passed && step <= stop_step) return out;
        fraction = std::clamp(next, 0.0, max_fraction);
    }
    throw TrainingError("progressive pruning did not terminate within " +
                        std::to_string(max_rounds) + " rounds");
}

PruneReport progressive_prune(const SyntheticTask& task, const PruneConfig& cfg) {
    validate(cfg);
    PruneReport report;
    const DenseMatrix baseline = train_dense_baseline(task, cfg);
    report.baseline_loss = eval_loss(baseline, task);
    report.target_loss = cfg.target_loss.value_or(cfg.target_loss_factor * report.baseline_loss);
    if (report.baseline_loss > report.target_loss) {
        throw InfeasibleTargetError("dense baseline reaches validation loss " +
                                    std::to_string(report.baseline_loss) + ", above target " +
                                    std::to_string(report.target_loss));
    }

    AdmmState state = AdmmState::start_from(baseline);
    DenseMatrix best_z;
    const SearchOutcome outcome = progressive_search(
        cfg.init_prune_fraction, cfg.init_step, cfg.max_fraction, cfg.max_rounds,
        [&](double fraction) {
            state = admm_round(std::move(state), task, cfg, fraction);
            const double loss = eval_loss(state.z, task);
            const bool passed = loss <= report.target_loss;
            if (passed) best_z = state.z;
            return RoundResult{loss, passed};
        });
    if (!outcome.final_round) {
        throw InfeasibleTargetError("no pruning round met the target loss");
    }
    const RoundRecord& last = outcome.rounds[*outcome.final_round];
    report.rounds = outcome.rounds;
    report.final_fraction = last.fraction;
    report.compression_ratio = 1.0 / (1.0 - last.fraction);
    report.final_loss = last.validation_loss;
    report.final_z = best_z;
    report.final_model = encode(best_z, cfg.block_shape);
    return report;
}

}  // namespace csbrnn
