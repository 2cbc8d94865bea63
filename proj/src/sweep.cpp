#include "csbrnn/sweep.hpp"

#include <cmath>
#include <exception>
#include <random>

#include "csbrnn/errors.hpp"

namespace csbrnn {

void validate(const SweepSpec& spec) {
    if (spec.suite.count == 0) throw ConfigError("sweep needs at least one matrix");
    if (spec.block_sizes.empty()) throw ConfigError("sweep needs at least one block size");
    if (spec.modes.empty()) throw ConfigError("sweep needs at least one sharing mode");
    for (auto b : spec.block_sizes) {
        if (b == 0 || b > 65535) throw ConfigError("block size must be in [1, 65535]");
    }
    if (!(spec.prune_fraction >= 0.0 && spec.prune_fraction < 1.0)) {
        throw ConfigError("prune fraction must lie in [0, 1)");
    }
    if (spec.jobs == 0) throw ConfigError("jobs must be at least 1");
    validate(spec.engine);
}

namespace {

std::vector<ReportRow> run_job(const SuiteEntry& entry, std::size_t block, const SweepSpec& spec) {
    const CsbMatrix csb = prune_entry(entry, {block, block}, spec.prune_fraction);
    std::mt19937_64 rng(entry.seed ^ block);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    Vector x(csb.cols);
    for (auto& v : x) v = uni(rng);
    const Vector ref = spec.verify ? csb_mvm(csb, x) : Vector{};
    const std::size_t nnz = nonzero_count(csb);

    std::vector<ReportRow> rows;
    for (SharingMode mode : spec.modes) {
        EngineConfig cfg = spec.engine;
        cfg.mode = mode;
        const MicroProgram prog = compile_micro_serial(csb, cfg, spec.solver);
        const SimResult sim = simulate_mvm(prog, csb, x, cfg);
        if (spec.verify) {
            const double tol = 1e-9 * (1.0 + max_abs(ref));
            for (std::size_t r = 0; r < ref.size(); ++r) {
                if (std::abs(sim.output[r] - ref[r]) > tol) {
                    throw MismatchError("simulated output differs from csb_mvm on " + entry.id + " block " +
                                        std::to_string(block) + " mode " + to_string(mode));
                }
            }
        }
        ReportRow row;
        row.matrix_id = entry.id;
        row.rows = csb.rows;
        row.cols = csb.cols;
        row.block = block;
        row.mode = mode;
        row.prune_ratio = 1.0 / (1.0 - spec.prune_fraction);
        row.nnz = nnz;
        row.cycles = sim.stats.total_cycles;
        row.utilization = sim.utilization;
        row.nio = csb.val.empty() ? 0.0 : nio(csb);
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

std::vector<ReportRow> run_sweep(const SweepSpec& spec) {
    validate(spec);
    const std::vector<SuiteEntry> suite = imbalance_suite(spec.suite);
    const std::size_t nb = spec.block_sizes.size();
    const std::size_t jobs = suite.size() * nb;
    std::vector<std::vector<ReportRow>> results(jobs);
    std::vector<std::exception_ptr> errors(jobs);

#pragma omp parallel for schedule(dynamic) num_threads(static_cast<int>(spec.jobs))
    for (std::size_t k = 0; k < jobs; ++k) {
        try {
            results[k] = run_job(suite[k / nb], spec.block_sizes[k % nb], spec);
        } catch (...) {
            errors[k] = std::current_exception();
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    std::vector<ReportRow> rows;
    for (auto& r : results) rows.insert(rows.end(), r.begin(), r.end());
    return rows;
}

}  // namespace csbrnn
