#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "csbrnn/engine.hpp"
#include "csbrnn/errors.hpp"
#include "oracles.hpp"
#include "rnn_fixtures.hpp"
#include "schedule_fixtures.hpp"

using namespace csbrnn;

namespace {

SimResult run(const CsbMatrix& csb, const EngineConfig& cfg, std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    const Vector x = oracle::random_vector(rng, csb.cols);
    return simulate_mvm(compile_micro(csb, cfg), csb, x, cfg);
}

}  // namespace

TEST(ItemCycles, CeilArithmetic) {
    EngineConfig cfg;
    cfg.pe_rows = cfg.pe_cols = 2;
    EXPECT_EQ(item_cycles(4, 6, cfg), 6u);
    EXPECT_EQ(item_cycles(4, 4, cfg), 4u);
    EXPECT_EQ(item_cycles(4, 2, cfg), 2u);
    EXPECT_EQ(item_cycles(1, 1, cfg), 1u);
    EXPECT_EQ(item_cycles(5, 3, cfg), 6u);
}

TEST(SimulateMvm, WorkedExampleWithSharing) {
    const CsbMatrix csb = fixture::worked_example();
    const auto cfg = fixture::worked_config(SharingMode::horizontal);
    const SimResult r = run(csb, cfg);
    ASSERT_EQ(r.trace.size(), 1u);
    EXPECT_EQ(r.trace[0].group_cycles, (std::vector<std::uint64_t>{6, 6}));
    EXPECT_EQ(r.stats.total_cycles, 6u);
    EXPECT_EQ(r.stats.effective_macs, 48u);
    EXPECT_EQ(r.stats.peak_pe_count, 8u);
    EXPECT_DOUBLE_EQ(r.utilization, 1.0);
}

TEST(SimulateMvm, WorkedExampleWithoutSharing) {
    const CsbMatrix csb = fixture::worked_example();
    const auto cfg = fixture::worked_config(SharingMode::none);
    const SimResult r = run(csb, cfg);
    EXPECT_EQ(r.trace[0].group_cycles, (std::vector<std::uint64_t>{4, 8}));
    EXPECT_EQ(r.stats.total_cycles, 8u);
    EXPECT_DOUBLE_EQ(r.utilization, 0.75);
}

TEST(SimulateMvm, MatchesCsbMvmAndCountsEveryCellOnce) {
    std::mt19937_64 rng(12);
    const std::size_t sizes[] = {1, 2, 4};
    for (int t = 0; t < 80; ++t) {
        EngineConfig cfg;
        cfg.grid_rows = sizes[rng() % 3];
        cfg.grid_cols = sizes[rng() % 3];
        cfg.pe_rows = sizes[rng() % 3];
        cfg.pe_cols = sizes[rng() % 3];
        cfg.mode = static_cast<SharingMode>(rng() % 4);
        const CsbMatrix csb = fixture::random_kernels(rng, 1 + rng() % 7, 1 + rng() % 7, {8, 8});
        const Vector x = oracle::random_vector(rng, csb.cols);
        const SimResult r = simulate_mvm(compile_micro(csb, cfg), csb, x, cfg);
        const Vector ref = oracle::mvm(decode(csb), x);
        ASSERT_LE(oracle::max_abs_diff(r.output, ref), 1e-9 * (1.0 + oracle::inf_norm(ref)));
        EXPECT_EQ(r.stats.effective_macs, csb.val.size());
        for (auto busy : r.stats.per_group_busy_cycles) EXPECT_LE(busy, r.stats.total_cycles);
        if (r.stats.effective_macs > 0) {
            EXPECT_GT(r.utilization, 0.0);
            EXPECT_LE(r.utilization, 1.0);
        }
        std::uint64_t total = 0;
        for (const auto& tr : r.trace) total += tr.duration;
        EXPECT_EQ(total, r.stats.total_cycles);
    }
}

TEST(SimulateMvm, SharingNeverCostsCycles) {
    std::mt19937_64 rng(13);
    for (int t = 0; t < 40; ++t) {
        EngineConfig cfg;
        cfg.grid_rows = 1 + rng() % 4;
        cfg.grid_cols = 1 + rng() % 4;
        cfg.pe_rows = 1 + rng() % 4;
        cfg.pe_cols = 1 + rng() % 4;
        const CsbMatrix csb = fixture::random_kernels(rng, 8, 8, {16, 16});
        std::uint64_t cycles[4];
        for (int m = 0; m < 4; ++m) {
            cfg.mode = static_cast<SharingMode>(m);
            cycles[m] = run(csb, cfg).stats.total_cycles;
        }
        EXPECT_LE(cycles[1], cycles[0]) << "trial " << t;
        EXPECT_LE(cycles[2], cycles[0]) << "trial " << t;
        EXPECT_LE(cycles[3], cycles[0]) << "trial " << t;
    }
}

TEST(SimulateMvm, Deterministic) {
    std::mt19937_64 rng(14);
    const CsbMatrix csb = fixture::random_kernels(rng, 8, 8, {8, 8});
    EngineConfig cfg;
    const SimResult a = run(csb, cfg), b = run(csb, cfg);
    EXPECT_EQ(a.output, b.output);
    EXPECT_EQ(a.stats, b.stats);
}

TEST(SimulateMvm, Mismatches) {
    const CsbMatrix csb = fixture::worked_example();
    const auto cfg = fixture::worked_config(SharingMode::horizontal);
    const MicroProgram prog = compile_micro(csb, cfg);
    const Vector x(csb.cols, 1.0);
    EXPECT_THROW(simulate_mvm(prog, csb, x, fixture::worked_config(SharingMode::none)), MismatchError);
    const CsbMatrix other = fixture::with_kernels({{{4, 8}, {4, 4}}}, {8, 8});
    EXPECT_THROW(simulate_mvm(prog, other, x, cfg), MismatchError);
    EXPECT_THROW(simulate_mvm(prog, csb, Vector(3, 1.0), cfg), DimensionError);
    auto moved = prog;
    std::swap(moved.iterations[0].groups[0], moved.iterations[0].groups[1]);
    EXPECT_THROW(simulate_mvm(moved, csb, x, cfg), MismatchError);
}

TEST(SimulateMvm, TraceJsonLines) {
    const CsbMatrix csb = fixture::worked_example();
    const auto cfg = fixture::worked_config(SharingMode::horizontal);
    std::ostringstream os;
    write_trace_jsonl(os, run(csb, cfg).trace);
    EXPECT_EQ(os.str(), "{\"iter\":[0,0],\"duration\":6,\"group_cycles\":[6,6]}\n");
}

TEST(SimulateRnn, MatchesGoldenModel) {
    std::mt19937_64 rng(15);
    for (auto cell : {CellType::gru, CellType::lstm}) {
        const CellGraph g = build_cell_graph(cell, 24, 32);
        const auto w = fixture::random_weights(g, rng, {8, 8}, 0.75);
        EngineConfig cfg;
        cfg.grid_rows = cfg.grid_cols = 2;
        cfg.pe_rows = cfg.pe_cols = 2;
        MacroOptions mo;
        mo.block_shape = {8, 8};
        const MacroProgram macro = compile_macro(g, cfg, mo);
        std::map<std::string, MicroProgram> micro;
        for (const auto& [name, csb] : w.set.weights) micro[name] = compile_micro(csb, cfg);
        const auto xs = fixture::random_sequence(rng, 32, 24);
        const RnnSimResult sim = simulate_rnn(macro, micro, w.set, xs, zero_state(g), cfg);
        const RnnRun gold = execute_macro(macro, w.set, xs, zero_state(g));
        for (std::size_t t = 0; t < xs.size(); ++t) {
            ASSERT_LE(oracle::max_abs_diff(sim.h_sequence[t], gold.h_sequence[t]), 1e-9);
        }
        std::uint64_t macs = 0;
        for (const auto& [name, csb] : w.set.weights) macs += csb.val.size();
        EXPECT_EQ(sim.stats.effective_macs, macs * xs.size());
        EXPECT_GT(sim.stats.total_cycles, 0u);
    }
}

TEST(SimulateRnn, ZeroWeights) {
    std::mt19937_64 rng(16);
    const CellGraph g = build_cell_graph(CellType::gru, 8, 8);
    auto w = fixture::random_weights(g, rng, {4, 4}, 0.0, 0.0);
    for (auto& [name, csb] : w.set.weights) csb = encode(DenseMatrix(8, 8), {4, 4});
    for (auto& [name, b] : w.set.biases) b.assign(8, 0.0);
    EngineConfig cfg;
    std::map<std::string, MicroProgram> micro;
    for (const auto& [name, csb] : w.set.weights) micro[name] = compile_micro(csb, cfg);
    const auto xs = fixture::random_sequence(rng, 5, 8);
    const RnnSimResult sim = simulate_rnn(compile_macro(g, cfg), micro, w.set, xs, zero_state(g), cfg);
    for (const auto& h : sim.h_sequence) EXPECT_EQ(h, Vector(8, 0.0));
    EXPECT_EQ(sim.stats.effective_macs, 0u);
}

TEST(SimulateRnn, SingleMvmWordEqualsSimulateMvm) {
    std::mt19937_64 rng(17);
    CellGraph g;
    g.input_dim = g.hidden_dim = 16;
    g.weight_slots.push_back({"W", 16, 16});
    g.nodes.push_back({PrimitiveKind::csb_mvm, {{Operand::Source::input, 0, false}}, 0, "W"});
    g.h_out = 0;
    const CsbMatrix csb = fixture::random_kernels(rng, 2, 2, {8, 8});
    EngineConfig cfg;
    cfg.grid_rows = cfg.grid_cols = 2;
    WeightSet ws;
    ws.weights["W"] = csb;
    const std::map<std::string, MicroProgram> micro{{"W", compile_micro(csb, cfg)}};
    const auto xs = fixture::random_sequence(rng, 1, 16);
    const RnnSimResult sim = simulate_rnn(compile_macro(g, cfg), micro, ws, xs, zero_state(g), cfg);
    const SimResult one = simulate_mvm(micro.at("W"), csb, xs[0], cfg);
    EXPECT_EQ(sim.stats.total_cycles, one.stats.total_cycles);
    EXPECT_EQ(sim.stats.effective_macs, one.stats.effective_macs);
    EXPECT_EQ(sim.stats.per_group_busy_cycles, one.stats.per_group_busy_cycles);
    EXPECT_EQ(sim.h_sequence[0], one.output);
}

TEST(SimulateRnn, ElementwiseWordsCostCountOverWidth) {
    std::mt19937_64 rng(18);
    CellGraph g;
    g.input_dim = g.hidden_dim = 10;
    g.nodes.push_back({PrimitiveKind::sigmoid, {{Operand::Source::input, 0, false}}, std::nullopt, "s"});
    g.h_out = 0;
    const auto xs = fixture::random_sequence(rng, 3, 10);
    EngineConfig cfg;
    RnnSimOptions opt;
    opt.ew_unit_width = 4;
    const RnnSimResult sim = simulate_rnn(compile_macro(g, cfg), {}, WeightSet{}, xs, zero_state(g), cfg, opt);
    EXPECT_EQ(sim.stats.total_cycles, 3u * 3u);
    opt.ew_unit_width = 0;
    EXPECT_THROW(simulate_rnn(compile_macro(g, cfg), {}, WeightSet{}, xs, zero_state(g), cfg, opt), ConfigError);
}

TEST(SimulateRnn, MissingMicroProgram) {
    std::mt19937_64 rng(19);
    const CellGraph g = build_cell_graph(CellType::gru, 8, 8);
    const auto w = fixture::random_weights(g, rng, {4, 4}, 0.5);
    EngineConfig cfg;
    std::map<std::string, MicroProgram> micro;
    for (const auto& [name, csb] : w.set.weights) micro[name] = compile_micro(csb, cfg);
    micro.erase("U_h");
    const auto xs = fixture::random_sequence(rng, 2, 8);
    EXPECT_THROW(simulate_rnn(compile_macro(g, cfg), micro, w.set, xs, zero_state(g), cfg), LinkageError);
}

TEST(UtilizationReport, RowsAndAverages) {
    const CsbMatrix csb = fixture::worked_example();
    std::vector<ReportRow> rows;
    for (auto mode : {SharingMode::none, SharingMode::horizontal}) {
        const auto cfg = fixture::worked_config(mode);
        const SimResult r = run(csb, cfg);
        ReportRow row;
        row.matrix_id = "worked";
        row.mode = mode;
        row.cycles = r.stats.total_cycles;
        row.utilization = r.utilization;
        rows.push_back(row);
    }
    const UtilizationReport one = utilization_report({rows[0]});
    ASSERT_EQ(one.rows.size(), 1u);
    EXPECT_EQ(one.averages.size(), 1u);
    EXPECT_DOUBLE_EQ(one.averages[0].utilization, 0.75);

    const UtilizationReport rep = utilization_report(rows);
    ASSERT_EQ(rep.averages.size(), 2u);
    EXPECT_EQ(rep.averages[0].mode, SharingMode::none);
    EXPECT_DOUBLE_EQ(rep.averages[0].utilization, 0.75);
    EXPECT_DOUBLE_EQ(rep.averages[1].utilization, 1.0);
    EXPECT_DOUBLE_EQ(rep.averages[1].cycles, 6.0);

    rows.push_back(rows[1]);
    rows.back().utilization = 0.5;
    EXPECT_DOUBLE_EQ(utilization_report(rows).averages[1].utilization, 0.75);
    EXPECT_THROW(utilization_report({}), EmptyInputError);
}

TEST(UtilizationReport, CsvRow) {
    ReportRow row;
    row.matrix_id = "m0";
    row.rows = 64;
    row.cols = 32;
    row.block = 16;
    row.mode = SharingMode::two_d;
    row.prune_ratio = 4.0;
    row.nnz = 512;
    row.cycles = 77;
    row.utilization = 0.5;
    row.nio = 0.25;
    std::ostringstream os;
    write_csv(os, {row});
    EXPECT_EQ(os.str(), std::string(kCsvHeader) + "\nm0,64,32,16,two_d,4.000000,512,77,0.500000,0.250000\n");
}
