#pragma once

// Cycle-level model of the CSB-Engine.
//
// Timing: an r x c item on a P x Q group takes ceil(r/P) * ceil(c/Q) cycles;
// a group's iteration time is the sum over its items and the iteration lasts
// as long as the slowest group. Horizontal reduction, output reordering and
// weight/input fetch are free.

#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "csbrnn/csb.hpp"
#include "csbrnn/dataflow.hpp"
#include "csbrnn/schedule.hpp"

namespace csbrnn {

std::uint64_t item_cycles(std::size_t rows, std::size_t cols, const EngineConfig& cfg);

struct CycleStats {
    std::uint64_t total_cycles = 0;
    std::uint64_t effective_macs = 0;
    std::vector<std::uint64_t> per_group_busy_cycles;
    std::size_t peak_pe_count = 0;

    // effective_macs / (total_cycles * peak_pe_count), 0 for an idle run.
    double utilization() const;
    bool operator==(const CycleStats&) const = default;
};

struct IterationTrace {
    std::size_t iter_row = 0;
    std::size_t iter_col = 0;
    std::vector<std::uint64_t> group_cycles;
    std::uint64_t duration = 0;
};

struct SimResult {
    Vector output;  // csb.rows entries
    CycleStats stats;
    double utilization = 0.0;
    std::vector<IterationTrace> trace;
};

// `x` has csb.cols entries. Throws MismatchError when the program was not
// compiled for this matrix and engine.
SimResult simulate_mvm(const MicroProgram& prog, const CsbMatrix& csb, std::span<const double> x,
                       const EngineConfig& cfg);

// One JSON object per iteration: {"iter":[i,j],"duration":d,"group_cycles":[...]}.
void write_trace_jsonl(std::ostream& os, const std::vector<IterationTrace>& trace);

struct RnnSimOptions {
    std::size_t ew_unit_width = 1;  // elements per cycle of an element-wise unit
};

struct RnnSimResult {
    std::vector<Vector> h_sequence;
    RnnState final_state;
    CycleStats stats;  // summed over every word of every step
};

// Runs the macro program word by word; engine sections execute on
// simulate_mvm with the micro program compiled for their weight slot.
RnnSimResult simulate_rnn(const MacroProgram& macro, const std::map<std::string, MicroProgram>& micro,
                          const WeightSet& weights, const std::vector<Vector>& x_sequence,
                          const RnnState& initial, const EngineConfig& cfg,
                          const RnnSimOptions& options = {});

struct ReportRow {
    std::string matrix_id;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t block = 0;
    SharingMode mode = SharingMode::none;
    double prune_ratio = 0.0;
    std::size_t nnz = 0;
    std::uint64_t cycles = 0;
    double utilization = 0.0;
    double nio = 0.0;
};

struct ModeAverage {
    SharingMode mode = SharingMode::none;
    std::size_t count = 0;
    double utilization = 0.0;
    double cycles = 0.0;
    double nio = 0.0;
};

struct UtilizationReport {
    std::vector<ReportRow> rows;
    std::vector<ModeAverage> averages;  // arithmetic means, in mode order
};

UtilizationReport utilization_report(std::vector<ReportRow> rows);

inline constexpr const char* kCsvHeader =
    "matrix_id,rows,cols,block,mode,prune_ratio,nnz,cycles,utilization,nio";
void write_csv_row(std::ostream& os, const ReportRow& row);
void write_csv(std::ostream& os, const std::vector<ReportRow>& rows);

}  // namespace csbrnn
