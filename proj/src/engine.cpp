#include "csbrnn/engine.hpp"

#include <algorithm>
#include <cstdio>

#include "csbrnn/errors.hpp"

namespace csbrnn {

std::uint64_t item_cycles(std::size_t rows, std::size_t cols, const EngineConfig& cfg) {
    return std::uint64_t(ceil_div(rows, cfg.pe_rows)) * ceil_div(cols, cfg.pe_cols);
}

double CycleStats::utilization() const {
    if (total_cycles == 0 || peak_pe_count == 0) return 0.0;
    return double(effective_macs) / (double(total_cycles) * double(peak_pe_count));
}

namespace {

void check_program_matches(const MicroProgram& prog, const CsbMatrix& csb, const EngineConfig& cfg) {
    if (!(prog.config == cfg)) {
        throw MismatchError(std::string("micro program compiled for engine grid ") +
                            std::to_string(prog.config.grid_rows) + "x" + std::to_string(prog.config.grid_cols) +
                            " pe " + std::to_string(prog.config.pe_rows) + "x" +
                            std::to_string(prog.config.pe_cols) + " mode " + to_string(prog.config.mode) +
                            ", simulating a different engine");
    }
    check_coverage(prog, csb);
}

// Executing group of an item must be the owner (local), its right neighbour
// (horizontal) or its lower neighbour (vertical).
std::size_t owner_group(const MicroItem& item, const EngineConfig& cfg, std::size_t i, std::size_t j,
                        std::size_t exec) {
    const std::size_t r0 = i * cfg.grid_rows, c0 = j * cfg.grid_cols;
    if (item.block_row < r0 || item.block_row >= r0 + cfg.grid_rows || item.block_col < c0 ||
        item.block_col >= c0 + cfg.grid_cols) {
        throw MismatchError("item of block (" + std::to_string(item.block_row) + "," +
                            std::to_string(item.block_col) + ") scheduled outside its iteration");
    }
    const std::size_t owner = (item.block_row - r0) * cfg.grid_cols + (item.block_col - c0);
    const std::size_t expected = item.sharing == Sharing::local        ? owner
                                 : item.sharing == Sharing::horizontal ? cfg.right_of(owner)
                                                                       : cfg.down_of(owner);
    if (expected != exec) throw MismatchError("item executed by a group without a path to its owner");
    return owner;
}

}  // namespace

SimResult simulate_mvm(const MicroProgram& prog, const CsbMatrix& csb, std::span<const double> x,
                       const EngineConfig& cfg) {
    check_program_matches(prog, csb, cfg);
    if (x.size() != csb.cols) {
        throw DimensionError("simulate_mvm: x has length " + std::to_string(x.size()) + ", matrix has " +
                             std::to_string(csb.cols) + " columns");
    }
    const std::size_t G = cfg.group_count();
    const auto& shape = csb.block_shape;
    const auto spans = block_spans(csb);
    const std::size_t gr = csb.block_grid_rows();

    SimResult res;
    res.output.assign(csb.rows, 0.0);
    res.stats.per_group_busy_cycles.assign(G, 0);
    res.stats.peak_pe_count = cfg.peak_pe_count();

    std::vector<int> row_pos(shape.block_rows), col_pos(shape.block_cols);
    for (std::size_t i = 0; i < prog.iter_rows; ++i) {
        // NeuronAccumBuffer of every group for this window of block rows.
        std::vector<Vector> acc(G, Vector(shape.block_rows, 0.0));
        for (std::size_t j = 0; j < prog.iter_cols; ++j) {
            const IterationSchedule& it = prog.iterations[i * prog.iter_cols + j];
            IterationTrace tr{i, j, std::vector<std::uint64_t>(G, 0), 0};
            for (std::size_t g = 0; g < G; ++g) {
                for (const MicroItem& item : it.groups[g]) {
                    const std::size_t owner = owner_group(item, cfg, i, j, g);
                    tr.group_cycles[g] += item_cycles(item.trip_rows, item.trip_cols, cfg);
                    res.stats.effective_macs += std::uint64_t(item.trip_rows) * item.trip_cols;

                    const std::size_t b = item.block_row * csb.block_grid_cols() + item.block_col;
                    const BlockSpan& sp = spans[b];
                    for (std::size_t r = 0; r < sp.kernel_rows; ++r)
                        row_pos[csb.row_idx[sp.row_offset + r]] = static_cast<int>(r);
                    for (std::size_t c = 0; c < sp.kernel_cols; ++c)
                        col_pos[csb.col_idx[sp.col_offset + c]] = static_cast<int>(c);
                    // Horizontal items read the owner's input segment through
                    // the neighbour port; vertical items accumulate into the
                    // owner's buffer.
                    Vector& target = item.sharing == Sharing::vertical ? acc[owner] : acc[g];
                    const std::size_t x0 = item.block_col * shape.block_cols;
                    for (auto r : item.row_idx) {
                        const double* v = csb.val.data() + sp.val_offset +
                                          std::size_t(row_pos[r]) * sp.kernel_cols;
                        double sum = 0.0;
                        for (auto c : item.col_idx) sum += v[col_pos[c]] * x[x0 + c];
                        target[r] += sum;
                    }
                }
                res.stats.per_group_busy_cycles[g] += tr.group_cycles[g];
                tr.duration = std::max(tr.duration, tr.group_cycles[g]);
            }
            res.stats.total_cycles += tr.duration;
            res.trace.push_back(std::move(tr));
        }
        // Horizontal reduction of each group row emits one output segment.
        for (std::size_t k = 0; k < cfg.grid_rows; ++k) {
            const std::size_t br = i * cfg.grid_rows + k;
            if (br >= gr) continue;
            double* y = res.output.data() + br * shape.block_rows;
            for (std::size_t l = 0; l < cfg.grid_cols; ++l) {
                const Vector& a = acc[k * cfg.grid_cols + l];
                for (std::size_t r = 0; r < shape.block_rows; ++r) y[r] += a[r];
            }
        }
    }
    res.utilization = res.stats.utilization();
    return res;
}

void write_trace_jsonl(std::ostream& os, const std::vector<IterationTrace>& trace) {
    for (const IterationTrace& t : trace) {
        os << "{\"iter\":[" << t.iter_row << ',' << t.iter_col << "],\"duration\":" << t.duration
           << ",\"group_cycles\":[";
        for (std::size_t g = 0; g < t.group_cycles.size(); ++g) {
            if (g) os << ',';
            os << t.group_cycles[g];
        }
        os << "]}\n";
    }
}

RnnSimResult simulate_rnn(const MacroProgram& macro, const std::map<std::string, MicroProgram>& micro,
                          const WeightSet& weights, const std::vector<Vector>& x_sequence,
                          const RnnState& initial, const EngineConfig& cfg, const RnnSimOptions& options) {
    if (options.ew_unit_width == 0) throw ConfigError("element-wise unit width must be at least 1");
    check_bindings(macro.graph, weights);
    for (const WeightSlot& slot : macro.graph.weight_slots) {
        const auto it = micro.find(slot.name);
        if (it == micro.end()) throw LinkageError("no micro program for weight slot '" + slot.name + "'");
        check_program_matches(it->second, weights.weights.at(slot.name), cfg);
    }

    RnnSimResult out;
    out.stats.peak_pe_count = cfg.peak_pe_count();
    out.stats.per_group_busy_cycles.assign(cfg.group_count(), 0);
    std::uint64_t word_cycles = 0;

    MacroHooks hooks;
    hooks.mvm = [&](const MacroSection&, const WeightSlot& slot, const CsbMatrix& w, const Vector& x) {
        Vector padded(w.cols, 0.0);
        std::copy(x.begin(), x.end(), padded.begin());
        SimResult r = simulate_mvm(micro.at(slot.name), w, padded, cfg);
        word_cycles = std::max(word_cycles, r.stats.total_cycles);
        out.stats.effective_macs += r.stats.effective_macs;
        for (std::size_t g = 0; g < r.stats.per_group_busy_cycles.size(); ++g) {
            out.stats.per_group_busy_cycles[g] += r.stats.per_group_busy_cycles[g];
        }
        r.output.resize(slot.rows);
        return r.output;
    };
    hooks.word_done = [&](const MacroInstruction& word) {
        for (const MacroSection& s : word.sections) {
            if (s.active && s.unit != PrimitiveKind::csb_mvm) {
                word_cycles = std::max<std::uint64_t>(word_cycles, ceil_div(s.count, options.ew_unit_width));
            }
        }
        out.stats.total_cycles += word_cycles;
        word_cycles = 0;
    };
    RnnRun run = execute_macro(macro, weights, x_sequence, initial, hooks);
    out.h_sequence = std::move(run.h_sequence);
    out.final_state = std::move(run.final_state);
    return out;
}

UtilizationReport utilization_report(std::vector<ReportRow> rows) {
    if (rows.empty()) throw EmptyInputError("utilization report needs at least one row");
    UtilizationReport rep;
    for (auto mode : {SharingMode::none, SharingMode::vertical, SharingMode::horizontal, SharingMode::two_d}) {
        ModeAverage avg;
        avg.mode = mode;
        for (const ReportRow& r : rows) {
            if (r.mode != mode) continue;
            ++avg.count;
            avg.utilization += r.utilization;
            avg.cycles += double(r.cycles);
            avg.nio += r.nio;
        }
        if (avg.count == 0) continue;
        avg.utilization /= double(avg.count);
        avg.cycles /= double(avg.count);
        avg.nio /= double(avg.count);
        rep.averages.push_back(avg);
    }
    rep.rows = std::move(rows);
    return rep;
}

void write_csv_row(std::ostream& os, const ReportRow& row) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%.6f,%zu,%llu,%.6f,%.6f", row.prune_ratio, row.nnz,
                  static_cast<unsigned long long>(row.cycles), row.utilization, row.nio);
    os << row.matrix_id << ',' << row.rows << ',' << row.cols << ',' << row.block << ','
       << to_string(row.mode) << ',' << buf << '\n';
}

void write_csv(std::ostream& os, const std::vector<ReportRow>& rows) {
    os << kCsvHeader << '\n';
    for (const ReportRow& r : rows) write_csv_row(os, r);
}

}  // namespace csbrnn
