// csb: command-line driver for pruning, compilation, simulation and sweeps.
//
// Exit codes: 0 success, 1 other failure, 2 config/validation, 3 data format,
// 4 verification mismatch.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "csbrnn/admm.hpp"
#include "csbrnn/csb.hpp"
#include "csbrnn/csb_io.hpp"
#include "csbrnn/dataflow.hpp"
#include "csbrnn/engine.hpp"
#include "csbrnn/errors.hpp"
#include "csbrnn/schedule.hpp"
#include "csbrnn/sweep.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace csbrnn;
using csbtool::RunConfig;

namespace {

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitFormat = 3;
constexpr int kExitMismatch = 4;

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
}

RunConfig load_config(const fs::path& path) {
    try {
        return csbtool::load_run_config(path);
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

struct EngineFlags {
    std::string grid = "4x4";
    std::string pe = "4x4";
    std::string mode = "two_d";
    std::string balance = "upper";
    std::size_t max_nodes = SolverOptions{}.max_nodes;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--grid", grid, "PEGroup grid KxL")->capture_default_str();
        cmd->add_option("--pe", pe, "PE array per group PxQ")->capture_default_str();
        cmd->add_option("--mode", mode, "none|vertical|horizontal|two_d")->capture_default_str();
        cmd->add_option("--balance", balance, "upper|two_sided")->capture_default_str();
        cmd->add_option("--max-nodes", max_nodes, "search node budget per margin probe")->capture_default_str();
    }

    EngineConfig engine() const {
        EngineConfig cfg;
        std::tie(cfg.grid_rows, cfg.grid_cols) = csbtool::parse_dims(grid);
        std::tie(cfg.pe_rows, cfg.pe_cols) = csbtool::parse_dims(pe);
        cfg.mode = parse_sharing_mode(mode);
        validate(cfg);
        return cfg;
    }

    SolverOptions solver() const { return {parse_balance_bound(balance), max_nodes}; }
};

nlohmann::json report_json(const PruneReport& r, std::uint64_t seed) {
    nlohmann::json rounds = nlohmann::json::array();
    for (const RoundRecord& rr : r.rounds) {
        rounds.push_back({{"fraction", rr.fraction},
                          {"step", rr.step},
                          {"validation_loss", rr.validation_loss},
                          {"passed", rr.passed}});
    }
    return {{"seed", seed},
            {"baseline_loss", r.baseline_loss},
            {"target_loss", r.target_loss},
            {"final_fraction", r.final_fraction},
            {"compression_ratio", r.compression_ratio},
            {"final_loss", r.final_loss},
            {"nio", r.final_model.val.empty() ? 0.0 : nio(r.final_model)},
            {"rounds", rounds}};
}

int cmd_prune(const fs::path& config_path, const fs::path& out_override) {
    const RunConfig cfg = load_config(config_path);
    const fs::path out = out_override.empty() ? cfg.output_dir : out_override;
    const SyntheticTask task = SyntheticTask::generate(cfg.task);
    const PruneReport report = progressive_prune(task, cfg.prune);
    fs::create_directories(out);
    write_text(out / "prune_report.json", report_json(report, cfg.seed).dump(2) + "\n");
    write_csb_file(out / "model.csb", report.final_model);
    std::printf("final fraction %.6f (%.2fx), loss %.6g vs target %.6g, %zu rounds\n", report.final_fraction,
                report.compression_ratio, report.final_loss, report.target_loss, report.rounds.size());
    return 0;
}

int cmd_compile(const fs::path& model, const std::string& cell, std::size_t input_dim, std::size_t hidden_dim,
                const std::string& block, const EngineFlags& flags, const fs::path& out) {
    const EngineConfig cfg = flags.engine();
    if (!cell.empty()) {
        if (input_dim == 0 || hidden_dim == 0) throw ConfigError("--cell needs --input-dim and --hidden-dim");
        MacroOptions options;
        const auto [br, bc] = csbtool::parse_dims(block);
        options.block_shape = {br, bc};
        const CellGraph graph = build_cell_graph(parse_cell_type(cell), input_dim, hidden_dim);
        write_text(out, to_text(compile_macro(graph, cfg, options)));
        return 0;
    }
    if (model.empty()) throw ConfigError("compile needs --model or --cell");
    const CsbMatrix csb = read_csb_file(model);
    write_text(out, to_text(compile_micro(csb, cfg, flags.solver())));
    return 0;
}

Vector read_vector(const fs::path& path, std::size_t expected) {
    std::istringstream in(read_text(path));
    Vector x;
    double v = 0.0;
    while (in >> v) x.push_back(v);
    if (!in.eof()) throw FormatError(FormatErrorKind::syntax, "non-numeric entry in " + path.string());
    if (x.size() > expected) throw DimensionError("input has " + std::to_string(x.size()) + " entries, matrix has " +
                                                  std::to_string(expected) + " columns");
    x.resize(expected, 0.0);
    return x;
}

struct SimulateArgs {
    fs::path model, program, input, trace, csv, output;
    std::uint64_t seed = 1;
    bool verify = false;
    std::string id;
};

int cmd_simulate(const SimulateArgs& a, const EngineFlags& flags) {
    const EngineConfig cfg = flags.engine();
    const CsbMatrix csb = read_csb_file(a.model);
    const MicroProgram prog = a.program.empty() ? compile_micro(csb, cfg, flags.solver())
                                                : parse_micro_program(read_text(a.program), csb, cfg);
    Vector x;
    if (!a.input.empty()) {
        x = read_vector(a.input, csb.cols);
    } else {
        std::mt19937_64 rng(a.seed);
        std::uniform_real_distribution<double> uni(-1.0, 1.0);
        x.resize(csb.cols);
        for (auto& v : x) v = uni(rng);
    }
    const SimResult sim = simulate_mvm(prog, csb, x, cfg);

    if (!a.trace.empty()) {
        std::ostringstream ss;
        write_trace_jsonl(ss, sim.trace);
        write_text(a.trace, ss.str());
    }
    if (!a.output.empty()) {
        std::ostringstream ss;
        ss.precision(17);
        for (double v : sim.output) ss << v << '\n';
        write_text(a.output, ss.str());
    }
    ReportRow row;
    row.matrix_id = a.id.empty() ? a.model.stem().string() : a.id;
    row.rows = csb.rows;
    row.cols = csb.cols;
    row.block = csb.block_shape.block_rows;
    row.mode = cfg.mode;
    row.nnz = nonzero_count(csb);
    row.prune_ratio = csb.val.empty() ? 0.0 : double(csb.rows * csb.cols) / double(csb.val.size());
    row.cycles = sim.stats.total_cycles;
    row.utilization = sim.utilization;
    row.nio = csb.val.empty() ? 0.0 : nio(csb);
    std::ostringstream ss;
    write_csv(ss, {row});
    write_text(a.csv.empty() ? fs::path("-") : a.csv, ss.str());

    if (a.verify) {
        const Vector ref = csb_mvm(csb, x);
        const double tol = 1e-9 * (1.0 + max_abs(ref));
        for (std::size_t r = 0; r < ref.size(); ++r) {
            if (std::abs(ref[r] - sim.output[r]) > tol) {
                std::fprintf(stderr, "verify: row %zu simulated %.17g, csb_mvm %.17g\n", r, sim.output[r], ref[r]);
                return kExitMismatch;
            }
        }
        std::fprintf(stderr, "verify: simulated output matches csb_mvm\n");
    }
    return 0;
}

void print_averages(const UtilizationReport& rep) {
    std::printf("mode,count,mean_utilization,mean_cycles,mean_nio\n");
    for (const ModeAverage& m : rep.averages) {
        std::printf("%s,%zu,%.6f,%.3f,%.6f\n", to_string(m.mode), m.count, m.utilization, m.cycles, m.nio);
    }
}

int cmd_sweep(const fs::path& config_path, std::size_t jobs, const fs::path& out_override) {
    RunConfig cfg = load_config(config_path);
    if (jobs == 0) throw ConfigError("--jobs must be at least 1");
    cfg.sweep.jobs = jobs;
    const auto rows = run_sweep(cfg.sweep);
    const fs::path out = out_override.empty() ? cfg.output_dir / "sweep.csv" : out_override;
    std::ostringstream ss;
    write_csv(ss, rows);
    write_text(out, ss.str());
    print_averages(utilization_report(rows));
    return 0;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::vector<ReportRow> read_report_csv(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) {
        throw FormatError(FormatErrorKind::syntax, path.string() + ": missing stats CSV header");
    }
    std::vector<ReportRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_csv(line);
        const std::string where = path.string() + ":" + std::to_string(lineno);
        if (f.size() != 10) throw FormatError(FormatErrorKind::syntax, where + ": expected 10 fields");
        try {
            ReportRow r;
            r.matrix_id = f[0];
            r.rows = std::stoul(f[1]);
            r.cols = std::stoul(f[2]);
            r.block = std::stoul(f[3]);
            r.mode = parse_sharing_mode(f[4]);
            r.prune_ratio = std::stod(f[5]);
            r.nnz = std::stoul(f[6]);
            r.cycles = std::stoull(f[7]);
            r.utilization = std::stod(f[8]);
            r.nio = std::stod(f[9]);
            rows.push_back(r);
        } catch (const std::exception&) {
            throw FormatError(FormatErrorKind::syntax, where + ": malformed field");
        }
    }
    return rows;
}

int cmd_report(const std::vector<fs::path>& inputs, bool by_block) {
    std::vector<ReportRow> rows;
    for (const auto& p : inputs) {
        auto part = read_report_csv(p);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    if (!by_block) {
        print_averages(utilization_report(rows));
        return 0;
    }
    std::map<std::size_t, std::vector<ReportRow>> groups;
    for (const auto& r : rows) groups[r.block].push_back(r);
    std::printf("block,mode,count,mean_utilization,mean_cycles,mean_nio\n");
    for (auto& [block, part] : groups) {
        for (const ModeAverage& m : utilization_report(part).averages) {
            std::printf("%zu,%s,%zu,%.6f,%.3f,%.6f\n", block, to_string(m.mode), m.count, m.utilization, m.cycles,
                        m.nio);
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CSB sparse RNN pruning, scheduling and engine simulation"};
    app.require_subcommand(1);

    fs::path config, out;
    auto* prune = app.add_subcommand("prune", "progressive ADMM pruning on the synthetic task");
    prune->add_option("--config", config, "JSON run configuration")->required();
    prune->add_option("--out", out, "output directory (overrides output_dir)");

    fs::path model;
    std::string cell, block = "16x16";
    std::size_t input_dim = 0, hidden_dim = 0;
    EngineFlags compile_flags;
    fs::path compile_out;
    auto* compile = app.add_subcommand("compile", "micro program for a CSB model, or macro program for a cell");
    compile->add_option("--model", model, "CSB binary model");
    compile->add_option("--cell", cell, "gru|lstm: emit the macro program instead");
    compile->add_option("--input-dim", input_dim);
    compile->add_option("--hidden-dim", hidden_dim);
    compile->add_option("--block", block, "block shape for engine iteration counts")->capture_default_str();
    compile->add_option("-o,--output", compile_out, "output file (default stdout)");
    compile_flags.add_to(compile);

    SimulateArgs sim;
    EngineFlags sim_flags;
    auto* simulate = app.add_subcommand("simulate", "run a micro program on the engine model");
    simulate->add_option("--model", sim.model, "CSB binary model")->required();
    simulate->add_option("--program", sim.program, "micro program text (compiled on the fly if absent)");
    simulate->add_option("--input", sim.input, "input vector, whitespace separated");
    simulate->add_option("--seed", sim.seed, "seed for a random input when --input is absent");
    simulate->add_flag("--verify", sim.verify, "compare against csb_mvm, exit 4 on mismatch");
    simulate->add_option("--trace", sim.trace, "per-iteration JSON lines");
    simulate->add_option("--csv", sim.csv, "stats CSV (default stdout)");
    simulate->add_option("--output", sim.output, "simulated output vector");
    simulate->add_option("--id", sim.id, "matrix_id column (default model file stem)");
    sim_flags.add_to(simulate);

    fs::path sweep_config, sweep_out;
    std::size_t jobs = 1;
    auto* sweep = app.add_subcommand("sweep", "block size x sharing mode sweep over the imbalance suite");
    sweep->add_option("--config", sweep_config, "JSON run configuration")->required();
    sweep->add_option("--jobs", jobs, "parallel jobs")->capture_default_str();
    sweep->add_option("-o,--output", sweep_out, "CSV path (default <output_dir>/sweep.csv)");

    std::vector<fs::path> report_inputs;
    bool by_block = false;
    auto* report = app.add_subcommand("report", "per-mode averages of stats CSV files");
    report->add_option("csv", report_inputs, "stats CSV files")->required();
    report->add_flag("--by-block", by_block, "split averages by block size");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (*prune) return cmd_prune(config, out);
        if (*compile) return cmd_compile(model, cell, input_dim, hidden_dim, block, compile_flags, compile_out);
        if (*simulate) return cmd_simulate(sim, sim_flags);
        if (*sweep) return cmd_sweep(sweep_config, jobs, sweep_out);
        if (*report) return cmd_report(report_inputs, by_block);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return kExitFormat;
    } catch (const MismatchError& e) {
        std::fprintf(stderr, "mismatch: %s\n", e.what());
        return kExitMismatch;
    } catch (const UnsupportedCellError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitOther;
    }
    return kExitOther;
}
