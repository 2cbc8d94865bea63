#pragma once

// Workload-balanced micro-instruction compilation for the CSB-Engine.
//
// The engine is a K x L torus of PEGroups, each a P x Q PE array. One block
// iteration maps a K x L window of blocks onto the groups. A group may hand
// part of its kernel to its right neighbour (horizontal share: the neighbour
// reads our input segment through its extra buffer port) and to its lower
// neighbour (vertical share: the neighbour accumulates into our buffer). Each
// kernel is split three ways, shown here for the full-rows branch:
//
//          <-- n' -->  <- dn_h ->
//        +-----------+----------+  ^
//        |   local   |          |  | m'
//        |  m' x n'  |  horiz   |  v
//        +-----------+  m x dn_h|
//        |   vert    |          |
//        | dm_v x n' |          |
//        +-----------+----------+
//
// In the full-columns branch the vertical share spans all n columns and takes
// the bottom-right corner instead. The leading corner stays local, trailing
// columns go right and trailing rows go down. Partition variables are chosen
// per iteration so that every group's
// load (own local + left neighbour's horizontal + upper neighbour's vertical)
// lies within `margin` MACs of the window average; the margin starts at 0 and
// grows in P*Q steps until the constraints are satisfiable.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "csbrnn/csb.hpp"

namespace csbrnn {

enum class SharingMode { none, vertical, horizontal, two_d };

const char* to_string(SharingMode mode);
SharingMode parse_sharing_mode(const std::string& text);

struct EngineConfig {
    std::size_t grid_rows = 4;  // K
    std::size_t grid_cols = 4;  // L
    std::size_t pe_rows = 4;    // P
    std::size_t pe_cols = 4;    // Q
    SharingMode mode = SharingMode::two_d;

    std::size_t group_count() const { return grid_rows * grid_cols; }
    std::size_t peak_pe_count() const { return group_count() * pe_rows * pe_cols; }
    // A path to oneself is meaningless, so a 1-wide torus dimension has no
    // sharing in that direction.
    bool horizontal_enabled() const {
        return (mode == SharingMode::horizontal || mode == SharingMode::two_d) && grid_cols > 1;
    }
    bool vertical_enabled() const {
        return (mode == SharingMode::vertical || mode == SharingMode::two_d) && grid_rows > 1;
    }
    std::size_t left_of(std::size_t group) const;
    std::size_t up_of(std::size_t group) const;
    std::size_t right_of(std::size_t group) const;
    std::size_t down_of(std::size_t group) const;

    bool operator==(const EngineConfig&) const = default;
};

void validate(const EngineConfig& cfg);

struct KernelDims {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::uint64_t load() const { return std::uint64_t(rows) * cols; }
    bool operator==(const KernelDims&) const = default;
};

// Kernel dims of the K x L blocks one iteration processes. Groups are indexed
// row-major (k * L + l); positions past the matrix edge are empty.
struct KernelWindow {
    std::size_t iter_row = 0;
    std::size_t iter_col = 0;
    std::size_t grid_rows = 0;
    std::size_t grid_cols = 0;
    std::vector<KernelDims> kernels;
    std::vector<std::optional<std::size_t>> blocks;  // csb block index per group
    std::uint64_t total_load = 0;

    std::size_t group_count() const { return kernels.size(); }
    double avg() const { return kernels.empty() ? 0.0 : double(total_load) / double(kernels.size()); }
};

std::size_t iteration_rows(const CsbMatrix& csb, const EngineConfig& cfg);
std::size_t iteration_cols(const CsbMatrix& csb, const EngineConfig& cfg);

KernelWindow analyze_iteration(const CsbMatrix& csb, const EngineConfig& cfg, std::size_t i,
                               std::size_t j);

// Which equality pair of the split holds: the horizontal share spans every
// kernel row, or the vertical share spans every kernel column.
enum class SplitBranch { full_rows, full_cols };

struct GroupPartition {
    SplitBranch branch = SplitBranch::full_rows;
    std::size_t m = 0, n = 0;             // kernel dims
    std::size_t m_local = 0, n_local = 0;  // m', n'
    std::size_t dm_h = 0, dn_h = 0;
    std::size_t dm_v = 0, dn_v = 0;

    std::uint64_t local_load() const { return std::uint64_t(m_local) * n_local; }
    std::uint64_t horizontal_load() const { return std::uint64_t(dm_h) * dn_h; }
    std::uint64_t vertical_load() const { return std::uint64_t(dm_v) * dn_v; }

    // The split determined by its two cut positions.
    static GroupPartition make(SplitBranch branch, std::size_t m, std::size_t n, std::size_t dn_h,
                               std::size_t dm_v);
    static GroupPartition unshared(std::size_t m, std::size_t n) {
        return make(SplitBranch::full_rows, m, n, 0, 0);
    }

    bool operator==(const GroupPartition&) const = default;
};

struct PartitionVars {
    std::vector<GroupPartition> groups;

    bool operator==(const PartitionVars&) const = default;
};

// Scheduled MACs per group: own local part plus the shares received from the
// left and upper torus neighbours.
std::vector<std::uint64_t> group_loads(const PartitionVars& vars, const EngineConfig& cfg);

// How far a group's scheduled load may sit from the window average:
// upper bounds only the excess (load - avg <= margin), two_sided bounds
// |load - avg|.
enum class BalanceBound { upper, two_sided };

const char* to_string(BalanceBound bound);
BalanceBound parse_balance_bound(const std::string& text);

struct SolverOptions {
    BalanceBound balance = BalanceBound::upper;
    std::size_t max_nodes = 2000;
};

struct SolveResult {
    bool satisfiable = false;
    bool budget_exhausted = false;
    std::size_t nodes = 0;
    PartitionVars vars;
};

// Backtracking search with bounds propagation over the P/Q-aligned cut
// positions. Groups are assigned in row-major order and each group's
// candidates are tried full-rows branch first, then by (dn_h, dm_v), so the
// first solution found is the lexicographically smallest. When the node
// budget runs out the result is reported unsatisfiable with
// budget_exhausted set.
SolveResult solve_partition(const KernelWindow& window, const EngineConfig& cfg,
                            std::uint64_t margin, const SolverOptions& options = {});

// Independent post-hoc check of every partition constraint at `margin`.
// Returns a description of the first violation, or nullopt.
std::optional<std::string> check_partition(const KernelWindow& window, const EngineConfig& cfg,
                                           const PartitionVars& vars, std::uint64_t margin,
                                           BalanceBound balance = BalanceBound::upper);

// Smallest P*Q multiple at which the unshared split satisfies the balance
// bound, i.e. the margin the search ends at without any sharing.
std::uint64_t unshared_margin(const KernelWindow& window, const EngineConfig& cfg,
                              BalanceBound balance = BalanceBound::upper);

enum class Sharing { local, horizontal, vertical };

const char* to_string(Sharing sharing);

struct MicroItem {
    Sharing sharing = Sharing::local;
    std::size_t trip_rows = 0;
    std::size_t trip_cols = 0;
    std::vector<std::uint16_t> row_idx;  // in-block output rows of the owning block
    std::vector<std::uint16_t> col_idx;  // in-block input columns of the owning block
    std::size_t block_row = 0;           // owning block
    std::size_t block_col = 0;

    bool operator==(const MicroItem&) const = default;
};

struct IterationSchedule {
    std::size_t iter_row = 0;
    std::size_t iter_col = 0;
    std::uint64_t margin = 0;
    bool budget_exhausted = false;
    std::vector<KernelDims> kernels;
    PartitionVars vars;                          // empty when parsed from text
    std::vector<std::vector<MicroItem>> groups;  // items per executing group

    bool operator==(const IterationSchedule&) const = default;
};

struct MicroProgram {
    EngineConfig config;
    BlockShape block_shape;
    std::size_t iter_rows = 0;
    std::size_t iter_cols = 0;
    std::vector<IterationSchedule> iterations;  // row-major over (i, j)

    std::size_t item_count() const;
    bool operator==(const MicroProgram&) const = default;
};

// The margin search of one iteration: raises the margin in P*Q steps (by
// bisection over the same lattice, since satisfiability is monotone in the
// margin) and emits the micro items of the first satisfiable split.
IterationSchedule schedule_iteration(const CsbMatrix& csb, const std::vector<BlockSpan>& spans,
                                     const EngineConfig& cfg, std::size_t i, std::size_t j,
                                     const SolverOptions& options = {});

// Reference compiler, one iteration after another.
MicroProgram compile_micro_serial(const CsbMatrix& csb, const EngineConfig& cfg,
                                  const SolverOptions& options = {});

// Iterations are independent and solved on OpenMP threads; the output equals
// compile_micro_serial.
MicroProgram compile_micro(const CsbMatrix& csb, const EngineConfig& cfg,
                           const SolverOptions& options = {});

// Throws MismatchError unless the program covers every kernel cell of `csb`
// exactly once and every item is well formed.
void check_coverage(const MicroProgram& program, const CsbMatrix& csb);

// Line format, one item per line:
//   iter <i> <j> | group <k> <l> | <local|horiz|vert> <r>x<c> | rows=<csv> | cols=<csv>
// preceded by a '#' header naming the engine config. Indices are 0-based.
std::string to_text(const MicroProgram& program);
MicroProgram parse_micro_program(const std::string& text, const CsbMatrix& csb,
                                 const EngineConfig& cfg);

}  // namespace csbrnn
