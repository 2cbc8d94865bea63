#pragma once

// RNN cells as dataflow graphs over the engine's primitive units, and their
// compilation to VLIW macro-instruction programs.

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "csbrnn/csb.hpp"
#include "csbrnn/matrix.hpp"
#include "csbrnn/schedule.hpp"

namespace csbrnn {

enum class PrimitiveKind { csb_mvm, ew_mul, ew_add, sigmoid, tanh };
inline constexpr std::size_t kPrimitiveKinds = 5;

const char* to_string(PrimitiveKind kind);

enum class CellType { gru, lstm };

const char* to_string(CellType cell);
// Throws UnsupportedCellError for anything but "gru" and "lstm".
CellType parse_cell_type(const std::string& text);

enum class InputSlot { x, h_prev, c_prev };

struct Operand {
    enum class Source { node, input, bias, ones };
    Source source = Source::node;
    std::size_t index = 0;  // node id, InputSlot or bias slot
    bool negate = false;

    bool operator==(const Operand&) const = default;
};

struct GraphNode {
    PrimitiveKind kind = PrimitiveKind::ew_add;
    std::vector<Operand> operands;
    std::optional<std::size_t> weight_slot;  // CSB_MVM only
    std::string label;
};

struct WeightSlot {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

// Nodes are stored in topological order; node ids are positions.
struct CellGraph {
    CellType cell = CellType::gru;
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;
    std::vector<GraphNode> nodes;
    std::vector<WeightSlot> weight_slots;
    std::vector<std::string> bias_slots;
    std::size_t h_out = 0;
    std::optional<std::size_t> c_out;

    bool has_cell_state() const { return c_out.has_value(); }
    std::size_t count(PrimitiveKind kind) const;
    // (producer, consumer) node pairs.
    std::vector<std::pair<std::size_t, std::size_t>> edges() const;
};

CellGraph build_cell_graph(CellType cell, std::size_t input_dim, std::size_t hidden_dim);

// Throws Error on a malformed graph (forward references, missing slots).
void validate(const CellGraph& graph);

struct MacroOptions {
    std::size_t unit_multiplicity = 1;  // sections per unit kind in a word
    BlockShape block_shape{16, 16};     // for the engine's iteration counts
};

struct MacroSection {
    PrimitiveKind unit = PrimitiveKind::csb_mvm;
    std::size_t unit_index = 0;
    bool active = false;
    std::size_t node = 0;
    std::size_t count = 0;    // elements; engine: count_h * count_v
    std::size_t count_h = 0;  // engine only: block iterations across / down
    std::size_t count_v = 0;
    std::string dataflow_idx;              // operand routing, e.g. "x" or "v3,-v7"
    std::size_t buffer_addr = 0;           // result slot
    std::optional<std::string> memory_addr;  // weight or bias handle
};

struct MacroInstruction {
    std::vector<MacroSection> sections;  // kPrimitiveKinds * multiplicity, unit-major
};

struct MacroProgram {
    CellGraph graph;
    MacroOptions options;
    std::vector<MacroInstruction> words;
    std::vector<std::size_t> word_of;              // per node
    std::map<std::string, std::size_t> symbols;    // weight/bias slot -> memory handle
};

// ASAP list scheduling: nodes in topological order go to the earliest word
// after all their producers' words that still has a free section of their
// unit.
MacroProgram compile_macro(const CellGraph& graph, const EngineConfig& cfg,
                           const MacroOptions& options = {});

// One word per line, sections separated by " | ".
std::string to_text(const MacroProgram& program);

struct WeightSet {
    std::map<std::string, CsbMatrix> weights;
    std::map<std::string, Vector> biases;
};

struct RnnState {
    Vector h;
    Vector c;  // empty for GRU
};

struct RnnRun {
    std::vector<Vector> h_sequence;
    RnnState final_state;
};

// Checks that every slot is bound (LinkageError) with matching dims
// (DimensionError).
void check_bindings(const CellGraph& graph, const WeightSet& weights);
RnnState zero_state(const CellGraph& graph);

double sigmoid(double v);

// Applies one non-engine node to already computed operand values.
Vector apply_elementwise(const GraphNode& node, const std::vector<const Vector*>& operands);
// The engine primitive on the logical dims: x is zero-padded to csb.cols and
// the result truncated to `rows`.
Vector apply_mvm(const CsbMatrix& csb, const Vector& x, std::size_t rows);

// Golden model: interprets the macro program word by word.
RnnRun execute_macro(const MacroProgram& program, const WeightSet& weights,
                     const std::vector<Vector>& x_sequence, const RnnState& initial);

// Same interpreter with the engine primitive replaced; `word_done` runs after
// every word of every step. Used by the simulator.
struct MacroHooks {
    std::function<Vector(const MacroSection&, const WeightSlot&, const CsbMatrix&, const Vector& x)> mvm;
    std::function<void(const MacroInstruction&)> word_done;
};
RnnRun execute_macro(const MacroProgram& program, const WeightSet& weights,
                     const std::vector<Vector>& x_sequence, const RnnState& initial,
                     const MacroHooks& hooks);

// Direct recursive evaluation of the graph, independent of any schedule.
RnnRun evaluate_graph(const CellGraph& graph, const WeightSet& weights,
                      const std::vector<Vector>& x_sequence, const RnnState& initial);

}  // namespace csbrnn
