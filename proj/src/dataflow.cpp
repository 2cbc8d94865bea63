#include "csbrnn/dataflow.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "csbrnn/errors.hpp"

namespace csbrnn {

const char* to_string(PrimitiveKind kind) {
    switch (kind) {
        case PrimitiveKind::csb_mvm: return "CSB_MVM";
        case PrimitiveKind::ew_mul: return "EW_MUL";
        case PrimitiveKind::ew_add: return "EW_ADD";
        case PrimitiveKind::sigmoid: return "SIGMOID";
        case PrimitiveKind::tanh: return "TANH";
    }
    return "?";
}

const char* to_string(CellType cell) {
    return cell == CellType::gru ? "gru" : "lstm";
}

CellType parse_cell_type(const std::string& text) {
    std::string lower = text;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "gru") return CellType::gru;
    if (lower == "lstm") return CellType::lstm;
    throw UnsupportedCellError("unsupported RNN cell '" + text + "' (supported: gru, lstm)");
}

std::size_t CellGraph::count(PrimitiveKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [&](const GraphNode& n) { return n.kind == kind; }));
}

std::vector<std::pair<std::size_t, std::size_t>> CellGraph::edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t id = 0; id < nodes.size(); ++id) {
        for (const Operand& op : nodes[id].operands) {
            if (op.source == Operand::Source::node) out.emplace_back(op.index, id);
        }
    }
    return out;
}

namespace {

class GraphBuilder {
public:
    GraphBuilder(CellType cell, std::size_t input_dim, std::size_t hidden_dim) {
        g_.cell = cell;
        g_.input_dim = input_dim;
        g_.hidden_dim = hidden_dim;
    }

    static Operand input(InputSlot s) { return {Operand::Source::input, static_cast<std::size_t>(s), false}; }
    static Operand node(std::size_t id) { return {Operand::Source::node, id, false}; }
    static Operand neg(Operand op) {
        op.negate = !op.negate;
        return op;
    }

    Operand mvm(const std::string& slot, std::size_t cols, Operand v) {
        g_.weight_slots.push_back({slot, g_.hidden_dim, cols});
        GraphNode n{PrimitiveKind::csb_mvm, {v}, g_.weight_slots.size() - 1, slot};
        return push(std::move(n));
    }
    Operand bias(const std::string& name) {
        g_.bias_slots.push_back(name);
        return {Operand::Source::bias, g_.bias_slots.size() - 1, false};
    }
    Operand ones() const { return {Operand::Source::ones, 0, false}; }
    Operand add(Operand a, Operand b, std::string label = {}) {
        return push({PrimitiveKind::ew_add, {a, b}, std::nullopt, std::move(label)});
    }
    Operand mul(Operand a, Operand b, std::string label = {}) {
        return push({PrimitiveKind::ew_mul, {a, b}, std::nullopt, std::move(label)});
    }
    Operand sig(Operand a, std::string label) {
        return push({PrimitiveKind::sigmoid, {a}, std::nullopt, std::move(label)});
    }
    Operand tanh(Operand a, std::string label) {
        return push({PrimitiveKind::tanh, {a}, std::nullopt, std::move(label)});
    }

    // act(W_g x + U_g h + b_g)
    Operand gate(const std::string& g, Operand h_in, PrimitiveKind act) {
        const Operand wx = mvm("W_" + g, g_.input_dim, input(InputSlot::x));
        const Operand uh = mvm("U_" + g, g_.hidden_dim, h_in);
        const Operand pre = add(add(wx, uh), bias("b_" + g), "pre_" + g);
        return act == PrimitiveKind::sigmoid ? sig(pre, g) : tanh(pre, g);
    }

    CellGraph finish(Operand h, std::optional<Operand> c) {
        g_.h_out = h.index;
        if (c) g_.c_out = c->index;
        return std::move(g_);
    }

private:
    Operand push(GraphNode n) {
        g_.nodes.push_back(std::move(n));
        return node(g_.nodes.size() - 1);
    }

    CellGraph g_;
};

}  // namespace

CellGraph build_cell_graph(CellType cell, std::size_t input_dim, std::size_t hidden_dim) {
    if (input_dim == 0 || hidden_dim == 0) throw DimensionError("cell dims must be at least 1");
    GraphBuilder b(cell, input_dim, hidden_dim);
    const Operand h = GraphBuilder::input(InputSlot::h_prev);
    if (cell == CellType::gru) {
        const Operand z = b.gate("z", h, PrimitiveKind::sigmoid);
        const Operand r = b.gate("r", h, PrimitiveKind::sigmoid);
        const Operand rh = b.mul(r, h, "r*h");
        const Operand cand = b.gate("h", rh, PrimitiveKind::tanh);
        const Operand keep = b.add(b.ones(), GraphBuilder::neg(z), "1-z");
        const Operand out = b.add(b.mul(keep, h), b.mul(z, cand), "h_t");
        return b.finish(out, std::nullopt);
    }
    const Operand c = GraphBuilder::input(InputSlot::c_prev);
    const Operand i = b.gate("i", h, PrimitiveKind::sigmoid);
    const Operand f = b.gate("f", h, PrimitiveKind::sigmoid);
    const Operand o = b.gate("o", h, PrimitiveKind::sigmoid);
    const Operand g = b.gate("g", h, PrimitiveKind::tanh);
    const Operand c_next = b.add(b.mul(f, c), b.mul(i, g), "c_t");
    const Operand h_next = b.mul(o, b.tanh(c_next, "tanh(c_t)"), "h_t");
    return b.finish(h_next, c_next);
}

void validate(const CellGraph& graph) {
    if (graph.h_out >= graph.nodes.size()) throw Error("graph output h_t is not a node");
    if (graph.c_out && *graph.c_out >= graph.nodes.size()) throw Error("graph output c_t is not a node");
    for (std::size_t id = 0; id < graph.nodes.size(); ++id) {
        const GraphNode& n = graph.nodes[id];
        const std::size_t want = (n.kind == PrimitiveKind::sigmoid || n.kind == PrimitiveKind::tanh ||
                                  n.kind == PrimitiveKind::csb_mvm)
                                     ? 1
                                     : 2;
        if (n.operands.size() != want) throw Error("node " + std::to_string(id) + ": wrong operand count");
        if ((n.kind == PrimitiveKind::csb_mvm) != n.weight_slot.has_value()) {
            throw Error("node " + std::to_string(id) + ": weight slot on a non-MVM node or missing");
        }
        if (n.weight_slot && *n.weight_slot >= graph.weight_slots.size()) {
            throw Error("node " + std::to_string(id) + ": unknown weight slot");
        }
        for (const Operand& op : n.operands) {
            switch (op.source) {
                case Operand::Source::node:
                    if (op.index >= id) throw Error("node " + std::to_string(id) + ": forward reference");
                    break;
                case Operand::Source::input:
                    if (op.index == static_cast<std::size_t>(InputSlot::c_prev) && !graph.has_cell_state()) {
                        throw Error("node " + std::to_string(id) + ": c_prev in a cell without state");
                    }
                    break;
                case Operand::Source::bias:
                    if (op.index >= graph.bias_slots.size()) throw Error("unknown bias slot");
                    break;
                case Operand::Source::ones: break;
            }
        }
    }
}

namespace {

std::string operand_name(const CellGraph& g, const Operand& op) {
    std::string s = op.negate ? "-" : "";
    switch (op.source) {
        case Operand::Source::node: return s + "v" + std::to_string(op.index);
        case Operand::Source::input: {
            static const char* names[] = {"x", "h", "c"};
            return s + names[op.index];
        }
        case Operand::Source::bias: return s + g.bias_slots[op.index];
        case Operand::Source::ones: return s + "1";
    }
    return s;
}

}  // namespace

MacroProgram compile_macro(const CellGraph& graph, const EngineConfig& cfg, const MacroOptions& options) {
    validate(graph);
    validate(cfg);
    validate(options.block_shape);
    if (options.unit_multiplicity == 0) throw ConfigError("unit multiplicity must be at least 1");
    const std::size_t mult = options.unit_multiplicity;

    MacroProgram prog;
    prog.graph = graph;
    prog.options = options;
    for (const auto& w : graph.weight_slots) prog.symbols.emplace(w.name, prog.symbols.size());
    for (const auto& b : graph.bias_slots) prog.symbols.emplace(b, prog.symbols.size());

    prog.word_of.assign(graph.nodes.size(), 0);
    std::vector<std::vector<std::size_t>> used;  // per word, per unit kind
    for (std::size_t id = 0; id < graph.nodes.size(); ++id) {
        const GraphNode& n = graph.nodes[id];
        std::size_t earliest = 0;
        for (const Operand& op : n.operands) {
            if (op.source == Operand::Source::node) earliest = std::max(earliest, prog.word_of[op.index] + 1);
        }
        const auto kind = static_cast<std::size_t>(n.kind);
        std::size_t w = earliest;
        while (w < used.size() && used[w][kind] >= mult) ++w;
        if (w >= used.size()) {
            used.resize(w + 1, std::vector<std::size_t>(kPrimitiveKinds, 0));
            prog.words.resize(w + 1);
        }
        MacroInstruction& word = prog.words[w];
        if (word.sections.empty()) {
            for (std::size_t k = 0; k < kPrimitiveKinds; ++k) {
                for (std::size_t u = 0; u < mult; ++u) {
                    MacroSection s;
                    s.unit = static_cast<PrimitiveKind>(k);
                    s.unit_index = u;
                    word.sections.push_back(s);
                }
            }
        }
        MacroSection& s = word.sections[kind * mult + used[w][kind]];
        ++used[w][kind];
        prog.word_of[id] = w;

        s.active = true;
        s.node = id;
        s.buffer_addr = id;
        for (std::size_t o = 0; o < n.operands.size(); ++o) {
            if (o) s.dataflow_idx += ',';
            s.dataflow_idx += operand_name(graph, n.operands[o]);
            if (n.operands[o].source == Operand::Source::bias) {
                s.memory_addr = graph.bias_slots[n.operands[o].index];
            }
        }
        if (n.kind == PrimitiveKind::csb_mvm) {
            const WeightSlot& slot = graph.weight_slots[*n.weight_slot];
            s.memory_addr = slot.name;
            s.count_h = ceil_div(ceil_div(slot.cols, options.block_shape.block_cols), cfg.grid_cols);
            s.count_v = ceil_div(ceil_div(slot.rows, options.block_shape.block_rows), cfg.grid_rows);
            s.count = s.count_h * s.count_v;
        } else {
            s.count = graph.hidden_dim;
        }
    }
    return prog;
}

std::string to_text(const MacroProgram& program) {
    std::ostringstream os;
    for (std::size_t w = 0; w < program.words.size(); ++w) {
        os << 'w' << w;
        for (const MacroSection& s : program.words[w].sections) {
            os << " | " << to_string(s.unit);
            if (program.options.unit_multiplicity > 1) os << '#' << s.unit_index;
            if (!s.active) {
                os << " -";
                continue;
            }
            if (s.unit == PrimitiveKind::csb_mvm) {
                os << " count=" << s.count_h << 'x' << s.count_v;
            } else {
                os << " count=" << s.count;
            }
            os << " in=" << s.dataflow_idx << " out=v" << s.buffer_addr;
            if (s.memory_addr) os << " mem=" << *s.memory_addr;
        }
        os << '\n';
    }
    return os.str();
}

void check_bindings(const CellGraph& graph, const WeightSet& weights) {
    for (const WeightSlot& slot : graph.weight_slots) {
        const auto it = weights.weights.find(slot.name);
        if (it == weights.weights.end()) throw LinkageError("weight slot '" + slot.name + "' is not bound");
        const CsbMatrix& m = it->second;
        const BlockShape& s = m.block_shape;
        if (m.rows != round_up(slot.rows, s.block_rows) || m.cols != round_up(slot.cols, s.block_cols)) {
            throw DimensionError("weight '" + slot.name + "' is " + std::to_string(m.rows) + "x" +
                                 std::to_string(m.cols) + " (padded), slot needs " +
                                 std::to_string(slot.rows) + "x" + std::to_string(slot.cols));
        }
    }
    for (const std::string& name : graph.bias_slots) {
        const auto it = weights.biases.find(name);
        if (it == weights.biases.end()) throw LinkageError("bias slot '" + name + "' is not bound");
        if (it->second.size() != graph.hidden_dim) {
            throw DimensionError("bias '" + name + "' has length " + std::to_string(it->second.size()));
        }
    }
}

RnnState zero_state(const CellGraph& graph) {
    RnnState s;
    s.h.assign(graph.hidden_dim, 0.0);
    if (graph.has_cell_state()) s.c.assign(graph.hidden_dim, 0.0);
    return s;
}

double sigmoid(double v) {
    return 1.0 / (1.0 + std::exp(-v));
}

Vector apply_elementwise(const GraphNode& node, const std::vector<const Vector*>& operands) {
    const Vector& a = *operands.at(0);
    Vector out(a.size());
    switch (node.kind) {
        case PrimitiveKind::ew_add: {
            const Vector& b = *operands.at(1);
            for (std::size_t k = 0; k < out.size(); ++k) out[k] = a[k] + b[k];
            break;
        }
        case PrimitiveKind::ew_mul: {
            const Vector& b = *operands.at(1);
            for (std::size_t k = 0; k < out.size(); ++k) out[k] = a[k] * b[k];
            break;
        }
        case PrimitiveKind::sigmoid:
            for (std::size_t k = 0; k < out.size(); ++k) out[k] = sigmoid(a[k]);
            break;
        case PrimitiveKind::tanh:
            for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::tanh(a[k]);
            break;
        case PrimitiveKind::csb_mvm: throw Error("apply_elementwise called on an MVM node");
    }
    return out;
}

Vector apply_mvm(const CsbMatrix& csb, const Vector& x, std::size_t rows) {
    if (x.size() > csb.cols || rows > csb.rows) throw DimensionError("apply_mvm: operand larger than the matrix");
    Vector padded(csb.cols, 0.0);
    std::copy(x.begin(), x.end(), padded.begin());
    Vector y = csb_mvm(csb, padded);
    y.resize(rows);
    return y;
}

namespace {

// Operand values for one time step; negated operands are materialised.
class StepContext {
public:
    StepContext(const CellGraph& g, const WeightSet& w, const Vector& x, const RnnState& s)
        : graph_(g), weights_(w), x_(x), state_(s), values_(g.nodes.size()), ones_(g.hidden_dim, 1.0) {}

    const Vector& operand(const Operand& op, Vector& scratch) const {
        const Vector* v = nullptr;
        switch (op.source) {
            case Operand::Source::node: v = &values_[op.index]; break;
            case Operand::Source::input: {
                const auto slot = static_cast<InputSlot>(op.index);
                v = slot == InputSlot::x ? &x_ : slot == InputSlot::h_prev ? &state_.h : &state_.c;
                break;
            }
            case Operand::Source::bias: v = &weights_.biases.at(graph_.bias_slots[op.index]); break;
            case Operand::Source::ones: v = &ones_; break;
        }
        if (!op.negate) return *v;
        scratch.resize(v->size());
        for (std::size_t k = 0; k < v->size(); ++k) scratch[k] = -(*v)[k];
        return scratch;
    }

    // Evaluates node `id` from operands that are already available.
    void compute(std::size_t id, const MacroSection* section = nullptr, const MacroHooks* hooks = nullptr) {
        values_[id] = evaluate(id, section, hooks);
    }

    Vector evaluate(std::size_t id, const MacroSection* section, const MacroHooks* hooks) const {
        const GraphNode& n = graph_.nodes[id];
        std::vector<Vector> scratch(n.operands.size());
        std::vector<const Vector*> ops;
        for (std::size_t o = 0; o < n.operands.size(); ++o) ops.push_back(&operand(n.operands[o], scratch[o]));
        if (n.kind == PrimitiveKind::csb_mvm) {
            const WeightSlot& slot = graph_.weight_slots[*n.weight_slot];
            const CsbMatrix& w = weights_.weights.at(slot.name);
            if (hooks && hooks->mvm) return hooks->mvm(*section, slot, w, *ops[0]);
            return apply_mvm(w, *ops[0], slot.rows);
        }
        return apply_elementwise(n, ops);
    }

    std::vector<Vector>& values() { return values_; }

private:
    const CellGraph& graph_;
    const WeightSet& weights_;
    const Vector& x_;
    const RnnState& state_;
    std::vector<Vector> values_;
    Vector ones_;
};

void check_run_inputs(const CellGraph& g, const WeightSet& weights, const std::vector<Vector>& xs,
                      const RnnState& initial) {
    check_bindings(g, weights);
    if (initial.h.size() != g.hidden_dim) throw DimensionError("initial h has the wrong length");
    if (g.has_cell_state() && initial.c.size() != g.hidden_dim) {
        throw DimensionError("initial c has the wrong length");
    }
    for (std::size_t t = 0; t < xs.size(); ++t) {
        if (xs[t].size() != g.input_dim) {
            throw DimensionError("x[" + std::to_string(t) + "] has length " + std::to_string(xs[t].size()) +
                                 ", cell expects " + std::to_string(g.input_dim));
        }
    }
}

RnnState next_state(const CellGraph& g, const std::vector<Vector>& values) {
    RnnState s;
    s.h = values[g.h_out];
    if (g.c_out) s.c = values[*g.c_out];
    return s;
}

}  // namespace

RnnRun execute_macro(const MacroProgram& program, const WeightSet& weights,
                     const std::vector<Vector>& x_sequence, const RnnState& initial) {
    return execute_macro(program, weights, x_sequence, initial, MacroHooks{});
}

RnnRun execute_macro(const MacroProgram& program, const WeightSet& weights,
                     const std::vector<Vector>& x_sequence, const RnnState& initial,
                     const MacroHooks& hooks) {
    const CellGraph& g = program.graph;
    check_run_inputs(g, weights, x_sequence, initial);
    RnnRun run;
    RnnState state = initial;
    for (const Vector& x : x_sequence) {
        StepContext ctx(g, weights, x, state);
        for (const MacroInstruction& word : program.words) {
            // Sections of one word read only values from earlier words.
            for (const MacroSection& s : word.sections) {
                if (s.active) ctx.compute(s.node, &s, &hooks);
            }
            if (hooks.word_done) hooks.word_done(word);
        }
        state = next_state(g, ctx.values());
        run.h_sequence.push_back(state.h);
    }
    run.final_state = state;
    return run;
}

RnnRun evaluate_graph(const CellGraph& graph, const WeightSet& weights,
                      const std::vector<Vector>& x_sequence, const RnnState& initial) {
    validate(graph);
    check_run_inputs(graph, weights, x_sequence, initial);
    RnnRun run;
    RnnState state = initial;
    for (const Vector& x : x_sequence) {
        StepContext ctx(graph, weights, x, state);
        std::vector<char> done(graph.nodes.size(), 0);
        std::function<void(std::size_t)> eval = [&](std::size_t id) {
            if (done[id]) return;
            for (const Operand& op : graph.nodes[id].operands) {
                if (op.source == Operand::Source::node) eval(op.index);
            }
            ctx.compute(id);
            done[id] = 1;
        };
        eval(graph.h_out);
        if (graph.c_out) eval(*graph.c_out);
        state = next_state(graph, ctx.values());
        run.h_sequence.push_back(state.h);
    }
    run.final_state = state;
    return run;
}

}  // namespace csbrnn
