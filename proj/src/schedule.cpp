#include "csbrnn/schedule.hpp"

#include <algorithm>
#include <array>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <utility>

#include "csbrnn/errors.hpp"

namespace csbrnn {

const char* to_string(SharingMode mode) {
    switch (mode) {
        case SharingMode::none: return "none";
        case SharingMode::vertical: return "vertical";
        case SharingMode::horizontal: return "horizontal";
        case SharingMode::two_d: return "two_d";
    }
    return "?";
}

SharingMode parse_sharing_mode(const std::string& text) {
    if (text == "none") return SharingMode::none;
    if (text == "vertical") return SharingMode::vertical;
    if (text == "horizontal") return SharingMode::horizontal;
    if (text == "two_d" || text == "2d") return SharingMode::two_d;
    throw ConfigError("unknown sharing mode '" + text + "' (none|vertical|horizontal|two_d)");
}

const char* to_string(BalanceBound bound) {
    return bound == BalanceBound::upper ? "upper" : "two_sided";
}

BalanceBound parse_balance_bound(const std::string& text) {
    if (text == "upper") return BalanceBound::upper;
    if (text == "two_sided") return BalanceBound::two_sided;
    throw ConfigError("unknown balance bound '" + text + "' (upper|two_sided)");
}

const char* to_string(Sharing sharing) {
    switch (sharing) {
        case Sharing::local: return "local";
        case Sharing::horizontal: return "horiz";
        case Sharing::vertical: return "vert";
    }
    return "?";
}

std::size_t EngineConfig::left_of(std::size_t g) const {
    const std::size_t k = g / grid_cols, l = g % grid_cols;
    return k * grid_cols + (l + grid_cols - 1) % grid_cols;
}

std::size_t EngineConfig::right_of(std::size_t g) const {
    const std::size_t k = g / grid_cols, l = g % grid_cols;
    return k * grid_cols + (l + 1) % grid_cols;
}

std::size_t EngineConfig::up_of(std::size_t g) const {
    const std::size_t k = g / grid_cols, l = g % grid_cols;
    return ((k + grid_rows - 1) % grid_rows) * grid_cols + l;
}

std::size_t EngineConfig::down_of(std::size_t g) const {
    const std::size_t k = g / grid_cols, l = g % grid_cols;
    return ((k + 1) % grid_rows) * grid_cols + l;
}

void validate(const EngineConfig& cfg) {
    if (cfg.grid_rows == 0 || cfg.grid_cols == 0 || cfg.pe_rows == 0 || cfg.pe_cols == 0) {
        throw ConfigError("engine grid and PE array dimensions must be at least 1");
    }
}

std::size_t iteration_rows(const CsbMatrix& csb, const EngineConfig& cfg) {
    return ceil_div(csb.block_grid_rows(), cfg.grid_rows);
}

std::size_t iteration_cols(const CsbMatrix& csb, const EngineConfig& cfg) {
    return ceil_div(csb.block_grid_cols(), cfg.grid_cols);
}

KernelWindow analyze_iteration(const CsbMatrix& csb, const EngineConfig& cfg, std::size_t i,
                               std::size_t j) {
    validate(cfg);
    if (i >= iteration_rows(csb, cfg) || j >= iteration_cols(csb, cfg)) {
        throw IndexError("iteration (" + std::to_string(i) + "," + std::to_string(j) +
                         ") outside the " + std::to_string(iteration_rows(csb, cfg)) + "x" +
                         std::to_string(iteration_cols(csb, cfg)) + " iteration grid");
    }
    KernelWindow w;
    w.iter_row = i;
    w.iter_col = j;
    w.grid_rows = cfg.grid_rows;
    w.grid_cols = cfg.grid_cols;
    w.kernels.resize(cfg.group_count());
    w.blocks.resize(cfg.group_count());
    const std::size_t gr = csb.block_grid_rows();
    const std::size_t gc = csb.block_grid_cols();
    for (std::size_t k = 0; k < cfg.grid_rows; ++k) {
        for (std::size_t l = 0; l < cfg.grid_cols; ++l) {
            const std::size_t br = i * cfg.grid_rows + k;
            const std::size_t bc = j * cfg.grid_cols + l;
            if (br >= gr || bc >= gc) continue;
            const std::size_t g = k * cfg.grid_cols + l;
            const std::size_t b = br * gc + bc;
            w.blocks[g] = b;
            w.kernels[g] = {csb.kernel_rows[b], csb.kernel_cols[b]};
            w.total_load += w.kernels[g].load();
        }
    }
    return w;
}

GroupPartition GroupPartition::make(SplitBranch branch, std::size_t m, std::size_t n,
                                    std::size_t dn_h, std::size_t dm_v) {
    GroupPartition p;
    p.branch = branch;
    p.m = m;
    p.n = n;
    p.dn_h = dn_h;
    p.dm_v = dm_v;
    p.m_local = m - dm_v;
    p.n_local = n - dn_h;
    if (branch == SplitBranch::full_rows) {
        p.dm_h = m;
        p.dn_v = n - dn_h;
    } else {
        p.dn_v = n;
        p.dm_h = m - dm_v;
    }
    return p;
}

std::vector<std::uint64_t> group_loads(const PartitionVars& vars, const EngineConfig& cfg) {
    const std::size_t G = vars.groups.size();
    std::vector<std::uint64_t> loads(G, 0);
    for (std::size_t g = 0; g < G; ++g) {
        loads[g] += vars.groups[g].local_load();
        const std::size_t right = cfg.right_of(g);
        const std::size_t down = cfg.down_of(g);
        // A share sent to oneself is still executed by oneself.
        loads[right] += vars.groups[g].horizontal_load();
        loads[down] += vars.groups[g].vertical_load();
    }
    return loads;
}

namespace {

using i64 = std::int64_t;

struct LoadBounds {
    i64 lo = 0;
    i64 hi = 0;
};

// Integer loads x with G*x - total <= G*margin (and, two-sided, the mirror
// bound below the average).
LoadBounds load_bounds(std::uint64_t total, std::size_t groups, std::uint64_t margin, BalanceBound balance) {
    const i64 G = static_cast<i64>(groups);
    const i64 T = static_cast<i64>(total);
    const i64 M = static_cast<i64>(margin);
    const i64 low_num = T - G * M;
    LoadBounds b;
    b.lo = balance == BalanceBound::upper || low_num <= 0 ? 0 : (low_num + G - 1) / G;
    b.hi = (T + G * M) / G;
    return b;
}

struct Candidate {
    SplitBranch branch;
    std::size_t dn_h;
    std::size_t dm_v;
};

// Cut positions are multiples of the PE array size; the other dimension of
// each share follows from the branch. Order: full_rows first, then by
// (dn_h, dm_v). full_cols splits without a corner are identical to a
// full_rows split and are skipped.
std::vector<Candidate> enumerate_candidates(const KernelDims& k, const EngineConfig& cfg) {
    std::vector<std::size_t> dn_h_values{0}, dm_v_values{0};
    if (k.load() > 0) {
        if (cfg.horizontal_enabled()) {
            for (std::size_t v = cfg.pe_cols; v <= k.cols; v += cfg.pe_cols) dn_h_values.push_back(v);
        }
        if (cfg.vertical_enabled()) {
            for (std::size_t v = cfg.pe_rows; v <= k.rows / 2; v += cfg.pe_rows) dm_v_values.push_back(v);
        }
    }
    std::vector<Candidate> out;
    for (auto branch : {SplitBranch::full_rows, SplitBranch::full_cols}) {
        for (std::size_t dn_h : dn_h_values) {
            for (std::size_t dm_v : dm_v_values) {
                if (branch == SplitBranch::full_cols && (dn_h == 0 || dm_v == 0)) continue;
                out.push_back({branch, dn_h, dm_v});
            }
        }
    }
    return out;
}

// Dinic max-flow on a tiny graph; used for the transportation relaxation.
class MaxFlow {
public:
    explicit MaxFlow(std::size_t n) : adj_(n), level_(n), it_(n) {}

    void add_edge(std::size_t from, std::size_t to, i64 cap) {
        if (cap <= 0) return;
        adj_[from].push_back(edges_.size());
        edges_.push_back({to, cap});
        adj_[to].push_back(edges_.size());
        edges_.push_back({from, 0});
    }

    i64 run(std::size_t s, std::size_t t) {
        i64 total = 0;
        while (bfs(s, t)) {
            std::fill(it_.begin(), it_.end(), 0);
            while (i64 f = dfs(s, t, std::numeric_limits<i64>::max())) total += f;
        }
        return total;
    }

private:
    struct Edge {
        std::size_t to;
        i64 cap;
    };

    bool bfs(std::size_t s, std::size_t t) {
        std::fill(level_.begin(), level_.end(), -1);
        std::deque<std::size_t> q{s};
        level_[s] = 0;
        while (!q.empty()) {
            const std::size_t u = q.front();
            q.pop_front();
            for (std::size_t e : adj_[u]) {
                if (edges_[e].cap > 0 && level_[edges_[e].to] < 0) {
                    level_[edges_[e].to] = level_[u] + 1;
                    q.push_back(edges_[e].to);
                }
            }
        }
        return level_[t] >= 0;
    }

    i64 dfs(std::size_t u, std::size_t t, i64 f) {
        if (u == t) return f;
        for (std::size_t& k = it_[u]; k < adj_[u].size(); ++k) {
            Edge& e = edges_[adj_[u][k]];
            if (e.cap > 0 && level_[e.to] == level_[u] + 1) {
                if (i64 got = dfs(e.to, t, std::min(f, e.cap))) {
                    e.cap -= got;
                    edges_[adj_[u][k] ^ 1].cap += got;
                    return got;
                }
            }
        }
        return 0;
    }

    std::vector<Edge> edges_;
    std::vector<std::vector<std::size_t>> adj_;
    std::vector<int> level_;
    std::vector<std::size_t> it_;
};

// Candidates with equal (horizontal, vertical) loads are interchangeable for
// the balance constraints; the search runs over these classes and reports the
// first member of the chosen class.
struct LoadClass {
    std::array<i64, 3> load{};  // local, horizontal, vertical
    std::size_t representative = 0;
};

enum Component { kLocal = 0, kHoriz = 1, kVert = 2 };

class PartitionSearch {
public:
    PartitionSearch(const KernelWindow& window, const EngineConfig& cfg, std::uint64_t margin,
                    const SolverOptions& options)
        : window_(window), cfg_(cfg), options_(options),
          bounds_(load_bounds(window.total_load, window.group_count(), margin, options.balance)) {
        const std::size_t G = window.group_count();
        vars_.resize(G);
        for (std::size_t g = 0; g < G; ++g) {
            Var& v = vars_[g];
            v.candidates = enumerate_candidates(window.kernels[g], cfg);
            std::map<std::pair<i64, i64>, std::size_t> seen;
            for (std::size_t c = 0; c < v.candidates.size(); ++c) {
                const auto& cand = v.candidates[c];
                const auto p = GroupPartition::make(cand.branch, window.kernels[g].rows,
                                                    window.kernels[g].cols, cand.dn_h, cand.dm_v);
                const std::pair<i64, i64> key{i64(p.horizontal_load()), i64(p.vertical_load())};
                if (seen.emplace(key, v.classes.size()).second) {
                    v.classes.push_back({{i64(p.local_load()), key.first, key.second}, c});
                }
            }
            const auto n = static_cast<std::uint32_t>(v.classes.size());
            v.alive.assign(n, 1);
            v.alive_count = n;
            for (int k = 0; k < 3; ++k) {
                v.order[k].resize(n);
                std::iota(v.order[k].begin(), v.order[k].end(), 0u);
                std::stable_sort(v.order[k].begin(), v.order[k].end(), [&](std::uint32_t a, std::uint32_t b) {
                    return v.classes[a].load[k] < v.classes[b].load[k];
                });
                v.lo[k] = 0;
                v.hi[k] = n;
            }
        }
    }

    SolveResult run() {
        SolveResult result;
        std::deque<std::size_t> queue;
        for (std::size_t g = 0; g < vars_.size(); ++g) queue.push_back(g);
        const bool ok = propagate(queue) && relaxation_feasible() && dfs(0);
        result.nodes = nodes_;
        result.budget_exhausted = exhausted_;
        result.satisfiable = ok;
        if (ok) {
            for (std::size_t g = 0; g < vars_.size(); ++g) {
                const Var& v = vars_[g];
                const auto& cand = v.candidates[v.classes[chosen(g)].representative];
                result.vars.groups.push_back(GroupPartition::make(
                    cand.branch, window_.kernels[g].rows, window_.kernels[g].cols, cand.dn_h, cand.dm_v));
            }
        }
        return result;
    }

private:
    // Each component has a static ascending order of the classes and a live
    // window [lo, hi) into it; entries outside the window are dead. Windows
    // shrink lazily and every change is trailed.
    struct Var {
        std::vector<Candidate> candidates;
        std::vector<LoadClass> classes;
        std::vector<char> alive;
        std::size_t alive_count = 0;
        std::array<std::vector<std::uint32_t>, 3> order;
        std::array<std::uint32_t, 3> lo{}, hi{};
    };

    struct TrailEntry {
        std::uint32_t group;
        std::int32_t kind;  // -1: class removal, else 2 * component + (0 lo, 1 hi)
        std::uint32_t value;
    };

    std::size_t chosen(std::size_t g) const {
        const Var& v = vars_[g];
        for (std::size_t c = 0; c < v.classes.size(); ++c) {
            if (v.alive[c]) return c;
        }
        return 0;
    }

    void remove(std::size_t g, std::uint32_t c) {
        vars_[g].alive[c] = 0;
        --vars_[g].alive_count;
        trail_.push_back({static_cast<std::uint32_t>(g), -1, c});
    }

    void trail_window(std::size_t g, int k, int side, std::uint32_t old) {
        trail_.push_back({static_cast<std::uint32_t>(g), 2 * k + side, old});
    }

    void undo(std::size_t mark) {
        while (trail_.size() > mark) {
            const TrailEntry e = trail_.back();
            trail_.pop_back();
            Var& v = vars_[e.group];
            if (e.kind < 0) {
                v.alive[e.value] = 1;
                ++v.alive_count;
            } else if (e.kind % 2 == 0) {
                v.lo[e.kind / 2] = e.value;
            } else {
                v.hi[e.kind / 2] = e.value;
            }
        }
    }

    // Removes live classes whose component k lies outside [a, b] and skips
    // dead ones at both ends of the window.
    void shrink(std::size_t g, int k, i64 a, i64 b) {
        Var& v = vars_[g];
        const auto& order = v.order[k];
        const std::uint32_t old_lo = v.lo[k], old_hi = v.hi[k];
        std::uint32_t lo = old_lo, hi = old_hi;
        while (lo < hi) {
            const std::uint32_t c = order[lo];
            if (v.alive[c] && v.classes[c].load[k] >= a) break;
            if (v.alive[c]) remove(g, c);
            ++lo;
        }
        while (lo < hi) {
            const std::uint32_t c = order[hi - 1];
            if (v.alive[c] && v.classes[c].load[k] <= b) break;
            if (v.alive[c]) remove(g, c);
            --hi;
        }
        if (lo != old_lo) {
            trail_window(g, k, 0, old_lo);
            v.lo[k] = lo;
        }
        if (hi != old_hi) {
            trail_window(g, k, 1, old_hi);
            v.hi[k] = hi;
        }
    }

    i64 min_of(std::size_t g, int k) {
        shrink(g, k, std::numeric_limits<i64>::min(), std::numeric_limits<i64>::max());
        const Var& v = vars_[g];
        return v.classes[v.order[k][v.lo[k]]].load[k];
    }

    i64 max_of(std::size_t g, int k) {
        shrink(g, k, std::numeric_limits<i64>::min(), std::numeric_limits<i64>::max());
        const Var& v = vars_[g];
        return v.classes[v.order[k][v.hi[k] - 1]].load[k];
    }

    // Filters component k of group g to [a, b]; false on a wipe-out.
    bool filter(std::size_t g, int k, i64 a, i64 b, bool& changed) {
        const std::size_t before = vars_[g].alive_count;
        shrink(g, k, a, b);
        changed = vars_[g].alive_count != before;
        return vars_[g].alive_count > 0;
    }

    void enqueue_dependents(std::size_t g, std::deque<std::size_t>& queue) const {
        queue.push_back(g);
        if (cfg_.horizontal_enabled()) queue.push_back(cfg_.right_of(g));
        if (cfg_.vertical_enabled()) queue.push_back(cfg_.down_of(g));
    }

    // Constraint owned by group g: lo <= L(g) + H(left g) + V(up g) <= hi.
    bool revise(std::size_t owner, std::deque<std::size_t>& queue) {
        const i64 lo = bounds_.lo, hi = bounds_.hi;
        const bool use_left = cfg_.horizontal_enabled();
        const bool use_up = cfg_.vertical_enabled();
        const std::size_t left = cfg_.left_of(owner);
        const std::size_t up = cfg_.up_of(owner);

        auto hmin = [&] { return use_left ? min_of(left, kHoriz) : i64{0}; };
        auto hmax = [&] { return use_left ? max_of(left, kHoriz) : i64{0}; };
        auto vmin = [&] { return use_up ? min_of(up, kVert) : i64{0}; };
        auto vmax = [&] { return use_up ? max_of(up, kVert) : i64{0}; };

        bool changed = false;
        if (!filter(owner, kLocal, lo - hmax() - vmax(), hi - hmin() - vmin(), changed)) return false;
        if (changed) enqueue_dependents(owner, queue);
        if (use_left) {
            const i64 a = lo - max_of(owner, kLocal) - vmax(), b = hi - min_of(owner, kLocal) - vmin();
            if (!filter(left, kHoriz, a, b, changed)) return false;
            if (changed) enqueue_dependents(left, queue);
        }
        if (use_up) {
            const i64 a = lo - max_of(owner, kLocal) - hmax(), b = hi - min_of(owner, kLocal) - hmin();
            if (!filter(up, kVert, a, b, changed)) return false;
            if (changed) enqueue_dependents(up, queue);
        }
        return true;
    }

    bool propagate(std::deque<std::size_t>& queue) {
        std::vector<char> queued(vars_.size(), 0);
        std::deque<std::size_t> work;
        for (auto g : queue) {
            if (!queued[g]) {
                queued[g] = 1;
                work.push_back(g);
            }
        }
        queue.clear();
        std::deque<std::size_t> next;
        while (!work.empty()) {
            const std::size_t owner = work.front();
            work.pop_front();
            queued[owner] = 0;
            next.clear();
            if (!revise(owner, next)) return false;
            for (auto g : next) {
                if (!queued[g]) {
                    queued[g] = 1;
                    work.push_back(g);
                }
            }
        }
        return true;
    }

    // Each group ships its kernel to itself, its right and its lower
    // neighbour; receivers hold at most the upper load bound. Dropping the
    // discrete split shapes leaves a transportation problem whose max flow
    // must move every remaining MAC.
    bool relaxation_feasible() {
        const std::size_t G = vars_.size();
        const bool use_h = cfg_.horizontal_enabled(), use_v = cfg_.vertical_enabled();
        const std::size_t src = 2 * G, sink = 2 * G + 1;
        MaxFlow flow(2 * G + 2);
        std::vector<i64> base(G, 0);
        std::vector<std::array<i64, 6>> range(G);
        for (std::size_t g = 0; g < G; ++g) {
            for (int k = 0; k < 3; ++k) {
                range[g][2 * k] = min_of(g, k);
                range[g][2 * k + 1] = max_of(g, k);
            }
            base[g] += range[g][0];
            if (use_h) base[cfg_.right_of(g)] += range[g][2];
            if (use_v) base[cfg_.down_of(g)] += range[g][4];
        }
        i64 supply = 0;
        for (std::size_t g = 0; g < G; ++g) {
            const auto& r = range[g];
            const i64 rest = i64(window_.kernels[g].load()) - r[0] - r[2] - r[4];
            supply += rest;
            flow.add_edge(src, g, rest);
            flow.add_edge(g, G + g, r[1] - r[0]);
            if (use_h) flow.add_edge(g, G + cfg_.right_of(g), r[3] - r[2]);
            if (use_v) flow.add_edge(g, G + cfg_.down_of(g), r[5] - r[4]);
            if (base[g] > bounds_.hi) return false;
            flow.add_edge(G + g, sink, bounds_.hi - base[g]);
        }
        return flow.run(src, sink) == supply;
    }

    bool propagate_from(std::size_t g) {
        std::deque<std::size_t> queue;
        enqueue_dependents(g, queue);
        return propagate(queue);
    }

    bool dfs(std::size_t g) {
        if (g == vars_.size()) return true;
        const std::size_t level_mark = trail_.size();
        Var& v = vars_[g];
        const auto n = static_cast<std::uint32_t>(v.classes.size());
        for (std::uint32_t c = 0; c < n; ++c) {
            if (!v.alive[c]) continue;
            if (++nodes_ > options_.max_nodes) {
                exhausted_ = true;
                undo(level_mark);
                return false;
            }
            const std::size_t mark = trail_.size();
            for (std::uint32_t other = 0; other < n; ++other) {
                if (other != c && v.alive[other]) remove(g, other);
            }
            if (propagate_from(g) && relaxation_feasible() && dfs(g + 1)) return true;
            undo(mark);
            if (exhausted_) {
                undo(level_mark);
                return false;
            }
            // c has no completion; dropping it may prune the remaining values.
            remove(g, c);
            if (v.alive_count == 0 || !propagate_from(g)) break;
        }
        undo(level_mark);
        return false;
    }

    const KernelWindow& window_;
    const EngineConfig& cfg_;
    SolverOptions options_;
    LoadBounds bounds_;
    std::vector<Var> vars_;
    std::vector<TrailEntry> trail_;
    std::size_t nodes_ = 0;
    bool exhausted_ = false;
};

}  // namespace

SolveResult solve_partition(const KernelWindow& window, const EngineConfig& cfg,
                            std::uint64_t margin, const SolverOptions& options) {
    validate(cfg);
    if (window.group_count() != cfg.group_count()) {
        throw DimensionError("kernel window does not match the engine grid");
    }
    return PartitionSearch(window, cfg, margin, options).run();
}

std::optional<std::string> check_partition(const KernelWindow& window, const EngineConfig& cfg,
                                           const PartitionVars& vars, std::uint64_t margin,
                                           BalanceBound balance) {
    const std::size_t G = cfg.group_count();
    if (vars.groups.size() != G || window.kernels.size() != G) {
        return "expected " + std::to_string(G) + " groups";
    }
    for (std::size_t g = 0; g < G; ++g) {
        const GroupPartition& p = vars.groups[g];
        const std::size_t m = window.kernels[g].rows, n = window.kernels[g].cols;
        const std::string at = "group " + std::to_string(g) + ": ";
        if (p.m != m || p.n != n) return at + "kernel dims differ from the window";
        if (p.dm_h > m || p.dn_h > n) return at + "CLP1 violated";
        if (p.dm_v > m / 2 || p.dn_v > n) return at + "CLP2 violated";
        const bool full_rows = p.dm_h == m && p.dn_v + p.dn_h == n;
        const bool full_cols = p.dn_v == n && p.dm_h + p.dm_v == m;
        if (!full_rows && !full_cols) return at + "neither CLP3 nor CLP4 holds";
        if (p.m_local != m - p.dm_v || p.n_local != n - p.dn_h) return at + "CLP5 violated";
        if (p.dm_v % cfg.pe_rows != 0 || p.dn_h % cfg.pe_cols != 0) return at + "CLP6 violated";
        if (p.local_load() + p.horizontal_load() + p.vertical_load() != std::uint64_t(m) * n) {
            return at + "split does not tile the kernel";
        }
        if (!cfg.horizontal_enabled() && p.horizontal_load() != 0) {
            return at + "horizontal share without a horizontal path";
        }
        if (!cfg.vertical_enabled() && p.vertical_load() != 0) {
            return at + "vertical share without a vertical path";
        }
    }
    // CLP7 in exact integer arithmetic: G * load - total <= G * margin, and
    // total - G * load <= G * margin when two-sided.
    std::uint64_t total = 0;
    for (const auto& k : window.kernels) total += k.load();
    const auto loads = group_loads(vars, cfg);
    for (std::size_t g = 0; g < G; ++g) {
        const std::uint64_t scaled = loads[g] * G;
        const std::uint64_t dev = scaled > total ? scaled - total
                                  : balance == BalanceBound::two_sided ? total - scaled
                                                                       : 0;
        if (dev > margin * G) {
            return "group " + std::to_string(g) + ": CLP7 violated (load " +
                   std::to_string(loads[g]) + ", margin " + std::to_string(margin) + ")";
        }
    }
    return std::nullopt;
}

std::uint64_t unshared_margin(const KernelWindow& window, const EngineConfig& cfg, BalanceBound balance) {
    const std::uint64_t G = window.group_count();
    if (G == 0) return 0;
    std::uint64_t worst = 0;
    for (const auto& k : window.kernels) {
        const std::uint64_t scaled = k.load() * G;
        if (scaled > window.total_load) {
            worst = std::max(worst, scaled - window.total_load);
        } else if (balance == BalanceBound::two_sided) {
            worst = std::max(worst, window.total_load - scaled);
        }
    }
    const std::uint64_t step = std::uint64_t(cfg.pe_rows) * cfg.pe_cols;
    const std::uint64_t unit = step * G;
    return (worst + unit - 1) / unit * step;
}

std::size_t MicroProgram::item_count() const {
    std::size_t n = 0;
    for (const auto& it : iterations) {
        for (const auto& g : it.groups) n += g.size();
    }
    return n;
}

namespace {

MicroItem slice_item(const CsbMatrix& csb, const BlockSpan& span, std::size_t block,
                     Sharing sharing, std::size_t row_begin, std::size_t row_end,
                     std::size_t col_begin, std::size_t col_end) {
    MicroItem item;
    item.sharing = sharing;
    item.trip_rows = row_end - row_begin;
    item.trip_cols = col_end - col_begin;
    const auto rows = csb.row_idx.begin() + static_cast<std::ptrdiff_t>(span.row_offset);
    const auto cols = csb.col_idx.begin() + static_cast<std::ptrdiff_t>(span.col_offset);
    item.row_idx.assign(rows + static_cast<std::ptrdiff_t>(row_begin),
                        rows + static_cast<std::ptrdiff_t>(row_end));
    item.col_idx.assign(cols + static_cast<std::ptrdiff_t>(col_begin),
                        cols + static_cast<std::ptrdiff_t>(col_end));
    item.block_row = block / csb.block_grid_cols();
    item.block_col = block % csb.block_grid_cols();
    return item;
}

}  // namespace

IterationSchedule schedule_iteration(const CsbMatrix& csb, const std::vector<BlockSpan>& spans,
                                     const EngineConfig& cfg, std::size_t i, std::size_t j,
                                     const SolverOptions& options) {
    const KernelWindow window = analyze_iteration(csb, cfg, i, j);
    const std::size_t G = cfg.group_count();
    IterationSchedule out;
    out.iter_row = i;
    out.iter_col = j;
    out.kernels = window.kernels;
    out.groups.resize(G);

    // Bisection over margin = k * P * Q. The unshared split is feasible at
    // k_hi, so the search always ends with a solution.
    const std::uint64_t step = std::uint64_t(cfg.pe_rows) * cfg.pe_cols;
    std::uint64_t lo = 0, hi = unshared_margin(window, cfg, options.balance) / step;
    std::optional<PartitionVars> best;
    while (lo < hi) {
        const std::uint64_t mid = lo + (hi - lo) / 2;
        SolveResult r = solve_partition(window, cfg, mid * step, options);
        out.budget_exhausted = out.budget_exhausted || r.budget_exhausted;
        if (r.satisfiable) {
            hi = mid;
            best = std::move(r.vars);
        } else {
            lo = mid + 1;
        }
    }
    out.margin = hi * step;
    if (!best) {
        SolveResult r = solve_partition(window, cfg, out.margin, options);
        out.budget_exhausted = out.budget_exhausted || r.budget_exhausted;
        if (r.satisfiable) {
            best = std::move(r.vars);
        } else {
            PartitionVars unshared;
            for (const auto& k : window.kernels) {
                unshared.groups.push_back(GroupPartition::unshared(k.rows, k.cols));
            }
            best = std::move(unshared);
        }
    }
    out.vars = std::move(*best);

    // Items per executing group: own local part, the left neighbour's
    // horizontal share, the upper neighbour's vertical share.
    for (std::size_t g = 0; g < G; ++g) {
        if (window.blocks[g]) {
            const std::size_t b = *window.blocks[g];
            const GroupPartition& p = out.vars.groups[g];
            if (p.local_load() > 0) {
                out.groups[g].push_back(
                    slice_item(csb, spans[b], b, Sharing::local, 0, p.m_local, 0, p.n_local));
            }
            if (p.horizontal_load() > 0) {
                out.groups[cfg.right_of(g)].push_back(
                    slice_item(csb, spans[b], b, Sharing::horizontal, 0, p.dm_h, p.n - p.dn_h, p.n));
            }
            if (p.vertical_load() > 0) {
                out.groups[cfg.down_of(g)].push_back(
                    slice_item(csb, spans[b], b, Sharing::vertical, p.m - p.dm_v, p.m, 0, p.dn_v));
            }
        }
    }
    for (auto& items : out.groups) {
        std::stable_sort(items.begin(), items.end(), [](const MicroItem& a, const MicroItem& b) {
            return static_cast<int>(a.sharing) < static_cast<int>(b.sharing);
        });
    }
    return out;
}

namespace {

MicroProgram empty_program(const CsbMatrix& csb, const EngineConfig& cfg) {
    validate(csb);
    validate(cfg);
    MicroProgram prog;
    prog.config = cfg;
    prog.block_shape = csb.block_shape;
    prog.iter_rows = iteration_rows(csb, cfg);
    prog.iter_cols = iteration_cols(csb, cfg);
    prog.iterations.resize(prog.iter_rows * prog.iter_cols);
    return prog;
}

}  // namespace

MicroProgram compile_micro_serial(const CsbMatrix& csb, const EngineConfig& cfg,
                                  const SolverOptions& options) {
    MicroProgram prog = empty_program(csb, cfg);
    const auto spans = block_spans(csb);
    for (std::size_t t = 0; t < prog.iterations.size(); ++t) {
        prog.iterations[t] =
            schedule_iteration(csb, spans, cfg, t / prog.iter_cols, t % prog.iter_cols, options);
    }
    return prog;
}

MicroProgram compile_micro(const CsbMatrix& csb, const EngineConfig& cfg, const SolverOptions& options) {
    MicroProgram prog = empty_program(csb, cfg);
    const auto spans = block_spans(csb);
    const auto count = static_cast<std::ptrdiff_t>(prog.iterations.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t t = 0; t < count; ++t) {
        const auto u = static_cast<std::size_t>(t);
        prog.iterations[u] =
            schedule_iteration(csb, spans, cfg, u / prog.iter_cols, u % prog.iter_cols, options);
    }
    return prog;
}

void check_coverage(const MicroProgram& program, const CsbMatrix& csb) {
    const auto& cfg = program.config;
    if (program.block_shape != csb.block_shape || program.iter_rows != iteration_rows(csb, cfg) ||
        program.iter_cols != iteration_cols(csb, cfg) ||
        program.iterations.size() != program.iter_rows * program.iter_cols) {
        throw MismatchError("micro program was compiled for a different matrix geometry");
    }
    const auto spans = block_spans(csb);
    const auto& s = csb.block_shape;
    std::vector<std::uint8_t> hits(csb.val.size(), 0);
    for (const auto& it : program.iterations) {
        if (it.groups.size() != cfg.group_count()) throw MismatchError("wrong group count in iteration");
        for (std::size_t g = 0; g < it.groups.size(); ++g) {
            for (const MicroItem& item : it.groups[g]) {
                if (item.block_row >= csb.block_grid_rows() || item.block_col >= csb.block_grid_cols()) {
                    throw MismatchError("item owned by a block outside the matrix");
                }
                if (item.row_idx.size() != item.trip_rows || item.col_idx.size() != item.trip_cols) {
                    throw MismatchError("trip counts disagree with index lists");
                }
                const std::size_t b = item.block_row * csb.block_grid_cols() + item.block_col;
                const BlockSpan& sp = spans[b];
                std::vector<int> row_pos(s.block_rows, -1), col_pos(s.block_cols, -1);
                for (std::size_t r = 0; r < sp.kernel_rows; ++r)
                    row_pos[csb.row_idx[sp.row_offset + r]] = static_cast<int>(r);
                for (std::size_t c = 0; c < sp.kernel_cols; ++c)
                    col_pos[csb.col_idx[sp.col_offset + c]] = static_cast<int>(c);
                for (auto r : item.row_idx) {
                    if (r >= s.block_rows || row_pos[r] < 0) throw MismatchError("item row not in kernel");
                    for (auto c : item.col_idx) {
                        if (c >= s.block_cols || col_pos[c] < 0) throw MismatchError("item column not in kernel");
                        auto& h = hits[sp.val_offset + std::size_t(row_pos[r]) * sp.kernel_cols +
                                       std::size_t(col_pos[c])];
                        if (++h > 1) throw MismatchError("kernel cell covered twice");
                    }
                }
            }
        }
    }
    for (std::size_t v = 0; v < hits.size(); ++v) {
        if (hits[v] != 1) throw MismatchError("kernel cell " + std::to_string(v) + " not covered");
    }
}

namespace {

void write_csv(std::ostream& os, const std::vector<std::uint16_t>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) os << ',';
        os << v[i];
    }
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(trim(cur));
    return out;
}

[[noreturn]] void syntax(std::size_t line, const std::string& what) {
    throw FormatError(FormatErrorKind::syntax, "micro program line " + std::to_string(line) + ": " + what);
}

std::vector<std::uint16_t> parse_csv(const std::string& s, std::size_t line) {
    std::vector<std::uint16_t> out;
    if (s.empty()) return out;
    for (const auto& tok : split(s, ',')) {
        try {
            std::size_t used = 0;
            const unsigned long v = std::stoul(tok, &used);
            if (used != tok.size() || v > 0xffffu) syntax(line, "bad index '" + tok + "'");
            out.push_back(static_cast<std::uint16_t>(v));
        } catch (const std::logic_error&) {
            syntax(line, "bad index '" + tok + "'");
        }
    }
    return out;
}

}  // namespace

std::string to_text(const MicroProgram& program) {
    const auto& cfg = program.config;
    std::ostringstream os;
    os << "# csb-micro grid=" << cfg.grid_rows << 'x' << cfg.grid_cols << " pe=" << cfg.pe_rows
       << 'x' << cfg.pe_cols << " mode=" << to_string(cfg.mode) << " block="
       << program.block_shape.block_rows << 'x' << program.block_shape.block_cols
       << " iters=" << program.iter_rows << 'x' << program.iter_cols << '\n';
    for (const auto& it : program.iterations) {
        os << "# iter " << it.iter_row << ' ' << it.iter_col << " margin=" << it.margin << '\n';
        for (std::size_t g = 0; g < it.groups.size(); ++g) {
            for (const MicroItem& item : it.groups[g]) {
                os << "iter " << it.iter_row << ' ' << it.iter_col << " | group " << g / cfg.grid_cols
                   << ' ' << g % cfg.grid_cols << " | " << to_string(item.sharing) << ' '
                   << item.trip_rows << 'x' << item.trip_cols << " | rows=";
                write_csv(os, item.row_idx);
                os << " | cols=";
                write_csv(os, item.col_idx);
                os << '\n';
            }
        }
    }
    return os.str();
}

MicroProgram parse_micro_program(const std::string& text, const CsbMatrix& csb,
                                 const EngineConfig& cfg) {
    MicroProgram prog = empty_program(csb, cfg);
    for (std::size_t t = 0; t < prog.iterations.size(); ++t) {
        prog.iterations[t].iter_row = t / prog.iter_cols;
        prog.iterations[t].iter_col = t % prog.iter_cols;
        prog.iterations[t].groups.resize(cfg.group_count());
    }
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line.rfind("# csb-micro ", 0) == 0) {
                std::ostringstream expect;
                expect << "grid=" << cfg.grid_rows << 'x' << cfg.grid_cols << " pe=" << cfg.pe_rows
                       << 'x' << cfg.pe_cols << " mode=" << to_string(cfg.mode);
                if (line.find(expect.str()) == std::string::npos) {
                    throw MismatchError("micro program header '" + line + "' does not match engine " +
                                        expect.str());
                }
            } else if (line.rfind("# iter ", 0) == 0) {
                std::istringstream f(line.substr(7));
                std::size_t i = 0, j = 0;
                std::string m;
                if (f >> i >> j >> m && m.rfind("margin=", 0) == 0 && i < prog.iter_rows && j < prog.iter_cols) {
                    try {
                        prog.iterations[i * prog.iter_cols + j].margin = std::stoull(m.substr(7));
                    } catch (const std::logic_error&) {
                        syntax(lineno, "bad margin '" + m + "'");
                    }
                }
            }
            continue;
        }
        const auto fields = split(line, '|');
        if (fields.size() != 5) syntax(lineno, "expected 5 '|'-separated fields");
        std::size_t i = 0, j = 0, k = 0, l = 0, r = 0, c = 0;
        char x = 0;
        std::string kw, kind;
        {
            std::istringstream f(fields[0]);
            if (!(f >> kw >> i >> j) || kw != "iter" || !(f >> std::ws).eof()) syntax(lineno, "bad iter field");
        }
        {
            std::istringstream f(fields[1]);
            if (!(f >> kw >> k >> l) || kw != "group" || !(f >> std::ws).eof()) syntax(lineno, "bad group field");
        }
        {
            std::istringstream f(fields[2]);
            if (!(f >> kind >> r >> x >> c) || x != 'x' || !(f >> std::ws).eof()) syntax(lineno, "bad item field");
        }
        if (fields[3].rfind("rows=", 0) != 0 || fields[4].rfind("cols=", 0) != 0) {
            syntax(lineno, "expected rows= and cols= fields");
        }
        if (i >= prog.iter_rows || j >= prog.iter_cols) syntax(lineno, "iteration out of range");
        if (k >= cfg.grid_rows || l >= cfg.grid_cols) syntax(lineno, "group out of range");

        MicroItem item;
        item.trip_rows = r;
        item.trip_cols = c;
        item.row_idx = parse_csv(fields[3].substr(5), lineno);
        item.col_idx = parse_csv(fields[4].substr(5), lineno);
        std::size_t owner = k * cfg.grid_cols + l;
        if (kind == "local") {
            item.sharing = Sharing::local;
        } else if (kind == "horiz") {
            item.sharing = Sharing::horizontal;
            owner = cfg.left_of(owner);
        } else if (kind == "vert") {
            item.sharing = Sharing::vertical;
            owner = cfg.up_of(owner);
        } else {
            syntax(lineno, "unknown sharing kind '" + kind + "'");
        }
        item.block_row = i * cfg.grid_rows + owner / cfg.grid_cols;
        item.block_col = j * cfg.grid_cols + owner % cfg.grid_cols;
        prog.iterations[i * prog.iter_cols + j].groups[k * cfg.grid_cols + l].push_back(std::move(item));
    }
    for (auto& it : prog.iterations) {
        const KernelWindow w = analyze_iteration(csb, cfg, it.iter_row, it.iter_col);
        it.kernels = w.kernels;
    }
    return prog;
}

}  // namespace csbrnn
