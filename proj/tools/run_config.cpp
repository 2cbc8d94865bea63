#include "run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include <json.hpp>

#include "csbrnn/errors.hpp"

namespace csbtool {

using csbrnn::ConfigError;
using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError("'" + where + "' must be an object");
    const std::set<std::string> keys(allowed.begin(), allowed.end());
    for (const auto& item : obj.items()) {
        if (!keys.count(item.key())) throw ConfigError("unknown key '" + item.key() + "' in " + where);
    }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
    const auto it = obj.find(key);
    if (it == obj.end()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + " has the wrong type");
    }
}

void read_count(const json& obj, const char* key, std::size_t& out, const std::string& where) {
    const auto it = obj.find(key);
    if (it == obj.end()) return;
    if (!it->is_number_unsigned()) throw ConfigError(where + "." + key + " must be a non-negative integer");
    out = it->get<std::size_t>();
}

csbrnn::BlockShape read_shape(const json& v, const std::string& where) {
    if (v.is_string()) {
        const auto [r, c] = parse_dims(v.get<std::string>());
        return {r, c};
    }
    if (v.is_array() && v.size() == 2 && v[0].is_number_unsigned() && v[1].is_number_unsigned()) {
        return {v[0].get<std::size_t>(), v[1].get<std::size_t>()};
    }
    throw ConfigError(where + " must be \"RxC\" or [r, c]");
}

void read_shape(const json& obj, const char* key, csbrnn::BlockShape& out, const std::string& where) {
    const auto it = obj.find(key);
    if (it != obj.end()) out = read_shape(*it, where + "." + key);
}

void read_task(const json& j, RunConfig& cfg) {
    check_keys(j, "task", {"rows", "cols", "train_samples", "validation_samples", "noise_sigma",
                           "teacher_prune_fraction", "teacher_block"});
    auto& t = cfg.task;
    read_count(j, "rows", t.rows, "task");
    read_count(j, "cols", t.cols, "task");
    read_count(j, "train_samples", t.train_samples, "task");
    read_count(j, "validation_samples", t.validation_samples, "task");
    read(j, "noise_sigma", t.noise_sigma, "task");
    if (j.contains("teacher_prune_fraction") && !j["teacher_prune_fraction"].is_null()) {
        double f = 0.0;
        read(j, "teacher_prune_fraction", f, "task");
        t.teacher_prune_fraction = f;
    }
    read_shape(j, "teacher_block", t.teacher_block, "task");
    if (t.rows == 0 || t.cols == 0) throw ConfigError("task dims must be positive");
    if (t.train_samples == 0 || t.validation_samples == 0) throw ConfigError("task sample counts must be positive");
    if (t.noise_sigma < 0.0) throw ConfigError("task.noise_sigma must be non-negative");
}

void read_prune(const json& j, RunConfig& cfg) {
    check_keys(j, "prune", {"block", "init_prune_fraction", "init_step", "target_loss", "target_loss_factor",
                            "epochs_per_round", "baseline_epochs", "rho", "sgd", "max_fraction", "max_rounds"});
    auto& p = cfg.prune;
    read_shape(j, "block", p.block_shape, "prune");
    read(j, "init_prune_fraction", p.init_prune_fraction, "prune");
    read(j, "init_step", p.init_step, "prune");
    if (j.contains("target_loss") && !j["target_loss"].is_null()) {
        double t = 0.0;
        read(j, "target_loss", t, "prune");
        p.target_loss = t;
    }
    read(j, "target_loss_factor", p.target_loss_factor, "prune");
    read_count(j, "epochs_per_round", p.epochs_per_round, "prune");
    read_count(j, "baseline_epochs", p.baseline_epochs, "prune");
    read(j, "rho", p.rho, "prune");
    read(j, "max_fraction", p.max_fraction, "prune");
    read_count(j, "max_rounds", p.max_rounds, "prune");
    if (const auto it = j.find("sgd"); it != j.end()) {
        check_keys(*it, "prune.sgd", {"learning_rate", "batch_size", "steps_per_epoch"});
        read(*it, "learning_rate", p.sgd.learning_rate, "prune.sgd");
        read_count(*it, "batch_size", p.sgd.batch_size, "prune.sgd");
        read_count(*it, "steps_per_epoch", p.sgd.steps_per_epoch, "prune.sgd");
    }
}

void read_engine(const json& j, RunConfig& cfg) {
    check_keys(j, "engine", {"grid", "pe", "mode", "balance", "max_nodes"});
    auto& e = cfg.engine;
    if (const auto it = j.find("grid"); it != j.end()) {
        const auto s = read_shape(*it, "engine.grid");
        e.grid_rows = s.block_rows;
        e.grid_cols = s.block_cols;
    }
    if (const auto it = j.find("pe"); it != j.end()) {
        const auto s = read_shape(*it, "engine.pe");
        e.pe_rows = s.block_rows;
        e.pe_cols = s.block_cols;
    }
    std::string text;
    try {
        if (j.contains("mode")) {
            read(j, "mode", text, "engine");
            e.mode = csbrnn::parse_sharing_mode(text);
        }
        if (j.contains("balance")) {
            read(j, "balance", text, "engine");
            cfg.solver.balance = csbrnn::parse_balance_bound(text);
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const csbrnn::Error& err) {
        throw ConfigError(err.what());
    }
    read_count(j, "max_nodes", cfg.solver.max_nodes, "engine");
    csbrnn::validate(e);
}

void read_sweep(const json& j, RunConfig& cfg) {
    check_keys(j, "sweep", {"count", "rows", "cols", "tile", "sigma", "diagonal_boost", "diagonal_every",
                            "prune_fraction", "block_sizes", "modes"});
    auto& s = cfg.sweep;
    read_count(j, "count", s.suite.count, "sweep");
    read_count(j, "rows", s.suite.rows, "sweep");
    read_count(j, "cols", s.suite.cols, "sweep");
    read_count(j, "tile", s.suite.tile, "sweep");
    read(j, "sigma", s.suite.sigma, "sweep");
    read(j, "diagonal_boost", s.suite.diagonal_boost, "sweep");
    read_count(j, "diagonal_every", s.suite.diagonal_every, "sweep");
    read(j, "prune_fraction", s.prune_fraction, "sweep");
    read(j, "block_sizes", s.block_sizes, "sweep");
    if (const auto it = j.find("modes"); it != j.end()) {
        std::vector<std::string> names;
        read(j, "modes", names, "sweep");
        s.modes.clear();
        for (const auto& n : names) {
            try {
                s.modes.push_back(csbrnn::parse_sharing_mode(n));
            } catch (const csbrnn::Error& err) {
                throw ConfigError(err.what());
            }
        }
    }
    if (s.suite.rows == 0 || s.suite.cols == 0 || s.suite.tile == 0) {
        throw ConfigError("sweep dims and tile must be positive");
    }
}

}  // namespace

std::pair<std::size_t, std::size_t> parse_dims(const std::string& text) {
    if (text.find('x') == std::string::npos && !text.empty()) return parse_dims(text + "x" + text);
    const auto x = text.find('x');
    std::size_t a = 0, b = 0;
    std::size_t used_a = 0, used_b = 0;
    try {
        if (x == std::string::npos) throw std::invalid_argument(text);
        a = std::stoul(text.substr(0, x), &used_a);
        b = std::stoul(text.substr(x + 1), &used_b);
    } catch (const std::exception&) {
        throw ConfigError("expected dims like 4x4, got '" + text + "'");
    }
    if (used_a != x || used_b != text.size() - x - 1 || a == 0 || b == 0) {
        throw ConfigError("expected dims like 4x4, got '" + text + "'");
    }
    return {a, b};
}

RunConfig parse_run_config(const std::string& json_text, const char* env_seed) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
    check_keys(j, "config", {"seed", "output_dir", "task", "prune", "engine", "sweep"});
    RunConfig cfg;
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) throw ConfigError("seed must be a non-negative integer");
        cfg.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("output_dir")) {
        std::string dir;
        read(j, "output_dir", dir, "config");
        cfg.output_dir = dir;
    }
    if (j.contains("task")) read_task(j["task"], cfg);
    if (j.contains("prune")) read_prune(j["prune"], cfg);
    if (j.contains("engine")) read_engine(j["engine"], cfg);
    if (j.contains("sweep")) read_sweep(j["sweep"], cfg);

    if (env_seed != nullptr && *env_seed != '\0') {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env_seed, &end, 10);
        if (*end != '\0' || env_seed[0] == '-') throw ConfigError(std::string("CSB_SEED is not an integer: ") + env_seed);
        cfg.seed = v;
    }
    cfg.task.seed = cfg.seed;
    cfg.sweep.suite.seed = cfg.seed;
    cfg.sweep.engine = cfg.engine;
    cfg.sweep.solver = cfg.solver;
    try {
        csbrnn::validate(cfg.prune);
        csbrnn::validate(cfg.sweep);
    } catch (const ConfigError&) {
        throw;
    } catch (const csbrnn::Error& err) {
        throw ConfigError(err.what());
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str(), std::getenv("CSB_SEED"));
}

}  // namespace csbtool
