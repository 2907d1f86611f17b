#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "powergrow/util.hpp"

namespace powergrow {

enum class BusType { Slack, Generator, Load };

inline const char* bus_type_name(BusType t) {
    switch (t) {
        case BusType::Slack: return "slack";
        case BusType::Generator: return "generator";
        default: return "load";
    }
}

inline BusType bus_type_from_name(const std::string& s) {
    if (s == "slack") return BusType::Slack;
    if (s == "generator") return BusType::Generator;
    if (s == "load") return BusType::Load;
    throw DataError("unknown bus type '" + s + "'");
}

struct Bus {
    int id = 0;
    BusType type = BusType::Load;
    double v_min = 0.94;
    double v_max = 1.06;
    // generator-only fields (present iff Slack or Generator)
    double p_min = 0.0;
    double p_max = 0.0;
    double q_min = 0.0;
    double q_max = 0.0;
    double cost = 0.0;  // $/MWh linear cost

    bool is_generator() const { return type != BusType::Load; }
};

struct Branch {
    int from = 0;
    int to = 0;
    double r = 0.0;      // per-unit resistance
    double x = 0.0;      // per-unit reactance
    double s_max = 0.0;  // MVA rating
};

struct LoadSeries {
    double dt_hours = 1.0;
    std::vector<std::vector<double>> pd;  // N x T, MW
    std::vector<std::vector<double>> qd;  // N x T, MVAr

    std::size_t horizon() const { return pd.empty() ? 0 : pd.front().size(); }
};

struct Grid {
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    LoadSeries loads;
    // Set by from_diffusion_space when the decoded graph fails validation
    // (callers score such grids instead of rejecting them).
    bool valid = true;

    std::size_t n_buses() const { return buses.size(); }
    std::size_t n_branches() const { return branches.size(); }

    std::vector<std::vector<int>> adjacency_list() const {
        std::vector<std::vector<int>> adj(buses.size());
        for (const auto& br : branches) {
            adj[static_cast<std::size_t>(br.from)].push_back(br.to);
            adj[static_cast<std::size_t>(br.to)].push_back(br.from);
        }
        return adj;
    }

    int slack_index() const {
        for (std::size_t i = 0; i < buses.size(); ++i)
            if (buses[i].type == BusType::Slack) return static_cast<int>(i);
        return -1;
    }

    std::vector<int> degrees() const {
        std::vector<int> deg(buses.size(), 0);
        for (const auto& br : branches) {
            ++deg[static_cast<std::size_t>(br.from)];
            ++deg[static_cast<std::size_t>(br.to)];
        }
        return deg;
    }
};

inline bool is_connected(std::size_t n, const std::vector<Branch>& branches,
                         int skip_branch = -1) {
    if (n == 0) return false;
    std::vector<std::vector<int>> adj(n);
    for (std::size_t b = 0; b < branches.size(); ++b) {
        if (static_cast<int>(b) == skip_branch) continue;
        adj[static_cast<std::size_t>(branches[b].from)].push_back(branches[b].to);
        adj[static_cast<std::size_t>(branches[b].to)].push_back(branches[b].from);
    }
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        for (int v : adj[static_cast<std::size_t>(u)]) {
            if (!seen[static_cast<std::size_t>(v)]) {
                seen[static_cast<std::size_t>(v)] = 1;
                ++count;
                stack.push_back(v);
            }
        }
    }
    return count == n;
}

inline bool is_connected(const Grid& g) { return is_connected(g.n_buses(), g.branches); }

// Non-throwing structural validation; returns one message per violation.
inline std::vector<std::string> validate_grid(const Grid& g) {
    std::vector<std::string> problems;
    const std::size_t n = g.n_buses();
    if (n == 0) {
        problems.push_back("grid has no buses");
        return problems;
    }
    int slack_count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const Bus& b = g.buses[i];
        if (b.id != static_cast<int>(i))
            problems.push_back("buses[" + std::to_string(i) + "].id must equal its index");
        if (b.type == BusType::Slack) ++slack_count;
        if (!(b.v_min < b.v_max))
            problems.push_back("buses[" + std::to_string(i) + "]: v_min must be < v_max");
        if (b.is_generator()) {
            if (b.p_min > b.p_max)
                problems.push_back("buses[" + std::to_string(i) + "]: p_min > p_max");
            if (b.q_min > b.q_max)
                problems.push_back("buses[" + std::to_string(i) + "]: q_min > q_max");
        }
    }
    if (slack_count != 1)
        problems.push_back("grid must have exactly one slack bus (found " +
                           std::to_string(slack_count) + ")");
    std::set<std::pair<int, int>> pairs;
    for (std::size_t b = 0; b < g.branches.size(); ++b) {
        const Branch& br = g.branches[b];
        auto tag = "branches[" + std::to_string(b) + "]";
        if (br.from < 0 || br.to < 0 || br.from >= static_cast<int>(n) || br.to >= static_cast<int>(n)) {
            problems.push_back(tag + ": endpoint out of range");
            continue;
        }
        if (br.from == br.to) problems.push_back(tag + ": self-loop");
        if (br.r < 0.0) problems.push_back(tag + ": r must be >= 0");
        if (!(br.x > 0.0)) problems.push_back(tag + ": x must be > 0");
        if (!(br.s_max > 0.0)) problems.push_back(tag + ": s_max must be > 0");
        std::pair<int, int> key = std::minmax(br.from, br.to);
        if (!pairs.insert(key).second)
            problems.push_back(tag + ": duplicate branch between " + std::to_string(br.from) +
                               " and " + std::to_string(br.to));
    }
    const auto& ls = g.loads;
    if (ls.pd.size() != n || ls.qd.size() != n) {
        problems.push_back("loads: pd/qd must have one row per bus");
    } else {
        const std::size_t t = ls.horizon();
        if (t < 24) problems.push_back("loads: horizon must be at least 24 steps");
        for (std::size_t i = 0; i < n; ++i) {
            if (ls.pd[i].size() != t || ls.qd[i].size() != t) {
                problems.push_back("loads: ragged rows at bus " + std::to_string(i));
                continue;
            }
            bool nonload = g.buses[i].type != BusType::Load;
            for (std::size_t k = 0; k < t; ++k) {
                if (!std::isfinite(ls.pd[i][k]) || !std::isfinite(ls.qd[i][k])) {
                    problems.push_back("loads: non-finite entry at bus " + std::to_string(i));
                    break;
                }
                if (nonload && (ls.pd[i][k] != 0.0 || ls.qd[i][k] != 0.0)) {
                    problems.push_back("loads: nonzero demand at non-load bus " + std::to_string(i));
                    break;
                }
            }
        }
    }
    if (!is_connected(g)) problems.push_back("grid graph is not connected");
    return problems;
}

inline void check_valid(const Grid& g) {
    auto problems = validate_grid(g);
    if (!problems.empty()) {
        std::string msg = "invalid grid:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw DataError(msg);
    }
}

// ---- JSON serialization ----------------------------------------------------

namespace gridio {

inline double require_number(const nlohmann::json& j, const char* key, const std::string& ctx) {
    if (!j.contains(key)) throw DataError(ctx + ": missing required field \"" + key + "\"");
    if (!j[key].is_number()) throw DataError(ctx + ": field \"" + key + "\" must be a number");
    return j[key].get<double>();
}

inline const nlohmann::json& require_array(const nlohmann::json& j, const char* key,
                                           const std::string& ctx) {
    if (!j.contains(key)) throw DataError(ctx + ": missing required field \"" + key + "\"");
    if (!j[key].is_array()) throw DataError(ctx + ": field \"" + key + "\" must be an array");
    return j[key];
}

}  // namespace gridio

inline nlohmann::json grid_to_json(const Grid& g) {
    nlohmann::json j;
    j["base_mva"] = g.base_mva;
    nlohmann::json buses = nlohmann::json::array();
    for (const auto& b : g.buses) {
        nlohmann::json jb;
        jb["id"] = b.id;
        jb["type"] = bus_type_name(b.type);
        jb["v_min"] = b.v_min;
        jb["v_max"] = b.v_max;
        if (b.is_generator()) {
            jb["p_min"] = b.p_min;
            jb["p_max"] = b.p_max;
            jb["q_min"] = b.q_min;
            jb["q_max"] = b.q_max;
            jb["cost"] = b.cost;
        }
        buses.push_back(std::move(jb));
    }
    j["buses"] = std::move(buses);
    nlohmann::json branches = nlohmann::json::array();
    for (const auto& br : g.branches) {
        nlohmann::json jb;
        jb["from"] = br.from;
        jb["to"] = br.to;
        jb["r"] = br.r;
        jb["x"] = br.x;
        jb["s_max"] = br.s_max;
        branches.push_back(std::move(jb));
    }
    j["branches"] = std::move(branches);
    j["loads"]["dt_hours"] = g.loads.dt_hours;
    j["loads"]["pd"] = g.loads.pd;
    j["loads"]["qd"] = g.loads.qd;
    return j;
}

inline Grid grid_from_json(const nlohmann::json& j) {
    using gridio::require_array;
    using gridio::require_number;
    Grid g;
    g.base_mva = require_number(j, "base_mva", "grid");
    const auto& buses = require_array(j, "buses", "grid");
    for (std::size_t i = 0; i < buses.size(); ++i) {
        const auto& jb = buses[i];
        std::string ctx = "buses[" + std::to_string(i) + "]";
        Bus b;
        b.id = static_cast<int>(require_number(jb, "id", ctx));
        if (!jb.contains("type") || !jb["type"].is_string())
            throw DataError(ctx + ": missing or non-string field \"type\"");
        b.type = bus_type_from_name(jb["type"].get<std::string>());
        b.v_min = require_number(jb, "v_min", ctx);
        b.v_max = require_number(jb, "v_max", ctx);
        if (b.is_generator()) {
            b.p_min = require_number(jb, "p_min", ctx);
            b.p_max = require_number(jb, "p_max", ctx);
            b.q_min = require_number(jb, "q_min", ctx);
            b.q_max = require_number(jb, "q_max", ctx);
            b.cost = require_number(jb, "cost", ctx);
        }
        g.buses.push_back(b);
    }
    const auto& branches = require_array(j, "branches", "grid");
    for (std::size_t i = 0; i < branches.size(); ++i) {
        const auto& jb = branches[i];
        std::string ctx = "branches[" + std::to_string(i) + "]";
        Branch br;
        br.from = static_cast<int>(require_number(jb, "from", ctx));
        br.to = static_cast<int>(require_number(jb, "to", ctx));
        br.r = require_number(jb, "r", ctx);
        br.x = require_number(jb, "x", ctx);
        br.s_max = require_number(jb, "s_max", ctx);
        g.branches.push_back(br);
    }
    if (!j.contains("loads") || !j["loads"].is_object())
        throw DataError("grid: missing required object \"loads\"");
    const auto& jl = j["loads"];
    g.loads.dt_hours = require_number(jl, "dt_hours", "loads");
    const auto& pd = require_array(jl, "pd", "loads");
    const auto& qd = require_array(jl, "qd", "loads");
    g.loads.pd = pd.get<std::vector<std::vector<double>>>();
    g.loads.qd = qd.get<std::vector<std::vector<double>>>();
    return g;
}

inline void save_grid(const Grid& g, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << grid_to_json(g).dump(1) << "\n";
    if (!out) throw DataError("write failed: " + path);
}

inline Grid load_grid(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open grid file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("parse error in " + path + ": " + e.what());
    }
    try {
        Grid g = grid_from_json(j);
        check_valid(g);
        return g;
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

}  // namespace powergrow
