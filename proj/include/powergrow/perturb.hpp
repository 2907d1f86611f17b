#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "powergrow/grid.hpp"
#include "powergrow/normalize.hpp"
#include "powergrow/powerflow.hpp"
#include "powergrow/rng.hpp"
#include "powergrow/util.hpp"

namespace powergrow {

struct PerturbConfig {
    std::size_t n_samples = 1000;
    std::size_t n_edge_swaps = 3;
    std::size_t walk_length = 4;
    std::size_t n_walks = 2;
    double impedance_jitter = 0.05;  // relative std, in [0, 0.5]
    std::uint64_t seed = 0;

    void validate() const {
        if (impedance_jitter < 0.0 || impedance_jitter > 0.5)
            throw UsageError("PerturbConfig: impedance_jitter must lie in [0, 0.5]");
    }
};

namespace perturbdetail {

inline bool edge_exists(const Grid& g, int a, int b) {
    for (const auto& br : g.branches)
        if ((br.from == a && br.to == b) || (br.from == b && br.to == a)) return true;
    return false;
}

}  // namespace perturbdetail

// One degree-preserving rewire: branches (a,b),(c,d) become (a,d),(c,b) when
// all four endpoints are distinct, neither new edge exists, and the graph
// stays connected. Up to 50 attempts, otherwise the grid is returned
// unchanged. Electrical attributes travel with their branch.
inline Grid degree_preserving_swap(const Grid& g, RandomSource& rng) {
    if (g.n_branches() < 2) return g;
    for (int attempt = 0; attempt < 50; ++attempt) {
        std::size_t i = rng.uniform_int(g.n_branches());
        std::size_t j = rng.uniform_int(g.n_branches());
        if (i == j) continue;
        const Branch& b1 = g.branches[i];
        const Branch& b2 = g.branches[j];
        int a = b1.from, b = b1.to, c = b2.from, d = b2.to;
        if (a == c || a == d || b == c || b == d) continue;
        if (perturbdetail::edge_exists(g, a, d) || perturbdetail::edge_exists(g, c, b)) continue;
        Grid out = g;
        out.branches[i].to = d;
        out.branches[j].to = b;
        if (!is_connected(out)) continue;
        return out;
    }
    return g;
}

// Log-normal attribute model fitted to the reference branch set; used for
// edges introduced by the walk merge.
struct BranchAttributeModel {
    double mu_ln_r = 0.0, sigma_ln_r = 0.1;
    double mu_ln_x = 0.0, sigma_ln_x = 0.1;
    double s_max_median = 100.0;

    static BranchAttributeModel fit(const Grid& g) {
        BranchAttributeModel m;
        std::vector<double> ln_r, ln_x, s;
        for (const auto& br : g.branches) {
            if (br.r > 0.0) ln_r.push_back(std::log(br.r));
            ln_x.push_back(std::log(br.x));
            s.push_back(br.s_max);
        }
        auto moments = [](const std::vector<double>& v, double* mu, double* sd) {
            if (v.empty()) {
                *mu = std::log(0.05);
                *sd = 0.1;
                return;
            }
            double m1 = 0.0;
            for (double x : v) m1 += x;
            m1 /= static_cast<double>(v.size());
            double m2 = 0.0;
            for (double x : v) m2 += (x - m1) * (x - m1);
            *mu = m1;
            *sd = v.size() > 1 ? std::sqrt(m2 / static_cast<double>(v.size() - 1)) : 0.1;
        };
        moments(ln_r, &m.mu_ln_r, &m.sigma_ln_r);
        moments(ln_x, &m.mu_ln_x, &m.sigma_ln_x);
        std::sort(s.begin(), s.end());
        if (!s.empty()) m.s_max_median = s[s.size() / 2];
        return m;
    }

    Branch sample(int from, int to, RandomSource& rng) const {
        Branch br;
        br.from = from;
        br.to = to;
        br.r = std::exp(mu_ln_r + sigma_ln_r * rng.normal());
        br.x = std::max(1e-4, std::exp(mu_ln_x + sigma_ln_x * rng.normal()));
        br.s_max = s_max_median;
        return br;
    }
};

// Runs n_walks uniform random walks of walk_length steps, takes the union of
// traversed consecutive-pair edges as a subgraph, and adds any subgraph edge
// absent from g. walk_source selects the graph the walks traverse; the
// dataset pipeline walks the unperturbed reference so that swapped-away local
// structure can be merged back into the perturbed grid.
inline Grid random_walk_merge(const Grid& g, std::size_t walk_length, std::size_t n_walks,
                              RandomSource& rng, const BranchAttributeModel& attrs,
                              const Grid* walk_source = nullptr) {
    Grid out = g;
    const Grid& src = walk_source ? *walk_source : g;
    if (walk_length == 0 || n_walks == 0 || src.n_buses() < 2) return out;
    auto adj = src.adjacency_list();
    std::set<std::pair<int, int>> walked;
    for (std::size_t w = 0; w < n_walks; ++w) {
        int node = static_cast<int>(rng.uniform_int(src.n_buses()));
        for (std::size_t step = 0; step < walk_length; ++step) {
            const auto& nbrs = adj[static_cast<std::size_t>(node)];
            if (nbrs.empty()) break;
            int pick = static_cast<int>(rng.uniform_int(nbrs.size()));
            int next = nbrs[static_cast<std::size_t>(pick)];
            walked.insert(std::minmax(node, next));
            node = next;
        }
    }
    for (const auto& [a, b] : walked) {
        if (perturbdetail::edge_exists(out, a, b)) continue;
        out.branches.push_back(attrs.sample(a, b, rng));
    }
    return out;
}

// Multiplies each branch r and x by independent (1 + Normal(0, jitter))
// factors; r clamped at 0, x at 1e-4.
inline Grid perturb_impedance(const Grid& g, double jitter, RandomSource& rng) {
    if (jitter < 0.0) throw UsageError("perturb_impedance: jitter must be >= 0");
    Grid out = g;
    if (jitter == 0.0) return out;
    for (auto& br : out.branches) {
        br.r = std::max(0.0, br.r * (1.0 + jitter * rng.normal()));
        br.x = std::max(1e-4, br.x * (1.0 + jitter * rng.normal()));
    }
    return out;
}

// Load-series jitter: per-bus multiplicative Normal(1, 0.1) plus per-hour
// Normal(0, 0.02 * peak) noise, demand clamped nonnegative.
inline void jitter_loads(Grid& g, RandomSource& rng) {
    const std::size_t n = g.n_buses();
    const std::size_t t = g.loads.horizon();
    for (std::size_t i = 0; i < n; ++i) {
        if (g.buses[i].type != BusType::Load) continue;
        double peak = 0.0;
        for (std::size_t k = 0; k < t; ++k) peak = std::max(peak, g.loads.pd[i][k]);
        const double bus_scale = std::max(0.1, 1.0 + 0.1 * rng.normal());
        for (std::size_t k = 0; k < t; ++k) {
            double bump = 0.02 * peak * rng.normal();
            double ratio = g.loads.pd[i][k] > 0.0 ? g.loads.qd[i][k] / g.loads.pd[i][k] : 0.0;
            g.loads.pd[i][k] = std::max(0.0, g.loads.pd[i][k] * bus_scale + bump);
            g.loads.qd[i][k] = std::max(0.0, g.loads.pd[i][k] * ratio);
        }
    }
}

// The full per-sample pipeline: swaps, walk merge, impedance jitter, load
// jitter. Deterministic given (reference, cfg.seed, index).
inline Grid perturb_one(const Grid& reference, const PerturbConfig& cfg,
                        const BranchAttributeModel& attrs, std::uint64_t index) {
    RandomSource rng(cfg.seed, 0x50455254ULL + index);
    Grid g = reference;
    for (std::size_t s = 0; s < cfg.n_edge_swaps; ++s) g = degree_preserving_swap(g, rng);
    g = random_walk_merge(g, cfg.walk_length, cfg.n_walks, rng, attrs, &reference);
    g = perturb_impedance(g, cfg.impedance_jitter, rng);
    jitter_loads(g, rng);
    return g;
}

struct DatasetEntry {
    std::string file;
    bool feasible = false;
    double score = 0.0;
    bool convergence_all_snapshots = false;
};

struct DatasetStats {
    std::size_t n_feasible = 0;
    std::size_t n_infeasible = 0;
    double mean_score = 0.0;
    double feasible_fraction = 0.0;
};

struct DatasetResult {
    std::vector<Grid> feasible;
    std::vector<Grid> infeasible;
    std::vector<DatasetEntry> entries;  // one per sample, in index order
    NormalizationParams params;         // fitted on the feasible list
    DatasetStats stats;
};

// Generates cfg.n_samples perturbed grids, scores each on every hourly
// snapshot, and partitions by converged-on-all-snapshots.
inline DatasetResult generate_dataset(const Grid& reference, const PerturbConfig& cfg,
                                      unsigned jobs = 0) {
    cfg.validate();
    check_valid(reference);
    {
        FeasibilityReport ref_rep = feasibility_report(reference, jobs);
        if (!ref_rep.all_converged)
            throw DataError("generate_dataset: reference grid is infeasible (" +
                            std::to_string(ref_rep.n_converged) + "/" +
                            std::to_string(ref_rep.n_snapshots) + " snapshots converge)");
    }
    const BranchAttributeModel attrs = BranchAttributeModel::fit(reference);

    DatasetResult out;
    std::vector<Grid> samples(cfg.n_samples);
    std::vector<FeasibilityReport> reports(cfg.n_samples);
    parallel_for(cfg.n_samples, jobs, [&](std::size_t i) {
        samples[i] = perturb_one(reference, cfg, attrs, i);
        reports[i] = feasibility_report(samples[i], 1);
    });

    double score_sum = 0.0;
    for (std::size_t i = 0; i < cfg.n_samples; ++i) {
        DatasetEntry e;
        e.file = "grid_" + std::to_string(i) + ".json";
        e.convergence_all_snapshots = reports[i].all_converged;
        e.feasible = reports[i].all_converged;
        e.score = reports[i].score;
        score_sum += e.score;
        out.entries.push_back(e);
        if (e.feasible)
            out.feasible.push_back(std::move(samples[i]));
        else
            out.infeasible.push_back(std::move(samples[i]));
    }
    out.stats.n_feasible = out.feasible.size();
    out.stats.n_infeasible = out.infeasible.size();
    out.stats.mean_score = cfg.n_samples > 0 ? score_sum / static_cast<double>(cfg.n_samples) : 0.0;
    out.stats.feasible_fraction =
        cfg.n_samples > 0 ? static_cast<double>(out.feasible.size()) / static_cast<double>(cfg.n_samples)
                          : 0.0;
    out.params = out.feasible.empty() ? fit_normalization({reference}) : fit_normalization(out.feasible);
    return out;
}

// Writes grid files plus the manifest into a directory.
inline void write_dataset(const DatasetResult& ds, const Grid& reference, const PerturbConfig& cfg,
                          const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["n_samples"] = cfg.n_samples;
    manifest["seed"] = cfg.seed;
    nlohmann::json entries = nlohmann::json::array();
    std::size_t fi = 0, ii = 0;
    for (const auto& e : ds.entries) {
        nlohmann::json je;
        je["file"] = e.file;
        je["feasible"] = e.feasible;
        je["score"] = e.score;
        je["convergence_all_snapshots"] = e.convergence_all_snapshots;
        entries.push_back(je);
        const Grid& g = e.feasible ? ds.feasible[fi] : ds.infeasible[ii];
        (e.feasible ? fi : ii) += 1;
        save_grid(g, (fs::path(dir) / e.file).string());
    }
    manifest["entries"] = std::move(entries);
    manifest["normalization"] = normalization_to_json(ds.params);
    manifest["feasible_fraction"] = ds.stats.feasible_fraction;
    manifest["mean_score"] = ds.stats.mean_score;
    save_grid(reference, (fs::path(dir) / "reference.json").string());
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw DataError("write_dataset: cannot write manifest in " + dir);
    out << manifest.dump(1) << "\n";
}

struct LoadedDataset {
    std::vector<Grid> feasible;
    std::vector<Grid> infeasible;
    std::vector<DatasetEntry> entries;
    NormalizationParams params;
    Grid reference;
};

inline LoadedDataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw DataError("load_dataset: missing manifest.json in " + dir);
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("load_dataset: manifest parse error: " + std::string(e.what()));
    }
    LoadedDataset ds;
    ds.params = normalization_from_json(manifest.at("normalization"));
    ds.reference = load_grid((fs::path(dir) / "reference.json").string());
    for (const auto& je : manifest.at("entries")) {
        DatasetEntry e;
        e.file = je.at("file").get<std::string>();
        e.feasible = je.at("feasible").get<bool>();
        e.score = je.at("score").get<double>();
        e.convergence_all_snapshots = je.at("convergence_all_snapshots").get<bool>();
        ds.entries.push_back(e);
        Grid g = load_grid((fs::path(dir) / e.file).string());
        if (e.feasible)
            ds.feasible.push_back(std::move(g));
        else
            ds.infeasible.push_back(std::move(g));
    }
    return ds;
}

}  // namespace powergrow
