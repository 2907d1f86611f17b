#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "powergrow/grid.hpp"
#include "powergrow/util.hpp"

namespace powergrow {

// Node-feature channel order for the diffused one-hot bus type.
constexpr std::size_t kNodeChannels = 3;  // d1: slack, generator, load
constexpr std::size_t kEdgeChannels = 3;  // d2: r, x, s_max
constexpr std::size_t kLoadChannels = 2;  // d3: pd, qd
constexpr double kUnitClamp = 1e-6;

// Per-bus attributes that are carried by the grid but not diffused; decoded
// grids get them back from the corpus (by index when the decoded type matches
// the reference, by per-type template otherwise).
struct BusTemplate {
    double v_min = 0.94, v_max = 1.06;
    double p_min = 0.0, p_max = 0.0, q_min = 0.0, q_max = 0.0;
    double cost = 0.0;
};

struct NormalizationParams {
    // Two-level encodings for adjacency and bus-type channels.
    double w_a = 0.8, b_a = 0.1;
    double w_x = 0.8, b_x = 0.1;
    // Branch attribute channels mapped by value_norm = (value - mu) * sigma + 0.5.
    std::array<double, kEdgeChannels> mu_e{0.0, 0.0, 0.0};
    std::array<double, kEdgeChannels> sigma_e{1.0, 1.0, 1.0};
    // Load channels scaled by value_norm = value * sigma.
    double sigma_p = 1.0;
    double sigma_q = 1.0;

    double base_mva = 100.0;
    std::vector<BusType> reference_types;
    std::vector<BusTemplate> reference_buses;
    BusTemplate generator_template;
    BusTemplate slack_template;
    BusTemplate load_template;

    // Affine for the E channels in (w, b) form.
    double w_e(std::size_t c) const { return sigma_e[c]; }
    double b_e(std::size_t c) const { return 0.5 - mu_e[c] * sigma_e[c]; }

    double edge_level_high() const { return w_a + b_a; }
    double edge_level_low() const { return b_a; }
};

// Unit-interval arrays for one grid, the shapes the diffusion stack works on.
struct DiffusionArrays {
    std::size_t n = 0;       // buses
    std::size_t horizon = 0; // load steps
    std::vector<double> a;   // n*n
    std::vector<double> x;   // n*kNodeChannels
    std::vector<double> e;   // n*n*kEdgeChannels, index (i*n+j)*d2+c
    std::vector<double> d;   // n*horizon*kLoadChannels, index (i*T+t)*d3+c
};

namespace detail {

inline double clamp_unit(double v) {
    if (v < kUnitClamp) return kUnitClamp;
    if (v > 1.0 - kUnitClamp) return 1.0 - kUnitClamp;
    return v;
}

inline void check_mapped(double v, const char* channel) {
    if (v < 0.0 || v > 1.0)
        throw DataError(std::string("normalization overflow in channel '") + channel +
                        "': mapped value " + std::to_string(v) + " outside (0,1)");
}

}  // namespace detail

// Fits the corpus statistics. Scales are chosen so every attribute deviation
// maps inside [0.05, 0.95] and the largest normalized load sits near 0.98.
inline NormalizationParams fit_normalization(const std::vector<Grid>& corpus) {
    if (corpus.empty()) throw UsageError("fit_normalization: empty corpus");
    NormalizationParams p;
    p.base_mva = corpus.front().base_mva;

    std::array<std::vector<double>, kEdgeChannels> vals;
    double max_pd = 0.0, max_qd = 0.0;
    for (const auto& g : corpus) {
        for (const auto& br : g.branches) {
            vals[0].push_back(br.r);
            vals[1].push_back(br.x);
            vals[2].push_back(br.s_max);
        }
        for (const auto& row : g.loads.pd)
            for (double v : row) max_pd = std::max(max_pd, std::fabs(v));
        for (const auto& row : g.loads.qd)
            for (double v : row) max_qd = std::max(max_qd, std::fabs(v));
    }
    for (std::size_t c = 0; c < kEdgeChannels; ++c) {
        if (vals[c].empty()) throw DataError("fit_normalization: corpus has no branches");
        double mu = 0.0;
        for (double v : vals[c]) mu += v;
        mu /= static_cast<double>(vals[c].size());
        double max_dev = 0.0;
        for (double v : vals[c]) max_dev = std::max(max_dev, std::fabs(v - mu));
        p.mu_e[c] = mu;
        p.sigma_e[c] = max_dev > 0.0 ? 0.45 / max_dev : 1.0;
    }
    p.sigma_p = max_pd > 0.0 ? 0.98 / max_pd : 1.0;
    p.sigma_q = max_qd > 0.0 ? 0.98 / max_qd : 1.0;
    if (!(p.sigma_p > 0.0) || !(p.sigma_q > 0.0))
        throw NumericalError("fit_normalization: non-positive load scale");
    if (max_pd > 0.0 && max_pd * p.sigma_p < 0.9)
        throw NumericalError("fit_normalization: normalized load max below 0.9");

    const Grid& ref = corpus.front();
    p.reference_types.reserve(ref.n_buses());
    p.reference_buses.reserve(ref.n_buses());
    int n_gen = 0;
    for (const auto& b : ref.buses) {
        p.reference_types.push_back(b.type);
        BusTemplate t{b.v_min, b.v_max, b.p_min, b.p_max, b.q_min, b.q_max, b.cost};
        p.reference_buses.push_back(t);
        if (b.type == BusType::Generator) {
            p.generator_template.v_min = b.v_min;
            p.generator_template.v_max = b.v_max;
            p.generator_template.p_min += b.p_min;
            p.generator_template.p_max += b.p_max;
            p.generator_template.q_min += b.q_min;
            p.generator_template.q_max += b.q_max;
            p.generator_template.cost += b.cost;
            ++n_gen;
        } else if (b.type == BusType::Slack) {
            p.slack_template = t;
        } else {
            p.load_template.v_min = b.v_min;
            p.load_template.v_max = b.v_max;
        }
    }
    if (n_gen > 0) {
        p.generator_template.p_min /= n_gen;
        p.generator_template.p_max /= n_gen;
        p.generator_template.q_min /= n_gen;
        p.generator_template.q_max /= n_gen;
        p.generator_template.cost /= n_gen;
    }
    return p;
}

inline DiffusionArrays to_diffusion_space(const Grid& g, const NormalizationParams& p) {
    const std::size_t n = g.n_buses();
    const std::size_t T = g.loads.horizon();
    DiffusionArrays out;
    out.n = n;
    out.horizon = T;
    out.a.assign(n * n, detail::clamp_unit(p.b_a));
    out.x.assign(n * kNodeChannels, detail::clamp_unit(p.b_x));
    out.e.assign(n * n * kEdgeChannels, detail::clamp_unit(p.b_a));
    out.d.assign(n * T * kLoadChannels, kUnitClamp);

    const double high_a = detail::clamp_unit(p.w_a + p.b_a);
    for (const auto& br : g.branches) {
        auto i = static_cast<std::size_t>(br.from);
        auto j = static_cast<std::size_t>(br.to);
        out.a[i * n + j] = high_a;
        out.a[j * n + i] = high_a;
        const double raw[kEdgeChannels] = {br.r, br.x, br.s_max};
        static const char* names[kEdgeChannels] = {"r", "x", "s_max"};
        for (std::size_t c = 0; c < kEdgeChannels; ++c) {
            double v = (raw[c] - p.mu_e[c]) * p.sigma_e[c] + 0.5;
            detail::check_mapped(v, names[c]);
            v = detail::clamp_unit(v);
            out.e[(i * n + j) * kEdgeChannels + c] = v;
            out.e[(j * n + i) * kEdgeChannels + c] = v;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t channel = g.buses[i].type == BusType::Slack ? 0
                              : g.buses[i].type == BusType::Generator ? 1
                                                                      : 2;
        out.x[i * kNodeChannels + channel] = detail::clamp_unit(p.w_x + p.b_x);
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < T; ++t) {
            double pv = g.loads.pd[i][t] * p.sigma_p;
            double qv = g.loads.qd[i][t] * p.sigma_q;
            detail::check_mapped(pv, "pd");
            detail::check_mapped(qv, "qd");
            out.d[(i * T + t) * kLoadChannels + 0] = detail::clamp_unit(pv);
            out.d[(i * T + t) * kLoadChannels + 1] = detail::clamp_unit(qv);
        }
    }
    return out;
}

// Decodes unit-interval arrays back into a Grid. Adjacency is symmetrized and
// binarized at the two-level midpoint; bus types by channel argmax with ties
// broken toward Load; exactly one slack is enforced afterwards. Only entries
// on realized edges are read from the E array. The returned grid carries a
// validity flag instead of throwing on disconnection.
inline Grid from_diffusion_space(const DiffusionArrays& arr, const NormalizationParams& p) {
    const std::size_t n = arr.n;
    const std::size_t T = arr.horizon;
    Grid g;
    g.base_mva = p.base_mva;

    // bus types
    std::vector<BusType> types(n, BusType::Load);
    std::vector<double> slack_score(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double s = arr.x[i * kNodeChannels + 0];
        const double gen = arr.x[i * kNodeChannels + 1];
        const double load = arr.x[i * kNodeChannels + 2];
        slack_score[i] = s;
        // argmax with ties toward Load
        if (s > gen && s > load)
            types[i] = BusType::Slack;
        else if (gen > s && gen > load)
            types[i] = BusType::Generator;
        else
            types[i] = BusType::Load;
    }
    // exactly one slack: keep the strongest, demote the rest to Generator;
    // when none decodes, promote the bus with the highest slack channel.
    int slack_at = -1;
    for (std::size_t i = 0; i < n; ++i) {
        if (types[i] != BusType::Slack) continue;
        if (slack_at < 0 || slack_score[i] > slack_score[static_cast<std::size_t>(slack_at)]) {
            if (slack_at >= 0) types[static_cast<std::size_t>(slack_at)] = BusType::Generator;
            slack_at = static_cast<int>(i);
        } else {
            types[i] = BusType::Generator;
        }
    }
    if (slack_at < 0) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < n; ++i)
            if (slack_score[i] > slack_score[best]) best = i;
        types[best] = BusType::Slack;
        slack_at = static_cast<int>(best);
    }

    for (std::size_t i = 0; i < n; ++i) {
        Bus b;
        b.id = static_cast<int>(i);
        b.type = types[i];
        const bool matches_reference =
            i < p.reference_types.size() && p.reference_types[i] == types[i];
        const BusTemplate& t = matches_reference ? p.reference_buses[i]
                               : types[i] == BusType::Slack ? p.slack_template
                               : types[i] == BusType::Generator ? p.generator_template
                                                                : p.load_template;
        b.v_min = t.v_min;
        b.v_max = t.v_max;
        if (b.is_generator()) {
            b.p_min = t.p_min;
            b.p_max = t.p_max;
            b.q_min = t.q_min;
            b.q_max = t.q_max;
            b.cost = t.cost;
        }
        g.buses.push_back(b);
    }

    // adjacency: symmetric average then threshold at the level midpoint
    const double threshold = p.b_a + 0.5 * p.w_a;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double avg = 0.5 * (arr.a[i * n + j] + arr.a[j * n + i]);
            if (avg < threshold) continue;
            Branch br;
            br.from = static_cast<int>(i);
            br.to = static_cast<int>(j);
            for (std::size_t c = 0; c < kEdgeChannels; ++c) {
                double e_norm = 0.5 * (arr.e[(i * n + j) * kEdgeChannels + c] +
                                       arr.e[(j * n + i) * kEdgeChannels + c]);
                double raw = (e_norm - 0.5) / p.sigma_e[c] + p.mu_e[c];
                if (c == 0) br.r = std::max(0.0, raw);
                if (c == 1) br.x = std::max(1e-4, raw);
                if (c == 2) br.s_max = std::max(1e-3, raw);
            }
            g.branches.push_back(br);
        }
    }

    g.loads.dt_hours = 1.0;
    g.loads.pd.assign(n, std::vector<double>(T, 0.0));
    g.loads.qd.assign(n, std::vector<double>(T, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        if (types[i] != BusType::Load) continue;  // demand lives at load buses only
        for (std::size_t t = 0; t < T; ++t) {
            g.loads.pd[i][t] = arr.d[(i * T + t) * kLoadChannels + 0] / p.sigma_p;
            g.loads.qd[i][t] = arr.d[(i * T + t) * kLoadChannels + 1] / p.sigma_q;
        }
    }

    g.valid = validate_grid(g).empty();
    return g;
}

// ---- params serialization ---------------------------------------------------

inline nlohmann::json bus_template_to_json(const BusTemplate& t) {
    return nlohmann::json{{"v_min", t.v_min}, {"v_max", t.v_max}, {"p_min", t.p_min},
                          {"p_max", t.p_max}, {"q_min", t.q_min}, {"q_max", t.q_max},
                          {"cost", t.cost}};
}

inline BusTemplate bus_template_from_json(const nlohmann::json& j) {
    BusTemplate t;
    t.v_min = j.at("v_min").get<double>();
    t.v_max = j.at("v_max").get<double>();
    t.p_min = j.at("p_min").get<double>();
    t.p_max = j.at("p_max").get<double>();
    t.q_min = j.at("q_min").get<double>();
    t.q_max = j.at("q_max").get<double>();
    t.cost = j.at("cost").get<double>();
    return t;
}

inline nlohmann::json normalization_to_json(const NormalizationParams& p) {
    nlohmann::json j;
    j["w_a"] = p.w_a;
    j["b_a"] = p.b_a;
    j["w_x"] = p.w_x;
    j["b_x"] = p.b_x;
    j["mu_e"] = p.mu_e;
    j["sigma_e"] = p.sigma_e;
    j["sigma_p"] = p.sigma_p;
    j["sigma_q"] = p.sigma_q;
    j["base_mva"] = p.base_mva;
    std::vector<std::string> types;
    for (auto t : p.reference_types) types.emplace_back(bus_type_name(t));
    j["reference_types"] = types;
    nlohmann::json buses = nlohmann::json::array();
    for (const auto& t : p.reference_buses) buses.push_back(bus_template_to_json(t));
    j["reference_buses"] = std::move(buses);
    j["generator_template"] = bus_template_to_json(p.generator_template);
    j["slack_template"] = bus_template_to_json(p.slack_template);
    j["load_template"] = bus_template_to_json(p.load_template);
    return j;
}

inline NormalizationParams normalization_from_json(const nlohmann::json& j) {
    NormalizationParams p;
    p.w_a = j.at("w_a").get<double>();
    p.b_a = j.at("b_a").get<double>();
    p.w_x = j.at("w_x").get<double>();
    p.b_x = j.at("b_x").get<double>();
    p.mu_e = j.at("mu_e").get<std::array<double, kEdgeChannels>>();
    p.sigma_e = j.at("sigma_e").get<std::array<double, kEdgeChannels>>();
    p.sigma_p = j.at("sigma_p").get<double>();
    p.sigma_q = j.at("sigma_q").get<double>();
    p.base_mva = j.at("base_mva").get<double>();
    for (const auto& s : j.at("reference_types"))
        p.reference_types.push_back(bus_type_from_name(s.get<std::string>()));
    for (const auto& jb : j.at("reference_buses"))
        p.reference_buses.push_back(bus_template_from_json(jb));
    p.generator_template = bus_template_from_json(j.at("generator_template"));
    p.slack_template = bus_template_from_json(j.at("slack_template"));
    p.load_template = bus_template_from_json(j.at("load_template"));
    return p;
}

}  // namespace powergrow
