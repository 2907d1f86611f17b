#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include "powergrow/grid.hpp"
#include "powergrow/linalg.hpp"
#include "powergrow/util.hpp"

namespace powergrow {

using Complex = std::complex<double>;

struct DemandSnapshot {
    std::vector<double> pd;  // MW per bus
    std::vector<double> qd;  // MVAr per bus
};

inline DemandSnapshot snapshot_at(const Grid& g, std::size_t hour) {
    const std::size_t t = g.loads.horizon();
    if (hour >= t) throw UsageError("snapshot_at: hour out of range");
    DemandSnapshot s;
    s.pd.reserve(g.n_buses());
    s.qd.reserve(g.n_buses());
    for (std::size_t i = 0; i < g.n_buses(); ++i) {
        s.pd.push_back(g.loads.pd[i][hour]);
        s.qd.push_back(g.loads.qd[i][hour]);
    }
    return s;
}

inline std::size_t peak_hour(const Grid& g) {
    const std::size_t t = g.loads.horizon();
    std::size_t best = 0;
    double best_total = -1.0;
    for (std::size_t h = 0; h < t; ++h) {
        double total = 0.0;
        for (std::size_t i = 0; i < g.n_buses(); ++i) total += g.loads.pd[i][h];
        if (total > best_total) {
            best_total = total;
            best = h;
        }
    }
    return best;
}

struct PowerFlowSolution {
    bool converged = false;
    std::vector<double> v_mag;          // per-unit
    std::vector<double> v_ang;          // radians, slack pinned at 0
    std::vector<Complex> s_from, s_to;  // MVA per branch
    std::vector<double> p_gen, q_gen;   // MW / MVAr per bus (0 at load buses)
    int iterations = 0;
    double mismatch_norm = std::numeric_limits<double>::infinity();
    std::string diagnostic;
};

struct ViolationVector {
    std::vector<double> v_voltage;  // per bus, per-unit
    std::vector<double> v_branch;   // per branch, MVA
    std::vector<double> v_pgen;     // per generator bus, MW
    std::vector<double> v_qgen;     // per generator bus, MVAr

    double l1() const {
        double s = 0.0;
        for (double v : v_voltage) s += v;
        for (double v : v_branch) s += v;
        for (double v : v_pgen) s += v;
        for (double v : v_qgen) s += v;
        return s;
    }
};

// Bus admittance matrix: off-diagonal -1/(r+jx) per branch, diagonals the
// negated off-diagonal row sums (no shunt elements modeled).
inline std::vector<Complex> build_ybus(const Grid& g) {
    const std::size_t n = g.n_buses();
    std::vector<Complex> y(n * n, Complex(0.0, 0.0));
    for (const auto& br : g.branches) {
        if (br.r == 0.0 && br.x == 0.0)
            throw NumericalError("build_ybus: zero-impedance branch " + std::to_string(br.from) +
                                 "-" + std::to_string(br.to));
        Complex adm = 1.0 / Complex(br.r, br.x);
        auto i = static_cast<std::size_t>(br.from);
        auto j = static_cast<std::size_t>(br.to);
        y[i * n + j] -= adm;
        y[j * n + i] -= adm;
        y[i * n + i] += adm;
        y[j * n + j] += adm;
    }
    return y;
}

// Active-power dispatch for one snapshot: demand shared over generators in
// proportion to p_max (clamped to box limits); the slack bus absorbs the
// residual plus losses when the system solves.
inline std::vector<double> dispatch_active(const Grid& g, double total_pd_mw) {
    std::vector<double> p(g.n_buses(), 0.0);
    double cap = 0.0;
    for (const auto& b : g.buses)
        if (b.is_generator()) cap += b.p_max;
    if (cap <= 0.0) return p;
    for (std::size_t i = 0; i < g.n_buses(); ++i) {
        const Bus& b = g.buses[i];
        if (!b.is_generator() || b.type == BusType::Slack) continue;
        double share = total_pd_mw * b.p_max / cap;
        p[i] = std::clamp(share, b.p_min, b.p_max);
    }
    return p;
}

namespace pfdetail {

constexpr double kTol = 1e-8;
constexpr int kMaxIter = 30;
constexpr double kSetpoint = 1.0;  // PV-bus voltage target, per-unit

enum class Kind { Slack, Pv, Pq };

}  // namespace pfdetail

// Newton-Raphson AC power flow on polar mismatch equations. Flat start,
// tolerance 1e-8 pu on the largest |dP, dQ|, hard cap 30 iterations. PV buses
// hold 1.0 pu until a reactive limit binds, then switch to PQ at the limit.
// Non-convergence (including islanding and a singular Jacobian) is reported
// through the converged flag, never thrown.
inline PowerFlowSolution solve_ac_power_flow(const Grid& g, const DemandSnapshot& dem) {
    using pfdetail::Kind;
    const std::size_t n = g.n_buses();
    PowerFlowSolution sol;
    sol.v_mag.assign(n, 1.0);
    sol.v_ang.assign(n, 0.0);
    sol.p_gen.assign(n, 0.0);
    sol.q_gen.assign(n, 0.0);

    if (dem.pd.size() != n || dem.qd.size() != n)
        throw UsageError("solve_ac_power_flow: snapshot size mismatch");
    if (g.slack_index() < 0) throw UsageError("solve_ac_power_flow: grid has no slack bus");
    if (!is_connected(g)) {
        sol.diagnostic = "islanded grid";
        return sol;
    }

    const double base = g.base_mva;
    const auto slack = static_cast<std::size_t>(g.slack_index());
    std::vector<Complex> y = build_ybus(g);

    double total_pd = 0.0;
    for (double v : dem.pd) total_pd += v;
    std::vector<double> p_dispatch = dispatch_active(g, total_pd);

    std::vector<Kind> kind(n, Kind::Pq);
    std::vector<double> p_spec(n, 0.0), q_spec(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (i == slack) {
            kind[i] = Kind::Slack;
            sol.v_mag[i] = pfdetail::kSetpoint;
        } else if (g.buses[i].type == BusType::Generator) {
            kind[i] = Kind::Pv;
            sol.v_mag[i] = pfdetail::kSetpoint;
        }
        p_spec[i] = (p_dispatch[i] - dem.pd[i]) / base;
        q_spec[i] = -dem.qd[i] / base;
    }

    auto calc_power = [&](std::size_t i) {
        Complex acc(0.0, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            Complex vj = std::polar(sol.v_mag[j], sol.v_ang[j]);
            acc += y[i * n + j] * vj;
        }
        Complex vi = std::polar(sol.v_mag[i], sol.v_ang[i]);
        return vi * std::conj(acc);  // complex injection, pu
    };

    for (int iter = 0; iter < pfdetail::kMaxIter; ++iter) {
        // PV -> PQ switching on reactive limits (frozen late to avoid cycling)
        if (iter < 20) {
            for (std::size_t i = 0; i < n; ++i) {
                const Bus& b = g.buses[i];
                if (i == slack || b.type != BusType::Generator) continue;
                double q_inj = calc_power(i).imag();
                double q_gen_mvar = q_inj * base + dem.qd[i];
                if (kind[i] == Kind::Pv) {
                    if (q_gen_mvar > b.q_max) {
                        kind[i] = Kind::Pq;
                        q_spec[i] = (b.q_max - dem.qd[i]) / base;
                    } else if (q_gen_mvar < b.q_min) {
                        kind[i] = Kind::Pq;
                        q_spec[i] = (b.q_min - dem.qd[i]) / base;
                    }
                } else if (kind[i] == Kind::Pq) {
                    // revert when the voltage swings back across the setpoint
                    bool at_max = q_spec[i] * base + dem.qd[i] >= b.q_max - 1e-9;
                    if ((at_max && sol.v_mag[i] > pfdetail::kSetpoint) ||
                        (!at_max && sol.v_mag[i] < pfdetail::kSetpoint)) {
                        kind[i] = Kind::Pv;
                        sol.v_mag[i] = pfdetail::kSetpoint;
                    }
                }
            }
        }

        std::vector<std::size_t> ang_idx, mag_idx;
        for (std::size_t i = 0; i < n; ++i) {
            if (kind[i] != Kind::Slack) ang_idx.push_back(i);
            if (kind[i] == Kind::Pq) mag_idx.push_back(i);
        }
        const std::size_t na = ang_idx.size(), nm = mag_idx.size(), dim = na + nm;

        std::vector<double> mismatch(dim, 0.0);
        std::vector<Complex> s_calc(n);
        for (std::size_t i = 0; i < n; ++i) s_calc[i] = calc_power(i);
        double worst = 0.0;
        for (std::size_t k = 0; k < na; ++k) {
            mismatch[k] = p_spec[ang_idx[k]] - s_calc[ang_idx[k]].real();
            worst = std::max(worst, std::fabs(mismatch[k]));
        }
        for (std::size_t k = 0; k < nm; ++k) {
            mismatch[na + k] = q_spec[mag_idx[k]] - s_calc[mag_idx[k]].imag();
            worst = std::max(worst, std::fabs(mismatch[na + k]));
        }
        sol.mismatch_norm = worst;
        sol.iterations = iter + 1;  // counts mismatch evaluations
        if (worst <= pfdetail::kTol) {
            sol.converged = true;
            break;
        }

        // polar Jacobian
        std::vector<double> jac(dim * dim, 0.0);
        auto y_at = [&](std::size_t i, std::size_t j) { return y[i * n + j]; };
        for (std::size_t r = 0; r < na; ++r) {
            const std::size_t i = ang_idx[r];
            const double vi = sol.v_mag[i];
            for (std::size_t c = 0; c < na; ++c) {
                const std::size_t j = ang_idx[c];
                if (i == j) {
                    jac[r * dim + c] = -s_calc[i].imag() - y_at(i, i).imag() * vi * vi;
                } else {
                    const double vj = sol.v_mag[j];
                    const double th = sol.v_ang[i] - sol.v_ang[j];
                    const Complex yij = y_at(i, j);
                    jac[r * dim + c] =
                        vi * vj * (yij.real() * std::sin(th) - yij.imag() * std::cos(th));
                }
            }
            for (std::size_t c = 0; c < nm; ++c) {
                const std::size_t j = mag_idx[c];
                if (i == j) {
                    jac[r * dim + na + c] = s_calc[i].real() / vi + y_at(i, i).real() * vi;
                } else {
                    const double th = sol.v_ang[i] - sol.v_ang[j];
                    const Complex yij = y_at(i, j);
                    jac[r * dim + na + c] =
                        vi * (yij.real() * std::cos(th) + yij.imag() * std::sin(th));
                }
            }
        }
        for (std::size_t r = 0; r < nm; ++r) {
            const std::size_t i = mag_idx[r];
            const double vi = sol.v_mag[i];
            for (std::size_t c = 0; c < na; ++c) {
                const std::size_t j = ang_idx[c];
                if (i == j) {
                    jac[(na + r) * dim + c] = s_calc[i].real() - y_at(i, i).real() * vi * vi;
                } else {
                    const double vj = sol.v_mag[j];
                    const double th = sol.v_ang[i] - sol.v_ang[j];
                    const Complex yij = y_at(i, j);
                    jac[(na + r) * dim + c] =
                        -vi * vj * (yij.real() * std::cos(th) + yij.imag() * std::sin(th));
                }
            }
            for (std::size_t c = 0; c < nm; ++c) {
                const std::size_t j = mag_idx[c];
                if (i == j) {
                    jac[(na + r) * dim + na + c] = s_calc[i].imag() / vi - y_at(i, i).imag() * vi;
                } else {
                    const double th = sol.v_ang[i] - sol.v_ang[j];
                    const Complex yij = y_at(i, j);
                    jac[(na + r) * dim + na + c] =
                        vi * (yij.real() * std::sin(th) - yij.imag() * std::cos(th));
                }
            }
        }

        std::vector<double> delta = mismatch;
        if (!lu_solve(jac, dim, delta)) {
            sol.diagnostic = "singular Jacobian at iteration " + std::to_string(iter);
            return sol;
        }
        for (std::size_t k = 0; k < na; ++k) sol.v_ang[ang_idx[k]] += delta[k];
        bool voltage_ok = true;
        for (std::size_t k = 0; k < nm; ++k) {
            sol.v_mag[mag_idx[k]] += delta[na + k];
            if (!(sol.v_mag[mag_idx[k]] > 0.05) || !(sol.v_mag[mag_idx[k]] < 3.0)) voltage_ok = false;
        }
        if (!voltage_ok) {
            sol.diagnostic = "voltage collapse at iteration " + std::to_string(iter);
            return sol;
        }
    }

    if (!sol.converged) {
        if (sol.diagnostic.empty()) sol.diagnostic = "iteration cap reached";
        return sol;
    }

    // solution bookkeeping: generator injections and branch flows
    for (std::size_t i = 0; i < n; ++i) {
        if (!g.buses[i].is_generator()) continue;
        Complex s_i(0.0, 0.0);
        for (std::size_t j = 0; j < n; ++j)
            s_i += y[i * n + j] * std::polar(sol.v_mag[j], sol.v_ang[j]);
        s_i = std::polar(sol.v_mag[i], sol.v_ang[i]) * std::conj(s_i);
        sol.p_gen[i] = s_i.real() * base + dem.pd[i];
        sol.q_gen[i] = s_i.imag() * base + dem.qd[i];
    }
    sol.s_from.resize(g.n_branches());
    sol.s_to.resize(g.n_branches());
    for (std::size_t b = 0; b < g.n_branches(); ++b) {
        const Branch& br = g.branches[b];
        Complex vi = std::polar(sol.v_mag[static_cast<std::size_t>(br.from)],
                                sol.v_ang[static_cast<std::size_t>(br.from)]);
        Complex vj = std::polar(sol.v_mag[static_cast<std::size_t>(br.to)],
                                sol.v_ang[static_cast<std::size_t>(br.to)]);
        Complex adm = 1.0 / Complex(br.r, br.x);
        Complex i_fwd = (vi - vj) * adm;
        sol.s_from[b] = vi * std::conj(i_fwd) * base;
        sol.s_to[b] = vj * std::conj(-i_fwd) * base;
    }
    return sol;
}

// Violation magnitudes of Eq-style constraint set: voltage band (pu), branch
// thermal (MVA), generator P (MW) and Q (MVAr) box limits.
inline ViolationVector violation_vector(const PowerFlowSolution& sol, const Grid& g) {
    if (!sol.converged) throw UsageError("violation_vector: solution did not converge");
    // Quantities are only resolved to the solver tolerance; smaller excesses
    // (a switched generator pinned exactly at its limit) are not violations.
    constexpr double kResolution = 1e-7;
    auto clip = [](double v) { return v < kResolution ? 0.0 : v; };
    ViolationVector v;
    const std::size_t n = g.n_buses();
    v.v_voltage.resize(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const Bus& b = g.buses[i];
        v.v_voltage[i] =
            clip(std::max(0.0, sol.v_mag[i] - b.v_max) + std::max(0.0, b.v_min - sol.v_mag[i]));
    }
    v.v_branch.resize(g.n_branches(), 0.0);
    for (std::size_t b = 0; b < g.n_branches(); ++b) {
        double flow = std::max(std::abs(sol.s_from[b]), std::abs(sol.s_to[b]));
        v.v_branch[b] = clip(std::max(0.0, flow - g.branches[b].s_max));
    }
    for (std::size_t i = 0; i < n; ++i) {
        const Bus& b = g.buses[i];
        if (!b.is_generator()) continue;
        v.v_pgen.push_back(
            clip(std::max(0.0, sol.p_gen[i] - b.p_max) + std::max(0.0, b.p_min - sol.p_gen[i])));
        v.v_qgen.push_back(
            clip(std::max(0.0, sol.q_gen[i] - b.q_max) + std::max(0.0, b.q_min - sol.q_gen[i])));
    }
    return v;
}

constexpr double kFeasibilityTau = 1e-5;

// score = exp(-tau * ||v||_1), in (0,1]
inline double score_from_violation(double l1) { return std::exp(-kFeasibilityTau * l1); }

struct FeasibilityReport {
    double score = 0.0;
    bool all_converged = false;
    std::size_t n_converged = 0;
    std::size_t n_snapshots = 0;
    double total_violation = 0.0;  // ||v||_1 summed over snapshots
};

// Runs the power flow on every hourly snapshot; any divergence zeroes the
// score, otherwise score = exp(-tau * sum of violation norms).
inline FeasibilityReport feasibility_report(const Grid& g, unsigned jobs = 1) {
    FeasibilityReport rep;
    rep.n_snapshots = g.loads.horizon();
    if (rep.n_snapshots == 0) return rep;
    std::vector<char> ok(rep.n_snapshots, 0);
    std::vector<double> viol(rep.n_snapshots, 0.0);
    parallel_for(rep.n_snapshots, jobs, [&](std::size_t h) {
        PowerFlowSolution sol = solve_ac_power_flow(g, snapshot_at(g, h));
        if (sol.converged) {
            ok[h] = 1;
            viol[h] = violation_vector(sol, g).l1();
        }
    });
    for (std::size_t h = 0; h < rep.n_snapshots; ++h) {
        if (ok[h]) {
            ++rep.n_converged;
            rep.total_violation += viol[h];
        }
    }
    rep.all_converged = rep.n_converged == rep.n_snapshots;
    rep.score = rep.all_converged ? score_from_violation(rep.total_violation) : 0.0;
    return rep;
}

inline double feasibility_score(const Grid& g, unsigned jobs = 1) {
    return feasibility_report(g, jobs).score;
}

struct ContingencyRow {
    std::size_t branch = 0;
    bool converged = false;
    double violation_l1 = 0.0;
    double score = 0.0;
};

struct ContingencyReport {
    std::vector<ContingencyRow> rows;
    double resilience_rate = 0.0;  // percent
};

// N-1 screening: drop each branch in turn; islanding counts as failure,
// otherwise the snapshot power flow decides.
inline ContingencyReport n1_contingency(const Grid& g, const DemandSnapshot& dem, unsigned jobs = 1) {
    ContingencyReport rep;
    const std::size_t nb = g.n_branches();
    rep.rows.resize(nb);
    parallel_for(nb, jobs, [&](std::size_t b) {
        ContingencyRow row;
        row.branch = b;
        if (!is_connected(g.n_buses(), g.branches, static_cast<int>(b))) {
            rep.rows[b] = row;
            return;
        }
        Grid reduced = g;
        reduced.branches.erase(reduced.branches.begin() + static_cast<std::ptrdiff_t>(b));
        PowerFlowSolution sol = solve_ac_power_flow(reduced, dem);
        row.converged = sol.converged;
        if (sol.converged) {
            row.violation_l1 = violation_vector(sol, reduced).l1();
            row.score = score_from_violation(row.violation_l1);
        }
        rep.rows[b] = row;
    });
    std::size_t ok = 0;
    for (const auto& row : rep.rows) ok += row.converged ? 1 : 0;
    rep.resilience_rate = nb == 0 ? 0.0 : 100.0 * static_cast<double>(ok) / static_cast<double>(nb);
    return rep;
}

inline double n1_resilience_rate(const Grid& g, const DemandSnapshot& dem, unsigned jobs = 1) {
    return n1_contingency(g, dem, jobs).resilience_rate;
}

inline double violation_l1_or_inf(const PowerFlowSolution& sol, const Grid& g) {
    if (!sol.converged) return std::numeric_limits<double>::infinity();
    return violation_vector(sol, g).l1();
}

struct ShedResult {
    double fraction = 0.0;
    bool truncated = false;
    int steps = 0;
};

// Scales the peak-hour snapshot by rho, then trims 5% off the currently
// highest-demand bus until the flow both converges and is violation-free.
inline ShedResult load_shed_fraction(const Grid& g, double rho, std::size_t hour) {
    if (rho < 1.0) throw UsageError("load_shed_fraction: rho must be >= 1");
    DemandSnapshot dem = snapshot_at(g, hour);
    const std::size_t n = g.n_buses();
    for (std::size_t i = 0; i < n; ++i) {
        dem.pd[i] *= rho;
        dem.qd[i] *= rho;
    }
    double total0 = 0.0;
    for (double v : dem.pd) total0 += v;
    ShedResult res;
    if (total0 <= 0.0) return res;
    constexpr int kMaxSteps = 500;
    while (true) {
        PowerFlowSolution sol = solve_ac_power_flow(g, dem);
        bool feasible = sol.converged && violation_l1_or_inf(sol, g) == 0.0;
        if (feasible) break;
        if (res.steps >= kMaxSteps) {
            res.truncated = true;
            break;
        }
        std::size_t worst = 0;
        for (std::size_t i = 1; i < n; ++i)
            if (dem.pd[i] > dem.pd[worst]) worst = i;
        if (dem.pd[worst] <= 0.0) {
            res.truncated = true;
            break;
        }
        dem.pd[worst] *= 0.95;
        dem.qd[worst] *= 0.95;
        ++res.steps;
    }
    double served = 0.0;
    for (double v : dem.pd) served += v;
    res.fraction = 1.0 - served / total0;
    return res;
}

inline ShedResult load_shed_fraction(const Grid& g, double rho) {
    return load_shed_fraction(g, rho, peak_hour(g));
}

// DC dispatch proxy: merit-order fill, then pairwise generation shifts guided
// by branch sensitivities until every line respects its rating. Returns total
// hourly cost in dollars.
inline double dc_opf_cost(const Grid& g, const DemandSnapshot& dem, int* relief_iterations = nullptr) {
    const std::size_t n = g.n_buses();
    const double base = g.base_mva;
    double demand_pu = 0.0;
    std::vector<double> inj_load(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        inj_load[i] = -dem.pd[i] / base;
        demand_pu += dem.pd[i] / base;
    }
    struct Gen {
        std::size_t bus;
        double p_min, p_max, cost, p = 0.0;
    };
    std::vector<Gen> gens;
    for (std::size_t i = 0; i < n; ++i) {
        if (!g.buses[i].is_generator()) continue;
        gens.push_back({i, g.buses[i].p_min / base, g.buses[i].p_max / base, g.buses[i].cost});
    }
    if (gens.empty()) throw UsageError("dc_opf_cost: grid has no generators");
    double cap = 0.0, floor = 0.0;
    for (const auto& gen : gens) {
        cap += gen.p_max;
        floor += gen.p_min;
    }
    if (cap + 1e-12 < demand_pu)
        throw NumericalError("dc_opf_cost: demand exceeds total generation capacity");
    // merit-order fill above the p_min floor
    for (auto& gen : gens) gen.p = gen.p_min;
    double remaining = demand_pu - floor;
    if (remaining < 0.0) remaining = 0.0;
    std::vector<std::size_t> order(gens.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (gens[a].cost != gens[b].cost) return gens[a].cost < gens[b].cost;
        return gens[a].bus < gens[b].bus;
    });
    for (std::size_t idx : order) {
        double room = gens[idx].p_max - gens[idx].p;
        double take = std::min(room, remaining);
        gens[idx].p += take;
        remaining -= take;
        if (remaining <= 1e-15) break;
    }

    // reduced susceptance system (slack row/col removed)
    const auto slack = static_cast<std::size_t>(g.slack_index());
    std::vector<std::size_t> red_index(n, SIZE_MAX);
    std::vector<std::size_t> bus_of;
    for (std::size_t i = 0; i < n; ++i) {
        if (i == slack) continue;
        red_index[i] = bus_of.size();
        bus_of.push_back(i);
    }
    const std::size_t m = bus_of.size();
    std::vector<double> bmat(m * m, 0.0);
    for (const auto& br : g.branches) {
        double suscept = 1.0 / br.x;
        auto i = static_cast<std::size_t>(br.from);
        auto j = static_cast<std::size_t>(br.to);
        if (i != slack) bmat[red_index[i] * m + red_index[i]] += suscept;
        if (j != slack) bmat[red_index[j] * m + red_index[j]] += suscept;
        if (i != slack && j != slack) {
            bmat[red_index[i] * m + red_index[j]] -= suscept;
            bmat[red_index[j] * m + red_index[i]] -= suscept;
        }
    }
    auto solve_angles = [&](const std::vector<double>& inj_pu) {
        std::vector<double> rhs(m, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            if (i != slack) rhs[red_index[i]] = inj_pu[i];
        if (!lu_solve(bmat, m, rhs)) throw NumericalError("dc_opf_cost: singular network matrix");
        std::vector<double> theta(n, 0.0);
        for (std::size_t k = 0; k < m; ++k) theta[bus_of[k]] = rhs[k];
        return theta;
    };
    auto branch_flows_pu = [&](const std::vector<double>& theta) {
        std::vector<double> f(g.n_branches());
        for (std::size_t b = 0; b < g.n_branches(); ++b) {
            const Branch& br = g.branches[b];
            f[b] = (theta[static_cast<std::size_t>(br.from)] - theta[static_cast<std::size_t>(br.to)]) / br.x;
        }
        return f;
    };
    // per-generator branch sensitivities, cached on first use
    std::vector<std::vector<double>> ptdf(gens.size());
    auto gen_ptdf = [&](std::size_t gi) -> const std::vector<double>& {
        if (ptdf[gi].empty()) {
            std::vector<double> e(n, 0.0);
            e[gens[gi].bus] = 1.0;
            ptdf[gi] = branch_flows_pu(solve_angles(e));
        }
        return ptdf[gi];
    };

    int iters = 0;
    for (; iters < 100; ++iters) {
        std::vector<double> inj = inj_load;
        for (const auto& gen : gens) inj[gen.bus] += gen.p;
        std::vector<double> flows = branch_flows_pu(solve_angles(inj));
        std::size_t worst = SIZE_MAX;
        double worst_over = 1e-9;
        for (std::size_t b = 0; b < flows.size(); ++b) {
            double over = std::fabs(flows[b]) * base - g.branches[b].s_max;
            if (over > worst_over) {
                worst_over = over;
                worst = b;
            }
        }
        if (worst == SIZE_MAX) break;
        const double sign = flows[worst] >= 0.0 ? 1.0 : -1.0;
        // shift generation from the highest- to the lowest-sensitivity unit
        std::size_t up = SIZE_MAX, down = SIZE_MAX;
        double best_down = -std::numeric_limits<double>::infinity();
        double best_up = std::numeric_limits<double>::infinity();
        for (std::size_t gi = 0; gi < gens.size(); ++gi) {
            double s = sign * gen_ptdf(gi)[worst];
            if (gens[gi].p > gens[gi].p_min + 1e-12 && s > best_down) {
                best_down = s;
                down = gi;
            }
            if (gens[gi].p < gens[gi].p_max - 1e-12 && s < best_up) {
                best_up = s;
                up = gi;
            }
        }
        if (up == SIZE_MAX || down == SIZE_MAX || best_down - best_up < 1e-9)
            throw NumericalError("dc_opf_cost: cannot relieve congestion on branch " +
                                 std::to_string(worst));
        double shift = (worst_over / base) / (best_down - best_up);
        shift = std::min(shift, gens[down].p - gens[down].p_min);
        shift = std::min(shift, gens[up].p_max - gens[up].p);
        gens[down].p -= shift;
        gens[up].p += shift;
    }
    if (relief_iterations) *relief_iterations = iters;

    double cost = 0.0;
    for (const auto& gen : gens) cost += gen.cost * gen.p * base;
    return cost;
}

}  // namespace powergrow
