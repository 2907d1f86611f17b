#pragma once

// Shared in-code grid fixtures for the test suites.

#include <vector>

#include "powergrow/grid.hpp"

namespace fixtures {

using powergrow::Branch;
using powergrow::Bus;
using powergrow::BusType;
using powergrow::Grid;

inline void fill_constant_loads(Grid& g, const std::vector<double>& pd,
                                const std::vector<double>& qd, std::size_t horizon = 24) {
    const std::size_t n = g.n_buses();
    g.loads.dt_hours = 1.0;
    g.loads.pd.assign(n, std::vector<double>(horizon, 0.0));
    g.loads.qd.assign(n, std::vector<double>(horizon, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        if (g.buses[i].type != BusType::Load) continue;
        for (std::size_t t = 0; t < horizon; ++t) {
            g.loads.pd[i][t] = pd[i];
            g.loads.qd[i][t] = qd[i];
        }
    }
}

inline Bus make_slack(int id, double p_max = 300.0, double cost = 20.0) {
    Bus b;
    b.id = id;
    b.type = BusType::Slack;
    b.p_min = 0.0;
    b.p_max = p_max;
    b.q_min = -300.0;
    b.q_max = 300.0;
    b.cost = cost;
    return b;
}

inline Bus make_generator(int id, double p_max = 100.0, double cost = 30.0) {
    Bus b;
    b.id = id;
    b.type = BusType::Generator;
    b.p_min = 0.0;
    b.p_max = p_max;
    b.q_min = -150.0;
    b.q_max = 150.0;
    b.cost = cost;
    return b;
}

inline Bus make_load(int id) {
    Bus b;
    b.id = id;
    b.type = BusType::Load;
    return b;
}

// Slack + PV generator + PQ load on a triangle; the golden power-flow case.
inline Grid three_bus_triangle() {
    Grid g;
    g.buses = {make_slack(0, 200.0, 20.0), make_generator(1, 100.0, 35.0), make_load(2)};
    g.branches = {{0, 1, 0.02, 0.06, 150.0}, {0, 2, 0.08, 0.24, 120.0}, {1, 2, 0.06, 0.18, 120.0}};
    fill_constant_loads(g, {0.0, 0.0, 50.0}, {0.0, 0.0, 20.0});
    return g;
}

// Two buses joined by one line, no demand: flat start is already the answer.
inline Grid two_bus_idle() {
    Grid g;
    g.buses = {make_slack(0), make_load(1)};
    g.branches = {{0, 1, 0.01, 0.05, 100.0}};
    fill_constant_loads(g, {0.0, 0.0}, {0.0, 0.0});
    return g;
}

// Center slack feeding four loaded leaves; every line outage islands a load.
inline Grid loaded_star() {
    Grid g;
    g.buses = {make_slack(0)};
    for (int i = 1; i <= 4; ++i) g.buses.push_back(make_load(i));
    for (int i = 1; i <= 4; ++i) g.branches.push_back({0, i, 0.02, 0.08, 80.0});
    fill_constant_loads(g, {0.0, 20.0, 25.0, 15.0, 30.0}, {0.0, 8.0, 10.0, 6.0, 12.0});
    return g;
}

// Radial chain for the DC-OPF congestion case: cheap generator at bus 1 sits
// behind a 10 MVA line into the load bus 2; the expensive slack at bus 0
// connects to bus 2 over a large line.
inline Grid congestion_chain() {
    Grid g;
    g.buses = {make_slack(0, 200.0, 50.0), make_generator(1, 100.0, 10.0), make_load(2)};
    g.branches = {{0, 2, 0.01, 0.05, 500.0}, {1, 2, 0.01, 0.05, 10.0}};
    fill_constant_loads(g, {0.0, 0.0, 50.0}, {0.0, 0.0, 15.0});
    return g;
}

}  // namespace fixtures
