#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "powergrow/grid.hpp"
#include "powergrow/normalize.hpp"
#include "powergrow/rng.hpp"

using namespace powergrow;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("grid save/load round trip is structurally lossless") {
    Grid g = fixtures::three_bus_triangle();
    const std::string path = temp_path("pg_roundtrip.json");
    save_grid(g, path);
    Grid h = load_grid(path);
    REQUIRE(h.n_buses() == g.n_buses());
    REQUIRE(h.n_branches() == g.n_branches());
    for (std::size_t i = 0; i < g.n_buses(); ++i) {
        CHECK(h.buses[i].type == g.buses[i].type);
        CHECK(h.buses[i].v_min == g.buses[i].v_min);
        CHECK(h.buses[i].p_max == g.buses[i].p_max);
        CHECK(h.buses[i].cost == g.buses[i].cost);
    }
    for (std::size_t b = 0; b < g.n_branches(); ++b) {
        CHECK(h.branches[b].r == g.branches[b].r);
        CHECK(h.branches[b].x == g.branches[b].x);
        CHECK(h.branches[b].s_max == g.branches[b].s_max);
    }
    CHECK(h.loads.pd == g.loads.pd);
    CHECK(h.loads.qd == g.loads.qd);
    std::remove(path.c_str());
}

TEST_CASE("re-saving a loaded grid is byte-stable") {
    Grid g = fixtures::three_bus_triangle();
    const std::string p1 = temp_path("pg_stable1.json");
    const std::string p2 = temp_path("pg_stable2.json");
    save_grid(g, p1);
    save_grid(load_grid(p1), p2);
    CHECK(slurp(p1) == slurp(p2));
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("missing required fields raise parse errors naming the field") {
    const std::string path = temp_path("pg_broken.json");
    {
        std::ofstream out(path);
        out << "{\"base_mva\": 100.0, \"branches\": [], \"loads\": {\"dt_hours\":1.0,\"pd\":[],\"qd\":[]}}";
    }
    CHECK_THROWS_WITH(load_grid(path), Catch::Matchers::ContainsSubstring("buses"));
    {
        std::ofstream out(path);
        out << "{ this is not json";
    }
    CHECK_THROWS_AS(load_grid(path), DataError);
    std::remove(path.c_str());
}

TEST_CASE("bundled reference grids parse and validate") {
    Grid g14 = load_grid(std::string(POWERGROW_DATA_DIR) + "/grid14.json");
    CHECK(g14.n_buses() <= 20);
    CHECK(is_connected(g14));
    Grid g36 = load_grid(std::string(POWERGROW_DATA_DIR) + "/grid36.json");
    CHECK(g36.n_buses() == 36);
    CHECK(is_connected(g36));
}

TEST_CASE("validation rejects structural problems") {
    Grid g = fixtures::three_bus_triangle();
    g.branches.push_back({0, 1, 0.01, 0.01, 10.0});  // duplicate pair
    CHECK_FALSE(validate_grid(g).empty());

    Grid h = fixtures::three_bus_triangle();
    h.buses[0].type = BusType::Generator;  // no slack left
    CHECK_FALSE(validate_grid(h).empty());

    Grid island = fixtures::three_bus_triangle();
    island.branches = {{0, 1, 0.02, 0.06, 150.0}};
    CHECK_FALSE(validate_grid(island).empty());
}

TEST_CASE("diffusion-space round trip reproduces the grid") {
    Grid g = fixtures::three_bus_triangle();
    NormalizationParams p = fit_normalization({g});
    DiffusionArrays arr = to_diffusion_space(g, p);

    // two-level adjacency encoding
    CHECK(arr.a[0 * 3 + 1] == Catch::Approx(0.9));
    CHECK(arr.a[1 * 3 + 0] == Catch::Approx(0.9));
    CHECK(arr.a[0 * 3 + 0] == Catch::Approx(0.1));

    Grid h = from_diffusion_space(arr, p);
    REQUIRE(h.valid);
    REQUIRE(h.n_buses() == g.n_buses());
    REQUIRE(h.n_branches() == g.n_branches());
    for (std::size_t i = 0; i < g.n_buses(); ++i) CHECK(h.buses[i].type == g.buses[i].type);
    for (std::size_t b = 0; b < g.n_branches(); ++b) {
        CHECK(h.branches[b].from == g.branches[b].from);
        CHECK(h.branches[b].to == g.branches[b].to);
        CHECK(h.branches[b].r == Catch::Approx(g.branches[b].r).margin(1e-9));
        CHECK(h.branches[b].x == Catch::Approx(g.branches[b].x).margin(1e-9));
        CHECK(h.branches[b].s_max == Catch::Approx(g.branches[b].s_max).margin(1e-9));
    }
    for (std::size_t i = 0; i < g.n_buses(); ++i)
        for (std::size_t t = 0; t < g.loads.horizon(); ++t) {
            CHECK(h.loads.pd[i][t] == Catch::Approx(g.loads.pd[i][t]).margin(1e-9));
            CHECK(h.loads.qd[i][t] == Catch::Approx(g.loads.qd[i][t]).margin(1e-9));
        }
    // per-bus attributes come back from the corpus table
    CHECK(h.buses[0].p_max == g.buses[0].p_max);
    CHECK(h.buses[1].cost == g.buses[1].cost);
}

TEST_CASE("branch attribute at the corpus mean maps to 0.5") {
    Grid g = fixtures::three_bus_triangle();
    NormalizationParams p = fit_normalization({g});
    Grid h = g;
    h.branches[0].r = p.mu_e[0];
    DiffusionArrays arr = to_diffusion_space(h, p);
    CHECK(arr.e[(0 * 3 + 1) * kEdgeChannels + 0] == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("adjacency threshold midpoint decodes as edge-present") {
    Grid g = fixtures::three_bus_triangle();
    NormalizationParams p = fit_normalization({g});
    DiffusionArrays arr = to_diffusion_space(g, p);
    const std::size_t n = arr.n;
    // force one absent pair exactly to the midpoint 0.5*(2*b_a + w_a)
    const double mid = p.b_a + 0.5 * p.w_a;
    arr.a[0 * n + 1] = mid;
    arr.a[1 * n + 0] = mid;
    Grid h = from_diffusion_space(arr, p);
    bool found = false;
    for (const auto& br : h.branches)
        if ((br.from == 0 && br.to == 1) || (br.from == 1 && br.to == 0)) found = true;
    CHECK(found);
}

TEST_CASE("random noise arrays decode to a flagged grid") {
    Grid g = fixtures::three_bus_triangle();
    NormalizationParams p = fit_normalization({g});
    RandomSource rng(99, 0);
    const std::size_t n = 6, T = 24;
    DiffusionArrays arr;
    arr.n = n;
    arr.horizon = T;
    arr.a.resize(n * n);
    arr.x.resize(n * kNodeChannels);
    arr.e.resize(n * n * kEdgeChannels);
    arr.d.resize(n * T * kLoadChannels);
    int connected_count = 0, flagged_count = 0;
    for (int trial = 0; trial < 40; ++trial) {
        for (auto& v : arr.a) v = rng.uniform();
        for (auto& v : arr.x) v = rng.uniform();
        for (auto& v : arr.e) v = rng.uniform();
        for (auto& v : arr.d) v = rng.uniform();
        Grid h = from_diffusion_space(arr, p);
        bool conn = h.n_branches() > 0 && is_connected(h);
        if (h.valid) {
            CHECK(conn);
            ++connected_count;
        } else {
            ++flagged_count;
        }
        // structural sanity: at most one slack, decoded attrs in bounds
        int slacks = 0;
        for (const auto& b : h.buses) slacks += b.type == BusType::Slack ? 1 : 0;
        CHECK(slacks == 1);
        for (const auto& br : h.branches) {
            CHECK(br.x > 0.0);
            CHECK(br.s_max > 0.0);
            CHECK(br.r >= 0.0);
        }
    }
    CHECK(connected_count + flagged_count == 40);
}

TEST_CASE("normalization keeps attribute values inside [0.05, 0.95]") {
    // jittered corpus around the bundled reference
    Grid ref = load_grid(std::string(POWERGROW_DATA_DIR) + "/grid14.json");
    RandomSource rng(7, 0);
    std::vector<Grid> corpus{ref};
    for (int k = 0; k < 20; ++k) {
        Grid g = ref;
        for (auto& br : g.branches) {
            br.r *= 1.0 + 0.05 * rng.normal();
            br.x *= std::max(0.5, 1.0 + 0.05 * rng.normal());
            if (br.r < 0.0) br.r = 0.0;
        }
        corpus.push_back(g);
    }
    NormalizationParams p = fit_normalization(corpus);
    std::size_t total = 0, inside = 0;
    double max_load = 0.0;
    for (const auto& g : corpus) {
        DiffusionArrays arr = to_diffusion_space(g, p);
        for (const auto& br : g.branches) {
            (void)br;
        }
        for (std::size_t i = 0; i < arr.n; ++i)
            for (std::size_t j = 0; j < arr.n; ++j) {
                if (arr.a[i * arr.n + j] < 0.5) continue;  // realized edges only
                for (std::size_t c = 0; c < kEdgeChannels; ++c) {
                    double v = arr.e[(i * arr.n + j) * kEdgeChannels + c];
                    ++total;
                    if (v >= 0.05 && v <= 0.95) ++inside;
                }
            }
        for (double v : arr.d) max_load = std::max(max_load, v);
    }
    CHECK(static_cast<double>(inside) >= 0.99 * static_cast<double>(total));
    CHECK(max_load >= 0.9);
}
