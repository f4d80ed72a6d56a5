#include "doctest.h"

#include "esopt/config.hpp"
#include "esopt/io.hpp"
#include "test_support.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace esopt;
namespace fs = std::filesystem;

namespace {

std::string field_of(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "";
}

fs::path scratch_dir(const char* name) {
    const fs::path d = fs::temp_directory_path() / ("esopt_unit_" + std::string(name));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("config round trip through json") {
    RunConfig c = default_config();
    c.grid.t.n = 77;
    c.model.seasonality = Seasonality{3.0, 0.1, 1.0};
    c.simulation.scheme = Scheme::Transformed;
    c.simulation.starts = {{10.0, 20.0, 0.25, 0.5}};
    const RunConfig back = parse_config(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(back.grid.t.n == 77);
    CHECK(back.simulation.scheme == Scheme::Transformed);
    CHECK(back.model.seasonality->amplitude == 3.0);
    CHECK(back.simulation.starts[0].pi1 == 0.25);
}

TEST_CASE("config errors name the field") {
    CHECK(field_of(R"({"preset":"paper2016","model":{"kapa":1}})") == "model.kapa");
    CHECK(field_of(R"({"preset":"paper2016","grid":{"n_s":"many"}})") == "grid.n_s");
    CHECK(field_of(R"({"preset":"paper2016","simulation":{"n_paths":1}})") == "simulation.n_paths");
    CHECK(field_of(R"({"preset":"paper2016","simulation":{"scheme":"fancy"}})") == "simulation.scheme");
    CHECK(field_of(R"({"preset":"paper2016","model":{"sigma":-1}})") == "sigma");
    CHECK(field_of(R"({"preset":"paper2016","grid":{"s_min":20}})") == "s_min");
    CHECK(field_of(R"({"preset":"paper2016","extra":1})") == "extra");
    CHECK(field_of(R"({"grid":{}})") == "model");
    CHECK(field_of("{not json") == "<document>");
    CHECK(field_of(R"({"preset":"paper2016","simulation":{"starts":[{"s":1,"q":500}]}})") == "simulation.starts[].q");
}

TEST_CASE("shipped configuration equals the preset") {
    const RunConfig c = load_config(std::string(ESOPT_CONFIG_DIR) + "/paper2016.json");
    CHECK(to_json(c) == to_json(default_config()));
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("shortest round-trip doubles") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(2.0) == "2");
    CHECK(format_double(-1e-300) == "-1e-300");
    for (double x : {1.0 / 3.0, std::numbers::pi, 2054.2299999999}) CHECK(std::stod(format_double(x)) == x);
}

TEST_CASE("binary solution dump reloads exactly") {
    const auto& sol = esopt::testing::small_pipeline().solution;
    const fs::path d = scratch_dir("binary");
    write_solution_binary(d / "solution.bin", sol.value, sol.policy);
    const SolveResult back = read_solution_binary(d / "solution.bin");
    CHECK(back.value.data == sol.value.data);
    CHECK(back.policy.modes == sol.policy.modes);
    CHECK(back.value.grid.s.lo == sol.value.grid.s.lo);
    CHECK(back.value.grid.t.n == sol.value.grid.t.n);

    std::ofstream(d / "junk.bin") << "not a solution";
    CHECK_THROWS(read_solution_binary(d / "junk.bin"));
}

TEST_CASE("csv layouts") {
    const auto& sp = esopt::testing::small_pipeline();
    std::ostringstream sol;
    write_solution_csv(sol, sp.solution.value, sp.solution.policy, sp.params, 13);
    const std::string s = sol.str();
    CHECK(s.rfind("s,q,nu1,t,V,mode,rate\n", 0) == 0);
    const auto& g = sp.solution.value.grid;
    const std::size_t slices = (g.t.n - 1) / 13 + 1 + ((g.t.n - 1) % 13 != 0);
    CHECK(static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')) ==
          1 + slices * static_cast<std::size_t>(g.s.n * g.q.n * g.nu.n));

    std::ostringstream bar;
    write_barriers_csv(bar, sp.barriers);
    CHECK(bar.str().rfind("q,nu1,t,buy_level,buy_status,sell_level,sell_status,buy_smooth,sell_smooth\n", 0) == 0);

    const auto j = nlohmann::json::parse(barriers_json(sp.barriers));
    CHECK(j["buy"]["degrees"].size() == 3);
    CHECK(j["sell"]["coefficients"].size() == sp.barriers.sell_smooth->poly.terms());
}

TEST_CASE("manifest checksums the listed files") {
    const fs::path d = scratch_dir("manifest");
    std::ofstream(d / "a.txt") << "abc";
    write_manifest(d, "solve", 42, to_json(default_config()), {"a.txt"});
    std::ifstream in(d / "manifest.json");
    const auto m = nlohmann::json::parse(in);
    CHECK(m["subcommand"] == "solve");
    CHECK(m["seed"] == 42);
    CHECK(m["tool_version"] == kToolVersion);
    CHECK(m["outputs"][0]["file"] == "a.txt");
    CHECK(m["outputs"][0]["bytes"] == 3);
    // FNV-1a 64 of "abc".
    CHECK(m["outputs"][0]["fnv1a64"] == "e71fa2190541574b");
    CHECK(m["config"]["preset"] == "paper2016");
}
