// Command-line driver: solve, extract, check, simulate, evaluate, filter-demo, all.

#include "esopt/barriers.hpp"
#include "esopt/config.hpp"
#include "esopt/evaluate.hpp"
#include "esopt/filter.hpp"
#include "esopt/hjb.hpp"
#include "esopt/io.hpp"
#include "esopt/parallel.hpp"
#include "esopt/storage_system.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace esopt;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kSolver = 3, kAdmissibility = 4 };

struct Flags {
    std::string config, preset = "paper2016", out, from, name, scheme;
    std::uint64_t seed = 2016;
    unsigned threads = 0;
    std::size_t paths = 0;
    bool antithetic = false;
};

/// Output directory plus the list of files written into it (for the manifest).
struct RunDir {
    fs::path dir;
    std::vector<std::string> files;

    std::ofstream open(const std::string& file) {
        files.push_back(file);
        std::ofstream os(dir / file);
        if (!os) throw std::runtime_error("cannot write " + (dir / file).string());
        return os;
    }
    void write_json(const std::string& file, const json& j) { open(file) << j.dump(2) << '\n'; }
};

RunDir make_run_dir(const fs::path& base, const std::string& subcommand, const std::string& name) {
    std::string stem = name;
    if (stem.empty()) {
        const std::time_t now = std::time(nullptr);
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", std::localtime(&now));
        stem = subcommand + "_" + buf;
    }
    fs::path dir = base / stem;
    for (int i = 1; name.empty() && fs::exists(dir); ++i) dir = base / (stem + "-" + std::to_string(i));
    fs::create_directories(dir);
    return {dir, {}};
}

RunConfig resolve_config(const Flags& f) {
    RunConfig cfg = f.config.empty() ? default_config(f.preset) : load_config(f.config);
    if (!f.out.empty()) cfg.out_dir = f.out;
    if (f.paths) cfg.simulation.n_paths = f.paths;
    if (f.antithetic) cfg.simulation.antithetic = true;
    if (f.scheme == "plain") cfg.simulation.scheme = Scheme::Plain;
    else if (f.scheme == "transformed") cfg.simulation.scheme = Scheme::Transformed;
    else if (!f.scheme.empty()) throw ConfigError("--scheme", "expected 'plain' or 'transformed'");
    validate(cfg);
    return cfg;
}

SolveResult obtain_solution(const RunConfig& cfg, const Flags& f) {
    if (!f.from.empty()) {
        SolveResult r = read_solution_binary(fs::path(f.from) / "solution.bin");
        const Grid4D& g = r.value.grid;
        if (g.s.n != cfg.grid.s.n || g.q.n != cfg.grid.q.n || g.nu.n != cfg.grid.nu.n || g.t.n != cfg.grid.t.n ||
            g.s.lo != cfg.grid.s.lo || g.s.hi != cfg.grid.s.hi)
            throw ConfigError("--from", "stored solution grid differs from the configured grid");
        return r;
    }
    return backward_solve(cfg.model, cfg.grid, cfg.solver);
}

int nearest(const Axis& a, double x) {
    const auto [i, w] = a.locate(x);
    return w < 0.5 ? i : i + 1;
}

// ---- stages ---------------------------------------------------------------

void stage_solve(const RunConfig& cfg, const SolveResult& sol, RunDir& run) {
    {
        auto os = run.open("value_policy.csv");
        write_solution_csv(os, sol.value, sol.policy, cfg.model, cfg.simulation.csv_time_stride);
    }
    write_solution_binary(run.dir / "solution.bin", sol.value, sol.policy);
    run.files.push_back("solution.bin");
    const BarrierField b = extract_barriers(sol.policy);
    const int iq = nearest(b.q, 50.0), iv = nearest(b.nu, 0.5);
    const std::size_t k = b.index(iq, iv, 0);
    run.write_json("solve_summary.json",
                   {{"steps", sol.diagnostics.steps},
                    {"max_policy_iterations_used", sol.diagnostics.max_policy_iterations_used},
                    {"threshold_probe", {{"q", b.q.node(iq)}, {"nu1", b.nu.node(iv)}, {"t", 0.0}}},
                    {"buy_level", b.buy_level[k]},
                    {"sell_level", b.sell_level[k]},
                    {"s_spacing", b.s_spacing}});
    std::cout << "solve: buy/wait level " << b.buy_level[k] << ", wait/sell level " << b.sell_level[k]
              << " at q=" << b.q.node(iq) << " nu1=" << b.nu.node(iv) << " t=0\n";
}

BarrierField stage_extract(const SolveResult& sol, RunDir& run) {
    BarrierField b = extract_barriers(sol.policy);
    smooth_barriers(b);
    {
        auto os = run.open("barriers.csv");
        write_barriers_csv(os, b);
    }
    run.open("barriers.json") << barriers_json(b) << '\n';
    const double consistency = region_consistency(sol.policy, b);
    run.write_json("extract_report.json", {{"flagged_nodes", b.flagged()},
                                           {"buy_max_deviation", b.buy_smooth->max_deviation},
                                           {"sell_max_deviation", b.sell_smooth->max_deviation},
                                           {"buy_max_deviation_t_le_0.95T", b.buy_smooth->max_deviation_early},
                                           {"sell_max_deviation_t_le_0.95T", b.sell_smooth->max_deviation_early},
                                           {"region_consistency", consistency}});
    std::cout << "extract: max fit deviation buy " << b.buy_smooth->max_deviation << ", sell "
              << b.sell_smooth->max_deviation << "; region consistency " << consistency << '\n';
    return b;
}

/// Returns false when an admissibility margin is nonpositive.
bool stage_check(const RunConfig& cfg, const SolveResult& sol, const BarrierField& b, RunDir& run) {
    const MixedDerivativeReport m = check_mixed_derivative(sol.value);
    const NonParallelityReport n = check_nonparallelity(b, cfg.model, 0.0);
    {
        auto os = run.open("nonparallelity_failing.csv");
        write_nonparallelity_csv(os, n, b);
    }
    const auto& g = sol.value.grid;
    run.write_json("check_report.json",
                   {{"mixed_derivative",
                     {{"min_margin", m.min_margin},
                      {"terminal_min_margin", m.terminal_min_margin},
                      {"max_abs_vsq", m.max_abs_vsq},
                      {"argmin", {{"s", g.s.node(m.arg_is)}, {"q", g.q.node(m.arg_iq)},
                                  {"nu1", g.nu.node(m.arg_iv)}, {"t", g.t.node(m.arg_it)}}}}},
                    {"nonparallelity",
                     {{"min_margin", n.min_margin},
                      {"min_buy_margin", n.min_buy_margin},
                      {"min_sell_margin", n.min_sell_margin},
                      {"nodes_checked", n.nodes_checked},
                      {"failing_nodes", n.failing.size()},
                      {"used_smooth_barriers", n.used_smooth},
                      {"worst",
                       {{"q", b.q.node(n.worst.iq)},
                        {"nu1", b.nu.node(n.worst.iv)},
                        {"t", b.t.node(n.worst.it)},
                        {"side", n.worst.sell_side ? "sell" : "buy"}}}}},
                    {"forbidden_slope_at_nu_half", forbidden_slope(0.5, cfg.model)}});
    std::cout << "check: min |V_sq - 1| = " << m.min_margin << ", min non-parallelity margin = " << n.min_margin
              << '\n';
    return m.min_margin > 0.0 && n.min_margin > 0.0;
}

void stage_simulate(const RunConfig& cfg, const StorageSystem& sys, std::uint64_t seed, RunDir& run) {
    SimulationOptions sim;
    sim.dt = cfg.simulation.dt;
    sim.scheme = cfg.simulation.scheme;
    sim.record = true;
    const SystemState start = cfg.simulation.starts.empty() ? SystemState{} : cfg.simulation.starts.front();
    json summary = json::array();
    for (std::size_t i = 0; i < cfg.simulation.dump_paths; ++i) {
        const PathResult r = simulate_controlled_path(sys, start, stream_seed(seed, 0x51u + i), sim);
        const std::string file = "path_" + std::to_string(i + 1) + ".csv";
        auto os = run.open(file);
        write_path_csv(os, *r.path);
        summary.push_back({{"file", file}, {"discounted_reward", r.reward},
                           {"substep_warnings", r.stats.substep_warnings},
                        {"fallback_steps", r.stats.fallback_steps}});
    }
    run.write_json("simulate_summary.json", {{"scheme", to_string(sim.scheme)}, {"paths", summary}});
    std::cout << "simulate: wrote " << cfg.simulation.dump_paths << " controlled paths\n";
}

void stage_evaluate(const RunConfig& cfg, const StorageSystem& sys, const SolveResult& sol, std::uint64_t seed,
                    RunDir& run) {
    EvaluationOptions eo;
    eo.n_paths = cfg.simulation.n_paths;
    eo.seed = stream_seed(seed, 0xe7);
    eo.antithetic = cfg.simulation.antithetic;
    eo.sim.dt = cfg.simulation.dt;
    eo.sim.scheme = cfg.simulation.scheme;
    const EvaluationReport rep = estimate_J(sys, cfg.simulation.starts, eo, &sol.value);
    {
        auto os = run.open("evaluation.csv");
        write_evaluation_csv(os, rep);
    }
    json rows = json::array();
    for (const auto& r : rep.starts) {
        rows.push_back({{"s", r.start.s}, {"q", r.start.q}, {"nu1", r.start.pi1}, {"t", r.start.t},
                        {"mean_J", r.mean}, {"std_error", r.std_error}, {"paths", r.paths},
                        {"grid_V", r.grid_value}, {"discrepancy", r.discrepancy},
                        {"substep_warnings", r.stats.substep_warnings},
                        {"fallback_steps", r.stats.fallback_steps}});
        std::cout << "evaluate: start (" << r.start.s << ", " << r.start.q << ", " << r.start.pi1 << ", " << r.start.t
                  << ") J = " << r.mean << " +- " << r.std_error << ", grid V = " << r.grid_value << '\n';
    }
    run.write_json("evaluation.json", {{"scheme", rep.scheme}, {"dt", rep.dt}, {"antithetic", rep.antithetic},
                                       {"starts", rows}});
}

void stage_filter_demo(const RunConfig& cfg, std::uint64_t seed, RunDir& run) {
    const auto& s = cfg.simulation;
    const int stride = std::max(1, static_cast<int>(std::llround(0.01 / s.filter_dt)));
    for (std::size_t i = 0; i < s.filter_paths; ++i) {
        TruthOptions to;
        to.record_stride = stride;
        const FilterPath path =
            simulate_truth_and_filter(cfg.model, s.filter_horizon, s.filter_dt, stream_seed(seed, 0xf1u + i), to);
        auto os = run.open("filter_path_" + std::to_string(i + 1) + ".csv");
        write_filter_csv(os, path);
    }
    std::cout << "filter-demo: wrote " << s.filter_paths << " truth-mode filter paths\n";
}

int run_subcommand(const std::string& sub, const Flags& f) {
    const RunConfig cfg = resolve_config(f);
    if (f.threads) thread_cap() = f.threads;
    RunDir run = make_run_dir(cfg.out_dir, sub, f.name);
    std::cout << "output: " << run.dir.string() << '\n';

    const auto finish = [&](int code) {
        write_manifest(run.dir, sub, f.seed, to_json(cfg), run.files);
        return code;
    };
    if (sub == "filter-demo") {
        stage_filter_demo(cfg, f.seed, run);
        return finish(kOk);
    }

    SolveResult sol;
    try {
        sol = obtain_solution(cfg, f);
    } catch (const SolverError& e) {
        run.open("solver_error.txt") << e.what() << '\n' << e.diagnostics() << '\n';
        std::cerr << "solver failure: " << e.what() << '\n';
        return finish(kSolver);
    }
    if (sub == "solve") {
        stage_solve(cfg, sol, run);
        return finish(kOk);
    }
    if (sub == "all") stage_solve(cfg, sol, run);

    const BarrierField b = stage_extract(sol, run);
    if (sub == "extract") return finish(kOk);

    const bool admissible = stage_check(cfg, sol, b, run);
    if (sub == "check") return finish(admissible ? kOk : kAdmissibility);
    if (sub == "all" && !admissible) {
        std::cerr << "all: admissibility check reported a nonpositive margin; stopping\n";
        return finish(kAdmissibility);
    }

    const StorageSystem sys = storage_system_spec(cfg.model, b);
    if (sub == "simulate" || sub == "all") stage_simulate(cfg, sys, f.seed, run);
    if (sub == "evaluate" || sub == "all") stage_evaluate(cfg, sys, sol, f.seed, run);
    if (sub == "all") stage_filter_demo(cfg, f.seed, run);
    return finish(kOk);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Energy storage valuation under partial information"};
    app.require_subcommand(1);
    Flags f;
    app.add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--preset", f.preset, "embedded parameter preset (used without --config)");
    app.add_option("--seed", f.seed, "master seed for all randomness");
    app.add_option("--threads", f.threads, "worker cap (0 = hardware concurrency)");
    app.add_option("--out", f.out, "base directory for run outputs");
    app.add_option("--name", f.name, "fixed run directory name instead of <subcommand>_<timestamp>");
    app.add_option("--from", f.from, "directory of an earlier solve (reuses solution.bin)");
    app.add_option("--paths", f.paths, "override simulation.n_paths");
    app.add_option("--scheme", f.scheme, "override simulation.scheme (plain | transformed)");
    app.add_flag("--antithetic", f.antithetic, "antithetic pairing in evaluate");

    const std::vector<std::pair<std::string, std::string>> subs{
        {"solve", "HJB backward solve; value/policy CSV and binary dump"},
        {"extract", "switching barriers, smoothing and fit report"},
        {"check", "mixed-derivative and non-parallelity reports"},
        {"simulate", "controlled storage paths under the smoothed barriers"},
        {"evaluate", "Monte-Carlo J against the grid value"},
        {"filter-demo", "truth-mode price/regime/filter paths"},
        {"all", "full pipeline; stops on a nonpositive admissibility margin"}};
    std::string chosen;
    for (const auto& [name, help] : subs)
        app.add_subcommand(name, help)->fallthrough()->callback([&chosen, n = name] { chosen = n; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    try {
        return run_subcommand(chosen, f);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
}
