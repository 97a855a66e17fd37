// Command-line front end: simulate, plan, benchmark and compare.

#include <atomic>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "tether/io.hpp"

namespace fs = std::filesystem;
using namespace tether;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitUnconverged = 3;
constexpr int kExitIo = 4;
constexpr int kExitInterrupted = 130;

std::atomic<bool> g_stop{false};

extern "C" void on_sigint(int) { g_stop.store(true); }

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    std::string out;
};

void add_common(CLI::App* app, CommonOptions& o) {
    app->add_option("--config", o.config, "JSON configuration file");
    app->add_option("--seed", o.seed, "Base seed (overrides benchmark.seed)");
    app->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
    app->add_option("--out", o.out, "Output directory (overrides output_dir)");
}

RunConfig resolve(const CommonOptions& o) {
    RunConfig cfg = o.config.empty() ? parse_config(nlohmann::json::object()) : load_config(o.config);
    if (o.seed) cfg.benchmark.seed = *o.seed;
    if (o.jobs) cfg.benchmark.jobs = *o.jobs;
    if (!o.out.empty()) cfg.output_dir = o.out;
    cfg.validate();
    return cfg;
}

fs::path prepare_out(const RunConfig& cfg, const std::string& command) {
    const fs::path dir = cfg.output_dir;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    write_text(dir / "manifest.json", manifest_json(cfg, command, cfg.benchmark.seed).dump(2) + "\n");
    return dir;
}

std::optional<Method> parse_method_opt(const std::string& name) {
    if (name.empty()) return std::nullopt;
    try {
        return parse_method(name);
    } catch (const EvaluationError& e) {
        throw ConfigError(e.what());
    }
}

Method default_planner(const RunConfig& cfg) {
    return cfg.setup.ocp.K.is_zero() ? Method::kRaSaa : Method::kRaSaaFb;
}

int cmd_plan(const CommonOptions& o, const std::string& method_name_opt) {
    const RunConfig cfg = resolve(o);
    const Method method = parse_method_opt(method_name_opt).value_or(default_planner(cfg));
    if (method != Method::kRaSaaFb && method != Method::kRaSaa) {
        throw ConfigError("plan supports RA-SAA+FB and RA-SAA only");
    }
    const fs::path dir = prepare_out(cfg, "plan");
    const Scenario sc = cfg.single_scenario();
    const OCPSpec spec = scenario_spec(cfg.setup, sc, cfg.setup.ocp.uncertainty.epsilon, method,
                                       cfg.benchmark.seed);
    spec.validate();
    const SolveReport report = solve_socp_fb(spec);
    write_plan(dir / "plan.csv", report.plan);
    write_text(dir / "report.json", report_json(report).dump(2) + "\n");
    std::cout << report.method << ": objective " << report.objective << ", cvar " << report.cvar_value
              << ", terminal " << report.terminal_value << (report.converged ? ", converged" : ", NOT converged")
              << "\n";
    return report.converged ? kExitOk : kExitUnconverged;
}

int cmd_simulate(const CommonOptions& o, const std::string& plan_file, const std::string& method_name_opt,
                 std::size_t model) {
    const RunConfig cfg = resolve(o);
    if (!plan_file.empty() && !fs::exists(plan_file)) {
        throw ConfigError("plan file not found: " + plan_file);
    }
    const Method method = parse_method_opt(method_name_opt).value_or(default_planner(cfg));
    if (!plan_file.empty() && method != Method::kRaSaaFb && method != Method::kRaSaa) {
        throw ConfigError("--plan requires an RA-SAA method");
    }
    const fs::path dir = prepare_out(cfg, "simulate");
    const Scenario sc = cfg.single_scenario();
    const double eps = cfg.setup.ocp.uncertainty.epsilon;
    const std::uint64_t seed = cfg.benchmark.seed;
    const PlantParams truth = truth_plant(cfg.setup, sc, eps, model, seed);
    const NoiseRealization noise = truth_noise(cfg.setup, sc, model, seed);

    Trajectory traj;
    switch (method) {
        case Method::kRaSaaFb:
        case Method::kRaSaa: {
            const OCPSpec spec = scenario_spec(cfg.setup, sc, eps, method, seed);
            spec.validate();
            ControlPlan plan;
            if (plan_file.empty()) {
                const SolveReport report = solve_socp_fb(spec);
                write_text(dir / "report.json", report_json(report).dump(2) + "\n");
                plan = report.plan;
            } else {
                plan = read_plan(plan_file);
            }
            traj = execute_plan(spec, plan, truth, noise);
            break;
        }
        case Method::kAstarPidCbf:
            traj = run_astar_pid_cbf(cfg.setup, sc, truth, noise);
            break;
        case Method::kMppi:
            traj = run_mppi(cfg.setup, sc, truth, noise, derive_seed(seed, {sc.index, model, 17}));
            break;
    }
    std::ostringstream csv;
    write_trajectory_csv(csv, traj);
    write_text(dir / "trajectory.csv", csv.str());
    const MetricsRecord m = measure(traj, sc, method_name(method), model, eps);
    const nlohmann::json metrics = {{"method", m.method},     {"final_error", m.rho_final},
                                    {"collision", m.rho_collision}, {"energy", m.rho_energy},
                                    {"valid", m.valid}};
    write_text(dir / "metrics.json", metrics.dump(2) + "\n");
    std::cout << metrics.dump() << "\n";
    return kExitOk;
}

void write_benchmark(const fs::path& dir, const BenchmarkResult& result, bool plot_data) {
    std::ostringstream table;
    write_results_csv(table, result.records);
    write_text(dir / "results.csv", table.str());

    std::ostringstream solves;
    solves << "method,i,epsilon,converged,failed,objective,cvar_value,terminal_value,iterations\n";
    solves << std::setprecision(17);
    for (const auto& s : result.solves) {
        solves << s.method << ',' << s.i << ',' << s.epsilon << ',' << s.converged << ',' << s.failed << ','
               << s.objective << ',' << s.cvar_value << ',' << s.terminal_value << ',' << s.iterations << '\n';
    }
    write_text(dir / "solves.csv", solves.str());

    if (!result.records.empty()) {
        nlohmann::json summary = summary_json(result.records);
        summary["complete"] = result.complete;
        summary["failed_cells"] = result.failed_cells;
        write_text(dir / "summary.json", summary.dump(2) + "\n");
        if (plot_data) write_plot_data(dir, result.records);
    }
}

int cmd_benchmark(const CommonOptions& o, bool plot_data) {
    const RunConfig cfg = resolve(o);
    const fs::path dir = prepare_out(cfg, "benchmark");
    const auto scenarios = generate_scenarios(cfg.benchmark.n_location, cfg.benchmark.seed, cfg.setup.scenarios);
    std::signal(SIGINT, on_sigint);
    const BenchmarkResult result = run_benchmark(
        cfg.setup, cfg.benchmark, scenarios, &g_stop, [](std::size_t done, std::size_t total) {
            std::cerr << "\r" << done << "/" << total << std::flush;
        });
    std::cerr << "\n";
    std::signal(SIGINT, SIG_DFL);

    // Partial sweeps keep only fully populated cells so aggregation stays valid.
    BenchmarkResult flushed = result;
    if (!result.complete) {
        try {
            (void)aggregate(result.records);
        } catch (const EvaluationError&) {
            flushed.records.clear();
        }
    }
    write_benchmark(dir, flushed, plot_data);
    if (!result.complete) {
        std::cerr << "interrupted: " << result.records.size() << " records flushed\n";
        return kExitInterrupted;
    }
    std::cout << result.records.size() << " records, " << result.failed_cells << " failed cells\n";
    return kExitOk;
}

std::vector<MetricsRecord> load_results(const std::string& path) {
    std::istringstream in(read_text(path));
    try {
        return read_results_csv(in);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

int cmd_compare(const CommonOptions& o, const std::string& a, const std::string& b) {
    const RunConfig cfg = resolve(o);
    const auto ra = load_results(a);
    const auto rb = load_results(b);
    const fs::path dir = prepare_out(cfg, "compare");
    const nlohmann::json result = compare_json(ra, rb);
    write_text(dir / "compare.json", result.dump(2) + "\n");
    std::cout << result.dump(2) << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Risk-aware planning and benchmarking for a tethered UUV-USV system"};
    app.require_subcommand(1);

    CommonOptions common;
    std::string plan_file;
    std::string method;
    std::size_t model = 0;
    bool plot_data = false;
    std::string table_a;
    std::string table_b;

    auto* simulate = app.add_subcommand("simulate", "Run one closed-loop rollout on a truth plant");
    add_common(simulate, common);
    simulate->add_option("--plan", plan_file, "Plan CSV to execute instead of solving");
    simulate->add_option("--method", method, "RA-SAA+FB, RA-SAA, A*+PID+CBF or MPPI");
    simulate->add_option("--model", model, "Truth plant index j");

    auto* plan = app.add_subcommand("plan", "Solve the risk-aware planning problem for one scenario");
    add_common(plan, common);
    plan->add_option("--method", method, "RA-SAA+FB or RA-SAA");

    auto* bench = app.add_subcommand("benchmark", "Run the full method/location/model/epsilon sweep");
    add_common(bench, common);
    bench->add_flag("--emit-plot-data", plot_data, "Write grouped bar-chart CSVs");

    auto* compare = app.add_subcommand("compare", "Welch t-tests between two result tables");
    add_common(compare, common);
    compare->add_option("table_a", table_a, "First results.csv")->required();
    compare->add_option("table_b", table_b, "Second results.csv")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (*simulate) return cmd_simulate(common, plan_file, method, model);
        if (*plan) return cmd_plan(common, method);
        if (*bench) return cmd_benchmark(common, plot_data);
        if (*compare) return cmd_compare(common, table_a, table_b);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
