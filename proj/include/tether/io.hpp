// Run configuration, artifact serialization and run manifests.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "tether/evaluation.hpp"

namespace tether {

/// Invalid configuration content (exit code 2).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Unreadable or unwritable files (exit code 4).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Everything a CLI run needs. JSON sections: model, uncertainty, diffusion, ocp,
/// baselines, scenarios, benchmark, scenario, output_dir. Every section is
/// optional; unknown keys are rejected.
struct RunConfig {
    ExperimentSetup setup;
    BenchmarkConfig benchmark;
    /// Explicit scenario for `plan` / `simulate`; otherwise generated scenario `scenario_index`.
    std::optional<Scenario> scenario;
    std::size_t scenario_index = 0;
    std::string output_dir = "out";

    void validate() const;
    /// Scenario used by single-run commands.
    [[nodiscard]] Scenario single_scenario() const;
};

RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const RunConfig& cfg);

/// 64-bit FNV-1a, printed as 16 hex digits.
std::string fnv1a_hex(const std::string& data);

nlohmann::json manifest_json(const RunConfig& cfg, const std::string& command, std::uint64_t seed);

// Plans ------------------------------------------------------------------------

/// CSV `t,u_theta,u_r,u_l,u_X` with one row per knot, plus a JSON sidecar holding
/// the knot spacing, horizon and hold mode.
void write_plan(const std::filesystem::path& csv, const ControlPlan& plan);
/// Reads the CSV and its sidecar (same stem, .json) when present; otherwise the
/// spacing is inferred from the rows and the hold defaults to zero order.
ControlPlan read_plan(const std::filesystem::path& csv);
std::filesystem::path plan_sidecar(const std::filesystem::path& csv);

nlohmann::json plan_json(const ControlPlan& plan);
nlohmann::json report_json(const SolveReport& report);

// Benchmark summaries -------------------------------------------------------------

/// Per-epsilon means/stds per method and one-sided Welch tests of the reference
/// method against every other method (reference lower is the alternative).
nlohmann::json summary_json(std::span<const MetricsRecord> records,
                            const std::string& reference = "RA-SAA+FB");

/// Per-metric CSVs `epsilon,method,mean,std,marker` shaped like grouped bar charts.
void write_plot_data(const std::filesystem::path& dir, std::span<const MetricsRecord> records,
                     const std::string& reference = "RA-SAA+FB");

/// Welch tests between two result tables for every shared (method, epsilon) group.
nlohmann::json compare_json(std::span<const MetricsRecord> a, std::span<const MetricsRecord> b);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace tether
