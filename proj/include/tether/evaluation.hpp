// Scenario generation, the three benchmark metrics, aggregation, Welch's t-test
// and the multi-method benchmark sweep.
#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tether/baselines.hpp"
#include "tether/optimizer.hpp"

namespace tether {

class EvaluationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// -----------------------------------------------------------------------------
// Scenarios
// -----------------------------------------------------------------------------

struct ScenarioConfig {
    double arena = 8.0;
    /// Obstacle centers are drawn from [edge, arena - edge] in both coordinates.
    double obstacle_edge = 1.5;
    double radius_min = 0.5;
    double radius_max = 1.2;
    /// Minimum distance from the true obstacle surface for start and target.
    double clearance = 0.5;
    double min_depth = 0.5;
    double t_f = 12.0;
    /// Relative observation error of the obstacle position and radius.
    double observation_pos_rel_err = 0.3;
    double observation_size_rel_err = 0.1;
    int max_rejections = 10000;

    void validate() const;
};

struct Scenario {
    std::size_t index = 0;
    Eigen::Vector3d y0 = Eigen::Vector3d::Zero();
    Eigen::Vector3d y_d = Eigen::Vector3d::Zero();
    Obstacle truth;
    Obstacle observed;
    double t_f = 12.0;
    std::uint64_t seed = 0;

    /// Hover with the tether vertical under the UUV start point.
    [[nodiscard]] SystemState initial_state(const ModelParams& p) const;
};

std::vector<Scenario> generate_scenarios(int n_location, std::uint64_t seed,
                                         const ScenarioConfig& config = {});

// -----------------------------------------------------------------------------
// Metrics
// -----------------------------------------------------------------------------

/// Final error recorded for invalid trajectories: the arena diagonal.
inline const double kInvalidFinalError = 8.0 * std::sqrt(2.0);

/// |y(t_f) - y_d|, or kInvalidFinalError when the trajectory is invalid.
double final_position_error(const Trajectory& traj, const Eigen::Vector3d& y_d);

/// 1 when the UUV enters the true obstacle disk (strictly) or the trajectory is invalid.
int collision_flag(const Trajectory& traj, const Obstacle& truth);

/// Trapezoid integral of |f|^2 over the trajectory grid [N^2 s].
double energy(const Trajectory& traj);

struct MetricsRecord {
    std::string method;
    std::size_t i = 0;
    std::size_t j = 0;
    double epsilon = 0.0;
    double rho_final = 0.0;
    int rho_collision = 0;
    double rho_energy = 0.0;
    bool valid = true;
};

MetricsRecord measure(const Trajectory& traj, const Scenario& scenario, const std::string& method,
                      std::size_t j, double epsilon);

void write_results_csv(std::ostream& out, std::span<const MetricsRecord> records);
std::vector<MetricsRecord> read_results_csv(std::istream& in);

// -----------------------------------------------------------------------------
// Aggregation and significance
// -----------------------------------------------------------------------------

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0;
    /// rho_i: mean over models for each location, ordered by location index.
    std::vector<double> per_location;
};

struct GroupSummary {
    std::string method;
    double epsilon = 0.0;
    std::size_t locations = 0;
    std::size_t models = 0;
    MetricSummary final_error;
    MetricSummary collision;
    MetricSummary energy;

    [[nodiscard]] const MetricSummary& metric(const std::string& name) const;
};

/// Groups by (method, epsilon); rejects duplicate or missing (i, j) cells.
std::vector<GroupSummary> aggregate(std::span<const MetricsRecord> records);

/// Mean over i of rho_i and its sample standard deviation.
MetricSummary summarize_locations(std::vector<double> per_location);

enum class Alternative { kLess, kGreater };

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 0.5;
    bool significant = false;
    bool degenerate = false;
};

/// One-sided Welch test; kLess tests mean(a) < mean(b).
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b,
                         Alternative alternative, double level = 0.05);

// -----------------------------------------------------------------------------
// Benchmark
// -----------------------------------------------------------------------------

enum class Method { kRaSaaFb, kRaSaa, kAstarPidCbf, kMppi };

std::string method_name(Method m);
Method parse_method(const std::string& name);
std::vector<Method> all_methods();

/// Shared settings for every method in a sweep. The OCP template supplies the
/// model, uncertainty model, diffusion and planner settings; scenario fields
/// (x0, y_d, t_f, obstacles, epsilon) are filled per cell.
struct ExperimentSetup {
    OCPSpec ocp;
    GridSpec grid;
    PIDGains pid;
    CbfGains cbf;
    MPPIHyper mppi;
    ScenarioConfig scenarios;

    void validate() const;
};

struct BenchmarkConfig {
    std::vector<Method> methods = all_methods();
    int n_location = 10;
    int n_model = 5;
    std::vector<double> epsilons = {0.0, 0.2, 0.5};
    std::uint64_t seed = 1;
    int jobs = 1;

    void validate() const;
};

/// Planner problem for one scenario and uncertainty level.
OCPSpec scenario_spec(const ExperimentSetup& setup, const Scenario& scenario, double epsilon,
                      Method method, std::uint64_t seed);

/// Plant truth and process noise of cell (i, j); shared by every method.
PlantParams truth_plant(const ExperimentSetup& setup, const Scenario& scenario, double epsilon,
                        std::size_t j, std::uint64_t seed);
NoiseRealization truth_noise(const ExperimentSetup& setup, const Scenario& scenario, std::size_t j,
                             std::uint64_t seed);

/// Executes a solved plan (RA-SAA variants) on the truth plant.
Trajectory execute_plan(const OCPSpec& spec, const ControlPlan& plan, const PlantParams& truth,
                        const NoiseRealization& noise);

/// A* reference from the observed obstacle, PID tracking and the CBF filter.
/// Falls back to the straight segment when no grid path exists.
Trajectory run_astar_pid_cbf(const ExperimentSetup& setup, const Scenario& scenario,
                             const PlantParams& truth, const NoiseRealization& noise);

Trajectory run_mppi(const ExperimentSetup& setup, const Scenario& scenario, const PlantParams& truth,
                    const NoiseRealization& noise, std::uint64_t seed);

struct SolveSummary {
    std::string method;
    std::size_t i = 0;
    double epsilon = 0.0;
    bool converged = false;
    bool failed = false;
    double objective = 0.0;
    double cvar_value = 0.0;
    double terminal_value = 0.0;
    int iterations = 0;
    double wall_time = 0.0;
};

struct BenchmarkResult {
    std::vector<MetricsRecord> records;  // ordered by (epsilon, i, j, method)
    std::vector<SolveSummary> solves;
    bool complete = true;
    std::size_t failed_cells = 0;
};

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

/// Runs every (method, i, j, epsilon) cell. Plans are solved once per
/// (method, i, epsilon) and shared across models. Setting `stop` ends the sweep
/// early with the finished cells.
BenchmarkResult run_benchmark(const ExperimentSetup& setup, const BenchmarkConfig& config,
                              const std::vector<Scenario>& scenarios,
                              const std::atomic<bool>* stop = nullptr,
                              const ProgressFn& progress = {});

}  // namespace tether
