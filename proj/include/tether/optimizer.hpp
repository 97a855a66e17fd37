// Risk-aware sample-average trajectory optimization over closed-loop rollouts.
//
// The decision variable is the feedforward plan u(t). Every sample rollout
// applies mu = sat(u + K (x_nom - x)), where x_nom is the noise-free rollout of
// u under the expected parameters; K = 0 gives the open-loop variant.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tether/stochastic.hpp"

namespace tether {

class OptimizerError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct SolverSettings {
    int max_outer = 8;
    int max_inner = 60;
    double penalty_init = 10.0;
    double penalty_growth = 10.0;
    double tol_c = 1e-3;
    /// Log-sum-exp / softplus temperature for the margin max and the CVaR hinge [m].
    double tau_smooth = 0.05;
    /// Temperature of the first outer iteration; halved each outer iteration down to tau_smooth.
    double tau_init = 0.4;
    /// Squared-hinge guard on r inside the inner merit, keeping iterates off the r floor.
    double r_guard = 0.3;
    double guard_weight = 1e4;
};

struct OCPSpec {
    ModelParams params;
    /// Input weight; defaults to I / m^2 with the expected UUV mass.
    Eigen::Matrix4d R = Eigen::Matrix4d::Identity() / (120.0 * 120.0);
    double alpha = 0.02;
    double delta_M = 0.3;
    double t_f = 12.0;
    double dt = 0.05;
    double knot_dt = 0.25;
    HoldMode hold = HoldMode::kZeroOrder;
    int N = 20;
    Eigen::Vector3d y_d = Eigen::Vector3d::Zero();
    SystemState x0;
    UncertaintySpec uncertainty;
    DiffusionSpec diffusion = DiffusionSpec::velocity_noise();
    FeedbackGain K;
    SolverSettings solver;
    std::uint64_t sample_seed = 1;

    void validate() const;
    [[nodiscard]] RolloutSetup setup() const { return {params, dt, t_f, x0}; }
    [[nodiscard]] std::string method_label() const { return K.is_zero() ? "RA-SAA" : "RA-SAA+FB"; }
};

/// Fixed samples {xi^i, noise^i} reused across every plan evaluation of one solve.
struct SampleSet {
    std::vector<UncertainParams> xi;
    std::vector<NoiseRealization> noise;

    static SampleSet draw(const OCPSpec& spec);
    static SampleSet draw(const OCPSpec& spec, std::uint64_t seed);
    [[nodiscard]] std::size_t size() const { return xi.size(); }
};

/// Penalty values for rollouts that breach the r floor.
constexpr double kInvalidMargin = 10.0;
constexpr double kInvalidTerminal = 100.0;

/// Exact discrete CVaR: mean of the worst alpha-fraction (fractional weight on the boundary sample).
double cvar(std::span<const double> samples, double alpha);

/// mu^T R mu.
double running_cost(const ControlInput& mu, const Eigen::Matrix4d& R);

/// max over grid points and obstacles of (a - |(x, d) - (x_O, d_O)|); -inf without obstacles.
double collision_margin(const Trajectory& traj, std::span<const Obstacle> obstacles);

/// |y(t_f) - y_d|^2.
double terminal_violation(const Trajectory& traj, const Eigen::Vector3d& y_d);

/// Trapezoid integral of mu^T R mu over the trajectory grid.
double control_cost(const Trajectory& traj, const Eigen::Matrix4d& R);

struct SaaValues {
    double objective = 0.0;
    double cvar_value = 0.0;
    double mean_H = 0.0;
    std::vector<double> margins;
    std::vector<double> terminal;
    int invalid = 0;
};

/// Smoothed constraint surrogates used for gradients.
struct SmoothedValues {
    double objective = 0.0;
    double cvar_value = 0.0;
    double mean_H = 0.0;
    /// Sample mean of sum_k dt max(0, r_guard - r_k)^2.
    double guard = 0.0;
};

struct GradientWeights {
    double objective = 1.0;
    double cvar = 0.0;
    double mean_H = 0.0;
    double guard = 0.0;
};

/// SAA problem over one fixed sample set: exact evaluation, smoothed surrogates and
/// adjoint gradients with respect to the plan knots.
class SaaProblem {
public:
    SaaProblem(OCPSpec spec, SampleSet samples);

    [[nodiscard]] const OCPSpec& spec() const { return spec_; }
    [[nodiscard]] const SampleSet& samples() const { return samples_; }

    /// Smoothing temperature used by smoothed(); starts at solver.tau_smooth.
    [[nodiscard]] double temperature() const { return tau_; }
    void set_temperature(double tau);

    /// Nominal trajectory and closed-loop sample rollouts for the plan.
    [[nodiscard]] Trajectory nominal(const ControlPlan& plan) const;
    [[nodiscard]] std::vector<Trajectory> rollouts(const ControlPlan& plan) const;

    [[nodiscard]] SaaValues evaluate(const ControlPlan& plan) const;

    /// Smoothed values; when `grad` is non-null it receives d(weighted sum)/d(knots),
    /// flattened knot-major (4 entries per knot). Weights are chosen from the values.
    SmoothedValues smoothed(const ControlPlan& plan,
                            const std::function<GradientWeights(const SmoothedValues&)>& weights,
                            Eigen::VectorXd* grad) const;

private:
    OCPSpec spec_;
    SampleSet samples_;
    bool on_nominal_ = false;
    double tau_ = 0.0;
};

/// Smooth upper bound of CVaR: inf_s s + tau/(alpha N) sum softplus((m_i - s)/tau).
/// Writes d/dm_i into `grad` when non-null.
double smoothed_cvar(std::span<const double> margins, double alpha, double tau,
                     std::vector<double>* grad);

struct SolveReport {
    std::string method;
    ControlPlan plan;
    double objective = 0.0;
    double cvar_value = 0.0;
    double terminal_value = 0.0;
    int iterations = 0;
    int outer_iterations = 0;
    bool converged = false;
    double wall_time = 0.0;
};

/// Plan whose saturated output equals (0, 0, -m_bar g, 0): the winch holds the expected weight.
ControlPlan hover_plan(const OCPSpec& spec);

SolveReport solve_socp_fb(const OCPSpec& spec, const SampleSet& samples,
                          const ControlPlan* initial_plan = nullptr);
SolveReport solve_socp_fb(const OCPSpec& spec, const ControlPlan* initial_plan = nullptr);

}  // namespace tether
