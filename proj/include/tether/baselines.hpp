// Competitor controllers on the expected-parameter model: an A* grid planner
// with a PID tracker and CBF-QP safety filter, and sampling-based MPPI.
#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "tether/rng.hpp"
#include "tether/stochastic.hpp"

namespace tether {

class PlanningError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BaselineError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// -----------------------------------------------------------------------------
// A* on a uniform lattice
// -----------------------------------------------------------------------------

/// Lattice nodes at (x_min + i cell, d_min + j cell). A node is blocked when it
/// lies strictly inside an obstacle disk grown by `inflation`; an edge exists
/// between two free neighbours.
struct GridSpec {
    double cell = 0.1;
    double x_min = 0.0;
    double x_max = 8.0;
    double d_min = 0.0;
    double d_max = 8.0;
    int connectivity = 8;
    double inflation = 0.2;

    void validate() const;
    [[nodiscard]] int nx() const;
    [[nodiscard]] int nd() const;
    [[nodiscard]] bool contains(const Eigen::Vector2d& p) const;
};

struct GridPath {
    std::vector<Eigen::Vector2d> waypoints;  // (x, d) in meters
    double length = 0.0;
};

/// Shortest lattice path between the nodes nearest to start and goal, with the
/// exact start and goal points as first and last waypoint.
GridPath astar_plan(const GridSpec& grid, const Eigen::Vector2d& start, const Eigen::Vector2d& goal,
                    std::span<const Obstacle> obstacles);

/// Constant-speed parameterization of a polyline over [0, t_f].
class TimedPath {
public:
    TimedPath(GridPath path, double t_f);

    [[nodiscard]] Eigen::Vector2d position(double t) const;
    [[nodiscard]] Eigen::Vector2d velocity(double t) const;
    [[nodiscard]] const GridPath& path() const { return path_; }
    [[nodiscard]] double t_f() const { return t_f_; }

private:
    /// Segment index and arc length offset inside it for time t.
    [[nodiscard]] std::pair<std::size_t, double> locate(double t) const;

    GridPath path_;
    double t_f_;
    std::vector<double> cumulative_;
};

// -----------------------------------------------------------------------------
// PID tracking
// -----------------------------------------------------------------------------

/// Gains per output channel (x, d, X).
struct PIDGains {
    Eigen::Vector3d K_P = Eigen::Vector3d::Constant(800.0);
    Eigen::Vector3d K_I = Eigen::Vector3d::Constant(20.0);
    Eigen::Vector3d K_D = Eigen::Vector3d::Constant(80.0);

    void validate() const;
};

struct PidState {
    Eigen::Vector3d integral = Eigen::Vector3d::Zero();
};

/// Reference output and its rate (x_dot, d_dot, X_dot).
struct PidReference {
    OutputY y;
    Eigen::Vector3d rate = Eigen::Vector3d::Zero();
};

/// Pre-saturation PID command. The Cartesian UUV force is mapped onto the
/// tangential and radial thrusters, the winch carries -m_bar g cos(theta) and
/// the USV tracks X_ref. The integrator advances by dt before use and each
/// K_I * integral entry is clamped to the channel's thruster bound.
ControlInput pid_command(const PidReference& ref, const SystemState& s, const PIDGains& gains,
                         PidState& state, double dt, const PlantParams& expected,
                         const ModelParams& p);

/// smooth_sat of pid_command.
ControlInput pid_track(const PidReference& ref, const SystemState& s, const PIDGains& gains,
                       PidState& state, double dt, const PlantParams& expected,
                       const ModelParams& p);

// -----------------------------------------------------------------------------
// CBF safety filter
// -----------------------------------------------------------------------------

struct CbfGains {
    double k0 = 4.0;
    double k1 = 4.0;
};

/// Barrier h = |p - o|^2 - a^2 and its affine second derivative in the force:
/// h_ddot(u) = c0 + c^T u with the actuator lag neglected.
struct BarrierTerms {
    double h = 0.0;
    double h_dot = 0.0;
    double c0 = 0.0;
    Eigen::Vector4d c = Eigen::Vector4d::Zero();
};
BarrierTerms barrier_terms(const SystemState& s, const Obstacle& o, const PlantParams& expected,
                           const ModelParams& p);

struct CbfResult {
    ControlInput u = ControlInput::Zero();
    bool active = false;      // constraint binding at the returned input
    bool infeasible = false;  // no input in the box satisfies the constraint
    double h = 0.0;
    double constraint_value = 0.0;  // c^T u + c0 + k1 h_dot + k0 h at the returned input
};

/// Minimally invasive filter: argmin |u - u_nom|^2 s.t. h_ddot + k1 h_dot + k0 h >= 0 and
/// |u_i| <= bound_i. Falls back to the box vertex maximizing c^T u when infeasible.
CbfResult cbf_filter(const ControlInput& u_nom, const SystemState& s, const Obstacle& o,
                     const PlantParams& expected, const ModelParams& p, const CbfGains& gains = {});

/// Filter against the obstacle with the smallest barrier value.
CbfResult cbf_filter(const ControlInput& u_nom, const SystemState& s,
                     std::span<const Obstacle> obstacles, const PlantParams& expected,
                     const ModelParams& p, const CbfGains& gains = {});

// -----------------------------------------------------------------------------
// MPPI
// -----------------------------------------------------------------------------

struct MPPIHyper {
    int samples = 256;
    double horizon = 2.0;
    double lambda = 1.0;
    /// Per-channel standard deviation of the input perturbation [N].
    Eigen::Vector4d noise_std = Eigen::Vector4d::Constant(100.0);
    double replan_period = 0.05;
    /// Running input weight, as in the planner's cost.
    Eigen::Matrix4d R = Eigen::Matrix4d::Identity() / (120.0 * 120.0);
    double terminal_weight = 500.0;
    double penetration_weight = 1e6;

    void validate() const;
};

/// Importance-weighted combination of first inputs: s_best + sum_i w_i (s_i - s_best)
/// with w_i proportional to exp(-(S_i - min S) / lambda).
ControlInput mppi_combine(std::span<const double> costs, std::span<const ControlInput> first_inputs,
                          double lambda);

/// Receding-horizon MPPI on the expected-parameter model. Deterministic per seed.
class MppiController {
public:
    MppiController(MPPIHyper hyper, ModelParams params, PlantParams expected,
                   std::vector<Obstacle> obstacles, Eigen::Vector3d y_d, double dt,
                   std::uint64_t seed);

    /// Input for the current state; replans every `replan_period` and otherwise
    /// plays the stored sequence.
    ControlInput step(const SystemState& x);

    [[nodiscard]] const std::vector<ControlInput>& sequence() const { return sequence_; }

private:
    double rollout_cost(const SystemState& x, const std::vector<ControlInput>& seq) const;
    void replan(const SystemState& x);

    MPPIHyper hyper_;
    ModelParams params_;
    PlantParams expected_;
    std::vector<Obstacle> obstacles_;
    Eigen::Vector3d y_d_;
    double dt_;
    std::uint64_t seed_;
    Eigen::Vector4d bounds_;
    std::size_t steps_;
    std::size_t replan_every_;
    std::size_t calls_ = 0;
    std::size_t offset_ = 0;
    std::vector<ControlInput> sequence_;
};

/// One MPPI decision from a fresh controller.
ControlInput mppi_step(const SystemState& x, const Eigen::Vector3d& y_d,
                       std::span<const Obstacle> obstacles, const MPPIHyper& hyper,
                       std::uint64_t seed, const PlantParams& expected, const ModelParams& p,
                       double dt);

}  // namespace tether
