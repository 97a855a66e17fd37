// Uncertainty sampling, Euler-Maruyama propagation and nominal / closed-loop rollouts.
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "tether/control.hpp"
#include "tether/rng.hpp"

namespace tether {

class StochasticError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Distribution { kUniform, kGaussian };

/// Sampled plant and obstacle parameters xi = (m, m_bar, c_theta, c_r, obstacles).
struct UncertainParams {
    PlantParams plant;
    std::vector<Obstacle> obstacles;
};

/// Distribution of xi around its expected value.
///
/// Plant entries use half-width epsilon * |mean|; obstacle positions use
/// obstacle_pos_rel_err * |mean| and radii obstacle_size_rel_err * mean.
/// With `shared_drag` a single drag coefficient is drawn for c_theta and c_r.
struct UncertaintySpec {
    double epsilon = 0.0;
    double obstacle_pos_rel_err = 0.30;
    double obstacle_size_rel_err = 0.10;
    PlantParams expected;
    std::vector<Obstacle> obstacles;
    Distribution kind = Distribution::kUniform;
    bool shared_drag = true;

    void validate() const;
};

/// Constant diffusion gain on the 12-dimensional Wiener increment.
struct DiffusionSpec {
    Mat12 D = Mat12::Zero();

    /// Diagonal `intensity` on the four velocity rows.
    static DiffusionSpec velocity_noise(double intensity = 0.01);
    static DiffusionSpec none() { return {}; }
    [[nodiscard]] bool is_zero() const { return D.isZero(0.0); }
    void validate() const;
};

/// Wiener increments dW_k ~ N(0, dt I), one per integration step.
struct NoiseRealization {
    std::uint64_t seed = 0;
    std::vector<Vec12> increments;

    static NoiseRealization generate(std::uint64_t seed, std::size_t steps, double dt);
    static NoiseRealization zeros(std::size_t steps);
};

UncertainParams sample_xi(const UncertaintySpec& spec, std::uint64_t seed);
UncertainParams expected_xi(const UncertaintySpec& spec);

/// x' = x + b(x, u, xi) dt + D dW, with the taut-tether row re-imposed (l_dot' = r_dot').
SystemState em_step(const SystemState& s, const ControlInput& u, const PlantParams& plant,
                    const DiffusionSpec& diffusion, double dt, const Vec12& dW,
                    const ModelParams& p);

inline bool breaches_floor(const SystemState& s) { return !(s.r() > kRMin); }

/// Plan sampled at the integration grid points t_k = k dt, k = 0..steps.
std::vector<ControlInput> plan_on_grid(const ControlPlan& plan, double dt, std::size_t steps);

/// Shared arguments for rollouts on one grid.
struct RolloutSetup {
    ModelParams params;
    double dt = 0.05;
    double t_f = 12.0;
    SystemState x0;

    [[nodiscard]] std::size_t steps() const { return grid_steps(t_f, dt); }
    void validate() const;
};

/// Deterministic propagation with the expected plant, zero diffusion and mu = smooth_sat(u).
Trajectory nominal_rollout(const ControlPlan& plan, const UncertaintySpec& spec,
                           const RolloutSetup& setup);

/// mu = smooth_sat(u(t) + K (x_nom(t) - x(t))) followed by an Euler-Maruyama step.
Trajectory closed_loop_rollout(const ControlPlan& plan, const Trajectory& nominal,
                               const FeedbackGain& K, const PlantParams& plant,
                               const DiffusionSpec& diffusion, const NoiseRealization& noise,
                               const RolloutSetup& setup);

/// mu = smooth_sat(u(t)), no correction (the open-loop execution of a plan).
Trajectory open_loop_rollout(const ControlPlan& plan, const PlantParams& plant,
                             const DiffusionSpec& diffusion, const NoiseRealization& noise,
                             const RolloutSetup& setup);

/// Online controller: returns the commanded input for the measured state at step k.
using OnlineController = std::function<ControlInput(std::size_t k, double t, const SystemState&)>;

/// Closed-loop simulation of an online controller against the given plant.
Trajectory simulate_online(const OnlineController& controller, const PlantParams& plant,
                           const DiffusionSpec& diffusion, const NoiseRealization& noise,
                           const RolloutSetup& setup);

/// CSV with header t,theta,r,l,X,theta_dot,r_dot,l_dot,X_dot,f_theta,f_r,f_l,f_X,x,d,u_theta,u_r,u_l,u_X,valid
/// followed by any diagnostic columns.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);
Trajectory read_trajectory_csv(std::istream& in);

}  // namespace tether
