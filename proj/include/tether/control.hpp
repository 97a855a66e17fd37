// Control plans, smooth saturation and the PD correction law shared by the
// planner's closed-loop rollouts and the online executor.
#pragma once

#include <vector>

#include "tether/trajectory.hpp"

namespace tether {

class ControlError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class HoldMode { kZeroOrder, kLinear };

/// Feedforward input u(t) on uniformly spaced knots t_k = k * knot_dt.
struct ControlPlan {
    double knot_dt = 0.25;
    double t_f = 12.0;
    HoldMode hold = HoldMode::kZeroOrder;
    std::vector<ControlInput> knots;

    void validate() const;
    [[nodiscard]] double knot_time(std::size_t k) const { return static_cast<double>(k) * knot_dt; }

    /// Number of knots needed to cover [0, t_f] in the given hold mode.
    static std::size_t knots_for(double t_f, double knot_dt, HoldMode hold);
    static ControlPlan constant(const ControlInput& u, double t_f, double knot_dt,
                                HoldMode hold = HoldMode::kZeroOrder);
};

/// Zero-order hold uses left-closed intervals: on a knot boundary the later knot is active.
ControlInput interpolate_plan(const ControlPlan& plan, double t);

/// Sensitivity of interpolate_plan(plan, t) to the knots: up to two (index, weight) pairs.
struct KnotWeights {
    std::size_t index[2] = {0, 0};
    double weight[2] = {0.0, 0.0};
    int count = 0;
};
KnotWeights interpolation_weights(const ControlPlan& plan, double t);

/// Componentwise u_max * tanh(u / u_max).
ControlInput smooth_sat(const ControlInput& u, double u_max);
ControlInput smooth_sat(const ControlInput& u, const Eigen::Vector4d& bounds);
/// Diagonal of d smooth_sat / d u.
Eigen::Vector4d smooth_sat_derivative(const ControlInput& u, const Eigen::Vector4d& bounds);
/// Inverse of smooth_sat; components must lie strictly inside the bounds.
ControlInput smooth_sat_inverse(const ControlInput& f, const Eigen::Vector4d& bounds);

/// PD correction gain K = (K_P  K_D  0).
struct FeedbackGain {
    Eigen::Matrix4d K_P = 800.0 * Eigen::Matrix4d::Identity();
    Eigen::Matrix4d K_D = 80.0 * Eigen::Matrix4d::Identity();

    static FeedbackGain zero() { return {Eigen::Matrix4d::Zero(), Eigen::Matrix4d::Zero()}; }
    [[nodiscard]] bool is_zero() const { return K_P.isZero(0.0) && K_D.isZero(0.0); }
    /// Assembled 4x12 gain.
    [[nodiscard]] Eigen::Matrix<double, 4, 12> matrix() const;
};

/// x_nom - x on the (q, q_dot) block with the theta entry wrapped to (-pi, pi]; zero on f.
Vec12 tracking_error(const SystemState& nominal, const SystemState& x);

/// Pre-saturation command u + K (x_nom - x).
ControlInput feedback_command(const ControlInput& u, const SystemState& nominal,
                              const SystemState& x, const FeedbackGain& K);

/// mu = smooth_sat(u + K (x_nom - x)) with per-channel bounds.
ControlInput feedback_input(const ControlInput& u, const SystemState& nominal,
                            const SystemState& x, const FeedbackGain& K,
                            const Eigen::Vector4d& bounds);

/// Control law evaluated at time t on the nominal trajectory's grid.
ControlInput feedback_law(const ControlPlan& plan, const Trajectory& nominal,
                          const SystemState& x, double t, const FeedbackGain& K,
                          const Eigen::Vector4d& bounds);

/// Model-coordinate state from measured Cartesian position/velocity (plus actuator forces).
SystemState state_from_measurement(const OutputY& y, double x_dot, double d_dot, double X_dot,
                                   const Eigen::Vector4d& forces);

}  // namespace tether
