#include "tether/control.hpp"

#include <algorithm>
#include <cmath>

namespace tether {

namespace {

constexpr double kTimeTol = 1e-9;

}  // namespace

void ControlPlan::validate() const {
    if (!(knot_dt > 0.0)) throw ControlError("plan knot spacing must be positive");
    if (!(t_f > 0.0)) throw ControlError("plan horizon t_f must be positive");
    if (knots.empty()) throw ControlError("plan has no knots");
    if (knot_time(knots.size() - 1) > t_f + kTimeTol) {
        throw ControlError("plan knots extend beyond t_f");
    }
    if (knots.size() > 1 && hold == HoldMode::kLinear &&
        knot_time(knots.size() - 1) < t_f - kTimeTol) {
        throw ControlError("linear plan knots do not reach t_f");
    }
    for (const auto& k : knots) {
        if (!k.allFinite()) throw ControlError("plan contains non-finite knot values");
    }
}

std::size_t ControlPlan::knots_for(double t_f, double knot_dt, HoldMode hold) {
    const double spans = t_f / knot_dt;
    const auto n = static_cast<std::size_t>(std::ceil(spans - kTimeTol));
    return hold == HoldMode::kLinear ? n + 1 : std::max<std::size_t>(n, 1);
}

ControlPlan ControlPlan::constant(const ControlInput& u, double t_f, double knot_dt,
                                  HoldMode hold) {
    ControlPlan plan;
    plan.knot_dt = knot_dt;
    plan.t_f = t_f;
    plan.hold = hold;
    plan.knots.assign(knots_for(t_f, knot_dt, hold), u);
    return plan;
}

KnotWeights interpolation_weights(const ControlPlan& plan, double t) {
    if (t < -kTimeTol || t > plan.t_f + kTimeTol) {
        throw ControlError("interpolation time outside [0, t_f]");
    }
    KnotWeights w;
    const std::size_t n = plan.knots.size();
    const double s = std::max(t, 0.0) / plan.knot_dt;
    const auto k = std::min(static_cast<std::size_t>(std::floor(s + kTimeTol)), n - 1);
    if (plan.hold == HoldMode::kZeroOrder || k + 1 >= n) {
        w.index[0] = k;
        w.weight[0] = 1.0;
        w.count = 1;
        return w;
    }
    const double frac = std::clamp(s - static_cast<double>(k), 0.0, 1.0);
    w.index[0] = k;
    w.weight[0] = 1.0 - frac;
    w.index[1] = k + 1;
    w.weight[1] = frac;
    w.count = 2;
    return w;
}

ControlInput interpolate_plan(const ControlPlan& plan, double t) {
    const KnotWeights w = interpolation_weights(plan, t);
    if (w.count == 1) return plan.knots[w.index[0]];
    return w.weight[0] * plan.knots[w.index[0]] + w.weight[1] * plan.knots[w.index[1]];
}

ControlInput smooth_sat(const ControlInput& u, const Eigen::Vector4d& bounds) {
    ControlInput out;
    for (int i = 0; i < 4; ++i) out[i] = bounds[i] * std::tanh(u[i] / bounds[i]);
    return out;
}

ControlInput smooth_sat(const ControlInput& u, double u_max) {
    return smooth_sat(u, Eigen::Vector4d::Constant(u_max));
}

Eigen::Vector4d smooth_sat_derivative(const ControlInput& u, const Eigen::Vector4d& bounds) {
    Eigen::Vector4d d;
    for (int i = 0; i < 4; ++i) {
        const double th = std::tanh(u[i] / bounds[i]);
        d[i] = 1.0 - th * th;
    }
    return d;
}

ControlInput smooth_sat_inverse(const ControlInput& f, const Eigen::Vector4d& bounds) {
    ControlInput u;
    for (int i = 0; i < 4; ++i) {
        const double ratio = f[i] / bounds[i];
        if (!(std::abs(ratio) < 1.0)) {
            throw ControlError("force outside the open saturation range cannot be inverted");
        }
        u[i] = bounds[i] * std::atanh(ratio);
    }
    return u;
}

Eigen::Matrix<double, 4, 12> FeedbackGain::matrix() const {
    Eigen::Matrix<double, 4, 12> K = Eigen::Matrix<double, 4, 12>::Zero();
    K.block<4, 4>(0, 0) = K_P;
    K.block<4, 4>(0, 4) = K_D;
    return K;
}

Vec12 tracking_error(const SystemState& nominal, const SystemState& x) {
    Vec12 e = Vec12::Zero();
    e.head<8>() = nominal.x.head<8>() - x.x.head<8>();
    e[kTheta] = wrap_angle(e[kTheta]);
    return e;
}

ControlInput feedback_command(const ControlInput& u, const SystemState& nominal,
                              const SystemState& x, const FeedbackGain& K) {
    const Vec12 e = tracking_error(nominal, x);
    return u + K.K_P * e.segment<4>(kTheta) + K.K_D * e.segment<4>(kThetaDot);
}

ControlInput feedback_input(const ControlInput& u, const SystemState& nominal,
                            const SystemState& x, const FeedbackGain& K,
                            const Eigen::Vector4d& bounds) {
    return smooth_sat(feedback_command(u, nominal, x, K), bounds);
}

ControlInput feedback_law(const ControlPlan& plan, const Trajectory& nominal,
                          const SystemState& x, double t, const FeedbackGain& K,
                          const Eigen::Vector4d& bounds) {
    if (nominal.states.empty()) throw ControlError("nominal trajectory is empty");
    if (t < -kTimeTol || t > nominal.t_f() + kTimeTol) {
        throw ControlError("feedback time outside the nominal grid");
    }
    const auto k = std::min(static_cast<std::size_t>(std::floor(t / nominal.dt + 0.5)),
                            nominal.states.size() - 1);
    return feedback_input(interpolate_plan(plan, t), nominal.states[k], x, K, bounds);
}

SystemState state_from_measurement(const OutputY& y, double x_dot, double d_dot, double X_dot,
                                   const Eigen::Vector4d& forces) {
    const PolarPoint p = polar_from_cartesian(y.x, y.d, y.X);
    const double st = std::sin(p.theta);
    const double ct = std::cos(p.theta);
    const double a = X_dot - x_dot;
    const double b = d_dot;
    const double r_dot = a * st + b * ct;
    const double theta_dot = (a * ct - b * st) / p.r;

    SystemState s;
    s.x << p.theta, p.r, p.r, y.X, theta_dot, r_dot, r_dot, X_dot, forces;
    return s;
}

}  // namespace tether
