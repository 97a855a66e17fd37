#include "tether/model.hpp"

#include <cmath>
#include <numbers>

namespace tether {

namespace {

void require_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw ModelError(std::string("model parameter '") + name + "' must be positive and finite");
    }
}

void require_radius(double r) {
    if (!(r > 0.0)) {
        throw ModelError("polar radius r must be strictly positive");
    }
}

}  // namespace

void ModelParams::validate() const {
    require_positive(m, "m");
    require_positive(m_bar, "m_bar");
    require_positive(M, "M");
    require_positive(M_l, "M_l");
    require_positive(g, "g");
    require_positive(c_theta, "c_theta");
    require_positive(c_r, "c_r");
    require_positive(c_l, "c_l");
    require_positive(c_X, "c_X");
    require_positive(T_theta, "T_theta");
    require_positive(T_r, "T_r");
    require_positive(T_l, "T_l");
    require_positive(T_X, "T_X");
    require_positive(u_max, "u_max");
    require_positive(u_max_l, "u_max_l");
    require_positive(u_max_X, "u_max_X");
}

SystemState SystemState::hover(double r, double X, const ModelParams& p) {
    SystemState s;
    s.x[kR] = r;
    s.x[kL] = r;
    s.x[kX] = X;
    s.x[kFL] = -p.m_bar * p.g;
    return s;
}

double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    if (a > -std::numbers::pi && a <= std::numbers::pi) return a;
    double w = std::fmod(a + std::numbers::pi, two_pi);
    if (w <= 0.0) w += two_pi;
    return w - std::numbers::pi;
}

CartesianPoint cartesian_from_polar(double theta, double r, double X) {
    require_radius(r);
    return {X - r * std::sin(theta), r * std::cos(theta)};
}

PolarPoint polar_from_cartesian(double x, double d, double X) {
    const double dx = X - x;
    const double r = std::hypot(dx, d);
    if (!(r > 0.0)) {
        throw ModelError("UUV coincides with the tether anchor; polar radius is zero");
    }
    return {std::atan2(dx, d), r};
}

CartesianPoint cartesian_velocity(const SystemState& s) {
    const double st = std::sin(s.theta());
    const double ct = std::cos(s.theta());
    return {s.X_dot() - s.r_dot() * st - s.r() * s.theta_dot() * ct,
            s.r_dot() * ct - s.r() * s.theta_dot() * st};
}

DragForces drag_forces(const SystemState& s, const PlantParams& plant, const ModelParams& p) {
    const double st = std::sin(s.theta());
    const double ct = std::cos(s.theta());
    const double v_theta = s.X_dot() * ct + s.r() * s.theta_dot();
    const double v_r = s.X_dot() * st + s.r_dot();
    return {p.c_X * s.X_dot(), p.c_l * s.l_dot(), plant.c_theta * std::abs(v_theta) * v_theta,
            plant.c_r * std::abs(v_r) * v_r};
}

DragForces drag_forces(const SystemState& s, const ModelParams& p) {
    return drag_forces(s, PlantParams::from(p), p);
}

Eigen::Vector4d accelerations(const SystemState& s, const PlantParams& plant,
                              const ModelParams& p) {
    const double r = s.r();
    require_radius(r);
    const double st = std::sin(s.theta());
    const double ct = std::cos(s.theta());
    const double thd = s.theta_dot();
    const double rd = s.r_dot();
    const double Xd = s.X_dot();

    const double v_theta = Xd * ct + r * thd;
    const double v_r = Xd * st + rd;
    const double eta_theta = plant.c_theta * std::abs(v_theta) * v_theta;
    const double eta_r = plant.c_r * std::abs(v_r) * v_r;
    // Taut tether: the winch drag acts on r_dot (= l_dot).
    const double eta_l = p.c_l * rd;
    const double eta_X = p.c_X * Xd;

    const double Xdd = (s.x[kFX] - eta_X) / p.M;
    const double mg = plant.m_bar * p.g;
    const double thdd =
        (plant.m * Xdd * ct - 2.0 * plant.m * rd * thd - mg * st - eta_theta + s.x[kFTheta]) /
        (plant.m * r);
    const double rdd = (plant.m * Xdd * st + plant.m * r * thd * thd + mg * ct - eta_r - eta_l +
                        s.x[kFR] + s.x[kFL]) /
                       (plant.m + p.M_l);
    return {thdd, rdd, rdd, Xdd};
}

Vec12 drift(const SystemState& s, const ControlInput& u, const PlantParams& plant,
            const ModelParams& p) {
    Vec12 dx;
    dx.segment<4>(kTheta) = s.q_dot();
    dx.segment<4>(kThetaDot) = accelerations(s, plant, p);
    dx.segment<4>(kFTheta) = (u - s.forces()).cwiseQuotient(p.lag_constants());
    return dx;
}

Mat12 drift_jacobian(const SystemState& s, const PlantParams& plant, const ModelParams& p) {
    const double r = s.r();
    require_radius(r);
    const double st = std::sin(s.theta());
    const double ct = std::cos(s.theta());
    const double thd = s.theta_dot();
    const double rd = s.r_dot();
    const double Xd = s.X_dot();
    const double m = plant.m;
    const double mg = plant.m_bar * p.g;

    const double v_theta = Xd * ct + r * thd;
    const double v_r = Xd * st + rd;
    const double eta_theta = plant.c_theta * std::abs(v_theta) * v_theta;
    const double deta_theta = 2.0 * plant.c_theta * std::abs(v_theta);
    const double deta_r = 2.0 * plant.c_r * std::abs(v_r);

    const double Xdd = (s.x[kFX] - p.c_X * Xd) / p.M;
    const double dXdd_dXd = -p.c_X / p.M;
    const double dXdd_dfX = 1.0 / p.M;

    const double n_theta = m * Xdd * ct - 2.0 * m * rd * thd - mg * st - eta_theta + s.x[kFTheta];
    const double mr = m * r;
    const double inv_r_mass = 1.0 / (m + p.M_l);

    Mat12 J = Mat12::Zero();
    J(kTheta, kThetaDot) = 1.0;
    J(kR, kRDot) = 1.0;
    J(kL, kLDot) = 1.0;
    J(kX, kXDot) = 1.0;

    // theta_dd = n_theta / (m r)
    J(kThetaDot, kTheta) = (-m * Xdd * st - mg * ct + deta_theta * Xd * st) / mr;
    J(kThetaDot, kR) = (-deta_theta * thd) / mr - n_theta / (mr * r);
    J(kThetaDot, kThetaDot) = (-2.0 * m * rd - deta_theta * r) / mr;
    J(kThetaDot, kRDot) = (-2.0 * m * thd) / mr;
    J(kThetaDot, kXDot) = (m * ct * dXdd_dXd - deta_theta * ct) / mr;
    J(kThetaDot, kFTheta) = 1.0 / mr;
    J(kThetaDot, kFX) = (m * ct * dXdd_dfX) / mr;

    // r_dd = n_r / (m + M_l), l_dd = r_dd
    J(kRDot, kTheta) = (m * Xdd * ct - mg * st - deta_r * Xd * ct) * inv_r_mass;
    J(kRDot, kR) = (m * thd * thd) * inv_r_mass;
    J(kRDot, kThetaDot) = (2.0 * m * r * thd) * inv_r_mass;
    J(kRDot, kRDot) = (-deta_r - p.c_l) * inv_r_mass;
    J(kRDot, kXDot) = (m * st * dXdd_dXd - deta_r * st) * inv_r_mass;
    J(kRDot, kFR) = inv_r_mass;
    J(kRDot, kFL) = inv_r_mass;
    J(kRDot, kFX) = (m * st * dXdd_dfX) * inv_r_mass;
    J.row(kLDot) = J.row(kRDot);

    J(kXDot, kXDot) = dXdd_dXd;
    J(kXDot, kFX) = dXdd_dfX;

    const Eigen::Vector4d T = p.lag_constants();
    for (int i = 0; i < 4; ++i) J(kFTheta + i, kFTheta + i) = -1.0 / T[i];
    return J;
}

OutputY output(const SystemState& s) {
    const auto c = cartesian_from_polar(s.theta(), s.r(), s.X());
    return {c.x, c.d, s.X()};
}

double mechanical_energy(const SystemState& s, const ModelParams& p) {
    const auto v = cartesian_velocity(s);
    const double d = s.r() * std::cos(s.theta());
    return 0.5 * p.m * (v.x * v.x + v.d * v.d) + 0.5 * p.M * s.X_dot() * s.X_dot() -
           p.m_bar * p.g * d;
}

}  // namespace tether
