// Planar tethered UUV-USV plant.
// Pure stateless functions: taut-tether Euler-Lagrange dynamics, drag, actuator lag, output map.
#pragma once

#include <stdexcept>
#include <string>

#include "tether/types.hpp"

namespace tether {

class ModelError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Physical constants of the plant. Defaults are the nominal simulation values.
///
/// `u_max` bounds the UUV thrusters (theta and r channels). The winch and the
/// USV propeller carry their own bounds `u_max_l` and `u_max_X`: the winch has to
/// hold the apparent weight (882 N nominal), which the 400 N thruster bound cannot.
struct ModelParams {
    double m = 120.0;       // UUV mass in air [kg]
    double m_bar = 90.0;    // apparent underwater mass [kg]
    double M = 1075.0;      // USV mass [kg]
    double M_l = 30.0;      // winch mass [kg]
    double g = 9.8;         // [m/s^2]
    double c_theta = 120.0; // quadratic drag [N s^2/m^2]
    double c_r = 120.0;
    double c_l = 300.0;     // linear viscosity [N s/m]
    double c_X = 1000.0;
    double T_theta = 0.1;   // actuator lag [s]
    double T_r = 0.1;
    double T_l = 0.5;
    double T_X = 1.0;
    double u_max = 400.0;   // thruster bound [N]
    double u_max_l = 2000.0;
    double u_max_X = 2000.0;

    void validate() const;

    /// Per-channel saturation bounds in (theta, r, l, X) order.
    [[nodiscard]] Eigen::Vector4d input_bounds() const {
        return {u_max, u_max, u_max_l, u_max_X};
    }
    [[nodiscard]] Eigen::Vector4d lag_constants() const {
        return {T_theta, T_r, T_l, T_X};
    }
};

/// The uncertain plant entries of xi. They override the matching ModelParams fields.
struct PlantParams {
    double m = 120.0;
    double m_bar = 90.0;
    double c_theta = 120.0;
    double c_r = 120.0;

    static PlantParams from(const ModelParams& p) {
        return {p.m, p.m_bar, p.c_theta, p.c_r};
    }
    bool operator==(const PlantParams&) const = default;
};

/// Circular obstacle in the (x, d) plane.
struct Obstacle {
    double x = 0.0;  // [m]
    double d = 0.0;  // depth [m]
    double a = 1.0;  // wrapping radius [m]
    bool operator==(const Obstacle&) const = default;
};

/// x = (theta, r, l, X, theta_dot, r_dot, l_dot, X_dot, f_theta, f_r, f_l, f_X).
struct SystemState {
    Vec12 x = Vec12::Zero();

    SystemState() = default;
    explicit SystemState(const Vec12& v) : x(v) {}

    double theta() const { return x[kTheta]; }
    double r() const { return x[kR]; }
    double l() const { return x[kL]; }
    double X() const { return x[kX]; }
    double theta_dot() const { return x[kThetaDot]; }
    double r_dot() const { return x[kRDot]; }
    double l_dot() const { return x[kLDot]; }
    double X_dot() const { return x[kXDot]; }
    Eigen::Vector4d q() const { return x.segment<4>(kTheta); }
    Eigen::Vector4d q_dot() const { return x.segment<4>(kThetaDot); }
    Eigen::Vector4d forces() const { return x.segment<4>(kFTheta); }

    /// Hanging at rest below the USV, winch carrying the apparent weight.
    static SystemState hover(double r, double X, const ModelParams& p);

    bool operator==(const SystemState& o) const { return x == o.x; }
};

/// Measured output y = (x, d, X).
struct OutputY {
    double x = 0.0;
    double d = 0.0;
    double X = 0.0;

    Eigen::Vector3d vec() const { return {x, d, X}; }
};

struct CartesianPoint {
    double x = 0.0;
    double d = 0.0;
};

struct PolarPoint {
    double theta = 0.0;
    double r = 0.0;
};

struct DragForces {
    double eta_X = 0.0;
    double eta_l = 0.0;
    double eta_theta = 0.0;
    double eta_r = 0.0;
};

/// x = X - r sin(theta), d = r cos(theta). Throws ModelError for r <= 0.
CartesianPoint cartesian_from_polar(double theta, double r, double X);

/// Inverse map; throws ModelError when the UUV coincides with the anchor (X, 0).
PolarPoint polar_from_cartesian(double x, double d, double X);

/// UUV Cartesian velocity (x_dot, d_dot) from polar rates.
CartesianPoint cartesian_velocity(const SystemState& s);

DragForces drag_forces(const SystemState& s, const ModelParams& p);
DragForces drag_forces(const SystemState& s, const PlantParams& plant, const ModelParams& p);

/// Generalized accelerations (theta_dd, r_dd, l_dd, X_dd) for the state's force vector.
///
/// X_dd is solved first from the USV row and substituted into the theta and r rows.
Eigen::Vector4d accelerations(const SystemState& s, const PlantParams& plant,
                              const ModelParams& p);

/// State derivative b(x, u, xi) = f_sys(x) + G_sys u. Throws ModelError for r <= 0.
Vec12 drift(const SystemState& s, const ControlInput& u, const PlantParams& plant,
            const ModelParams& p);

inline Vec12 drift(const SystemState& s, const ControlInput& u, const ModelParams& p) {
    return drift(s, u, PlantParams::from(p), p);
}

/// d drift / d x. The input Jacobian is the constant diag(1/T) block on the force rows.
Mat12 drift_jacobian(const SystemState& s, const PlantParams& plant, const ModelParams& p);

OutputY output(const SystemState& s);

/// 1/2 m |v_uuv|^2 + 1/2 M X_dot^2 - m_bar g d. Defined for any r, including r = 0.
double mechanical_energy(const SystemState& s, const ModelParams& p);

/// Wrap an angle into (-pi, pi].
double wrap_angle(double a);

}  // namespace tether
