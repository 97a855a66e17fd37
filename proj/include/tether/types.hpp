#pragma once

#include <Eigen/Dense>

namespace tether {

using Vec12 = Eigen::Matrix<double, 12, 1>;
using Mat12 = Eigen::Matrix<double, 12, 12>;
using Mat12x4 = Eigen::Matrix<double, 12, 4>;

/// Commanded actuator signals (u_theta, u_r, u_l, u_X) [N].
using ControlInput = Eigen::Vector4d;

/// Layout of the 12-dimensional state x = (q, q_dot, f).
enum StateIndex : int {
    kTheta = 0,
    kR,
    kL,
    kX,
    kThetaDot,
    kRDot,
    kLDot,
    kXDot,
    kFTheta,
    kFR,
    kFL,
    kFX,
};

constexpr int kStateDim = 12;
constexpr int kInputDim = 4;

/// Polar radius below which the taut-tether model is considered broken.
constexpr double kRMin = 0.05;

}  // namespace tether
