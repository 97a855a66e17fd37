#pragma once

#include <map>
#include <string>
#include <vector>

#include "tether/model.hpp"

namespace tether {

/// One rollout on a uniform time grid.
///
/// `controls[k]` is the input applied on [t_k, t_{k+1}); the final entry is the
/// input the control law would issue at t_f and only enters trapezoid integrals.
/// After an r-floor breach the remaining grid points repeat the last valid state
/// and `valid` is false.
struct Trajectory {
    double dt = 0.05;
    std::vector<double> t;
    std::vector<SystemState> states;
    std::vector<ControlInput> controls;
    std::vector<OutputY> outputs;
    bool valid = true;
    /// Optional per-step diagnostic columns (e.g. CBF activity), appended to the CSV.
    std::map<std::string, std::vector<double>> diagnostics;

    [[nodiscard]] std::size_t size() const { return states.size(); }
    [[nodiscard]] double t_f() const { return t.empty() ? 0.0 : t.back(); }
    [[nodiscard]] const SystemState& final_state() const { return states.back(); }
    [[nodiscard]] const OutputY& final_output() const { return outputs.back(); }
};

/// Number of integration steps covering [0, t_f] with step dt.
inline std::size_t grid_steps(double t_f, double dt) {
    return static_cast<std::size_t>(t_f / dt + 0.5);
}

}  // namespace tether
