#include "tether/stochastic.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace tether {

namespace {

double draw(Rng& rng, Distribution kind, double center, double half_width) {
    if (half_width == 0.0) return center;
    if (kind == Distribution::kUniform) return uniform_around(rng, center, half_width);
    // Gaussian with sigma = half_width / 2, truncated to the uniform support.
    std::normal_distribution<double> n(0.0, 0.5 * half_width);
    for (;;) {
        const double z = n(rng);
        if (std::abs(z) <= half_width) return center + z;
    }
}

template <typename CommandFn>
Trajectory propagate(const RolloutSetup& setup, const PlantParams& plant,
                     const DiffusionSpec& diffusion, const NoiseRealization* noise,
                     CommandFn&& command) {
    const std::size_t n = setup.steps();
    if (noise != nullptr && noise->increments.size() < n) {
        throw StochasticError("noise realization shorter than the time grid");
    }
    Trajectory traj;
    traj.dt = setup.dt;
    traj.t.reserve(n + 1);
    traj.states.reserve(n + 1);
    traj.controls.reserve(n + 1);
    traj.outputs.reserve(n + 1);

    static const Vec12 kZeroIncrement = Vec12::Zero();
    SystemState x = setup.x0;
    for (std::size_t k = 0; k <= n; ++k) {
        const double t = static_cast<double>(k) * setup.dt;
        traj.t.push_back(t);
        traj.states.push_back(x);
        traj.outputs.push_back(output(x));
        const ControlInput mu = traj.valid ? command(k, t, x) : traj.controls.back();
        traj.controls.push_back(mu);
        if (k == n || !traj.valid) continue;
        const Vec12& dW = noise != nullptr ? noise->increments[k] : kZeroIncrement;
        SystemState next = em_step(x, mu, plant, diffusion, setup.dt, dW, setup.params);
        if (breaches_floor(next) || !next.x.allFinite()) {
            traj.valid = false;
        } else {
            x = next;
        }
    }
    return traj;
}

}  // namespace

void UncertaintySpec::validate() const {
    if (!(epsilon >= 0.0) || !(epsilon < 1.0)) {
        throw StochasticError("epsilon must lie in [0, 1) so sampled masses stay positive");
    }
    if (!(obstacle_pos_rel_err >= 0.0 && obstacle_pos_rel_err < 1.0) ||
        !(obstacle_size_rel_err >= 0.0 && obstacle_size_rel_err < 1.0)) {
        throw StochasticError("obstacle relative errors must lie in [0, 1)");
    }
    if (!(expected.m > 0.0 && expected.m_bar > 0.0 && expected.c_theta > 0.0 &&
          expected.c_r > 0.0)) {
        throw StochasticError("expected plant parameters must be positive");
    }
    for (const auto& o : obstacles) {
        if (!(o.a > 0.0) || !(o.d > 0.0) || !std::isfinite(o.x)) {
            throw StochasticError("obstacle must have positive radius and depth");
        }
    }
}

DiffusionSpec DiffusionSpec::velocity_noise(double intensity) {
    DiffusionSpec d;
    for (int i = kThetaDot; i <= kXDot; ++i) d.D(i, i) = intensity;
    return d;
}

void DiffusionSpec::validate() const {
    if (!D.allFinite()) throw StochasticError("diffusion matrix has non-finite entries");
}

NoiseRealization NoiseRealization::generate(std::uint64_t seed, std::size_t steps, double dt) {
    NoiseRealization noise;
    noise.seed = seed;
    noise.increments.resize(steps);
    Rng rng(seed);
    std::normal_distribution<double> n(0.0, std::sqrt(dt));
    for (auto& inc : noise.increments) {
        for (int i = 0; i < kStateDim; ++i) inc[i] = n(rng);
    }
    return noise;
}

NoiseRealization NoiseRealization::zeros(std::size_t steps) {
    NoiseRealization noise;
    noise.increments.assign(steps, Vec12::Zero());
    return noise;
}

UncertainParams sample_xi(const UncertaintySpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    const double eps = spec.epsilon;
    const auto& e = spec.expected;
    UncertainParams xi;
    xi.plant.m = draw(rng, spec.kind, e.m, eps * e.m);
    xi.plant.m_bar = draw(rng, spec.kind, e.m_bar, eps * e.m_bar);
    xi.plant.c_theta = draw(rng, spec.kind, e.c_theta, eps * e.c_theta);
    xi.plant.c_r = spec.shared_drag && e.c_r == e.c_theta
                       ? xi.plant.c_theta
                       : draw(rng, spec.kind, e.c_r, eps * e.c_r);
    for (const auto& o : spec.obstacles) {
        Obstacle s;
        s.x = draw(rng, spec.kind, o.x, spec.obstacle_pos_rel_err * std::abs(o.x));
        s.d = draw(rng, spec.kind, o.d, spec.obstacle_pos_rel_err * std::abs(o.d));
        s.a = draw(rng, spec.kind, o.a, spec.obstacle_size_rel_err * o.a);
        xi.obstacles.push_back(s);
    }
    return xi;
}

UncertainParams expected_xi(const UncertaintySpec& spec) {
    return {spec.expected, spec.obstacles};
}

SystemState em_step(const SystemState& s, const ControlInput& u, const PlantParams& plant,
                    const DiffusionSpec& diffusion, double dt, const Vec12& dW,
                    const ModelParams& p) {
    SystemState next(s.x + dt * drift(s, u, plant, p));
    if (!diffusion.is_zero()) next.x += diffusion.D * dW;
    next.x[kLDot] = next.x[kRDot];
    return next;
}

std::vector<ControlInput> plan_on_grid(const ControlPlan& plan, double dt, std::size_t steps) {
    std::vector<ControlInput> u(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) {
        u[k] = interpolate_plan(plan, std::min(static_cast<double>(k) * dt, plan.t_f));
    }
    return u;
}

void RolloutSetup::validate() const {
    params.validate();
    if (!(dt > 0.0)) throw StochasticError("dt must be positive");
    if (!(t_f > 0.0)) throw StochasticError("t_f must be positive");
    if (breaches_floor(x0)) throw StochasticError("initial state violates the r floor");
}

Trajectory nominal_rollout(const ControlPlan& plan, const UncertaintySpec& spec,
                           const RolloutSetup& setup) {
    const auto u = plan_on_grid(plan, setup.dt, setup.steps());
    const Eigen::Vector4d bounds = setup.params.input_bounds();
    return propagate(setup, spec.expected, DiffusionSpec::none(), nullptr,
                     [&](std::size_t k, double, const SystemState&) {
                         return smooth_sat(u[k], bounds);
                     });
}

Trajectory closed_loop_rollout(const ControlPlan& plan, const Trajectory& nominal,
                               const FeedbackGain& K, const PlantParams& plant,
                               const DiffusionSpec& diffusion, const NoiseRealization& noise,
                               const RolloutSetup& setup) {
    const std::size_t n = setup.steps();
    if (nominal.states.size() != n + 1) {
        throw StochasticError("nominal trajectory does not match the rollout grid");
    }
    const auto u = plan_on_grid(plan, setup.dt, n);
    const Eigen::Vector4d bounds = setup.params.input_bounds();
    return propagate(setup, plant, diffusion, &noise,
                     [&](std::size_t k, double, const SystemState& x) {
                         return feedback_input(u[k], nominal.states[k], x, K, bounds);
                     });
}

Trajectory open_loop_rollout(const ControlPlan& plan, const PlantParams& plant,
                             const DiffusionSpec& diffusion, const NoiseRealization& noise,
                             const RolloutSetup& setup) {
    const auto u = plan_on_grid(plan, setup.dt, setup.steps());
    const Eigen::Vector4d bounds = setup.params.input_bounds();
    return propagate(setup, plant, diffusion, &noise,
                     [&](std::size_t k, double, const SystemState&) {
                         return smooth_sat(u[k], bounds);
                     });
}

Trajectory simulate_online(const OnlineController& controller, const PlantParams& plant,
                           const DiffusionSpec& diffusion, const NoiseRealization& noise,
                           const RolloutSetup& setup) {
    return propagate(setup, plant, diffusion, &noise,
                     [&](std::size_t k, double t, const SystemState& x) {
                         return controller(k, t, x);
                     });
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
    out << "t,theta,r,l,X,theta_dot,r_dot,l_dot,X_dot,f_theta,f_r,f_l,f_X,x,d,"
           "u_theta,u_r,u_l,u_X,valid";
    for (const auto& [name, _] : traj.diagnostics) out << ',' << name;
    out << '\n';
    out << std::setprecision(17);
    for (std::size_t k = 0; k < traj.size(); ++k) {
        out << traj.t[k];
        for (int i = 0; i < kStateDim; ++i) out << ',' << traj.states[k].x[i];
        out << ',' << traj.outputs[k].x << ',' << traj.outputs[k].d;
        for (int i = 0; i < kInputDim; ++i) out << ',' << traj.controls[k][i];
        out << ',' << (traj.valid ? 1 : 0);
        for (const auto& [_, column] : traj.diagnostics) {
            out << ',' << (k < column.size() ? column[k] : 0.0);
        }
        out << '\n';
    }
}

Trajectory read_trajectory_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw StochasticError("empty trajectory CSV");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    constexpr std::size_t kFixed = 20;
    if (header.size() < kFixed || header[0] != "t" || header[kFixed - 1] != "valid") {
        throw StochasticError("trajectory CSV header mismatch");
    }
    Trajectory traj;
    traj.valid = true;
    for (std::size_t c = kFixed; c < header.size(); ++c) traj.diagnostics[header[c]];
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> v;
        while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
        if (v.size() != header.size()) throw StochasticError("ragged trajectory CSV row");
        traj.t.push_back(v[0]);
        SystemState s;
        for (int i = 0; i < kStateDim; ++i) s.x[i] = v[1 + i];
        traj.states.push_back(s);
        traj.outputs.push_back({v[13], v[14], s.X()});
        traj.controls.push_back(ControlInput(v[15], v[16], v[17], v[18]));
        traj.valid = traj.valid && v[19] != 0.0;
        std::size_t c = kFixed;
        for (auto& [_, column] : traj.diagnostics) column.push_back(v[c++]);
    }
    if (traj.t.size() >= 2) traj.dt = traj.t[1] - traj.t[0];
    return traj;
}

}  // namespace tether
