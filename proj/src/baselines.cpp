#include "tether/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace tether {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool blocked(const Eigen::Vector2d& p, std::span<const Obstacle> obstacles, double inflation) {
    for (const auto& o : obstacles) {
        if (std::hypot(p.x() - o.x, p.y() - o.d) < o.a + inflation) return true;
    }
    return false;
}

struct WeightSet {
    std::vector<double> w;
    std::size_t best = 0;
};

WeightSet importance_weights(std::span<const double> costs, double lambda) {
    if (costs.empty()) throw BaselineError("MPPI needs at least one sample");
    if (!(lambda > 0.0)) throw BaselineError("MPPI temperature must be positive");
    WeightSet ws;
    ws.best = static_cast<std::size_t>(std::min_element(costs.begin(), costs.end()) - costs.begin());
    const double s_min = costs[ws.best];
    ws.w.resize(costs.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < costs.size(); ++i) {
        ws.w[i] = std::exp(-(costs[i] - s_min) / lambda);
        sum += ws.w[i];
    }
    for (double& w : ws.w) w /= sum;
    return ws;
}

ControlInput hover_input(const PlantParams& expected, const ModelParams& p) {
    return {0.0, 0.0, -expected.m_bar * p.g, 0.0};
}

}  // namespace

// =============================================================================
// A*
// =============================================================================

void GridSpec::validate() const {
    if (!(cell > 0.0)) throw BaselineError("grid cell size must be positive");
    if (!(x_max > x_min) || !(d_max > d_min)) throw BaselineError("grid bounds are empty");
    if (connectivity != 4 && connectivity != 8) throw BaselineError("grid connectivity must be 4 or 8");
    if (!(inflation >= 0.0)) throw BaselineError("inflation must be non-negative");
}

int GridSpec::nx() const { return static_cast<int>(std::lround((x_max - x_min) / cell)) + 1; }
int GridSpec::nd() const { return static_cast<int>(std::lround((d_max - d_min) / cell)) + 1; }

bool GridSpec::contains(const Eigen::Vector2d& p) const {
    constexpr double kTol = 1e-9;
    return p.x() >= x_min - kTol && p.x() <= x_max + kTol && p.y() >= d_min - kTol &&
           p.y() <= d_max + kTol;
}

GridPath astar_plan(const GridSpec& grid, const Eigen::Vector2d& start, const Eigen::Vector2d& goal,
                    std::span<const Obstacle> obstacles) {
    grid.validate();
    if (!grid.contains(start) || !grid.contains(goal)) {
        throw BaselineError("start and goal must lie inside the grid bounds");
    }
    if (blocked(start, obstacles, grid.inflation) || blocked(goal, obstacles, grid.inflation)) {
        throw PlanningError("no path: start or goal inside an inflated obstacle");
    }
    if ((start - goal).norm() == 0.0) return {{start}, 0.0};

    const int nx = grid.nx();
    const int nd = grid.nd();
    const auto node_of = [&](const Eigen::Vector2d& p) {
        const int i = std::clamp(static_cast<int>(std::lround((p.x() - grid.x_min) / grid.cell)), 0, nx - 1);
        const int j = std::clamp(static_cast<int>(std::lround((p.y() - grid.d_min) / grid.cell)), 0, nd - 1);
        return j * nx + i;
    };
    const auto position = [&](int n) {
        return Eigen::Vector2d(grid.x_min + (n % nx) * grid.cell, grid.d_min + (n / nx) * grid.cell);
    };
    const std::size_t count = static_cast<std::size_t>(nx) * static_cast<std::size_t>(nd);
    std::vector<char> free(count);
    for (std::size_t n = 0; n < count; ++n) {
        free[n] = blocked(position(static_cast<int>(n)), obstacles, grid.inflation) ? 0 : 1;
    }
    const int s = node_of(start);
    const int g = node_of(goal);
    if (!free[static_cast<std::size_t>(s)] || !free[static_cast<std::size_t>(g)]) {
        throw PlanningError("no path: start or goal node is blocked");
    }

    static constexpr int kDi[8] = {1, -1, 0, 0, 1, 1, -1, -1};
    static constexpr int kDj[8] = {0, 0, 1, -1, 1, -1, 1, -1};
    const Eigen::Vector2d goal_pos = position(g);
    std::vector<double> cost(count, kInf);
    std::vector<int> parent(count, -1);
    std::vector<char> closed(count, 0);
    // (f, node); ties resolve on the lower node index.
    using Entry = std::pair<double, int>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
    cost[static_cast<std::size_t>(s)] = 0.0;
    open.emplace((position(s) - goal_pos).norm(), s);
    while (!open.empty()) {
        const int n = open.top().second;
        open.pop();
        const auto un = static_cast<std::size_t>(n);
        if (closed[un]) continue;
        closed[un] = 1;
        if (n == g) break;
        const int i = n % nx;
        const int j = n / nx;
        for (int k = 0; k < grid.connectivity; ++k) {
            const int ii = i + kDi[k];
            const int jj = j + kDj[k];
            if (ii < 0 || jj < 0 || ii >= nx || jj >= nd) continue;
            const int m = jj * nx + ii;
            const auto um = static_cast<std::size_t>(m);
            if (!free[um] || closed[um]) continue;
            const double step = (k < 4 ? 1.0 : std::sqrt(2.0)) * grid.cell;
            const double c = cost[un] + step;
            if (c < cost[um]) {
                cost[um] = c;
                parent[um] = n;
                open.emplace(c + (position(m) - goal_pos).norm(), m);
            }
        }
    }
    if (!closed[static_cast<std::size_t>(g)]) throw PlanningError("no path: goal unreachable");

    std::vector<int> nodes;
    for (int n = g; n != -1; n = parent[static_cast<std::size_t>(n)]) nodes.push_back(n);
    std::reverse(nodes.begin(), nodes.end());

    GridPath path;
    path.waypoints.push_back(start);
    for (int n : nodes) {
        const Eigen::Vector2d q = position(n);
        if ((q - path.waypoints.back()).norm() > 1e-12) path.waypoints.push_back(q);
    }
    if ((goal - path.waypoints.back()).norm() > 1e-12) path.waypoints.push_back(goal);
    for (std::size_t k = 1; k < path.waypoints.size(); ++k) {
        path.length += (path.waypoints[k] - path.waypoints[k - 1]).norm();
    }
    return path;
}

TimedPath::TimedPath(GridPath path, double t_f) : path_(std::move(path)), t_f_(t_f) {
    if (path_.waypoints.empty()) throw BaselineError("timed path needs at least one waypoint");
    if (!(t_f_ > 0.0)) throw BaselineError("timed path horizon must be positive");
    cumulative_.push_back(0.0);
    for (std::size_t k = 1; k < path_.waypoints.size(); ++k) {
        cumulative_.push_back(cumulative_.back() +
                              (path_.waypoints[k] - path_.waypoints[k - 1]).norm());
    }
}

std::pair<std::size_t, double> TimedPath::locate(double t) const {
    const double total = cumulative_.back();
    const double s = total * std::clamp(t, 0.0, t_f_) / t_f_;
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
    std::size_t seg = it == cumulative_.begin() ? 0 : static_cast<std::size_t>(it - cumulative_.begin()) - 1;
    seg = std::min(seg, cumulative_.size() >= 2 ? cumulative_.size() - 2 : 0);
    return {seg, s - cumulative_[seg]};
}

Eigen::Vector2d TimedPath::position(double t) const {
    if (path_.waypoints.size() == 1 || cumulative_.back() == 0.0) return path_.waypoints.front();
    const auto [seg, offset] = locate(t);
    const Eigen::Vector2d a = path_.waypoints[seg];
    const Eigen::Vector2d b = path_.waypoints[seg + 1];
    const double len = cumulative_[seg + 1] - cumulative_[seg];
    if (len == 0.0) return a;
    return a + (b - a) * std::min(1.0, offset / len);
}

Eigen::Vector2d TimedPath::velocity(double t) const {
    if (path_.waypoints.size() == 1 || cumulative_.back() == 0.0 || t >= t_f_ || t < 0.0) {
        return Eigen::Vector2d::Zero();
    }
    const auto [seg, offset] = locate(t);
    (void)offset;
    const Eigen::Vector2d dir = path_.waypoints[seg + 1] - path_.waypoints[seg];
    const double len = dir.norm();
    if (len == 0.0) return Eigen::Vector2d::Zero();
    return dir / len * (cumulative_.back() / t_f_);
}

// =============================================================================
// PID
// =============================================================================

void PIDGains::validate() const {
    if (!K_P.allFinite() || !K_I.allFinite() || !K_D.allFinite()) {
        throw BaselineError("PID gains must be finite");
    }
    if ((K_I.array() < 0.0).any()) throw BaselineError("integral gains must be non-negative");
}

ControlInput pid_command(const PidReference& ref, const SystemState& s, const PIDGains& gains,
                         PidState& state, double dt, const PlantParams& expected,
                         const ModelParams& p) {
    const OutputY y = output(s);
    const CartesianPoint v = cartesian_velocity(s);
    const Eigen::Vector3d e = ref.y.vec() - y.vec();
    const Eigen::Vector3d e_dot = ref.rate - Eigen::Vector3d(v.x, v.d, s.X_dot());

    const Eigen::Vector3d limit(p.u_max, p.u_max, p.u_max_X);
    state.integral += dt * e;
    for (int c = 0; c < 3; ++c) {
        if (gains.K_I[c] > 0.0) {
            const double cap = limit[c] / gains.K_I[c];
            state.integral[c] = std::clamp(state.integral[c], -cap, cap);
        }
    }
    const Eigen::Vector3d F = gains.K_P.cwiseProduct(e) + gains.K_I.cwiseProduct(state.integral) +
                              gains.K_D.cwiseProduct(e_dot);
    const double st = std::sin(s.theta());
    const double ct = std::cos(s.theta());
    ControlInput u;
    u[0] = -ct * F[0] - st * F[1];  // tangential unit vector (-cos, -sin)
    u[1] = -st * F[0] + ct * F[1];  // radial unit vector (-sin, cos)
    u[2] = -expected.m_bar * p.g * ct;
    u[3] = F[2];
    return u;
}

ControlInput pid_track(const PidReference& ref, const SystemState& s, const PIDGains& gains,
                       PidState& state, double dt, const PlantParams& expected,
                       const ModelParams& p) {
    return smooth_sat(pid_command(ref, s, gains, state, dt, expected, p), p.input_bounds());
}

// =============================================================================
// CBF
// =============================================================================

BarrierTerms barrier_terms(const SystemState& s, const Obstacle& o, const PlantParams& expected,
                           const ModelParams& p) {
    const OutputY y = output(s);
    const CartesianPoint v = cartesian_velocity(s);
    const Eigen::Vector2d rel(y.x - o.x, y.d - o.d);
    const Eigen::Vector2d vel(v.x, v.d);
    const double st = std::sin(s.theta());
    const double ct = std::cos(s.theta());
    const double r = s.r();
    const double thd = s.theta_dot();
    const double rd = s.r_dot();

    const auto h_ddot = [&](const ControlInput& f) {
        SystemState applied = s;
        applied.x.segment<4>(kFTheta) = f;
        const Eigen::Vector4d a = accelerations(applied, expected, p);
        const double thdd = a[0];
        const double rdd = a[1];
        const double Xdd = a[3];
        const Eigen::Vector2d acc(
            Xdd - rdd * st - 2.0 * rd * thd * ct - r * thdd * ct + r * thd * thd * st,
            rdd * ct - 2.0 * rd * thd * st - r * thdd * st - r * thd * thd * ct);
        return 2.0 * vel.squaredNorm() + 2.0 * rel.dot(acc);
    };

    BarrierTerms b;
    b.h = rel.squaredNorm() - o.a * o.a;
    b.h_dot = 2.0 * rel.dot(vel);
    b.c0 = h_ddot(ControlInput::Zero());
    for (int j = 0; j < kInputDim; ++j) {
        b.c[j] = h_ddot(ControlInput::Unit(j)) - b.c0;
    }
    return b;
}

CbfResult cbf_filter(const ControlInput& u_nom, const SystemState& s, const Obstacle& o,
                     const PlantParams& expected, const ModelParams& p, const CbfGains& gains) {
    const Eigen::Vector4d bounds = p.input_bounds();
    const BarrierTerms b = barrier_terms(s, o, expected, p);
    const Eigen::Vector4d& c = b.c;
    const double offset = b.c0 + gains.k1 * b.h_dot + gains.k0 * b.h;
    const double rhs = -offset;  // need c^T u >= rhs

    CbfResult out;
    out.h = b.h;
    const ControlInput u0 = u_nom.cwiseMax(-bounds).cwiseMin(bounds);
    if (c.dot(u0) >= rhs) {
        out.u = u0;
        out.constraint_value = c.dot(u0) + offset;
        return out;
    }
    const double best = c.cwiseAbs().dot(bounds);
    if (best < rhs) {
        for (int i = 0; i < kInputDim; ++i) out.u[i] = c[i] >= 0.0 ? bounds[i] : -bounds[i];
        out.infeasible = true;
        out.active = true;
        out.constraint_value = c.dot(out.u) + offset;
        return out;
    }

    // u(nu) = clip(u0 + nu c); c^T u(nu) is piecewise linear and nondecreasing in nu.
    std::vector<double> breaks;
    for (int i = 0; i < kInputDim; ++i) {
        if (c[i] == 0.0) continue;
        const double target = c[i] > 0.0 ? bounds[i] : -bounds[i];
        breaks.push_back(std::max(0.0, (target - u0[i]) / c[i]));
    }
    std::sort(breaks.begin(), breaks.end());
    const auto clip_at = [&](double nu) {
        return ControlInput((u0 + nu * c).cwiseMax(-bounds).cwiseMin(bounds));
    };
    double lo = 0.0;
    double nu = breaks.empty() ? 0.0 : breaks.back();
    for (double hi : breaks) {
        if (c.dot(clip_at(hi)) >= rhs) {
            // Linear on [lo, hi] with slope sum of c_i^2 over unclipped components.
            const ControlInput ul = clip_at(lo);
            double slope = 0.0;
            const ControlInput probe = u0 + 0.5 * (lo + hi) * c;
            for (int i = 0; i < kInputDim; ++i) {
                if (std::abs(probe[i]) < bounds[i]) slope += c[i] * c[i];
            }
            nu = slope > 0.0 ? lo + (rhs - c.dot(ul)) / slope : hi;
            break;
        }
        lo = hi;
    }
    out.u = clip_at(nu);
    out.active = true;
    out.constraint_value = c.dot(out.u) + offset;
    return out;
}

CbfResult cbf_filter(const ControlInput& u_nom, const SystemState& s,
                     std::span<const Obstacle> obstacles, const PlantParams& expected,
                     const ModelParams& p, const CbfGains& gains) {
    if (obstacles.empty()) {
        CbfResult out;
        out.u = u_nom;
        out.h = kInf;
        return out;
    }
    const OutputY y = output(s);
    std::size_t nearest = 0;
    double h_min = kInf;
    for (std::size_t k = 0; k < obstacles.size(); ++k) {
        const auto& o = obstacles[k];
        const double h = (y.x - o.x) * (y.x - o.x) + (y.d - o.d) * (y.d - o.d) - o.a * o.a;
        if (h < h_min) {
            h_min = h;
            nearest = k;
        }
    }
    return cbf_filter(u_nom, s, obstacles[nearest], expected, p, gains);
}

// =============================================================================
// MPPI
// =============================================================================

void MPPIHyper::validate() const {
    if (samples < 1) throw BaselineError("MPPI sample count must be at least 1");
    if (!(horizon > 0.0) || !(lambda > 0.0) || !(replan_period > 0.0)) {
        throw BaselineError("MPPI horizon, temperature and replan period must be positive");
    }
    if (!noise_std.allFinite() || (noise_std.array() < 0.0).any()) {
        throw BaselineError("MPPI noise deviations must be non-negative");
    }
    if (!(terminal_weight >= 0.0) || !(penetration_weight >= 0.0) || !R.allFinite()) {
        throw BaselineError("MPPI cost weights must be non-negative");
    }
}

ControlInput mppi_combine(std::span<const double> costs, std::span<const ControlInput> first_inputs,
                          double lambda) {
    if (costs.size() != first_inputs.size()) throw BaselineError("MPPI cost/input size mismatch");
    const WeightSet ws = importance_weights(costs, lambda);
    const ControlInput& base = first_inputs[ws.best];
    ControlInput delta = ControlInput::Zero();
    for (std::size_t i = 0; i < costs.size(); ++i) delta += ws.w[i] * (first_inputs[i] - base);
    return base + delta;
}

MppiController::MppiController(MPPIHyper hyper, ModelParams params, PlantParams expected,
                               std::vector<Obstacle> obstacles, Eigen::Vector3d y_d, double dt,
                               std::uint64_t seed)
    : hyper_(std::move(hyper)),
      params_(std::move(params)),
      expected_(expected),
      obstacles_(std::move(obstacles)),
      y_d_(std::move(y_d)),
      dt_(dt),
      seed_(seed) {
    hyper_.validate();
    params_.validate();
    if (!(dt_ > 0.0)) throw BaselineError("MPPI step must be positive");
    bounds_ = params_.input_bounds();
    steps_ = std::max<std::size_t>(1, grid_steps(hyper_.horizon, dt_));
    replan_every_ = std::max<std::size_t>(1, grid_steps(hyper_.replan_period, dt_));
    sequence_.assign(steps_, smooth_sat(hover_input(expected_, params_), bounds_));
}

double MppiController::rollout_cost(const SystemState& x0, const std::vector<ControlInput>& seq) const {
    static const Vec12 kZero = Vec12::Zero();
    const DiffusionSpec none = DiffusionSpec::none();
    SystemState x = x0;
    double cost = 0.0;
    for (std::size_t k = 0; k < steps_; ++k) {
        const ControlInput& mu = seq[k];
        cost += dt_ * mu.dot(hyper_.R * mu);
        SystemState next = em_step(x, mu, expected_, none, dt_, kZero, params_);
        if (breaches_floor(next) || !next.x.allFinite()) {
            return cost + hyper_.penetration_weight * dt_ * static_cast<double>(steps_ - k);
        }
        x = next;
        const OutputY y = output(x);
        for (const auto& o : obstacles_) {
            const double pen = std::max(0.0, o.a - std::hypot(y.x - o.x, y.d - o.d));
            cost += hyper_.penetration_weight * dt_ * pen * pen;
        }
    }
    return cost + hyper_.terminal_weight * (output(x).vec() - y_d_).squaredNorm();
}

void MppiController::replan(const SystemState& x) {
    // Warm start: drop the inputs already played.
    if (offset_ > 0) {
        const std::size_t shift = std::min(offset_, steps_);
        const ControlInput last = sequence_.back();
        std::vector<ControlInput> shifted(sequence_.begin() + static_cast<std::ptrdiff_t>(shift),
                                          sequence_.end());
        shifted.resize(steps_, last);
        sequence_ = std::move(shifted);
    }
    Rng rng(derive_seed(seed_, {static_cast<std::uint64_t>(calls_)}));
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto K = static_cast<std::size_t>(hyper_.samples);
    std::vector<std::vector<ControlInput>> seqs(K, sequence_);
    std::vector<double> costs(K);
    for (std::size_t i = 0; i < K; ++i) {
        if (i > 0) {
            for (auto& u : seqs[i]) {
                for (int c = 0; c < kInputDim; ++c) u[c] += hyper_.noise_std[c] * normal(rng);
                u = u.cwiseMax(-bounds_).cwiseMin(bounds_);
            }
        }
        costs[i] = rollout_cost(x, seqs[i]);
    }
    const WeightSet ws = importance_weights(costs, hyper_.lambda);
    for (std::size_t k = 0; k < steps_; ++k) {
        const ControlInput& base = seqs[ws.best][k];
        ControlInput delta = ControlInput::Zero();
        for (std::size_t i = 0; i < K; ++i) delta += ws.w[i] * (seqs[i][k] - base);
        sequence_[k] = (base + delta).cwiseMax(-bounds_).cwiseMin(bounds_);
    }
    offset_ = 0;
}

ControlInput MppiController::step(const SystemState& x) {
    if (calls_ % replan_every_ == 0) replan(x);
    const ControlInput u = sequence_[std::min(offset_, steps_ - 1)];
    ++offset_;
    ++calls_;
    return u;
}

ControlInput mppi_step(const SystemState& x, const Eigen::Vector3d& y_d,
                       std::span<const Obstacle> obstacles, const MPPIHyper& hyper,
                       std::uint64_t seed, const PlantParams& expected, const ModelParams& p,
                       double dt) {
    MppiController ctrl(hyper, p, expected, {obstacles.begin(), obstacles.end()}, y_d, dt, seed);
    return ctrl.step(x);
}

}  // namespace tether
