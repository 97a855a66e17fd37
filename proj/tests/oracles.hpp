// Independent reference computations shared by the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "tether/baselines.hpp"
#include "tether/optimizer.hpp"

namespace oracle {

using namespace tether;

/// Max |E(t) - E(0)| over `duration` seconds for a drag-free pendulum with the
/// tether length frozen by the radial force.
inline double frozen_pendulum_energy_error(double dt, double duration = 10.0) {
    ModelParams p;
    p.c_theta = p.c_r = p.c_l = p.c_X = 0.0;
    const PlantParams plant = PlantParams::from(p);
    SystemState s;
    s.x[kTheta] = 0.3;
    s.x[kR] = s.x[kL] = 2.0;
    const double e0 = mechanical_energy(s, p);
    double worst = 0.0;
    const auto steps = static_cast<int>(std::lround(duration / dt));
    for (int k = 0; k < steps; ++k) {
        // Cancel the radial row: f_r = -(m r theta_dot^2 + m_bar g cos theta).
        s.x[kFR] = -(p.m * s.r() * s.theta_dot() * s.theta_dot() + p.m_bar * p.g * std::cos(s.theta()));
        s.x[kFL] = 0.0;
        s = em_step(s, s.forces(), plant, DiffusionSpec::none(), dt, Vec12::Zero(), p);
        worst = std::max(worst, std::abs(mechanical_energy(s, p) - e0));
    }
    return worst;
}

/// min over a uniform s grid of s + 1/(alpha N) sum max(0, m_i - s).
inline double grid_cvar(std::span<const double> m, double alpha, double step = 1e-4) {
    const auto [lo, hi] = std::minmax_element(m.begin(), m.end());
    const double n = static_cast<double>(m.size());
    double best = std::numeric_limits<double>::infinity();
    const auto count = static_cast<long>(std::ceil((*hi - *lo + 2.0) / step));
    for (long k = 0; k <= count; ++k) {
        const double s = *lo - 1.0 + static_cast<double>(k) * step;
        double tail = 0.0;
        for (double v : m) tail += std::max(0.0, v - s);
        best = std::min(best, s + tail / (alpha * n));
    }
    return best;
}

/// Bellman-Ford shortest path length between lattice nodes (ia, ja) and (ib, jb);
/// +inf when unreachable. Nodes within a + inflation of an obstacle are removed.
inline double lattice_shortest_path(const GridSpec& grid, std::span<const Obstacle> obstacles, int ia,
                                    int ja, int ib, int jb) {
    const int nx = grid.nx();
    const int nd = grid.nd();
    const auto idx = [nx](int i, int j) { return j * nx + i; };
    std::vector<bool> free(static_cast<std::size_t>(nx * nd), true);
    for (int j = 0; j < nd; ++j) {
        for (int i = 0; i < nx; ++i) {
            const double x = grid.x_min + i * grid.cell;
            const double d = grid.d_min + j * grid.cell;
            for (const auto& o : obstacles) {
                if (std::hypot(x - o.x, d - o.d) < o.a + grid.inflation) free[idx(i, j)] = false;
            }
        }
    }
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(free.size(), inf);
    if (!free[idx(ia, ja)] || !free[idx(ib, jb)]) return inf;
    dist[idx(ia, ja)] = 0.0;
    for (bool changed = true; changed;) {
        changed = false;
        for (int j = 0; j < nd; ++j) {
            for (int i = 0; i < nx; ++i) {
                if (!free[idx(i, j)] || dist[idx(i, j)] == inf) continue;
                for (int di = -1; di <= 1; ++di) {
                    for (int dj = -1; dj <= 1; ++dj) {
                        if (di == 0 && dj == 0) continue;
                        if (grid.connectivity == 4 && di != 0 && dj != 0) continue;
                        const int ii = i + di;
                        const int jj = j + dj;
                        if (ii < 0 || jj < 0 || ii >= nx || jj >= nd || !free[idx(ii, jj)]) continue;
                        const double w = grid.cell * std::hypot(di, dj);
                        if (dist[idx(i, j)] + w < dist[idx(ii, jj)] - 1e-12) {
                            dist[idx(ii, jj)] = dist[idx(i, j)] + w;
                            changed = true;
                        }
                    }
                }
            }
        }
    }
    return dist[idx(ib, jb)];
}

/// Random lattice no larger than 20 x 20 with circular obstacles and free start/goal nodes.
struct RandomGrid {
    GridSpec grid;
    std::vector<Obstacle> obstacles;
    Eigen::Vector2i start;
    Eigen::Vector2i goal;
};

inline RandomGrid random_grid(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> side(5, 20);
    RandomGrid g;
    const int nx = side(rng);
    const int nd = side(rng);
    g.grid.cell = 1.0;
    g.grid.x_max = nx - 1;
    g.grid.d_max = nd - 1;
    g.grid.inflation = 0.3;
    g.grid.connectivity = std::uniform_int_distribution<int>(0, 3)(rng) == 0 ? 4 : 8;
    std::uniform_real_distribution<double> ux(0.0, nx - 1.0);
    std::uniform_real_distribution<double> ud(0.0, nd - 1.0);
    std::uniform_real_distribution<double> ua(0.5, 2.5);
    const int count = std::uniform_int_distribution<int>(1, 4)(rng);
    for (int k = 0; k < count; ++k) g.obstacles.push_back({ux(rng), ud(rng), ua(rng)});
    std::uniform_int_distribution<int> ix(0, nx - 1);
    std::uniform_int_distribution<int> id(0, nd - 1);
    const auto free_node = [&]() {
        for (;;) {
            Eigen::Vector2i n(ix(rng), id(rng));
            bool ok = true;
            for (const auto& o : g.obstacles) {
                if (std::hypot(n.x() - o.x, n.y() - o.d) < o.a + g.grid.inflation) ok = false;
            }
            if (ok) return n;
        }
    };
    g.start = free_node();
    g.goal = free_node();
    return g;
}

/// Closed-form minimizer of |u - u_nom|^2 subject to c^T u + b >= 0 (no box).
inline ControlInput halfspace_projection(const ControlInput& u_nom, const Eigen::Vector4d& c, double b) {
    const double slack = c.dot(u_nom) + b;
    if (slack >= 0.0) return u_nom;
    return u_nom - slack / c.squaredNorm() * c;
}

/// Largest relative difference between the adjoint gradient of the weighted
/// smoothed SAA merit and central differences over every knot entry.
inline double smoothed_gradient_error(const SaaProblem& problem, const ControlPlan& plan,
                                      const GradientWeights& w, double rel_step = 1e-6) {
    const auto weights = [w](const SmoothedValues&) { return w; };
    const auto merit = [&](const ControlPlan& pl) {
        const SmoothedValues v = problem.smoothed(pl, weights, nullptr);
        return w.objective * v.objective + w.cvar * v.cvar_value + w.mean_H * v.mean_H + w.guard * v.guard;
    };
    Eigen::VectorXd grad;
    problem.smoothed(plan, weights, &grad);
    double scale = grad.cwiseAbs().maxCoeff();
    double worst = 0.0;
    for (std::size_t k = 0; k < plan.knots.size(); ++k) {
        for (int c = 0; c < kInputDim; ++c) {
            ControlPlan plus = plan;
            ControlPlan minus = plan;
            const double h = rel_step * std::max(1.0, std::abs(plan.knots[k][c]));
            plus.knots[k][c] += h;
            minus.knots[k][c] -= h;
            const double fd = (merit(plus) - merit(minus)) / (2.0 * h);
            const double g = grad[static_cast<Eigen::Index>(4 * k) + c];
            worst = std::max(worst, std::abs(fd - g) / std::max(scale, 1e-12));
        }
    }
    return worst;
}

/// Small problem for gradient checks: two knots, three samples, noise, one obstacle.
inline OCPSpec toy_gradient_spec(bool feedback) {
    OCPSpec spec;
    spec.t_f = 0.5;
    spec.knot_dt = 0.25;
    spec.N = 3;
    spec.alpha = 0.5;
    spec.x0 = SystemState::hover(2.0, 1.0, spec.params);
    spec.x0.x[kThetaDot] = 0.2;
    spec.x0.x[kRDot] = 0.1;
    spec.x0.x[kLDot] = 0.1;
    spec.y_d = {1.5, 2.5, 1.5};
    spec.uncertainty.epsilon = 0.3;
    spec.uncertainty.obstacles = {{1.2, 2.3, 0.4}, {0.5, 1.8, 0.3}};
    spec.diffusion = DiffusionSpec::velocity_noise(0.05);
    spec.solver.r_guard = 2.1;
    if (!feedback) spec.K = FeedbackGain::zero();
    spec.sample_seed = 5;
    return spec;
}

inline ControlPlan toy_gradient_plan(const OCPSpec& spec) {
    ControlPlan plan = hover_plan(spec);
    plan.knots[0] += ControlInput(120.0, -80.0, 150.0, 300.0);
    plan.knots[1] += ControlInput(-60.0, 140.0, -90.0, -200.0);
    return plan;
}

/// Lower tail of Student's t with four degrees of freedom by Simpson integration
/// of the density (3/8)(1 + x^2/4)^(-5/2).
inline double student4_lower_tail(double t) {
    const double a = std::abs(t);
    const int n = 200000;
    const double h = 2.0 * a / n;
    const auto pdf = [](double x) { return 0.375 * std::pow(1.0 + x * x / 4.0, -2.5); };
    double acc = pdf(-a) + pdf(a);
    for (int k = 1; k < n; ++k) acc += (k % 2 == 1 ? 4.0 : 2.0) * pdf(-a + k * h);
    const double central = acc * h / 3.0;
    const double tail = 0.5 * (1.0 - central);
    return t <= 0.0 ? tail : 1.0 - tail;
}

}  // namespace oracle
