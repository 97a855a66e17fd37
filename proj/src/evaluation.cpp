#include "tether/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

namespace tether {

namespace {

double uniform(Rng& rng, double lo, double hi) {
    return uniform_around(rng, 0.5 * (lo + hi), 0.5 * (hi - lo));
}

/// Runs fn(k) for k in [0, count) on `jobs` threads; stops handing out work once `stop` is set.
template <typename Fn>
void parallel_for(std::size_t count, int jobs, const std::atomic<bool>* stop, Fn&& fn) {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            if (stop != nullptr && stop->load()) return;
            const std::size_t k = next.fetch_add(1);
            if (k >= count) return;
            fn(k);
        }
    };
    const auto n_threads = static_cast<std::size_t>(std::max(1, jobs));
    if (n_threads == 1 || count <= 1) {
        worker();
        return;
    }
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(n_threads, count); ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

MetricsRecord sentinel_record(const std::string& method, std::size_t i, std::size_t j, double eps) {
    MetricsRecord r;
    r.method = method;
    r.i = i;
    r.j = j;
    r.epsilon = eps;
    r.rho_final = kInvalidFinalError;
    r.rho_collision = 1;
    r.rho_energy = 0.0;
    r.valid = false;
    return r;
}

}  // namespace

// =============================================================================
// Scenarios
// =============================================================================

void ScenarioConfig::validate() const {
    if (!(arena > 0.0)) throw EvaluationError("arena size must be positive");
    if (!(obstacle_edge >= 0.0 && 2.0 * obstacle_edge < arena)) {
        throw EvaluationError("obstacle edge margin leaves no room for obstacle centers");
    }
    if (!(radius_min > 0.0 && radius_max >= radius_min)) throw EvaluationError("invalid obstacle radius range");
    if (!(clearance >= 0.0) || !(min_depth >= 0.0) || !(min_depth < arena)) {
        throw EvaluationError("invalid clearance or depth rule");
    }
    if (!(t_f > 0.0)) throw EvaluationError("t_f must be positive");
    if (!(observation_pos_rel_err >= 0.0 && observation_pos_rel_err < 1.0) ||
        !(observation_size_rel_err >= 0.0 && observation_size_rel_err < 1.0)) {
        throw EvaluationError("observation errors must lie in [0, 1)");
    }
    if (max_rejections < 1) throw EvaluationError("rejection budget must be positive");
}

SystemState Scenario::initial_state(const ModelParams& p) const {
    return SystemState::hover(y0.y(), y0.x(), p);
}

std::vector<Scenario> generate_scenarios(int n_location, std::uint64_t seed,
                                         const ScenarioConfig& config) {
    if (n_location < 1) throw EvaluationError("N_location must be at least 1");
    config.validate();
    std::vector<Scenario> out;
    out.reserve(static_cast<std::size_t>(n_location));
    for (int i = 0; i < n_location; ++i) {
        Scenario sc;
        sc.index = static_cast<std::size_t>(i);
        sc.seed = derive_seed(seed, {static_cast<std::uint64_t>(i)});
        sc.t_f = config.t_f;
        Rng rng(sc.seed);
        sc.truth.x = uniform(rng, config.obstacle_edge, config.arena - config.obstacle_edge);
        sc.truth.d = uniform(rng, config.obstacle_edge, config.arena - config.obstacle_edge);
        sc.truth.a = uniform(rng, config.radius_min, config.radius_max);

        int rejections = 0;
        auto draw_point = [&] {
            for (;;) {
                const double x = uniform(rng, 0.0, config.arena);
                const double d = uniform(rng, 0.0, config.arena);
                const double gap = std::hypot(x - sc.truth.x, d - sc.truth.d) - sc.truth.a;
                if (d >= config.min_depth && gap >= config.clearance) return Eigen::Vector2d(x, d);
                if (++rejections > config.max_rejections) {
                    throw EvaluationError("scenario generation exceeded the rejection budget");
                }
            }
        };
        const Eigen::Vector2d start = draw_point();
        const Eigen::Vector2d target = draw_point();
        sc.y0 = {start.x(), start.y(), start.x()};
        sc.y_d = {target.x(), target.y(), target.x()};

        sc.observed.x = uniform_around(rng, sc.truth.x, config.observation_pos_rel_err * std::abs(sc.truth.x));
        sc.observed.d = uniform_around(rng, sc.truth.d, config.observation_pos_rel_err * std::abs(sc.truth.d));
        sc.observed.a = uniform_around(rng, sc.truth.a, config.observation_size_rel_err * sc.truth.a);
        out.push_back(sc);
    }
    return out;
}

// =============================================================================
// Metrics
// =============================================================================

double final_position_error(const Trajectory& traj, const Eigen::Vector3d& y_d) {
    if (!traj.valid || traj.outputs.empty()) return kInvalidFinalError;
    return (traj.final_output().vec() - y_d).norm();
}

int collision_flag(const Trajectory& traj, const Obstacle& truth) {
    if (!traj.valid) return 1;
    for (const auto& y : traj.outputs) {
        if (std::hypot(y.x - truth.x, y.d - truth.d) - truth.a < 0.0) return 1;
    }
    return 0;
}

double energy(const Trajectory& traj) {
    const std::size_t n = traj.states.size();
    if (n < 2) return 0.0;
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double w = (k == 0 || k + 1 == n) ? 0.5 : 1.0;
        acc += w * traj.states[k].forces().squaredNorm();
    }
    return acc * traj.dt;
}

MetricsRecord measure(const Trajectory& traj, const Scenario& scenario, const std::string& method,
                      std::size_t j, double epsilon) {
    MetricsRecord r;
    r.method = method;
    r.i = scenario.index;
    r.j = j;
    r.epsilon = epsilon;
    r.rho_final = final_position_error(traj, scenario.y_d);
    r.rho_collision = collision_flag(traj, scenario.truth);
    r.rho_energy = energy(traj);
    r.valid = traj.valid;
    return r;
}

void write_results_csv(std::ostream& out, std::span<const MetricsRecord> records) {
    out << "method,i,j,epsilon,rho_final,rho_collision,rho_energy,valid\n";
    out << std::setprecision(17);
    for (const auto& r : records) {
        out << r.method << ',' << r.i << ',' << r.j << ',' << r.epsilon << ',' << r.rho_final << ','
            << r.rho_collision << ',' << r.rho_energy << ',' << (r.valid ? 1 : 0) << '\n';
    }
}

std::vector<MetricsRecord> read_results_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "method,i,j,epsilon,rho_final,rho_collision,rho_energy,valid") {
        throw EvaluationError("results CSV header mismatch");
    }
    std::vector<MetricsRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 8) throw EvaluationError("results CSV row has " + std::to_string(cells.size()) + " cells");
        try {
            MetricsRecord r;
            r.method = cells[0];
            r.i = std::stoul(cells[1]);
            r.j = std::stoul(cells[2]);
            r.epsilon = std::stod(cells[3]);
            r.rho_final = std::stod(cells[4]);
            r.rho_collision = std::stoi(cells[5]);
            r.rho_energy = std::stod(cells[6]);
            r.valid = std::stoi(cells[7]) != 0;
            out.push_back(r);
        } catch (const std::logic_error&) {
            throw EvaluationError("malformed results CSV row: " + line);
        }
    }
    return out;
}

// =============================================================================
// Aggregation and significance
// =============================================================================

const MetricSummary& GroupSummary::metric(const std::string& name) const {
    if (name == "final_error") return final_error;
    if (name == "collision") return collision;
    if (name == "energy") return energy;
    throw EvaluationError("unknown metric: " + name);
}

MetricSummary summarize_locations(std::vector<double> per_location) {
    MetricSummary m;
    m.per_location = std::move(per_location);
    const auto n = static_cast<double>(m.per_location.size());
    if (m.per_location.empty()) return m;
    m.mean = std::accumulate(m.per_location.begin(), m.per_location.end(), 0.0) / n;
    if (m.per_location.size() >= 2) {
        double ss = 0.0;
        for (double v : m.per_location) ss += (v - m.mean) * (v - m.mean);
        m.std = std::sqrt(ss / (n - 1.0));
    }
    return m;
}

std::vector<GroupSummary> aggregate(std::span<const MetricsRecord> records) {
    using Key = std::pair<std::string, double>;
    std::vector<Key> order;
    std::map<Key, std::map<std::size_t, std::map<std::size_t, const MetricsRecord*>>> groups;
    for (const auto& r : records) {
        const Key key{r.method, r.epsilon};
        auto [it, inserted] = groups.try_emplace(key);
        if (inserted) order.push_back(key);
        if (!it->second[r.i].emplace(r.j, &r).second) {
            throw EvaluationError("duplicate record for " + r.method + " cell (" + std::to_string(r.i) +
                                  ", " + std::to_string(r.j) + ")");
        }
    }
    std::stable_sort(order.begin(), order.end(),
                     [](const Key& a, const Key& b) { return a.second < b.second; });

    std::vector<GroupSummary> out;
    for (const auto& key : order) {
        const auto& by_i = groups.at(key);
        std::vector<std::size_t> models;
        for (const auto& [j, _] : by_i.begin()->second) models.push_back(j);
        std::vector<double> fin;
        std::vector<double> col;
        std::vector<double> en;
        for (const auto& [i, by_j] : by_i) {
            std::vector<std::size_t> js;
            for (const auto& [j, _] : by_j) js.push_back(j);
            if (js != models) {
                throw EvaluationError("ragged record grid for " + key.first + " at location " + std::to_string(i));
            }
            double f = 0.0;
            double c = 0.0;
            double e = 0.0;
            for (const auto& [j, rec] : by_j) {
                f += rec->rho_final;
                c += rec->rho_collision;
                e += rec->rho_energy;
            }
            const auto nj = static_cast<double>(by_j.size());
            fin.push_back(f / nj);
            col.push_back(c / nj);
            en.push_back(e / nj);
        }
        GroupSummary g;
        g.method = key.first;
        g.epsilon = key.second;
        g.locations = by_i.size();
        g.models = models.size();
        g.final_error = summarize_locations(std::move(fin));
        g.collision = summarize_locations(std::move(col));
        g.energy = summarize_locations(std::move(en));
        out.push_back(std::move(g));
    }
    return out;
}

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b,
                         Alternative alternative, double level) {
    if (a.size() < 2 || b.size() < 2) throw EvaluationError("Welch test needs at least two samples per group");
    const auto moments = [](std::span<const double> s) {
        const auto n = static_cast<double>(s.size());
        const double mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
        double ss = 0.0;
        for (double v : s) ss += (v - mean) * (v - mean);
        return std::pair{mean, ss / (n - 1.0)};
    };
    const auto [ma, va] = moments(a);
    const auto [mb, vb] = moments(b);
    const double qa = va / static_cast<double>(a.size());
    const double qb = vb / static_cast<double>(b.size());
    const double se2 = qa + qb;

    WelchResult res;
    if (se2 == 0.0) {
        res.degenerate = true;
        if (ma == mb) {
            res.t = 0.0;
            res.p = 0.5;
        } else {
            const bool favours = alternative == Alternative::kLess ? ma < mb : ma > mb;
            res.t = ma < mb ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
            res.p = favours ? 0.0 : 1.0;
        }
        res.significant = res.p < level;
        return res;
    }
    res.t = (ma - mb) / std::sqrt(se2);
    res.df = se2 * se2 /
             (qa * qa / static_cast<double>(a.size() - 1) + qb * qb / static_cast<double>(b.size() - 1));
    const boost::math::students_t_distribution<double> dist(res.df);
    res.p = alternative == Alternative::kLess ? boost::math::cdf(dist, res.t)
                                              : boost::math::cdf(boost::math::complement(dist, res.t));
    res.significant = res.p < level;
    return res;
}

// =============================================================================
// Benchmark
// =============================================================================

std::string method_name(Method m) {
    switch (m) {
        case Method::kRaSaaFb: return "RA-SAA+FB";
        case Method::kRaSaa: return "RA-SAA";
        case Method::kAstarPidCbf: return "A*+PID+CBF";
        case Method::kMppi: return "MPPI";
    }
    throw EvaluationError("unknown method");
}

Method parse_method(const std::string& name) {
    for (Method m : all_methods()) {
        if (method_name(m) == name) return m;
    }
    throw EvaluationError("unknown method: " + name);
}

std::vector<Method> all_methods() {
    return {Method::kRaSaaFb, Method::kRaSaa, Method::kAstarPidCbf, Method::kMppi};
}

void ExperimentSetup::validate() const {
    ocp.params.validate();
    ocp.uncertainty.validate();
    ocp.diffusion.validate();
    grid.validate();
    pid.validate();
    mppi.validate();
    scenarios.validate();
    if (!(cbf.k0 > 0.0) || !(cbf.k1 > 0.0)) throw EvaluationError("CBF coefficients must be positive");
    // Probe the remaining planner preconditions on a placeholder problem.
    OCPSpec probe = ocp;
    probe.x0 = SystemState::hover(1.0, 0.0, ocp.params);
    probe.t_f = scenarios.t_f;
    probe.validate();
}

void BenchmarkConfig::validate() const {
    if (methods.empty()) throw EvaluationError("benchmark needs at least one method");
    if (n_location < 1 || n_model < 1) throw EvaluationError("N_location and N_model must be at least 1");
    if (epsilons.empty()) throw EvaluationError("benchmark needs at least one epsilon");
    for (double e : epsilons) {
        if (!(e >= 0.0 && e < 1.0)) throw EvaluationError("epsilon must lie in [0, 1)");
    }
    if (jobs < 1) throw EvaluationError("jobs must be at least 1");
}

OCPSpec scenario_spec(const ExperimentSetup& setup, const Scenario& scenario, double epsilon,
                      Method method, std::uint64_t seed) {
    OCPSpec spec = setup.ocp;
    spec.x0 = scenario.initial_state(spec.params);
    spec.y_d = scenario.y_d;
    spec.t_f = scenario.t_f;
    spec.uncertainty.epsilon = epsilon;
    spec.uncertainty.obstacles = {scenario.observed};
    if (method == Method::kRaSaa) spec.K = FeedbackGain::zero();
    spec.sample_seed = derive_seed(seed, {scenario.index, 13});
    return spec;
}

PlantParams truth_plant(const ExperimentSetup& setup, const Scenario& scenario, double epsilon,
                        std::size_t j, std::uint64_t seed) {
    UncertaintySpec spec = setup.ocp.uncertainty;
    spec.epsilon = epsilon;
    spec.obstacles.clear();
    return sample_xi(spec, derive_seed(seed, {scenario.index, j, 7})).plant;
}

NoiseRealization truth_noise(const ExperimentSetup& setup, const Scenario& scenario, std::size_t j,
                             std::uint64_t seed) {
    return NoiseRealization::generate(derive_seed(seed, {scenario.index, j, 11}),
                                      grid_steps(scenario.t_f, setup.ocp.dt), setup.ocp.dt);
}

Trajectory execute_plan(const OCPSpec& spec, const ControlPlan& plan, const PlantParams& truth,
                        const NoiseRealization& noise) {
    const RolloutSetup setup = spec.setup();
    const Trajectory nominal = nominal_rollout(plan, spec.uncertainty, setup);
    return closed_loop_rollout(plan, nominal, spec.K, truth, spec.diffusion, noise, setup);
}

Trajectory run_astar_pid_cbf(const ExperimentSetup& setup, const Scenario& scenario,
                             const PlantParams& truth, const NoiseRealization& noise) {
    const ModelParams& p = setup.ocp.params;
    const PlantParams& expected = setup.ocp.uncertainty.expected;
    const std::vector<Obstacle> observed{scenario.observed};
    const Eigen::Vector2d start(scenario.y0.x(), scenario.y0.y());
    const Eigen::Vector2d goal(scenario.y_d.x(), scenario.y_d.y());

    GridPath path;
    bool fallback = false;
    try {
        path = astar_plan(setup.grid, start, goal, observed);
    } catch (const PlanningError&) {
        GridSpec bare = setup.grid;
        bare.inflation = 0.0;
        try {
            path = astar_plan(bare, start, goal, observed);
        } catch (const PlanningError&) {
            fallback = true;
            path.waypoints = {start, goal};
            path.length = (goal - start).norm();
        }
    }
    const TimedPath reference(path, scenario.t_f);

    const RolloutSetup rs{p, setup.ocp.dt, scenario.t_f, scenario.initial_state(p)};
    PidState pid_state;
    std::vector<double> active;
    std::vector<double> infeasible;
    std::vector<double> barrier;
    const auto controller = [&](std::size_t, double t, const SystemState& x) {
        const Eigen::Vector2d pos = reference.position(t);
        const Eigen::Vector2d vel = reference.velocity(t);
        PidReference ref;
        ref.y = {pos.x(), pos.y(), pos.x()};
        ref.rate = {vel.x(), vel.y(), vel.x()};
        const ControlInput u = pid_track(ref, x, setup.pid, pid_state, rs.dt, expected, p);
        const CbfResult f = cbf_filter(u, x, observed, expected, p, setup.cbf);
        active.push_back(f.active ? 1.0 : 0.0);
        infeasible.push_back(f.infeasible ? 1.0 : 0.0);
        barrier.push_back(f.h);
        return f.u;
    };
    Trajectory traj = simulate_online(controller, truth, setup.ocp.diffusion, noise, rs);
    traj.diagnostics["cbf_active"] = std::move(active);
    traj.diagnostics["cbf_infeasible"] = std::move(infeasible);
    traj.diagnostics["cbf_h"] = std::move(barrier);
    traj.diagnostics["astar_fallback"] = std::vector<double>(traj.size(), fallback ? 1.0 : 0.0);
    return traj;
}

Trajectory run_mppi(const ExperimentSetup& setup, const Scenario& scenario, const PlantParams& truth,
                    const NoiseRealization& noise, std::uint64_t seed) {
    const ModelParams& p = setup.ocp.params;
    MppiController ctrl(setup.mppi, p, setup.ocp.uncertainty.expected, {scenario.observed},
                        scenario.y_d, setup.ocp.dt, seed);
    const RolloutSetup rs{p, setup.ocp.dt, scenario.t_f, scenario.initial_state(p)};
    return simulate_online([&](std::size_t, double, const SystemState& x) { return ctrl.step(x); },
                           truth, setup.ocp.diffusion, noise, rs);
}

BenchmarkResult run_benchmark(const ExperimentSetup& setup, const BenchmarkConfig& config,
                              const std::vector<Scenario>& scenarios, const std::atomic<bool>* stop,
                              const ProgressFn& progress) {
    setup.validate();
    config.validate();
    if (scenarios.size() < static_cast<std::size_t>(config.n_location)) {
        throw EvaluationError("fewer scenarios than N_location");
    }
    const auto n_loc = static_cast<std::size_t>(config.n_location);
    const auto n_model = static_cast<std::size_t>(config.n_model);
    const std::size_t n_eps = config.epsilons.size();
    const std::size_t n_methods = config.methods.size();

    // Offline solves: one per (epsilon, location, planning method).
    struct SolveTask {
        std::size_t e, i;
        Method method;
    };
    std::vector<SolveTask> solve_tasks;
    for (std::size_t e = 0; e < n_eps; ++e) {
        for (std::size_t i = 0; i < n_loc; ++i) {
            for (Method m : config.methods) {
                if (m == Method::kRaSaaFb || m == Method::kRaSaa) solve_tasks.push_back({e, i, m});
            }
        }
    }
    const std::size_t n_cells = n_eps * n_loc * n_model * n_methods;
    const std::size_t total = solve_tasks.size() + n_cells;
    std::mutex progress_mutex;
    std::size_t done = 0;
    const auto tick = [&] {
        if (!progress) return;
        const std::lock_guard lock(progress_mutex);
        progress(++done, total);
    };

    BenchmarkResult result;
    std::vector<std::optional<ControlPlan>> plans(solve_tasks.size());
    std::vector<SolveSummary> solves(solve_tasks.size());
    std::vector<char> solved(solve_tasks.size(), 0);
    parallel_for(solve_tasks.size(), config.jobs, stop, [&](std::size_t k) {
        const auto& task = solve_tasks[k];
        const double eps = config.epsilons[task.e];
        SolveSummary& s = solves[k];
        s.method = method_name(task.method);
        s.i = task.i;
        s.epsilon = eps;
        try {
            const OCPSpec spec = scenario_spec(setup, scenarios[task.i], eps, task.method, config.seed);
            const SolveReport rep = solve_socp_fb(spec);
            plans[k] = rep.plan;
            s.converged = rep.converged;
            s.objective = rep.objective;
            s.cvar_value = rep.cvar_value;
            s.terminal_value = rep.terminal_value;
            s.iterations = rep.iterations;
            s.wall_time = rep.wall_time;
        } catch (const std::exception&) {
            s.failed = true;
        }
        solved[k] = 1;
        tick();
    });
    const auto plan_index = [&](std::size_t e, std::size_t i, Method m) -> std::size_t {
        for (std::size_t k = 0; k < solve_tasks.size(); ++k) {
            if (solve_tasks[k].e == e && solve_tasks[k].i == i && solve_tasks[k].method == m) return k;
        }
        throw EvaluationError("missing solve task");
    };

    std::vector<MetricsRecord> records(n_cells);
    std::vector<char> finished(n_cells, 0);
    std::vector<char> failed(n_cells, 0);
    parallel_for(n_cells, config.jobs, stop, [&](std::size_t k) {
        const std::size_t m_idx = k % n_methods;
        const std::size_t j = (k / n_methods) % n_model;
        const std::size_t i = (k / (n_methods * n_model)) % n_loc;
        const std::size_t e = k / (n_methods * n_model * n_loc);
        const Method method = config.methods[m_idx];
        const double eps = config.epsilons[e];
        const Scenario& sc = scenarios[i];
        const std::string name = method_name(method);
        try {
            const PlantParams truth = truth_plant(setup, sc, eps, j, config.seed);
            const NoiseRealization noise = truth_noise(setup, sc, j, config.seed);
            Trajectory traj;
            switch (method) {
                case Method::kRaSaaFb:
                case Method::kRaSaa: {
                    const std::size_t p = plan_index(e, i, method);
                    if (!solved[p] || !plans[p]) throw EvaluationError("no plan available");
                    traj = execute_plan(scenario_spec(setup, sc, eps, method, config.seed), *plans[p],
                                        truth, noise);
                    break;
                }
                case Method::kAstarPidCbf:
                    traj = run_astar_pid_cbf(setup, sc, truth, noise);
                    break;
                case Method::kMppi:
                    traj = run_mppi(setup, sc, truth, noise, derive_seed(config.seed, {i, j, e, 17}));
                    break;
            }
            records[k] = measure(traj, sc, name, j, eps);
        } catch (const std::exception&) {
            records[k] = sentinel_record(name, i, j, eps);
            failed[k] = 1;
        }
        finished[k] = 1;
        tick();
    });

    for (std::size_t k = 0; k < solve_tasks.size(); ++k) {
        if (solved[k]) result.solves.push_back(solves[k]);
    }
    for (std::size_t k = 0; k < n_cells; ++k) {
        if (!finished[k]) {
            result.complete = false;
            continue;
        }
        result.records.push_back(records[k]);
        if (failed[k]) ++result.failed_cells;
    }
    if (result.solves.size() != solve_tasks.size()) result.complete = false;
    return result;
}

}  // namespace tether
