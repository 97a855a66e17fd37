// Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero on any failure.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "oracles.hpp"
#include "tether/evaluation.hpp"

using namespace tether;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

bool same_trajectory(const Trajectory& a, const Trajectory& b) {
    if (a.states.size() != b.states.size() || a.valid != b.valid) return false;
    for (std::size_t k = 0; k < a.states.size(); ++k) {
        if (!(a.states[k] == b.states[k]) || a.controls[k] != b.controls[k]) return false;
    }
    return true;
}

Outcome dynamics_suite() {
    Outcome o;
    const auto t0 = Clock::now();
    const ModelParams p;

    const SystemState hover = SystemState::hover(2.0, 0.0, p);
    const double residual = drift(hover, hover.forces(), p).cwiseAbs().maxCoeff();
    SystemState thruster;
    thruster.x[kR] = thruster.x[kL] = 2.0;
    thruster.x[kFR] = -p.m_bar * p.g;
    const double residual2 = drift(thruster, thruster.forces(), p).cwiseAbs().maxCoeff();
    o.require(residual < 1e-9 && residual2 < 1e-9, "hover residual");

    SystemState sink;
    sink.x[kR] = sink.x[kL] = 2.0;
    const double rdd = drift(sink, ControlInput::Zero(), p)[kRDot];
    o.require(std::abs(rdd - 5.88) <= 1e-9, "free sink acceleration");

    const double e_coarse = oracle::frozen_pendulum_energy_error(0.05);
    const double e_fine = oracle::frozen_pendulum_energy_error(0.025);
    o.require(e_fine <= 0.5 * e_coarse, "energy error halving");

    double grad_err = 0.0;
    for (bool feedback : {true, false}) {
        const OCPSpec spec = oracle::toy_gradient_spec(feedback);
        const SaaProblem problem(spec, SampleSet::draw(spec));
        grad_err = std::max(grad_err, oracle::smoothed_gradient_error(problem, oracle::toy_gradient_plan(spec),
                                                                      {1.0, 3.0, 2.0, 5.0}));
    }
    o.require(grad_err <= 1e-4, "gradient check");

    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    o.require(secs < 10.0, "runtime");
    o.detail << "hover residual " << std::max(residual, residual2) << ", r_dd " << rdd << ", energy error "
             << e_coarse << " -> " << e_fine << " (ratio " << e_coarse / e_fine << "), gradient rel err "
             << grad_err << ", " << secs << " s";
    return o;
}

Outcome cvar_suite() {
    Outcome o;
    const auto t0 = Clock::now();
    std::mt19937_64 rng(20240);
    std::uniform_real_distribution<double> val(-2.0, 2.0);
    std::uniform_real_distribution<double> lvl(0.01, 1.0);
    std::uniform_int_distribution<int> size(1, 40);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> m(static_cast<std::size_t>(size(rng)));
        for (double& v : m) v = val(rng);
        const double alpha = lvl(rng);
        worst = std::max(worst, std::abs(cvar(m, alpha) - oracle::grid_cvar(m, alpha, 1e-4)));
    }
    o.require(worst <= 1e-3, "brute-force agreement");

    bool degenerate_ok = true;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> m(static_cast<std::size_t>(size(rng)));
        for (double& v : m) v = val(rng);
        const double alpha = std::uniform_real_distribution<double>(1e-6, 1.0)(rng) / static_cast<double>(m.size());
        degenerate_ok = degenerate_ok && cvar(m, alpha) == *std::max_element(m.begin(), m.end());
    }
    const std::vector<double> five{1, 2, 3, 4, 5};
    degenerate_ok = degenerate_ok && cvar(five, 0.2) == 5.0;
    o.require(degenerate_ok, "degenerate tail returns the maximum");

    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    o.require(secs < 10.0, "runtime");
    o.detail << "max |exact - brute force| " << worst << ", " << secs << " s";
    return o;
}

Outcome reduction_suite() {
    Outcome o;
    OCPSpec spec;
    spec.t_f = 4.0;
    spec.x0 = SystemState::hover(2.0, 3.0, spec.params);
    spec.y_d = {4.0, 3.0, 4.0};
    spec.uncertainty.epsilon = 0.5;
    spec.uncertainty.obstacles = {{4.0, 4.0, 0.5}};
    spec.diffusion = DiffusionSpec::velocity_noise(0.05);
    spec.K = FeedbackGain::zero();
    spec.N = 10;
    const SampleSet samples = SampleSet::draw(spec);

    // Solver-path rollouts against an independent open-loop execution.
    const SolveReport rep = solve_socp_fb(spec, samples);
    const SaaProblem open_problem(spec, samples);
    const auto solver_rollouts = open_problem.rollouts(rep.plan);
    bool open_ok = true;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Trajectory ol = open_loop_rollout(rep.plan, samples.xi[i].plant, spec.diffusion, samples.noise[i],
                                                spec.setup());
        open_ok = open_ok && same_trajectory(solver_rollouts[i], ol);
    }
    o.require(open_ok, "K = 0 rollouts equal open-loop rollouts");
    o.require(rep.method == "RA-SAA", "K = 0 label");

    OCPSpec still = spec;
    still.uncertainty.epsilon = 0.0;
    still.diffusion = DiffusionSpec::none();
    bool collapse_ok = true;
    for (const FeedbackGain& K : {FeedbackGain{}, FeedbackGain::zero()}) {
        still.K = K;
        const SaaProblem problem(still, SampleSet::draw(still));
        ControlPlan plan = hover_plan(still);
        plan.knots[3] += ControlInput(150.0, -100.0, 60.0, 400.0);
        const Trajectory nominal = problem.nominal(plan);
        for (const auto& tr : problem.rollouts(plan)) collapse_ok = collapse_ok && same_trajectory(tr, nominal);
    }
    o.require(collapse_ok, "samples collapse onto the nominal rollout");
    o.detail << samples.size() << " samples compared bit-exactly";
    return o;
}

Outcome trend_suite() {
    Outcome o;
    const auto t0 = Clock::now();
    ExperimentSetup setup;
    BenchmarkConfig cfg;
    cfg.n_location = 10;
    cfg.n_model = 5;
    cfg.epsilons = {0.0, 0.2, 0.5};
    cfg.seed = 1;
    cfg.jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    const auto scenarios = generate_scenarios(cfg.n_location, cfg.seed, setup.scenarios);
    const BenchmarkResult result = run_benchmark(setup, cfg, scenarios);
    const auto groups = aggregate(result.records);
    const auto find = [&](const std::string& m, double eps) -> const GroupSummary& {
        for (const auto& g : groups) {
            if (g.method == m && g.epsilon == eps) return g;
        }
        throw std::runtime_error("missing group " + m);
    };

    std::cout << "  epsilon  method        final_error      collision        energy\n";
    for (const auto& g : groups) {
        std::printf("  %-7.1f  %-12s  %6.3f +- %5.3f  %5.3f +- %5.3f  %.3e\n", g.epsilon, g.method.c_str(),
                    g.final_error.mean, g.final_error.std, g.collision.mean, g.collision.std, g.energy.mean);
    }
    const GroupSummary& fb = find("RA-SAA+FB", 0.5);
    const GroupSummary& ol = find("RA-SAA", 0.5);
    const GroupSummary& mppi = find("MPPI", 0.5);
    o.require(fb.collision.mean <= ol.collision.mean, "(a) collision vs RA-SAA");
    o.require(fb.collision.mean <= mppi.collision.mean, "(a) collision vs MPPI");
    o.require(fb.final_error.mean <= ol.final_error.mean, "(b) final error vs RA-SAA");
    for (double eps : cfg.epsilons) {
        o.require(find("RA-SAA+FB", eps).energy.mean <= find("MPPI", eps).energy.mean,
                  "(c) energy vs MPPI at epsilon " + std::to_string(eps));
    }
    const double minutes = std::chrono::duration<double>(Clock::now() - t0).count() / 60.0;
    o.require(minutes < 30.0, "runtime");
    o.detail << "collision@0.5 FB " << fb.collision.mean << " / RA-SAA " << ol.collision.mean << " / MPPI "
             << mppi.collision.mean << ", final@0.5 FB " << fb.final_error.mean << " / RA-SAA "
             << ol.final_error.mean << ", failed cells " << result.failed_cells << ", " << minutes << " min";
    return o;
}

Outcome safety_suite() {
    Outcome o;
    ExperimentSetup setup;
    setup.scenarios.observation_pos_rel_err = 0.0;
    setup.scenarios.observation_size_rel_err = 0.0;
    setup.ocp.uncertainty.obstacle_pos_rel_err = 0.0;
    setup.ocp.uncertainty.obstacle_size_rel_err = 0.0;
    setup.ocp.diffusion = DiffusionSpec::none();
    const std::uint64_t seed = 1;
    const auto scenarios = generate_scenarios(10, seed, setup.scenarios);
    int certified = 0;
    int violations = 0;
    int runs = 0;
    for (const auto& sc : scenarios) {
        for (Method m : {Method::kRaSaaFb, Method::kRaSaa}) {
            const OCPSpec spec = scenario_spec(setup, sc, 0.0, m, seed);
            const SolveReport rep = solve_socp_fb(spec);
            ++runs;
            if (rep.cvar_value > 0.0) continue;
            ++certified;
            const Trajectory traj = execute_plan(spec, rep.plan, truth_plant(setup, sc, 0.0, 0, seed),
                                                 truth_noise(setup, sc, 0, seed));
            if (collision_flag(traj, sc.truth) != 0) ++violations;
        }
    }
    o.require(violations == 0, "certified plan collided");
    o.detail << certified << " of " << runs << " solves certified cvar <= 0, " << violations << " collisions";
    return o;
}

Outcome baseline_suite() {
    Outcome o;
    std::mt19937_64 rng(606);
    int grids = 0;
    double worst = 0.0;
    while (grids < 10) {
        const oracle::RandomGrid g = oracle::random_grid(rng);
        const double expected =
            oracle::lattice_shortest_path(g.grid, g.obstacles, g.start.x(), g.start.y(), g.goal.x(), g.goal.y());
        if (std::isinf(expected)) continue;
        const GridPath path = astar_plan(g.grid, g.start.cast<double>(), g.goal.cast<double>(), g.obstacles);
        worst = std::max(worst, std::abs(path.length - expected));
        ++grids;
    }
    o.require(worst <= 1e-9, "A* cost");

    const ModelParams p;
    const PlantParams e = PlantParams::from(p);
    const ControlInput slack_u(20.0, -30.0, -882.0, 15.0);
    o.require(cbf_filter(slack_u, SystemState::hover(2.0, 1.0, p), Obstacle{6.0, 6.0, 0.5}, e, p).u == slack_u,
              "CBF slack");

    SystemState s = SystemState::hover(2.0, 4.0, p);
    s.x[kXDot] = 0.5;
    const Obstacle obs{4.0, 3.0, 1.0};
    const ControlInput u_nom(0.0, 300.0, -882.0, 0.0);
    const BarrierTerms b = barrier_terms(s, obs, e, p);
    const CbfGains gains;
    const ControlInput kkt = oracle::halfspace_projection(u_nom, b.c, b.c0 + gains.k1 * b.h_dot + gains.k0 * b.h);
    const double cbf_err = (cbf_filter(u_nom, s, obs, e, p, gains).u - kkt).cwiseAbs().maxCoeff();
    o.require(cbf_err <= 1e-6, "CBF KKT");

    const ControlInput a(1.0, -2.0, 3.0, 4.0);
    const std::vector<double> one{2.5};
    const std::vector<ControlInput> first{a};
    const std::vector<double> costs{1.0, 3.0, 2.0};
    const std::vector<ControlInput> same{a, a, a};
    const std::vector<double> flat{4.0, 4.0, 4.0};
    const std::vector<ControlInput> mixed{a, 2.0 * a, -a};
    MPPIHyper single;
    single.samples = 1;
    const ControlInput hover_mu = smooth_sat(ControlInput(0.0, 0.0, -p.m_bar * p.g, 0.0), p.input_bounds());
    const bool mppi_ok = mppi_combine(one, first, 1.0) == a && mppi_combine(costs, same, 0.7) == a &&
                         (mppi_combine(flat, mixed, 1.0) - (a + 2.0 * a - a) / 3.0).norm() < 1e-12 &&
                         mppi_step(SystemState::hover(2.0, 3.0, p), {5.0, 2.0, 5.0}, std::vector<Obstacle>{}, single,
                                   4, e, p, 0.05) == hover_mu;
    o.require(mppi_ok, "MPPI identities");
    o.detail << grids << " grids, max A* cost error " << worst << ", CBF KKT error " << cbf_err;
    return o;
}

Outcome statistics_suite() {
    Outcome o;
    const std::vector<double> a{1, 2, 3};
    const std::vector<double> b{4, 5, 6};
    const WelchResult r = welch_t_test(a, b, Alternative::kLess);
    const WelchResult same = welch_t_test(a, a, Alternative::kLess);
    o.require(std::abs(r.p - 0.0106) <= 0.0005, "p on the reference case");
    o.require(same.p == 0.5, "p on identical inputs");
    o.detail << "t " << r.t << ", df " << r.df << ", p " << r.p << ", identical p " << same.p;
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1 dynamics suite", dynamics_suite},      {"2 cvar oracle", cvar_suite},
        {"3 reduction identities", reduction_suite}, {"4 scaled trends", trend_suite},
        {"5 safety consistency", safety_suite},    {"6 baseline oracles", baseline_suite},
        {"7 statistics", statistics_suite}};
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << " exception: " << e.what();
        }
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail.str() << std::endl;
        if (!o.pass) ++failed;
    }
    return failed == 0 ? 0 : 1;
}
