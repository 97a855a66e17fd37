#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "tether/lbfgs.hpp"
#include "tether/optimizer.hpp"

using namespace tether;
using doctest::Approx;

namespace {

Trajectory path_through(const std::vector<Eigen::Vector2d>& points) {
    Trajectory t;
    for (std::size_t k = 0; k < points.size(); ++k) {
        t.t.push_back(0.05 * static_cast<double>(k));
        t.outputs.push_back({points[k].x(), points[k].y(), 0.0});
    }
    return t;
}

std::vector<Eigen::Vector2d> vertical_line(double x, double d0, double d1, int n) {
    std::vector<Eigen::Vector2d> pts;
    for (int k = 0; k <= n; ++k) pts.emplace_back(x, d0 + (d1 - d0) * k / n);
    return pts;
}

OCPSpec base_spec(Eigen::Vector2d start, Eigen::Vector2d target) {
    OCPSpec spec;
    spec.x0 = SystemState::hover(start.y(), start.x(), spec.params);
    spec.y_d = {target.x(), target.y(), target.x()};
    return spec;
}

}  // namespace

TEST_SUITE("optimizer") {

TEST_CASE("cvar examples") {
    const std::vector<double> s{1, 2, 3, 4, 5};
    CHECK(cvar(s, 1.0) == Approx(3.0));
    CHECK(cvar(s, 0.4) == Approx(4.5));
    CHECK(cvar(s, 0.2) == 5.0);
    CHECK(cvar(s, 0.1) == 5.0);
    CHECK(cvar(s, 0.01) == 5.0);
    CHECK_THROWS_AS(cvar(s, 0.0), OptimizerError);
    CHECK_THROWS_AS(cvar(s, 1.5), OptimizerError);
    CHECK_THROWS_AS(cvar(std::vector<double>{}, 0.5), OptimizerError);
}

TEST_CASE("cvar matches the minimization form") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> val(-2.0, 2.0);
    std::uniform_real_distribution<double> lvl(0.05, 1.0);
    std::uniform_int_distribution<int> size(2, 30);
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<double> m(static_cast<std::size_t>(size(rng)));
        for (double& v : m) v = val(rng);
        const double alpha = lvl(rng);
        CHECK(std::abs(cvar(m, alpha) - oracle::grid_cvar(m, alpha, 1e-3)) <= 1e-3);
    }
}

TEST_CASE("smoothed cvar bounds the exact value and has the right gradient") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> m(20);
        for (double& v : m) v = val(rng);
        const double alpha = 0.25;
        std::vector<double> grad;
        const double sm = smoothed_cvar(m, alpha, 0.05, &grad);
        CHECK(sm >= cvar(m, alpha) - 1e-12);
        CHECK(sm <= cvar(m, alpha) + 0.05 * std::log(2.0) / alpha + 1e-9);
        for (std::size_t i = 0; i < m.size(); i += 5) {
            auto mp = m;
            auto mm = m;
            mp[i] += 1e-6;
            mm[i] -= 1e-6;
            const double fd = (smoothed_cvar(mp, alpha, 0.05, nullptr) - smoothed_cvar(mm, alpha, 0.05, nullptr)) / 2e-6;
            CHECK(grad[i] == Approx(fd).epsilon(1e-5).scale(1.0));
        }
    }
}

TEST_CASE("running cost examples") {
    const Eigen::Matrix4d R = Eigen::Matrix4d::Identity() / (120.0 * 120.0);
    CHECK(running_cost(ControlInput::Zero(), R) == 0.0);
    CHECK(running_cost(ControlInput(120.0, 0, 0, 0), R) == Approx(1.0));
    CHECK(running_cost(ControlInput(3.0, 4.0, 0, 0), Eigen::Matrix4d::Identity()) == 25.0);
}

TEST_CASE("collision margin examples") {
    const std::vector<Obstacle> o{{0.0, 5.0, 1.0}};
    CHECK(collision_margin(path_through(vertical_line(2.0, 0.0, 10.0, 100)), o) == Approx(-1.0));
    CHECK(collision_margin(path_through(vertical_line(1.0, 0.0, 10.0, 100)), o) == Approx(0.0));
    CHECK(collision_margin(path_through(vertical_line(0.0, 0.0, 10.0, 100)), o) == Approx(1.0));
    CHECK(collision_margin(path_through(vertical_line(0.0, 0.0, 10.0, 100)), std::vector<Obstacle>{}) ==
          -std::numeric_limits<double>::infinity());
}

TEST_CASE("terminal violation examples") {
    const Eigen::Vector3d yd(1.0, 2.0, 1.0);
    auto at = [](double x, double d, double X) {
        Trajectory t;
        t.outputs.push_back({x, d, X});
        return t;
    };
    CHECK(terminal_violation(at(1.0, 2.0, 1.0), yd) == 0.0);
    CHECK(terminal_violation(at(1.3, 2.0, 1.0), yd) == Approx(0.09));
    CHECK(terminal_violation(at(1.3, 2.4, 1.0), yd) == Approx(0.25));
}

TEST_CASE("single deterministic sample collapses the sample average") {
    OCPSpec spec = base_spec({2.0, 2.0}, {3.0, 2.5});
    spec.t_f = 2.0;
    spec.N = 1;
    spec.K = FeedbackGain::zero();
    spec.diffusion = DiffusionSpec::none();
    spec.uncertainty.obstacles = {{2.5, 3.5, 0.5}};
    spec.uncertainty.obstacle_pos_rel_err = 0.0;
    spec.uncertainty.obstacle_size_rel_err = 0.0;
    const SaaProblem problem(spec, SampleSet::draw(spec));
    ControlPlan plan = hover_plan(spec);
    plan.knots[2][0] = -150.0;
    const SaaValues v = problem.evaluate(plan);
    const Trajectory t = problem.nominal(plan);
    CHECK(v.objective == Approx(control_cost(t, spec.R)).epsilon(1e-14));
    CHECK(v.cvar_value == Approx(collision_margin(t, spec.uncertainty.obstacles)).epsilon(1e-14));
    CHECK(v.mean_H == Approx(terminal_violation(t, spec.y_d)).epsilon(1e-14));
}

TEST_CASE("hover at the target is feasible") {
    OCPSpec spec = base_spec({4.0, 3.0}, {4.0, 3.0});
    spec.diffusion = DiffusionSpec::none();
    spec.uncertainty.obstacles = {{1.0, 7.0, 0.5}};
    const SaaProblem problem(spec, SampleSet::draw(spec));
    const SaaValues v = problem.evaluate(hover_plan(spec));
    CHECK(v.mean_H == Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK(v.cvar_value < 0.0);
    CHECK(v.invalid == 0);
}

TEST_CASE("adjoint gradient matches central differences") {
    for (bool feedback : {true, false}) {
        CAPTURE(feedback);
        const OCPSpec spec = oracle::toy_gradient_spec(feedback);
        const SaaProblem problem(spec, SampleSet::draw(spec));
        const ControlPlan plan = oracle::toy_gradient_plan(spec);
        const double err = oracle::smoothed_gradient_error(problem, plan, {1.0, 3.0, 2.0, 5.0});
        CHECK(err <= 1e-4);
        CHECK(oracle::smoothed_gradient_error(problem, plan, {1.0, 0.0, 0.0, 0.0}) <= 1e-4);
        CHECK(oracle::smoothed_gradient_error(problem, plan, {0.0, 1.0, 0.0, 0.0}) <= 1e-4);
    }
}

TEST_CASE("gradient through floor breaches") {
    OCPSpec spec = oracle::toy_gradient_spec(true);
    spec.x0 = SystemState::hover(0.15, 1.0, spec.params);
    spec.solver.r_guard = 0.6;
    const SaaProblem problem(spec, SampleSet::draw(spec));
    ControlPlan plan = oracle::toy_gradient_plan(spec);
    plan.knots[0][2] -= 3000.0;
    plan.knots[1][2] -= 3000.0;
    int invalid = 0;
    for (const auto& tr : problem.rollouts(plan)) invalid += tr.valid ? 0 : 1;
    REQUIRE(invalid > 0);
    CHECK(oracle::smoothed_gradient_error(problem, plan, {1.0, 3.0, 2.0, 5.0}) <= 1e-4);
    CHECK(problem.smoothed(plan, {}, nullptr).guard > 0.0);
}

TEST_CASE("gradient with linear hold") {
    OCPSpec spec = oracle::toy_gradient_spec(true);
    spec.hold = HoldMode::kLinear;
    const SaaProblem problem(spec, SampleSet::draw(spec));
    ControlPlan plan = hover_plan(spec);
    REQUIRE(plan.knots.size() == 3);
    plan.knots[1] += ControlInput(100.0, 50.0, -40.0, 200.0);
    CHECK(oracle::smoothed_gradient_error(problem, plan, {1.0, 3.0, 2.0, 5.0}) <= 1e-4);
}

TEST_CASE("ocp settings validation") {
    OCPSpec spec = base_spec({2.0, 2.0}, {3.0, 3.0});
    CHECK_NOTHROW(spec.validate());
    spec.alpha = 0.0;
    CHECK_THROWS_AS(spec.validate(), OptimizerError);
    spec.alpha = 1.01;
    CHECK_THROWS_AS(spec.validate(), OptimizerError);
    spec.alpha = 1.0;
    CHECK_NOTHROW(spec.validate());
    spec.dt = 0.0;
    CHECK_THROWS_AS(spec.validate(), OptimizerError);
    spec.dt = 0.05;
    spec.N = 0;
    CHECK_THROWS_AS(spec.validate(), OptimizerError);
    spec.N = 5;
    spec.solver.tau_init = 0.01;
    CHECK_THROWS_AS(spec.validate(), OptimizerError);
    spec.solver.tau_init = spec.solver.tau_smooth;
    CHECK_NOTHROW(spec.validate());
    spec.R(0, 0) = -1.0;
    CHECK_THROWS_AS(spec.validate(), OptimizerError);
}

TEST_CASE("temperature override") {
    const OCPSpec spec = oracle::toy_gradient_spec(true);
    SaaProblem problem(spec, SampleSet::draw(spec));
    CHECK(problem.temperature() == spec.solver.tau_smooth);
    const ControlPlan plan = oracle::toy_gradient_plan(spec);
    const double fine = problem.smoothed(plan, {}, nullptr).cvar_value;
    problem.set_temperature(0.4);
    // A hotter log-sum-exp is a looser upper bound.
    CHECK(problem.smoothed(plan, {}, nullptr).cvar_value > fine);
    CHECK(fine >= problem.evaluate(plan).cvar_value);
    CHECK_THROWS_AS(problem.set_temperature(0.0), OptimizerError);
}

TEST_CASE("lbfgs minimizes the rosenbrock function") {
    const Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
        const double a = 1.0 - x[0];
        const double b = x[1] - x[0] * x[0];
        if (g != nullptr) {
            g->resize(2);
            (*g)[0] = -2.0 * a - 400.0 * x[0] * b;
            (*g)[1] = 200.0 * b;
        }
        return a * a + 100.0 * b * b;
    };
    LbfgsOptions opt;
    opt.max_iterations = 500;
    const LbfgsResult r = lbfgs_minimize(f, Eigen::Vector2d(-1.2, 1.0), opt);
    CHECK(r.x[0] == Approx(1.0).epsilon(1e-4));
    CHECK(r.x[1] == Approx(1.0).epsilon(1e-4));
}

TEST_CASE("solve at the start point stays near hover") {
    OCPSpec spec = base_spec({4.0, 2.0}, {4.0, 2.0});
    spec.diffusion = DiffusionSpec::none();
    spec.uncertainty.obstacles = {{1.0, 6.0, 0.5}};
    const SolveReport rep = solve_socp_fb(spec);
    CHECK(rep.converged);
    CHECK(rep.method == "RA-SAA+FB");
    CHECK(rep.terminal_value <= spec.delta_M + spec.solver.tol_c);
    CHECK(rep.cvar_value < 0.0);
    const SaaProblem problem(spec, SampleSet::draw(spec));
    // The hover plan is feasible, so the optimum costs no more than it.
    CHECK(rep.objective <= problem.evaluate(hover_plan(spec)).objective);
}

TEST_CASE("solve routes around a blocking obstacle") {
    OCPSpec spec = base_spec({4.0, 1.0}, {4.0, 5.0});
    spec.uncertainty.epsilon = 0.2;
    spec.uncertainty.obstacles = {{4.0, 3.0, 0.6}};
    const SolveReport rep = solve_socp_fb(spec);
    REQUIRE(rep.converged);
    CHECK(rep.cvar_value <= spec.solver.tol_c);
    const SaaProblem problem(spec, SampleSet::draw(spec));
    const Trajectory nominal = problem.nominal(rep.plan);
    CHECK(collision_margin(nominal, spec.uncertainty.obstacles) < 0.0);

    // Held-out samples of the same distribution.
    const SaaProblem held_out(spec, SampleSet::draw(spec, 987654));
    const SaaValues v = held_out.evaluate(rep.plan);
    CHECK(v.invalid == 0);
    INFO("held-out cvar " << v.cvar_value);
    CHECK(v.cvar_value <= 0.05);

    const SolveReport again = solve_socp_fb(spec);
    CHECK(again.objective == rep.objective);
    CHECK(again.cvar_value == rep.cvar_value);
    CHECK(again.terminal_value == rep.terminal_value);
    CHECK(again.iterations == rep.iterations);
    CHECK(again.plan.knots == rep.plan.knots);
}

TEST_CASE("zero gain solve is labelled RA-SAA") {
    OCPSpec spec = base_spec({4.0, 2.0}, {4.5, 2.5});
    spec.t_f = 4.0;
    spec.K = FeedbackGain::zero();
    CHECK(solve_socp_fb(spec).method == "RA-SAA");
}

TEST_CASE("too short horizon does not converge") {
    OCPSpec spec = base_spec({1.0, 1.0}, {7.0, 7.0});
    spec.t_f = 0.1;
    spec.uncertainty.obstacles = {{4.0, 1.0, 0.5}};
    const SolveReport rep = solve_socp_fb(spec);
    CHECK_FALSE(rep.converged);
    CHECK(rep.terminal_value > spec.delta_M);
}

}  // TEST_SUITE
