#include "tether/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "tether/lbfgs.hpp"

namespace tether {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Augmented-Lagrangian term for g <= 0.
double al_penalty(double g, double lambda, double rho) {
    const double t = std::max(0.0, lambda + rho * g);
    return (t * t - lambda * lambda) / (2.0 * rho);
}

double al_weight(double g, double lambda, double rho) {
    return std::max(0.0, lambda + rho * g);
}

double trapezoid_weight(std::size_t k, std::size_t n, double dt) {
    return (k == 0 || k == n) ? 0.5 * dt : dt;
}

/// Forward record of one rollout, enough to run the adjoint pass.
struct Record {
    std::vector<SystemState> x;
    std::vector<ControlInput> cmd;  // pre-saturation command
    std::vector<ControlInput> mu;
    std::size_t last = 0;           // last step whose control was integrated (or n)
    bool valid = true;
};

template <typename CommandFn>
void forward(Record& rec, const RolloutSetup& setup, const PlantParams& plant,
             const DiffusionSpec& diffusion, const NoiseRealization* noise,
             const Eigen::Vector4d& bounds, CommandFn&& command) {
    const std::size_t n = setup.steps();
    static const Vec12 kZero = Vec12::Zero();
    rec.x.resize(n + 1);
    rec.cmd.resize(n + 1);
    rec.mu.resize(n + 1);
    rec.valid = true;
    rec.last = n;
    SystemState x = setup.x0;
    for (std::size_t k = 0; k <= n; ++k) {
        rec.x[k] = x;
        if (!rec.valid) {
            rec.cmd[k] = rec.cmd[k - 1];
            rec.mu[k] = rec.mu[k - 1];
            continue;
        }
        rec.cmd[k] = command(k, x);
        rec.mu[k] = smooth_sat(rec.cmd[k], bounds);
        if (k == n) break;
        const Vec12& dW = noise != nullptr ? noise->increments[k] : kZero;
        SystemState next = em_step(x, rec.mu[k], plant, diffusion, setup.dt, dW, setup.params);
        if (breaches_floor(next) || !next.x.allFinite()) {
            rec.valid = false;
            rec.last = k;
        } else {
            x = next;
        }
    }
}

Eigen::Matrix<double, 3, 12> output_jacobian(const SystemState& s) {
    Eigen::Matrix<double, 3, 12> J = Eigen::Matrix<double, 3, 12>::Zero();
    const double st = std::sin(s.theta());
    const double ct = std::cos(s.theta());
    J(0, kTheta) = -s.r() * ct;
    J(0, kR) = -st;
    J(0, kX) = 1.0;
    J(1, kTheta) = -s.r() * st;
    J(1, kR) = ct;
    J(2, kX) = 1.0;
    return J;
}

/// Adjoint of the taut-tether projection l_dot' = r_dot'.
Vec12 project_adjoint(const Vec12& lambda) {
    Vec12 out = lambda;
    out[kRDot] += lambda[kLDot];
    out[kLDot] = 0.0;
    return out;
}

/// Log-sum-exp margin of one valid rollout; fills d margin / d x_k when requested.
double smooth_margin(const Record& rec, std::span<const Obstacle> obstacles, double tau,
                     std::vector<Vec12>* dmargin) {
    if (obstacles.empty()) return kNegInf;
    const std::size_t n = rec.x.size();
    const std::size_t no = obstacles.size();
    std::vector<double> c(n * no);
    std::vector<Eigen::Vector2d> p(n);
    double cmax = kNegInf;
    for (std::size_t k = 0; k < n; ++k) {
        const auto cp = cartesian_from_polar(rec.x[k].theta(), rec.x[k].r(), rec.x[k].X());
        p[k] = {cp.x, cp.d};
        for (std::size_t o = 0; o < no; ++o) {
            const double v = obstacles[o].a - std::hypot(cp.x - obstacles[o].x, cp.d - obstacles[o].d);
            c[k * no + o] = v;
            cmax = std::max(cmax, v);
        }
    }
    double sum = 0.0;
    for (double& v : c) {
        v = std::exp((v - cmax) / tau);
        sum += v;
    }
    if (dmargin != nullptr) {
        dmargin->assign(n, Vec12::Zero());
        for (std::size_t k = 0; k < n; ++k) {
            Eigen::Vector2d dp = Eigen::Vector2d::Zero();
            for (std::size_t o = 0; o < no; ++o) {
                const double w = c[k * no + o] / sum;
                if (w == 0.0) continue;
                const Eigen::Vector2d rel(p[k].x() - obstacles[o].x, p[k].y() - obstacles[o].d);
                const double dist = rel.norm();
                if (dist > 0.0) dp -= w * rel / dist;
            }
            if (dp.isZero(0.0)) continue;
            (*dmargin)[k] = output_jacobian(rec.x[k]).topRows<2>().transpose() * dp;
        }
    }
    return cmax + tau * std::log(sum);
}

}  // namespace

// =============================================================================
// Cost and constraint primitives
// =============================================================================

double cvar(std::span<const double> samples, double alpha) {
    if (samples.empty()) throw OptimizerError("cvar of an empty sample set");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw OptimizerError("cvar risk level must lie in (0, 1]");
    const double tail = alpha * static_cast<double>(samples.size());
    if (tail <= 1.0) return *std::max_element(samples.begin(), samples.end());
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double remaining = tail;
    double acc = 0.0;
    for (double s : sorted) {
        const double w = std::min(1.0, remaining);
        acc += w * s;
        remaining -= w;
        if (remaining <= 0.0) break;
    }
    return acc / tail;
}

double smoothed_cvar(std::span<const double> margins, double alpha, double tau,
                     std::vector<double>* grad) {
    const std::size_t N = margins.size();
    if (N == 0) throw OptimizerError("cvar of an empty sample set");
    if (grad != nullptr) grad->assign(N, 0.0);
    double lo = std::numeric_limits<double>::infinity();
    double hi = kNegInf;
    for (double m : margins) {
        if (m == kNegInf) continue;
        lo = std::min(lo, m);
        hi = std::max(hi, m);
    }
    if (hi == kNegInf) return kNegInf;

    const double n = static_cast<double>(N);
    if (alpha >= 1.0) {
        if (grad != nullptr) grad->assign(N, 1.0 / n);
        return std::accumulate(margins.begin(), margins.end(), 0.0) / n;
    }
    const double tail = alpha * n;
    auto excess = [&](double s) {
        double acc = 0.0;
        for (double m : margins) {
            if (m != kNegInf) acc += sigmoid((m - s) / tau);
        }
        return acc - tail;
    };
    lo -= 40.0 * tau;
    hi += 40.0 * tau;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (excess(mid) > 0.0 ? lo : hi) = mid;
    }
    const double s = 0.5 * (lo + hi);
    double acc = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        if (margins[i] == kNegInf) continue;
        const double z = (margins[i] - s) / tau;
        acc += softplus(z);
        if (grad != nullptr) (*grad)[i] = sigmoid(z) / tail;
    }
    return s + tau * acc / tail;
}

double running_cost(const ControlInput& mu, const Eigen::Matrix4d& R) {
    return mu.dot(R * mu);
}

double collision_margin(const Trajectory& traj, std::span<const Obstacle> obstacles) {
    double worst = kNegInf;
    for (const auto& y : traj.outputs) {
        for (const auto& o : obstacles) {
            worst = std::max(worst, o.a - std::hypot(y.x - o.x, y.d - o.d));
        }
    }
    return worst;
}

double terminal_violation(const Trajectory& traj, const Eigen::Vector3d& y_d) {
    return (traj.final_output().vec() - y_d).squaredNorm();
}

double control_cost(const Trajectory& traj, const Eigen::Matrix4d& R) {
    const std::size_t n = traj.controls.size() - 1;
    double acc = 0.0;
    for (std::size_t k = 0; k <= n; ++k) {
        acc += trapezoid_weight(k, n, traj.dt) * running_cost(traj.controls[k], R);
    }
    return acc;
}

// =============================================================================
// Problem definition
// =============================================================================

void OCPSpec::validate() const {
    params.validate();
    uncertainty.validate();
    diffusion.validate();
    if (!(alpha > 0.0 && alpha <= 1.0)) throw OptimizerError("alpha must lie in (0, 1]");
    if (!(delta_M >= 0.0)) throw OptimizerError("delta_M must be non-negative");
    if (!(t_f > 0.0)) throw OptimizerError("t_f must be positive");
    if (!(dt > 0.0)) throw OptimizerError("dt must be positive");
    if (!(knot_dt > 0.0)) throw OptimizerError("knot spacing must be positive");
    if (N < 1) throw OptimizerError("sample count N must be at least 1");
    if (!y_d.allFinite()) throw OptimizerError("target output must be finite");
    if (breaches_floor(x0)) throw OptimizerError("initial state violates the r floor");
    if (!R.allFinite() || !R.isApprox(R.transpose()) ||
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d>(R).eigenvalues().minCoeff() < -1e-12) {
        throw OptimizerError("R must be symmetric positive semidefinite");
    }
    if (solver.max_outer < 1 || solver.max_inner < 1 || !(solver.penalty_init > 0.0) ||
        !(solver.penalty_growth >= 1.0) || !(solver.tol_c >= 0.0) || !(solver.tau_smooth > 0.0) ||
        !(solver.tau_init >= solver.tau_smooth) ||
        !(solver.r_guard >= 0.0) || !(solver.guard_weight >= 0.0)) {
        throw OptimizerError("invalid solver settings");
    }
}

SampleSet SampleSet::draw(const OCPSpec& spec) { return draw(spec, spec.sample_seed); }

SampleSet SampleSet::draw(const OCPSpec& spec, std::uint64_t seed) {
    SampleSet set;
    const std::size_t steps = grid_steps(spec.t_f, spec.dt);
    for (int i = 0; i < spec.N; ++i) {
        const auto idx = static_cast<std::uint64_t>(i);
        set.xi.push_back(sample_xi(spec.uncertainty, derive_seed(seed, {idx, 0})));
        set.noise.push_back(NoiseRealization::generate(derive_seed(seed, {idx, 1}), steps, spec.dt));
    }
    return set;
}

SaaProblem::SaaProblem(OCPSpec spec, SampleSet samples)
    : spec_(std::move(spec)), samples_(std::move(samples)) {
    spec_.validate();
    tau_ = spec_.solver.tau_smooth;
    if (samples_.xi.empty() || samples_.xi.size() != samples_.noise.size()) {
        throw OptimizerError("sample set is empty or inconsistent");
    }
    // Every sample follows the nominal path for any plan, so the feedback term vanishes identically.
    on_nominal_ = spec_.diffusion.is_zero() &&
                  std::all_of(samples_.xi.begin(), samples_.xi.end(), [this](const UncertainParams& xi) {
                      return xi.plant == spec_.uncertainty.expected;
                  });
}

void SaaProblem::set_temperature(double tau) {
    if (!(tau > 0.0)) throw OptimizerError("smoothing temperature must be positive");
    tau_ = tau;
}

Trajectory SaaProblem::nominal(const ControlPlan& plan) const {
    return nominal_rollout(plan, spec_.uncertainty, spec_.setup());
}

std::vector<Trajectory> SaaProblem::rollouts(const ControlPlan& plan) const {
    const RolloutSetup setup = spec_.setup();
    const Trajectory nom = nominal(plan);
    std::vector<Trajectory> out;
    out.reserve(samples_.size());
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        out.push_back(closed_loop_rollout(plan, nom, spec_.K, samples_.xi[i].plant,
                                          spec_.diffusion, samples_.noise[i], setup));
    }
    return out;
}

SaaValues SaaProblem::evaluate(const ControlPlan& plan) const {
    SaaValues v;
    const auto trajs = rollouts(plan);
    const double n = static_cast<double>(trajs.size());
    for (std::size_t i = 0; i < trajs.size(); ++i) {
        const auto& tr = trajs[i];
        v.objective += control_cost(tr, spec_.R) / n;
        if (tr.valid) {
            v.margins.push_back(collision_margin(tr, samples_.xi[i].obstacles));
            v.terminal.push_back(terminal_violation(tr, spec_.y_d));
        } else {
            ++v.invalid;
            v.margins.push_back(kInvalidMargin);
            v.terminal.push_back(kInvalidTerminal);
        }
    }
    v.cvar_value = cvar(v.margins, spec_.alpha);
    v.mean_H = std::accumulate(v.terminal.begin(), v.terminal.end(), 0.0) / n;
    return v;
}

SmoothedValues SaaProblem::smoothed(
    const ControlPlan& plan, const std::function<GradientWeights(const SmoothedValues&)>& weights,
    Eigen::VectorXd* grad) const {
    const RolloutSetup setup = spec_.setup();
    const std::size_t n = setup.steps();
    const double dt = setup.dt;
    const auto u = plan_on_grid(plan, dt, n);
    const Eigen::Vector4d bounds = spec_.params.input_bounds();
    const Eigen::Vector4d inv_T = spec_.params.lag_constants().cwiseInverse();
    const FeedbackGain& K = spec_.K;
    const bool feedback = !K.is_zero() && !on_nominal_;
    const double tau = tau_;
    const std::size_t N = samples_.size();
    const double inv_n = 1.0 / static_cast<double>(N);

    Record nom;
    forward(nom, setup, spec_.uncertainty.expected, DiffusionSpec::none(), nullptr, bounds,
            [&](std::size_t k, const SystemState&) { return u[k]; });

    std::vector<Record> recs(N);
    std::vector<double> margins(N);
    std::vector<double> terminal(N);
    std::vector<std::vector<Vec12>> dmargin(N);
    SmoothedValues val;
    for (std::size_t i = 0; i < N; ++i) {
        Record& rec = recs[i];
        forward(rec, setup, samples_.xi[i].plant, spec_.diffusion, &samples_.noise[i], bounds,
                [&](std::size_t k, const SystemState& x) {
                    return feedback_command(u[k], nom.x[k], x, K);
                });
        double cost = 0.0;
        for (std::size_t k = 0; k <= n; ++k) {
            cost += trapezoid_weight(k, n, dt) * running_cost(rec.mu[k], spec_.R);
        }
        val.objective += cost * inv_n;
        // States after a floor breach stay frozen and keep paying the guard.
        for (std::size_t k = 0; k <= n; ++k) {
            const double gap = std::max(0.0, spec_.solver.r_guard - rec.x[k].r());
            val.guard += dt * gap * gap * inv_n;
        }
        if (rec.valid) {
            margins[i] = smooth_margin(rec, samples_.xi[i].obstacles, tau,
                                       grad != nullptr ? &dmargin[i] : nullptr);
            terminal[i] = (output(rec.x[n]).vec() - spec_.y_d).squaredNorm();
        } else {
            margins[i] = kInvalidMargin;
            terminal[i] = kInvalidTerminal;
        }
    }
    std::vector<double> dcvar;
    val.cvar_value = smoothed_cvar(margins, spec_.alpha, tau, grad != nullptr ? &dcvar : nullptr);
    val.mean_H = std::accumulate(terminal.begin(), terminal.end(), 0.0) * inv_n;
    if (grad == nullptr) return val;

    const GradientWeights w = weights(val);
    const Eigen::Matrix<double, 12, 4> Kt = K.matrix().transpose();
    std::vector<ControlInput> grad_u(n + 1, ControlInput::Zero());
    std::vector<Vec12> gnom(feedback ? n + 1 : 0, Vec12::Zero());

    for (std::size_t i = 0; i < N; ++i) {
        const Record& rec = recs[i];
        const PlantParams& plant = samples_.xi[i].plant;
        const double wc = rec.valid ? w.cvar * dcvar[i] : 0.0;
        auto running_grad = [&](std::size_t k) -> ControlInput {
            return (2.0 * w.objective * inv_n * trapezoid_weight(k, n, dt)) * (spec_.R * rec.mu[k]);
        };
        auto local_grad = [&](std::size_t k) -> Vec12 {
            Vec12 out = Vec12::Zero();
            if (rec.valid && wc != 0.0 && !dmargin[i].empty()) out = wc * dmargin[i][k];
            const double gap = std::max(0.0, spec_.solver.r_guard - rec.x[k].x[kR]);
            const auto copies = static_cast<double>(k == rec.last ? n - rec.last + 1 : 1);
            out[kR] -= 2.0 * w.guard * inv_n * dt * gap * copies;
            return out;
        };

        // Controls after a floor breach repeat mu[last].
        ControlInput pending = ControlInput::Zero();
        for (std::size_t k = n; k > rec.last; --k) pending += running_grad(k);

        Vec12 lambda = Vec12::Zero();
        if (rec.valid) {
            const SystemState& xn = rec.x[n];
            const Eigen::Vector3d dy = 2.0 * (output(xn).vec() - spec_.y_d);
            lambda = (w.mean_H * inv_n) * (output_jacobian(xn).transpose() * dy);
        }
        for (std::size_t kk = rec.last + 1; kk-- > 0;) {
            const std::size_t k = kk;
            ControlInput g_mu = running_grad(k);
            Vec12 lam_k;
            if (k == rec.last) {
                g_mu += pending;
                lam_k = rec.valid ? lambda : Vec12::Zero();
            } else {
                const Vec12 lt = project_adjoint(lambda);
                g_mu += dt * lt.segment<4>(kFTheta).cwiseProduct(inv_T);
                const Mat12 A = drift_jacobian(rec.x[k], plant, spec_.params);
                lam_k = lt + dt * (A.transpose() * lt);
            }
            lam_k += local_grad(k);
            const ControlInput s_g =
                smooth_sat_derivative(rec.cmd[k], bounds).cwiseProduct(g_mu);
            grad_u[k] += s_g;
            if (feedback) {
                const Vec12 kg = Kt * s_g;
                lam_k -= kg;
                gnom[k] += kg;
            }
            lambda = lam_k;
        }
    }

    if (feedback) {
        Vec12 nu = Vec12::Zero();
        for (std::size_t kk = n + 1; kk-- > 0;) {
            const std::size_t k = kk;
            if (k >= nom.last) {
                nu += gnom[k];
                continue;
            }
            const Vec12 nt = project_adjoint(nu);
            const ControlInput g_mu = dt * nt.segment<4>(kFTheta).cwiseProduct(inv_T);
            grad_u[k] += smooth_sat_derivative(nom.cmd[k], bounds).cwiseProduct(g_mu);
            const Mat12 A = drift_jacobian(nom.x[k], spec_.uncertainty.expected, spec_.params);
            nu = nt + dt * (A.transpose() * nt) + gnom[k];
        }
    }

    grad->setZero(static_cast<Eigen::Index>(4 * plan.knots.size()));
    for (std::size_t k = 0; k <= n; ++k) {
        const KnotWeights kw =
            interpolation_weights(plan, std::min(static_cast<double>(k) * dt, plan.t_f));
        for (int j = 0; j < kw.count; ++j) {
            grad->segment<4>(static_cast<Eigen::Index>(4 * kw.index[j])) += kw.weight[j] * grad_u[k];
        }
    }
    return val;
}

// =============================================================================
// Augmented-Lagrangian solve
// =============================================================================

ControlPlan hover_plan(const OCPSpec& spec) {
    const double weight = spec.uncertainty.expected.m_bar * spec.params.g;
    const ControlInput u =
        smooth_sat_inverse(ControlInput(0.0, 0.0, -weight, 0.0), spec.params.input_bounds());
    return ControlPlan::constant(u, spec.t_f, spec.knot_dt, spec.hold);
}

SolveReport solve_socp_fb(const OCPSpec& spec, const ControlPlan* initial_plan) {
    return solve_socp_fb(spec, SampleSet::draw(spec), initial_plan);
}

SolveReport solve_socp_fb(const OCPSpec& spec, const SampleSet& samples,
                          const ControlPlan* initial_plan) {
    const auto started = std::chrono::steady_clock::now();
    SaaProblem problem(spec, samples);
    ControlPlan plan = initial_plan != nullptr ? *initial_plan : hover_plan(spec);
    plan.validate();
    if (std::abs(plan.t_f - spec.t_f) > 1e-9) throw OptimizerError("initial plan horizon differs from t_f");

    const Eigen::Vector4d bounds = spec.params.input_bounds();
    const auto nk = static_cast<Eigen::Index>(plan.knots.size());
    auto to_plan = [&](const Eigen::VectorXd& z) {
        for (Eigen::Index j = 0; j < nk; ++j) {
            plan.knots[static_cast<std::size_t>(j)] = z.segment<4>(4 * j).cwiseProduct(bounds);
        }
        return plan;
    };
    Eigen::VectorXd z(4 * nk);
    for (Eigen::Index j = 0; j < nk; ++j) {
        z.segment<4>(4 * j) = plan.knots[static_cast<std::size_t>(j)].cwiseQuotient(bounds);
    }

    const auto& sol = spec.solver;
    double lambda_c = 0.0;
    double lambda_h = 0.0;
    double rho = sol.penalty_init;
    double prev_violation = std::numeric_limits<double>::infinity();

    SolveReport report;
    report.method = spec.method_label();
    double best_violation = std::numeric_limits<double>::infinity();
    double best_objective = std::numeric_limits<double>::infinity();

    // Objective normalized by its value at the initial plan so the constraint
    // penalties act on comparable scales.
    const double j_scale = 1.0 / std::max(1e-12, problem.smoothed(plan, {}, nullptr).objective);

    LbfgsOptions opt;
    opt.max_iterations = sol.max_inner;
    for (int outer = 0; outer < sol.max_outer; ++outer) {
        problem.set_temperature(std::max(sol.tau_smooth, sol.tau_init * std::pow(0.5, outer)));
        const auto merit = [&](const Eigen::VectorXd& zz, Eigen::VectorXd* g) {
            const ControlPlan p = to_plan(zz);
            Eigen::VectorXd gk;
            const auto weights = [&](const SmoothedValues& v) {
                return GradientWeights{j_scale, al_weight(v.cvar_value, lambda_c, rho),
                                       al_weight(v.mean_H - spec.delta_M, lambda_h, rho),
                                       sol.guard_weight};
            };
            const SmoothedValues v = problem.smoothed(p, weights, g != nullptr ? &gk : nullptr);
            if (g != nullptr) {
                g->resize(gk.size());
                for (Eigen::Index j = 0; j < nk; ++j) {
                    g->segment<4>(4 * j) = gk.segment<4>(4 * j).cwiseProduct(bounds);
                }
            }
            return j_scale * v.objective + al_penalty(v.cvar_value, lambda_c, rho) +
                   al_penalty(v.mean_H - spec.delta_M, lambda_h, rho) + sol.guard_weight * v.guard;
        };
        const LbfgsResult res = lbfgs_minimize(merit, z, opt);
        z = res.x;
        report.iterations += res.iterations;
        report.outer_iterations = outer + 1;

        const ControlPlan current = to_plan(z);
        const SaaValues exact = problem.evaluate(current);
        const double violation =
            std::max({0.0, exact.cvar_value, exact.mean_H - spec.delta_M});
        const bool feasible = violation <= sol.tol_c;
        const bool better = feasible ? (best_violation > sol.tol_c || exact.objective < best_objective)
                                     : violation < best_violation;
        if (better) {
            best_violation = violation;
            best_objective = exact.objective;
            report.plan = current;
            report.objective = exact.objective;
            report.cvar_value = exact.cvar_value;
            report.terminal_value = exact.mean_H;
        }
        if (feasible && problem.temperature() <= sol.tau_smooth) {
            report.converged = true;
            break;
        }
        const SmoothedValues sv = problem.smoothed(current, {}, nullptr);
        lambda_c = al_weight(sv.cvar_value, lambda_c, rho);
        lambda_h = al_weight(sv.mean_H - spec.delta_M, lambda_h, rho);
        if (violation > 0.25 * prev_violation) rho *= sol.penalty_growth;
        prev_violation = violation;
    }
    report.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

}  // namespace tether
