// Limited-memory BFGS with Armijo backtracking. Used as the inner loop of the
// augmented-Lagrangian solve.
#pragma once

#include <functional>

#include <Eigen/Dense>

namespace tether {

struct LbfgsOptions {
    int max_iterations = 60;
    int memory = 10;
    double grad_tol = 1e-6;     // on ||g||_inf / max(1, |f|)
    double rel_decrease_tol = 1e-10;
    double armijo_c1 = 1e-4;
    double backtrack = 0.5;
    int max_backtracks = 30;
};

struct LbfgsResult {
    Eigen::VectorXd x;
    double value = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
};

/// Objective callback: returns f(x) and writes the gradient when `grad` is non-null.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

LbfgsResult lbfgs_minimize(const Objective& f, Eigen::VectorXd x0, const LbfgsOptions& opt = {});

}  // namespace tether
