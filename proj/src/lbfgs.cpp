#include "tether/lbfgs.hpp"

#include <cmath>
#include <deque>

namespace tether {

LbfgsResult lbfgs_minimize(const Objective& f, Eigen::VectorXd x0, const LbfgsOptions& opt) {
    LbfgsResult res;
    const Eigen::Index n = x0.size();
    Eigen::VectorXd g(n);
    double fx = f(x0, &g);
    ++res.evaluations;
    res.x = std::move(x0);
    res.value = fx;
    if (!std::isfinite(fx)) return res;

    std::deque<Eigen::VectorXd> s_hist;
    std::deque<Eigen::VectorXd> y_hist;
    std::deque<double> rho_hist;
    std::vector<double> alpha(static_cast<std::size_t>(opt.memory));

    Eigen::VectorXd x_new(n);
    Eigen::VectorXd g_new(n);
    int stalls = 0;
    for (int it = 0; it < opt.max_iterations; ++it) {
        if (g.lpNorm<Eigen::Infinity>() <= opt.grad_tol * std::max(1.0, std::abs(fx))) {
            res.converged = true;
            break;
        }
        // Two-loop recursion.
        Eigen::VectorXd q = -g;
        const int m = static_cast<int>(s_hist.size());
        for (int i = m - 1; i >= 0; --i) {
            alpha[static_cast<std::size_t>(i)] = rho_hist[i] * s_hist[i].dot(q);
            q -= alpha[static_cast<std::size_t>(i)] * y_hist[i];
        }
        if (m > 0) {
            q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
        } else {
            q /= std::max(1.0, g.lpNorm<Eigen::Infinity>());
        }
        for (int i = 0; i < m; ++i) {
            const double beta = rho_hist[i] * y_hist[i].dot(q);
            q += (alpha[static_cast<std::size_t>(i)] - beta) * s_hist[i];
        }
        double slope = g.dot(q);
        if (!(slope < 0.0)) {
            // Not a descent direction: restart from steepest descent.
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            q = -g / std::max(1.0, g.lpNorm<Eigen::Infinity>());
            slope = g.dot(q);
        }

        double step = 1.0;
        double f_new = 0.0;
        bool accepted = false;
        for (int ls = 0; ls < opt.max_backtracks; ++ls) {
            x_new = res.x + step * q;
            f_new = f(x_new, &g_new);
            ++res.evaluations;
            if (std::isfinite(f_new) && f_new <= fx + opt.armijo_c1 * step * slope) {
                accepted = true;
                break;
            }
            step *= opt.backtrack;
        }
        if (!accepted) break;

        Eigen::VectorXd s = x_new - res.x;
        Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (static_cast<int>(s_hist.size()) == opt.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
        }
        const double decrease = fx - f_new;
        res.x = x_new;
        g = g_new;
        fx = f_new;
        res.value = fx;
        res.iterations = it + 1;
        stalls = decrease <= opt.rel_decrease_tol * std::max(1.0, std::abs(fx)) ? stalls + 1 : 0;
        if (stalls >= 3) {
            res.converged = true;
            break;
        }
    }
    return res;
}

}  // namespace tether
