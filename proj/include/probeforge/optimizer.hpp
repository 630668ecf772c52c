#pragma once

// Limited-memory BFGS (two-loop recursion) with a strong-Wolfe line search
// (bracketing + zoom with safeguarded cubic interpolation).

#include "errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <string>

namespace probeforge {

using Vector = Eigen::VectorXd;

/// Returns the loss at `theta` and writes the gradient into `grad`
/// (already sized like theta).
using Objective = std::function<double(const Vector& theta, Vector& grad)>;

struct OptimizerConfig {
    int memory = 10;
    int max_iter = 2000;
    double grad_tol = 1e-5; ///< on the infinity norm of the gradient
    double wolfe_c1 = 1e-4;
    double wolfe_c2 = 0.9;
    int max_line_search = 50;
    double curvature_eps = 1e-10; ///< pairs with s'y at or below this are dropped

    void validate() const
    {
        if (!(0.0 < wolfe_c1 && wolfe_c1 < wolfe_c2 && wolfe_c2 < 1.0)) {
            throw ConfigError("optimizer requires 0 < wolfe_c1 < wolfe_c2 < 1");
        }
        if (memory < 1) throw ConfigError("optimizer memory must be >= 1");
        if (max_iter < 1) throw ConfigError("optimizer max_iter must be >= 1");
        if (!(grad_tol >= 0.0)) throw ConfigError("optimizer grad_tol must be >= 0");
        if (max_line_search < 1) throw ConfigError("optimizer max_line_search must be >= 1");
    }
};

enum class OptimStatus { converged, max_iterations, line_search_failure };

struct OptimResult {
    Vector theta;
    double loss{0.0};
    double grad_norm{0.0}; ///< infinity norm at theta
    int iterations{0};
    bool converged{false};
    OptimStatus status{OptimStatus::max_iterations};
};

/// Per accepted step, passed to the optional observer of `minimize`.
struct IterationInfo {
    int iteration{0};
    double loss_before{0.0};
    double loss{0.0};
    double grad_norm{0.0};
    double step{0.0};
    double directional_derivative{0.0}; ///< g'd at the start of the step
};

namespace detail {

/// Minimizer of the cubic interpolating (a, fa, ga) and (b, fb, gb); falls
/// back to the midpoint when the cubic has no real minimizer.
inline double cubic_minimizer(double a, double fa, double ga, double b, double fb, double gb)
{
    const double d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    const double disc = d1 * d1 - ga * gb;
    if (!(disc >= 0.0)) return 0.5 * (a + b);
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double denom = gb - ga + 2.0 * d2;
    if (denom == 0.0 || !std::isfinite(denom)) return 0.5 * (a + b);
    const double t = b - (b - a) * (gb + d2 - d1) / denom;
    return std::isfinite(t) ? t : 0.5 * (a + b);
}

struct LinePoint {
    double alpha{0.0};
    double f{0.0};
    double g{0.0}; // directional derivative
};

struct LineSearchOutcome {
    bool ok{false};
    double alpha{0.0};
    double f{0.0};
    Vector x;
    Vector grad;
};

/// Strong-Wolfe line search along `dir` from (x0, f0, g0).
inline LineSearchOutcome strong_wolfe(const Objective& obj, const Vector& x0, double f0,
                                      const Vector& dir, double dg0, double alpha0,
                                      const OptimizerConfig& cfg, Vector& best_x, double& best_f,
                                      Vector& best_g)
{
    LineSearchOutcome out;
    Vector x(x0.size());
    Vector grad(x0.size());
    int trials = 0;

    auto eval = [&](double alpha) {
        ++trials;
        x = x0 + alpha * dir;
        double f = obj(x, grad);
        if (!std::isfinite(f)) f = std::numeric_limits<double>::infinity();
        const double g = std::isfinite(f) ? grad.dot(dir) : std::numeric_limits<double>::quiet_NaN();
        if (f < best_f) {
            best_f = f;
            best_x = x;
            best_g = grad;
        }
        return LinePoint{alpha, f, g};
    };
    auto accept = [&](const LinePoint& p) {
        out.ok = true;
        out.alpha = p.alpha;
        out.f = p.f;
        out.x = x;
        out.grad = grad;
        return out;
    };
    auto armijo_fails = [&](const LinePoint& p) {
        return !(p.f <= f0 + cfg.wolfe_c1 * p.alpha * dg0);
    };
    auto curvature_ok = [&](const LinePoint& p) {
        return std::abs(p.g) <= -cfg.wolfe_c2 * dg0;
    };

    auto zoom = [&](LinePoint lo, LinePoint hi) -> LineSearchOutcome {
        while (trials < cfg.max_line_search) {
            const double left = std::min(lo.alpha, hi.alpha);
            const double right = std::max(lo.alpha, hi.alpha);
            const double width = right - left;
            if (width <= std::numeric_limits<double>::epsilon() * std::max(1.0, right)) break;
            double alpha = std::isfinite(hi.f) && std::isfinite(hi.g)
                               ? cubic_minimizer(lo.alpha, lo.f, lo.g, hi.alpha, hi.f, hi.g)
                               : 0.5 * (lo.alpha + hi.alpha);
            if (!(alpha >= left + 0.1 * width && alpha <= right - 0.1 * width)) {
                alpha = 0.5 * (lo.alpha + hi.alpha);
            }
            const auto p = eval(alpha);
            if (armijo_fails(p) || p.f >= lo.f) {
                hi = p;
            } else {
                if (curvature_ok(p)) return accept(p);
                if (p.g * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
                lo = p;
            }
        }
        return out;
    };

    LinePoint prev{0.0, f0, dg0};
    double alpha = alpha0;
    for (int i = 0; trials < cfg.max_line_search; ++i) {
        const auto p = eval(alpha);
        if (armijo_fails(p) || (i > 0 && p.f >= prev.f)) return zoom(prev, p);
        if (curvature_ok(p)) return accept(p);
        if (p.g >= 0.0) return zoom(p, prev);
        prev = p;
        alpha *= 2.0;
    }
    return out;
}

} // namespace detail

/// Minimizes `obj` from `theta0`. Returns the best iterate seen; on line-search
/// failure (no strong-Wolfe point within `max_line_search` evaluations) the
/// result carries status line_search_failure and converged=false unless the
/// best point already meets grad_tol.
inline OptimResult minimize(const Objective& obj, const Vector& theta0, const OptimizerConfig& cfg,
                            const std::function<void(const IterationInfo&)>& observer = {})
{
    cfg.validate();
    const auto k = theta0.size();
    Vector x = theta0;
    Vector g(k);
    double f = obj(x, g);
    if (!std::isfinite(f) || !g.allFinite()) {
        throw NonFiniteLoss("objective is not finite at the initial point");
    }

    struct Pair {
        Vector s;
        Vector y;
        double rho;
    };
    std::deque<Pair> history;
    std::vector<double> alpha_buf(static_cast<std::size_t>(cfg.memory));

    OptimResult result;
    Vector best_x = x;
    Vector best_g = g;
    double best_f = f;
    auto finish = [&](OptimStatus status, int iterations) {
        result.theta = best_x;
        result.loss = best_f;
        result.grad_norm = best_g.lpNorm<Eigen::Infinity>();
        result.iterations = iterations;
        result.converged = result.grad_norm <= cfg.grad_tol;
        result.status = result.converged ? OptimStatus::converged : status;
        return result;
    };

    if (g.lpNorm<Eigen::Infinity>() <= cfg.grad_tol) return finish(OptimStatus::converged, 0);

    Vector dir(k);
    for (int iter = 0; iter < cfg.max_iter; ++iter) {
        // Two-loop recursion: dir = -H g.
        dir = -g;
        const auto m = history.size();
        for (std::size_t i = m; i-- > 0;) {
            const auto& p = history[i];
            alpha_buf[i] = p.rho * p.s.dot(dir);
            dir -= alpha_buf[i] * p.y;
        }
        if (m > 0) {
            const auto& last = history.back();
            dir *= last.s.dot(last.y) / last.y.squaredNorm();
        }
        for (std::size_t i = 0; i < m; ++i) {
            const auto& p = history[i];
            const double beta = p.rho * p.y.dot(dir);
            dir += (alpha_buf[i] - beta) * p.s;
        }

        double dg = g.dot(dir);
        if (!(dg < 0.0)) {
            history.clear();
            dir = -g;
            dg = -g.squaredNorm();
        }
        const double alpha0 = history.empty() ? std::min(1.0, 1.0 / dir.norm()) : 1.0;

        auto ls = detail::strong_wolfe(obj, x, f, dir, dg, alpha0, cfg, best_x, best_f, best_g);
        if (!ls.ok) {
            if (!history.empty()) {
                // Retry once along steepest descent with a fresh memory.
                history.clear();
                dir = -g;
                dg = -g.squaredNorm();
                ls = detail::strong_wolfe(obj, x, f, dir, dg, std::min(1.0, 1.0 / dir.norm()),
                                          cfg, best_x, best_f, best_g);
            }
            if (!ls.ok) return finish(OptimStatus::line_search_failure, iter);
        }

        Pair p{ls.x - x, ls.grad - g, 0.0};
        const double sy = p.s.dot(p.y);
        if (sy > cfg.curvature_eps) {
            p.rho = 1.0 / sy;
            history.push_back(std::move(p));
            if (history.size() > static_cast<std::size_t>(cfg.memory)) history.pop_front();
        }

        const double f_before = f;
        x = std::move(ls.x);
        g = std::move(ls.grad);
        f = ls.f;
        if (f <= best_f) {
            best_f = f;
            best_x = x;
            best_g = g;
        }
        const double gnorm = g.lpNorm<Eigen::Infinity>();
        if (observer) observer({iter + 1, f_before, f, gnorm, ls.alpha, dg});
        if (gnorm <= cfg.grad_tol) {
            best_f = f;
            best_x = x;
            best_g = g;
            return finish(OptimStatus::converged, iter + 1);
        }
    }
    return finish(OptimStatus::max_iterations, cfg.max_iter);
}

/// Central-difference gradient check. Per coordinate the deviation is
/// |analytic - numeric| / max(1, |analytic|, |numeric|), which is absolute
/// near zero gradients and relative elsewhere; returns the maximum.
inline double check_gradient(const Objective& obj, const Vector& theta, double epsilon)
{
    if (!(epsilon > 0.0)) throw ConfigError("check_gradient requires epsilon > 0");
    Vector grad(theta.size());
    obj(theta, grad);
    Vector scratch(theta.size());
    Vector probe = theta;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        probe[i] = theta[i] + epsilon;
        const double fp = obj(probe, scratch);
        probe[i] = theta[i] - epsilon;
        const double fm = obj(probe, scratch);
        probe[i] = theta[i];
        const double numeric = (fp - fm) / (2.0 * epsilon);
        const double denom = std::max({1.0, std::abs(grad[i]), std::abs(numeric)});
        worst = std::max(worst, std::abs(grad[i] - numeric) / denom);
    }
    return worst;
}

} // namespace probeforge
