#pragma once

// Quasi-Newton minimization with central-difference gradients.

#include "volcast/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace volcast {

struct OptimizerOptions {
    int max_iterations = 500;
    double f_rel_tol = 1e-9;    ///< relative objective change
    double x_tol = 1e-7;        ///< max absolute coordinate change
    double grad_tol = 1e-6;     ///< max |gradient| relative to (1 + |f|)
    double fd_step = 1e-6;      ///< relative central-difference step
    double max_step = 2.0;      ///< cap on the first trial step, per coordinate
};

struct OptimizeResult {
    std::vector<double> x;
    double value = std::numeric_limits<double>::infinity();
    std::vector<double> gradient;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    std::string message;
};

namespace detail {

template <class F>
double safe_eval(const F& f, const Eigen::VectorXd& x, int& evals) {
    ++evals;
    double v;
    try {
        v = f(std::vector<double>(x.data(), x.data() + x.size()));
    } catch (const NumericError&) {
        return std::numeric_limits<double>::infinity();
    } catch (const DomainError&) {
        return std::numeric_limits<double>::infinity();
    }
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// Central-difference gradient of f at x. Non-finite neighbours fall back to a
/// one-sided difference.
template <class F>
std::vector<double> numerical_gradient(const F& f, const std::vector<double>& x, double rel_step = 1e-6) {
    int evals = 0;
    const Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    const double f0 = detail::safe_eval(f, x0, evals);
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double h = rel_step * std::max(1.0, std::abs(x[i]));
        Eigen::VectorXd xp = x0;
        Eigen::VectorXd xm = x0;
        xp[static_cast<Eigen::Index>(i)] += h;
        xm[static_cast<Eigen::Index>(i)] -= h;
        const double fp = detail::safe_eval(f, xp, evals);
        const double fm = detail::safe_eval(f, xm, evals);
        if (std::isfinite(fp) && std::isfinite(fm))
            g[i] = (fp - fm) / (2.0 * h);
        else if (std::isfinite(fp))
            g[i] = (fp - f0) / h;
        else if (std::isfinite(fm))
            g[i] = (f0 - fm) / h;
        else
            g[i] = 0.0;
    }
    return g;
}

namespace detail {

template <class FG>
OptimizeResult bfgs_core(const FG& value_grad, const std::vector<double>& x0, const OptimizerOptions& opt) {
    using Eigen::VectorXd;
    const auto n = static_cast<Eigen::Index>(x0.size());
    OptimizeResult res;
    VectorXd x = Eigen::Map<const VectorXd>(x0.data(), n);
    VectorXd g(n);
    double fx = value_grad(x, &g, res.evaluations);
    if (!std::isfinite(fx)) {
        res.x = x0;
        res.message = "objective not finite at the starting point";
        return res;
    }
    Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(n, n);
    bool fresh = true;
    int it = 0;
    for (; it < opt.max_iterations; ++it) {
        if (g.cwiseAbs().maxCoeff() <= opt.grad_tol * (1.0 + std::abs(fx))) {
            res.converged = true;
            res.message = "gradient below tolerance";
            break;
        }
        VectorXd dir = -hinv * g;
        double slope = g.dot(dir);
        if (!(slope < 0.0)) {
            hinv.setIdentity();
            dir = -g;
            slope = g.dot(dir);
            fresh = true;
        }
        double step = 1.0;
        const double biggest = dir.cwiseAbs().maxCoeff();
        if (biggest * step > opt.max_step) step = opt.max_step / biggest;
        double f_new = std::numeric_limits<double>::infinity();
        VectorXd x_new = x;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            x_new = x + step * dir;
            f_new = value_grad(x_new, nullptr, res.evaluations);
            if (std::isfinite(f_new) && f_new <= fx + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (!fresh) {
                // retry along steepest descent before giving up
                hinv.setIdentity();
                fresh = true;
                continue;
            }
            res.converged = g.cwiseAbs().maxCoeff() <= 1e-3 * (1.0 + std::abs(fx));
            res.message = "line search failed";
            break;
        }
        const VectorXd s = x_new - x;
        VectorXd g_new(n);
        f_new = value_grad(x_new, &g_new, res.evaluations);
        const VectorXd y = g_new - g;
        const double df = fx - f_new;
        x = x_new;
        const double f_old = fx;
        fx = f_new;
        g = g_new;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (fresh) {
                // scale the initial inverse Hessian (Nocedal & Wright 6.20)
                hinv *= sy / y.dot(y);
                fresh = false;
            }
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
            hinv = (eye - rho * s * y.transpose()) * hinv * (eye - rho * y * s.transpose()) + rho * s * s.transpose();
        }
        if (df <= opt.f_rel_tol * (1.0 + std::abs(f_old)) && s.cwiseAbs().maxCoeff() <= opt.x_tol) {
            res.converged = true;
            res.message = "objective and parameter changes below tolerance";
            ++it;
            break;
        }
    }
    if (it >= opt.max_iterations && !res.converged) res.message = "iteration cap reached";
    res.iterations = it;
    res.x.assign(x.data(), x.data() + n);
    res.value = fx;
    res.gradient.assign(g.data(), g.data() + n);
    return res;
}

}  // namespace detail

/// BFGS on an unconstrained objective with central-difference gradients.
/// Evaluation failures (NumericError, DomainError, non-finite values) are
/// treated as +inf and rejected by the line search, so the returned point is
/// never worse than x0.
template <class F>
OptimizeResult minimize_bfgs(const F& f, const std::vector<double>& x0, const OptimizerOptions& opt = {}) {
    using Eigen::VectorXd;
    auto value_grad = [&](const VectorXd& at, VectorXd* g, int& evals) {
        const double f_at = detail::safe_eval(f, at, evals);
        if (!g || !std::isfinite(f_at)) return f_at;
        for (Eigen::Index i = 0; i < at.size(); ++i) {
            const double h = opt.fd_step * std::max(1.0, std::abs(at[i]));
            VectorXd xp = at;
            VectorXd xm = at;
            xp[i] += h;
            xm[i] -= h;
            const double fp = detail::safe_eval(f, xp, evals);
            const double fm = detail::safe_eval(f, xm, evals);
            if (std::isfinite(fp) && std::isfinite(fm))
                (*g)[i] = (fp - fm) / (2.0 * h);
            else if (std::isfinite(fp))
                (*g)[i] = (fp - f_at) / h;
            else if (std::isfinite(fm))
                (*g)[i] = (f_at - fm) / h;
            else
                (*g)[i] = 0.0;
        }
        return f_at;
    };
    return detail::bfgs_core(value_grad, x0, opt);
}

/// BFGS with a caller-supplied gradient: fg(x, grad) returns f(x) and fills
/// grad (same length as x) when grad is non-null.
template <class FG>
OptimizeResult minimize_bfgs_grad(const FG& fg, const std::vector<double>& x0, const OptimizerOptions& opt = {}) {
    using Eigen::VectorXd;
    auto value_grad = [&](const VectorXd& at, VectorXd* g, int& evals) {
        ++evals;
        std::vector<double> xv(at.data(), at.data() + at.size());
        std::vector<double> gv(g ? xv.size() : 0);
        double v = fg(xv, g ? &gv : nullptr);
        if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
        if (g) *g = Eigen::Map<const VectorXd>(gv.data(), at.size());
        return v;
    };
    return detail::bfgs_core(value_grad, x0, opt);
}

}  // namespace volcast
