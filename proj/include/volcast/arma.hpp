#pragma once

// ARMA(p, q) mean equations fitted by conditional Gaussian likelihood.

#include "volcast/error.hpp"
#include "volcast/optimizer.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace volcast {

inline constexpr int kMaxArmaOrder = 5;

struct ArmaSpec {
    int p = 0;
    int q = 0;
    bool include_constant = true;

    [[nodiscard]] int n_coefficients() const { return p + q + (include_constant ? 1 : 0); }
    [[nodiscard]] std::string name() const {
        if (p == 0 && q == 0) return "ARMA(0,0)";
        if (q == 0) return "AR(" + std::to_string(p) + ")";
        if (p == 0) return "MA(" + std::to_string(q) + ")";
        return "ARMA(" + std::to_string(p) + "," + std::to_string(q) + ")";
    }
    void validate() const {
        if (p < 0 || q < 0 || p > kMaxArmaOrder || q > kMaxArmaOrder)
            throw DomainError("ARMA orders must lie in 0.." + std::to_string(kMaxArmaOrder));
    }
    friend bool operator==(const ArmaSpec&, const ArmaSpec&) = default;
};

struct ArmaFit {
    ArmaSpec spec;
    double constant = 0.0;
    std::vector<double> ar;
    std::vector<double> ma;
    std::vector<double> residuals;
    double sigma2 = 0.0;
    double loglik = 0.0;
    double aic = 0.0;  ///< -2 loglik + 2k, k counts the innovation variance
    bool stationary = true;
    bool invertible = true;
    std::string diagnostic;

    [[nodiscard]] int n_params() const { return spec.n_coefficients() + 1; }
};

/// One-step prediction errors of an ARMA recursion. Pre-sample residuals are
/// zero and pre-sample observations sit at the process mean.
inline std::vector<double> arma_residuals(std::span<const double> y, double constant, std::span<const double> ar,
                                          std::span<const double> ma) {
    double phi_sum = 0.0;
    for (double a : ar) phi_sum += a;
    const double level = std::abs(1.0 - phi_sum) > 1e-8 ? constant / (1.0 - phi_sum) : constant;
    const std::size_t n = y.size();
    std::vector<double> e(n, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        double pred = constant;
        for (std::size_t i = 0; i < ar.size(); ++i) pred += ar[i] * (t > i ? y[t - i - 1] : level);
        for (std::size_t j = 0; j < ma.size(); ++j)
            if (t > j) pred += ma[j] * e[t - j - 1];
        e[t] = y[t] - pred;
    }
    return e;
}

/// True when every root of 1 - a_1 z - ... - a_p z^p lies outside the unit circle.
inline bool ar_is_stationary(std::span<const double> ar) {
    if (ar.empty()) return true;
    const auto p = static_cast<Eigen::Index>(ar.size());
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index i = 0; i < p; ++i) companion(0, i) = ar[static_cast<std::size_t>(i)];
    for (Eigen::Index i = 1; i < p; ++i) companion(i, i - 1) = 1.0;
    const Eigen::VectorXcd eig = companion.eigenvalues();
    return eig.cwiseAbs().maxCoeff() < 1.0;
}

/// True when every root of 1 + m_1 z + ... + m_q z^q lies outside the unit circle.
inline bool ma_is_invertible(std::span<const double> ma) {
    std::vector<double> neg(ma.size());
    for (std::size_t j = 0; j < ma.size(); ++j) neg[j] = -ma[j];
    return ar_is_stationary(neg);
}

namespace detail {

inline double sample_variance(std::span<const double> y) {
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double ss = 0.0;
    for (double v : y) ss += (v - mean) * (v - mean);
    return ss / static_cast<double>(y.size());
}

inline bool is_degenerate(std::span<const double> y) {
    if (y.empty()) return true;
    const double first = y[0];
    double spread = 0.0;
    for (double v : y) spread = std::max(spread, std::abs(v - first));
    return spread <= 1e-12 * std::max(std::abs(first), 1e-300);
}

// Hannan-Rissanen starting values: long AR by least squares, then regression on
// lagged observations and lagged long-AR residuals.
inline std::vector<double> hannan_rissanen(std::span<const double> y, const ArmaSpec& spec) {
    const int n = static_cast<int>(y.size());
    const int c = spec.include_constant ? 1 : 0;
    std::vector<double> ehat(y.size(), 0.0);
    const int m = spec.q > 0 ? std::min(20, std::max(spec.p + spec.q + 4, 8)) : 0;
    if (m > 0) {
        Eigen::MatrixXd X(n - m, m + 1);
        Eigen::VectorXd Y(n - m);
        for (int t = m; t < n; ++t) {
            X(t - m, 0) = 1.0;
            for (int i = 1; i <= m; ++i) X(t - m, i) = y[t - i];
            Y(t - m) = y[t];
        }
        const Eigen::VectorXd b = X.colPivHouseholderQr().solve(Y);
        for (int t = m; t < n; ++t) ehat[t] = Y(t - m) - X.row(t - m).dot(b);
    }
    const int start = m + std::max(spec.p, spec.q);
    const int k = c + spec.p + spec.q;
    std::vector<double> out(static_cast<std::size_t>(k), 0.0);
    if (k == 0 || n - start <= k) return out;
    Eigen::MatrixXd X(n - start, k);
    Eigen::VectorXd Y(n - start);
    for (int t = start; t < n; ++t) {
        int col = 0;
        if (c) X(t - start, col++) = 1.0;
        for (int i = 1; i <= spec.p; ++i) X(t - start, col++) = y[t - i];
        for (int j = 1; j <= spec.q; ++j) X(t - start, col++) = ehat[t - j];
        Y(t - start) = y[t];
    }
    const Eigen::VectorXd b = X.colPivHouseholderQr().solve(Y);
    for (int i = 0; i < k; ++i) out[static_cast<std::size_t>(i)] = std::isfinite(b(i)) ? b(i) : 0.0;
    // pull an explosive start back inside the stationary region
    std::vector<double> ar(out.begin() + c, out.begin() + c + spec.p);
    for (int shrink = 0; shrink < 50 && !ar_is_stationary(ar); ++shrink)
        for (auto& a : ar) a *= 0.9;
    std::copy(ar.begin(), ar.end(), out.begin() + c);
    for (int j = 0; j < spec.q; ++j) out[static_cast<std::size_t>(c + spec.p + j)] = std::clamp(out[static_cast<std::size_t>(c + spec.p + j)], -0.9, 0.9);
    return out;
}

}  // namespace detail

/// Conditional maximum-likelihood ARMA fit under Gaussian innovations.
/// A non-stationary optimum is returned with stationary = false and a diagnostic.
inline ArmaFit fit_arma(std::span<const double> y, const ArmaSpec& spec) {
    spec.validate();
    const std::size_t n = y.size();
    if (n <= static_cast<std::size_t>(10 * (spec.p + spec.q + 1)))
        throw DomainError("fit_arma: series too short for " + spec.name());
    for (double v : y)
        if (!std::isfinite(v)) throw DataError("fit_arma: series contains non-finite values");
    if (detail::is_degenerate(y)) throw DataError("fit_arma: degenerate input, series has zero variance");
    const double var = detail::sample_variance(y);

    // work on a unit-scale copy; AR/MA coefficients are scale free
    const double scale = std::sqrt(var);
    std::vector<double> ys(y.begin(), y.end());
    for (auto& v : ys) v /= scale;

    const int c = spec.include_constant ? 1 : 0;
    auto unpack = [&](const std::vector<double>& th, double& constant, std::vector<double>& ar, std::vector<double>& ma) {
        constant = c ? th[0] : 0.0;
        ar.assign(th.begin() + c, th.begin() + c + spec.p);
        ma.assign(th.begin() + c + spec.p, th.end());
    };
    // log(SSE/n) with its analytic gradient; residual sensitivities follow the
    // recursion de_t/dθ = -x_t - Σ_j θ_j de_{t-j}/dθ.
    const std::size_t k = static_cast<std::size_t>(spec.n_coefficients());
    std::vector<double> e(n);
    std::vector<double> de(n * k);
    auto objective = [&](const std::vector<double>& th, std::vector<double>* grad) {
        double constant;
        std::vector<double> ar;
        std::vector<double> ma;
        unpack(th, constant, ar, ma);
        double phi_sum = 0.0;
        for (double a : ar) phi_sum += a;
        const bool level_ok = std::abs(1.0 - phi_sum) > 1e-8;
        const double level = level_ok ? constant / (1.0 - phi_sum) : constant;
        double ss = 0.0;
        std::vector<double> gsum(k, 0.0);
        std::vector<double> dpre(k, 0.0);  // d(level)/dθ
        if (grad) {
            if (c) dpre[0] = level_ok ? 1.0 / (1.0 - phi_sum) : 1.0;
            if (level_ok)
                for (int i = 0; i < spec.p; ++i) dpre[static_cast<std::size_t>(c + i)] = level / (1.0 - phi_sum);
        }
        for (std::size_t t = 0; t < n; ++t) {
            double pred = constant;
            for (std::size_t i = 0; i < ar.size(); ++i) pred += ar[i] * (t > i ? ys[t - i - 1] : level);
            for (std::size_t j = 0; j < ma.size(); ++j)
                if (t > j) pred += ma[j] * e[t - j - 1];
            e[t] = ys[t] - pred;
            ss += e[t] * e[t];
            if (!grad) continue;
            double* d = &de[t * k];
            for (std::size_t m = 0; m < k; ++m) {
                double v = 0.0;
                // direct dependence of the prediction on θ_m
                if (c && m == 0) v += 1.0;
                if (m >= static_cast<std::size_t>(c) && m < static_cast<std::size_t>(c + spec.p)) {
                    const std::size_t i = m - static_cast<std::size_t>(c);
                    v += t > i ? ys[t - i - 1] : level;
                }
                if (m >= static_cast<std::size_t>(c + spec.p)) {
                    const std::size_t j = m - static_cast<std::size_t>(c + spec.p);
                    if (t > j) v += e[t - j - 1];
                }
                // dependence through pre-sample level
                for (std::size_t i = 0; i < ar.size(); ++i)
                    if (t <= i) v += ar[i] * dpre[m];
                for (std::size_t j = 0; j < ma.size(); ++j)
                    if (t > j) v += ma[j] * de[(t - j - 1) * k + m];
                d[m] = -v;
                gsum[m] += 2.0 * e[t] * d[m];
            }
        }
        if (!(ss > 0.0) || !std::isfinite(ss)) return std::numeric_limits<double>::infinity();
        if (grad)
            for (std::size_t m = 0; m < k; ++m) (*grad)[m] = gsum[m] / ss;
        return std::log(ss / static_cast<double>(n));
    };

    std::vector<double> theta;
    if (spec.p == 0 && spec.q == 0) {
        double mean = 0.0;
        if (c) {
            for (double v : ys) mean += v;
            mean /= static_cast<double>(n);
            theta = {mean};
        }
    } else {
        const auto start = detail::hannan_rissanen(ys, spec);
        OptimizerOptions opt;
        opt.max_step = 0.5;
        opt.grad_tol = 1e-9;
        const auto r = minimize_bfgs_grad(objective, start, opt);
        theta = r.x;
    }

    ArmaFit fit;
    fit.spec = spec;
    unpack(theta, fit.constant, fit.ar, fit.ma);
    fit.constant *= scale;
    fit.residuals = arma_residuals(y, fit.constant, fit.ar, fit.ma);
    double ss = 0.0;
    for (double v : fit.residuals) ss += v * v;
    fit.sigma2 = ss / static_cast<double>(n);
    const double nn = static_cast<double>(n);
    fit.loglik = -0.5 * nn * (std::log(2.0 * std::numbers::pi * fit.sigma2) + 1.0);
    fit.aic = -2.0 * fit.loglik + 2.0 * fit.n_params();
    fit.stationary = ar_is_stationary(fit.ar);
    fit.invertible = ma_is_invertible(fit.ma);
    if (!fit.stationary) fit.diagnostic = spec.name() + ": AR polynomial has a root on or inside the unit circle";
    else if (!fit.invertible) fit.diagnostic = spec.name() + ": MA polynomial has a root on or inside the unit circle";
    return fit;
}

struct ArmaSelection {
    ArmaSpec best;
    std::vector<ArmaFit> fits;             ///< every successful fit, grid order
    std::vector<std::string> failures;     ///< one line per failed spec
};

/// AIC search over {0..max_p} x {0..max_q}. Ties go to fewer parameters, then lower p.
/// Non-stationary or non-invertible fits are excluded from the choice.
inline ArmaSelection select_arma(std::span<const double> y, int max_p = kMaxArmaOrder, int max_q = kMaxArmaOrder,
                                 bool include_constant = true) {
    if (max_p < 0 || max_q < 0 || max_p > kMaxArmaOrder || max_q > kMaxArmaOrder)
        throw DomainError("select_arma: grid maxima must lie in 0.." + std::to_string(kMaxArmaOrder));
    if (y.size() < 2 || detail::is_degenerate(y))
        throw DataError("select_arma: degenerate input, series has zero variance");
    ArmaSelection sel;
    const ArmaFit* best = nullptr;
    sel.fits.reserve(static_cast<std::size_t>((max_p + 1) * (max_q + 1)));
    for (int p = 0; p <= max_p; ++p) {
        for (int q = 0; q <= max_q; ++q) {
            const ArmaSpec spec{p, q, include_constant};
            try {
                ArmaFit f = fit_arma(y, spec);
                if (!f.stationary || !f.invertible) {
                    sel.failures.push_back(f.diagnostic);
                    continue;
                }
                sel.fits.push_back(std::move(f));
            } catch (const std::exception& e) {
                sel.failures.push_back(spec.name() + ": " + e.what());
            }
        }
    }
    for (const auto& f : sel.fits) {
        if (!best) {
            best = &f;
            continue;
        }
        const double tie = 1e-9 * std::max(1.0, std::abs(best->aic));
        if (f.aic < best->aic - tie) {
            best = &f;
        } else if (std::abs(f.aic - best->aic) <= tie) {
            const int kf = f.spec.p + f.spec.q;
            const int kb = best->spec.p + best->spec.q;
            if (kf < kb || (kf == kb && f.spec.p < best->spec.p)) best = &f;
        }
    }
    if (!best) {
        std::string msg = "select_arma: every candidate failed";
        for (const auto& s : sel.failures) msg += "\n  " + s;
        throw EstimationError(msg, sel.failures);
    }
    sel.best = best->spec;
    return sel;
}

}  // namespace volcast
