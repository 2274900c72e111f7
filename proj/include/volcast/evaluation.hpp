#pragma once

// Normality test, forecast losses and the Diebold-Mariano test.

#include "volcast/error.hpp"
#include "volcast/specfun.hpp"

#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace volcast {

struct JarqueBeraResult {
    double statistic = 0.0;
    double p_value = 1.0;
    double skewness = 0.0;
    double kurtosis = 3.0;  ///< raw (normal = 3)
};

/// JB = n/6 (S^2 + (K-3)^2/4) with moment estimators; p-value from chi-square(2).
inline JarqueBeraResult jarque_bera(std::span<const double> x) {
    if (x.size() < 8) throw DomainError("jarque_bera: need at least 8 observations");
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double m2 = 0.0;
    double m3 = 0.0;
    double m4 = 0.0;
    for (double v : x) {
        const double d = v - mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if (!(m2 > 1e-300) || !(m2 > 1e-24 * mean * mean)) throw DomainError("jarque_bera: zero-variance input");
    JarqueBeraResult r;
    r.skewness = m3 / std::pow(m2, 1.5);
    r.kurtosis = m4 / (m2 * m2);
    const double ek = r.kurtosis - 3.0;
    r.statistic = n / 6.0 * (r.skewness * r.skewness + 0.25 * ek * ek);
    r.p_value = std::exp(-0.5 * r.statistic);
    return r;
}

struct LossSummary {
    double mse = 0.0;
    double mae = 0.0;
    double rmse = 0.0;
};

/// Losses of forecasts against a volatility proxy.
inline LossSummary losses(std::span<const double> forecast, std::span<const double> proxy) {
    if (forecast.size() != proxy.size()) throw DomainError("losses: length mismatch");
    if (forecast.empty()) throw DomainError("losses: empty input");
    double se = 0.0;
    double ae = 0.0;
    for (std::size_t i = 0; i < forecast.size(); ++i) {
        const double e = proxy[i] - forecast[i];
        se += e * e;
        ae += std::abs(e);
    }
    const double n = static_cast<double>(forecast.size());
    LossSummary s;
    s.mse = se / n;
    s.mae = ae / n;
    s.rmse = std::sqrt(s.mse);
    return s;
}

enum class LossKind { MSE, MAE, RMSE };

inline std::string_view to_string(LossKind k) {
    switch (k) {
        case LossKind::MSE: return "MSE";
        case LossKind::MAE: return "MAE";
        case LossKind::RMSE: return "RMSE";
    }
    return "?";
}

inline LossKind loss_kind_from_string(std::string_view s) {
    if (s == "MSE" || s == "mse") return LossKind::MSE;
    if (s == "MAE" || s == "mae") return LossKind::MAE;
    if (s == "RMSE" || s == "rmse") return LossKind::RMSE;
    throw DomainError("unknown loss '" + std::string(s) + "'");
}

inline double loss_value(const LossSummary& s, LossKind k) {
    switch (k) {
        case LossKind::MSE: return s.mse;
        case LossKind::MAE: return s.mae;
        case LossKind::RMSE: return s.rmse;
    }
    return s.mse;
}

struct DmOptions {
    bool hac = false;  ///< Bartlett long-run variance instead of the plain variance
    int lag = -1;      ///< HAC truncation lag; -1 selects floor(4 (T/100)^(2/9))
};

struct DmResult {
    double statistic = 0.0;
    double p_value = 1.0;
    LossKind loss = LossKind::MSE;  ///< RMSE uses the squared-error differential
    double mean_d = 0.0;
    std::size_t length = 0;
};

/// Diebold-Mariano test on d_t = g(e_A,t) - g(e_B,t). Negative statistics
/// favour A. Throws DegenerateTestError when T < 10 or d has no variation.
inline DmResult diebold_mariano(std::span<const double> errors_a, std::span<const double> errors_b, LossKind loss,
                                const DmOptions& options = {}) {
    if (errors_a.size() != errors_b.size()) throw DomainError("diebold_mariano: length mismatch");
    const std::size_t T = errors_a.size();
    if (T < 10) throw DegenerateTestError("diebold_mariano: fewer than 10 forecast errors");
    std::vector<double> d(T);
    const bool squared = loss != LossKind::MAE;
    for (std::size_t t = 0; t < T; ++t) {
        d[t] = squared ? errors_a[t] * errors_a[t] - errors_b[t] * errors_b[t]
                       : std::abs(errors_a[t]) - std::abs(errors_b[t]);
    }
    const double n = static_cast<double>(T);
    double mean = 0.0;
    for (double v : d) mean += v;
    mean /= n;
    double lrv = 0.0;
    for (double v : d) lrv += (v - mean) * (v - mean);
    lrv /= n;
    if (!(lrv > 0.0)) {
        throw DegenerateTestError(mean == 0.0 ? "diebold_mariano: identical forecast losses"
                                              : "diebold_mariano: loss differential has zero variance");
    }
    if (options.hac) {
        const int lag = options.lag >= 0 ? options.lag : static_cast<int>(std::floor(4.0 * std::pow(n / 100.0, 2.0 / 9.0)));
        for (int k = 1; k <= lag && static_cast<std::size_t>(k) < T; ++k) {
            double g = 0.0;
            for (std::size_t t = static_cast<std::size_t>(k); t < T; ++t) g += (d[t] - mean) * (d[t - static_cast<std::size_t>(k)] - mean);
            lrv += 2.0 * (1.0 - k / (lag + 1.0)) * g / n;
        }
        if (!(lrv > 0.0)) throw DegenerateTestError("diebold_mariano: non-positive long-run variance");
    }
    DmResult r;
    r.loss = loss;
    r.mean_d = mean;
    r.length = T;
    r.statistic = mean / std::sqrt(lrv / n);
    r.p_value = normal_two_sided_p(r.statistic);
    return r;
}

/// "***" at 1%, "**" at 5%, "*" at 10%.
inline std::string significance_stars(double p_value) {
    if (p_value < 0.01) return "***";
    if (p_value < 0.05) return "**";
    if (p_value < 0.10) return "*";
    return "";
}

}  // namespace volcast
