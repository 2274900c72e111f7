#pragma once

// Rolling and recursive one-step-ahead volatility backtests.

#include "volcast/error.hpp"
#include "volcast/estimation.hpp"
#include "volcast/evaluation.hpp"
#include "volcast/vol_models.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace volcast {

enum class Scheme { Rolling, Recursive };
enum class Proxy { Absolute, Squared };

inline std::string_view to_string(Scheme s) { return s == Scheme::Rolling ? "rolling" : "recursive"; }
inline std::string_view to_string(Proxy p) { return p == Proxy::Absolute ? "abs" : "squared"; }

inline Scheme scheme_from_string(std::string_view s) {
    if (s == "rolling") return Scheme::Rolling;
    if (s == "recursive") return Scheme::Recursive;
    throw DomainError("unknown scheme '" + std::string(s) + "' (expected rolling or recursive)");
}

inline Proxy proxy_from_string(std::string_view s) {
    if (s == "abs") return Proxy::Absolute;
    if (s == "squared") return Proxy::Squared;
    throw DomainError("unknown proxy '" + std::string(s) + "' (expected abs or squared)");
}

inline VolModelSpec gaussian_garch() { return VolModelSpec{}; }

struct BacktestConfig {
    Scheme scheme = Scheme::Rolling;
    std::size_t test_length = 200;
    std::size_t refit_every = 1;
    std::vector<VolModelSpec> models{gaussian_garch()};
    VolModelSpec benchmark = gaussian_garch();
    Proxy proxy = Proxy::Absolute;
    /// Rolling only; defaults to series length - test_length.
    std::optional<std::size_t> window_length;
    /// Model index pairs for pairwise DM tests; empty means every pair.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    DmOptions dm{};
    unsigned threads = 1;  ///< 0 uses the hardware concurrency
    bool warm_start = true;
};

/// A DM result or the reason it is unavailable.
struct DmOutcome {
    std::optional<DmResult> result;
    std::string error;
};

struct WindowFit {
    std::size_t date_index = 0;  ///< index of the forecast date in the series
    bool refit = false;
    bool converged = false;
    bool fallback = false;  ///< fit failed; previous parameters were used
    std::string message;
};

struct ModelBacktest {
    VolModelSpec spec;
    std::string name;
    bool benchmark = false;
    std::vector<double> forecast_sigma;
    std::vector<double> forecast_errors;  ///< proxy - forecast on the proxy scale
    LossSummary losses;
    std::optional<DmOutcome> dm_mse;  ///< absent for the benchmark
    std::optional<DmOutcome> dm_mae;
    std::vector<WindowFit> fit_trail;
    std::vector<double> last_estimates;
    std::string failure;  ///< non-empty when no forecast could be produced

    [[nodiscard]] bool ok() const noexcept { return failure.empty(); }
};

struct PairwiseDm {
    std::size_t a = 0;
    std::size_t b = 0;
    LossKind loss = LossKind::MSE;
    DmOutcome outcome;
};

struct BacktestReport {
    Scheme scheme = Scheme::Rolling;
    Proxy proxy = Proxy::Absolute;
    std::size_t test_length = 0;
    std::size_t refit_every = 1;
    std::size_t first_test_index = 0;
    std::size_t benchmark_index = 0;
    std::vector<double> realized;  ///< proxy values over the test segment
    std::vector<ModelBacktest> models;
    std::vector<PairwiseDm> pairwise;
};

namespace detail {

// Same model structure; starting shape/skew values do not matter.
inline bool same_model(const VolModelSpec& a, const VolModelSpec& b) {
    return a.family == b.family && a.distribution.family == b.distribution.family && a.mean == b.mean &&
           a.aparch_doubled_power == b.aparch_doubled_power;
}

inline DmOutcome dm_outcome(const ModelBacktest& a, const ModelBacktest& b, LossKind loss, const DmOptions& opt) {
    DmOutcome out;
    if (!a.ok() || !b.ok()) {
        out.error = "model failed: " + (a.ok() ? b.name : a.name);
        return out;
    }
    try {
        out.result = diebold_mariano(a.forecast_errors, b.forecast_errors, loss, opt);
    } catch (const DegenerateTestError& e) {
        out.error = e.what();
    }
    return out;
}

inline ModelBacktest backtest_model(std::span<const double> y, const VolModelSpec& spec, const BacktestConfig& cfg,
                                    std::span<const double> realized) {
    const std::size_t n = y.size();
    const std::size_t T = cfg.test_length;
    const std::size_t first = n - T;
    const std::size_t window = cfg.window_length.value_or(first);
    ModelBacktest m;
    m.spec = spec;
    m.name = spec.name();
    m.forecast_sigma.reserve(T);
    FitOptions opt;
    opt.robust_errors = false;
    std::optional<std::vector<double>> estimates;

    for (std::size_t j = 0; j < T; ++j) {
        const std::size_t t = first + j;
        const std::size_t start = cfg.scheme == Scheme::Recursive || t <= window ? 0 : t - window;
        const std::span<const double> train = y.subspan(start, t - start);
        WindowFit wf;
        wf.date_index = t;
        std::optional<FitResult> current;
        if (j % cfg.refit_every == 0 || !estimates) {
            wf.refit = true;
            try {
                if (cfg.warm_start) opt.warm_start = estimates;
                current = fit(train, spec, opt);
                wf.converged = current->converged;
                if (!current->converged) wf.message = "best point returned without convergence";
            } catch (const std::exception& e) {
                wf.message = e.what();
            }
        }
        if (!current) {
            if (!estimates) {
                m.failure = "no usable fit at date index " + std::to_string(t) + ": " + wf.message;
                m.fit_trail.push_back(wf);
                return m;
            }
            try {
                current = evaluate_at(train, spec, *estimates);
                wf.fallback = wf.refit;
                wf.converged = !wf.refit;
            } catch (const std::exception& e) {
                m.failure = "parameters unusable at date index " + std::to_string(t) + ": " + e.what();
                m.fit_trail.push_back(wf);
                return m;
            }
        }
        estimates = current->estimates;
        double s2;
        try {
            s2 = forecast_variance(*current);
        } catch (const std::exception& e) {
            m.failure = "forecast failed at date index " + std::to_string(t) + ": " + e.what();
            m.fit_trail.push_back(wf);
            return m;
        }
        m.forecast_sigma.push_back(std::sqrt(s2));
        m.fit_trail.push_back(std::move(wf));
    }
    m.last_estimates = *estimates;
    m.forecast_errors.resize(T);
    std::vector<double> on_scale(T);
    for (std::size_t j = 0; j < T; ++j) {
        on_scale[j] = cfg.proxy == Proxy::Absolute ? m.forecast_sigma[j] : m.forecast_sigma[j] * m.forecast_sigma[j];
        m.forecast_errors[j] = realized[j] - on_scale[j];
    }
    m.losses = losses(on_scale, realized);
    return m;
}

}  // namespace detail

inline void validate_backtest_config(const BacktestConfig& cfg, std::size_t n) {
    if (cfg.models.empty()) throw DomainError("backtest: no models configured");
    if (cfg.test_length < 1) throw DomainError("backtest: test_length must be at least 1");
    if (cfg.refit_every < 1) throw DomainError("backtest: refit_every must be at least 1");
    if (n < kMinFitLength || cfg.test_length >= n - kMinFitLength)
        throw DomainError("backtest: test_length must be below series length - " + std::to_string(kMinFitLength));
    if (cfg.window_length && *cfg.window_length < kMinFitLength)
        throw DomainError("backtest: window_length must be at least " + std::to_string(kMinFitLength));
    for (const auto& m : cfg.models) m.validate();
    if (std::none_of(cfg.models.begin(), cfg.models.end(),
                     [&](const VolModelSpec& m) { return detail::same_model(m, cfg.benchmark); }))
        throw DomainError("backtest: benchmark " + cfg.benchmark.name() + " is not among the models");
    for (const auto& [a, b] : cfg.pairs)
        if (a >= cfg.models.size() || b >= cfg.models.size()) throw DomainError("backtest: pair index out of range");
}

/// One-step-ahead forecasts over the last test_length observations. Models run
/// concurrently; the report is identical for any thread count.
inline BacktestReport run_backtest(std::span<const double> y, const BacktestConfig& cfg) {
    validate_backtest_config(cfg, y.size());
    const std::size_t n = y.size();
    BacktestReport rep;
    rep.scheme = cfg.scheme;
    rep.proxy = cfg.proxy;
    rep.test_length = cfg.test_length;
    rep.refit_every = cfg.refit_every;
    rep.first_test_index = n - cfg.test_length;
    for (std::size_t j = 0; j < cfg.test_length; ++j) {
        const double r = y[rep.first_test_index + j];
        rep.realized.push_back(cfg.proxy == Proxy::Absolute ? std::abs(r) : r * r);
    }

    const std::size_t count = cfg.models.size();
    rep.models.resize(count);
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                rep.models[i] = detail::backtest_model(y, cfg.models[i], cfg, rep.realized);
            } catch (const std::exception& e) {
                rep.models[i].spec = cfg.models[i];
                rep.models[i].name = cfg.models[i].name();
                rep.models[i].failure = e.what();
            }
        }
    };
    unsigned threads = cfg.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : cfg.threads;
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
    }

    // first model matching the benchmark spec
    for (std::size_t i = 0; i < count; ++i) {
        if (detail::same_model(cfg.models[i], cfg.benchmark)) {
            rep.benchmark_index = i;
            break;
        }
    }
    const ModelBacktest& bench = rep.models[rep.benchmark_index];
    rep.models[rep.benchmark_index].benchmark = true;
    for (std::size_t i = 0; i < count; ++i) {
        if (i == rep.benchmark_index) continue;
        rep.models[i].dm_mse = detail::dm_outcome(rep.models[i], bench, LossKind::MSE, cfg.dm);
        rep.models[i].dm_mae = detail::dm_outcome(rep.models[i], bench, LossKind::MAE, cfg.dm);
    }
    std::vector<std::pair<std::size_t, std::size_t>> pairs = cfg.pairs;
    if (pairs.empty())
        for (std::size_t a = 0; a < count; ++a)
            for (std::size_t b = a + 1; b < count; ++b) pairs.emplace_back(a, b);
    for (const auto& [a, b] : pairs)
        for (LossKind k : {LossKind::MSE, LossKind::MAE})
            rep.pairwise.push_back({a, b, k, detail::dm_outcome(rep.models[a], rep.models[b], k, cfg.dm)});
    return rep;
}

struct RankEntry {
    std::size_t index = 0;
    std::string name;
    double loss = 0.0;
    bool benchmark = false;
    std::optional<double> dm_statistic;  ///< vs benchmark; negative favours the model
    std::string stars;
};

/// Successful models in ascending order of the chosen loss; ties go to the
/// lexicographically smaller name, then the lower index.
inline std::vector<RankEntry> rank_models(const BacktestReport& report, LossKind loss) {
    std::vector<RankEntry> out;
    for (std::size_t i = 0; i < report.models.size(); ++i) {
        const auto& m = report.models[i];
        if (!m.ok()) continue;
        RankEntry e;
        e.index = i;
        e.name = m.name;
        e.loss = loss_value(m.losses, loss);
        e.benchmark = m.benchmark;
        const auto& dm = loss == LossKind::MAE ? m.dm_mae : m.dm_mse;
        if (dm && dm->result) {
            e.dm_statistic = dm->result->statistic;
            e.stars = significance_stars(dm->result->p_value);
        }
        out.push_back(std::move(e));
    }
    std::sort(out.begin(), out.end(), [](const RankEntry& a, const RankEntry& b) {
        if (a.loss != b.loss) return a.loss < b.loss;
        if (a.name != b.name) return a.name < b.name;
        return a.index < b.index;
    });
    return out;
}

}  // namespace volcast
