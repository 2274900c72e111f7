#pragma once

// Conditional-variance recursions of order (1,1).

#include "volcast/arma.hpp"
#include "volcast/distributions.hpp"
#include "volcast/error.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace volcast {

enum class VolFamily { GARCH, GJR, TGARCH, EGARCH, IGARCH, APARCH, DCS };

inline constexpr VolFamily kGarchFamilies[] = {VolFamily::GARCH,  VolFamily::GJR,    VolFamily::TGARCH,
                                               VolFamily::EGARCH, VolFamily::IGARCH, VolFamily::APARCH};

inline std::string_view to_string(VolFamily f) {
    switch (f) {
        case VolFamily::GARCH: return "GARCH";
        case VolFamily::GJR: return "GJR";
        case VolFamily::TGARCH: return "TGARCH";
        case VolFamily::EGARCH: return "EGARCH";
        case VolFamily::IGARCH: return "IGARCH";
        case VolFamily::APARCH: return "APARCH";
        case VolFamily::DCS: return "DCS";
    }
    return "?";
}

inline VolFamily vol_family_from_string(std::string_view s) {
    for (VolFamily f : {VolFamily::GARCH, VolFamily::GJR, VolFamily::TGARCH, VolFamily::EGARCH, VolFamily::IGARCH,
                        VolFamily::APARCH, VolFamily::DCS})
        if (to_string(f) == s) return f;
    if (s == "sGARCH") return VolFamily::GARCH;
    if (s == "GJR-GARCH" || s == "gjrGARCH") return VolFamily::GJR;
    if (s == "iGARCH") return VolFamily::IGARCH;
    if (s == "eGARCH") return VolFamily::EGARCH;
    throw DomainError("unknown volatility family '" + std::string(s) + "'");
}

/// Variance recursion, innovation density and mean equation. Order is (1,1).
struct VolModelSpec {
    VolFamily family = VolFamily::GARCH;
    DistributionSpec distribution = DistributionSpec::normal();
    ArmaSpec mean{};
    /// APARCH only: use the power 2δ on the news term instead of δ.
    bool aparch_doubled_power = false;

    [[nodiscard]] std::string name() const {
        return std::string(to_string(family)) + "-" + std::string(to_string(distribution.family));
    }

    void validate() const {
        distribution.validate();
        mean.validate();
        if (family == VolFamily::DCS && !(distribution.family == Family::Normal ||
                                          distribution.family == Family::SkewNormal ||
                                          distribution.family == Family::StudentT ||
                                          distribution.family == Family::SkewT))
            throw DomainError("DCS supports norm, snorm, std and sstd innovations only");
    }
};

/// omega/alpha/beta plus the family's extra coefficients:
/// gamma (GJR, TGARCH, EGARCH asymmetry), delta and lambda (APARCH power and asymmetry).
struct VolParams {
    double omega = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    std::optional<double> gamma;
    std::optional<double> delta;
    std::optional<double> lambda;
};

inline bool needs_gamma(VolFamily f) { return f == VolFamily::GJR || f == VolFamily::TGARCH || f == VolFamily::EGARCH; }
inline bool needs_power(VolFamily f) { return f == VolFamily::APARCH; }

/// Checks the family's admissible region; throws DomainError naming the violated constraint.
inline void validate_params(VolFamily family, const VolParams& p) {
    auto fail = [family](const std::string& what) {
        throw DomainError(std::string(to_string(family)) + ": " + what);
    };
    for (double v : {p.omega, p.alpha, p.beta})
        if (!std::isfinite(v)) fail("non-finite parameter");
    if (needs_gamma(family) && !p.gamma) fail("gamma required");
    if (needs_power(family) && (!p.delta || !p.lambda)) fail("delta and lambda required");
    switch (family) {
        case VolFamily::GARCH:
            if (!(p.omega > 0.0)) fail("omega must be positive");
            if (p.alpha < 0.0 || p.beta < 0.0) fail("alpha and beta must be non-negative");
            if (!(p.alpha + p.beta < 1.0)) fail("alpha + beta must be below 1");
            break;
        case VolFamily::GJR:
            if (!(p.omega > 0.0)) fail("omega must be positive");
            if (p.alpha < 0.0 || p.beta < 0.0) fail("alpha and beta must be non-negative");
            if (p.alpha + *p.gamma < 0.0) fail("alpha + gamma must be non-negative");
            if (!(p.alpha + p.beta + 0.5 * *p.gamma < 1.0)) fail("alpha + beta + gamma/2 must be below 1");
            break;
        case VolFamily::TGARCH:
            if (!(p.omega > 0.0)) fail("omega must be positive");
            if (p.alpha < 0.0 || p.beta < 0.0) fail("alpha and beta must be non-negative");
            if (p.alpha + *p.gamma < 0.0) fail("alpha + gamma must be non-negative");
            break;
        case VolFamily::EGARCH:
            if (!(std::abs(p.beta) < 1.0)) fail("|beta| must be below 1");
            if (!std::isfinite(*p.gamma)) fail("non-finite gamma");
            break;
        case VolFamily::IGARCH:
            if (p.omega < 0.0) fail("omega must be non-negative");
            if (!(p.alpha > 0.0 && p.alpha <= 1.0)) fail("alpha must lie in (0, 1]");
            if (p.alpha + p.beta != 1.0) fail("alpha + beta must equal 1");
            break;
        case VolFamily::APARCH:
            if (!(p.omega > 0.0)) fail("omega must be positive");
            if (p.alpha < 0.0 || p.beta < 0.0) fail("alpha and beta must be non-negative");
            if (!(*p.delta > 0.0) || !std::isfinite(*p.delta)) fail("delta must be positive");
            if (!(std::abs(*p.lambda) <= 1.0)) fail("|lambda| must not exceed 1");
            break;
        case VolFamily::DCS:
            if (!(p.omega > 0.0)) fail("omega must be positive");
            if (p.alpha < 0.0) fail("alpha must be non-negative");
            if (!(p.beta >= 0.0 && p.beta < 1.0)) fail("beta must lie in [0, 1)");
            break;
    }
}

/// IGARCH parameters with beta tied to alpha.
inline VolParams igarch_params(double omega, double alpha) {
    VolParams p;
    p.omega = omega;
    p.beta = 1.0 - alpha;
    p.alpha = 1.0 - p.beta;  // round-trip so alpha + beta == 1 holds exactly
    return p;
}

struct VariancePath {
    std::vector<double> sigma2;
    std::vector<double> loglik_contributions;

    [[nodiscard]] double loglik() const {
        double s = 0.0;
        for (double v : loglik_contributions) s += v;
        return s;
    }
};

/// Score of log p(eps | f) with respect to the variance f, scaled by the
/// inverse Fisher information. Exact for Normal and Student-t, central
/// finite difference for the skewed families.
class DcsScore {
  public:
    explicit DcsScore(const Density& density) : density_(&density) {
        const Family fam = density.spec().family;
        analytic_ = fam == Family::Normal || fam == Family::StudentT;
        if (fam == Family::StudentT) dof_ = *density.spec().shape;
        if (!analytic_) {
            // information for log-variance: E[(1 + z l'(z))^2] / 4
            auto integrand = [&density](double z) {
                const double s = 1.0 + z * density.d_log_pdf(z);
                return s * s * density.pdf(z);
            };
            info_log_ = 0.25 * integrate_real_line(integrand, density.breakpoints(), 1e-10).value;
        } else {
            info_log_ = fam == Family::Normal ? 0.5 : dof_ / (2.0 * (dof_ + 3.0));
        }
    }

    /// Unscaled score d/df log p(eps | f).
    [[nodiscard]] double score(double eps, double f, bool force_numeric = false) const {
        if (analytic_ && !force_numeric) {
            if (dof_ == 0.0) return (eps * eps - f) / (2.0 * f * f);
            const double e2 = eps * eps;
            return ((dof_ + 1.0) * e2 / ((dof_ - 2.0) * f + e2) - 1.0) / (2.0 * f);
        }
        const double h = 1e-6 * std::max(1.0, std::abs(f));
        auto lp = [&](double v) { return density_->log_pdf(eps / std::sqrt(v)) - 0.5 * std::log(v); };
        return (lp(f + h) - lp(f - h)) / (2.0 * h);
    }

    /// S_t * score with S_t the inverse Fisher information for f.
    [[nodiscard]] double scaled_score(double eps, double f) const {
        if (analytic_) {
            const double e2 = eps * eps;
            if (dof_ == 0.0) return e2 - f;
            return (dof_ + 3.0) / dof_ * f * ((dof_ + 1.0) * e2 / ((dof_ - 2.0) * f + e2) - 1.0);
        }
        return f * f / info_log_ * score(eps, f);
    }

    [[nodiscard]] double fisher_info(double f) const { return info_log_ / (f * f); }

  private:
    const Density* density_;
    bool analytic_ = false;
    double dof_ = 0.0;
    double info_log_ = 0.5;
};

/// Precomputed, parameter-dependent quantities needed by one recursion step.
class VarianceRecursion {
  public:
    VarianceRecursion(const VolModelSpec& spec, const VolParams& params)
        : family_(spec.family), params_(params), density_(spec.distribution), doubled_(spec.aparch_doubled_power) {
        spec.validate();
        validate_params(spec.family, params);
        if (family_ == VolFamily::IGARCH) params_.beta = 1.0 - params_.alpha;
        if (family_ == VolFamily::EGARCH) abs_mean_ = density_.expected_abs();
        if (family_ == VolFamily::APARCH) {
            delta_ = *params_.delta;
            lambda_ = *params_.lambda;
        }
        if (family_ == VolFamily::DCS) dcs_.emplace(density_);
    }

    // dcs_ refers to density_
    VarianceRecursion(const VarianceRecursion&) = delete;
    VarianceRecursion& operator=(const VarianceRecursion&) = delete;

    [[nodiscard]] const Density& density() const noexcept { return density_; }

    /// sigma^2_t from eps_{t-1} and sigma^2_{t-1}.
    [[nodiscard]] double next(double eps, double sigma2) const {
        const VolParams& p = params_;
        switch (family_) {
            case VolFamily::GARCH: return p.omega + p.alpha * eps * eps + p.beta * sigma2;
            case VolFamily::GJR:
                return p.omega + (p.alpha + (eps < 0.0 ? *p.gamma : 0.0)) * eps * eps + p.beta * sigma2;
            case VolFamily::TGARCH: {
                const double sd = p.omega + (p.alpha + (eps < 0.0 ? *p.gamma : 0.0)) * std::abs(eps) +
                                  p.beta * std::sqrt(sigma2);
                return sd * sd;
            }
            case VolFamily::EGARCH: {
                const double z = eps / std::sqrt(sigma2);
                return std::exp(p.omega + p.beta * std::log(sigma2) + p.alpha * (std::abs(z) - abs_mean_) + *p.gamma * z);
            }
            case VolFamily::IGARCH: return p.omega + p.alpha * (eps * eps - sigma2) + sigma2;
            case VolFamily::APARCH: {
                const double news = std::abs(eps) - lambda_ * eps;
                const double power = doubled_ ? 2.0 * delta_ : delta_;
                // sigma^delta carried through logs so extreme delta does not underflow
                const double prev = std::exp(0.5 * delta_ * std::log(sigma2));
                const double news_term = news > 0.0 ? std::exp(power * std::log(news)) : 0.0;
                const double sd_pow = p.omega + p.alpha * news_term + p.beta * prev;
                return std::exp((2.0 / delta_) * std::log(sd_pow));
            }
            case VolFamily::DCS: return p.omega + p.beta * sigma2 + p.alpha * dcs_->scaled_score(eps, sigma2);
        }
        return sigma2;
    }

    [[nodiscard]] double log_density(double eps, double sigma2) const {
        return density_.log_pdf(eps / std::sqrt(sigma2)) - 0.5 * std::log(sigma2);
    }

  private:
    VolFamily family_;
    VolParams params_;
    Density density_;
    bool doubled_;
    double abs_mean_ = 0.0;
    double delta_ = 2.0;
    double lambda_ = 0.0;
    std::optional<DcsScore> dcs_;
};

/// Mean of squared residuals, the variance-path start value.
inline double initial_variance(std::span<const double> residuals) {
    double s = 0.0;
    for (double e : residuals) s += e * e;
    return s / static_cast<double>(residuals.size());
}

namespace detail {

inline VariancePath run_filter(const VarianceRecursion& rec, std::span<const double> residuals, double sigma2_0,
                               bool with_loglik) {
    const std::size_t n = residuals.size();
    VariancePath path;
    path.sigma2.resize(n);
    if (with_loglik) path.loglik_contributions.resize(n);
    double s2 = sigma2_0;
    for (std::size_t t = 0; t < n; ++t) {
        if (t > 0) s2 = rec.next(residuals[t - 1], s2);
        if (!(s2 > 0.0) || !std::isfinite(s2)) throw NumericError("conditional variance not positive and finite", t);
        path.sigma2[t] = s2;
        if (with_loglik) path.loglik_contributions[t] = rec.log_density(residuals[t], s2);
    }
    return path;
}

}  // namespace detail

/// Conditional variance path and per-observation log-likelihood. The path
/// starts at the mean squared residual.
inline VariancePath filter_variance(const VolModelSpec& spec, const VolParams& params,
                                    std::span<const double> residuals) {
    if (residuals.empty()) throw DomainError("filter_variance: empty residual vector");
    const VarianceRecursion rec(spec, params);
    return detail::run_filter(rec, residuals, initial_variance(residuals), true);
}

/// Score-driven recursion f_t = omega + beta f_{t-1} + alpha S_{t-1} d log p / d f_{t-1}.
inline VariancePath filter_dcs(const DistributionSpec& distribution, const VolParams& params,
                               std::span<const double> residuals) {
    VolModelSpec spec;
    spec.family = VolFamily::DCS;
    spec.distribution = distribution;
    return filter_variance(spec, params, residuals);
}

/// sigma^2_{t+1} given eps_t and sigma^2_t.
inline double forecast_one_step(const VolModelSpec& spec, const VolParams& params, double last_residual,
                                double last_sigma2) {
    if (!(last_sigma2 > 0.0)) throw DomainError("forecast_one_step: last_sigma2 must be positive");
    const VarianceRecursion rec(spec, params);
    const double s2 = rec.next(last_residual, last_sigma2);
    if (!(s2 > 0.0) || !std::isfinite(s2)) throw NumericError("forecast variance not positive and finite", 0);
    return s2;
}

struct SimulatedPath {
    std::vector<double> returns;
    std::vector<double> sigma2;
};

/// r_t = sigma_t z_t with z_t drawn from the standardized innovation density.
/// The first `burn_in` steps are discarded.
inline SimulatedPath simulate(const VolModelSpec& spec, const VolParams& params, std::size_t n, std::uint64_t seed,
                              std::size_t burn_in = 1000) {
    if (n < 1) throw DomainError("simulate: n must be at least 1");
    const VarianceRecursion rec(spec, params);
    const auto z = sample(spec.distribution, n + burn_in, seed);
    double s2;
    switch (spec.family) {
        case VolFamily::GARCH: s2 = params.omega / (1.0 - params.alpha - params.beta); break;
        case VolFamily::EGARCH: s2 = std::exp(params.omega / (1.0 - params.beta)); break;
        case VolFamily::DCS: s2 = params.omega / (1.0 - params.beta); break;
        default: s2 = params.omega > 0.0 ? params.omega / std::max(1e-3, 1.0 - params.beta) : 1.0; break;
    }
    SimulatedPath out;
    out.returns.reserve(n);
    out.sigma2.reserve(n);
    double eps = 0.0;
    for (std::size_t t = 0; t < n + burn_in; ++t) {
        if (t > 0) s2 = rec.next(eps, s2);
        if (!(s2 > 0.0) || !std::isfinite(s2)) throw NumericError("simulated variance not positive and finite", t);
        eps = std::sqrt(s2) * z[t];
        if (t >= burn_in) {
            out.returns.push_back(eps);
            out.sigma2.push_back(s2);
        }
    }
    return out;
}

}  // namespace volcast
