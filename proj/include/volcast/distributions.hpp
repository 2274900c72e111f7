#pragma once

// Innovation densities, all standardized to zero mean and unit variance.

#include "volcast/error.hpp"
#include "volcast/specfun.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace volcast {

enum class Family { Normal, SkewNormal, StudentT, SkewT, GED, SGED };

inline constexpr Family kAllFamilies[] = {Family::Normal, Family::StudentT, Family::GED,
                                          Family::SkewNormal, Family::SkewT, Family::SGED};

inline std::string_view to_string(Family f) {
    switch (f) {
        case Family::Normal: return "norm";
        case Family::SkewNormal: return "snorm";
        case Family::StudentT: return "std";
        case Family::SkewT: return "sstd";
        case Family::GED: return "ged";
        case Family::SGED: return "sged";
    }
    return "?";
}

inline Family family_from_string(std::string_view s) {
    for (Family f : kAllFamilies)
        if (to_string(f) == s) return f;
    if (s == "normal") return Family::Normal;
    if (s == "t" || s == "student") return Family::StudentT;
    if (s == "skew-normal") return Family::SkewNormal;
    if (s == "skew-t") return Family::SkewT;
    throw DomainError("unknown distribution family '" + std::string(s) + "'");
}

inline bool has_shape(Family f) {
    return f == Family::StudentT || f == Family::SkewT || f == Family::GED || f == Family::SGED;
}
inline bool has_skew(Family f) { return f == Family::SkewNormal || f == Family::SkewT || f == Family::SGED; }

/// Innovation family plus its shape and skew parameters.
///
/// shape: degrees of freedom (t, skew-t, must exceed 2) or the GED exponent p > 0.
/// skew:  lambda in (-1, 1) for SGED; the inverse-scale factor xi > 0 for the
///        skew-normal and skew-t (xi = 1 is symmetric). Negative lambda and
///        xi < 1 both give a left-skewed density.
struct DistributionSpec {
    Family family = Family::Normal;
    std::optional<double> shape;
    std::optional<double> skew;

    static DistributionSpec normal() { return {Family::Normal, std::nullopt, std::nullopt}; }
    static DistributionSpec student_t(double dof) { return {Family::StudentT, dof, std::nullopt}; }
    static DistributionSpec ged(double p) { return {Family::GED, p, std::nullopt}; }
    static DistributionSpec skew_normal(double xi) { return {Family::SkewNormal, std::nullopt, xi}; }
    static DistributionSpec skew_t(double dof, double xi) { return {Family::SkewT, dof, xi}; }
    static DistributionSpec sged(double p, double lambda) { return {Family::SGED, p, lambda}; }

    /// Family with default starting values for its free parameters.
    static DistributionSpec defaults(Family f) {
        switch (f) {
            case Family::Normal: return normal();
            case Family::SkewNormal: return skew_normal(1.0);
            case Family::StudentT: return student_t(8.0);
            case Family::SkewT: return skew_t(8.0, 1.0);
            case Family::GED: return ged(1.5);
            case Family::SGED: return sged(1.5, 0.0);
        }
        return normal();
    }

    void validate() const {
        const std::string name(to_string(family));
        if (has_shape(family) != shape.has_value())
            throw DomainError(name + ": shape parameter " + (shape ? "not allowed" : "required"));
        if (has_skew(family) != skew.has_value())
            throw DomainError(name + ": skew parameter " + (skew ? "not allowed" : "required"));
        if (shape && !std::isfinite(*shape)) throw DomainError(name + ": non-finite shape");
        if (skew && !std::isfinite(*skew)) throw DomainError(name + ": non-finite skew");
        switch (family) {
            case Family::StudentT:
            case Family::SkewT:
                if (!(*shape > 2.0)) throw DomainError(name + ": degrees of freedom must exceed 2");
                break;
            case Family::GED:
            case Family::SGED:
                if (!(*shape > 0.0)) throw DomainError(name + ": shape p must be positive");
                break;
            default: break;
        }
        if (family == Family::SGED && !(std::abs(*skew) < 1.0))
            throw DomainError(name + ": skew lambda must lie in (-1, 1)");
        if ((family == Family::SkewNormal || family == Family::SkewT) && !(*skew > 0.0))
            throw DomainError(name + ": skew factor xi must be positive");
    }

    [[nodiscard]] std::string name() const { return std::string(to_string(family)); }

    friend bool operator==(const DistributionSpec&, const DistributionSpec&) = default;
};

struct GedMoments {
    double variance;
    double kurtosis;
};

/// Variance and (raw) kurtosis of a GED with exponent p and scale sigma_p,
/// density proportional to exp(-|x/sigma_p|^p / 2).
inline GedMoments ged_moments(double p, double sigma_p = 1.0) {
    if (!(p > 0.0) || !(sigma_p > 0.0)) throw DomainError("ged_moments: p and sigma_p must be positive");
    const double lg1 = log_gamma(1.0 / p);
    const double lg3 = log_gamma(3.0 / p);
    const double lg5 = log_gamma(5.0 / p);
    const double variance = sigma_p * sigma_p * std::exp((2.0 / p) * std::numbers::ln2 + lg3 - lg1);
    const double kurtosis = std::exp(lg5 + lg1 - 2.0 * lg3);
    return {variance, kurtosis};
}

struct SgedConstants {
    double m;   ///< location shift, u = z + m is the mode-centred variable
    double nu;  ///< scale multiplier giving unit variance
};

namespace detail {

// Half-line moments of exp(-|t|^p / p): J_k = ∫_0^∞ t^k exp(-t^p/p) dt = Γ((k+1)/p) p^{(k+1)/p} / p.
inline double sged_half_moment_log(double p, int k) {
    const double a = static_cast<double>(k + 1) / p;
    return log_gamma(a) + a * std::log(p) - std::log(p);
}

}  // namespace detail

/// Skewed-GED centring and scaling constants. The density kernel is
/// exp(-(1/p)|(z + m) / (nu sigma_p (1 + lambda sign(z + m)))|^p); nu is chosen
/// so the density has unit variance, m so it has zero mean.
inline SgedConstants sged_constants(double sigma_p, double lambda, double p) {
    if (!(sigma_p > 0.0) || !(p > 0.0)) throw DomainError("sged_constants: sigma_p and p must be positive");
    if (!(std::abs(lambda) < 1.0)) throw DomainError("sged_constants: lambda must lie in (-1, 1)");
    const double lk = detail::sged_half_moment_log(p, 0);
    const double r1 = std::exp(detail::sged_half_moment_log(p, 1) - lk);
    const double r2 = std::exp(detail::sged_half_moment_log(p, 2) - lk);
    const double l2 = lambda * lambda;
    const double unit_var = (1.0 + 3.0 * l2) * r2 - 4.0 * l2 * r1 * r1;
    const double theta = 1.0 / std::sqrt(unit_var);
    return {2.0 * theta * lambda * r1, theta / sigma_p};
}

/// Evaluator for one standardized density. Construct once per parameter value;
/// evaluation is cheap and allocation-free.
class Density {
  public:
    explicit Density(DistributionSpec spec) : spec_(std::move(spec)) {
        spec_.validate();
        switch (spec_.family) {
            case Family::Normal:
                log_norm_ = -0.5 * std::log(2.0 * std::numbers::pi);
                abs_mean_ = std::sqrt(2.0 / std::numbers::pi);
                break;
            case Family::StudentT:
                init_t(*spec_.shape);
                break;
            case Family::GED: {
                const double p = *spec_.shape;
                const double lg1 = log_gamma(1.0 / p);
                log_scale_ = 0.5 * (lg1 - (2.0 / p) * std::numbers::ln2 - log_gamma(3.0 / p));
                scale_ = std::exp(log_scale_);
                log_norm_ = std::log(p) - (1.0 + 1.0 / p) * std::numbers::ln2 - log_scale_ - lg1;
                abs_mean_ = std::exp(log_scale_ + std::numbers::ln2 / p + log_gamma(2.0 / p) - lg1);
                break;
            }
            case Family::SGED: {
                const double p = *spec_.shape;
                const double lambda = *spec_.skew;
                const SgedConstants c = sged_constants(1.0, lambda, p);
                shift_ = c.m;
                scale_pos_ = c.nu * (1.0 + lambda);
                scale_neg_ = c.nu * (1.0 - lambda);
                log_norm_ = -std::log(2.0 * c.nu) - detail::sged_half_moment_log(p, 0);
                abs_mean_ = -1.0;
                break;
            }
            case Family::SkewNormal:
                log_norm_ = -0.5 * std::log(2.0 * std::numbers::pi);
                init_skew(std::sqrt(2.0 / std::numbers::pi));
                break;
            case Family::SkewT:
                init_t(*spec_.shape);
                init_skew(abs_mean_);
                break;
        }
    }

    [[nodiscard]] const DistributionSpec& spec() const noexcept { return spec_; }

    [[nodiscard]] double log_pdf(double z) const noexcept {
        switch (spec_.family) {
            case Family::Normal: return log_norm_ - 0.5 * z * z;
            case Family::StudentT: return log_sym(z);
            case Family::GED: return log_sym(z);
            case Family::SGED: {
                const double u = z + shift_;
                const double s = u >= 0.0 ? scale_pos_ : scale_neg_;
                const double p = *spec_.shape;
                return log_norm_ - std::pow(std::abs(u) / s, p) / p;
            }
            case Family::SkewNormal:
            case Family::SkewT: {
                const double y = skew_mu_ + skew_sigma_ * z;
                const double x = y >= 0.0 ? y / xi_ : y * xi_;
                return skew_log_norm_ + log_sym(x);
            }
        }
        return -std::numeric_limits<double>::infinity();
    }

    [[nodiscard]] double pdf(double z) const noexcept { return std::exp(log_pdf(z)); }

    /// d/dz log pdf(z).
    [[nodiscard]] double d_log_pdf(double z) const noexcept {
        switch (spec_.family) {
            case Family::Normal:
            case Family::StudentT:
            case Family::GED: return d_log_sym(z);
            case Family::SGED: {
                const double u = z + shift_;
                const double s = u >= 0.0 ? scale_pos_ : scale_neg_;
                const double p = *spec_.shape;
                if (u == 0.0) return 0.0;
                return -std::pow(std::abs(u) / s, p - 1.0) * (u > 0.0 ? 1.0 : -1.0) / s;
            }
            case Family::SkewNormal:
            case Family::SkewT: {
                const double y = skew_mu_ + skew_sigma_ * z;
                const double k = y >= 0.0 ? 1.0 / xi_ : xi_;
                return d_log_sym(y * k) * k * skew_sigma_;
            }
        }
        return 0.0;
    }

    /// E|z| under this density. Closed form for the symmetric families,
    /// quadrature (computed per call) for the skewed ones.
    [[nodiscard]] double expected_abs() const {
        if (abs_mean_ >= 0.0) return abs_mean_;
        return integrate_real_line([this](double z) { return std::abs(z) * pdf(z); }, breakpoints(), 1e-11).value;
    }

    /// Points where the density is not smooth (mode of the skewed families, GED cusp).
    [[nodiscard]] std::vector<double> breakpoints() const {
        switch (spec_.family) {
            case Family::SGED: return {-shift_};
            case Family::SkewNormal:
            case Family::SkewT: return {-skew_mu_ / skew_sigma_};
            case Family::GED: return {0.0};
            default: return {};
        }
    }

  private:
    void init_t(double dof) {
        dof_ = dof;
        log_norm_ = log_gamma(0.5 * (dof + 1.0)) - log_gamma(0.5 * dof) - 0.5 * std::log(std::numbers::pi * (dof - 2.0));
        abs_mean_ = 2.0 * std::sqrt(dof - 2.0) *
                    std::exp(log_gamma(0.5 * (dof + 1.0)) - log_gamma(0.5 * dof)) /
                    (std::sqrt(std::numbers::pi) * (dof - 1.0));
    }

    // Inverse-scale-factor skewing of a unit-variance symmetric base with E|x| = m1.
    void init_skew(double m1) {
        xi_ = *spec_.skew;
        const double inv = 1.0 / xi_;
        skew_mu_ = m1 * (xi_ - inv);
        skew_sigma_ = std::sqrt((1.0 - m1 * m1) * (xi_ * xi_ + inv * inv) + 2.0 * m1 * m1 - 1.0);
        skew_log_norm_ = std::log(2.0 * skew_sigma_ / (xi_ + inv));
        abs_mean_ = -1.0;
    }

    // Symmetric unit-variance base density (Normal, t or GED) at x.
    [[nodiscard]] double log_sym(double x) const noexcept {
        switch (spec_.family) {
            case Family::Normal:
            case Family::SkewNormal: return log_norm_ - 0.5 * x * x;
            case Family::StudentT:
            case Family::SkewT: return log_norm_ - 0.5 * (dof_ + 1.0) * std::log1p(x * x / (dof_ - 2.0));
            case Family::GED: return log_norm_ - 0.5 * std::pow(std::abs(x) / scale_, *spec_.shape);
            default: return 0.0;
        }
    }

    [[nodiscard]] double d_log_sym(double x) const noexcept {
        switch (spec_.family) {
            case Family::Normal:
            case Family::SkewNormal: return -x;
            case Family::StudentT:
            case Family::SkewT: return -(dof_ + 1.0) * x / ((dof_ - 2.0) + x * x);
            case Family::GED: {
                if (x == 0.0) return 0.0;
                const double p = *spec_.shape;
                return -0.5 * p * std::pow(std::abs(x) / scale_, p - 1.0) * (x > 0.0 ? 1.0 : -1.0) / scale_;
            }
            default: return 0.0;
        }
    }

    DistributionSpec spec_;
    double log_norm_ = 0.0;
    double abs_mean_ = 0.0;
    double dof_ = 0.0;
    double scale_ = 1.0;
    double log_scale_ = 0.0;
    double shift_ = 0.0;
    double scale_pos_ = 1.0;
    double scale_neg_ = 1.0;
    double xi_ = 1.0;
    double skew_mu_ = 0.0;
    double skew_sigma_ = 1.0;
    double skew_log_norm_ = 0.0;
};

/// ln f(z) of the standardized member of the family.
inline double log_pdf(const DistributionSpec& spec, double z) { return Density(spec).log_pdf(z); }

/// CDF and quantile function on a tabulated grid, refined per query.
///
/// The grid is z = sinh(w) for w uniform, so cells are narrow near the centre
/// and wide in the tails. Cell masses come from adaptive quadrature; queries
/// inside a cell integrate from the cell's left edge.
class QuantileTable {
  public:
    explicit QuantileTable(Density density, int cells = 3000, double z_max = 200.0)
        : density_(std::move(density)) {
        const double w_max = std::asinh(z_max);
        grid_.resize(static_cast<std::size_t>(cells) + 1);
        cdf_.resize(grid_.size());
        for (int i = 0; i <= cells; ++i) grid_[i] = std::sinh(-w_max + 2.0 * w_max * i / cells);
        auto f = [this](double z) { return density_.pdf(z); };
        cdf_[0] = tail_below(grid_[0]);
        const auto kinks = density_.breakpoints();
        for (std::size_t i = 1; i < grid_.size(); ++i) {
            const double lo = grid_[i - 1];
            const double hi = grid_[i];
            double mass = 0.0;
            bool split = false;
            for (double k : kinks) {
                if (k > lo && k < hi) {
                    mass = cell_integral(f, lo, k) + cell_integral(f, k, hi);
                    split = true;
                    break;
                }
            }
            if (!split) mass = cell_integral(f, lo, hi);
            cdf_[i] = cdf_[i - 1] + mass;
        }
    }

    [[nodiscard]] const Density& density() const noexcept { return density_; }

    [[nodiscard]] double cdf(double z) const {
        if (std::isnan(z)) throw DomainError("cdf: NaN argument");
        if (z <= grid_.front()) return tail_below(z);
        if (z >= grid_.back()) return cdf_.back() + integrate_pdf(grid_.back(), z);
        const std::size_t i = cell_of(z);
        return cdf_[i] + integrate_pdf(grid_[i], z);
    }

    [[nodiscard]] double quantile(double u) const {
        if (!(u > 0.0 && u < 1.0)) throw DomainError("quantile: probability must lie in (0, 1)");
        double lo;
        double hi;
        double z;
        if (u < cdf_.front()) {
            hi = grid_.front();
            lo = hi;
            while (tail_below(lo) > u) lo = 2.0 * lo;
            z = 0.5 * (lo + hi);
        } else if (u >= cdf_.back()) {
            lo = grid_.back();
            hi = lo;
            while (cdf(hi) < u) hi = 2.0 * hi;
            z = 0.5 * (lo + hi);
        } else {
            const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
            const std::size_t i = static_cast<std::size_t>(it - cdf_.begin()) - 1;
            lo = grid_[i];
            hi = grid_[i + 1];
            const double span = cdf_[i + 1] - cdf_[i];
            z = span > 0.0 ? lo + (hi - lo) * (u - cdf_[i]) / span : 0.5 * (lo + hi);
        }
        // safeguarded Newton inside the bracket, falling back to bisection
        for (int iter = 0; iter < 60; ++iter) {
            const double g = cdf(z) - u;
            if (g == 0.0) return z;
            if (g > 0.0)
                hi = z;
            else
                lo = z;
            const double d = density_.pdf(z);
            double next = d > 0.0 ? z - g / d : 0.5 * (lo + hi);
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            if (std::abs(next - z) <= 1e-13 * (1.0 + std::abs(z))) return next;
            z = next;
        }
        return z;
    }

  private:
    template <class F>
    static double cell_integral(const F& f, double lo, double hi) {
        try {
            return integrate(f, lo, hi, 1e-15).value;
        } catch (const ConvergenceError& e) {
            return e.best_estimate();
        }
    }

    [[nodiscard]] double integrate_pdf(double lo, double hi) const {
        auto f = [this](double z) { return density_.pdf(z); };
        return cell_integral(f, lo, hi);
    }

    [[nodiscard]] double tail_below(double z) const {
        auto f = [this](double x) { return density_.pdf(x); };
        try {
            return integrate(f, -std::numeric_limits<double>::infinity(), z, 1e-15).value;
        } catch (const ConvergenceError& e) {
            return e.best_estimate();
        }
    }

    [[nodiscard]] std::size_t cell_of(double z) const {
        const auto it = std::upper_bound(grid_.begin(), grid_.end(), z);
        return static_cast<std::size_t>(it - grid_.begin()) - 1;
    }

    Density density_;
    std::vector<double> grid_;
    std::vector<double> cdf_;
};

/// Uniform (0,1) draws from a 64-bit Mersenne Twister. The mapping from engine
/// output is fixed here so streams are identical across standard libraries.
class UniformStream {
  public:
    explicit UniformStream(std::uint64_t seed) : engine_(seed) {}

    double next() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

  private:
    std::mt19937_64 engine_;
};

/// n i.i.d. draws from the standardized density, deterministic in seed.
inline std::vector<double> sample(const DistributionSpec& spec, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw DomainError("sample: n must be at least 1");
    const QuantileTable table{Density(spec)};
    UniformStream uniform(seed);
    std::vector<double> out(n);
    for (auto& x : out) x = table.quantile(uniform.next());
    return out;
}

}  // namespace volcast
