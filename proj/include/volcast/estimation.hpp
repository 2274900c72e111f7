#pragma once

// Maximum-likelihood fitting of ARMA mean plus conditional-variance models.

#include "volcast/arma.hpp"
#include "volcast/distributions.hpp"
#include "volcast/error.hpp"
#include "volcast/optimizer.hpp"
#include "volcast/vol_models.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace volcast {

inline constexpr std::size_t kMinFitLength = 250;

/// A fit is stationary when the largest gradient component of -loglik over the
/// unconstrained coordinates (standardized data, see stationarity_gradient) is
/// at most kStationarityTolerance * (1 + |loglik|).
inline constexpr double kStationarityTolerance = 1e-4;

struct FitOptions {
    int starts = 5;  ///< deterministic multistart points, 1 to 5
    /// Free parameters on the original scale (FitResult::estimates layout). Tried
    /// first; the multistart runs only if it fails to converge.
    std::optional<std::vector<double>> warm_start;
    OptimizerOptions optimizer{};
    bool robust_errors = true;
};

struct FitResult {
    VolModelSpec spec;  ///< distribution carries the fitted shape and skew
    VolParams params;
    double mean_constant = 0.0;
    std::vector<double> ar;
    std::vector<double> ma;

    std::vector<std::string> param_names;
    std::vector<double> estimates;   ///< free parameters, original scale
    std::vector<double> std_errors;  ///< robust; empty when unavailable
    std::string std_error_note;

    double loglik = 0.0;
    double aic = 0.0;  ///< per observation
    double bic = 0.0;  ///< per observation
    std::vector<double> residuals;
    std::vector<double> sigma2;
    std::vector<double> std_residuals;

    bool converged = false;
    int iterations = 0;
    double gradient_max_abs = 0.0;
    double gradient_bound = 0.0;
    std::vector<std::string> start_diagnostics;

    [[nodiscard]] std::size_t n_params() const noexcept { return estimates.size(); }
    [[nodiscard]] std::size_t n_obs() const noexcept { return residuals.size(); }
    [[nodiscard]] bool stationary() const noexcept { return gradient_max_abs <= gradient_bound; }
};

namespace detail {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit(double p) {
    p = std::clamp(p, 1e-12, 1.0 - 1e-12);
    return std::log(p / (1.0 - p));
}

inline double log_pos(double v) { return std::log(std::max(v, 1e-300)); }

inline double atanh_clamped(double v) { return std::atanh(std::clamp(v, -1.0 + 1e-12, 1.0 - 1e-12)); }

}  // namespace detail

/// Log-likelihood of one model on a standardized copy of the data, with the
/// maps between natural parameters and the unconstrained optimizer space.
class Likelihood {
  public:
    struct Pieces {
        double constant = 0.0;
        std::vector<double> ar;
        std::vector<double> ma;
        VolParams vol;
        DistributionSpec dist;
    };

    Likelihood(std::span<const double> y, VolModelSpec spec) : spec_(std::move(spec)) {
        spec_.validate();
        if (y.empty()) throw DomainError("Likelihood: empty series");
        scale_ = std::sqrt(detail::sample_variance(y));
        if (!std::isfinite(scale_)) throw DomainError("Likelihood: series contains non-finite values");
        // a constant series can still be filtered at given parameters
        if (!(scale_ > 0.0)) scale_ = 1.0;
        y_.resize(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) y_[i] = y[i] / scale_;

        const ArmaSpec& m = spec_.mean;
        if (m.include_constant) names_.emplace_back("mu");
        for (int i = 1; i <= m.p; ++i) names_.push_back("ar" + std::to_string(i));
        for (int i = 1; i <= m.q; ++i) names_.push_back("ma" + std::to_string(i));
        vol_at_ = names_.size();
        names_.emplace_back("omega");
        names_.emplace_back("alpha1");
        if (spec_.family != VolFamily::IGARCH) names_.emplace_back("beta1");
        if (needs_gamma(spec_.family)) names_.emplace_back("gamma1");
        if (needs_power(spec_.family)) {
            names_.emplace_back("delta");
            names_.emplace_back("lambda");
        }
        dist_at_ = names_.size();
        if (has_shape(spec_.distribution.family)) names_.emplace_back("shape");
        if (has_skew(spec_.distribution.family)) names_.emplace_back("skew");
    }

    [[nodiscard]] std::size_t size() const noexcept { return names_.size(); }
    [[nodiscard]] const std::vector<std::string>& names() const noexcept { return names_; }
    [[nodiscard]] double scale() const noexcept { return scale_; }
    [[nodiscard]] std::span<const double> data() const noexcept { return y_; }
    [[nodiscard]] const VolModelSpec& spec() const noexcept { return spec_; }

    [[nodiscard]] Pieces unpack(std::span<const double> theta) const {
        check_size(theta);
        Pieces out;
        std::size_t i = 0;
        const ArmaSpec& m = spec_.mean;
        if (m.include_constant) out.constant = theta[i++];
        for (int k = 0; k < m.p; ++k) out.ar.push_back(theta[i++]);
        for (int k = 0; k < m.q; ++k) out.ma.push_back(theta[i++]);
        VolParams& v = out.vol;
        v.omega = theta[i++];
        v.alpha = theta[i++];
        if (spec_.family == VolFamily::IGARCH)
            v = igarch_params(v.omega, v.alpha);
        else
            v.beta = theta[i++];
        if (needs_gamma(spec_.family)) v.gamma = theta[i++];
        if (needs_power(spec_.family)) {
            v.delta = theta[i++];
            v.lambda = theta[i++];
        }
        out.dist = spec_.distribution;
        if (has_shape(out.dist.family)) out.dist.shape = theta[i++];
        if (has_skew(out.dist.family)) out.dist.skew = theta[i++];
        return out;
    }

    [[nodiscard]] std::vector<double> pack(const Pieces& p) const {
        std::vector<double> theta;
        theta.reserve(size());
        if (spec_.mean.include_constant) theta.push_back(p.constant);
        theta.insert(theta.end(), p.ar.begin(), p.ar.end());
        theta.insert(theta.end(), p.ma.begin(), p.ma.end());
        theta.push_back(p.vol.omega);
        theta.push_back(p.vol.alpha);
        if (spec_.family != VolFamily::IGARCH) theta.push_back(p.vol.beta);
        if (needs_gamma(spec_.family)) theta.push_back(p.vol.gamma.value_or(0.0));
        if (needs_power(spec_.family)) {
            theta.push_back(p.vol.delta.value_or(2.0));
            theta.push_back(p.vol.lambda.value_or(0.0));
        }
        if (has_shape(p.dist.family)) theta.push_back(*p.dist.shape);
        if (has_skew(p.dist.family)) theta.push_back(*p.dist.skew);
        check_size(theta);
        return theta;
    }

    /// Unconstrained coordinates to natural parameters (standardized scale).
    [[nodiscard]] std::vector<double> to_natural(std::span<const double> x) const {
        using detail::logistic;
        check_size(x);
        std::vector<double> t(x.begin(), x.end());
        const double* v = x.data() + vol_at_;
        double* o = t.data() + vol_at_;
        switch (spec_.family) {
            case VolFamily::GARCH:
            case VolFamily::APARCH: {
                const double persistence = logistic(v[1]);
                o[0] = std::exp(v[0]);
                o[1] = persistence * logistic(v[2]);
                o[2] = persistence * logistic(-v[2]);
                if (spec_.family == VolFamily::APARCH) {
                    o[3] = std::exp(v[3]);
                    o[4] = std::tanh(v[4]);
                }
                break;
            }
            case VolFamily::GJR:
            case VolFamily::TGARCH: {
                // persistence = alpha + gamma/2 + beta, split into u = alpha + gamma/2 and beta
                const double persistence = logistic(v[1]);
                const double u = persistence * logistic(v[2]);
                o[0] = std::exp(v[0]);
                o[1] = 2.0 * u * logistic(v[3]);
                o[2] = persistence * logistic(-v[2]);
                o[3] = -2.0 * u * std::tanh(0.5 * v[3]);
                break;
            }
            case VolFamily::EGARCH: o[2] = std::tanh(v[2]); break;
            case VolFamily::IGARCH:
                o[0] = std::exp(v[0]);
                o[1] = logistic(v[1]);
                break;
            case VolFamily::DCS:
                o[0] = std::exp(v[0]);
                o[1] = std::exp(v[1]);
                o[2] = logistic(v[2]);
                break;
        }
        std::size_t i = dist_at_;
        const Family fam = spec_.distribution.family;
        if (has_shape(fam)) {
            t[i] = fam == Family::StudentT || fam == Family::SkewT ? 2.0 + std::exp(x[i]) : std::exp(x[i]);
            ++i;
        }
        if (has_skew(fam)) t[i] = fam == Family::SGED ? std::tanh(x[i]) : std::exp(x[i]);
        return t;
    }

    /// Inverse of to_natural, clamping boundary values slightly inside.
    [[nodiscard]] std::vector<double> to_unconstrained(std::span<const double> theta) const {
        using detail::atanh_clamped;
        using detail::log_pos;
        using detail::logit;
        check_size(theta);
        std::vector<double> x(theta.begin(), theta.end());
        const double* t = theta.data() + vol_at_;
        double* o = x.data() + vol_at_;
        switch (spec_.family) {
            case VolFamily::GARCH:
            case VolFamily::APARCH: {
                const double persistence = t[1] + t[2];
                o[0] = log_pos(t[0]);
                o[1] = logit(persistence);
                o[2] = logit(persistence > 0.0 ? t[1] / persistence : 0.5);
                if (spec_.family == VolFamily::APARCH) {
                    o[3] = log_pos(t[3]);
                    o[4] = atanh_clamped(t[4]);
                }
                break;
            }
            case VolFamily::GJR:
            case VolFamily::TGARCH: {
                const double u = t[1] + 0.5 * t[3];
                const double persistence = u + t[2];
                o[0] = log_pos(t[0]);
                o[1] = logit(persistence);
                o[2] = logit(persistence > 0.0 ? u / persistence : 0.5);
                o[3] = logit(u > 0.0 ? t[1] / (2.0 * u) : 0.5);
                break;
            }
            case VolFamily::EGARCH: o[2] = atanh_clamped(t[2]); break;
            case VolFamily::IGARCH:
                o[0] = log_pos(t[0]);
                o[1] = logit(t[1]);
                break;
            case VolFamily::DCS:
                o[0] = log_pos(t[0]);
                o[1] = log_pos(t[1]);
                o[2] = logit(t[2]);
                break;
        }
        std::size_t i = dist_at_;
        const Family fam = spec_.distribution.family;
        if (has_shape(fam)) {
            x[i] = fam == Family::StudentT || fam == Family::SkewT ? log_pos(theta[i] - 2.0) : log_pos(theta[i]);
            ++i;
        }
        if (has_skew(fam)) x[i] = fam == Family::SGED ? atanh_clamped(theta[i]) : log_pos(theta[i]);
        return x;
    }

    /// Natural parameters on the standardized scale to the original data scale.
    [[nodiscard]] std::vector<double> to_original(std::span<const double> theta) const {
        return rescale(theta, scale_);
    }

    [[nodiscard]] std::vector<double> from_original(std::span<const double> theta) const {
        return rescale(theta, 1.0 / scale_);
    }

    /// Log-likelihood on the standardized data; throws DomainError or
    /// NumericError when the parameters are inadmissible.
    double loglik(std::span<const double> theta, std::vector<double>* contributions = nullptr) const {
        const Pieces p = unpack(theta);
        const auto resid = arma_residuals(y_, p.constant, p.ar, p.ma);
        VolModelSpec s = spec_;
        s.distribution = p.dist;
        const VarianceRecursion rec(s, p.vol);
        auto path = detail::run_filter(rec, resid, initial_variance(resid), true);
        const double ll = path.loglik();
        if (!std::isfinite(ll)) throw NumericError("log-likelihood not finite", 0);
        if (contributions) *contributions = std::move(path.loglik_contributions);
        return ll;
    }

    /// -loglik at unconstrained coordinates x.
    [[nodiscard]] double objective(std::span<const double> x) const { return -loglik(to_natural(x)); }

  private:
    void check_size(std::span<const double> v) const {
        if (v.size() != names_.size())
            throw DomainError("Likelihood: expected " + std::to_string(names_.size()) + " parameters, got " +
                              std::to_string(v.size()));
    }

    // Maps parameters fitted to y/s onto y when factor = s (and back when factor = 1/s).
    [[nodiscard]] std::vector<double> rescale(std::span<const double> theta, double factor) const {
        check_size(theta);
        std::vector<double> out(theta.begin(), theta.end());
        if (spec_.mean.include_constant) out[0] *= factor;
        double& omega = out[vol_at_];
        const double log_f2 = 2.0 * std::log(factor);
        switch (spec_.family) {
            case VolFamily::GARCH:
            case VolFamily::GJR:
            case VolFamily::IGARCH:
            case VolFamily::DCS: omega *= factor * factor; break;
            case VolFamily::TGARCH: omega *= factor; break;
            case VolFamily::EGARCH: omega += (1.0 - theta[vol_at_ + 2]) * log_f2; break;
            case VolFamily::APARCH: {
                const double delta = theta[vol_at_ + 3];
                omega *= std::pow(factor, delta);
                if (spec_.aparch_doubled_power) out[vol_at_ + 1] *= std::pow(factor, -delta);
                break;
            }
        }
        return out;
    }

    VolModelSpec spec_;
    std::vector<double> y_;
    double scale_ = 1.0;
    std::vector<std::string> names_;
    std::size_t vol_at_ = 0;
    std::size_t dist_at_ = 0;
};

namespace detail {

// Deterministic starting points on the standardized scale.
inline std::vector<std::vector<double>> multistart_points(const Likelihood& lik, int starts) {
    const VolModelSpec& spec = lik.spec();
    Likelihood::Pieces base;
    base.dist = DistributionSpec::defaults(spec.distribution.family);
    const ArmaSpec& m = spec.mean;
    const auto y = lik.data();
    if (m.p + m.q > 0) {
        try {
            const ArmaFit af = fit_arma(y, m);
            base.constant = af.constant;
            base.ar = af.ar;
            base.ma = af.ma;
        } catch (const std::exception&) {
            base.ar.assign(static_cast<std::size_t>(m.p), 0.0);
            base.ma.assign(static_cast<std::size_t>(m.q), 0.0);
        }
    }
    if (m.include_constant && m.p + m.q == 0) {
        double s = 0.0;
        for (double v : y) s += v;
        base.constant = s / static_cast<double>(y.size());
    }
    const auto resid = arma_residuals(y, base.constant, base.ar, base.ma);
    const double var = initial_variance(resid);

    static constexpr double kPersistence[] = {0.95, 0.9, 0.98, 0.8, 0.995};
    static constexpr double kIgarchAlpha[] = {0.08, 0.05, 0.12, 0.03, 0.2};
    std::vector<std::vector<double>> out;
    const int count = std::clamp(starts, 1, 5);
    for (int k = 0; k < count; ++k) {
        const double P = kPersistence[k];
        const double a = P > 0.99 ? 0.06 : 0.1;
        Likelihood::Pieces pc = base;
        VolParams& v = pc.vol;
        switch (spec.family) {
            case VolFamily::GARCH: v = {var * (1.0 - P), a, P - a, {}, {}, {}}; break;
            case VolFamily::GJR: v = {var * (1.0 - P), a - 0.025, P - a, 0.05, {}, {}}; break;
            case VolFamily::TGARCH:
                v = {std::sqrt(var) * (1.0 - P + 0.2 * a), a - 0.025, P - a, 0.05, {}, {}};
                break;
            case VolFamily::EGARCH: v = {(1.0 - P) * std::log(var), 0.1, P, 0.0, {}, {}}; break;
            case VolFamily::IGARCH: v = igarch_params(0.01 * var, kIgarchAlpha[k]); break;
            case VolFamily::APARCH: {
                const double delta = k % 2 == 0 ? 2.0 : 1.2;
                v = {std::pow(var, 0.5 * delta) * (1.0 - P), a, P - a, {}, delta, 0.0};
                break;
            }
            case VolFamily::DCS: v = {var * (1.0 - P), 0.08, P, {}, {}, {}}; break;
        }
        out.push_back(lik.to_unconstrained(lik.pack(pc)));
    }
    return out;
}

inline std::string describe_start(int k, const OptimizeResult& r) {
    return "start " + std::to_string(k) + ": -loglik=" + std::to_string(r.value) +
           (r.converged ? " converged" : " not converged") + " (" + r.message + ")";
}

}  // namespace detail

/// Result populated at fixed parameters (original scale) without optimizing.
inline FitResult evaluate_at(std::span<const double> y, const VolModelSpec& spec, std::span<const double> estimates) {
    const Likelihood lik(y, spec);
    const auto pieces = lik.unpack(estimates);
    FitResult r;
    r.spec = spec;
    r.spec.distribution = pieces.dist;
    r.params = pieces.vol;
    r.mean_constant = pieces.constant;
    r.ar = pieces.ar;
    r.ma = pieces.ma;
    r.param_names = lik.names();
    r.estimates.assign(estimates.begin(), estimates.end());
    r.residuals = arma_residuals(y, pieces.constant, pieces.ar, pieces.ma);
    auto path = filter_variance(r.spec, r.params, r.residuals);
    r.loglik = path.loglik();
    if (!std::isfinite(r.loglik)) throw NumericError("log-likelihood not finite", 0);
    r.sigma2 = std::move(path.sigma2);
    r.std_residuals.resize(r.residuals.size());
    for (std::size_t t = 0; t < r.residuals.size(); ++t) r.std_residuals[t] = r.residuals[t] / std::sqrt(r.sigma2[t]);
    const double n = static_cast<double>(y.size());
    const double k = static_cast<double>(estimates.size());
    r.aic = (-2.0 * r.loglik + 2.0 * k) / n;
    r.bic = (-2.0 * r.loglik + k * std::log(n)) / n;
    return r;
}

namespace detail {

// Central differences, except that a coordinate where both one-sided steps
// increase f (a kink minimum, e.g. |eps|^delta with delta < 1) reports 0.
template <class F>
std::vector<double> kink_aware_gradient(const F& f, const std::vector<double>& x, double rel_step = 1e-6) {
    int evals = 0;
    const Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    const double f0 = safe_eval(f, x0, evals);
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        const double h = rel_step * std::max(1.0, std::abs(x[i]));
        Eigen::VectorXd xp = x0;
        Eigen::VectorXd xm = x0;
        xp[k] += h;
        xm[k] -= h;
        const double fp = safe_eval(f, xp, evals);
        const double fm = safe_eval(f, xm, evals);
        if (fp >= f0 && fm >= f0)
            g[i] = 0.0;
        else if (std::isfinite(fp) && std::isfinite(fm))
            g[i] = (fp - fm) / (2.0 * h);
        else
            g[i] = std::isfinite(fp) ? (fp - f0) / h : (f0 - fm) / h;
    }
    return g;
}

}  // namespace detail

/// Gradient of -loglik at the fit in the unconstrained coordinates of the
/// standardized problem: central differences, with coordinates at a kink
/// minimum reported as 0.
inline std::vector<double> stationarity_gradient(std::span<const double> y, const FitResult& fit) {
    const Likelihood lik(y, fit.spec);
    const auto x = lik.to_unconstrained(lik.from_original(fit.estimates));
    return detail::kink_aware_gradient([&lik](const std::vector<double>& v) { return lik.objective(v); }, x);
}

struct StandardErrors {
    std::vector<double> robust;  ///< sandwich H^-1 S H^-1
    std::vector<double> plain;   ///< inverse Hessian only; NaN where not positive
};

/// Robust and plain standard errors from a numerical Hessian and
/// per-observation scores. Throws EstimationError naming the parameter when
/// the Hessian is singular.
inline StandardErrors standard_errors(const FitResult& fit, std::span<const double> y) {
    if (y.empty() || fit.estimates.empty()) throw DomainError("standard_errors: no observations or parameters");
    const Likelihood lik(y, fit.spec);
    const std::vector<double> theta = lik.from_original(fit.estimates);
    const std::size_t k = theta.size();
    const auto n = static_cast<Eigen::Index>(y.size());
    const auto ki = static_cast<Eigen::Index>(k);

    auto contributions = [&lik](const std::vector<double>& th, std::vector<double>& c) {
        try {
            lik.loglik(th, &c);
            return true;
        } catch (const DomainError&) {
        } catch (const NumericError&) {
        }
        return false;
    };
    auto total = [&lik](const std::vector<double>& th) { return lik.loglik(th); };

    // steps that keep theta +/- h admissible
    std::vector<double> h(k);
    std::vector<double> cp;
    std::vector<double> cm;
    Eigen::MatrixXd scores(n, ki);
    for (std::size_t i = 0; i < k; ++i) {
        h[i] = 1e-4 * std::max(1.0, std::abs(theta[i]));
        bool ok = false;
        for (int shrink = 0; shrink < 12 && !ok; ++shrink) {
            auto tp = theta;
            auto tm = theta;
            tp[i] += h[i];
            tm[i] -= h[i];
            ok = contributions(tp, cp) && contributions(tm, cm);
            if (!ok) h[i] *= 0.25;
        }
        if (!ok) throw EstimationError("standard_errors: parameter '" + lik.names()[i] + "' is at a boundary", {});
        for (Eigen::Index t = 0; t < n; ++t)
            scores(t, static_cast<Eigen::Index>(i)) =
                (cp[static_cast<std::size_t>(t)] - cm[static_cast<std::size_t>(t)]) / (2.0 * h[i]);
    }
    if (scores.rows() == 0) throw DomainError("standard_errors: zero-length score contributions");

    const double f0 = total(theta);
    Eigen::MatrixXd hess(ki, ki);
    for (std::size_t i = 0; i < k; ++i) {
        auto tp = theta;
        auto tm = theta;
        tp[i] += h[i];
        tm[i] -= h[i];
        hess(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) =
            (total(tp) - 2.0 * f0 + total(tm)) / (h[i] * h[i]);
        for (std::size_t j = 0; j < i; ++j) {
            auto at = [&](double si, double sj) {
                auto t = theta;
                t[i] += si * h[i];
                t[j] += sj * h[j];
                return total(t);
            };
            const double v = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h[i] * h[j]);
            hess(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
            hess(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
        }
    }
    const Eigen::MatrixXd info = -hess;

    // conditioning check on the unit-diagonal form
    Eigen::VectorXd d = info.diagonal().cwiseAbs().cwiseSqrt();
    for (Eigen::Index i = 0; i < ki; ++i)
        if (!(d[i] > 0.0) || !std::isfinite(d[i]))
            throw EstimationError("standard_errors: singular Hessian, parameter '" +
                                      lik.names()[static_cast<std::size_t>(i)] + "' is ill-conditioned",
                                  {});
    const Eigen::MatrixXd corr = d.cwiseInverse().asDiagonal() * info * d.cwiseInverse().asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr);
    const Eigen::VectorXd ev = eig.eigenvalues().cwiseAbs();
    Eigen::Index weakest = 0;
    ev.minCoeff(&weakest);
    if (!(ev[weakest] > 1e-10 * ev.maxCoeff())) {
        Eigen::Index culprit = 0;
        eig.eigenvectors().col(weakest).cwiseAbs().maxCoeff(&culprit);
        throw EstimationError("standard_errors: singular Hessian, parameter '" +
                                  lik.names()[static_cast<std::size_t>(culprit)] + "' is ill-conditioned",
                              {});
    }
    const Eigen::MatrixXd info_inv = info.inverse();
    const Eigen::MatrixXd meat = scores.transpose() * scores;
    const Eigen::MatrixXd sandwich = info_inv * meat * info_inv;

    // delta method onto the original scale
    Eigen::MatrixXd jac(ki, ki);
    for (std::size_t j = 0; j < k; ++j) {
        const double step = 1e-6 * std::max(1.0, std::abs(theta[j]));
        auto tp = theta;
        auto tm = theta;
        tp[j] += step;
        tm[j] -= step;
        const auto op = lik.to_original(tp);
        const auto om = lik.to_original(tm);
        for (std::size_t i = 0; i < k; ++i)
            jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (op[i] - om[i]) / (2.0 * step);
    }
    const Eigen::MatrixXd v_robust = jac * sandwich * jac.transpose();
    const Eigen::MatrixXd v_plain = jac * info_inv * jac.transpose();
    StandardErrors out;
    for (Eigen::Index i = 0; i < ki; ++i) {
        out.robust.push_back(std::sqrt(std::max(0.0, v_robust(i, i))));
        out.plain.push_back(v_plain(i, i) > 0.0 ? std::sqrt(v_plain(i, i)) : std::nan(""));
    }
    return out;
}

inline std::vector<double> robust_std_errors(const FitResult& fit, std::span<const double> y) {
    return standard_errors(fit, y).robust;
}

/// Maximum-likelihood fit of the mean, variance and distribution parameters.
inline FitResult fit(std::span<const double> y, const VolModelSpec& spec, const FitOptions& options = {}) {
    spec.validate();
    if (y.size() < kMinFitLength)
        throw DomainError("fit: series needs at least " + std::to_string(kMinFitLength) + " observations");
    for (double v : y)
        if (!std::isfinite(v)) throw DomainError("fit: series contains non-finite values");
    if (detail::is_degenerate(y)) throw DomainError("fit: degenerate series (zero variance)");

    const Likelihood lik(y, spec);
    auto objective = [&lik](const std::vector<double>& x) { return lik.objective(x); };

    std::vector<std::string> diagnostics;
    std::optional<OptimizeResult> best;
    auto consider = [&best](OptimizeResult r) {
        if (std::isfinite(r.value) && (!best || r.value < best->value)) best = std::move(r);
    };

    if (options.warm_start) {
        std::vector<double> x0;
        try {
            x0 = lik.to_unconstrained(lik.from_original(*options.warm_start));
        } catch (const DomainError& e) {
            diagnostics.push_back(std::string("warm start rejected: ") + e.what());
        }
        if (!x0.empty()) {
            OptimizeResult r = minimize_bfgs(objective, x0, options.optimizer);
            diagnostics.push_back("warm " + detail::describe_start(0, r).substr(6));
            consider(std::move(r));
        }
    }
    if (!best || !best->converged) {
        const auto starts = detail::multistart_points(lik, options.starts);
        for (std::size_t k = 0; k < starts.size(); ++k) {
            OptimizeResult r = minimize_bfgs(objective, starts[k], options.optimizer);
            diagnostics.push_back(detail::describe_start(static_cast<int>(k), r));
            consider(std::move(r));
        }
    }
    if (!best) throw EstimationError("fit: no starting point gave a finite likelihood for " + spec.name(), diagnostics);

    auto max_gradient = [&objective](const std::vector<double>& x) {
        double m = 0.0;
        for (double v : detail::kink_aware_gradient(objective, x)) m = std::max(m, std::abs(v));
        return m;
    };
    double gmax = max_gradient(best->x);
    int iterations = best->iterations;
    // restart from the best point with a fresh Hessian while the gradient is too large
    for (int round = 0; round < 4 && gmax > kStationarityTolerance * (1.0 + std::abs(best->value)); ++round) {
        OptimizeResult r = minimize_bfgs(objective, best->x, options.optimizer);
        iterations += r.iterations;
        diagnostics.push_back("polish " + std::to_string(round) + ": -loglik=" + std::to_string(r.value) + " (" +
                              r.message + ")");
        if (!(r.value <= best->value)) break;
        const bool improved = r.value < best->value;
        best = std::move(r);
        gmax = max_gradient(best->x);
        if (!improved) break;
    }

    const std::vector<double> estimates = lik.to_original(lik.to_natural(best->x));
    FitResult r = evaluate_at(y, spec, estimates);
    r.iterations = iterations;
    r.start_diagnostics = std::move(diagnostics);
    r.gradient_max_abs = gmax;
    r.gradient_bound = kStationarityTolerance * (1.0 + std::abs(best->value));
    r.converged = best->converged && r.stationary();

    if (options.robust_errors) {
        if (!r.converged) {
            r.std_error_note = "fit did not converge";
        } else {
            try {
                r.std_errors = robust_std_errors(r, y);
            } catch (const std::exception& e) {
                r.std_error_note = e.what();
            }
        }
    }
    return r;
}

/// sigma^2 for the observation after the fitted sample.
inline double forecast_variance(const FitResult& fit) {
    if (fit.residuals.empty()) throw DomainError("forecast_variance: fit has no residuals");
    return forecast_one_step(fit.spec, fit.params, fit.residuals.back(), fit.sigma2.back());
}

struct QqPoint {
    double theoretical;
    double empirical;
};

/// Sorted standardized residuals against quantiles of the fitted innovation
/// density at plotting positions (i - 0.5) / n.
inline std::vector<QqPoint> qq_data(const FitResult& fit) {
    std::vector<double> z = fit.std_residuals;
    std::sort(z.begin(), z.end());
    const QuantileTable table{Density(fit.spec.distribution)};
    std::vector<QqPoint> out(z.size());
    const double n = static_cast<double>(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        out[i] = {table.quantile((static_cast<double>(i) + 0.5) / n), z[i]};
    return out;
}

}  // namespace volcast
