#pragma once

// Special functions and adaptive quadrature.

#include "volcast/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <queue>
#include <string>
#include <vector>

namespace volcast {

struct QuadratureResult {
    double value = 0.0;
    double abs_error_estimate = 0.0;
    int intervals = 0;
};

namespace detail {

// Lanczos approximation, g = 7, n = 9.
inline constexpr double kLanczosG = 7.0;
inline constexpr std::array<double, 9> kLanczosCoef = {
    0.99999999999980993,     676.5203681218851,     -1259.1392167224028,
    771.32342877765313,      -176.61502916214059,   12.507343278686905,
    -0.13857109526572012,    9.9843695780195716e-6, 1.5056327351493116e-7};

inline double log_gamma_lanczos(double a) {
    // valid for a >= 0.5
    const double x = a - 1.0;
    double sum = kLanczosCoef[0];
    for (std::size_t i = 1; i < kLanczosCoef.size(); ++i) sum += kLanczosCoef[i] / (x + static_cast<double>(i));
    const double t = x + kLanczosG + 0.5;
    return 0.5 * std::log(2.0 * std::numbers::pi) + (x + 0.5) * std::log(t) - t + std::log(sum);
}

}  // namespace detail

/// ln Γ(a) for a > 0.
inline double log_gamma(double a) {
    if (!std::isfinite(a) || a <= 0.0) throw DomainError("log_gamma: argument must be finite and positive");
    if (a < 0.5) {
        // Γ(a)Γ(1-a) = π / sin(πa)
        return std::log(std::numbers::pi / std::sin(std::numbers::pi * a)) - detail::log_gamma_lanczos(1.0 - a);
    }
    return detail::log_gamma_lanczos(a);
}

inline double gamma_fn(double a) { return std::exp(log_gamma(a)); }

namespace detail {

// Gauss-Kronrod 7/15 nodes and weights (abscissae in descending order, centre last).
inline constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0};
inline constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
    double lo;
    double hi;
    double value;
    double error;
    bool operator<(const Segment& other) const { return error < other.error; }
};

template <class F>
Segment gauss_kronrod_15(const F& f, double lo, double hi) {
    const double centre = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    std::array<double, 15> fv{};
    const double fc = f(centre);
    double kronrod = fc * kWgk[7];
    double gauss = fc * kWg[3];
    for (int j = 0; j < 7; ++j) {
        const double dx = half * kXgk[j];
        const double f1 = f(centre - dx);
        const double f2 = f(centre + dx);
        fv[2 * j] = f1;
        fv[2 * j + 1] = f2;
        kronrod += kWgk[j] * (f1 + f2);
        if (j % 2 == 1) gauss += kWg[j / 2] * (f1 + f2);
    }
    const double mean = 0.5 * kronrod;
    double resabs = std::abs(fc) * kWgk[7];
    double resasc = kWgk[7] * std::abs(fc - mean);
    for (int j = 0; j < 7; ++j) {
        resabs += kWgk[j] * (std::abs(fv[2 * j]) + std::abs(fv[2 * j + 1]));
        resasc += kWgk[j] * (std::abs(fv[2 * j] - mean) + std::abs(fv[2 * j + 1] - mean));
    }
    const double ahalf = std::abs(half);
    resabs *= ahalf;
    resasc *= ahalf;
    double err = std::abs((kronrod - gauss) * half);
    if (resasc != 0.0 && err != 0.0) err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
    constexpr double eps = std::numeric_limits<double>::epsilon();
    if (resabs > std::numeric_limits<double>::min() / (50.0 * eps)) err = std::max(50.0 * eps * resabs, err);
    return {lo, hi, kronrod * half, err};
}

template <class F>
QuadratureResult adaptive_finite(const F& f, double lo, double hi, double tol, int max_intervals) {
    std::priority_queue<Segment> heap;
    Segment first = gauss_kronrod_15(f, lo, hi);
    double total_err = first.error;
    heap.push(first);
    int count = 1;
    // segments too narrow to split are set aside but still counted
    std::vector<Segment> frozen;
    while (total_err > tol && count < max_intervals && !heap.empty()) {
        Segment worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.lo + worst.hi);
        if (!(mid > worst.lo && mid < worst.hi) ||
            std::abs(worst.hi - worst.lo) < 1e3 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(mid))) {
            frozen.push_back(worst);
            if (heap.empty()) break;
            continue;
        }
        Segment left = gauss_kronrod_15(f, worst.lo, mid);
        Segment right = gauss_kronrod_15(f, mid, worst.hi);
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        ++count;
    }
    // recompute sums from the live segments to shed accumulated rounding
    double value = 0.0;
    double err = 0.0;
    std::vector<Segment> live = std::move(frozen);
    live.reserve(live.size() + heap.size());
    while (!heap.empty()) {
        live.push_back(heap.top());
        heap.pop();
    }
    std::sort(live.begin(), live.end(), [](const Segment& a, const Segment& b) { return a.lo < b.lo; });
    for (const auto& s : live) {
        value += s.value;
        err += s.error;
    }
    if (!std::isfinite(value)) throw DomainError("integrate: integrand produced a non-finite value");
    QuadratureResult out{value, err, count};
    if (err > tol) {
        throw ConvergenceError("integrate: tolerance " + std::to_string(tol) + " not reached, error estimate " +
                                   std::to_string(err),
                               value, err);
    }
    return out;
}

}  // namespace detail

/// Adaptive Gauss-Kronrod integration of f over [lo, hi]. Either end may be
/// infinite; infinite ranges are mapped onto a finite interval first.
/// Throws ConvergenceError (with the best estimate) when the interval budget
/// runs out before the absolute tolerance is met.
template <class F>
QuadratureResult integrate(const F& f, double lo, double hi, double tol = 1e-10, int max_intervals = 4000) {
    if (!(tol > 0.0)) throw DomainError("integrate: tolerance must be positive");
    if (std::isnan(lo) || std::isnan(hi)) throw DomainError("integrate: NaN bound");
    if (lo == hi) return {};
    if (lo > hi) {
        QuadratureResult r = integrate(f, hi, lo, tol, max_intervals);
        r.value = -r.value;
        return r;
    }
    const bool lo_inf = std::isinf(lo);
    const bool hi_inf = std::isinf(hi);
    if (lo_inf && hi_inf) {
        // x = t / (1 - t^2)
        auto g = [&f](double t) {
            const double d = 1.0 - t * t;
            const double x = t / d;
            return f(x) * (1.0 + t * t) / (d * d);
        };
        return detail::adaptive_finite(g, -1.0, 1.0, tol, max_intervals);
    }
    if (hi_inf) {
        // x = lo + t / (1 - t)
        auto g = [&f, lo](double t) {
            const double d = 1.0 - t;
            return f(lo + t / d) / (d * d);
        };
        return detail::adaptive_finite(g, 0.0, 1.0, tol, max_intervals);
    }
    if (lo_inf) {
        auto g = [&f, hi](double t) {
            const double d = 1.0 - t;
            return f(hi - t / d) / (d * d);
        };
        return detail::adaptive_finite(g, 0.0, 1.0, tol, max_intervals);
    }
    return detail::adaptive_finite(f, lo, hi, tol, max_intervals);
}

/// Integral over the whole real line split at the given interior points.
/// Splitting at kinks of the integrand keeps the subdivision count low.
template <class F>
QuadratureResult integrate_real_line(const F& f, std::vector<double> breaks, double tol = 1e-10) {
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    if (breaks.empty()) return integrate(f, -std::numeric_limits<double>::infinity(),
                                         std::numeric_limits<double>::infinity(), tol);
    const double piece_tol = tol / static_cast<double>(breaks.size() + 1);
    QuadratureResult total;
    auto add = [&total](const QuadratureResult& r) {
        total.value += r.value;
        total.abs_error_estimate += r.abs_error_estimate;
        total.intervals += r.intervals;
    };
    add(integrate(f, -std::numeric_limits<double>::infinity(), breaks.front(), piece_tol));
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) add(integrate(f, breaks[i], breaks[i + 1], piece_tol));
    add(integrate(f, breaks.back(), std::numeric_limits<double>::infinity(), piece_tol));
    return total;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Two-sided standard-normal tail probability P(|Z| > |x|).
inline double normal_two_sided_p(double x) { return std::erfc(std::abs(x) / std::numbers::sqrt2); }

}  // namespace volcast
