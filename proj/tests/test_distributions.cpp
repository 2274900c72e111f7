#include <catch_amalgamated.hpp>

#include "volcast/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using Catch::Approx;
using namespace volcast;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct QuadMoments {
    double mass;
    double mean;
    double variance;
};

// Quadrature oracle; independent of the sampler and of the closed-form constants.
QuadMoments quad_moments(const DistributionSpec& spec) {
    const Density d(spec);
    const auto br = d.breakpoints();
    const double mass = integrate_real_line([&](double z) { return d.pdf(z); }, br, 1e-12).value;
    const double mean = integrate_real_line([&](double z) { return z * d.pdf(z); }, br, 1e-12).value;
    const double second = integrate_real_line([&](double z) { return z * z * d.pdf(z); }, br, 1e-11).value;
    return {mass, mean, second - mean * mean};
}

std::vector<DistributionSpec> spec_grid() {
    std::vector<DistributionSpec> out{DistributionSpec::normal()};
    for (double xi : {0.7, 1.0, 1.5}) out.push_back(DistributionSpec::skew_normal(xi));
    for (double nu : {3.0, 4.0, 6.0, 10.0, 30.0}) {
        out.push_back(DistributionSpec::student_t(nu));
        for (double xi : {0.7, 1.0, 1.5}) out.push_back(DistributionSpec::skew_t(nu, xi));
    }
    for (double p : {0.8, 1.0, 1.5, 2.0, 3.0}) {
        out.push_back(DistributionSpec::ged(p));
        for (double lam : {-0.5, 0.0, 0.5}) out.push_back(DistributionSpec::sged(p, lam));
    }
    return out;
}

double sample_moment(const std::vector<double>& x, int k, double centre) {
    double s = 0.0;
    for (double v : x) s += std::pow(v - centre, k);
    return s / static_cast<double>(x.size());
}

}  // namespace

TEST_CASE("standard normal log density at the mode", "[distributions]") {
    CHECK(log_pdf(DistributionSpec::normal(), 0.0) == Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-15));
    CHECK(log_pdf(DistributionSpec::normal(), 0.0) == Approx(-0.9189385).margin(1e-7));
}

TEST_CASE("every standardized density integrates to one with zero mean and unit variance", "[distributions]") {
    for (const auto& spec : spec_grid()) {
        INFO(spec.name() << " shape=" << spec.shape.value_or(0) << " skew=" << spec.skew.value_or(0));
        const auto m = quad_moments(spec);
        CHECK(std::abs(m.mass - 1.0) < 1e-8);
        CHECK(std::abs(m.mean) < 1e-7);
        CHECK(std::abs(m.variance - 1.0) < 1e-6);
    }
}

TEST_CASE("GED p=1.5 normalizes", "[distributions]") {
    const Density d(DistributionSpec::ged(1.5));
    const double mass = integrate([&](double z) { return d.pdf(z); }, -kInf, kInf, 1e-11).value;
    CHECK(std::abs(mass - 1.0) < 1e-8);
}

TEST_CASE("nesting identities hold pointwise", "[distributions]") {
    const Density normal(DistributionSpec::normal());
    const Density ged2(DistributionSpec::ged(2.0));
    const Density ged14(DistributionSpec::ged(1.4));
    const Density sged14(DistributionSpec::sged(1.4, 0.0));
    const Density t7(DistributionSpec::student_t(7.0));
    const Density st7(DistributionSpec::skew_t(7.0, 1.0));
    const Density sn1(DistributionSpec::skew_normal(1.0));

    CHECK(std::abs(ged2.log_pdf(1.3) - normal.log_pdf(1.3)) < 1e-10);
    CHECK(std::abs(sged14.log_pdf(0.7) - ged14.log_pdf(0.7)) < 1e-10);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-8.0, 8.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double z = u(rng);
        worst = std::max(worst, std::abs(ged2.log_pdf(z) - normal.log_pdf(z)));
        worst = std::max(worst, std::abs(sged14.log_pdf(z) - ged14.log_pdf(z)));
        worst = std::max(worst, std::abs(st7.log_pdf(z) - t7.log_pdf(z)));
        worst = std::max(worst, std::abs(sn1.log_pdf(z) - normal.log_pdf(z)));
    }
    CHECK(worst < 1e-10);
    for (double p : {0.7, 1.0, 2.5, 4.0}) {
        const Density g(DistributionSpec::ged(p));
        const Density s(DistributionSpec::sged(p, 0.0));
        for (double z = -8.0; z <= 8.0; z += 0.37) CHECK(std::abs(g.log_pdf(z) - s.log_pdf(z)) < 1e-10);
    }
}

TEST_CASE("GED tails are fatter than normal for p < 2", "[distributions]") {
    const Density normal(DistributionSpec::normal());
    for (double p : {0.8, 1.0, 1.5, 1.9}) {
        const Density g(DistributionSpec::ged(p));
        CHECK(g.log_pdf(5.0) > normal.log_pdf(5.0));
        CHECK(g.log_pdf(-5.0) > normal.log_pdf(-5.0));
    }
}

TEST_CASE("GED closed-form moments", "[distributions]") {
    // Γ(1.5)/Γ(0.5) = 1/2, so p = 2, σ_p = 1 gives variance 2 · 1/2 = 1
    const auto m2 = ged_moments(2.0, 1.0);
    CHECK(m2.variance == Approx(1.0).epsilon(1e-12));
    CHECK(m2.kurtosis == Approx(3.0).epsilon(1e-12));
    // p = 1: Γ(5)Γ(1)/Γ(3)^2 = 24/4
    CHECK(ged_moments(1.0).kurtosis == Approx(6.0).epsilon(1e-12));
    CHECK(ged_moments(2.0, 0.5).variance == Approx(0.25).epsilon(1e-12));
    // variance formula against quadrature of the unscaled density exp(-|x|^p/2)
    for (double p : {0.9, 1.3, 2.7}) {
        auto k = [p](double x) { return std::exp(-0.5 * std::pow(std::abs(x), p)); };
        const double mass = integrate_real_line(k, {0.0}, 1e-12).value;
        const double var = integrate_real_line([&](double x) { return x * x * k(x); }, {0.0}, 1e-12).value / mass;
        CHECK(ged_moments(p, 1.0).variance == Approx(var).epsilon(1e-8));
    }
    CHECK_THROWS_AS(ged_moments(0.0), DomainError);
}

TEST_CASE("SGED constants", "[distributions]") {
    CHECK(sged_constants(1.0, 0.0, 1.7).m == 0.0);
    CHECK(sged_constants(2.0, 0.0, 1.2).m == 0.0);
    const auto m = quad_moments(DistributionSpec::sged(1.7, 0.4));
    CHECK(std::abs(m.mass - 1.0) < 1e-8);
    CHECK(std::abs(m.variance - 1.0) < 1e-6);
    // nu scales inversely with sigma_p, m is scale free
    const auto a = sged_constants(1.0, 0.3, 1.5);
    const auto b = sged_constants(2.0, 0.3, 1.5);
    CHECK(b.nu == Approx(a.nu / 2.0).epsilon(1e-14));
    CHECK(b.m == Approx(a.m).epsilon(1e-14));
    CHECK_THROWS_AS(sged_constants(1.0, 1.0, 1.5), DomainError);
}

TEST_CASE("invalid specs are rejected", "[distributions]") {
    CHECK_THROWS_AS(Density(DistributionSpec::student_t(2.0)), DomainError);
    CHECK_THROWS_AS(Density(DistributionSpec::ged(-1.0)), DomainError);
    CHECK_THROWS_AS(Density(DistributionSpec::sged(1.5, -1.0)), DomainError);
    CHECK_THROWS_AS(Density(DistributionSpec::skew_normal(0.0)), DomainError);
    CHECK_THROWS_AS(Density(DistributionSpec{Family::Normal, 2.0, std::nullopt}), DomainError);
    CHECK_THROWS_AS(Density(DistributionSpec{Family::GED, std::nullopt, std::nullopt}), DomainError);
    CHECK_THROWS_AS(Density(DistributionSpec{Family::StudentT, 5.0, 0.2}), DomainError);
    CHECK_THROWS_AS(sample(DistributionSpec::normal(), 0, 1), DomainError);
}

TEST_CASE("analytic derivative of the log density matches finite differences", "[distributions]") {
    for (const auto& spec : spec_grid()) {
        const Density d(spec);
        for (double z : {-3.1, -1.2, -0.3, 0.45, 1.7, 4.2}) {
            const double h = 1e-6;
            const double fd = (d.log_pdf(z + h) - d.log_pdf(z - h)) / (2 * h);
            INFO(spec.name() << " z=" << z);
            CHECK(d.d_log_pdf(z) == Approx(fd).margin(1e-6).epsilon(1e-6));
        }
    }
}

TEST_CASE("expected absolute value matches quadrature", "[distributions]") {
    for (const auto& spec : spec_grid()) {
        const Density d(spec);
        const double q = integrate_real_line([&](double z) { return std::abs(z) * d.pdf(z); }, {0.0}, 1e-11).value;
        INFO(spec.name());
        CHECK(d.expected_abs() == Approx(q).epsilon(1e-8));
    }
}

TEST_CASE("quantile inverts the CDF", "[distributions]") {
    for (const auto& spec : {DistributionSpec::normal(), DistributionSpec::sged(1.3, -0.4),
                             DistributionSpec::skew_t(4.0, 0.8), DistributionSpec::ged(0.8)}) {
        const QuantileTable table{Density(spec)};
        for (double u : {1e-9, 1e-4, 0.02, 0.3, 0.5, 0.77, 0.999, 1 - 1e-8}) {
            const double z = table.quantile(u);
            CHECK(table.cdf(z) == Approx(u).epsilon(1e-9));
        }
    }
    const QuantileTable normal{Density(DistributionSpec::normal())};
    CHECK(normal.quantile(0.975) == Approx(1.959963984540054).epsilon(1e-10));
    CHECK(normal.cdf(-1.0) == Approx(normal_cdf(-1.0)).epsilon(1e-11));
}

TEST_CASE("normal sampler: law of large numbers and determinism", "[distributions][sampler]") {
    const std::size_t n = 1000000;
    const auto x = sample(DistributionSpec::normal(), n, 42);
    const double mean = sample_moment(x, 1, 0.0);
    const double var = sample_moment(x, 2, mean);
    CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(var - 1.0) < 0.01);
    const auto again = sample(DistributionSpec::normal(), 1000, 42);
    CHECK(std::equal(again.begin(), again.end(), x.begin()));
}

TEST_CASE("SGED with negative lambda has negative sample skewness", "[distributions][sampler]") {
    const auto x = sample(DistributionSpec::sged(1.5, -0.5), 1000000, 5);
    const double mean = sample_moment(x, 1, 0.0);
    const double m2 = sample_moment(x, 2, mean);
    const double m3 = sample_moment(x, 3, mean);
    CHECK(m3 / std::pow(m2, 1.5) < 0.0);
}

TEST_CASE("sampler matches the quadrature CDF (Kolmogorov-Smirnov)", "[distributions][sampler]") {
    for (const auto& spec : {DistributionSpec::normal(), DistributionSpec::student_t(5.0), DistributionSpec::ged(1.2),
                             DistributionSpec::skew_normal(1.4), DistributionSpec::skew_t(6.0, 0.8),
                             DistributionSpec::sged(1.6, 0.3)}) {
        auto x = sample(spec, 1000000, 99);
        std::sort(x.begin(), x.end());
        const Density d(spec);
        double ks = 0.0;
        for (double z = -5.0; z <= 5.0; z += 0.1) {
            const double cdf = integrate([&](double v) { return d.pdf(v); }, -kInf, z, 1e-11).value;
            const double emp = static_cast<double>(std::upper_bound(x.begin(), x.end(), z) - x.begin()) /
                               static_cast<double>(x.size());
            ks = std::max(ks, std::abs(cdf - emp));
        }
        INFO(spec.name());
        CHECK(ks < 0.005);
    }
}
