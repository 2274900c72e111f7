#include <catch_amalgamated.hpp>

#include "volcast/backtest.hpp"

#include <numeric>
#include <random>

using Catch::Approx;
using namespace volcast;

namespace {

VolModelSpec model(VolFamily f, DistributionSpec d = DistributionSpec::normal()) {
    VolModelSpec s;
    s.family = f;
    s.distribution = std::move(d);
    return s;
}

std::vector<double> garch_series(std::size_t n, std::uint64_t seed) {
    return simulate(model(VolFamily::GARCH), VolParams{0.05, 0.10, 0.85, {}, {}, {}}, n, seed).returns;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("rolling and recursive forecasts agree on constant-parameter data", "[backtest]") {
    const auto y = garch_series(1000, 4);
    BacktestConfig cfg;
    cfg.test_length = 100;
    cfg.refit_every = 10;
    const auto rolling = run_backtest(y, cfg);
    cfg.scheme = Scheme::Recursive;
    const auto recursive = run_backtest(y, cfg);
    REQUIRE(rolling.models.size() == 1);
    CHECK(correlation(rolling.models[0].forecast_sigma, recursive.models[0].forecast_sigma) > 0.95);
    for (double s : rolling.models[0].forecast_sigma) CHECK(s > 0.0);
    CHECK(rolling.models[0].losses.rmse == std::sqrt(rolling.models[0].losses.mse));
}

TEST_CASE("rolling with a full-history window equals recursive exactly", "[backtest]") {
    const auto y = garch_series(600, 5);
    BacktestConfig cfg;
    cfg.test_length = 30;
    cfg.refit_every = 7;
    cfg.models = {gaussian_garch(), model(VolFamily::GJR, DistributionSpec::student_t(8.0))};
    cfg.window_length = y.size();
    const auto rolling = run_backtest(y, cfg);
    cfg.scheme = Scheme::Recursive;
    cfg.window_length.reset();
    const auto recursive = run_backtest(y, cfg);
    for (std::size_t i = 0; i < 2; ++i) CHECK(rolling.models[i].forecast_sigma == recursive.models[i].forecast_sigma);
}

TEST_CASE("forecasts do not look ahead", "[backtest]") {
    const auto y = garch_series(700, 6);
    std::mt19937_64 rng(1);
    for (Scheme scheme : {Scheme::Rolling, Scheme::Recursive}) {
        BacktestConfig cfg;
        cfg.scheme = scheme;
        cfg.test_length = 60;
        cfg.refit_every = 4;
        cfg.models = {gaussian_garch(), model(VolFamily::EGARCH, DistributionSpec::sged(1.5, 0.0))};
        const auto full = run_backtest(y, cfg);
        std::uniform_int_distribution<std::size_t> pick(0, cfg.test_length - 1);
        for (int rep = 0; rep < 3; ++rep) {
            const std::size_t j = pick(rng);
            const std::size_t t = full.first_test_index + j;
            // keep data through t; shorten the test segment so its start stays put
            const std::vector<double> cut(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(t + 1));
            BacktestConfig c2 = cfg;
            c2.test_length = j + 1;
            const auto part = run_backtest(cut, c2);
            REQUIRE(part.first_test_index == full.first_test_index);
            for (std::size_t m = 0; m < cfg.models.size(); ++m)
                CHECK(part.models[m].forecast_sigma.back() == full.models[m].forecast_sigma[j]);
        }
    }
}

TEST_CASE("test_length of one gives one forecast and degenerate DM", "[backtest]") {
    const auto y = garch_series(400, 7);
    BacktestConfig cfg;
    cfg.test_length = 1;
    cfg.models = {gaussian_garch(), model(VolFamily::GARCH, DistributionSpec::student_t(8.0))};
    const auto rep = run_backtest(y, cfg);
    for (const auto& m : rep.models) CHECK(m.forecast_sigma.size() == 1);
    CHECK_FALSE(rep.models[0].dm_mse.has_value());
    REQUIRE(rep.models[1].dm_mse.has_value());
    CHECK_FALSE(rep.models[1].dm_mse->result.has_value());
    CHECK_THAT(rep.models[1].dm_mse->error, Catch::Matchers::ContainsSubstring("fewer than 10"));
}

TEST_CASE("identical model specs give a degenerate pairwise DM", "[backtest]") {
    const auto y = garch_series(500, 8);
    BacktestConfig cfg;
    cfg.test_length = 20;
    cfg.refit_every = 10;
    cfg.models = {gaussian_garch(), gaussian_garch()};
    const auto rep = run_backtest(y, cfg);
    REQUIRE(rep.pairwise.size() == 2);
    for (const auto& p : rep.pairwise) {
        CHECK_FALSE(p.outcome.result.has_value());
        CHECK_THAT(p.outcome.error, Catch::Matchers::ContainsSubstring("identical"));
    }
    CHECK(rep.benchmark_index == 0);
    CHECK(rep.models[0].benchmark);
    CHECK_FALSE(rep.models[1].benchmark);
}

TEST_CASE("report is the same for any thread count", "[backtest]") {
    const auto y = garch_series(500, 9);
    BacktestConfig cfg;
    cfg.test_length = 15;
    cfg.refit_every = 5;
    cfg.models = {gaussian_garch(), model(VolFamily::GJR), model(VolFamily::TGARCH, DistributionSpec::ged(1.5)),
                  model(VolFamily::IGARCH)};
    cfg.threads = 1;
    const auto a = run_backtest(y, cfg);
    cfg.threads = 3;
    const auto b = run_backtest(y, cfg);
    for (std::size_t i = 0; i < cfg.models.size(); ++i) CHECK(a.models[i].forecast_sigma == b.models[i].forecast_sigma);
}

TEST_CASE("failed refits carry the previous parameters forward", "[backtest]") {
    auto y = garch_series(600, 10);
    y.resize(900, 0.001);  // flat tail: late windows have zero variance and cannot be fitted
    BacktestConfig cfg;
    cfg.test_length = 300;
    cfg.refit_every = 25;
    cfg.window_length = 260;
    const auto rep = run_backtest(y, cfg);
    const auto& m = rep.models[0];
    REQUIRE(m.ok());
    CHECK(m.forecast_sigma.size() == 300);
    bool any_fallback = false;
    for (const auto& w : m.fit_trail) {
        if (w.fallback) {
            any_fallback = true;
            CHECK_THAT(w.message, Catch::Matchers::ContainsSubstring("degenerate"));
        }
    }
    CHECK(any_fallback);
    for (double s : m.forecast_sigma) CHECK((s > 0.0 && std::isfinite(s)));
}

TEST_CASE("squared proxy compares variances", "[backtest]") {
    const auto y = garch_series(400, 11);
    BacktestConfig cfg;
    cfg.test_length = 12;
    cfg.refit_every = 12;
    cfg.proxy = Proxy::Squared;
    const auto rep = run_backtest(y, cfg);
    const auto& m = rep.models[0];
    for (std::size_t j = 0; j < 12; ++j) {
        const double r = y[rep.first_test_index + j];
        CHECK(rep.realized[j] == r * r);
        CHECK(m.forecast_errors[j] == r * r - m.forecast_sigma[j] * m.forecast_sigma[j]);
    }
}

TEST_CASE("configuration errors", "[backtest]") {
    const auto y = garch_series(400, 12);
    BacktestConfig cfg;
    cfg.test_length = 150;
    CHECK_THROWS_AS(run_backtest(y, cfg), DomainError);
    cfg.test_length = 10;
    cfg.models = {model(VolFamily::GJR)};
    CHECK_THROWS_AS(run_backtest(y, cfg), DomainError);
    cfg.models = {gaussian_garch()};
    cfg.refit_every = 0;
    CHECK_THROWS_AS(run_backtest(y, cfg), DomainError);
}

TEST_CASE("rank_models orders by loss with a name tie-break", "[rank]") {
    BacktestReport rep;
    auto add = [&rep](std::string name, double mse, bool bench = false) {
        ModelBacktest m;
        m.name = std::move(name);
        m.losses = {mse, mse, std::sqrt(mse)};
        m.benchmark = bench;
        if (!bench) m.dm_mse = DmOutcome{DmResult{-2.0, 0.04, LossKind::MSE, -0.01, 50}, ""};
        rep.models.push_back(m);
    };
    add("B", 0.2, true);
    add("A", 0.1);
    add("D", 0.3);
    add("C", 0.3);
    const auto r = rank_models(rep, LossKind::MSE);
    REQUIRE(r.size() == 4);
    CHECK(r[0].name == "A");
    CHECK(r[1].name == "B");
    CHECK(r[2].name == "C");
    CHECK(r[3].name == "D");
    CHECK(r[0].stars == "**");
    CHECK(r[1].benchmark);
    CHECK(r[1].stars.empty());
    rep.models[2].failure = "x";
    CHECK(rank_models(rep, LossKind::MSE).size() == 3);
}
