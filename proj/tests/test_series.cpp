#include <catch_amalgamated.hpp>

#include "volcast/series.hpp"

#include <random>

using Catch::Approx;
using namespace volcast;

namespace {

PriceSeries parse(const std::string& text) {
    std::istringstream in(text);
    return parse_prices(in);
}

std::string error_of(const std::string& text) {
    try {
        parse(text);
    } catch (const DataError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("parse a simple price file", "[series]") {
    const auto p = parse("date,price\n2020-01-01,100\n2020-01-02,100\n");
    REQUIRE(p.prices.size() == 2);
    CHECK(p.dates[0] == "2020-01-01");
    CHECK(p.prices[1] == 100.0);
}

TEST_CASE("rows are sorted by date and columns found by name", "[series]") {
    const auto p = parse("Open,Price,Date\n1,102.5,2020-01-03\n1,101,2020-01-01\r\n1,\"100.25\",2020-01-02\n\n");
    REQUIRE(p.dates.size() == 3);
    CHECK(p.dates == std::vector<std::string>{"2020-01-01", "2020-01-02", "2020-01-03"});
    CHECK(p.prices == std::vector<double>{101.0, 100.25, 102.5});
}

TEST_CASE("ingestion errors name the problem and line", "[series]") {
    CHECK_THAT(error_of("date,price\n2020-01-01,1\n2020-01-01,2\n"), Catch::Matchers::ContainsSubstring("duplicate date 2020-01-01"));
    CHECK_THAT(error_of("date,price\n"), Catch::Matchers::ContainsSubstring("empty input"));
    CHECK_THAT(error_of(""), Catch::Matchers::ContainsSubstring("empty input"));
    CHECK_THAT(error_of("date,price\n2020-01-01,1\n2020-13-01,2\n"), Catch::Matchers::ContainsSubstring(":3: unparseable date"));
    CHECK_THAT(error_of("date,price\n2020-01-01,abc\n"), Catch::Matchers::ContainsSubstring(":2: unparseable price"));
    CHECK_THAT(error_of("date,price\n2020-01-01,-4\n"), Catch::Matchers::ContainsSubstring("non-positive price"));
    CHECK_THAT(error_of("date,price\n2020-01-01,0\n"), Catch::Matchers::ContainsSubstring("non-positive price"));
    CHECK_THAT(error_of("date,close\n2020-01-01,4\n"), Catch::Matchers::ContainsSubstring("column 'price'"));
    CHECK_THAT(error_of("date,price\n2020-01-01,4,5\n"), Catch::Matchers::ContainsSubstring("expected 2 fields"));
    CHECK_THROWS_AS(load_prices("/nonexistent/file.csv"), DataError);
}

TEST_CASE("log returns", "[series]") {
    PriceSeries p{{"a", "b"}, {100.0, 100.0}};
    CHECK(to_returns(p).returns == std::vector<double>{0.0});
    p.prices[1] = 100.0 * std::exp(0.01);
    CHECK(to_returns(p).returns[0] == Approx(0.01).epsilon(1e-13));
    CHECK(to_returns(p).dates == std::vector<std::string>{"b"});
    CHECK(to_returns(p, true).returns[0] == Approx(std::log(p.prices[1]) / std::log(100.0)).epsilon(1e-15));
    CHECK_THROWS_AS(to_returns(PriceSeries{{"a"}, {1.0}}), DomainError);
}

TEST_CASE("prices are reconstructed from returns", "[series]") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd(0.0, 0.03);
    PriceSeries p;
    double price = 250.0;
    for (int i = 0; i < 2000; ++i) {
        p.dates.push_back(std::to_string(i));
        p.prices.push_back(price);
        price *= std::exp(nd(rng));
    }
    const auto r = to_returns(p);
    REQUIRE(r.returns.size() == p.prices.size() - 1);
    double cum = 0.0;
    for (std::size_t t = 0; t < r.returns.size(); ++t) {
        cum += r.returns[t];
        REQUIRE(std::exp(cum) * p.prices[0] == Approx(p.prices[t + 1]).epsilon(1e-10));
    }
}

TEST_CASE("descriptive statistics", "[series]") {
    SECTION("constant series is flagged degenerate") {
        const auto d = describe(std::vector<double>(50, 0.013));
        CHECK(d.degenerate);
        CHECK(d.stdev == 0.0);
        CHECK(std::isnan(d.skewness));
        CHECK(std::isnan(d.kurtosis));
    }
    SECTION("standard normal sample") {
        std::mt19937_64 rng(3);
        std::normal_distribution<double> nd;
        std::vector<double> x(1000000);
        for (auto& v : x) v = nd(rng);
        const auto d = describe(x);
        CHECK(std::abs(d.mean) < 0.004);
        CHECK(d.stdev == Approx(1.0).margin(0.01));
        CHECK(d.kurtosis == Approx(3.0).margin(0.05));
        CHECK(d.excess_kurtosis == d.kurtosis - 3.0);
    }
    SECTION("symmetric sample has zero skewness exactly") {
        std::mt19937_64 rng(4);
        std::lognormal_distribution<double> ln(0.0, 1.0);
        std::vector<double> x;
        for (int i = 0; i < 777; ++i) x.push_back(ln(rng));
        const std::size_t half = x.size();
        for (std::size_t i = 0; i < half; ++i) x.push_back(-x[i]);
        const auto d = describe(x);
        CHECK(d.skewness == 0.0);
        CHECK(d.mean == 0.0);
    }
    SECTION("matches direct moments") {
        const std::vector<double> x{1, 2, 3, 4, 10};
        const auto d = describe(x);
        CHECK(d.mean == 4.0);
        CHECK(d.stdev == Approx(std::sqrt(50.0 / 4.0)).epsilon(1e-15));
        const double m2 = 10.0;
        CHECK(d.skewness == Approx((-27.0 - 8.0 - 1.0 + 0.0 + 216.0) / 5.0 / std::pow(m2, 1.5)).epsilon(1e-14));
        CHECK(d.kurtosis == Approx((81.0 + 16.0 + 1.0 + 0.0 + 1296.0) / 5.0 / (m2 * m2)).epsilon(1e-14));
    }
    CHECK_THROWS_AS(describe(std::vector<double>{1, 2, 3}), DomainError);
}
