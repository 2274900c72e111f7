#pragma once

// Price ingestion, returns and descriptive statistics.

#include "volcast/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace volcast {

struct PriceSeries {
    std::vector<std::string> dates;
    std::vector<double> prices;
};

struct ReturnSeries {
    std::vector<std::string> dates;
    std::vector<double> returns;
    std::string source_label;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            out.push_back(trim(line.substr(start, i - start)));
            start = i + 1;
        }
    }
    return out;
}

inline bool is_iso_date(std::string_view s) {
    // YYYY-MM-DD, optionally followed by a time part
    if (s.size() < 10) return false;
    for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    if (s[4] != '-' || s[7] != '-') return false;
    if (s.size() > 10 && s[10] != 'T' && s[10] != ' ') return false;
    const int month = (s[5] - '0') * 10 + (s[6] - '0');
    const int day = (s[8] - '0') * 10 + (s[9] - '0');
    return month >= 1 && month <= 12 && day >= 1 && day <= 31;
}

inline bool parse_double(std::string_view s, double& out) {
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

// Sorts, then adds values pairwise from both ends; exact for samples symmetric about 0.
inline double paired_sum(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double s = 0.0;
    std::size_t i = 0;
    std::size_t j = v.size();
    while (j > i + 1) {
        s += v[i] + v[j - 1];
        ++i;
        --j;
    }
    if (j == i + 1) s += v[i];
    return s;
}

}  // namespace detail

/// Reads a comma-separated file with a header row. Rows are sorted by date;
/// duplicate dates, malformed rows and non-positive prices raise DataError
/// with the file line number.
inline PriceSeries parse_prices(std::istream& in, std::string_view date_col = "date",
                                std::string_view price_col = "price", std::string_view label = "input") {
    std::string line;
    std::size_t line_no = 0;
    const std::string where(label);
    if (!std::getline(in, line)) throw DataError(where + ": empty input (no header row)");
    ++line_no;
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = detail::split_commas(line);
    auto column = [&](std::string_view name) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            std::string a(header[i]);
            std::string b(name);
            std::transform(a.begin(), a.end(), a.begin(), [](unsigned char c) { return std::tolower(c); });
            std::transform(b.begin(), b.end(), b.begin(), [](unsigned char c) { return std::tolower(c); });
            if (a == b) return i;
        }
        throw DataError(where + ": column '" + std::string(name) + "' not found in header");
    };
    const std::size_t di = column(date_col);
    const std::size_t pi = column(price_col);

    std::vector<std::pair<std::string, double>> rows;
    std::vector<std::size_t> lines;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::trim(line).empty()) continue;
        const auto f = detail::split_commas(line);
        const std::string at = where + ":" + std::to_string(line_no) + ": ";
        if (f.size() != header.size())
            throw DataError(at + "expected " + std::to_string(header.size()) + " fields, found " +
                            std::to_string(f.size()));
        if (!detail::is_iso_date(f[di])) throw DataError(at + "unparseable date '" + std::string(f[di]) + "'");
        double price = 0.0;
        if (!detail::parse_double(f[pi], price)) throw DataError(at + "unparseable price '" + std::string(f[pi]) + "'");
        if (!(price > 0.0)) throw DataError(at + "non-positive price " + std::string(f[pi]));
        rows.emplace_back(std::string(f[di]), price);
        lines.push_back(line_no);
    }
    if (rows.empty()) throw DataError(where + ": empty input (header only)");
    std::vector<std::size_t> order(rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rows[a].first < rows[b].first; });
    PriceSeries out;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto& [date, price] = rows[order[k]];
        if (k > 0 && date == out.dates.back())
            throw DataError(where + ":" + std::to_string(lines[order[k]]) + ": duplicate date " + date);
        out.dates.push_back(date);
        out.prices.push_back(price);
    }
    return out;
}

inline PriceSeries load_prices(const std::string& path, std::string_view date_col = "date",
                               std::string_view price_col = "price") {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return parse_prices(in, date_col, price_col, path);
}

/// r_t = ln(P_t / P_{t-1}); with literal_ratio, r_t = ln P_t / ln P_{t-1}.
inline ReturnSeries to_returns(const PriceSeries& prices, bool literal_ratio = false, std::string label = {}) {
    if (prices.prices.size() < 2) throw DomainError("to_returns: need at least 2 prices");
    ReturnSeries r;
    r.source_label = std::move(label);
    for (std::size_t t = 1; t < prices.prices.size(); ++t) {
        const double v = literal_ratio ? std::log(prices.prices[t]) / std::log(prices.prices[t - 1])
                                       : std::log(prices.prices[t] / prices.prices[t - 1]);
        if (!std::isfinite(v)) throw DataError("to_returns: non-finite return at " + prices.dates[t]);
        r.dates.push_back(prices.dates[t]);
        r.returns.push_back(v);
    }
    return r;
}

struct Descriptive {
    double mean = 0.0;
    double stdev = 0.0;  ///< n - 1 denominator
    double skewness = std::numeric_limits<double>::quiet_NaN();
    double kurtosis = std::numeric_limits<double>::quiet_NaN();         ///< raw, normal = 3
    double excess_kurtosis = std::numeric_limits<double>::quiet_NaN();  ///< kurtosis - 3
    std::size_t n = 0;
    bool degenerate = false;  ///< zero variance: skewness and kurtosis undefined
};

/// Sample moments; skewness and kurtosis use the 1/n central moments.
inline Descriptive describe(std::span<const double> x) {
    if (x.size() < 4) throw DomainError("describe: need at least 4 observations");
    const double n = static_cast<double>(x.size());
    Descriptive d;
    d.n = x.size();
    d.mean = detail::paired_sum(std::vector<double>(x.begin(), x.end())) / n;
    std::vector<double> c2(x.size());
    std::vector<double> c3(x.size());
    std::vector<double> c4(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = x[i] - d.mean;
        c2[i] = e * e;
        c3[i] = e * e * e;
        c4[i] = c2[i] * c2[i];
    }
    const double s2 = detail::paired_sum(std::move(c2));
    d.stdev = std::sqrt(s2 / (n - 1.0));
    const double m2 = s2 / n;
    if (!(m2 > 0.0) || m2 <= 1e-24 * d.mean * d.mean) {
        d.stdev = 0.0;
        d.degenerate = true;
        return d;
    }
    d.skewness = detail::paired_sum(std::move(c3)) / n / std::pow(m2, 1.5);
    d.kurtosis = detail::paired_sum(std::move(c4)) / n / (m2 * m2);
    d.excess_kurtosis = d.kurtosis - 3.0;
    return d;
}

}  // namespace volcast
