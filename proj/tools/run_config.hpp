#pragma once

// Run configuration: a flat key = value file, overridable from the command line.

#include "volcast/backtest.hpp"
#include "volcast/distributions.hpp"
#include "volcast/series.hpp"
#include "volcast/vol_models.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace volcast::cli {

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::string input;
    std::string date_column = "date";
    std::string price_column = "price";
    bool literal_ratio = false;

    std::vector<VolFamily> families{std::begin(kGarchFamilies), std::end(kGarchFamilies)};
    std::vector<Family> distributions{std::begin(kAllFamilies), std::end(kAllFamilies)};
    std::optional<ArmaSpec> arma;  ///< unset selects the order by AIC
    int arma_max_p = 5;
    int arma_max_q = 5;
    bool include_constant = true;
    bool aparch_doubled_power = false;
    bool robust_errors = true;

    Scheme scheme = Scheme::Rolling;
    std::size_t test_length = 200;
    std::size_t refit_every = 1;
    Proxy proxy = Proxy::Absolute;
    std::optional<std::size_t> window_length;
    bool hac = false;
    int hac_lag = -1;

    std::string out_dir = "volcast_out";
    std::uint64_t seed = 0;
    unsigned threads = 0;  ///< 0: VOLCAST_THREADS or the machine parallelism
};

namespace detail {

inline std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    for (auto part : volcast::detail::split_commas(s)) {
        const auto t = volcast::detail::trim(part);
        if (!t.empty()) out.emplace_back(t);
    }
    return out;
}

template <class T>
T parse_integer(std::string_view key, std::string_view v) {
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size())
        throw ConfigError("config: " + std::string(key) + " expects an integer, got '" + std::string(v) + "'");
    return out;
}

inline bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    throw ConfigError("config: " + std::string(key) + " expects true or false, got '" + std::string(v) + "'");
}

inline std::string unquote(std::string_view v) {
    if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front())
        v = v.substr(1, v.size() - 2);
    return std::string(v);
}

}  // namespace detail

/// Applies one setting. Unknown keys and malformed values throw ConfigError.
inline void set_option(RunConfig& cfg, std::string_view key, std::string_view raw) {
    using namespace detail;
    const std::string value = unquote(volcast::detail::trim(raw));
    try {
        if (key == "input") cfg.input = value;
        else if (key == "date_column") cfg.date_column = value;
        else if (key == "price_column") cfg.price_column = value;
        else if (key == "returns") {
            if (value != "log" && value != "literal_ratio")
                throw ConfigError("config: returns expects log or literal_ratio");
            cfg.literal_ratio = value == "literal_ratio";
        } else if (key == "families") {
            cfg.families.clear();
            for (const auto& f : split_list(value)) cfg.families.push_back(vol_family_from_string(f));
        } else if (key == "distributions") {
            cfg.distributions.clear();
            for (const auto& f : split_list(value)) cfg.distributions.push_back(family_from_string(f));
        } else if (key == "arma") {
            if (value == "auto") {
                cfg.arma.reset();
            } else {
                const auto parts = split_list(value);
                if (parts.size() != 2) throw ConfigError("config: arma expects auto or p,q");
                cfg.arma = ArmaSpec{parse_integer<int>(key, parts[0]), parse_integer<int>(key, parts[1]), true};
                cfg.arma->validate();
            }
        } else if (key == "arma_max_p") cfg.arma_max_p = parse_integer<int>(key, value);
        else if (key == "arma_max_q") cfg.arma_max_q = parse_integer<int>(key, value);
        else if (key == "include_constant") cfg.include_constant = parse_bool(key, value);
        else if (key == "aparch_doubled_power") cfg.aparch_doubled_power = parse_bool(key, value);
        else if (key == "robust_errors") cfg.robust_errors = parse_bool(key, value);
        else if (key == "scheme") cfg.scheme = scheme_from_string(value);
        else if (key == "test_length") cfg.test_length = parse_integer<std::size_t>(key, value);
        else if (key == "refit_every") cfg.refit_every = parse_integer<std::size_t>(key, value);
        else if (key == "proxy") cfg.proxy = proxy_from_string(value);
        else if (key == "window_length") {
            if (value == "auto") cfg.window_length.reset();
            else cfg.window_length = parse_integer<std::size_t>(key, value);
        } else if (key == "hac") cfg.hac = parse_bool(key, value);
        else if (key == "hac_lag") cfg.hac_lag = parse_integer<int>(key, value);
        else if (key == "out") cfg.out_dir = value;
        else if (key == "seed") cfg.seed = parse_integer<std::uint64_t>(key, value);
        else if (key == "threads") cfg.threads = parse_integer<unsigned>(key, value);
        else throw ConfigError("config: unknown key '" + std::string(key) + "'");
    } catch (const DomainError& e) {
        throw ConfigError("config: " + std::string(key) + ": " + e.what());
    }
}

/// Lines are `key = value`; `#` starts a comment; `[section]` headers are ignored.
inline void load_config(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view s = line;
        if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
        s = volcast::detail::trim(s);
        if (s.empty() || s.front() == '[') continue;
        const auto eq = s.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        try {
            set_option(cfg, volcast::detail::trim(s.substr(0, eq)), s.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

/// Families x distributions in configuration order. DCS pairs with GED/SGED are skipped.
inline std::vector<VolModelSpec> model_grid(const RunConfig& cfg, const ArmaSpec& mean) {
    std::vector<VolModelSpec> grid;
    for (VolFamily f : cfg.families) {
        for (Family d : cfg.distributions) {
            VolModelSpec s;
            s.family = f;
            s.distribution = DistributionSpec::defaults(d);
            s.mean = mean;
            s.aparch_doubled_power = cfg.aparch_doubled_power;
            try {
                s.validate();
            } catch (const DomainError&) {
                continue;
            }
            grid.push_back(s);
        }
    }
    return grid;
}

inline void validate(const RunConfig& cfg) {
    if (cfg.families.empty() || cfg.distributions.empty()) throw ConfigError("config: model grid is empty");
    const bool has_benchmark =
        std::find(cfg.families.begin(), cfg.families.end(), VolFamily::GARCH) != cfg.families.end() &&
        std::find(cfg.distributions.begin(), cfg.distributions.end(), Family::Normal) != cfg.distributions.end();
    if (!has_benchmark) throw ConfigError("config: the grid must contain the Gaussian GARCH benchmark (GARCH, norm)");
    if (cfg.arma_max_p < 0 || cfg.arma_max_q < 0 || cfg.arma_max_p > kMaxArmaOrder || cfg.arma_max_q > kMaxArmaOrder)
        throw ConfigError("config: arma_max_p and arma_max_q must lie in 0.." + std::to_string(kMaxArmaOrder));
    if (cfg.test_length < 1) throw ConfigError("config: test_length must be at least 1");
    if (cfg.refit_every < 1) throw ConfigError("config: refit_every must be at least 1");
}

}  // namespace volcast::cli
