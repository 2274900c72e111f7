#include "pipeline.hpp"

#include "volcast/vol_models.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <iostream>

namespace {

using namespace volcast;
using namespace volcast::cli;

struct Overrides {
    std::string config;
    std::vector<std::pair<std::string, std::string>> values;
};

void add_run_options(CLI::App* sub, Overrides& ov) {
    sub->add_option("--config", ov.config, "key = value configuration file");
    struct Flag {
        const char* flag;
        const char* key;
        const char* help;
    };
    static const Flag flags[] = {
        {"--input", "input", "price CSV (header row, comma separated, ISO dates)"},
        {"--date-col", "date_column", "date column name"},
        {"--price-col", "price_column", "price column name"},
        {"--families", "families", "comma list of GARCH, GJR, TGARCH, EGARCH, IGARCH, APARCH, DCS"},
        {"--distributions", "distributions", "comma list of norm, snorm, std, sstd, ged, sged"},
        {"--arma", "arma", "auto or p,q"},
        {"--seed", "seed", "seed recorded in the report"},
        {"--out", "out", "output directory"},
        {"--scheme", "scheme", "rolling or recursive"},
        {"--test-length", "test_length", "number of one-step forecasts"},
        {"--refit-every", "refit_every", "re-estimate every N forecast dates"},
        {"--window-length", "window_length", "rolling window length or auto"},
        {"--proxy", "proxy", "abs or squared"},
        {"--threads", "threads", "worker count (0 = machine parallelism)"},
    };
    for (const auto& f : flags) {
        sub->add_option_function<std::string>(
            f.flag, [&ov, key = std::string(f.key)](const std::string& v) { ov.values.emplace_back(key, v); },
            f.help);
    }
    sub->add_flag_callback("--literal-ratio", [&ov]() { ov.values.emplace_back("returns", "literal_ratio"); },
                           "use ln P_t / ln P_{t-1} instead of log returns");
    sub->add_flag_callback("--hac", [&ov]() { ov.values.emplace_back("hac", "true"); },
                           "Bartlett long-run variance in the DM test");
}

int run_command(Stage stage, const Overrides& ov) {
    try {
        RunConfig cfg;
        if (!ov.config.empty()) load_config(cfg, ov.config);
        for (const auto& [k, v] : ov.values) set_option(cfg, k, v);
        const RunResult res = run(cfg, stage, std::cerr);
        for (const auto& f : res.failures)
            std::cerr << "failure [" << f.stage << (f.model.empty() ? "" : " " + f.model) << "]: " << f.message << "\n";
        for (const auto& f : res.files) std::cout << f << "\n";
        return res.exit_code();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

struct SimulateOptions {
    std::string output;
    std::size_t n = 1500;
    std::string family = "GARCH";
    std::string distribution = "norm";
    double omega = 0.05;
    double alpha = 0.10;
    double beta = 0.85;
    std::optional<double> gamma;
    std::optional<double> delta;
    std::optional<double> lambda;
    std::optional<double> shape;
    std::optional<double> skew;
    std::uint64_t seed = 1;
    double start_price = 100.0;
    std::string start_date = "2014-01-01";
};

std::string iso_date(std::chrono::sys_days d) {
    const std::chrono::year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

int simulate_command(const SimulateOptions& o) {
    try {
        VolModelSpec spec;
        spec.family = vol_family_from_string(o.family);
        spec.distribution = DistributionSpec::defaults(family_from_string(o.distribution));
        if (o.shape) spec.distribution.shape = o.shape;
        if (o.skew) spec.distribution.skew = o.skew;
        spec.validate();
        VolParams p{o.omega, o.alpha, o.beta, o.gamma, o.delta, o.lambda};
        if (spec.family == VolFamily::IGARCH) p.beta = 1.0 - p.alpha;
        if (needs_gamma(spec.family) && !p.gamma) p.gamma = 0.0;
        if (needs_power(spec.family)) {
            if (!p.delta) p.delta = 2.0;
            if (!p.lambda) p.lambda = 0.0;
        }
        validate_params(spec.family, p);

        const int y = std::stoi(o.start_date.substr(0, 4));
        const unsigned m = static_cast<unsigned>(std::stoi(o.start_date.substr(5, 2)));
        const unsigned d = static_cast<unsigned>(std::stoi(o.start_date.substr(8, 2)));
        const std::chrono::year_month_day start{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
        if (o.start_date.size() != 10 || !start.ok()) throw DomainError("start date must be YYYY-MM-DD");
        if (!(o.start_price > 0.0)) throw DomainError("start price must be positive");

        const auto path = simulate(spec, p, o.n, o.seed);
        std::ofstream out(o.output);
        if (!out) throw DomainError("cannot write " + o.output);
        std::chrono::sys_days day{start};
        double log_price = std::log(o.start_price);
        char buf[40];
        out << "date,price\n";
        std::snprintf(buf, sizeof buf, "%.17g", o.start_price);
        out << iso_date(day) << ',' << buf << '\n';
        for (double r : path.returns) {
            day += std::chrono::days{1};
            log_price += r;
            std::snprintf(buf, sizeof buf, "%.17g", std::exp(log_price));
            out << iso_date(day) << ',' << buf << '\n';
        }
        std::cout << o.output << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GARCH-family volatility model fitting and forecast backtesting"};
    app.require_subcommand(1);

    const std::pair<const char*, Stage> commands[] = {
        {"describe", Stage::Describe},
        {"select-arma", Stage::SelectArma},
        {"fit", Stage::Fit},
        {"backtest", Stage::Backtest},
    };
    const char* help[] = {
        "descriptive statistics and Jarque-Bera test",
        "AIC selection of the ARMA mean",
        "fit every model of the grid on the full sample",
        "fit, then rolling or recursive one-step forecast comparison",
    };
    std::vector<Overrides> overrides(std::size(commands));
    std::vector<CLI::App*> subs;
    for (std::size_t i = 0; i < std::size(commands); ++i) {
        subs.push_back(app.add_subcommand(commands[i].first, help[i]));
        add_run_options(subs.back(), overrides[i]);
    }

    SimulateOptions sim;
    auto* s = app.add_subcommand("simulate", "write a simulated price CSV");
    s->add_option("--output,-o", sim.output, "CSV path")->required();
    s->add_option("--n", sim.n, "number of returns");
    s->add_option("--family", sim.family, "volatility family");
    s->add_option("--distribution", sim.distribution, "innovation family");
    s->add_option("--omega", sim.omega);
    s->add_option("--alpha", sim.alpha);
    s->add_option("--beta", sim.beta);
    s->add_option("--gamma", sim.gamma);
    s->add_option("--delta", sim.delta);
    s->add_option("--lambda", sim.lambda);
    s->add_option("--shape", sim.shape, "degrees of freedom or GED exponent");
    s->add_option("--skew", sim.skew, "SGED lambda or skew factor xi");
    s->add_option("--seed", sim.seed);
    s->add_option("--start-price", sim.start_price);
    s->add_option("--start-date", sim.start_date);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    if (s->parsed()) return simulate_command(sim);
    for (std::size_t i = 0; i < subs.size(); ++i)
        if (subs[i]->parsed()) return run_command(commands[i].second, overrides[i]);
    return 2;
}
