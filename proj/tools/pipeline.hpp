#pragma once

// Orchestration of describe / select-arma / fit / backtest and report emission.

#include "run_config.hpp"

#include "volcast/arma.hpp"
#include "volcast/backtest.hpp"
#include "volcast/estimation.hpp"
#include "volcast/evaluation.hpp"
#include "volcast/series.hpp"

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>
#include <thread>

namespace volcast::cli {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

enum class Stage { Describe = 0, SelectArma = 1, Fit = 2, Backtest = 3 };

inline std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::Describe: return "describe";
        case Stage::SelectArma: return "select-arma";
        case Stage::Fit: return "fit";
        case Stage::Backtest: return "backtest";
    }
    return "?";
}

/// Input file missing or malformed; reported like a configuration error.
class InputError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct Failure {
    std::string stage;
    std::string model;
    std::string message;
};

struct RunResult {
    Json report;
    std::vector<Failure> failures;
    std::vector<std::string> files;
    [[nodiscard]] int exit_code() const { return failures.empty() ? 0 : 1; }
};

inline unsigned resolve_threads(unsigned requested) {
    unsigned n = requested != 0 ? requested : std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("VOLCAST_THREADS")) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && cap >= 1) n = std::min(n, static_cast<unsigned>(cap));
    }
    return n;
}

/// Calls fn(i) for i in [0, count) on up to `threads` workers.
inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn) {
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < count; i = next++) fn(i);
    };
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
    if (threads <= 1) {
        worker();
        return;
    }
    std::vector<std::jthread> pool;
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
}

/// Ten significant digits; non-finite values as NA.
inline std::string fmt10(double v) {
    if (!std::isfinite(v)) return "NA";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

namespace detail {

inline std::string csv_field(std::string_view v) {
    if (v.find_first_of(",\"\n") == std::string_view::npos) return std::string(v);
    std::string out = "\"";
    for (char c : v) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

inline Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json optional_number(const std::optional<double>& v) { return v ? number_or_null(*v) : Json(nullptr); }

inline Json config_json(const RunConfig& cfg, Stage stage) {
    Json j;
    j["command"] = to_string(stage);
    j["input"] = cfg.input;
    j["date_column"] = cfg.date_column;
    j["price_column"] = cfg.price_column;
    j["returns"] = cfg.literal_ratio ? "literal_ratio" : "log";
    Json fam = Json::array();
    for (VolFamily f : cfg.families) fam.push_back(std::string(volcast::to_string(f)));
    j["families"] = fam;
    Json dist = Json::array();
    for (Family d : cfg.distributions) dist.push_back(std::string(volcast::to_string(d)));
    j["distributions"] = dist;
    j["arma"] = cfg.arma ? Json(std::to_string(cfg.arma->p) + "," + std::to_string(cfg.arma->q)) : Json("auto");
    j["arma_max_p"] = cfg.arma_max_p;
    j["arma_max_q"] = cfg.arma_max_q;
    j["include_constant"] = cfg.include_constant;
    j["aparch_doubled_power"] = cfg.aparch_doubled_power;
    j["robust_errors"] = cfg.robust_errors;
    j["scheme"] = volcast::to_string(cfg.scheme);
    j["test_length"] = cfg.test_length;
    j["refit_every"] = cfg.refit_every;
    j["proxy"] = volcast::to_string(cfg.proxy);
    j["window_length"] = cfg.window_length ? Json(*cfg.window_length) : Json("auto");
    j["hac"] = cfg.hac;
    j["hac_lag"] = cfg.hac_lag;
    j["seed"] = cfg.seed;
    return j;
}

inline Json describe_json(const Descriptive& d) {
    Json j;
    j["n"] = d.n;
    j["mean"] = number_or_null(d.mean);
    j["stdev"] = number_or_null(d.stdev);
    j["skewness"] = number_or_null(d.skewness);
    j["kurtosis"] = number_or_null(d.kurtosis);
    j["excess_kurtosis"] = number_or_null(d.excess_kurtosis);
    j["degenerate"] = d.degenerate;
    return j;
}

inline Json fit_json(const FitResult& f, const std::string& qq_file) {
    Json j;
    j["model"] = f.spec.name();
    j["status"] = "ok";
    j["family"] = volcast::to_string(f.spec.family);
    j["distribution"] = volcast::to_string(f.spec.distribution.family);
    j["mean"] = f.spec.mean.name();
    j["converged"] = f.converged;
    j["iterations"] = f.iterations;
    j["n_obs"] = f.n_obs();
    j["n_params"] = f.n_params();
    j["loglik"] = number_or_null(f.loglik);
    j["aic"] = number_or_null(f.aic);
    j["bic"] = number_or_null(f.bic);
    j["gradient_max_abs"] = number_or_null(f.gradient_max_abs);
    j["gradient_bound"] = number_or_null(f.gradient_bound);
    j["std_error_note"] = f.std_error_note;
    Json params = Json::array();
    for (std::size_t i = 0; i < f.estimates.size(); ++i) {
        Json p;
        p["name"] = f.param_names[i];
        p["estimate"] = number_or_null(f.estimates[i]);
        if (i < f.std_errors.size() && std::isfinite(f.std_errors[i]) && f.std_errors[i] > 0.0) {
            const double z = f.estimates[i] / f.std_errors[i];
            const double pv = normal_two_sided_p(z);
            p["std_error"] = f.std_errors[i];
            p["t_stat"] = number_or_null(z);
            p["p_value"] = number_or_null(pv);
            p["stars"] = significance_stars(pv);
        } else {
            p["std_error"] = nullptr;
            p["t_stat"] = nullptr;
            p["p_value"] = nullptr;
            p["stars"] = "";
        }
        params.push_back(std::move(p));
    }
    j["params"] = std::move(params);
    j["qq_file"] = qq_file;
    return j;
}

inline Json dm_json(const DmOutcome& o) {
    Json j;
    if (o.result) {
        j["statistic"] = number_or_null(o.result->statistic);
        j["p_value"] = number_or_null(o.result->p_value);
        j["stars"] = significance_stars(o.result->p_value);
        j["error"] = nullptr;
    } else {
        j["statistic"] = nullptr;
        j["p_value"] = nullptr;
        j["stars"] = "";
        j["error"] = o.error;
    }
    return j;
}

inline Json backtest_json(const BacktestReport& rep, const std::vector<std::string>& dates) {
    Json j;
    j["scheme"] = volcast::to_string(rep.scheme);
    j["proxy"] = volcast::to_string(rep.proxy);
    j["test_length"] = rep.test_length;
    j["refit_every"] = rep.refit_every;
    j["first_test_index"] = rep.first_test_index;
    j["benchmark"] = rep.models[rep.benchmark_index].name;
    Json d = Json::array();
    for (std::size_t k = 0; k < rep.test_length; ++k) d.push_back(dates[rep.first_test_index + k]);
    j["dates"] = std::move(d);
    j["realized"] = rep.realized;
    Json models = Json::array();
    for (const auto& m : rep.models) {
        Json mj;
        mj["model"] = m.name;
        mj["benchmark"] = m.benchmark;
        mj["status"] = m.ok() ? "ok" : "failed";
        mj["failure"] = m.failure;
        if (m.ok()) {
            mj["losses"] = {{"mse", m.losses.mse}, {"mae", m.losses.mae}, {"rmse", m.losses.rmse}};
        } else {
            mj["losses"] = nullptr;
        }
        Json dm = Json::object();
        if (m.dm_mse) dm["MSE"] = dm_json(*m.dm_mse);
        if (m.dm_mae) dm["MAE"] = dm_json(*m.dm_mae);
        mj["dm_vs_benchmark"] = m.benchmark ? Json(nullptr) : dm;
        std::size_t refits = 0;
        std::size_t fallbacks = 0;
        std::size_t unconverged = 0;
        for (const auto& w : m.fit_trail) {
            refits += w.refit ? 1 : 0;
            fallbacks += w.fallback ? 1 : 0;
            unconverged += w.refit && !w.fallback && !w.converged ? 1 : 0;
        }
        mj["refits"] = refits;
        mj["fallbacks"] = fallbacks;
        mj["unconverged_refits"] = unconverged;
        Json sig = Json::array();
        for (double s : m.forecast_sigma) sig.push_back(number_or_null(s));
        mj["forecast_sigma"] = std::move(sig);
        models.push_back(std::move(mj));
    }
    j["models"] = std::move(models);
    Json pw = Json::array();
    for (const auto& p : rep.pairwise) {
        Json e;
        e["model_a"] = rep.models[p.a].name;
        e["model_b"] = rep.models[p.b].name;
        e["loss"] = volcast::to_string(p.loss);
        const Json dm = dm_json(p.outcome);
        for (const auto& [k, v] : dm.items()) e[k] = v;
        pw.push_back(std::move(e));
    }
    j["pairwise_dm"] = std::move(pw);
    return j;
}

inline Json ranking_json(const BacktestReport& rep) {
    Json j;
    for (LossKind k : {LossKind::MSE, LossKind::MAE, LossKind::RMSE}) {
        Json list = Json::array();
        std::size_t rank = 1;
        for (const auto& e : rank_models(rep, k)) {
            Json r;
            r["rank"] = rank++;
            r["model"] = e.name;
            r["loss"] = number_or_null(e.loss);
            r["benchmark"] = e.benchmark;
            r["dm_statistic"] = optional_number(e.dm_statistic);
            r["stars"] = e.stars;
            list.push_back(std::move(r));
        }
        j[std::string(volcast::to_string(k))] = std::move(list);
    }
    j["tie_break"] = "equal losses are ordered by model name, then grid position";
    return j;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << text;
    if (!out) throw InputError("write failed for " + path.string());
}

inline std::string fits_csv(const std::vector<std::optional<FitResult>>& fits) {
    std::ostringstream s;
    s << "model,family,distribution,mean,parameter,estimate,robust_se,t_stat,p_value,stars,loglik,aic,bic,converged\n";
    for (const auto& f : fits) {
        if (!f) continue;
        for (std::size_t i = 0; i < f->estimates.size(); ++i) {
            const bool has_se = i < f->std_errors.size() && f->std_errors[i] > 0.0;
            const double se = has_se ? f->std_errors[i] : NAN;
            const double z = f->estimates[i] / se;
            const double pv = has_se ? normal_two_sided_p(z) : NAN;
            s << f->spec.name() << ',' << volcast::to_string(f->spec.family) << ','
              << volcast::to_string(f->spec.distribution.family) << ',' << csv_field(f->spec.mean.name()) << ','
              << f->param_names[i] << ',' << fmt10(f->estimates[i]) << ',' << fmt10(se) << ',' << fmt10(z) << ','
              << fmt10(pv) << ',' << (has_se ? significance_stars(pv) : "") << ',' << fmt10(f->loglik) << ','
              << fmt10(f->aic) << ',' << fmt10(f->bic) << ',' << (f->converged ? "true" : "false") << '\n';
        }
    }
    return s.str();
}

inline std::string losses_csv(const BacktestReport& rep) {
    std::ostringstream s;
    s << "model,benchmark,status,mse,mae,rmse,dm_mse,p_mse,stars_mse,dm_mae,p_mae,stars_mae\n";
    auto dm_cols = [](const std::optional<DmOutcome>& o) {
        if (!o || !o->result) return std::string("NA,NA,");
        return fmt10(o->result->statistic) + ',' + fmt10(o->result->p_value) + ',' +
               significance_stars(o->result->p_value);
    };
    for (const auto& m : rep.models) {
        s << m.name << ',' << (m.benchmark ? "true" : "false") << ',' << (m.ok() ? "ok" : "failed") << ',';
        if (m.ok())
            s << fmt10(m.losses.mse) << ',' << fmt10(m.losses.mae) << ',' << fmt10(m.losses.rmse) << ',';
        else
            s << "NA,NA,NA,";
        s << dm_cols(m.dm_mse) << ',' << dm_cols(m.dm_mae) << '\n';
    }
    return s.str();
}

inline std::string dm_matrix_csv(const BacktestReport& rep) {
    std::ostringstream s;
    s << "loss,model_a,model_b,statistic,p_value,stars,note\n";
    for (const auto& p : rep.pairwise) {
        s << volcast::to_string(p.loss) << ',' << rep.models[p.a].name << ',' << rep.models[p.b].name << ',';
        if (p.outcome.result)
            s << fmt10(p.outcome.result->statistic) << ',' << fmt10(p.outcome.result->p_value) << ','
              << significance_stars(p.outcome.result->p_value) << ",\n";
        else
            s << "NA,NA,," << csv_field(p.outcome.error) << '\n';
    }
    return s.str();
}

inline std::string qq_csv(const std::vector<QqPoint>& qq) {
    std::ostringstream s;
    s << "theoretical,empirical\n";
    for (const auto& p : qq) s << fmt10(p.theoretical) << ',' << fmt10(p.empirical) << '\n';
    return s.str();
}

}  // namespace detail

/// Runs every stage up to `stage` on the configured input. Input and
/// configuration problems throw ConfigError or InputError; failures of
/// individual stages or models are collected and the remaining work continues.
inline RunResult run(const RunConfig& cfg, Stage stage, std::ostream& log) {
    validate(cfg);
    namespace fs = std::filesystem;
    if (cfg.input.empty()) throw ConfigError("no input file given (--input or input = ...)");

    ReturnSeries series;
    std::size_t n_prices = 0;
    try {
        const PriceSeries prices = load_prices(cfg.input, cfg.date_column, cfg.price_column);
        n_prices = prices.prices.size();
        series = to_returns(prices, cfg.literal_ratio, cfg.input);
    } catch (const DataError& e) {
        throw InputError(e.what());
    } catch (const DomainError& e) {
        throw InputError(cfg.input + ": " + e.what());
    }
    const std::span<const double> y = series.returns;
    const unsigned threads = resolve_threads(cfg.threads);

    RunResult res;
    Json& rep = res.report;
    rep["schema_version"] = kSchemaVersion;
    rep["config"] = detail::config_json(cfg, stage);
    rep["data"] = {{"source", series.source_label},
                   {"n_prices", n_prices},
                   {"n_returns", y.size()},
                   {"first_date", series.dates.front()},
                   {"last_date", series.dates.back()}};
    auto fail = [&res](std::string st, std::string model, std::string msg) {
        res.failures.push_back({std::move(st), std::move(model), std::move(msg)});
    };

    log << "describe: " << y.size() << " returns\n";
    try {
        rep["descriptive"] = detail::describe_json(describe(y));
    } catch (const std::exception& e) {
        rep["descriptive"] = nullptr;
        fail("describe", "", e.what());
    }
    try {
        const auto jb = jarque_bera(y);
        rep["jarque_bera"] = {{"statistic", detail::number_or_null(jb.statistic)},
                              {"p_value", detail::number_or_null(jb.p_value)},
                              {"stars", significance_stars(jb.p_value)}};
    } catch (const std::exception& e) {
        rep["jarque_bera"] = nullptr;
        fail("jarque_bera", "", e.what());
    }

    ArmaSpec mean{0, 0, cfg.include_constant};
    rep["mean_model"] = nullptr;
    if (stage >= Stage::SelectArma) {
        Json mm;
        if (cfg.arma) {
            mean = *cfg.arma;
            mean.include_constant = cfg.include_constant;
            mm["method"] = "fixed";
        } else {
            mm["method"] = "aic";
            log << "select-arma: grid up to (" << cfg.arma_max_p << "," << cfg.arma_max_q << ")\n";
            try {
                const auto sel = select_arma(y, cfg.arma_max_p, cfg.arma_max_q, cfg.include_constant);
                mean = sel.best;
                Json cands = Json::array();
                for (const auto& f : sel.fits)
                    cands.push_back({{"name", f.spec.name()}, {"p", f.spec.p}, {"q", f.spec.q},
                                     {"aic", detail::number_or_null(f.aic)}});
                mm["candidates"] = std::move(cands);
                mm["rejected"] = sel.failures;
            } catch (const std::exception& e) {
                fail("select-arma", "", std::string(e.what()) + "; using a constant mean");
            }
        }
        mm["selected"] = mean.name();
        mm["p"] = mean.p;
        mm["q"] = mean.q;
        mm["include_constant"] = mean.include_constant;
        rep["mean_model"] = std::move(mm);
    }

    const std::vector<VolModelSpec> grid = model_grid(cfg, mean);
    BacktestConfig bc;
    bc.scheme = cfg.scheme;
    bc.test_length = cfg.test_length;
    bc.refit_every = cfg.refit_every;
    bc.models = grid;
    bc.benchmark = gaussian_garch();
    bc.benchmark.mean = mean;
    bc.proxy = cfg.proxy;
    bc.window_length = cfg.window_length;
    bc.dm = DmOptions{cfg.hac, cfg.hac_lag};
    bc.threads = threads;
    if (stage >= Stage::Backtest) {
        try {
            validate_backtest_config(bc, y.size());
        } catch (const DomainError& e) {
            throw ConfigError(e.what());
        }
    }

    const fs::path out_dir(cfg.out_dir);
    std::vector<std::pair<std::string, std::string>> files;  // name, content

    rep["fits"] = Json::array();
    if (stage >= Stage::Fit) {
        log << "fit: " << grid.size() << " models on " << threads << " worker(s)\n";
        std::vector<std::optional<FitResult>> fits(grid.size());
        std::vector<std::string> errors(grid.size());
        FitOptions opt;
        opt.robust_errors = cfg.robust_errors;
        parallel_for(grid.size(), threads, [&](std::size_t i) {
            try {
                fits[i] = fit(y, grid[i], opt);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        });
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const std::string name = grid[i].name();
            if (!fits[i]) {
                fail("fit", name, errors[i]);
                rep["fits"].push_back({{"model", name}, {"status", "failed"}, {"error", errors[i]}});
                continue;
            }
            std::string qq_name = "qq_" + name + ".csv";
            try {
                files.emplace_back(qq_name, detail::qq_csv(qq_data(*fits[i])));
            } catch (const std::exception& e) {
                fail("qq", name, e.what());
                qq_name.clear();
            }
            rep["fits"].push_back(detail::fit_json(*fits[i], qq_name));
        }
        files.emplace_back("fits.csv", detail::fits_csv(fits));
    }

    rep["backtest"] = nullptr;
    rep["ranking"] = nullptr;
    if (stage >= Stage::Backtest) {
        log << "backtest: " << grid.size() << " models, " << volcast::to_string(cfg.scheme) << ", test_length "
            << cfg.test_length << ", refit_every " << cfg.refit_every << "\n";
        const BacktestReport bt = run_backtest(y, bc);
        for (const auto& m : bt.models)
            if (!m.ok()) fail("backtest", m.name, m.failure);
        rep["backtest"] = detail::backtest_json(bt, series.dates);
        rep["ranking"] = detail::ranking_json(bt);
        files.emplace_back("losses.csv", detail::losses_csv(bt));
        files.emplace_back("dm_matrix.csv", detail::dm_matrix_csv(bt));
    }

    Json fl = Json::array();
    for (const auto& f : res.failures) fl.push_back({{"stage", f.stage}, {"model", f.model}, {"message", f.message}});
    rep["failures"] = std::move(fl);
    std::vector<std::string> names{"report.json"};
    for (const auto& [name, _] : files) names.push_back(name);
    std::sort(names.begin(), names.end());
    rep["files"] = names;

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw InputError("cannot create output directory " + out_dir.string() + ": " + ec.message());
    for (const auto& [name, content] : files) detail::write_text(out_dir / name, content);
    detail::write_text(out_dir / "report.json", rep.dump(2) + "\n");
    for (const auto& n : names) res.files.push_back((out_dir / n).string());
    return res;
}

}  // namespace volcast::cli
