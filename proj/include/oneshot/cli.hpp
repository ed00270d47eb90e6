#pragma once

// Command-line front end: calibrate, series, simulate, bounds.
//
// Every subcommand parses its arguments, calls the library, and formats CSV.
// Numbers are printed with 12 significant digits, infinite values as `inf`,
// lines end in LF. Exit codes: 0 success, 2 invalid input, 3 a solver or
// series that did not converge.

#include <oneshot/calibration.hpp>
#include <oneshot/errors.hpp>
#include <oneshot/fusion.hpp>
#include <oneshot/model.hpp>
#include <oneshot/spectral.hpp>

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace oneshot::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 2;
inline constexpr int kExitNoConvergence = 3;

/// %.12g formatting; `inf`, `-inf` and `nan` for non-finite values.
inline std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

/// Strict decimal parse; accepts `inf`.
inline double parse_number(std::string_view text, std::string_view what) {
    double v = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    while (first < last && *first == ' ') ++first;
    while (last > first && last[-1] == ' ') --last;
    if (first < last && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    detail::require(ec == std::errc{} && ptr == last && first != last && !std::isnan(v),
                    std::string(what) + ": cannot parse '" + std::string(text) + "' as a number");
    return v;
}

inline std::vector<double> parse_list(const std::string& text, std::string_view what) {
    std::vector<double> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = text.find(',', start);
        out.push_back(parse_number(std::string_view(text).substr(start, comma - start), what));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

/// Flat `key = value` file with `#` comments. Keys use the long flag names;
/// underscores are accepted in place of dashes.
inline std::map<std::string, std::string> read_config(const std::string& path) {
    std::ifstream in(path);
    detail::require(static_cast<bool>(in), "cannot open config file '" + path + "'");
    static const std::map<std::string, std::string> aliases = {
        {"n-sensors", "sensors"}, {"change-points", "tau"}, {"output", "out"}};
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::map<std::string, std::string> values;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        detail::require(eq != std::string::npos,
                        path + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        for (auto& c : key) c = c == '_' ? '-' : c;
        if (const auto a = aliases.find(key); a != aliases.end()) key = a->second;
        detail::require(!key.empty(), path + ":" + std::to_string(lineno) + ": empty key");
        values[key] = trim(line.substr(eq + 1));
    }
    return values;
}

struct GlobalOptions {
    std::string out;
    double tol = 1e-8;
    std::uint64_t seed = 0;
    std::string config;
};

struct CalibrateArgs {
    double mu = 1.0;
    double gamma = 0.0;
    int sensors = 1;
};

struct SeriesArgs {
    double mu = 1.0;
    std::string h;
    std::string which = "both";
    std::size_t k_roots = 0;
};

struct SimulateArgs {
    std::string mu = "1";
    std::string tau;
    double h = 0.0;
    std::int64_t reps = 1000;
    double dt = 1e-3;
    double horizon = 0.0;  // 0 selects default_horizon
    unsigned threads = 0;
    std::string per_rep;
};

struct BoundsArgs {
    double mu = 1.0;
    int sensors = 2;
    std::string gamma_grid = "1e2:1e6:50log";
};

namespace detail {

using oneshot::detail::require;

// Value of the asymptotic expansions where they are defined, nan elsewhere.
inline double or_nan(double (*fn)(double, double, int), double mu, double gamma, int n) {
    try {
        return fn(mu, gamma, n);
    } catch (const DomainError&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

inline std::string csv_row(std::initializer_list<std::string> cells) {
    std::string row;
    bool first = true;
    for (const auto& c : cells) {
        if (!first) row += ',';
        row += c;
        first = false;
    }
    row += '\n';
    return row;
}

inline std::string cmd_calibrate(const CalibrateArgs& a, const GlobalOptions& g, std::ostream& err) {
    require(a.sensors >= 1, "--sensors must be >= 1");
    CalibrationOptions opt;
    opt.series.tol = g.tol;
    const Calibration c = calibrate(a.mu, a.gamma, a.sensors, opt);
    const double delay_single = detection_delay_single(a.mu, c.nu);
    const double delay_multi = multichart_delay(a.mu, c.h, a.sensors, opt.series);
    if (a.sensors > 2) err << "note: N > 2 uses the leading-term approximation for h and the multi-chart delay\n";
    std::string s = "mu,gamma,sensors,nu,h,delay_single,delay_multichart,asymptotic_single,"
                    "asymptotic_multichart,gap,gap_bound\n";
    s += csv_row({format_number(a.mu), format_number(a.gamma), std::to_string(a.sensors), format_number(c.nu),
                  format_number(c.h), format_number(delay_single), format_number(delay_multi),
                  format_number(or_nan(asymptotic_upper, a.mu, a.gamma, 1)),
                  format_number(or_nan(asymptotic_upper, a.mu, a.gamma, a.sensors)),
                  format_number(delay_multi - delay_single), format_number(gap_bound(a.mu, a.sensors))});
    return s;
}

inline std::vector<double> parse_h_values(const std::string& text) {
    require(!text.empty(), "--h is required");
    if (text.find(':') != std::string::npos) return parse_grid(text);
    return parse_list(text, "--h");
}

inline std::string cmd_series(const SeriesArgs& a, const GlobalOptions& g) {
    require(a.which == "e0" || a.which == "einf" || a.which == "both", "--which must be e0, einf or both");
    spectral::SeriesOptions opt;
    opt.tol = g.tol;
    opt.k_start = a.k_roots;
    const bool e0 = a.which != "einf";
    const bool einf = a.which != "e0";
    std::string s = "h";
    if (e0) s += ",S1,S2,S3,e0_total,e0_truncation_estimate";
    if (einf) s += ",S4,S5,S6,einf_total,einf_truncation_estimate";
    s += ",k_used\n";
    for (double h : parse_h_values(a.h)) {
        std::string row = format_number(h);
        std::size_t k_used = 0;
        auto emit = [&](const spectral::SeriesValue& v) {
            for (double t : v.terms) row += "," + format_number(t);
            row += "," + format_number(v.total) + "," + format_number(v.truncation_error_estimate);
            k_used = std::max(k_used, v.k_used);
        };
        if (e0) emit(spectral::e0_inf_series(a.mu, h, opt));
        if (einf) emit(spectral::einf_inf_series(a.mu, h, opt));
        s += row + "," + std::to_string(k_used) + "\n";
    }
    return s;
}

inline std::string cmd_simulate(const SimulateArgs& a, const GlobalOptions& g) {
    require(!a.tau.empty(), "--tau is required (one change point per sensor, e.g. 0,inf)");
    const Scenario scenario(parse_list(a.tau, "--tau"));
    const std::vector<double> mus = parse_list(a.mu, "--mu");
    const std::size_t n = scenario.size();
    require(mus.size() == 1 || mus.size() == n, "--mu must be one value or one per sensor");
    std::vector<SensorModel> sensors;
    for (std::size_t i = 0; i < n; ++i) sensors.push_back({static_cast<int>(i) + 1, mus.size() == 1 ? mus[0] : mus[i]});
    validate_network(sensors);
    require(std::isfinite(a.h) && a.h > 0.0, "--h must be positive");
    require(a.reps >= 100, "--reps must be >= 100");

    require(a.horizon >= 0.0, "--horizon must be positive (or 0 for automatic)");
    PathConfig cfg;
    cfg.dt = a.dt;
    cfg.seed = g.seed;
    cfg.horizon = a.horizon > 0.0 ? a.horizon : default_horizon(sensors, scenario, a.h);
    const auto decisions = simulate_replications(sensors, scenario, a.h, cfg, a.reps, a.threads);
    const McEstimate est = summarize(decisions);

    if (!a.per_rep.empty()) {
        std::string rows = "rep,time,first_sensor,censored\n";
        for (std::size_t r = 0; r < decisions.size(); ++r) {
            const auto& d = decisions[r];
            rows += csv_row({std::to_string(r), format_number(d.time),
                             d.first_sensor ? std::to_string(*d.first_sensor) : std::string(),
                             d.censored ? "1" : "0"});
        }
        std::ofstream f(a.per_rep, std::ios::binary);
        require(static_cast<bool>(f), "cannot open per-rep file '" + a.per_rep + "'");
        f << rows;
        require(static_cast<bool>(f), "failed writing per-rep file '" + a.per_rep + "'");
    }
    std::string s = "estimate,std_error,n_effective,n_censored,dt,horizon\n";
    s += csv_row({format_number(est.mean), format_number(est.std_error), std::to_string(est.n_effective),
                  std::to_string(est.n_censored), format_number(cfg.dt), format_number(cfg.horizon)});
    return s;
}

inline std::string cmd_bounds(const BoundsArgs& a, const GlobalOptions& g, std::ostream& err) {
    CalibrationOptions opt;
    opt.series.tol = g.tol;
    const auto grid = parse_grid(a.gamma_grid);
    const auto rows = bounds_table(a.mu, a.sensors, grid, opt);
    if (a.sensors > 2) err << "note: N > 2 rows use the leading-term approximation for the upper bound\n";
    std::string s = "gamma,upper,lower,gap\n";
    for (const auto& r : rows) {
        s += csv_row({format_number(r.gamma), format_number(r.upper), format_number(r.lower), format_number(r.gap)});
    }
    return s;
}

// Fills options that were not given on the command line from the config file.
inline void apply_config(CLI::App& app, CLI::App& sub, const std::vector<CLI::App*>& all_subs,
                         const std::map<std::string, std::string>& values) {
    for (const auto& [key, value] : values) {
        CLI::Option* opt = sub.get_option_no_throw("--" + key);
        if (opt == nullptr) opt = app.get_option_no_throw("--" + key);
        if (opt == nullptr) {
            // Keys that belong to another subcommand are allowed in a shared file.
            bool known = false;
            for (const CLI::App* other : all_subs) {
                known = known || other->get_option_no_throw("--" + key) != nullptr;
            }
            require(known, "unknown config key '" + key + "'");
            continue;
        }
        if (opt->count() > 0 || key == "config") continue;
        opt->add_result(value);
        opt->run_callback();
    }
}

}  // namespace detail

/// Runs the CLI on `args` (args[0] is the program name).
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"One-shot decentralized CUSUM: calibration, series, simulation, bounds"};
    app.require_subcommand(1);
    GlobalOptions g;
    app.add_option("--out", g.out, "Write CSV to this file instead of stdout");
    app.add_option("--tol", g.tol, "Absolute tolerance per series term")->capture_default_str();
    app.add_option("--seed", g.seed, "Base seed for the noise streams")->capture_default_str();
    app.add_option("--config", g.config, "key = value file; command-line flags take precedence");

    CalibrateArgs ca;
    auto* calibrate_cmd = app.add_subcommand("calibrate", "Thresholds nu and h for a false-alarm target gamma");
    calibrate_cmd->set_help_flag("--help", "Print this help message and exit");
    calibrate_cmd->add_option("--mu", ca.mu, "Post-change drift")->capture_default_str();
    calibrate_cmd->add_option("--gamma", ca.gamma, "Mean time between false alarms");
    calibrate_cmd->add_option("--sensors", ca.sensors, "Number of sensors N")->capture_default_str();

    SeriesArgs sa;
    auto* series_cmd = app.add_subcommand("series", "Exact N = 2 expectations as S-term series");
    series_cmd->set_help_flag("--help", "Print this help message and exit");
    series_cmd->add_option("--mu", sa.mu, "Post-change drift")->capture_default_str();
    series_cmd->add_option("--h", sa.h, "Threshold: a value, a list a,b,c or a grid A:B:Nlin|Nlog");
    series_cmd->add_option("--which", sa.which, "e0, einf or both")->capture_default_str();
    series_cmd->add_option("--k-roots", sa.k_roots, "Initial root count (0 = automatic)")->capture_default_str();

    SimulateArgs ma;
    auto* simulate_cmd = app.add_subcommand("simulate", "Monte Carlo mean of the one-shot fusion time");
    simulate_cmd->set_help_flag("--help", "Print this help message and exit");
    simulate_cmd->add_option("--mu", ma.mu, "Drift, one value or one per sensor")->capture_default_str();
    simulate_cmd->add_option("--tau", ma.tau, "Change points, one per sensor (inf = never)");
    simulate_cmd->add_option("--h", ma.h, "Threshold");
    simulate_cmd->add_option("--reps", ma.reps, "Replications")->capture_default_str();
    simulate_cmd->add_option("--dt", ma.dt, "Time step")->capture_default_str();
    simulate_cmd->add_option("--horizon", ma.horizon, "Simulation horizon (0 = automatic)")->capture_default_str();
    simulate_cmd->add_option("--threads", ma.threads, "Worker threads (0 = all cores)")->capture_default_str();
    simulate_cmd->add_option("--per-rep", ma.per_rep, "Also write one CSV row per replication to this file");

    BoundsArgs ba;
    auto* bounds_cmd = app.add_subcommand("bounds", "Upper and lower delay bounds over a gamma grid");
    bounds_cmd->set_help_flag("--help", "Print this help message and exit");
    bounds_cmd->add_option("--mu", ba.mu, "Post-change drift")->capture_default_str();
    bounds_cmd->add_option("--sensors", ba.sensors, "Number of sensors N")->capture_default_str();
    bounds_cmd->add_option("--gamma-grid", ba.gamma_grid, "A:B:Nlog or A:B:Nlin")->capture_default_str();

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInvalid;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        if (!g.config.empty()) detail::apply_config(app, *sub, {calibrate_cmd, series_cmd, simulate_cmd, bounds_cmd},
                                                   read_config(g.config));
        std::string csv;
        if (sub == calibrate_cmd) {
            csv = detail::cmd_calibrate(ca, g, err);
        } else if (sub == series_cmd) {
            csv = detail::cmd_series(sa, g);
        } else if (sub == simulate_cmd) {
            csv = detail::cmd_simulate(ma, g);
        } else {
            csv = detail::cmd_bounds(ba, g, err);
        }
        if (g.out.empty()) {
            out << csv;
        } else {
            std::ofstream f(g.out, std::ios::binary);
            detail::require(static_cast<bool>(f), "cannot open output file '" + g.out + "'");
            f << csv;
            detail::require(static_cast<bool>(f), "failed writing output file '" + g.out + "'");
        }
        return kExitOk;
    } catch (const DomainError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const ConvergenceError& e) {
        err << "error: " << e.what() << "\n";
        return kExitNoConvergence;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInvalid;
    }
}

}  // namespace oneshot::cli
