// Acceptance checks, one PASS/FAIL line per criterion.
//
//   acceptance                         all criteria
//   acceptance --criterion N           one criterion
//   acceptance --criterion 3 --case K  one (h, scenario) case of the Monte Carlo comparison

#include <oneshot/calibration.hpp>
#include <oneshot/cli.hpp>
#include <oneshot/fusion.hpp>
#include <oneshot/simulate.hpp>
#include <oneshot/spectral.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

using namespace oneshot;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

void report(int criterion, const Outcome& o) {
    std::printf("criterion %d: %s  %s\n", criterion, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Outcome calibration_round_trip() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto grid = parse_grid("1e2:1e8:601log");
    double worst = 0.0;
    for (double mu : {0.5, 1.0, 2.0}) {
        for (double gamma : grid) {
            const double back = mean_false_alarm_single(mu, solve_nu(mu, gamma));
            worst = std::max(worst, std::fabs(back / gamma - 1.0));
        }
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-10 && secs < 1.0, fmt("worst relative error %.3g over 1803 points in %.3f s", worst, secs)};
}

Outcome series_vs_asymptotics() {
    Outcome o;
    double prev0 = 1e300;
    double prev_inf = 1e300;
    std::string d;
    for (double h : {6.0, 10.0, 14.0}) {
        const double d0 = std::fabs(spectral::e0_inf_series(1.0, h).total - 2.0 * (h - 1.0));
        const double dinf = std::fabs(spectral::einf_inf_series(1.0, h).total / (std::exp(h) - 4.0) - 1.0);
        o.pass = o.pass && d0 < prev0 && dinf < prev_inf;
        prev0 = d0;
        prev_inf = dinf;
        d += fmt("h=%g: |e0-2(h-1)|=%.3g |einf/(e^h-4)-1|=%.3g; ", h, d0, dinf);
    }
    o.pass = o.pass && prev0 <= 0.05 && prev_inf <= 1e-3;
    o.detail = d;
    return o;
}

struct McCase {
    double h;
    bool changed;
};
constexpr McCase kMcCases[] = {{4.0, true}, {4.0, false}, {6.0, true}, {6.0, false}};

Outcome monte_carlo_case(int index) {
    const auto& c = kMcCases[index];
    const auto t0 = std::chrono::steady_clock::now();
    const auto sensors = identical_sensors(2, 1.0);
    const Scenario sc = c.changed ? Scenario({0.0, kNever}) : Scenario::no_change(2);
    PathConfig cfg;
    cfg.dt = 1e-4;
    cfg.seed = 1000 + static_cast<std::uint64_t>(index);
    cfg.horizon = default_horizon(sensors, sc, c.h);
    const auto est = estimate_mean_time(sensors, sc, c.h, cfg, 100000);
    const double exact =
        c.changed ? spectral::e0_inf_series(1.0, c.h).total : spectral::einf_inf_series(1.0, c.h).total;
    const double allowed = std::max(0.03 * exact, 3.0 * est.std_error);
    const double diff = std::fabs(est.mean - exact);
    return {diff <= allowed && est.n_censored == 0,
            fmt("h=%g %s: simulated %.6g (se %.3g, censored %lld) vs series %.6g, |diff| %.3g <= %.3g; %.0f s", c.h,
                c.changed ? "(0,inf)" : "(inf,inf)", est.mean, est.std_error,
                static_cast<long long>(est.n_censored), exact, diff, allowed, seconds_since(t0))};
}

Outcome monte_carlo(int only_case) {
    Outcome o;
    for (int k = 0; k < 4; ++k) {
        if (only_case >= 0 && k != only_case) continue;
        const auto r = monte_carlo_case(k);
        o.pass = o.pass && r.pass;
        o.detail += (o.detail.empty() ? "" : " | ") + r.detail;
    }
    return o;
}

Outcome pathwise_identity() {
    struct Case {
        std::vector<SensorModel> sensors;
        Scenario scenario;
        double h;
    };
    const std::vector<Case> cases = {
        {identical_sensors(2, 1.0), Scenario({0.0, kNever}), 4.0},
        {identical_sensors(2, 1.0), Scenario::no_change(2), 3.0},
        {{{1, 0.5}, {2, 1.0}, {3, 2.0}}, Scenario({0.5, kNever, 0.0}), 3.0},
    };
    std::int64_t total = 0;
    std::int64_t equal = 0;
    for (std::size_t c = 0; c < cases.size(); ++c) {
        PathConfig cfg;
        cfg.seed = 4 + c;
        for (std::uint64_t rep = 0; rep < 10000; ++rep) {
            cfg.rep_index = rep;
            const auto central = run_stopping_time(cases[c].sensors, cases[c].scenario, cases[c].h, cfg);
            const auto fused = simulate_protocol(cases[c].sensors, cases[c].scenario, cases[c].h, cfg).decision;
            ++total;
            equal += central.time == fused.time && central.sensor == fused.first_sensor &&
                     central.stopped == !fused.censored;
        }
    }
    return {equal == total, fmt("%lld of %lld replications identical over 3 networks", static_cast<long long>(equal),
                                static_cast<long long>(total))};
}

Outcome gap_bound_check() {
    Outcome o;
    const auto grid = parse_grid("1e2:1e6:50log");
    for (int n : {2, 3}) {
        for (double mu : {0.5, 1.0, 2.0}) {
            const auto rows = bounds_table(mu, n, grid);
            const double limit = gap_bound(mu, n) + 0.1;
            double worst = -1e300;
            for (const auto& r : rows) {
                if (r.gamma >= 1e5) worst = std::max(worst, r.gap);
            }
            o.pass = o.pass && worst <= limit;
            o.detail += fmt("N=%d mu=%g max gap %.5g <= %.5g%s; ", n, mu, worst, limit,
                            rows.front().main_term_approximation ? " (leading term)" : "");
        }
    }
    return o;
}

Outcome root_solver() {
    Outcome o;
    for (double h : {4.0, 10.0, 50.0}) {
        const auto r = spectral::find_roots(h, 200);
        double worst = 0.0;
        bool bracketed = true;
        for (std::size_t n = 1; n <= 200; ++n) {
            const double base = static_cast<double>(n) * std::numbers::pi;
            const double th = r.theta[n - 1];
            const double ph = r.phi[n - 1];
            worst = std::max({worst, spectral::angle_residual(spectral::Family::theta, r.p, n, th),
                              spectral::angle_residual(spectral::Family::phi, r.p, n, ph)});
            bracketed = bracketed && th > base && th < base + std::numbers::pi / 2 &&
                        ph > base - std::numbers::pi / 2 && ph < base;
        }
        o.pass = o.pass && worst <= 1e-12 && bracketed;
        o.detail += fmt("h=%g residual %.2g%s", h, worst, bracketed ? "" : " (bracket violated)");
        if (h >= 10.0) {
            const double id = spectral::eta_identity_residual(h);
            o.pass = o.pass && id <= 1e-6;
            o.detail += fmt(", eta identity %.2g", id);
        }
        o.detail += "; ";
    }
    return o;
}

Outcome limit_probes() {
    Outcome o;
    for (double p : {0.01, 0.005}) {
        for (auto fam : {spectral::Family::theta, spectral::Family::phi}) {
            const double v = spectral::result1_check(p, fam);
            o.pass = o.pass && v <= 1.0 / std::numbers::pi + 0.02;
            o.detail += fmt("result1(p=%g)=%.6f; ", p, v);
        }
    }
    double prev = 1e300;
    for (double p : {0.2, 0.1, 0.05, 0.02}) {
        const double v = std::fabs(spectral::result2_check(p));
        o.pass = o.pass && v < prev;
        prev = v;
        o.detail += fmt("|result2(p=%g)|=%.3g; ", p, v);
    }
    prev = 1e300;
    for (double h : {6.0, 10.0, 14.0}) {
        const double v = std::fabs(spectral::ncensors_sum_check(h, 3));
        o.pass = o.pass && v < prev;
        prev = v;
        o.detail += fmt("|ncensors(N=3,h=%g)|=%.3g; ", h, v);
    }
    return o;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
    const auto dir = std::filesystem::temp_directory_path();
    const std::vector<std::vector<std::string>> commands = {
        {"oneshot", "--seed", "42", "simulate", "--h", "5", "--tau", "0,inf", "--reps", "2000"},
        {"oneshot", "simulate", "--mu", "0.5,2", "--h", "3", "--tau", "inf,1.5", "--reps", "500", "--dt", "1e-2"},
        {"oneshot", "--seed", "9", "simulate", "--h", "2", "--tau", "inf,inf,inf", "--reps", "300", "--horizon",
         "20"},
    };
    int identical = 0;
    for (std::size_t c = 0; c < commands.size(); ++c) {
        std::string outs[2];
        std::string files[2];
        for (int run = 0; run < 2; ++run) {
            auto args = commands[c];
            const auto per_rep = dir / ("oneshot_acceptance_" + std::to_string(c) + ".csv");
            args.insert(args.end(), {"--per-rep", per_rep.string()});
            std::ostringstream out;
            std::ostringstream err;
            if (cli::run_cli(args, out, err) != 0) return {false, "command failed: " + err.str()};
            outs[run] = out.str();
            files[run] = slurp(per_rep);
            std::filesystem::remove(per_rep);
        }
        identical += outs[0] == outs[1] && files[0] == files[1] && !outs[0].empty();
    }
    return {identical == static_cast<int>(commands.size()),
            fmt("%d of %zu simulate commands byte-identical on repeat (summary and per-replication CSV)", identical,
                commands.size())};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    int criterion = 0;
    int mc_case = -1;
    app.add_option("--criterion", criterion, "Criterion 1..8 (0 = all)")->check(CLI::Range(0, 8));
    app.add_option("--case", mc_case, "Case 0..3 of criterion 3 (-1 = all)")->check(CLI::Range(-1, 3));
    CLI11_PARSE(app, argc, argv);

    bool all_pass = true;
    auto run = [&](int c, auto fn) {
        if (criterion != 0 && criterion != c) return;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        report(c, o);
        all_pass = all_pass && o.pass;
    };
    run(1, calibration_round_trip);
    run(2, series_vs_asymptotics);
    run(3, [&] { return monte_carlo(mc_case); });
    run(4, pathwise_identity);
    run(5, gap_bound_check);
    run(6, root_solver);
    run(7, limit_probes);
    run(8, determinism);
    return all_pass ? 0 : 1;
}
