#pragma once

// Threshold calibration and the delay bounds around the optimal decentralized
// rule.
//
// A single CUSUM with threshold nu has E_inf T = (2/mu^2) f(nu) and
// E_0 T = (2/mu^2) f(-nu), f(x) = e^x - x - 1. For N charts the multi-chart
// threshold h is set so that E_{inf,...,inf}{T_h} = gamma; for N = 2 the
// exact series is used, for N > 2 only its leading term is available.

#include <oneshot/errors.hpp>
#include <oneshot/spectral.hpp>

#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace oneshot {

/// f(x) = e^x - x - 1, accurate near 0.
inline double excess_exp(double x) {
    if (std::fabs(x) < 1.0) {
        // x^2/2! + x^3/3! + ...; 24 terms reach full precision for |x| < 1.
        double term = 0.5 * x * x;
        double sum = 0.0;
        for (int k = 3; k < 27; ++k) {
            sum += term;
            term *= x / k;
        }
        return sum;
    }
    return std::expm1(x) - x;
}

namespace detail {
inline void require_mu(double mu) { require(std::isfinite(mu) && mu > 0.0, "mu must be positive and finite"); }
inline void require_gamma(double gamma) {
    require(std::isfinite(gamma) && gamma > 0.0, "gamma must be positive and finite");
}
}  // namespace detail

/// E_inf T_nu = (2/mu^2) f(nu) for a single CUSUM.
inline double mean_false_alarm_single(double mu, double nu) {
    detail::require_mu(mu);
    detail::require(std::isfinite(nu), "nu must be finite");
    return 2.0 / (mu * mu) * excess_exp(nu);
}

/// E_0 T_nu = (2/mu^2) f(-nu) for a single CUSUM.
inline double detection_delay_single(double mu, double nu) {
    detail::require_mu(mu);
    detail::require(std::isfinite(nu) && nu >= 0.0, "nu must be >= 0 and finite");
    return 2.0 / (mu * mu) * excess_exp(-nu);
}

/// The nu > 0 with (2/mu^2) f(nu) = gamma, to relative residual <= 1e-12.
inline double solve_nu(double mu, double gamma) {
    detail::require_mu(mu);
    detail::require_gamma(gamma);
    const double c = 0.5 * mu * mu * gamma;  // f(nu) = c
    // f(x) >= x^2/2 gives sqrt(2c) as an upper end for small c; log(c) + 2
    // works for large c since f(log c + 2) > c.
    double hi = std::max(std::sqrt(2.0 * c), std::log(c) + 2.0);
    while (excess_exp(hi) < c) hi *= 2.0;
    const double guess = c < 1.0 ? std::sqrt(2.0 * c) * (1.0 - std::sqrt(2.0 * c) / 6.0) : std::log(c + 1.0) + 0.5;
    auto g = [c](double x) { return std::make_pair(excess_exp(x) - c, std::expm1(x)); };
    std::uintmax_t iters = 200;
    const double nu = boost::math::tools::newton_raphson_iterate(
        g, std::clamp(guess, 0.0, hi), 0.0, hi, std::numeric_limits<double>::digits, iters);
    if (std::fabs(excess_exp(nu) / c - 1.0) > 1e-12) {
        std::ostringstream msg;
        msg << "solve_nu did not reach relative residual 1e-12 for gamma=" << gamma;
        throw ConvergenceError(msg.str());
    }
    return nu;
}

struct CalibrationOptions {
    spectral::SeriesOptions series{};
    double rel_tol = 1e-9;  // relative residual on E_{inf,...}{T_h} = gamma
};

/// E_{inf,...,inf}{T_h} for n identical charts: exact for n <= 2, leading
/// term for n > 2.
inline double multichart_false_alarm(double mu, double h, int n, const spectral::SeriesOptions& opt = {}) {
    detail::require(n >= 1, "number of sensors must be >= 1");
    if (n == 1) return mean_false_alarm_single(mu, h);
    if (n == 2) return spectral::einf_inf_series(mu, h, opt).total;
    return spectral::main_terms_general_n(mu, h, n).second;
}

/// E_{0,inf,...,inf}{T_h}: exact for n <= 2, leading term for n > 2.
inline double multichart_delay(double mu, double h, int n, const spectral::SeriesOptions& opt = {}) {
    detail::require(n >= 1, "number of sensors must be >= 1");
    if (n == 1) return detection_delay_single(mu, h);
    if (n == 2) return spectral::e0_inf_series(mu, h, opt).total;
    return spectral::main_terms_general_n(mu, h, n).first;
}

/// Multi-chart threshold h with E_{inf,...,inf}{T_h} = gamma.
inline double solve_h(double mu, double gamma, int n, const CalibrationOptions& opt = {}) {
    detail::require_mu(mu);
    detail::require_gamma(gamma);
    detail::require(n >= 1, "number of sensors must be >= 1");
    if (n == 1) return solve_nu(mu, gamma);

    // The series tolerance must sit well below the requested residual.
    spectral::SeriesOptions sopt = opt.series;
    sopt.tol = std::min(sopt.tol, 1e-3 * opt.rel_tol * gamma);
    auto excess = [&](double h) { return std::log(multichart_false_alarm(mu, h, n, sopt) / gamma); };

    const double lo = 2.0 + 1e-9;
    const double f_lo = excess(lo);
    if (f_lo >= 0.0) {
        std::ostringstream msg;
        msg << "gamma=" << gamma << " is below the smallest false-alarm time representable with h > 2 ("
            << multichart_false_alarm(mu, lo, n, sopt) << ")";
        throw DomainError(msg.str());
    }
    double hi = std::max(lo + 1.0, std::log(0.5 * mu * mu * gamma * n + 4.0) + 1.0);
    double f_hi = excess(hi);
    while (f_hi < 0.0) {
        hi += 2.0;
        f_hi = excess(hi);
    }
    std::uintmax_t iters = 200;
    auto tol = boost::math::tools::eps_tolerance<double>(std::numeric_limits<double>::digits - 3);
    const auto [a, b] = boost::math::tools::toms748_solve(excess, lo, hi, f_lo, f_hi, tol, iters);
    const double h = 0.5 * (a + b);
    const double resid = std::fabs(std::expm1(excess(h)));
    if (resid > opt.rel_tol) {
        std::ostringstream msg;
        msg << "solve_h did not reach relative residual " << opt.rel_tol << " for gamma=" << gamma
            << " (got " << resid << ")";
        throw ConvergenceError(msg.str());
    }
    return h;
}

/// (2/mu^2)[ln gamma + ln(n mu^2/2) - 1], the large-gamma expansion of the
/// multi-chart detection delay.
inline double asymptotic_upper(double mu, double gamma, int n) {
    detail::require_mu(mu);
    detail::require_gamma(gamma);
    detail::require(n >= 1, "number of sensors must be >= 1");
    const double v = 2.0 / (mu * mu) * (std::log(gamma) + std::log(0.5 * n * mu * mu) - 1.0);
    detail::require(v > 0.0, "gamma too small for the asymptotic expansion to be positive");
    return v;
}

/// Single-CUSUM expansion (2/mu^2)[ln gamma + ln(mu^2/2) - 1].
inline double asymptotic_lower(double mu, double gamma) { return asymptotic_upper(mu, gamma, 1); }

/// Limit of the gap between the multi-chart delay and the single-CUSUM
/// delay at equal gamma: (2/mu^2) ln n.
inline double gap_bound(double mu, int n) {
    detail::require_mu(mu);
    detail::require(n >= 1, "number of sensors must be >= 1");
    return 2.0 / (mu * mu) * std::log(static_cast<double>(n));
}

struct Calibration {
    double mu = 1.0;
    double gamma = 0.0;
    int n_sensors = 1;
    double nu = 0.0;  // single-CUSUM threshold
    double h = 0.0;   // multi-chart threshold
};

inline Calibration calibrate(double mu, double gamma, int n, const CalibrationOptions& opt = {}) {
    return {mu, gamma, n, solve_nu(mu, gamma), solve_h(mu, gamma, n, opt)};
}

struct BoundsRow {
    double gamma = 0.0;
    double upper = 0.0;  // E_{0,inf,...,inf}{T_h(gamma)}
    double lower = 0.0;  // E_0{T_nu(gamma)}
    double gap = 0.0;    // upper - lower
    bool main_term_approximation = false;
};

/// One row per gamma: the multi-chart delay above the single-CUSUM delay.
/// Errors carry the row index and keep their type.
inline std::vector<BoundsRow> bounds_table(double mu, int n, std::span<const double> gamma_grid,
                                           const CalibrationOptions& opt = {}) {
    detail::require_mu(mu);
    detail::require(n >= 1, "number of sensors must be >= 1");
    detail::require(std::is_sorted(gamma_grid.begin(), gamma_grid.end()), "gamma grid must be sorted ascending");
    std::vector<BoundsRow> rows;
    rows.reserve(gamma_grid.size());
    for (std::size_t i = 0; i < gamma_grid.size(); ++i) {
        const double gamma = gamma_grid[i];
        auto where = [&] {
            std::ostringstream s;
            s << "row " << i << " (gamma=" << gamma << "): ";
            return s.str();
        };
        try {
            BoundsRow row;
            row.gamma = gamma;
            const double h = solve_h(mu, gamma, n, opt);
            row.upper = multichart_delay(mu, h, n, opt.series);
            row.lower = detection_delay_single(mu, solve_nu(mu, gamma));
            row.gap = row.upper - row.lower;
            row.main_term_approximation = n > 2;
            rows.push_back(row);
        } catch (const DomainError& e) {
            throw DomainError(where() + e.what());
        } catch (const ConvergenceError& e) {
            throw ConvergenceError(where() + e.what());
        }
    }
    return rows;
}

/// Grid from the `A:B:Nlog` or `A:B:Nlin` syntax (N points, both ends included).
inline std::vector<double> parse_grid(const std::string& spec) {
    const auto c1 = spec.find(':');
    const auto c2 = c1 == std::string::npos ? std::string::npos : spec.find(':', c1 + 1);
    detail::require(c2 != std::string::npos, "grid must look like A:B:Nlog or A:B:Nlin, got '" + spec + "'");
    const std::string tail = spec.substr(c2 + 1);
    detail::require(tail.size() > 3, "grid must end in Nlog or Nlin, got '" + spec + "'");
    const std::string kind = tail.substr(tail.size() - 3);
    detail::require(kind == "log" || kind == "lin", "grid spacing must be log or lin, got '" + spec + "'");
    double a = 0.0;
    double b = 0.0;
    long count = 0;
    try {
        std::size_t used = 0;
        a = std::stod(spec.substr(0, c1), &used);
        detail::require(used == c1, "bad grid start");
        const std::string bs = spec.substr(c1 + 1, c2 - c1 - 1);
        b = std::stod(bs, &used);
        detail::require(used == bs.size(), "bad grid end");
        const std::string ns = tail.substr(0, tail.size() - 3);
        count = std::stol(ns, &used);
        detail::require(used == ns.size(), "bad grid count");
    } catch (const std::logic_error&) {
        throw DomainError("cannot parse grid '" + spec + "'");
    }
    detail::require(std::isfinite(a) && std::isfinite(b) && a <= b, "grid bounds must be finite with A <= B");
    detail::require(count >= 1, "grid needs at least one point");
    if (kind == "log") detail::require(a > 0.0, "log grid needs A > 0");
    std::vector<double> grid(static_cast<std::size_t>(count));
    for (long i = 0; i < count; ++i) {
        const double t = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
        grid[static_cast<std::size_t>(i)] =
            kind == "log" ? std::exp(std::log(a) + t * (std::log(b) - std::log(a))) : a + t * (b - a);
    }
    grid.front() = a;
    grid.back() = b;
    return grid;
}

}  // namespace oneshot
