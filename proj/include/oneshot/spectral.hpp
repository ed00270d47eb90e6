#pragma once

// Eigenvalue roots and first-passage series for two CUSUM charts.
//
// With p = 2/h the survival function of one reflected chart expands over the
// positive roots of
//   tan x  =  p x    theta_n, pre-change drift
//   tan x  = -p x    phi_n, post-change drift
//   tanh x =  p x    eta, the slow pre-change mode (exists iff h > 2).
// At a root, with X = p x, every trigonometric factor is algebraic in X:
// cos^2 x = 1/(1 + X^2), sin x cos x = +-X/(1 + X^2), and the sign of sin x
// alternates with n. The series below use those forms.
//
// Infinite sums are evaluated with the last 16 retained terms tapered by
// binomial (Euler) weights. The error estimate for a sum truncated at K is
// |S(K) - S(K/2)| plus a rounding floor proportional to sum |terms|.

#include <oneshot/errors.hpp>
#include <oneshot/summation.hpp>

#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace oneshot::spectral {

enum class Family { theta, phi };  // tan x = +p x, tan x = -p x

inline constexpr double kPi = std::numbers::pi;

namespace detail {

inline void require_threshold(double h) {
    oneshot::detail::require(std::isfinite(h) && h > 2.0,
                             "h must be > 2 (the eta root of tanh x = (2/h) x does not exist)");
}

inline void require_p(double p) {
    oneshot::detail::require(std::isfinite(p) && p > 0.0 && p < 1.0, "p must lie in (0, 1)");
}

constexpr double orientation(Family f) noexcept { return f == Family::theta ? 1.0 : -1.0; }

// log sinh(x), log cosh(x) for x > 0 without overflow.
inline double log_sinh(double x) { return x + std::log(-std::expm1(-2.0 * x)) - std::numbers::ln2; }
inline double log_cosh(double x) { return x + std::log1p(std::exp(-2.0 * x)) - std::numbers::ln2; }

// log(sinh x cosh x - x) for x > 0. The difference cancels to O(x^3) near 0.
inline double log_sinhcosh_minus(double x) {
    if (x < 0.5) {
        const double t = 2.0 * x;
        const double t2 = t * t;
        double term = t * t2 / 6.0;  // t^3 / 3!
        double sum = 0.0;
        for (int k = 1; k < 30 && term > 1e-18 * sum; ++k) {
            sum += term;
            term *= t2 / ((2.0 * k + 2.0) * (2.0 * k + 3.0));
        }
        return std::log(0.5 * sum);
    }
    const double ls = log_sinh(2.0 * x);
    return ls - std::numbers::ln2 + std::log1p(-2.0 * x * std::exp(-ls));
}

inline std::size_t default_count(double p) {
    return std::max<std::size_t>(50, static_cast<std::size_t>(std::ceil(10.0 / p)));
}

}  // namespace detail

/// Root n >= 1 of tan x = +-p x, p in (0, 1), solved in the angle form
/// x = n pi +- atan(p x). Theta roots lie in (n pi, n pi + pi/2), phi roots
/// in (n pi - pi/2, n pi).
inline double family_root(Family fam, double p, std::size_t n) {
    const double s = detail::orientation(fam);
    const double base = static_cast<double>(n) * kPi;
    const double lo = fam == Family::theta ? base : base - 0.5 * kPi;
    const double hi = fam == Family::theta ? base + 0.5 * kPi : base;
    auto g = [&](double x) {
        const double px = p * x;
        return std::make_pair(x - base - s * std::atan(px), 1.0 - s * p / (1.0 + px * px));
    };
    double guess = base + s * std::atan(p * base);
    std::uintmax_t iters = 100;
    return boost::math::tools::newton_raphson_iterate(g, guess, lo, hi,
                                                      std::numeric_limits<double>::digits - 1, iters);
}

/// Residual of the angle form |x - n pi -+ atan(p x)|. Equals the distance
/// to the exact root up to a factor in [1 - p, 1 + p].
inline double angle_residual(Family fam, double p, std::size_t n, double x) {
    return std::fabs(x - static_cast<double>(n) * kPi - detail::orientation(fam) * std::atan(p * x));
}

/// |tan x -+ p x|. Its size is amplified by 1 + (p x)^2 relative to the root
/// error, so for large roots it is dominated by the rounding of x itself.
inline double tan_residual(Family fam, double p, double x) {
    return std::fabs(std::tan(x) - detail::orientation(fam) * p * x);
}

/// The positive root of tanh x = (2/h) x, h > 2.
inline double eta_root(double h) {
    detail::require_threshold(h);
    const double p = 2.0 / h;
    const double gap = (h - 2.0) / h;  // 1 - p
    // tanh(x)/x - p, written as gap - (1 - tanh(x)/x) to keep precision near 0.
    auto g = [&](double x) {
        if (x < 0.01) {
            const double x2 = x * x;
            return gap - x2 * (1.0 / 3.0 - x2 * (2.0 / 15.0 - x2 * (17.0 / 315.0 - x2 * 62.0 / 2835.0)));
        }
        return std::tanh(x) / x - p;
    };
    const double hi = 1.0 / p;
    std::uintmax_t iters = 200;
    auto tol = boost::math::tools::eps_tolerance<double>(std::numeric_limits<double>::digits - 1);
    const auto [a, b] = boost::math::tools::toms748_solve(g, 0.0, hi, gap, g(hi), tol, iters);
    return 0.5 * (a + b);
}

inline double eta_residual(double h, double eta) { return std::fabs(std::tanh(eta) - 2.0 * eta / h); }

/// |e^{2 eta - h} - (1 - 4 eta e^{-2 eta})|, which vanishes as h grows.
inline double eta_identity_residual(double h) {
    const double eta = eta_root(h);
    return std::fabs(std::exp(2.0 * eta - h) - (1.0 - 4.0 * eta * std::exp(-2.0 * eta)));
}

struct SpectralRoots {
    double h = 0.0;
    double p = 0.0;
    std::vector<double> phi;    // ascending, phi_n in (n pi - pi/2, n pi)
    std::vector<double> theta;  // ascending, theta_n in (n pi, n pi + pi/2)
    double eta = 0.0;
    std::size_t count = 0;
};

/// First k roots of each family and eta, each with angle-form residual <= tol.
inline SpectralRoots find_roots(double h, std::size_t k, double tol = 1e-12) {
    detail::require_threshold(h);
    oneshot::detail::require(k >= 1, "root count must be >= 1");
    oneshot::detail::require(tol > 0.0, "tolerance must be positive");
    SpectralRoots r;
    r.h = h;
    r.p = 2.0 / h;
    r.count = k;
    r.phi.resize(k);
    r.theta.resize(k);
    for (std::size_t n = 1; n <= k; ++n) {
        r.phi[n - 1] = family_root(Family::phi, r.p, n);
        r.theta[n - 1] = family_root(Family::theta, r.p, n);
        if (angle_residual(Family::phi, r.p, n, r.phi[n - 1]) > tol ||
            angle_residual(Family::theta, r.p, n, r.theta[n - 1]) > tol) {
            throw ConvergenceError("root " + std::to_string(n) + " at h=" + std::to_string(h) +
                                   " did not reach the residual tolerance");
        }
    }
    r.eta = eta_root(h);
    if (eta_residual(h, r.eta) > tol) throw ConvergenceError("eta root did not reach the residual tolerance");
    return r;
}

namespace detail {

/// Per-root factors for one family, extended on demand:
///   s_n = sin^3 x / (x - sin x cos x)   (signed)
///   q_n = 1 / cos^2 x = 1 + (p x)^2
class RootFactors {
public:
    RootFactors(Family fam, double p) : fam_(fam), p_(p) {}

    void extend(std::size_t k) {
        s_.reserve(k);
        q_.reserve(k);
        for (std::size_t n = s_.size() + 1; n <= k; ++n) {
            const double x = family_root(fam_, p_, n);
            const double X = p_ * x;
            const double q = 1.0 + X * X;
            const double sincos = orientation(fam_) * X / q;
            // sign(sin theta_n) = (-1)^n, sign(sin phi_n) = (-1)^(n+1)
            const bool negative = (n % 2 == 1) == (fam_ == Family::theta);
            const double mag = X * X * X / (q * std::sqrt(q) * (x - sincos));
            s_.push_back(negative ? -mag : mag);
            q_.push_back(q);
        }
    }

    double s(std::size_t i) const { return s_[i]; }
    double q(std::size_t i) const { return q_[i]; }
    const double* s_data() const { return s_.data(); }
    const double* q_data() const { return q_.data(); }

private:
    Family fam_;
    double p_;
    std::vector<double> s_;
    std::vector<double> q_;
};

inline constexpr int kTaperLength = 16;

/// Weights 1, ..., 1, then 1 - 2^-m sum_{r<=j} C(m, r) over the last m terms.
inline std::vector<double> taper_weights(std::size_t k, int length = kTaperLength) {
    std::vector<double> w(k, 1.0);
    const auto m = static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(length), k / 2));
    if (m == 0) return w;
    double binom = 1.0;
    double cum = 0.0;
    const double scale = std::ldexp(1.0, -static_cast<int>(m));
    for (std::size_t j = 0; j < m; ++j) {
        cum += binom;
        w[k - m + j] = 1.0 - cum * scale;
        binom = binom * static_cast<double>(m - j) / static_cast<double>(j + 1);
    }
    return w;
}

struct PartialSum {
    double value = 0.0;
    double magnitude = 0.0;  // sum of |weighted terms|
};

/// sum_i w_i term(i), i = 0..k-1.
template <class Term>
PartialSum tapered_sum(std::size_t k, Term term) {
    const auto w = taper_weights(k);
    NeumaierSum s;
    double mag = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double t = w[i] * term(i);
        s.add(t);
        mag += std::fabs(t);
    }
    return {s.value(), mag};
}

/// sum_i sum_j w_i w_j a_i b_j / (qa_i + qb_j + shift), i, j = 0..k-1.
inline PartialSum tapered_cross_sum(std::size_t k, const RootFactors& a, const RootFactors& b,
                                    double shift = 0.0) {
    const auto w = taper_weights(k);
    std::vector<double> wb(k);
    for (std::size_t j = 0; j < k; ++j) wb[j] = w[j] * b.s(j);
    const double* qb = b.q_data();
    NeumaierSum outer;
    double mag = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double qa = a.q(i) + shift;
        NeumaierSum inner;
        double inner_mag = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double t = wb[j] / (qa + qb[j]);
            inner.add(t);
            inner_mag += std::fabs(t);
        }
        const double wa = w[i] * a.s(i);
        outer.add(wa * inner.value());
        mag += std::fabs(wa) * inner_mag;
    }
    return {outer.value(), mag};
}

struct TermEstimate {
    double value = 0.0;
    double error = 0.0;
    std::size_t k = 0;
};

// Rounding floor per unit of sum |terms|: a few ulps per term.
inline constexpr double kRoundingFactor = 8.0 * std::numeric_limits<double>::epsilon();

/// prefactor * S where S is a tapered sum evaluated by `eval(K)`. Doubles K
/// from k0 until |S(K) - S(K/2)| * |prefactor| + rounding floor <= tol.
template <class Eval>
TermEstimate adaptive_term(const char* name, double h, double prefactor, std::size_t k0,
                           std::size_t k_max, double tol, Eval eval) {
    const double scale = std::fabs(prefactor);
    std::size_t k = std::max<std::size_t>(k0, 4);
    PartialSum half = eval(k / 2);
    PartialSum full = eval(k);
    for (;;) {
        const double floor = kRoundingFactor * full.magnitude * scale;
        const double err = std::fabs(full.value - half.value) * scale + floor;
        if (err <= tol) return {prefactor * full.value, err, k};
        if (floor > tol || 2 * k > k_max) {
            std::ostringstream msg;
            msg << name << " at h=" << h << " did not converge: error estimate " << err << " with K=" << k
                << " (rounding floor " << floor << ") exceeds tolerance " << tol;
            throw ConvergenceError(msg.str());
        }
        half = full;
        k *= 2;
        full = eval(k);
    }
}

}  // namespace detail

struct SeriesOptions {
    double tol = 1e-8;                 // absolute, per S-term
    std::size_t k_start = 0;           // 0 selects max(50, ceil(10/p))
    std::size_t max_single = 1U << 22;  // cap on K for single sums
    std::size_t max_double = 1U << 13;  // cap on K for double sums
};

struct SeriesValue {
    double total = 0.0;
    std::array<double, 3> terms{};        // S1..S3 or S4..S6
    std::array<double, 3> term_errors{};
    double truncation_error_estimate = 0.0;
    std::size_t k_used = 0;
};

namespace detail {

struct EtaFactors {
    double eta = 0.0;
    double log_a = 0.0;      // log[sinh^3 eta / (sinh eta cosh eta - eta)]
    double log_cosh2 = 0.0;  // log cosh^2 eta
    double sech2 = 0.0;      // 1 / cosh^2 eta
};

inline EtaFactors eta_factors(double h) {
    EtaFactors e;
    e.eta = eta_root(h);
    e.log_a = 3.0 * log_sinh(e.eta) - log_sinhcosh_minus(e.eta);
    e.log_cosh2 = 2.0 * log_cosh(e.eta);
    e.sech2 = std::exp(-e.log_cosh2);
    return e;
}

inline void validate_series_args(double mu, double h, const SeriesOptions& opt) {
    oneshot::detail::require(std::isfinite(mu) && mu > 0.0, "mu must be positive and finite");
    require_threshold(h);
    oneshot::detail::require(std::isfinite(opt.tol) && opt.tol > 0.0, "tolerance must be positive");
}

inline SeriesValue assemble(const std::array<TermEstimate, 3>& t) {
    SeriesValue v;
    NeumaierSum total;
    for (std::size_t i = 0; i < 3; ++i) {
        v.terms[i] = t[i].value;
        v.term_errors[i] = t[i].error;
        v.truncation_error_estimate += t[i].error;
        v.k_used = std::max(v.k_used, t[i].k);
        total.add(t[i].value);
    }
    v.total = total.value();
    if (!std::isfinite(v.total)) throw DomainError("series value overflows double precision at this h");
    return v;
}

}  // namespace detail

/// E_{0,inf}{T_h} for two identical charts: S1 + S2 + S3.
inline SeriesValue e0_inf_series(double mu, double h, const SeriesOptions& opt = {}) {
    detail::validate_series_args(mu, h, opt);
    const double p = 2.0 / h;
    const auto e = detail::eta_factors(h);
    const double lead = 32.0 / (mu * mu);
    const std::size_t k0 = opt.k_start ? opt.k_start : detail::default_count(p);
    detail::RootFactors phi(Family::phi, p);
    detail::RootFactors theta(Family::theta, p);

    const auto s1 = detail::adaptive_term("S1", h, lead, k0, opt.max_double, opt.tol, [&](std::size_t k) {
        phi.extend(k);
        theta.extend(k);
        return detail::tapered_cross_sum(k, phi, theta);
    });
    // cos^2 phi / (cos^2 phi + cosh^2 eta) = sech^2 cos^2 phi / (1 + sech^2 cos^2 phi)
    const auto s2 = detail::adaptive_term("S2", h, -lead * std::exp(e.log_a) * e.sech2, k0, opt.max_single,
                                          opt.tol, [&](std::size_t k) {
                                              phi.extend(k);
                                              return detail::tapered_sum(k, [&](std::size_t i) {
                                                  const double c = 1.0 / phi.q(i);
                                                  return phi.s(i) * c * c / (1.0 + e.sech2 * c);
                                              });
                                          });
    const auto s3 = detail::adaptive_term("S3", h, lead * std::exp(e.log_a), k0, opt.max_single, opt.tol,
                                          [&](std::size_t k) {
                                              phi.extend(k);
                                              return detail::tapered_sum(
                                                  k, [&](std::size_t i) { return phi.s(i) / phi.q(i); });
                                          });
    return detail::assemble({s1, s2, s3});
}

/// E_{inf,inf}{T_h} for two identical charts: S4 + S5 + S6.
inline SeriesValue einf_inf_series(double mu, double h, const SeriesOptions& opt = {}) {
    detail::validate_series_args(mu, h, opt);
    const double p = 2.0 / h;
    const auto e = detail::eta_factors(h);
    const double log_mu2 = 2.0 * std::log(mu);
    const std::size_t k0 = opt.k_start ? opt.k_start : detail::default_count(p);
    detail::RootFactors theta(Family::theta, p);

    const auto s4 = detail::adaptive_term("S4", h, std::exp(std::log(32.0) - log_mu2 - h), k0, opt.max_double,
                                          opt.tol, [&](std::size_t k) {
                                              theta.extend(k);
                                              return detail::tapered_cross_sum(k, theta, theta);
                                          });
    const auto s5 = detail::adaptive_term("S5", h, std::exp(std::log(64.0) - log_mu2 - h + e.log_a), k0,
                                          opt.max_single, opt.tol, [&](std::size_t k) {
                                              theta.extend(k);
                                              return detail::tapered_sum(k, [&](std::size_t i) {
                                                  const double c = 1.0 / theta.q(i);
                                                  return theta.s(i) * c / (1.0 + e.sech2 * c);
                                              });
                                          });
    detail::TermEstimate s6;
    s6.value = std::exp(std::log(16.0) - log_mu2 - h + 2.0 * e.log_a + e.log_cosh2);
    return detail::assemble({s4, s5, s6});
}

/// Leading terms of E_{0,inf,...,inf}{T_h} and E_{inf,...,inf}{T_h} for n charts.
inline std::pair<double, double> main_terms_general_n(double mu, double h, int n) {
    oneshot::detail::require(std::isfinite(mu) && mu > 0.0, "mu must be positive and finite");
    detail::require_threshold(h);
    oneshot::detail::require(n >= 2, "number of sensors must be >= 2");
    const double inv = 2.0 / (mu * mu);
    const double nn = static_cast<double>(n);
    return {inv * (h - 1.0), inv / nn * (std::exp(h) + (nn - 2.0) * h + (2.0 - 3.0 * nn))};
}

// Limit probes on the root families. -----------------------------------------

/// |sin^3 x| cos^2 x / (x - sin x cos x) at the root n of `fam`.
inline double result1_term(double p, Family fam, std::size_t n) {
    detail::require_p(p);
    detail::RootFactors f(fam, p);
    f.extend(n);
    return std::fabs(f.s(n - 1)) / f.q(n - 1);
}

/// Term-wise majorant p / (1 + p^2 (n - 1/2)^2 pi^2)^{3/2}.
inline double result1_majorant(double p, std::size_t n) {
    const double a = p * (static_cast<double>(n) - 0.5) * kPi;
    return p / std::pow(1.0 + a * a, 1.5);
}

/// sum_{n<=k} |sin^3 x_n| cos^2 x_n / (x_n - sin x_n cos x_n) over roots of
/// tan x = +-p x. k = 0 selects max(50, ceil(10/p)).
inline double result1_check(double p, Family fam, std::size_t k = 0) {
    detail::require_p(p);
    if (k == 0) k = detail::default_count(p);
    detail::RootFactors f(fam, p);
    f.extend(k);
    NeumaierSum s;
    for (std::size_t i = 0; i < k; ++i) s.add(std::fabs(f.s(i)) / f.q(i));
    return s.value();
}

/// a_{ij}(p) = s^theta_i s^beta_j cos^2 theta_i cos^2 beta_j / (cos^2 theta_i + cos^2 beta_j).
inline double result2_term(double p, std::size_t i, std::size_t j, Family beta = Family::phi) {
    detail::require_p(p);
    detail::RootFactors a(Family::theta, p);
    detail::RootFactors b(beta, p);
    a.extend(i);
    b.extend(j);
    return a.s(i - 1) * b.s(j - 1) / (a.q(i - 1) + b.q(j - 1));
}

/// sum_{i,j} a_{ij}(p), tapered at k (0 selects max(50, ceil(10/p))).
inline double result2_check(double p, std::size_t k = 0, Family beta = Family::phi) {
    detail::require_p(p);
    if (k == 0) k = detail::default_count(p);
    detail::RootFactors a(Family::theta, p);
    detail::RootFactors b(beta, p);
    a.extend(k);
    b.extend(k);
    return detail::tapered_cross_sum(k, a, b).value;
}

/// I_p(x, y); `beta` selects the (1 - p) or (1 + p) factor of the second argument.
inline double I_p(double x, double y, double p, Family beta = Family::phi) {
    const double pb = beta == Family::theta ? p : -p;
    return 1.0 / (std::sqrt((1.0 + x * x) * (1.0 + y * y)) * (2.0 + x * x + y * y) *
                  (1.0 + (1.0 - p) / (x * x)) * (1.0 + (1.0 - pb) / (y * y)));
}

/// B(x, y) = 1 / (sqrt((1 + x^2)(1 + y^2)) (2 + x^2 + y^2)), an integrable bound on I_p.
inline double bound_B(double x, double y) {
    return 1.0 / (std::sqrt((1.0 + x * x) * (1.0 + y * y)) * (2.0 + x * x + y * y));
}

/// I_p^{(n)}(x, y) with x = p theta_i and y = p phi_j; the denominator gains
/// (n - 2)(1 - p^2 eta^2).
inline double I_p_n(double x, double y, double p, int n, double eta) {
    const double extra = static_cast<double>(n - 2) * (1.0 - p * p * eta * eta);
    return 1.0 / (std::sqrt((1.0 + x * x) * (1.0 + y * y)) * (extra + 2.0 + x * x + y * y) *
                  (1.0 + (1.0 - p) / (x * x)) * (1.0 + (1.0 + p) / (y * y)));
}

/// a^{(n)}_{ij} = s^phi_i s^theta_j cos^2 phi_i cos^2 theta_j /
///   ((n - 2)(1 - p^2 eta^2) cos^2 phi_i cos^2 theta_j + cos^2 phi_i + cos^2 theta_j).
inline double ncensors_term(double h, int n, std::size_t i, std::size_t j) {
    detail::require_threshold(h);
    oneshot::detail::require(n >= 2, "number of sensors must be >= 2");
    const double p = 2.0 / h;
    const double eta = eta_root(h);
    detail::RootFactors phi(Family::phi, p);
    detail::RootFactors theta(Family::theta, p);
    phi.extend(i);
    theta.extend(j);
    const double shift = static_cast<double>(n - 2) * (1.0 - p * p * eta * eta);
    return phi.s(i - 1) * theta.s(j - 1) / (shift + phi.q(i - 1) + theta.q(j - 1));
}

/// sum_{i,j} a^{(n)}_{ij}, tapered at k (0 selects max(50, ceil(10/p))).
inline double ncensors_sum_check(double h, int n, std::size_t k = 0) {
    detail::require_threshold(h);
    oneshot::detail::require(n >= 2, "number of sensors must be >= 2");
    const double p = 2.0 / h;
    if (k == 0) k = detail::default_count(p);
    const double eta = eta_root(h);
    detail::RootFactors phi(Family::phi, p);
    detail::RootFactors theta(Family::theta, p);
    phi.extend(k);
    theta.extend(k);
    const double shift = static_cast<double>(n - 2) * (1.0 - p * p * eta * eta);
    return detail::tapered_cross_sum(k, phi, theta, shift).value;
}

}  // namespace oneshot::spectral
