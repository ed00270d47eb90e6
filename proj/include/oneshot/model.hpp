#pragma once

// Observation model and CUSUM statistic for N independent Brownian sensors.
//
// Sensor i observes d(xi_t) = dw_t before its change point tau_i and
// mu_i dt + dw_t after it. Each sensor runs the reflected log-likelihood
// statistic y_t = u_t - min_{s<=t} u_s with u_t = mu xi_t - mu^2 t / 2.

#include <oneshot/errors.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace oneshot {

/// Change point value meaning "this sensor never changes". Serialized as `inf`.
inline constexpr double kNever = std::numeric_limits<double>::infinity();

struct SensorModel {
    int id = 1;       // 1-based position in the network
    double mu = 1.0;  // post-change drift per unit time
};

inline void validate(const SensorModel& s) {
    detail::require(s.id >= 1, "sensor id must be >= 1");
    detail::require(std::isfinite(s.mu) && s.mu > 0.0,
                    "sensor " + std::to_string(s.id) + ": mu must be positive and finite");
}

/// Identical sensors 1..n with a common drift.
inline std::vector<SensorModel> identical_sensors(int n, double mu) {
    detail::require(n >= 1, "number of sensors must be >= 1");
    std::vector<SensorModel> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) out.push_back({i, mu});
    return out;
}

/// Checks that ids run 1..N in order so that "lowest index" is well defined.
inline void validate_network(std::span<const SensorModel> sensors) {
    detail::require(!sensors.empty(), "at least one sensor is required");
    for (std::size_t i = 0; i < sensors.size(); ++i) {
        validate(sensors[i]);
        detail::require(sensors[i].id == static_cast<int>(i) + 1,
                        "sensor ids must be 1..N in order");
    }
}

/// Change points tau_1..tau_N defining the measure P_{tau_1,...,tau_N}.
class Scenario {
public:
    Scenario() = default;

    explicit Scenario(std::vector<double> change_points)
        : change_points_(std::move(change_points)) {
        for (double tau : change_points_) {
            detail::require(tau == kNever || (std::isfinite(tau) && tau >= 0.0),
                            "change points must be >= 0 or inf");
        }
    }

    /// tau_index = 0 for one sensor, inf for the rest.
    static Scenario single_change(std::size_t n, std::size_t index) {
        detail::require(index < n, "changed sensor index out of range");
        std::vector<double> taus(n, kNever);
        taus[index] = 0.0;
        return Scenario(std::move(taus));
    }

    static Scenario no_change(std::size_t n) { return Scenario(std::vector<double>(n, kNever)); }

    std::size_t size() const noexcept { return change_points_.size(); }
    double operator[](std::size_t i) const { return change_points_.at(i); }
    std::span<const double> change_points() const noexcept { return change_points_; }

    bool at_least_one_finite() const noexcept {
        return std::any_of(change_points_.begin(), change_points_.end(),
                           [](double t) { return t != kNever; });
    }

    /// min_i tau_i, or kNever.
    double first_change() const noexcept {
        double m = kNever;
        for (double t : change_points_) m = std::min(m, t);
        return m;
    }

private:
    std::vector<double> change_points_;
};

/// Running CUSUM bookkeeping. Invariant: y = u - m >= 0, m <= u.
struct CusumState {
    double y = 0.0;
    double u = 0.0;
    double m = 0.0;
    double t = 0.0;
};

/// One update of the statistic from an observation increment over dt.
inline CusumState cusum_increment(const CusumState& s, double dxi, double mu, double dt) {
    detail::require(std::isfinite(dxi), "observation increment must be finite");
    detail::require(std::isfinite(dt) && dt > 0.0, "dt must be positive");
    CusumState next;
    next.u = s.u + mu * dxi - 0.5 * mu * mu * dt;
    next.m = std::min(s.m, next.u);
    next.y = next.u - next.m;
    next.t = s.t + dt;
    return next;
}

/// Max-form update y' = max(y + (mu dxi - compensator), 0) with
/// compensator = mu^2 dt / 2. Every simulator computes the drive term
/// mu dxi - compensator first and then reflects, so this is the single
/// definition of a simulated step.
inline double reflect(double y, double drive) noexcept { return std::max(y + drive, 0.0); }

inline double reflected_step(double y, double dxi, double mu, double compensator) noexcept {
    return reflect(y, mu * dxi - compensator);
}

struct PathConfig {
    double dt = 1e-3;
    double horizon = 1e4;
    std::uint64_t seed = 0;
    std::uint64_t rep_index = 0;
};

inline void validate(const PathConfig& cfg) {
    detail::require(std::isfinite(cfg.dt) && cfg.dt > 0.0, "dt must be positive");
    detail::require(std::isfinite(cfg.horizon) && cfg.horizon > 0.0, "horizon must be positive");
    detail::require(cfg.dt < cfg.horizon, "dt must be smaller than the horizon");
}

/// Number of grid steps that fit in [0, horizon].
inline std::int64_t horizon_steps(const PathConfig& cfg) {
    return static_cast<std::int64_t>(std::floor(cfg.horizon / cfg.dt));
}

/// First step index k whose interval (k dt, (k+1) dt] lies after tau,
/// i.e. the smallest k with k dt >= tau. Drift applies from this step on.
inline std::int64_t change_step(double tau, double dt) {
    if (tau == kNever) return std::numeric_limits<std::int64_t>::max();
    auto k = static_cast<std::int64_t>(std::ceil(tau / dt));
    while (k > 0 && static_cast<double>(k - 1) * dt >= tau) --k;
    while (static_cast<double>(k) * dt < tau) ++k;
    return k;
}

struct StoppingResult {
    bool stopped = false;
    double time = 0.0;           // crossing time, or the horizon when censored
    std::optional<int> sensor;   // id of the sensor that crossed first
    std::int64_t steps = 0;      // grid steps taken
};

}  // namespace oneshot
