#pragma once

// Discretized paths and the centralized multi-chart stopping time
//   T_h = inf{ t : max_i y_t^(i) >= h }
// evaluated on the grid t_k = k dt.
//
// Grid monitoring misses crossings that happen between grid points, so
// simulated means are biased slightly upward (roughly 0.58 sqrt(dt) mu in
// threshold units). Halving dt is the way to measure it.

#include <oneshot/errors.hpp>
#include <oneshot/model.hpp>
#include <oneshot/rng.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace oneshot {

namespace detail {

/// Per-sensor constants for one replication. Both run_stopping_time and the
/// fusion protocol take their steps from `drive` and `reflect`.
struct SensorPath {
    double mu = 1.0;
    double post_drift = 0.0;   // mu dt
    double sqrt_dt = 0.0;
    double compensator = 0.0;  // mu^2 dt / 2
    std::int64_t change_at = 0;
    rng::NormalStream noise;

    SensorPath(const SensorModel& s, double tau, const PathConfig& cfg)
        : mu(s.mu),
          post_drift(s.mu * cfg.dt),
          sqrt_dt(std::sqrt(cfg.dt)),
          compensator(0.5 * s.mu * s.mu * cfg.dt),
          change_at(change_step(tau, cfg.dt)),
          noise(cfg.seed, cfg.rep_index, static_cast<std::uint64_t>(s.id)) {}

    double increment(std::int64_t step, double z) const noexcept {
        return (step >= change_at ? post_drift : 0.0) + sqrt_dt * z;
    }

    /// out[k] = mu dxi - compensator for steps from .. from + out.size() - 1,
    /// the term reflected_step adds to y.
    void drive(std::int64_t from, std::span<double> out) const noexcept {
        noise.fill(static_cast<std::uint64_t>(from), out);
        for (std::size_t k = 0; k < out.size(); ++k) {
            out[k] = mu * increment(from + static_cast<std::int64_t>(k), out[k]) - compensator;
        }
    }
};

inline constexpr std::int64_t kBlockSteps = 1024;

inline std::vector<SensorPath> make_paths(std::span<const SensorModel> sensors,
                                          const Scenario& scenario, const PathConfig& cfg) {
    std::vector<SensorPath> paths;
    paths.reserve(sensors.size());
    for (std::size_t i = 0; i < sensors.size(); ++i) paths.emplace_back(sensors[i], scenario[i], cfg);
    return paths;
}

inline void validate_run(std::span<const SensorModel> sensors, const Scenario& scenario, double h,
                         const PathConfig& cfg) {
    validate_network(sensors);
    detail::require(scenario.size() == sensors.size(),
                    "scenario must list one change point per sensor");
    detail::require(std::isfinite(h) && h >= 0.0, "threshold h must be finite and >= 0");
    validate(cfg);
}

}  // namespace detail

/// Observation increment of `sensor` over the grid interval starting at step
/// `step`: sqrt(dt) Z before the change, mu dt + sqrt(dt) Z from the first
/// step whose start time is >= tau_i.
inline double generate_increment(const PathConfig& cfg, const SensorModel& sensor,
                                 const Scenario& scenario, std::int64_t step) {
    validate(cfg);
    validate(sensor);
    detail::require(static_cast<std::size_t>(sensor.id) <= scenario.size(),
                    "sensor id has no change point in the scenario");
    detail::require(step >= 0, "step must be >= 0");
    const detail::SensorPath path(sensor, scenario[static_cast<std::size_t>(sensor.id) - 1], cfg);
    return path.increment(step, path.noise.at(static_cast<std::uint64_t>(step)));
}

/// Same, addressed by grid time t (rounded to the nearest grid point).
inline double generate_increment(const PathConfig& cfg, const SensorModel& sensor,
                                 const Scenario& scenario, double t) {
    detail::require(std::isfinite(t) && t >= 0.0 && t < cfg.horizon, "t must lie in [0, horizon)");
    const auto step = static_cast<std::int64_t>(std::floor(t / cfg.dt + 0.5));
    return generate_increment(cfg, sensor, scenario, step);
}

/// Centralized multi-chart CUSUM on one replication. Returns the first grid
/// time at which max_i y^(i) >= h. Simultaneous crossings go to the lowest
/// sensor id. Running out of horizon is a censored result, not an error.
inline StoppingResult run_stopping_time(std::span<const SensorModel> sensors,
                                        const Scenario& scenario, double h,
                                        const PathConfig& cfg) {
    detail::validate_run(sensors, scenario, h, cfg);
    const std::size_t n = sensors.size();

    StoppingResult result;
    if (h == 0.0) {  // every statistic starts at the barrier
        result.stopped = true;
        result.sensor = sensors.front().id;
        return result;
    }

    const auto paths = detail::make_paths(sensors, scenario, cfg);
    const std::int64_t total = horizon_steps(cfg);
    std::vector<double> y(n, 0.0);
    std::vector<std::array<double, detail::kBlockSteps>> v(n);

    for (std::int64_t start = 0; start < total; start += detail::kBlockSteps) {
        const std::int64_t len = std::min(detail::kBlockSteps, total - start);
        for (std::size_t i = 0; i < n; ++i) {
            paths[i].drive(start, std::span<double>(v[i].data(), static_cast<std::size_t>(len)));
        }
        for (std::int64_t k = 0; k < len; ++k) {
            double top = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                y[i] = reflect(y[i], v[i][static_cast<std::size_t>(k)]);
                top = std::max(top, y[i]);
            }
            if (top >= h) {
                std::size_t first = 0;
                while (y[first] < h) ++first;
                const std::int64_t step = start + k;
                result.stopped = true;
                result.steps = step + 1;
                result.time = static_cast<double>(step + 1) * cfg.dt;
                result.sensor = sensors[first].id;
                return result;
            }
        }
    }
    result.steps = total;
    result.time = cfg.horizon;
    return result;
}

}  // namespace oneshot
