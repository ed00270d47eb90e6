#pragma once

// One-shot decentralized protocol and Monte Carlo estimators.
//
// Each sensor runs its own CUSUM and sends a single alarm message when its
// statistic first reaches h. The fusion center stops at the first message it
// receives. On a shared noise stream this is the multi-chart stopping time
// of run_stopping_time, step for step.

#include <oneshot/calibration.hpp>
#include <oneshot/errors.hpp>
#include <oneshot/model.hpp>
#include <oneshot/simulate.hpp>
#include <oneshot/summation.hpp>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <thread>
#include <vector>

namespace oneshot {

struct AlarmMessage {
    int sensor = 0;
    double time = 0.0;
    std::int64_t step = 0;  // grid steps taken when the alarm fired
};

struct FusionDecision {
    double time = 0.0;  // first alarm time, or the horizon when censored
    std::optional<int> first_sensor;
    bool censored = true;
};

struct ProtocolRun {
    std::vector<AlarmMessage> messages;  // in sensor order, at most one per sensor
    FusionDecision decision;
};

struct ProtocolOptions {
    // Stop each sensor once the fusion center has decided. Without this
    // every sensor runs to its own alarm or to the horizon.
    bool silence_after_decision = true;
};

namespace detail {

// Runs one sensor's chain over steps [from, to). Returns the step at which
// y >= h, or -1.
inline std::int64_t advance_chain(const SensorPath& path, double& y, double h, std::int64_t from,
                                  std::int64_t to, std::array<double, kBlockSteps>& v) {
    const auto len = static_cast<std::size_t>(to - from);
    path.drive(from, std::span<double>(v.data(), len));
    double state = y;
    for (std::size_t k = 0; k < len; ++k) {
        state = reflect(state, v[k]);
        if (state >= h) {
            y = state;
            return from + static_cast<std::int64_t>(k);
        }
    }
    y = state;
    return -1;
}

}  // namespace detail

/// Simulates the protocol on the same noise streams as run_stopping_time.
/// Sensors advance independently, block by block; once one has alarmed at
/// step s the others only need to be checked through s.
inline ProtocolRun simulate_protocol(std::span<const SensorModel> sensors, const Scenario& scenario, double h,
                                     const PathConfig& cfg, const ProtocolOptions& opt = {}) {
    detail::validate_run(sensors, scenario, h, cfg);
    const std::size_t n = sensors.size();
    ProtocolRun run;

    if (h == 0.0) {
        for (const auto& s : sensors) run.messages.push_back({s.id, 0.0, 0});
        run.decision = {0.0, sensors.front().id, false};
        return run;
    }

    const auto paths = detail::make_paths(sensors, scenario, cfg);
    const std::int64_t total = horizon_steps(cfg);
    std::vector<double> y(n, 0.0);
    std::vector<bool> sent(n, false);
    std::array<double, detail::kBlockSteps> v{};
    constexpr std::int64_t kUndecided = std::numeric_limits<std::int64_t>::max();
    std::int64_t decided_at = kUndecided;

    std::size_t pending = n;
    for (std::int64_t start = 0; start < total && pending > 0; start += detail::kBlockSteps) {
        if (opt.silence_after_decision && start > decided_at) break;
        const std::int64_t block_end = std::min(start + detail::kBlockSteps, total);
        for (std::size_t i = 0; i < n; ++i) {
            if (sent[i]) continue;
            std::int64_t end = block_end;
            if (opt.silence_after_decision && decided_at != kUndecided) end = std::min(end, decided_at + 1);
            if (end <= start) continue;
            const std::int64_t hit = detail::advance_chain(paths[i], y[i], h, start, end, v);
            if (hit < 0) continue;
            sent[i] = true;
            --pending;
            run.messages.push_back({sensors[i].id, static_cast<double>(hit + 1) * cfg.dt, hit + 1});
            decided_at = std::min(decided_at, hit);
        }
    }
    if (opt.silence_after_decision && decided_at != kUndecided) {
        // A sensor handled earlier in the same block may have alarmed after
        // the decision; it would have been silenced by then.
        std::erase_if(run.messages, [&](const AlarmMessage& m) { return m.step > decided_at + 1; });
    }
    std::sort(run.messages.begin(), run.messages.end(),
              [](const AlarmMessage& a, const AlarmMessage& b) { return a.sensor < b.sensor; });

    if (run.messages.empty()) {
        run.decision = {cfg.horizon, std::nullopt, true};
        return run;
    }
    const AlarmMessage* first = &run.messages.front();
    for (const auto& m : run.messages) {
        if (m.step < first->step) first = &m;  // ties keep the lowest id
    }
    run.decision = {first->time, first->sensor, false};
    return run;
}

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::int64_t n_effective = 0;  // uncensored replications
    std::int64_t n_censored = 0;
};

/// Fusion decisions for replications rep_index, ..., rep_index + reps - 1
/// of `cfg`, in that order. `threads` = 0 uses the hardware concurrency.
inline std::vector<FusionDecision> simulate_replications(std::span<const SensorModel> sensors,
                                                         const Scenario& scenario, double h,
                                                         const PathConfig& cfg, std::int64_t reps,
                                                         unsigned threads = 0) {
    detail::validate_run(sensors, scenario, h, cfg);
    detail::require(reps >= 1, "reps must be >= 1");
    std::vector<FusionDecision> out(static_cast<std::size_t>(reps));
    auto work = [&](std::int64_t r) {
        PathConfig c = cfg;
        c.rep_index = cfg.rep_index + static_cast<std::uint64_t>(r);
        out[static_cast<std::size_t>(r)] = simulate_protocol(sensors, scenario, h, c).decision;
    };
    if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::int64_t>(threads, reps));
    if (threads <= 1) {
        for (std::int64_t r = 0; r < reps; ++r) work(r);
        return out;
    }
    std::atomic<std::int64_t> next{0};
    {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                for (std::int64_t r = next++; r < reps; r = next++) work(r);
            });
        }
    }
    return out;
}

/// Mean and standard error over uncensored decisions, summed in index order.
inline McEstimate summarize(std::span<const FusionDecision> decisions) {
    McEstimate est;
    NeumaierSum sum;
    for (const auto& d : decisions) {
        if (d.censored) {
            ++est.n_censored;
            continue;
        }
        ++est.n_effective;
        sum.add(d.time);
    }
    if (est.n_effective == 0) {
        est.mean = std::numeric_limits<double>::quiet_NaN();
        est.std_error = std::numeric_limits<double>::quiet_NaN();
        return est;
    }
    est.mean = sum.value() / static_cast<double>(est.n_effective);
    NeumaierSum sq;
    for (const auto& d : decisions) {
        if (!d.censored) sq.add((d.time - est.mean) * (d.time - est.mean));
    }
    const auto n = static_cast<double>(est.n_effective);
    est.std_error = est.n_effective > 1 ? std::sqrt(sq.value() / (n - 1.0) / n)
                                        : std::numeric_limits<double>::quiet_NaN();
    return est;
}

inline McEstimate estimate_mean_time(std::span<const SensorModel> sensors, const Scenario& scenario, double h,
                                     const PathConfig& cfg, std::int64_t reps, unsigned threads = 0) {
    detail::require(reps >= 100, "reps must be >= 100");
    const auto decisions = simulate_replications(sensors, scenario, h, cfg, reps, threads);
    return summarize(decisions);
}

struct DelayProbe {
    McEstimate delay;                       // change at sensor 1 only
    std::vector<McEstimate> by_changed;     // change at sensor i only, i = 1..N
    std::optional<bool> symmetric;          // 3-sigma agreement; set when all mu are equal
    double max_z = 0.0;                     // largest |difference| / joint standard error
};

/// Worst-case delay estimate: one sensor changes at 0 with its CUSUM at 0,
/// the others never change. Every choice of changed sensor is simulated.
inline DelayProbe worst_case_delay_probe(std::span<const SensorModel> sensors, double h, const PathConfig& cfg,
                                         std::int64_t reps, unsigned threads = 0) {
    validate_network(sensors);
    DelayProbe probe;
    for (std::size_t i = 0; i < sensors.size(); ++i) {
        probe.by_changed.push_back(
            estimate_mean_time(sensors, Scenario::single_change(sensors.size(), i), h, cfg, reps, threads));
    }
    probe.delay = probe.by_changed.front();
    const bool identical = std::all_of(sensors.begin(), sensors.end(),
                                       [&](const SensorModel& s) { return s.mu == sensors.front().mu; });
    if (identical) {
        for (const auto& e : probe.by_changed) {
            const double se = std::hypot(e.std_error, probe.delay.std_error);
            if (se > 0.0) probe.max_z = std::max(probe.max_z, std::fabs(e.mean - probe.delay.mean) / se);
        }
        probe.symmetric = probe.max_z <= 3.0;
    }
    return probe;
}

/// Default simulation horizon: the smallest single-sensor mean under the
/// scenario (an upper bound on the multi-chart mean), times 50, or times 20
/// when no sensor changes.
inline double default_horizon(std::span<const SensorModel> sensors, const Scenario& scenario, double h) {
    validate_network(sensors);
    detail::require(scenario.size() == sensors.size(), "scenario must list one change point per sensor");
    detail::require(std::isfinite(h) && h >= 0.0, "threshold h must be finite and >= 0");
    double bound = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < sensors.size(); ++i) {
        const double mu = sensors[i].mu;
        const double tau = scenario[i];
        const double mean = tau == kNever ? mean_false_alarm_single(mu, h) : tau + detection_delay_single(mu, h);
        bound = std::min(bound, mean);
    }
    const double factor = scenario.at_least_one_finite() ? 50.0 : 20.0;
    return std::max(factor * bound, 1.0);
}

}  // namespace oneshot
