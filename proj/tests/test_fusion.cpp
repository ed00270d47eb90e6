#include <oneshot/fusion.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

using namespace oneshot;

namespace {

PathConfig config(std::uint64_t seed, double dt = 1e-3, double horizon = 1e4) {
    PathConfig cfg;
    cfg.seed = seed;
    cfg.dt = dt;
    cfg.horizon = horizon;
    return cfg;
}

void expect_same_decision(const StoppingResult& central, const FusionDecision& fused) {
    EXPECT_EQ(central.stopped, !fused.censored);
    EXPECT_EQ(central.time, fused.time);
    EXPECT_EQ(central.sensor, fused.first_sensor);
}

}  // namespace

TEST(Protocol, SingleSensorIsTheCusumStoppingTime) {
    const auto s = identical_sensors(1, 1.0);
    for (double tau : {0.0, 2.0, kNever}) {
        PathConfig cfg = config(4);
        for (std::uint64_t rep = 0; rep < 50; ++rep) {
            cfg.rep_index = rep;
            const Scenario sc({tau});
            const auto run = simulate_protocol(s, sc, 3.0, cfg);
            expect_same_decision(run_stopping_time(s, sc, 3.0, cfg), run.decision);
            ASSERT_EQ(run.messages.size(), 1U);
            EXPECT_EQ(run.messages[0].sensor, 1);
        }
    }
}

TEST(Protocol, FusionTimeIsPathwiseTheMultiChartTime) {
    const std::vector<SensorModel> mixed = {{1, 0.5}, {2, 1.0}, {3, 2.0}};
    const std::vector<std::pair<std::vector<SensorModel>, Scenario>> cases = {
        {identical_sensors(2, 1.0), Scenario({0.0, kNever})},
        {identical_sensors(2, 1.0), Scenario::no_change(2)},
        {identical_sensors(2, 1.0), Scenario({0.0, 0.0})},
        {identical_sensors(4, 1.5), Scenario({kNever, 3.0, kNever, 0.5})},
        {mixed, Scenario({0.7, kNever, 2.0})},
    };
    for (const auto& [sensors, sc] : cases) {
        PathConfig cfg = config(8);
        for (std::uint64_t rep = 0; rep < 200; ++rep) {
            cfg.rep_index = rep;
            expect_same_decision(run_stopping_time(sensors, sc, 2.5, cfg),
                                 simulate_protocol(sensors, sc, 2.5, cfg).decision);
        }
    }
}

TEST(Protocol, EachSensorSendsAtMostOneMessage) {
    const auto s = identical_sensors(3, 1.0);
    PathConfig cfg = config(12);
    for (std::uint64_t rep = 0; rep < 100; ++rep) {
        cfg.rep_index = rep;
        for (bool silence : {true, false}) {
            const auto run = simulate_protocol(s, Scenario({0.0, 0.0, kNever}), 3.0, cfg, {silence});
            std::set<int> senders;
            for (const auto& m : run.messages) {
                EXPECT_TRUE(senders.insert(m.sensor).second);
                EXPECT_GE(m.time, run.decision.time);
            }
            if (silence) {
                for (const auto& m : run.messages) EXPECT_EQ(m.time, run.decision.time);
            }
        }
    }
}

TEST(Protocol, WithoutSilenceEveryChangedSensorEventuallyAlarms) {
    const auto s = identical_sensors(3, 1.0);
    PathConfig cfg = config(13);
    for (std::uint64_t rep = 0; rep < 50; ++rep) {
        cfg.rep_index = rep;
        const Scenario sc({0.0, 0.0, 0.0});
        const auto loud = simulate_protocol(s, sc, 3.0, cfg, {false});
        EXPECT_EQ(loud.messages.size(), 3U);
        const auto quiet = simulate_protocol(s, sc, 3.0, cfg);
        EXPECT_EQ(loud.decision.time, quiet.decision.time);
        EXPECT_EQ(loud.decision.first_sensor, quiet.decision.first_sensor);
    }
}

TEST(Protocol, TiesGoToLowestIndex) {
    const auto s = identical_sensors(2, 20.0);
    PathConfig cfg = config(1, 0.05, 100.0);
    int ties = 0;
    for (std::uint64_t rep = 0; rep < 200; ++rep) {
        cfg.rep_index = rep;
        const auto run = simulate_protocol(s, Scenario({0.0, 0.0}), 0.5, cfg);
        if (run.messages.size() == 2 && run.messages[0].step == run.messages[1].step) {
            ++ties;
            EXPECT_EQ(run.decision.first_sensor, 1);
        }
    }
    EXPECT_GT(ties, 10);
}

TEST(Protocol, ZeroThresholdAlarmsEverywhereAtTimeZero) {
    const auto s = identical_sensors(3, 1.0);
    const auto run = simulate_protocol(s, Scenario::no_change(3), 0.0, config(0));
    EXPECT_EQ(run.messages.size(), 3U);
    EXPECT_EQ(run.decision.time, 0.0);
    EXPECT_EQ(run.decision.first_sensor, 1);
}

TEST(Protocol, HorizonCensoring) {
    const auto s = identical_sensors(2, 1.0);
    const auto run = simulate_protocol(s, Scenario::no_change(2), 30.0, config(0, 1e-2, 5.0));
    EXPECT_TRUE(run.decision.censored);
    EXPECT_TRUE(run.messages.empty());
    EXPECT_EQ(run.decision.time, 5.0);
    EXPECT_FALSE(run.decision.first_sensor.has_value());
}

TEST(Summarize, ExcludesCensoredReplications) {
    const std::vector<FusionDecision> d = {{1.0, 1, false}, {3.0, 2, false}, {100.0, std::nullopt, true}};
    const auto e = summarize(d);
    EXPECT_EQ(e.n_effective, 2);
    EXPECT_EQ(e.n_censored, 1);
    EXPECT_DOUBLE_EQ(e.mean, 2.0);
    EXPECT_DOUBLE_EQ(e.std_error, 1.0);
    const std::vector<FusionDecision> none = {{5.0, std::nullopt, true}};
    EXPECT_TRUE(std::isnan(summarize(none).mean));
}

TEST(Estimate, RequiresEnoughReplications) {
    const auto s = identical_sensors(2, 1.0);
    EXPECT_THROW(estimate_mean_time(s, Scenario::no_change(2), 3.0, config(0), 99), DomainError);
}

TEST(Estimate, IndependentOfThreadCount) {
    const auto s = identical_sensors(2, 1.0);
    const auto a = estimate_mean_time(s, Scenario({0.0, kNever}), 4.0, config(3), 400, 1);
    const auto b = estimate_mean_time(s, Scenario({0.0, kNever}), 4.0, config(3), 400, 4);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.std_error, b.std_error);
}

TEST(Estimate, AgreesWithSeriesForTwoCharts) {
    const auto s = identical_sensors(2, 1.0);
    const double h = 5.0;
    const double dt = 1e-3;
    // A grid walk overshoots both the threshold and the reflecting barrier by
    // about 0.5826 step standard deviations, so it behaves like the continuous
    // chart at a threshold raised by twice that.
    const double h_eff = h + 2.0 * 0.5826 * std::sqrt(dt);
    const auto e0 = estimate_mean_time(s, Scenario({0.0, kNever}), h, config(21, dt), 10000, 1);
    const double exact0 = spectral::e0_inf_series(1.0, h_eff).total;
    EXPECT_NEAR(e0.mean, exact0, 3.0 * e0.std_error);
    const auto einf = estimate_mean_time(s, Scenario::no_change(2), h, config(22, dt), 10000, 1);
    const double exact_inf = spectral::einf_inf_series(1.0, h_eff).total;
    EXPECT_NEAR(einf.mean, exact_inf, 3.0 * einf.std_error);
    EXPECT_EQ(einf.n_censored, 0);
}

TEST(Estimate, StandardErrorShrinksLikeSquareRootOfReps) {
    const auto s = identical_sensors(2, 1.0);
    const Scenario sc({0.0, kNever});
    const auto a = estimate_mean_time(s, sc, 4.0, config(31), 4000, 1);
    const auto b = estimate_mean_time(s, sc, 4.0, config(31), 8000, 1);
    EXPECT_NEAR(a.std_error / b.std_error, std::sqrt(2.0), 0.1 * std::sqrt(2.0));
}

TEST(Estimate, MoreChangedSensorsDetectFaster) {
    const auto s = identical_sensors(2, 1.0);
    const auto both = estimate_mean_time(s, Scenario({0.0, 0.0}), 5.0, config(41), 4000, 1);
    const auto one = estimate_mean_time(s, Scenario({0.0, kNever}), 5.0, config(42), 4000, 1);
    EXPECT_LT(both.mean + 2.0 * std::hypot(both.std_error, one.std_error), one.mean);
}

TEST(Estimate, ChangedSensorUsuallyAlarmsFirst) {
    const auto s = identical_sensors(2, 1.0);
    PathConfig cfg = config(2025);
    const auto d = simulate_replications(s, Scenario({0.0, kNever}), 6.0, cfg, 2000, 1);
    int changed_first = 0;
    for (const auto& x : d) changed_first += x.first_sensor == 1 ? 1 : 0;
    const double share = changed_first / 2000.0;
    EXPECT_GT(share, 0.9);
    // Regression value for this seed.
    EXPECT_EQ(changed_first, 1989);
}

TEST(DelayProbe, SingleSensorMatchesClosedForm) {
    const auto s = identical_sensors(1, 1.0);
    const auto p = worst_case_delay_probe(s, 4.0, config(51), 4000, 1);
    const double exact = detection_delay_single(1.0, 4.0);
    EXPECT_NEAR(p.delay.mean, exact, 3.0 * p.delay.std_error + 0.01 * exact);
}

TEST(DelayProbe, IdenticalSensorsAreSymmetric) {
    const auto s = identical_sensors(2, 1.0);
    const auto p = worst_case_delay_probe(s, 6.0, config(61), 2000, 1);
    ASSERT_TRUE(p.symmetric.has_value());
    EXPECT_TRUE(*p.symmetric) << p.max_z;
    ASSERT_EQ(p.by_changed.size(), 2U);
    const double exact = spectral::e0_inf_series(1.0, 6.0).total;
    EXPECT_NEAR(p.delay.mean, exact, 0.03 * exact);
    const std::vector<SensorModel> mixed = {{1, 1.0}, {2, 2.0}};
    EXPECT_FALSE(worst_case_delay_probe(mixed, 3.0, config(62), 200, 1).symmetric.has_value());
}

TEST(DefaultHorizon, ScalesTheSmallestSingleSensorMean) {
    const auto s = identical_sensors(2, 1.0);
    EXPECT_NEAR(default_horizon(s, Scenario::no_change(2), 6.0), 20.0 * mean_false_alarm_single(1.0, 6.0), 1e-9);
    EXPECT_NEAR(default_horizon(s, Scenario({1.0, kNever}), 6.0), 50.0 * (1.0 + detection_delay_single(1.0, 6.0)),
                1e-9);
    EXPECT_EQ(default_horizon(s, Scenario({0.0, 0.0}), 0.0), 1.0);
}
