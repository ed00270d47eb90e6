// Calibrates a two-sensor network for a false-alarm target, then checks the
// exact detection delay against a short simulation.

#include <oneshot/calibration.hpp>
#include <oneshot/fusion.hpp>
#include <oneshot/spectral.hpp>

#include <cstdio>

int main() {
    const double mu = 1.0;
    const double gamma = 1000.0;
    const auto sensors = oneshot::identical_sensors(2, mu);

    const auto cal = oneshot::calibrate(mu, gamma, 2);
    const double exact = oneshot::spectral::e0_inf_series(mu, cal.h).total;
    std::printf("gamma = %g: nu = %.6f, h = %.6f\n", gamma, cal.nu, cal.h);
    std::printf("single-sensor delay %.4f, two-sensor delay %.4f, limit of the gap %.4f\n",
                oneshot::detection_delay_single(mu, cal.nu), exact, oneshot::gap_bound(mu, 2));

    const auto scenario = oneshot::Scenario::single_change(2, 0);
    oneshot::PathConfig cfg;
    cfg.dt = 1e-3;
    cfg.seed = 7;
    cfg.horizon = oneshot::default_horizon(sensors, scenario, cal.h);
    const auto est = oneshot::estimate_mean_time(sensors, scenario, cal.h, cfg, 2000);
    std::printf("simulated delay %.4f +- %.4f (%lld runs, %lld censored)\n", est.mean, est.std_error,
                static_cast<long long>(est.n_effective), static_cast<long long>(est.n_censored));
    return 0;
}
