#include <oneshot/rng.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <vector>

using oneshot::rng::NormalStream;

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

std::vector<double> draws(std::uint64_t seed, std::size_t n) {
    std::vector<double> out(n);
    NormalStream(seed, 0, 1).fill(0, out);
    return out;
}

}  // namespace

TEST(NormalStream, FillMatchesPointwiseDraws) {
    const NormalStream s(3, 14, 2);
    for (std::uint64_t first : {0ULL, 1ULL, 255ULL, 1000003ULL, (1ULL << 40) + 17}) {
        for (std::size_t len : {1UL, 7UL, 256UL, 257UL, 5000UL}) {
            std::vector<double> block(len);
            s.fill(first, block);
            for (std::size_t k = 0; k < len; ++k) ASSERT_EQ(block[k], s.at(first + k)) << first << " " << k;
        }
    }
}

TEST(NormalStream, MomentsMatchStandardNormal) {
    const auto z = draws(1, 2000000);
    const double n = static_cast<double>(z.size());
    double m1 = 0.0, m2 = 0.0, m4 = 0.0;
    for (double v : z) {
        m1 += v;
        m2 += v * v;
        m4 += v * v * v * v;
    }
    m1 /= n;
    m2 /= n;
    m4 /= n;
    EXPECT_NEAR(m1, 0.0, 4.0 / std::sqrt(n));
    EXPECT_NEAR(m2, 1.0, 4.0 * std::sqrt(2.0 / n));
    EXPECT_NEAR(m4, 3.0, 4.0 * std::sqrt(96.0 / n));
}

TEST(NormalStream, TailFrequenciesMatch) {
    const auto z = draws(2, 4000000);
    const double n = static_cast<double>(z.size());
    for (double a : {2.0, 3.0, 3.6541528853610088, 4.0}) {
        const double p = 2.0 * normal_cdf(-a);
        const double freq =
            static_cast<double>(std::count_if(z.begin(), z.end(), [a](double v) { return std::fabs(v) > a; })) / n;
        EXPECT_NEAR(freq, p, 4.0 * std::sqrt(p * (1 - p) / n)) << "a=" << a;
    }
}

TEST(NormalStream, KolmogorovSmirnovAgainstNormalCdf) {
    auto z = draws(3, 200000);
    std::sort(z.begin(), z.end());
    const double n = static_cast<double>(z.size());
    double d = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double f = normal_cdf(z[i]);
        d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
    }
    // 1% critical value of the KS statistic.
    EXPECT_LT(d, 1.63 / std::sqrt(n));
}

TEST(NormalStream, StreamsForDifferentSensorsAreUncorrelated) {
    const std::size_t n = 1000000;
    std::vector<double> a(n), b(n), c(n);
    NormalStream(9, 0, 1).fill(0, a);
    NormalStream(9, 0, 2).fill(0, b);
    NormalStream(9, 1, 1).fill(0, c);
    double ab = 0.0, ac = 0.0, lag = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        ab += a[k] * b[k];
        ac += a[k] * c[k];
        if (k > 0) lag += a[k] * a[k - 1];
    }
    const double bound = 4.0 * std::sqrt(static_cast<double>(n));
    EXPECT_LT(std::fabs(ab), bound);
    EXPECT_LT(std::fabs(ac), bound);
    EXPECT_LT(std::fabs(lag), bound);
}

TEST(StreamKey, DistinctAcrossSeedReplicationAndSensor) {
    std::set<std::uint64_t> keys;
    for (std::uint64_t seed = 0; seed < 8; ++seed)
        for (std::uint64_t rep = 0; rep < 64; ++rep)
            for (std::uint64_t id = 1; id <= 4; ++id) keys.insert(oneshot::rng::stream_key(seed, rep, id));
    EXPECT_EQ(keys.size(), 8U * 64U * 4U);
}

TEST(OpenUniform, StaysInsideUnitInterval) {
    EXPECT_GT(oneshot::rng::open_uniform(0), 0.0);
    EXPECT_LT(oneshot::rng::open_uniform(~0ULL), 1.0);
}
