#pragma once

// Counter-keyed Gaussian noise.
//
// Every standard normal used by the simulators is a pure function of
// (seed, rep_index, sensor_id, step). Uniform bits come from the SplitMix64
// output function evaluated at a counter, so any step can be drawn without
// replaying the ones before it, and a replication's result does not depend
// on how replications are scheduled across threads.
//
// Normals use a 256-layer ziggurat. NormalStream::fill runs the fast path
// over a whole block (the loop is branch-free and vectorizes) and patches
// the ~1.5% of steps that need the wedge or tail path afterwards; it returns
// exactly the same values as NormalStream::at.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>

namespace oneshot::rng {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Output number `index` of the SplitMix64 sequence started at `key`.
constexpr std::uint64_t splitmix_at(std::uint64_t key, std::uint64_t index) noexcept {
    return mix64(key + (index + 1) * kGolden);
}

constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t rep_index,
                                   std::uint64_t sensor_id) noexcept {
    std::uint64_t k = mix64(seed ^ 0x6a09e667f3bcc909ULL);
    k = mix64(k ^ (rep_index * kGolden + 0xbb67ae8584caa73bULL));
    k = mix64(k ^ (sensor_id * 0xd1b54a32d192ed03ULL + 0x3c6ef372fe94f82bULL));
    return k;
}

/// 52-bit uniform on (0, 1); both ends are excluded exactly.
inline double open_uniform(std::uint64_t bits) noexcept {
    return (static_cast<double>(bits >> 12) + 0.5) * 0x1p-52;
}

namespace detail {

struct ZigguratTable {
    static constexpr int kLayers = 256;
    static constexpr double kTailStart = 3.6541528853610088;  // R
    static constexpr double kLayerArea = 4.92867323399e-3;    // V

    alignas(64) std::array<double, kLayers + 1> x{};
    alignas(64) std::array<double, kLayers> ratio{};
    std::array<double, kLayers + 1> density{};  // exp(-x^2 / 2)

    ZigguratTable() {
        double f = std::exp(-0.5 * kTailStart * kTailStart);
        x[0] = kLayerArea / f;
        x[1] = kTailStart;
        for (int i = 2; i < kLayers; ++i) {
            x[i] = std::sqrt(-2.0 * std::log(kLayerArea / x[i - 1] + f));
            f = std::exp(-0.5 * x[i] * x[i]);
        }
        x[kLayers] = 0.0;
        for (int i = 0; i < kLayers; ++i) ratio[i] = x[i + 1] / x[i];
        for (int i = 0; i <= kLayers; ++i) density[i] = std::exp(-0.5 * x[i] * x[i]);
    }
};

inline const ZigguratTable& ziggurat() {
    static const ZigguratTable table;
    return table;
}

// Layer index from the low 8 bits, signed uniform in [-1, 1) from the top 53.
inline int layer_of(std::uint64_t bits) noexcept { return static_cast<int>(bits & 255U); }
inline double signed_uniform(std::uint64_t bits) noexcept {
    return static_cast<double>(static_cast<std::int64_t>(bits) >> 11) * 0x1p-52;
}

// Fast ziggurat pass over n consecutive steps: dst[k] holds the candidate
// value and reject[k] marks the steps that need the slow path.
inline void fast_layers(std::uint64_t key, std::uint64_t first_step, double* __restrict dst,
                        unsigned char* __restrict reject, std::size_t n) noexcept {
    const auto& zt = ziggurat();
    const double* __restrict xs = zt.x.data();
    const double* __restrict ratio = zt.ratio.data();
    for (std::size_t k = 0; k < n; ++k) {
        const std::uint64_t bits = splitmix_at(key, first_step + k);
        const int i = layer_of(bits);
        const double u = signed_uniform(bits);
        dst[k] = u * xs[i];
        reject[k] = !(std::fabs(u) < ratio[i]);
    }
}

}  // namespace detail

class NormalStream {
public:
    NormalStream() = default;
    explicit NormalStream(std::uint64_t key) noexcept
        : key_(key), retry_key_(mix64(key ^ 0xa54ff53a5f1d36f1ULL)) {}

    NormalStream(std::uint64_t seed, std::uint64_t rep_index, std::uint64_t sensor_id) noexcept
        : NormalStream(stream_key(seed, rep_index, sensor_id)) {}

    std::uint64_t key() const noexcept { return key_; }

    /// Standard normal for grid step `step`.
    double at(std::uint64_t step) const noexcept {
        const auto& zt = detail::ziggurat();
        const std::uint64_t bits = splitmix_at(key_, step);
        const int i = detail::layer_of(bits);
        const double u = detail::signed_uniform(bits);
        if (std::fabs(u) < zt.ratio[i]) return u * zt.x[i];
        return slow_path(step, bits);
    }

    /// out[k] = at(first_step + k).
    void fill(std::uint64_t first_step, std::span<double> out) const noexcept {
        constexpr std::size_t kChunk = 256;
        const auto& zt = detail::ziggurat();
        unsigned char reject[kChunk];
        std::uint16_t pending[kChunk];
        for (std::size_t base = 0; base < out.size(); base += kChunk) {
            const std::size_t n = std::min(kChunk, out.size() - base);
            double* dst = out.data() + base;
            detail::fast_layers(key_, first_step + base, dst, reject, n);
            // Branch-free compaction of the rejected positions; a data-dependent
            // branch per step costs more than the whole fast path.
            std::size_t count = 0;
            for (std::size_t k = 0; k < n; ++k) {
                pending[count] = static_cast<std::uint16_t>(k);
                count += reject[k];
            }
            // First wedge attempt for every rejected position, again without
            // branching on the outcome. Tail draws and failed attempts go to
            // slow_path, which repeats the same first attempt.
            std::size_t retry = 0;
            for (std::size_t r = 0; r < count; ++r) {
                const std::size_t k = pending[r];
                const std::uint64_t step = first_step + base + k;
                const std::uint64_t bits = splitmix_at(key_, step);
                const int i = detail::layer_of(bits);
                const double xx = detail::signed_uniform(bits) * zt.x[i];
                const double lo = zt.density[i];
                const double hi = zt.density[i + 1];
                const double v = open_uniform(splitmix_at(retry_key_, step << 12));
                const bool ok = (i != 0) & (lo + v * (hi - lo) < std::exp(-0.5 * xx * xx));
                dst[k] = xx;
                pending[retry] = static_cast<std::uint16_t>(k);
                retry += !ok;
            }
            for (std::size_t r = 0; r < retry; ++r) {
                const std::uint64_t step = first_step + base + pending[r];
                dst[pending[r]] = slow_path(step, splitmix_at(key_, step));
            }
        }
    }

private:
    // Wedge and tail handling; extra draws come from a separate counter
    // space indexed by (step, attempt) so the result stays a function of step.
    double slow_path(std::uint64_t step, std::uint64_t bits) const noexcept {
        const auto& zt = detail::ziggurat();
        std::uint64_t draw = step << 12;
        auto next = [&] { return splitmix_at(retry_key_, draw++); };
        for (;;) {
            const int i = detail::layer_of(bits);
            const double u = detail::signed_uniform(bits);
            if (std::fabs(u) < zt.ratio[i]) return u * zt.x[i];
            if (i == 0) {
                constexpr double r = detail::ZigguratTable::kTailStart;
                double tx = 0.0;
                double ty = 0.0;
                do {
                    tx = -std::log(open_uniform(next())) / r;
                    ty = -std::log(open_uniform(next()));
                } while (ty + ty < tx * tx);
                return u > 0.0 ? r + tx : -r - tx;
            }
            const double xx = u * zt.x[i];
            const double lo = zt.density[i];
            const double hi = zt.density[i + 1];
            if (lo + open_uniform(next()) * (hi - lo) < std::exp(-0.5 * xx * xx)) return xx;
            bits = next();
        }
    }

    std::uint64_t key_ = 0;
    std::uint64_t retry_key_ = 0;
};

}  // namespace oneshot::rng
