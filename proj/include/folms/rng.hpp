#ifndef FOLMS_RNG_HPP
#define FOLMS_RNG_HPP

#include <cmath>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace folms {

/// SplitMix64 finalizer. Used only to derive well-separated seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derive the seed of a substream from a master seed and a path of stream ids.
///
/// Stream layout used throughout the project:
///   master -> grid point index -> replica index -> component
/// where component is one of the `Stream` values below. Each level is mixed
/// with SplitMix64, so a replica's draws depend only on its own path and never
/// on how many other replicas or grid points exist.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t s = splitmix64(master);
    for (auto id : path) {
        s = splitmix64(s ^ splitmix64(id + 0x632be59bd9b4e019ULL));
    }
    return s;
}

enum class Stream : std::uint64_t {
    known_signal = 1,
    channel = 2,
    carrier = 3,
    sampling = 4,
    noise = 5,
};

/// 64-bit Mersenne Twister with Gaussian helpers.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double gaussian(double variance) {
        if (variance <= 0.0) {
            return 0.0;
        }
        return std::sqrt(variance) * normal_(engine_);
    }

    /// Circularly-symmetric complex Gaussian with E|z|^2 = variance.
    std::complex<double> complex_gaussian(double variance) {
        if (variance <= 0.0) {
            return {0.0, 0.0};
        }
        const double s = std::sqrt(0.5 * variance);
        const double re = normal_(engine_);
        const double im = normal_(engine_);
        return {s * re, s * im};
    }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

} // namespace folms

#endif // FOLMS_RNG_HPP
