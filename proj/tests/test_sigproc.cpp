#include "folms/rng.hpp"
#include "folms/sigproc.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

using namespace folms;
using namespace folms::sigproc;

namespace {

KnownSignal tone(double f, std::size_t n, int oversampling = 1) {
    CVec x(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = std::polar(1.0, 2.0 * std::numbers::pi * f * static_cast<double>(i));
    }
    return KnownSignal(std::move(x), 1.0, oversampling);
}

double mean_power(std::span<const cplx> x) { return norm_sq(x) / static_cast<double>(x.size()); }

// Periodic counterpart of the L = 2 generator: zero-stuffed white noise
// circularly filtered with the same band-limit filter, computed in the
// frequency domain.
CVec periodic_band_limited(std::size_t period, int l, std::uint64_t seed) {
    Rng rng(seed);
    CVec stuffed(period, cplx{0.0, 0.0});
    for (std::size_t i = 0; i < period; i += static_cast<std::size_t>(l)) {
        stuffed[i] = rng.complex_gaussian(1.0);
    }
    const auto h = band_limit_filter(l);
    CVec hp(period, cplx{0.0, 0.0});
    for (std::size_t k = 0; k < h.size(); ++k) {
        hp[k] = h[k];
    }
    auto xs = oracle::fft(stuffed);
    const auto hs = oracle::fft(hp);
    for (std::size_t k = 0; k < period; ++k) {
        xs[k] *= hs[k];
    }
    auto x = oracle::fft(xs, FFTW_BACKWARD);
    for (auto& z : x) {
        z /= static_cast<double>(period);
    }
    return x;
}

} // namespace

TEST_SUITE("sigproc") {

TEST_CASE("generated power matches the requested variance") {
    const auto s = generate_known_signal(1'000'000, 1.0, 2, 7);
    const double p = mean_power(s.samples());
    CHECK(p >= 0.99);
    CHECK(p <= 1.01);
    CHECK(s.length() == 1'000'000);
    CHECK(s.oversampling_factor() == 2);
}

TEST_CASE("mean power within three standard errors") {
    for (int l : {1, 2, 4}) {
        const std::size_t n = 20000;
        const auto s = generate_known_signal(n, 0.5, l, 11 + static_cast<std::uint64_t>(l));
        // |x|^2 is exponential, so its std equals its mean; band-limiting
        // correlates neighbours by at most L samples
        const double se = 0.5 * std::sqrt(static_cast<double>(2 * l) / static_cast<double>(n));
        CHECK(std::abs(mean_power(s.samples()) - 0.5) < 3.0 * se);
    }
}

TEST_CASE("L = 1 is white") {
    const std::size_t n = 100000;
    const auto s = generate_known_signal(n, 1.0, 1, 3);
    const auto x = s.samples();
    cplx r1{0.0, 0.0};
    for (std::size_t i = 1; i < n; ++i) {
        r1 += x[i] * std::conj(x[i - 1]);
    }
    r1 /= static_cast<double>(n - 1);
    CHECK(std::abs(r1) < 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("out-of-band power below -60 dB (periodogram)") {
    // Welch estimate with Hann segments: a raw periodogram leaks about 1/N of
    // the in-band power across the band edge, which alone reaches -52 dB here
    for (int l : {2, 4}) {
        const std::size_t n = 1 << 17;
        const std::size_t seg = 4096;
        const auto s = generate_known_signal(n, 1.0, l, 5);
        std::vector<double> psd(seg, 0.0);
        for (std::size_t start = 0; start + seg <= n; start += seg / 2) {
            CVec block(seg);
            for (std::size_t i = 0; i < seg; ++i) {
                const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / seg);
                block[i] = hann * s.samples()[start + i];
            }
            const auto spec = oracle::fft(block);
            for (std::size_t k = 0; k < seg; ++k) {
                psd[k] += std::norm(spec[k]);
            }
        }
        double total = 0.0;
        double out = 0.0;
        for (std::size_t k = 0; k < seg; ++k) {
            const double w = 2.0 * std::numbers::pi * oracle::signed_bin(k, seg) / static_cast<double>(seg);
            total += psd[k];
            if (std::abs(w) > std::numbers::pi / l) {
                out += psd[k];
            }
        }
        CAPTURE(l);
        CHECK(oracle::db(out / total) <= -60.0);
    }
}

TEST_CASE("generation is deterministic and validates its arguments") {
    const auto a = generate_known_signal(5000, 1.0, 2, 99);
    const auto b = generate_known_signal(5000, 1.0, 2, 99);
    const auto c = generate_known_signal(5000, 1.0, 2, 100);
    CHECK(std::equal(a.samples().begin(), a.samples().end(), b.samples().begin()));
    CHECK_FALSE(std::equal(a.samples().begin(), a.samples().end(), c.samples().begin()));
    CHECK_THROWS_AS(generate_known_signal(0, 1.0, 2, 1), std::invalid_argument);
    CHECK_THROWS_AS(generate_known_signal(10, 0.0, 2, 1), std::invalid_argument);
    CHECK_THROWS_AS(generate_known_signal(10, 1.0, 0, 1), std::invalid_argument);
}

TEST_CASE("interpolator kernel") {
    const Interpolator interp;
    CHECK(interp.kernel_half_width() == 16);
    CHECK(interp.window_shape() == 8.0);
    for (double t : {10.0, 10.125, 10.5, 10.9999, 123.3}) {
        const auto k = interp.kernel(t);
        double sum = 0.0;
        for (int i = 0; i < k.size; ++i) {
            sum += k.weights[static_cast<std::size_t>(i)];
        }
        CAPTURE(t);
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
    CHECK_THROWS_AS(Interpolator(0, 8.0), std::invalid_argument);
    CHECK_THROWS_AS(Interpolator(16, -1.0), std::invalid_argument);
}

TEST_CASE("sample_at is exact at integers") {
    const auto s = generate_known_signal(4000, 1.0, 2, 21);
    CHECK(sample_at(s, 42.0) == s.samples()[42]);
    for (std::size_t t = 16; t < 3984; t += 97) {
        CHECK(sample_at(s, static_cast<double>(t)) == s.samples()[t]);
    }
}

TEST_CASE("sample_at on a tone") {
    const auto s = tone(0.1, 400);
    const cplx expect = std::polar(1.0, 2.0 * std::numbers::pi * 0.1 * 100.5);
    CHECK(oracle::db(std::norm(sample_at(s, 100.5) - expect)) < -60.0);
}

TEST_CASE("sample_at rejects times outside the kernel support") {
    const auto s = generate_known_signal(1000, 1.0, 2, 1);
    CHECK_THROWS_AS(sample_at(s, 1005.0), std::out_of_range);
    CHECK_THROWS_AS(sample_at(s, 3.5), std::out_of_range);
    CHECK_NOTHROW(sample_at(s, s.min_time()));
    CHECK_NOTHROW(sample_at(s, s.max_time()));
}

TEST_CASE("band-limited reconstruction against a dense FFT oracle") {
    // one 4096-sample period tiled three times; the middle copy is
    // indistinguishable from the infinite periodic signal for a 16-tap kernel
    const std::size_t period = 4096;
    const auto one = periodic_band_limited(period, 2, 77);
    CVec tiled;
    for (int r = 0; r < 3; ++r) {
        tiled.insert(tiled.end(), one.begin(), one.end());
    }
    const KnownSignal s(tiled, 1.0, 2);
    const auto spectrum = oracle::fft(one);
    const double power = mean_power(one);

    Rng rng(5);
    std::uniform_real_distribution<double> u(0.0, static_cast<double>(period));
    double worst = 0.0;
    for (int i = 0; i < 300; ++i) {
        const double t = u(rng.engine());
        const cplx got = sample_at(s, static_cast<double>(period) + t);
        worst = std::max(worst, std::norm(got - oracle::periodic_value(spectrum, t)));
    }
    CHECK(oracle::db(worst / power) <= -60.0);
}

TEST_CASE("shift composition") {
    const auto s = generate_known_signal(3000, 1.0, 2, 8);
    const std::size_t d = 37;
    CVec delayed(d, cplx{0.0, 0.0});
    delayed.insert(delayed.end(), s.samples().begin(), s.samples().end());
    const KnownSignal sd(delayed, 1.0, 2);
    for (double t : {100.25, 517.75, 1203.125, 2000.5}) {
        CHECK(sample_at(sd, t + static_cast<double>(d)) == sample_at(s, t));
    }
}

TEST_CASE("regressor_at") {
    const auto s = generate_known_signal(3000, 1.0, 2, 12);
    const auto x = s.samples();

    SUBCASE("integer time is the reversed raw window") {
        const auto y = regressor_at(s, 200.0, 5);
        for (std::size_t i = 0; i < 5; ++i) {
            CHECK(y[i] == x[200 - i]);
        }
    }
    SUBCASE("single tap") {
        const auto y = regressor_at(s, 321.7, 1);
        REQUIRE(y.size() == 1);
        CHECK(y[0] == sample_at(s, 321.7));
    }
    SUBCASE("fractional time matches per-element sample_at") {
        const auto y = regressor_at(s, 100.25, 5);
        for (std::size_t i = 0; i < 5; ++i) {
            const cplx ref = sample_at(s, 100.25 - static_cast<double>(i));
            CHECK(std::abs(y[i] - ref) <= 1e-14 * std::abs(ref));
        }
    }
    SUBCASE("strided and base-rate windows") {
        CVec y(5);
        regressor_at(s, 501.3, y, 3);
        for (std::size_t i = 0; i < 5; ++i) {
            const cplx ref = sample_at(s, 501.3 - 3.0 * static_cast<double>(i));
            CHECK(std::abs(y[i] - ref) <= 1e-14 * std::abs(ref));
        }
        CVec b(5);
        base_regressor_at(s, 250.65, b);
        for (std::size_t i = 0; i < 5; ++i) {
            const cplx ref = sample_at(s, 2.0 * 250.65 - 2.0 * static_cast<double>(i));
            CHECK(std::abs(b[i] - ref) <= 1e-14 * std::abs(ref));
        }
        CHECK_THROWS_AS(regressor_at(s, 501.3, y, 0), std::invalid_argument);
    }
    SUBCASE("range errors propagate") {
        CHECK_THROWS_AS(regressor_at(s, 18.0, 5), std::out_of_range);
        CHECK_THROWS_AS(regressor_at(s, 2990.0, 3), std::out_of_range);
    }
}

TEST_CASE("filtered_derivative") {
    const CVec w{cplx{0.8, -0.1}, cplx{0.3, 0.2}, cplx{-0.1, 0.05}};

    auto tone_window = [](double f, double t, std::size_t m) {
        CVec y(m);
        for (std::size_t i = 0; i < m; ++i) {
            y[i] = std::polar(1.0, 2.0 * std::numbers::pi * f * (t - static_cast<double>(i)));
        }
        return y;
    };

    SUBCASE("constant signal") {
        const CVec c(3, cplx{0.7, -0.2});
        CHECK(filtered_derivative(w, c, c, 0.0, DerivativeScheme::centered) == cplx{0.0, 0.0});
        CHECK(filtered_derivative(w, c, c, 1e-3, DerivativeScheme::backward) == cplx{0.0, 0.0});
    }

    SUBCASE("centered difference of a tone") {
        // exact divided difference of e^{j w n} is j sin(w) e^{j w n}: the
        // analytic derivative scaled by sin(w)/w
        const double f = 0.05;
        const double om = 2.0 * std::numbers::pi * f;
        const auto d = filtered_derivative(w, tone_window(f, 101.0, 3), tone_window(f, 99.0, 3), 0.0,
                                           DerivativeScheme::centered);
        const cplx analytic = cplx{0.0, om} * dot_h(w, tone_window(f, 100.0, 3));
        CHECK(std::abs(d - analytic * (std::sin(om) / om)) <= 1e-3 * std::abs(analytic));
        // truncation error is the O(h^2) term w^2/6
        CHECK(std::abs(d - analytic) <= (om * om / 6.0) * std::abs(analytic) * 1.01);
    }

    SUBCASE("centered beats backward, with O(h^2) and O(h) error orders") {
        auto errors = [&](double f) {
            const double om = 2.0 * std::numbers::pi * f;
            const cplx analytic = cplx{0.0, om} * dot_h(w, tone_window(f, 100.0, 3));
            const auto c = filtered_derivative(w, tone_window(f, 101.0, 3), tone_window(f, 99.0, 3), 0.0,
                                               DerivativeScheme::centered);
            const auto b = filtered_derivative(w, tone_window(f, 100.0, 3), tone_window(f, 99.0, 3), 0.0,
                                               DerivativeScheme::backward);
            // relative errors, so the orders are not masked by |analytic| ~ f
            return std::pair{std::abs(c - analytic) / std::abs(analytic), std::abs(b - analytic) / std::abs(analytic)};
        };
        const auto [c1, b1] = errors(0.02);
        const auto [c2, b2] = errors(0.01);
        CHECK(c1 < b1);
        CHECK(c1 / c2 == doctest::Approx(4.0).epsilon(0.2));
        CHECK(b1 / b2 == doctest::Approx(2.0).epsilon(0.2));
    }

    SUBCASE("eta rescales the spacing") {
        const CVec a{cplx{1.0, 0.0}, cplx{0.0, 0.0}, cplx{0.0, 0.0}};
        const CVec b{cplx{0.0, 0.0}, cplx{0.0, 0.0}, cplx{0.0, 0.0}};
        const CVec one{cplx{1.0, 0.0}, cplx{0.0, 0.0}, cplx{0.0, 0.0}};
        CHECK(filtered_derivative(one, a, b, 0.25, DerivativeScheme::centered) == cplx{1.0 / 2.5, 0.0});
        CHECK(filtered_derivative(one, a, b, 0.25, DerivativeScheme::backward) == cplx{1.0 / 1.25, 0.0});
    }

    SUBCASE("argument errors") {
        const CVec two(2);
        const CVec three(3);
        CHECK_THROWS_AS(filtered_derivative(w, two, three, 0.0, DerivativeScheme::centered), std::invalid_argument);
        CHECK_THROWS_AS(filtered_derivative(w, three, three, -1.0, DerivativeScheme::centered),
                        std::invalid_argument);
    }
}

TEST_CASE("iq dump") {
    const auto s = generate_known_signal(64, 1.0, 2, 4);
    const auto path = std::filesystem::temp_directory_path() / "folms_iq_test.bin";
    write_iq(s, path);
    CHECK(std::filesystem::file_size(path) == 64 * 16);
    std::ifstream in(path, std::ios::binary);
    double iq[2];
    in.read(reinterpret_cast<char*>(iq), sizeof iq);
    CHECK(iq[0] == s.samples()[0].real());
    CHECK(iq[1] == s.samples()[0].imag());
    std::filesystem::remove(path);
}

}
