#include "folms/sigproc.hpp"

#include "folms/rng.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>

#include <fmt/format.h>

namespace folms {

cplx dot_h(std::span<const cplx> a, std::span<const cplx> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument(fmt::format("dot_h: length mismatch ({} vs {})", a.size(), b.size()));
    }
    cplx acc{0.0, 0.0};
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += std::conj(a[i]) * b[i];
    }
    return acc;
}

double norm_sq(std::span<const cplx> v) {
    double acc = 0.0;
    for (const auto& z : v) {
        acc += std::norm(z);
    }
    return acc;
}

namespace sigproc {

namespace {

// Modified Bessel function of the first kind, order zero, by its power
// series. Converges to full double precision within ~40 terms for x <= 20.
double bessel_i0(double x) {
    const double q = 0.25 * x * x;
    double term = 1.0;
    double sum = 1.0;
    for (int k = 1; k < 64; ++k) {
        term *= q / (static_cast<double>(k) * k);
        sum += term;
        if (term < 1e-17 * sum) {
            break;
        }
    }
    return sum;
}

double kaiser(double x, double shape, double inv_i0_shape) {
    // x in [-1, 1]
    const double r = 1.0 - x * x;
    if (r <= 0.0) {
        return inv_i0_shape;
    }
    return bessel_i0(shape * std::sqrt(r)) * inv_i0_shape;
}

double sinc(double x) {
    if (x == 0.0) {
        return 1.0;
    }
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

} // namespace

Interpolator::Interpolator(int kernel_half_width, double window_shape)
    : half_width_(kernel_half_width), shape_(window_shape) {
    if (kernel_half_width < 1 || kernel_half_width > max_half_width) {
        throw std::invalid_argument(fmt::format("kernel half width must be in [1, {}], got {}", max_half_width,
                                                kernel_half_width));
    }
    if (!(window_shape >= 0.0)) {
        throw std::invalid_argument("window shape parameter must be non-negative");
    }
    // linear interpolation on this grid stays within ~1e-9 of the exact window
    constexpr std::size_t table_size = 1 << 16;
    const double inv_i0 = 1.0 / bessel_i0(window_shape);
    auto table = std::make_shared<std::vector<double>>(table_size + 2);
    for (std::size_t i = 0; i <= table_size; ++i) {
        (*table)[i] = kaiser(static_cast<double>(i) / table_size, window_shape, inv_i0);
    }
    (*table)[table_size + 1] = (*table)[table_size];
    window_table_ = std::move(table);
}

double Interpolator::window(double u) const noexcept {
    const auto& table = *window_table_;
    const double x = std::abs(u) * static_cast<double>(table.size() - 2);
    const auto i = static_cast<std::size_t>(x);
    if (i >= table.size() - 2) {
        return table[table.size() - 2];
    }
    const double f = x - static_cast<double>(i);
    return table[i] + f * (table[i + 1] - table[i]);
}

Interpolator::Kernel Interpolator::kernel(double t) const {
    Kernel k;
    const double base = std::floor(t);
    const double frac = t - base;
    const auto ibase = static_cast<std::ptrdiff_t>(base);
    if (frac == 0.0) {
        k.first_index = ibase;
        k.size = 1;
        k.weights[0] = 1.0;
        return k;
    }

    k.first_index = ibase - half_width_ + 1;
    k.size = 2 * half_width_;
    // sin(pi (frac - j)) = (-1)^j sin(pi frac) for integer j
    const double s = std::sin(std::numbers::pi * frac);
    double sum = 0.0;
    for (int i = 0; i < k.size; ++i) {
        const int j = i - half_width_ + 1; // tap at ibase + j
        const double d = frac - j;
        const double sign = (j % 2 == 0) ? 1.0 : -1.0;
        const double w = sign * s / (std::numbers::pi * d) * window(d / half_width_);
        k.weights[static_cast<std::size_t>(i)] = w;
        sum += w;
    }
    for (int i = 0; i < k.size; ++i) {
        k.weights[static_cast<std::size_t>(i)] /= sum;
    }
    return k;
}

KnownSignal::KnownSignal(CVec samples, double variance, int oversampling_factor, Interpolator interp)
    : samples_(std::make_shared<const CVec>(std::move(samples))),
      variance_(variance),
      oversampling_(oversampling_factor),
      interp_(interp) {
    if (samples_->empty()) {
        throw std::invalid_argument("known signal must contain at least one sample");
    }
    if (!(variance > 0.0)) {
        throw std::invalid_argument("known signal variance must be positive");
    }
    if (oversampling_factor < 1) {
        throw std::invalid_argument("oversampling factor must be >= 1");
    }
}

double KnownSignal::max_frequency() const noexcept { return std::numbers::pi / oversampling_; }

double KnownSignal::min_time() const noexcept { return static_cast<double>(interp_.kernel_half_width()); }

double KnownSignal::max_time() const noexcept {
    return static_cast<double>(samples_->size()) - 1.0 - interp_.kernel_half_width();
}

std::vector<double> band_limit_filter(int oversampling_factor) {
    constexpr int taps = 255;
    constexpr int centre = taps / 2;
    constexpr double attenuation_db = 80.0;
    const double shape = 0.1102 * (attenuation_db - 8.7);
    const double transition = (attenuation_db - 7.95) / (2.285 * (taps - 1));
    const double cutoff = std::numbers::pi / oversampling_factor - 0.5 * transition;
    const double inv_i0 = 1.0 / bessel_i0(shape);

    std::vector<double> h(taps);
    double energy = 0.0;
    for (int n = 0; n < taps; ++n) {
        const double m = n - centre;
        h[static_cast<std::size_t>(n)] =
            cutoff / std::numbers::pi * sinc(cutoff * m / std::numbers::pi) * kaiser(m / centre, shape, inv_i0);
        energy += h[static_cast<std::size_t>(n)] * h[static_cast<std::size_t>(n)];
    }
    // zero-stuffed white input has power variance / L, so sum h^2 = L keeps the output at variance
    const double scale = std::sqrt(static_cast<double>(oversampling_factor) / energy);
    for (auto& c : h) {
        c *= scale;
    }
    return h;
}

KnownSignal generate_known_signal(std::size_t n_samples, double variance, int oversampling_factor,
                                  std::uint64_t seed) {
    if (n_samples == 0) {
        throw std::invalid_argument("generate_known_signal: n_samples must be positive");
    }
    if (!(variance > 0.0)) {
        throw std::invalid_argument("generate_known_signal: variance must be positive");
    }
    if (oversampling_factor < 1) {
        throw std::invalid_argument("generate_known_signal: oversampling factor must be >= 1");
    }

    Rng rng(seed);
    CVec out(n_samples);
    if (oversampling_factor == 1) {
        for (auto& z : out) {
            z = rng.complex_gaussian(variance);
        }
        return KnownSignal(std::move(out), variance, 1);
    }

    const auto L = static_cast<std::size_t>(oversampling_factor);
    const auto h = band_limit_filter(oversampling_factor);
    const std::size_t taps = h.size();
    // base sample j sits at upsampled position j * L; output n is upsampled position n + taps - 1
    const std::size_t n_base = (n_samples + taps - 1) / L + 2;
    CVec base(n_base);
    for (auto& z : base) {
        z = rng.complex_gaussian(variance);
    }
    for (std::size_t n = 0; n < n_samples; ++n) {
        const std::size_t pos = n + taps - 1;
        cplx acc{0.0, 0.0};
        // taps k with (pos - k) divisible by L
        for (std::size_t k = pos % L; k < taps; k += L) {
            acc += h[k] * base[(pos - k) / L];
        }
        out[n] = acc;
    }
    return KnownSignal(std::move(out), variance, oversampling_factor);
}

cplx sample_at(const KnownSignal& signal, double t) {
    if (!(t >= signal.min_time() && t <= signal.max_time())) {
        throw std::out_of_range(fmt::format("sample_at: t = {} outside interpolable range [{}, {}]", t,
                                            signal.min_time(), signal.max_time()));
    }
    const auto k = signal.interpolator().kernel(t);
    const auto x = signal.samples();
    cplx acc{0.0, 0.0};
    for (int i = 0; i < k.size; ++i) {
        acc += k.weights[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(k.first_index + i)];
    }
    return acc;
}

void regressor_at(const KnownSignal& signal, double t, std::span<cplx> out, int stride) {
    if (stride < 1) {
        throw std::invalid_argument("regressor_at: stride must be >= 1");
    }
    if (out.empty()) {
        return;
    }
    const double oldest = t - static_cast<double>(stride) * static_cast<double>(out.size() - 1);
    if (!(oldest >= signal.min_time() && t <= signal.max_time())) {
        throw std::out_of_range(fmt::format("regressor_at: window [{}, {}] outside interpolable range [{}, {}]",
                                            oldest, t, signal.min_time(), signal.max_time()));
    }
    // every lag shares the fractional part, so one kernel serves the whole window
    const auto k = signal.interpolator().kernel(t);
    const auto x = signal.samples();
    for (std::size_t lag = 0; lag < out.size(); ++lag) {
        const auto first = k.first_index - static_cast<std::ptrdiff_t>(lag) * stride;
        cplx acc{0.0, 0.0};
        for (int i = 0; i < k.size; ++i) {
            acc += k.weights[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(first + i)];
        }
        out[lag] = acc;
    }
}

void base_regressor_at(const KnownSignal& signal, double base_time, std::span<cplx> out) {
    const int l = signal.oversampling_factor();
    regressor_at(signal, static_cast<double>(l) * base_time, out, l);
}

CVec regressor_at(const KnownSignal& signal, double t, std::size_t m) {
    CVec out(m);
    regressor_at(signal, t, out);
    return out;
}

cplx filtered_derivative(std::span<const cplx> w, std::span<const cplx> regressor_next,
                         std::span<const cplx> regressor_prev, double eta, DerivativeScheme scheme) {
    if (w.size() != regressor_next.size() || w.size() != regressor_prev.size()) {
        throw std::invalid_argument("filtered_derivative: vector lengths differ");
    }
    if (!(1.0 + eta > 0.0)) {
        throw std::invalid_argument("filtered_derivative: requires 1 + eta > 0");
    }
    const cplx diff = dot_h(w, regressor_next) - dot_h(w, regressor_prev);
    const double spacing = scheme == DerivativeScheme::centered ? 2.0 * (1.0 + eta) : (1.0 + eta);
    return diff / spacing;
}

void write_iq(const KnownSignal& signal, const std::filesystem::path& path) {
    static_assert(std::endian::native == std::endian::little, "write_iq assumes a little-endian host");
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("write_iq: cannot open " + path.string());
    }
    for (const auto& z : signal.samples()) {
        const double iq[2] = {z.real(), z.imag()};
        out.write(reinterpret_cast<const char*>(iq), sizeof iq);
    }
}

} // namespace sigproc
} // namespace folms
