#ifndef FOLMS_SIGPROC_HPP
#define FOLMS_SIGPROC_HPP

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

namespace folms {

using cplx = std::complex<double>;
using CVec = std::vector<cplx>;

/// Hermitian inner product a^H b.
cplx dot_h(std::span<const cplx> a, std::span<const cplx> b);

/// Squared Euclidean norm.
double norm_sq(std::span<const cplx> v);

namespace sigproc {

/// Kaiser-windowed sinc interpolation kernel.
///
/// Weights cover the 2K samples floor(t)-K+1 .. floor(t)+K and are normalized
/// to sum to one. At integer t the kernel degenerates to a unit impulse.
class Interpolator {
public:
    static constexpr int max_half_width = 64;

    struct Kernel {
        std::ptrdiff_t first_index{0};
        int size{0};
        std::array<double, 2 * max_half_width> weights{};
    };

    explicit Interpolator(int kernel_half_width = 16, double window_shape = 8.0);

    int kernel_half_width() const noexcept { return half_width_; }
    double window_shape() const noexcept { return shape_; }

    /// Weights for fractional sample index t.
    Kernel kernel(double t) const;

private:
    double window(double u) const noexcept;

    int half_width_;
    double shape_;
    // Kaiser window sampled on [0, 1]; shared between copies
    std::shared_ptr<const std::vector<double>> window_table_;
};

/// Immutable band-limited reference sequence with fractional-time access.
class KnownSignal {
public:
    KnownSignal(CVec samples, double variance, int oversampling_factor, Interpolator interp = Interpolator{});

    std::span<const cplx> samples() const noexcept { return *samples_; }
    double variance() const noexcept { return variance_; }
    int oversampling_factor() const noexcept { return oversampling_; }
    std::size_t length() const noexcept { return samples_->size(); }
    const Interpolator& interpolator() const noexcept { return interp_; }

    /// Highest normalized angular frequency present (pi / L).
    double max_frequency() const noexcept;

    /// Smallest and largest t accepted by sample_at.
    double min_time() const noexcept;
    double max_time() const noexcept;

private:
    std::shared_ptr<const CVec> samples_;
    double variance_;
    int oversampling_;
    Interpolator interp_;
};

/// Circularly-symmetric complex Gaussian reference, band-limited to pi/L.
///
/// L = 1 yields plain white noise. For L > 1 a base-rate white sequence is
/// zero-stuffed by L and filtered with a 255-tap Kaiser lowpass whose stopband
/// starts at pi/L; the filter is scaled so the expected output power equals
/// `variance`.
KnownSignal generate_known_signal(std::size_t n_samples, double variance, int oversampling_factor,
                                  std::uint64_t seed);

/// 255-tap lowpass used for band-limiting at oversampling factor L.
std::vector<double> band_limit_filter(int oversampling_factor);

/// Interpolated value at fractional index t. Throws std::out_of_range when the
/// kernel would need samples outside the sequence.
cplx sample_at(const KnownSignal& signal, double t);

/// [y(t), y(t-1), ..., y(t-m+1)].
CVec regressor_at(const KnownSignal& signal, double t, std::size_t m);

/// Allocation-free variant writing out.size() taps spaced `stride` stored
/// samples apart: [y(t), y(t-stride), ...].
void regressor_at(const KnownSignal& signal, double t, std::span<cplx> out, int stride = 1);

/// Receiver-side regressor. The receiver runs at the base rate, so
/// `base_time` is in base samples (stored index L * base_time) and the taps
/// are one base sample, i.e. L stored samples, apart.
void base_regressor_at(const KnownSignal& signal, double base_time, std::span<cplx> out);

enum class DerivativeScheme { centered, backward };

/// Divided-difference estimate of w^H y'.
///
/// centered: (w^H y_next - w^H y_prev) / (2 (1 + eta)), y_next/y_prev taken
///           one (1 + eta)-spaced sample after/before the current regressor.
/// backward: (w^H y_next - w^H y_prev) / (1 + eta), y_next is the current
///           regressor and y_prev the previous one.
cplx filtered_derivative(std::span<const cplx> w, std::span<const cplx> regressor_next,
                         std::span<const cplx> regressor_prev, double eta, DerivativeScheme scheme);

/// Little-endian interleaved float64 I/Q dump.
void write_iq(const KnownSignal& signal, const std::filesystem::path& path);

} // namespace sigproc
} // namespace folms

#endif // FOLMS_SIGPROC_HPP
