#ifndef FOLMS_WORLD_HPP
#define FOLMS_WORLD_HPP

#include "folms/rng.hpp"
#include "folms/sigproc.hpp"

#include <cstddef>
#include <cstdint>

namespace folms::world {

using sigproc::KnownSignal;

/// Carrier clock in sample-normalized units (radians, radians/sample).
struct CarrierClockState {
    double phase{0.0};
    double frequency_offset{0.0};
    double linear_drift{0.0};          ///< kappa, added to the offset every sample
    double phase_noise_variance{0.0};  ///< random-walk phase increment variance
    double freq_walk_variance{0.0};    ///< random-walk offset increment variance
};

/// Sampling clock. `true_time` is the instant, in base-rate samples, at which
/// the receiver actually samples; the stored signal index is L times that.
struct SamplingClockState {
    double true_time{0.0};
    double frequency_offset{0.0};  ///< eta, dimensionless
    double linear_drift{0.0};      ///< rho, per sample
    double jitter_variance{0.0};   ///< samples^2 per sample
    double freq_walk_variance{0.0};
};

/// AR(1) channel: w^o_n = mean_response + perturbation.
struct ChannelState {
    CVec mean_response;
    CVec perturbation;
    double ar_coefficient{0.0};
    double perturbation_variance{0.0};  ///< per-tap power of the driving noise

    CVec current() const;
};

struct NoiseModel {
    double receiver_floor{0.0};    ///< sigma_g^2
    double background_power{0.0};  ///< sigma_s^2

    double total() const noexcept { return receiver_floor + background_power; }
};

/// Ground-truth statistical description in the physical units used by the
/// EMSE expressions. Frequency-offset drift parameters are per second and are
/// multiplied by the sampling period when converted for simulation.
struct SystemParams {
    double signal_variance{1.0};        ///< sigma_x^2 [W]
    int oversampling{2};
    double sampling_period{1e-6};       ///< T_s [s]
    std::size_t channel_taps{5};        ///< taps used to simulate the channel
    std::size_t filter_taps{5};         ///< taps used by the estimator (M)
    double channel_gain{1.0};           ///< ||w^o||^2
    double ar_coefficient{0.99999};
    double sigma_q2{0.0};
    double sigma_phi2{0.0};
    double sigma_eps2{0.0};
    double kappa{0.0};
    double sigma_beta2{0.0};
    double sigma_eta2{0.0};
    double rho{0.0};
    double sigma_g2{1e-6};
    double sigma_s2{0.0};
    double carrier_offset_hz{100.0};
    double sampling_offset_hz{1.0};

    double noise_variance() const noexcept { return sigma_g2 + sigma_s2; }

    /// Throws std::invalid_argument on inconsistent values.
    void validate() const;
};

/// Initial carrier clock in simulation units.
CarrierClockState initial_carrier(const SystemParams& p);

/// Initial sampling clock starting at `start_time`.
SamplingClockState initial_sampling(const SystemParams& p, double start_time);

/// Draw a complex Gaussian mean response of `taps` taps scaled to ||w||^2 = gain.
ChannelState initial_channel(const SystemParams& p, Rng& rng);

CarrierClockState step_carrier(const CarrierClockState& state, Rng& rng);
SamplingClockState step_sampling(const SamplingClockState& state, Rng& rng);
ChannelState step_channel(const ChannelState& state, Rng& rng);

/// d(n) = (w^o_n)^H y^o_n e^{j phi^o} + g + s.
cplx emit_received(const KnownSignal& known, const ChannelState& channel, const CarrierClockState& carrier,
                   const SamplingClockState& sampling, const NoiseModel& noise, Rng& rng);

/// One replica of the simulated environment: known signal, clocks, channel and
/// noise, each driven by its own RNG substream.
class World {
public:
    /// Builds a world that can be sampled for `n_iter` iterations.
    World(const SystemParams& params, std::size_t n_iter, std::uint64_t replica_seed);

    const KnownSignal& known() const noexcept { return known_; }
    const CarrierClockState& carrier() const noexcept { return carrier_; }
    const SamplingClockState& sampling() const noexcept { return sampling_; }
    const ChannelState& channel() const noexcept { return channel_; }
    const NoiseModel& noise() const noexcept { return noise_; }

    /// Start index shared by the truth and the estimator.
    double start_time() const noexcept { return start_time_; }

    /// Received sample at the current instant.
    cplx received();

    /// Noise-free part of the most recent received() sample.
    cplx last_clean() const noexcept { return clean_; }

    /// Advance every state by one sample.
    void advance();

private:
    KnownSignal known_;
    CarrierClockState carrier_;
    SamplingClockState sampling_;
    ChannelState channel_;
    NoiseModel noise_;
    double start_time_;
    Rng carrier_rng_;
    Rng sampling_rng_;
    Rng channel_rng_;
    Rng noise_rng_;
    CVec w_now_;
    CVec regressor_;
    cplx clean_{};
};

/// Number of known-signal samples needed for an n_iter-sample run.
std::size_t required_signal_length(const SystemParams& p, std::size_t n_iter, int kernel_half_width);

/// First sampling instant with enough history for the regressors, the
/// derivative lookbehind and the interpolation kernel.
double start_time(const SystemParams& p, int kernel_half_width);

} // namespace folms::world

#endif // FOLMS_WORLD_HPP
