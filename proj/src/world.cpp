#include "folms/world.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <fmt/format.h>

namespace folms::world {

using sigproc::generate_known_signal;
using sigproc::Interpolator;
using sigproc::base_regressor_at;

CVec ChannelState::current() const {
    CVec w(mean_response.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = mean_response[i] + perturbation[i];
    }
    return w;
}

void SystemParams::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) {
            throw std::invalid_argument(what);
        }
    };
    require(signal_variance > 0.0, "signal variance must be positive");
    require(oversampling >= 1, "oversampling factor must be >= 1");
    require(sampling_period > 0.0, "sampling period must be positive");
    require(channel_taps >= 1, "channel must have at least one tap");
    require(filter_taps >= 1, "filter must have at least one tap");
    require(channel_gain >= 0.0, "channel gain must be non-negative");
    require(ar_coefficient >= 0.0 && ar_coefficient < 1.0, "AR coefficient must lie in [0, 1)");
    require(sigma_q2 >= 0.0 && sigma_phi2 >= 0.0 && sigma_eps2 >= 0.0 && sigma_beta2 >= 0.0 && sigma_eta2 >= 0.0,
            "variances must be non-negative");
    require(sigma_g2 >= 0.0 && sigma_s2 >= 0.0, "noise powers must be non-negative");
}

CarrierClockState initial_carrier(const SystemParams& p) {
    const double ts = p.sampling_period;
    return CarrierClockState{
        .phase = 0.0,
        .frequency_offset = 2.0 * std::numbers::pi * p.carrier_offset_hz * ts,
        .linear_drift = p.kappa * ts,
        .phase_noise_variance = p.sigma_phi2,
        .freq_walk_variance = p.sigma_eps2 * ts * ts,
    };
}

SamplingClockState initial_sampling(const SystemParams& p, double start_time) {
    const double ts = p.sampling_period;
    return SamplingClockState{
        .true_time = start_time,
        .frequency_offset = p.sampling_offset_hz * ts,
        .linear_drift = p.rho * ts,
        .jitter_variance = p.sigma_beta2 / ts,
        .freq_walk_variance = p.sigma_eta2 * ts * ts,
    };
}

ChannelState initial_channel(const SystemParams& p, Rng& rng) {
    ChannelState c;
    c.mean_response.resize(p.channel_taps);
    c.perturbation.assign(p.channel_taps, cplx{0.0, 0.0});
    c.ar_coefficient = p.ar_coefficient;
    c.perturbation_variance = p.sigma_q2;
    for (auto& tap : c.mean_response) {
        tap = rng.complex_gaussian(1.0);
    }
    const double n2 = norm_sq(c.mean_response);
    const double scale = n2 > 0.0 ? std::sqrt(p.channel_gain / n2) : 0.0;
    for (auto& tap : c.mean_response) {
        tap *= scale;
    }
    return c;
}

CarrierClockState step_carrier(const CarrierClockState& state, Rng& rng) {
    CarrierClockState next = state;
    next.phase = state.phase + state.frequency_offset + rng.gaussian(state.phase_noise_variance);
    next.frequency_offset = state.frequency_offset + rng.gaussian(state.freq_walk_variance) + state.linear_drift;
    return next;
}

SamplingClockState step_sampling(const SamplingClockState& state, Rng& rng) {
    SamplingClockState next = state;
    next.true_time = state.true_time + (1.0 + state.frequency_offset) + rng.gaussian(state.jitter_variance);
    next.frequency_offset = state.frequency_offset + rng.gaussian(state.freq_walk_variance) + state.linear_drift;
    return next;
}

ChannelState step_channel(const ChannelState& state, Rng& rng) {
    if (!(state.ar_coefficient >= 0.0 && state.ar_coefficient < 1.0)) {
        throw std::invalid_argument("step_channel: AR coefficient must lie in [0, 1)");
    }
    ChannelState next = state;
    for (auto& theta : next.perturbation) {
        theta = state.ar_coefficient * theta + rng.complex_gaussian(state.perturbation_variance);
    }
    return next;
}

cplx emit_received(const KnownSignal& known, const ChannelState& channel, const CarrierClockState& carrier,
                   const SamplingClockState& sampling, const NoiseModel& noise, Rng& rng) {
    CVec y(channel.mean_response.size());
    base_regressor_at(known, sampling.true_time, y);
    const auto w = channel.current();
    const cplx clean = dot_h(w, y) * std::polar(1.0, carrier.phase);
    return clean + rng.complex_gaussian(noise.receiver_floor) + rng.complex_gaussian(noise.background_power);
}

std::size_t required_signal_length(const SystemParams& p, std::size_t n_iter, int kernel_half_width) {
    const double n = static_cast<double>(n_iter);
    const double ts = p.sampling_period;
    const double drift = std::abs(p.sampling_offset_hz * ts) + std::abs(p.rho * ts) * n +
                         6.0 * std::sqrt(p.sigma_eta2 * ts * ts * n);
    const double wander = drift * n + 6.0 * std::sqrt(p.sigma_beta2 / ts * n);
    const double base = std::ceil(2.0 * start_time(p, kernel_half_width) + n + wander + 1e-3 * n + 64.0);
    return static_cast<std::size_t>(p.oversampling) * static_cast<std::size_t>(base);
}

double start_time(const SystemParams& p, int kernel_half_width) {
    return static_cast<double>(kernel_half_width + std::max(p.channel_taps, p.filter_taps) + 4);
}

World::World(const SystemParams& params, std::size_t n_iter, std::uint64_t replica_seed)
    : known_(generate_known_signal(required_signal_length(params, n_iter, Interpolator{}.kernel_half_width()),
                                   params.signal_variance, params.oversampling,
                                   derive_seed(replica_seed, {static_cast<std::uint64_t>(Stream::known_signal)}))),
      noise_{params.sigma_g2, params.sigma_s2},
      start_time_(world::start_time(params, known_.interpolator().kernel_half_width())),
      carrier_rng_(derive_seed(replica_seed, {static_cast<std::uint64_t>(Stream::carrier)})),
      sampling_rng_(derive_seed(replica_seed, {static_cast<std::uint64_t>(Stream::sampling)})),
      channel_rng_(derive_seed(replica_seed, {static_cast<std::uint64_t>(Stream::channel)})),
      noise_rng_(derive_seed(replica_seed, {static_cast<std::uint64_t>(Stream::noise)})) {
    params.validate();
    carrier_ = initial_carrier(params);
    sampling_ = initial_sampling(params, start_time_);
    channel_ = initial_channel(params, channel_rng_);
    w_now_.resize(channel_.mean_response.size());
    regressor_.resize(channel_.mean_response.size());
}

cplx World::received() {
    for (std::size_t i = 0; i < w_now_.size(); ++i) {
        w_now_[i] = channel_.mean_response[i] + channel_.perturbation[i];
    }
    base_regressor_at(known_, sampling_.true_time, regressor_);
    clean_ = dot_h(w_now_, regressor_) * std::polar(1.0, carrier_.phase);
    return clean_ + noise_rng_.complex_gaussian(noise_.receiver_floor) +
           noise_rng_.complex_gaussian(noise_.background_power);
}

void World::advance() {
    carrier_ = step_carrier(carrier_, carrier_rng_);
    sampling_ = step_sampling(sampling_, sampling_rng_);
    for (auto& theta : channel_.perturbation) {
        theta = channel_.ar_coefficient * theta + channel_rng_.complex_gaussian(channel_.perturbation_variance);
    }
}

} // namespace folms::world
