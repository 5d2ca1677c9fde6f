#include "folms/filter.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace folms::filter {

using sigproc::base_regressor_at;

FilterState FilterState::zeros(std::size_t taps, double start_time) {
    FilterState s;
    s.w.assign(taps, cplx{0.0, 0.0});
    s.time = start_time;
    return s;
}

void StepSizes::validate() const {
    auto check = [](double mu, const std::optional<Clamp>& bounds, const char* name) {
        if (!(mu >= 0.0)) {
            throw std::invalid_argument(fmt::format("step size {} must be non-negative, got {}", name, mu));
        }
        if (bounds) {
            if (!(bounds->min >= 0.0 && bounds->min <= bounds->max)) {
                throw std::invalid_argument(fmt::format("clamp for {} must satisfy 0 <= min <= max", name));
            }
            if (mu < bounds->min || mu > bounds->max) {
                throw std::invalid_argument(fmt::format("step size {} = {} outside [{}, {}]", name, mu, bounds->min,
                                                        bounds->max));
            }
        }
    };
    check(mu_w, w_bounds, "mu_w");
    check(mu_eps, eps_bounds, "mu_eps");
    check(mu_eta, eta_bounds, "mu_eta");
}

ErrorTerms evaluate(const FilterState& state, const KnownSignal& known, cplx d, DerivativeScheme scheme,
                    Workspace& ws) {
    // Difference neighbours sit one stored sample away, scaled by (1 + eta);
    // the oversampled grid keeps the divided difference close to the true
    // derivative. Multiplying by L converts it to per-base-sample units.
    const double l = static_cast<double>(known.oversampling_factor());
    const double spacing = (1.0 + state.sfo) / l;
    base_regressor_at(known, state.time, ws.y);
    if (scheme == DerivativeScheme::centered) {
        base_regressor_at(known, state.time + spacing, ws.y_next);
        base_regressor_at(known, state.time - spacing, ws.y_prev);
    } else {
        base_regressor_at(known, state.time - spacing, ws.y_prev);
    }

    const cplx rot = std::polar(1.0, state.phase);
    const cplx wy = dot_h(state.w, ws.y);
    const cplx dwy = sigproc::filtered_derivative(
        state.w, scheme == DerivativeScheme::centered ? std::span<const cplx>(ws.y_next) : std::span<const cplx>(ws.y),
        ws.y_prev, state.sfo, scheme) * l;

    ErrorTerms t;
    t.output = wy * rot;
    t.derivative_output = dwy * rot;
    t.error = d - t.output;
    const cplx ec = std::conj(t.error);
    t.cfo_gradient = (t.output * ec).imag();
    t.sfo_gradient = (t.derivative_output * ec).real();
    return t;
}

void apply_update(FilterState& state, const ErrorTerms& terms, const Workspace& ws, double mu_w, double mu_eps,
                  double mu_eta) {
    const cplx g = mu_w * std::polar(1.0, state.phase) * std::conj(terms.error);
    for (std::size_t i = 0; i < state.w.size(); ++i) {
        state.w[i] += ws.y[i] * g;
    }
    // descent on |e|^2: d|e|^2/d(eps) = +2 Im{s e*} for e = d - s, s the rotated output
    state.cfo -= mu_eps * terms.cfo_gradient;
    state.sfo += mu_eta * terms.sfo_gradient;
    state.phase = state.phase + state.cfo;
    state.time = state.time + (1.0 + state.sfo);
}

ErrorResult folms_error(const FilterState& state, const KnownSignal& known, cplx d, DerivativeScheme scheme) {
    Workspace ws(state.w.size());
    const auto terms = evaluate(state, known, d, scheme, ws);
    return ErrorResult{terms.error, ws.y, terms.derivative_output * std::polar(1.0, -state.phase)};
}

StepResult folms_step(const FilterState& state, const KnownSignal& known, cplx d, const StepSizes& steps,
                      DerivativeScheme scheme) {
    steps.validate();
    Workspace ws(state.w.size());
    const auto terms = evaluate(state, known, d, scheme, ws);
    StepResult r{state, terms.error};
    apply_update(r.state, terms, ws, steps.mu_w, steps.mu_eps, steps.mu_eta);
    return r;
}

double divergence_threshold(const world::SystemParams& params, double factor) {
    const double gain = params.channel_gain > 0.0 ? params.channel_gain : 1.0;
    return factor * params.signal_variance * gain;
}

void record_diagnostics(RunTrace& trace, const world::World& world, const FilterState& state) {
    const auto& truth = world.channel();
    trace.cfo_error.push_back(world.carrier().frequency_offset - state.cfo);
    trace.sfo_error.push_back(world.sampling().frequency_offset - state.sfo);
    if (truth.mean_response.size() == state.w.size()) {
        const cplx align = std::polar(1.0, -(world.carrier().phase - state.phase));
        double acc = 0.0;
        for (std::size_t i = 0; i < state.w.size(); ++i) {
            acc += std::norm((truth.mean_response[i] + truth.perturbation[i]) * align - state.w[i]);
        }
        trace.w_error_sq.push_back(acc);
    }
}

RunTrace co_simulate(const world::SystemParams& params, std::size_t n_iter, std::uint64_t seed,
                     const RunOptions& options, const UpdateFn& update) {
    if (n_iter == 0) {
        throw std::invalid_argument("n_iter must be positive");
    }
    world::World world(params, n_iter, seed);
    auto state = FilterState::zeros(params.filter_taps, world.start_time());
    if (options.warm_start != WarmStart::none) {
        state.cfo = world.carrier().frequency_offset;
        state.sfo = world.sampling().frequency_offset;
    }
    if (options.warm_start == WarmStart::full) {
        const auto truth = world.channel().current();
        std::copy_n(truth.begin(), std::min(truth.size(), state.w.size()), state.w.begin());
    }
    const double limit = divergence_threshold(params, options.divergence_factor);

    RunTrace trace;
    trace.errors.reserve(n_iter);
    trace.excess_errors.reserve(n_iter);
    Workspace ws(params.filter_taps);
    for (std::size_t n = 0; n < n_iter; ++n) {
        const cplx d = world.received();
        ErrorTerms terms;
        try {
            terms = evaluate(state, world.known(), d, options.scheme, ws);
        } catch (const std::out_of_range& e) {
            throw DivergenceError(n, fmt::format("estimator timing left the known signal at n = {}: {}", n, e.what()));
        }
        const double p = std::norm(terms.error);
        if (!(p <= limit)) {
            throw DivergenceError(n, fmt::format("diverged at n = {}: |e|^2 = {:.3e} exceeds {:.3e}", n, p, limit));
        }
        trace.errors.push_back(terms.error);
        trace.excess_errors.push_back(world.last_clean() - terms.output);
        if (options.record_diagnostics) {
            record_diagnostics(trace, world, state);
        }
        update(state, terms, ws, trace);
        world.advance();
    }
    trace.iterations = n_iter;
    return trace;
}

RunTrace run_folms(const world::SystemParams& params, const StepSizes& steps, std::size_t n_iter, std::uint64_t seed,
                   const RunOptions& options) {
    steps.validate();
    return co_simulate(params, n_iter, seed, options,
                       [&](FilterState& state, const ErrorTerms& terms, const Workspace& ws, RunTrace&) {
                           apply_update(state, terms, ws, steps.mu_w, steps.mu_eps, steps.mu_eta);
                       });
}

double tail_power(std::span<const cplx> values, double discard_fraction) {
    if (!(discard_fraction >= 0.0 && discard_fraction < 1.0)) {
        throw std::invalid_argument("discard fraction must lie in [0, 1)");
    }
    const auto n = values.size();
    const auto skip = static_cast<std::size_t>(std::floor(discard_fraction * static_cast<double>(n)));
    if (skip >= n) {
        throw std::invalid_argument("no samples left after discarding the transient");
    }
    double acc = 0.0;
    for (std::size_t i = skip; i < n; ++i) {
        acc += std::norm(values[i]);
    }
    return acc / static_cast<double>(n - skip);
}

double measure_emse(const RunTrace& trace, double noise_variance, double discard_fraction) {
    return tail_power(trace.errors, discard_fraction) - noise_variance;
}

double measure_excess_emse(const RunTrace& trace, double discard_fraction) {
    return tail_power(trace.excess_errors, discard_fraction);
}

} // namespace folms::filter
