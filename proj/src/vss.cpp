#include "folms/vss.hpp"

#include <cmath>
#include <stdexcept>

namespace folms::vss {

void VssSettings::validate() const {
    for (double l : {lambda_e, lambda_y, lambda_eps, lambda_eta, lambda_r}) {
        if (!(l >= 0.0 && l < 1.0)) {
            throw std::invalid_argument("forgetting factors must lie in [0, 1)");
        }
    }
    for (const auto& c : {w_clamp, eps_clamp, eta_clamp}) {
        if (!(c.min >= 0.0 && c.min <= c.max)) {
            throw std::invalid_argument("step-size clamps must satisfy 0 <= min <= max");
        }
    }
    if (known_noise && !(*known_noise >= 0.0)) {
        throw std::invalid_argument("known noise variance must be non-negative");
    }
    if (noise_floor && !(*noise_floor >= 0.0)) {
        throw std::invalid_argument("noise floor must be non-negative");
    }
    if (!(delta_factor >= 0.0)) {
        throw std::invalid_argument("regularization factor must be non-negative");
    }
}

VssState::VssState(std::size_t taps, const VssSettings& settings)
    : cross_correlation(taps, cplx{0.0, 0.0}),
      eps_ring_(taps, settings.eps_clamp.min),
      eta_ring_(taps, settings.eta_clamp.min) {
    if (taps == 0) {
        throw std::invalid_argument("VssState needs at least one tap");
    }
    if (settings.known_noise) {
        noise_estimate = *settings.known_noise;
    }
}

std::vector<double> VssState::ordered(const std::vector<double>& ring) const {
    std::vector<double> out;
    out.reserve(ring.size());
    for (std::size_t i = 0; i < ring.size(); ++i) {
        out.push_back(ring[(head_ + i) % ring.size()]);
    }
    return out;
}

// summed oldest first so the result matches a plain accumulate over the history
double VssState::mean_of(const std::vector<double>& ring) const noexcept {
    double acc = 0.0;
    for (std::size_t i = 0; i < ring.size(); ++i) {
        acc += ring[(head_ + i) % ring.size()];
    }
    return acc / static_cast<double>(ring.size());
}

double VssState::mean_mu_eps() const noexcept { return mean_of(eps_ring_); }
double VssState::mean_mu_eta() const noexcept { return mean_of(eta_ring_); }

std::vector<double> VssState::mu_eps_history() const { return ordered(eps_ring_); }
std::vector<double> VssState::mu_eta_history() const { return ordered(eta_ring_); }

void VssState::push_history(double eps, double eta) {
    eps_ring_[head_] = eps;
    eta_ring_[head_] = eta;
    head_ = (head_ + 1) % eps_ring_.size();
}

double compute_mu_w(double error_power, double noise_estimate, double regressor_energy, double delta) {
    if (!(error_power > 0.0)) {
        throw std::invalid_argument("compute_mu_w requires a positive error power");
    }
    if (!(regressor_energy >= 0.0 && delta >= 0.0)) {
        throw std::invalid_argument("compute_mu_w requires non-negative regressor energy and delta");
    }
    const double bracket = 1.0 - std::sqrt(std::max(noise_estimate, 0.0)) / std::sqrt(error_power);
    const double den = regressor_energy + delta;
    if (bracket <= 0.0 || den == 0.0) {
        return 0.0;
    }
    return bracket / den;
}

double compute_mu_fo(OffsetKind kind, double mu_w, double grad_mean, double mean_step, double w_norm_sq,
                     double noise_estimate, double regressor_power, double fallback) {
    const double c = kind == OffsetKind::carrier ? 8.0 : 1.0;
    const double den =
        w_norm_sq * w_norm_sq * noise_estimate * regressor_power * (2.0 * mu_w * regressor_power + 1.0);
    if (!(den > 0.0)) {
        return fallback;
    }
    const double drift = grad_mean * mean_step;
    return std::cbrt(c * mu_w * drift * drift / den);
}

double estimate_noise_variance(double error_power, double regressor_power, std::span<const cplx> cross_correlation,
                               double floor, double min_regressor_power) {
    const double lower = std::max(floor, 0.0);
    if (!(regressor_power >= min_regressor_power) || regressor_power == 0.0) {
        return std::max(error_power, lower);
    }
    const double v = error_power - norm_sq(cross_correlation) / regressor_power;
    return std::max(v, lower);
}

double clamp_step(double mu, const Clamp& c) noexcept {
    if (std::isnan(mu)) {
        return c.min;
    }
    return c.apply(mu);
}

void vss_update(FilterState& state, VssState& v, const VssSettings& s, const filter::ErrorTerms& terms,
                const filter::Workspace& ws) {
    const double m = static_cast<double>(state.w.size());

    v.error_power = s.lambda_e * v.error_power + (1.0 - s.lambda_e) * std::norm(terms.error);
    // sigma_y^2 also feeds the step-size rules, so it is tracked in both noise modes
    v.regressor_power = s.lambda_y * v.regressor_power + (1.0 - s.lambda_y) * std::norm(ws.y[0]);
    if (s.known_noise) {
        v.noise_estimate = *s.known_noise;
    } else {
        const cplx g = std::polar(1.0, state.phase) * std::conj(terms.error);
        for (std::size_t i = 0; i < v.cross_correlation.size(); ++i) {
            v.cross_correlation[i] = s.lambda_r * v.cross_correlation[i] + (1.0 - s.lambda_r) * ws.y[i] * g;
        }
        v.noise_estimate = estimate_noise_variance(v.error_power, v.regressor_power, v.cross_correlation,
                                                   s.noise_floor.value_or(0.0), s.min_regressor_power);
    }

    v.grad_mean_eps = s.lambda_eps * v.grad_mean_eps + (1.0 - s.lambda_eps) * terms.cfo_gradient;
    v.grad_mean_eta = s.lambda_eta * v.grad_mean_eta + (1.0 - s.lambda_eta) * terms.sfo_gradient;
    const double mean_eps = v.mean_mu_eps();
    const double mean_eta = v.mean_mu_eta();

    const double delta = s.delta_factor * m * v.regressor_power;
    const double mu_w = compute_mu_w(v.error_power, v.noise_estimate, norm_sq(ws.y), delta);
    const double w2 = norm_sq(state.w);
    const double mu_eps = compute_mu_fo(OffsetKind::carrier, mu_w, v.grad_mean_eps, mean_eps, w2, v.noise_estimate,
                                        v.regressor_power, s.eps_clamp.min);
    const double mu_eta = compute_mu_fo(OffsetKind::sampling, mu_w, v.grad_mean_eta, mean_eta, w2,
                                        v.noise_estimate, v.regressor_power, s.eta_clamp.min);

    v.mu_w = clamp_step(mu_w, s.w_clamp);
    v.mu_eps = clamp_step(mu_eps, s.eps_clamp);
    v.mu_eta = clamp_step(mu_eta, s.eta_clamp);
    v.push_history(v.mu_eps, v.mu_eta);

    filter::apply_update(state, terms, ws, v.mu_w, v.mu_eps, v.mu_eta);
}

VssStepResult vss_step(const FilterState& state, const VssState& vss, const VssSettings& settings,
                       const KnownSignal& known, cplx d, DerivativeScheme scheme) {
    settings.validate();
    filter::Workspace ws(state.w.size());
    const auto terms = filter::evaluate(state, known, d, scheme, ws);
    VssStepResult r{state, vss, terms.error};
    vss_update(r.state, r.vss, settings, terms, ws);
    return r;
}

filter::RunTrace run_vss(const world::SystemParams& params, const VssSettings& settings, std::size_t n_iter,
                         std::uint64_t seed, const filter::RunOptions& options) {
    settings.validate();
    VssState v(params.filter_taps, settings);
    return filter::co_simulate(
        params, n_iter, seed, options,
        [&](FilterState& state, const filter::ErrorTerms& terms, const filter::Workspace& ws, filter::RunTrace& tr) {
            vss_update(state, v, settings, terms, ws);
            if (options.record_diagnostics) {
                tr.mu_w.push_back(v.mu_w);
                tr.mu_eps.push_back(v.mu_eps);
                tr.mu_eta.push_back(v.mu_eta);
                tr.noise_estimate.push_back(v.noise_estimate);
            }
        });
}

} // namespace folms::vss
