#include "folms/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

namespace folms::theory {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

// num / den with the zero-step convention: a vanishing numerator wins.
double ratio(double num, double den) {
    if (num == 0.0) {
        return 0.0;
    }
    if (den == 0.0) {
        return inf;
    }
    return num / den;
}

struct Terms {
    double M, sx, sv, G, Ts;
    double mw, me, mh;
};

Terms terms_of(const SystemParams& p, const StepSizes& s) {
    if (!(s.mu_w > 0.0)) {
        throw std::invalid_argument("EMSE prediction requires mu_w > 0");
    }
    if (!(s.mu_eps >= 0.0 && s.mu_eta >= 0.0)) {
        throw std::invalid_argument("EMSE prediction requires non-negative frequency-offset step sizes");
    }
    if (!(p.noise_variance() > 0.0 && p.signal_variance > 0.0 && p.sampling_period > 0.0 && p.filter_taps >= 1)) {
        throw std::invalid_argument("EMSE prediction requires positive sigma_v^2, sigma_x^2, T_s and M");
    }
    return Terms{static_cast<double>(p.filter_taps), p.signal_variance, p.noise_variance(), p.channel_gain,
                 p.sampling_period, s.mu_w, s.mu_eps, s.mu_eta};
}

EmsePrediction finish(double zw, double ze, double zh, double gamma, double sv, bool require_gamma) {
    EmsePrediction r;
    r.zeta_w = zw;
    r.zeta_eps = ze;
    r.zeta_eta = zh;
    r.zeta_total = zw + ze + zh;
    r.mse = r.zeta_total + sv;
    r.gamma = gamma;
    r.valid = (!require_gamma || gamma > 0.0) && std::isfinite(r.zeta_total) && r.zeta_total >= 0.0;
    return r;
}

} // namespace

double stability_denominator(const SystemParams& p, const StepSizes& s) {
    const auto t = terms_of(p, s);
    return 2.0 - t.mw * (1.0 + t.M) * t.sx - (t.me / t.mw) * t.G - 2.0 * (t.mh / t.mw) * (2.0 + 2.0 / t.M) * t.G;
}

EmsePrediction predict_emse_complete(const SystemParams& p, const StepSizes& s) {
    const auto t = terms_of(p, s);
    const double gamma = stability_denominator(p, s);
    const double Ts2 = t.Ts * t.Ts;
    const double c = 2.0 + 2.0 / t.M;

    const double zw = (t.mw * t.M * t.sv * t.sx + t.M * p.sigma_q2 / t.mw + t.me * t.G * t.sv / (2.0 * t.mw) +
                       t.mh * t.G * t.sv / t.mw + t.G * p.sigma_phi2 / t.mw + t.G * p.sigma_beta2 / (t.mw * t.Ts)) /
                      gamma;
    const double ze = (t.me * t.sx * t.G * t.sv + ratio(p.sigma_eps2 * Ts2, t.mw * t.me * t.sx) +
                       ratio(2.0 * p.kappa * p.kappa * Ts2, t.me * t.me * t.sx * t.G)) /
                      gamma;
    const double zh = (2.0 * t.mh * t.sx * t.G * t.sv + ratio(p.sigma_eta2 * Ts2, t.mw * t.mh * t.sx) +
                       ratio(p.rho * p.rho * Ts2, c * t.mh * t.mh * t.sx * t.G) +
                       ratio(t.mw * t.G * p.sigma_beta2, t.mh * t.Ts) +
                       ratio(t.mw * p.sigma_eta2 * Ts2, t.mh * t.mh * t.G)) /
                      gamma;
    return finish(zw, ze, zh, gamma, t.sv, true);
}

EmsePrediction predict_emse_simple(const SystemParams& p, const StepSizes& s) {
    const auto t = terms_of(p, s);
    const double gamma = stability_denominator(p, s);
    const double Ts2 = t.Ts * t.Ts;
    const double c = 2.0 + 2.0 / t.M;

    const double zw = t.mw * t.M * t.sx * t.sv / 2.0 + t.M * p.sigma_q2 / (2.0 * t.mw) +
                      t.me * t.G * t.sv / (4.0 * t.mw) + t.mh * t.G * t.sv / (2.0 * t.mw) +
                      t.G * p.sigma_phi2 / (2.0 * t.mw) + t.G * p.sigma_beta2 / (2.0 * t.mw * t.Ts);
    const double ze = t.me * t.sx * t.G * t.sv / 2.0 + ratio(p.sigma_eps2 * Ts2, 2.0 * t.mw * t.me * t.sx) +
                      ratio(p.kappa * p.kappa * Ts2, t.me * t.me * t.sx * t.G);
    const double zh = t.mh * t.sx * t.G * t.sv + ratio(p.sigma_eta2 * Ts2, 2.0 * t.mw * t.mh * t.sx) +
                      ratio(p.rho * p.rho * Ts2, 2.0 * c * t.mh * t.mh * t.sx * t.G) +
                      ratio(t.mw * t.G * p.sigma_beta2, 2.0 * t.mh * t.Ts);
    return finish(zw, ze, zh, gamma, t.sv, false);
}

double approx_mu_w_opt(const SystemParams& p) {
    const double M = static_cast<double>(p.filter_taps);
    const double den = M * p.noise_variance() * p.signal_variance;
    if (!(den > 0.0)) {
        throw std::invalid_argument("approx_mu_w_opt requires positive sigma_v^2 and sigma_x^2");
    }
    const double num =
        M * p.sigma_q2 + p.channel_gain * p.sigma_beta2 / p.sampling_period + p.channel_gain * p.sigma_phi2;
    return std::sqrt(num / den);
}

double approx_mu_fo_opt(OffsetKind kind, const SystemParams& p, double mu_w) {
    if (!(mu_w > 0.0)) {
        throw std::invalid_argument("approx_mu_fo_opt requires mu_w > 0");
    }
    const double G = p.channel_gain;
    const double sx = p.signal_variance;
    const double sv = p.noise_variance();
    const double Ts2 = p.sampling_period * p.sampling_period;
    const double loop = 2.0 * mu_w * sx + 1.0;

    double walk_num = 0.0;
    double drift_num = 0.0;
    if (kind == OffsetKind::carrier) {
        walk_num = 2.0 * p.sigma_eps2 * Ts2;
        drift_num = 8.0 * mu_w * p.kappa * p.kappa * Ts2;
    } else {
        walk_num = G * p.sigma_beta2 * mu_w * mu_w * sx / p.sampling_period + p.sigma_eta2 * Ts2;
        drift_num = mu_w * p.rho * p.rho * Ts2;
    }
    const double walk_den = G * sv * sx * loop;
    const double drift_den = G * G * sv * sx * loop;
    return std::sqrt(ratio(walk_num, walk_den)) + std::cbrt(ratio(drift_num, drift_den));
}

namespace {

// Objective in dB so the scale is uniform across decades.
struct Objective {
    const SystemParams& p;
    std::array<std::optional<double>, 3> pinned;

    StepSizes steps(const std::array<double, 3>& x) const {
        StepSizes s;
        s.mu_w = pinned[0].value_or(std::pow(10.0, x[0]));
        s.mu_eps = pinned[1].value_or(std::pow(10.0, x[1]));
        s.mu_eta = pinned[2].value_or(std::pow(10.0, x[2]));
        return s;
    }

    double operator()(const std::array<double, 3>& x) const {
        const auto r = predict_emse_complete(p, steps(x));
        if (!r.valid || !(r.zeta_total > 0.0)) {
            return inf;
        }
        return 10.0 * std::log10(r.zeta_total);
    }
};

// Coarse scan then golden-section refinement of coordinate k within [lo, hi].
// Returns the improved coordinate value; x[k] is left at that value.
double line_search(const Objective& f, std::array<double, 3>& x, int k, double lo, double hi, double tol) {
    constexpr int scan_points = 41;
    double best_v = f(x);
    double best_x = x[k];
    const double step = (hi - lo) / (scan_points - 1);
    for (int i = 0; i < scan_points; ++i) {
        x[k] = lo + step * i;
        const double v = f(x);
        if (v < best_v) {
            best_v = v;
            best_x = x[k];
        }
    }
    double a = std::max(lo, best_x - step);
    double b = std::min(hi, best_x + step);

    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - g * (b - a);
    double d = a + g * (b - a);
    x[k] = c;
    double fc = f(x);
    x[k] = d;
    double fd = f(x);
    while (b - a > tol) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            x[k] = c;
            fc = f(x);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            x[k] = d;
            fd = f(x);
        }
    }
    const double mid = 0.5 * (a + b);
    x[k] = mid;
    const double fm = f(x);
    // keep whichever of the refined point and the scan optimum is better
    if (fm <= best_v) {
        return mid;
    }
    x[k] = best_x;
    return best_x;
}

} // namespace

SolverResult solve_optimal_step_sizes(const SystemParams& p, const SolverOptions& o) {
    std::array<std::optional<double>, 3> pinned{o.fixed_mu_w, o.fixed_mu_eps, o.fixed_mu_eta};
    if (o.disable_eps && !pinned[1]) {
        pinned[1] = 0.0;
    }
    if (o.disable_eta && !pinned[2]) {
        pinned[2] = 0.0;
    }
    if (pinned[0] && !(*pinned[0] > 0.0)) {
        throw std::invalid_argument("a pinned mu_w must be positive");
    }
    for (int k = 1; k < 3; ++k) {
        if (pinned[k] && !(*pinned[k] >= 0.0)) {
            throw std::invalid_argument("pinned frequency-offset step sizes must be non-negative");
        }
    }
    const Objective f{p, pinned};
    const std::array<Clamp, 3> box{o.w_box, o.eps_box, o.eta_box};
    for (int k = 0; k < 3; ++k) {
        if (!(box[k].min > 0.0 && box[k].min < box[k].max)) {
            throw std::invalid_argument("solver search box bounds must satisfy 0 < min < max");
        }
    }
    const std::array<bool, 3> active{!pinned[0], !pinned[1], !pinned[2]};

    auto seed_coord = [&](int k, double v) {
        const double lo = std::log10(box[k].min);
        const double hi = std::log10(box[k].max);
        if (!(v > 0.0) || !std::isfinite(v)) {
            return 0.5 * (lo + hi);
        }
        return std::clamp(std::log10(v), lo, hi);
    };
    std::array<double, 3> x{};
    x[0] = seed_coord(0, approx_mu_w_opt(p));
    const double mw_seed = pinned[0].value_or(std::pow(10.0, x[0]));
    x[1] = seed_coord(1, approx_mu_fo_opt(OffsetKind::carrier, p, mw_seed));
    x[2] = seed_coord(2, approx_mu_fo_opt(OffsetKind::sampling, p, mw_seed));

    SolverResult result;
    int cycle = 0;
    double fx = f(x);
    for (; cycle < o.max_cycles; ++cycle) {
        const auto before = x;
        const double f_before = fx;
        for (int k = 0; k < 3; ++k) {
            if (active[k]) {
                line_search(f, x, k, std::log10(box[k].min), std::log10(box[k].max), o.tolerance);
            }
        }
        fx = f(x);
        double moved = 0.0;
        for (int k = 0; k < 3; ++k) {
            moved = std::max(moved, std::abs(x[k] - before[k]));
        }
        if (std::isfinite(fx) && (moved < o.tolerance || f_before - fx < 1e-9)) {
            result.converged = true;
            ++cycle;
            break;
        }
    }
    if (!std::isfinite(fx)) {
        throw SolverInfeasible("no step-size triple in the search box yields gamma > 0 and a finite EMSE");
    }

    result.cycles = cycle;
    result.steps = f.steps(x);
    result.prediction = predict_emse_complete(p, result.steps);
    for (int k = 0; k < 3; ++k) {
        const double lo = std::log10(box[k].min);
        const double hi = std::log10(box[k].max);
        result.bound_active[k] = active[k] && (x[k] - lo < 2.0 * o.tolerance || hi - x[k] < 2.0 * o.tolerance);
    }
    return result;
}

double to_db(double watts) {
    if (watts == 0.0) {
        return -inf;
    }
    return 10.0 * std::log10(watts);
}

} // namespace folms::theory
