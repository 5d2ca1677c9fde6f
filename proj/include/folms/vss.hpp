#ifndef FOLMS_VSS_HPP
#define FOLMS_VSS_HPP

#include "folms/filter.hpp"

#include <optional>
#include <vector>

namespace folms::vss {

using filter::Clamp;
using filter::FilterState;
using sigproc::DerivativeScheme;
using sigproc::KnownSignal;

struct VssSettings {
    double lambda_e{0.9999};
    double lambda_y{0.99};
    double lambda_eps{0.9999};
    double lambda_eta{0.9999};
    double lambda_r{0.99};
    Clamp w_clamp{1e-5, 1e-1};
    Clamp eps_clamp{1e-9, 1e-3};
    Clamp eta_clamp{1e-9, 1e-3};
    /// Noise variance handed to the algorithm; estimated at run time when empty.
    std::optional<double> known_noise;
    /// Lower bound on the run-time noise estimate (typically sigma_g^2).
    std::optional<double> noise_floor;
    double delta_factor{1e-3};          ///< delta = delta_factor * M * sigma_y^2
    double min_regressor_power{1e-12};  ///< below this the R_ye correction is skipped

    /// Throws std::invalid_argument for out-of-range forgetting factors or clamps.
    void validate() const;
};

/// Tracked quantities of the variable-step-size controller.
class VssState {
public:
    VssState(std::size_t taps, const VssSettings& settings);

    double error_power{1.0};      ///< sigma_e^2(n)
    double regressor_power{0.0};  ///< sigma_y^2(n)
    double grad_mean_eps{0.0};    ///< mean Delta_eps
    double grad_mean_eta{0.0};    ///< mean Delta_eta
    CVec cross_correlation;       ///< R_ye(n)
    double noise_estimate{0.0};   ///< sigma_v^2 estimate

    // last emitted step sizes
    double mu_w{0.0};
    double mu_eps{0.0};
    double mu_eta{0.0};

    /// Mean of the last M emitted carrier / sampling step sizes.
    double mean_mu_eps() const noexcept;
    double mean_mu_eta() const noexcept;

    /// Last M emitted values, oldest first.
    std::vector<double> mu_eps_history() const;
    std::vector<double> mu_eta_history() const;

    void push_history(double eps, double eta);

private:
    double mean_of(const std::vector<double>& ring) const noexcept;
    std::vector<double> ordered(const std::vector<double>& ring) const;

    std::vector<double> eps_ring_;
    std::vector<double> eta_ring_;
    std::size_t head_{0};  ///< index of the oldest entry
};

/// (1 / (y^H y + delta)) [1 - sigma_v / sigma_e], or 0 when the bracket is negative.
double compute_mu_w(double error_power, double noise_estimate, double regressor_energy, double delta);

/// Cube-root frequency-offset step size; `fallback` is returned when the
/// denominator vanishes.
double compute_mu_fo(OffsetKind kind, double mu_w, double grad_mean, double mean_step, double w_norm_sq,
                     double noise_estimate, double regressor_power, double fallback = 0.0);

/// sigma_e^2 - R_ye^H R_ye / sigma_y^2, floored at `floor` (>= 0).
double estimate_noise_variance(double error_power, double regressor_power, std::span<const cplx> cross_correlation,
                               double floor = 0.0, double min_regressor_power = 1e-12);

/// Clamp that also maps NaN to the lower bound.
double clamp_step(double mu, const Clamp& c) noexcept;

struct VssStepResult {
    FilterState state;
    VssState vss;
    cplx error;
};

/// One iteration of the variable-step-size estimator.
VssStepResult vss_step(const FilterState& state, const VssState& vss, const VssSettings& settings,
                       const KnownSignal& known, cplx d, DerivativeScheme scheme = DerivativeScheme::centered);

/// In-place form used by the run loop; `terms` and `ws` come from filter::evaluate.
void vss_update(FilterState& state, VssState& vss, const VssSettings& settings, const filter::ErrorTerms& terms,
                const filter::Workspace& ws);

/// Co-simulates one replica with the variable-step-size estimator. Diagnostics
/// include the emitted step sizes and the noise estimate when requested.
filter::RunTrace run_vss(const world::SystemParams& params, const VssSettings& settings, std::size_t n_iter,
                         std::uint64_t seed, const filter::RunOptions& options = {});

} // namespace folms::vss

#endif // FOLMS_VSS_HPP
