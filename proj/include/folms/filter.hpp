#ifndef FOLMS_FILTER_HPP
#define FOLMS_FILTER_HPP

#include "folms/sigproc.hpp"
#include "folms/world.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

namespace folms {

/// Selects the carrier (epsilon) or sampling (eta) frequency-offset loop.
enum class OffsetKind { carrier, sampling };

} // namespace folms

namespace folms::filter {

using sigproc::DerivativeScheme;
using sigproc::KnownSignal;

/// Live estimates of the channel, carrier offset and sampling offset.
struct FilterState {
    CVec w;             ///< channel estimate w_n
    double cfo{0.0};    ///< epsilon(n) [rad/sample]
    double sfo{0.0};    ///< eta(n)
    double phase{0.0};  ///< phi(n) accumulator
    double time{0.0};   ///< t(n) accumulator in base-rate samples

    static FilterState zeros(std::size_t taps, double start_time);
};

struct Clamp {
    double min{0.0};
    double max{1.0};

    double apply(double v) const noexcept { return v < min ? min : (v > max ? max : v); }
};

struct StepSizes {
    double mu_w{0.0};
    double mu_eps{0.0};
    double mu_eta{0.0};
    std::optional<Clamp> w_bounds;
    std::optional<Clamp> eps_bounds;
    std::optional<Clamp> eta_bounds;

    /// Throws std::invalid_argument for negative values or values outside
    /// their clamp interval.
    void validate() const;
};

/// Quantities computed before an update.
struct ErrorTerms {
    cplx error{};              ///< e(n)
    cplx output{};             ///< w^H y_n e^{j phi}
    cplx derivative_output{};  ///< (w^H y'_n) e^{j phi}
    double cfo_gradient{0.0};  ///< Im{w^H y_n e^{j phi} e*}
    double sfo_gradient{0.0};  ///< Re{w^H y'_n e^{j phi} e*}
};

/// Scratch buffers so the per-sample path never allocates.
struct Workspace {
    CVec y;
    CVec y_next;
    CVec y_prev;

    explicit Workspace(std::size_t taps) : y(taps), y_next(taps), y_prev(taps) {}
};

/// Fills ws.y with the regressor at state.time and evaluates the error and
/// both frequency-offset gradients.
ErrorTerms evaluate(const FilterState& state, const KnownSignal& known, cplx d, DerivativeScheme scheme,
                    Workspace& ws);

/// Applies the three gradient updates with the given step sizes, then advances
/// the phase and time accumulators. `ws.y` must hold the regressor used in
/// `terms`.
void apply_update(FilterState& state, const ErrorTerms& terms, const Workspace& ws, double mu_w, double mu_eps,
                  double mu_eta);

struct ErrorResult {
    cplx error;
    CVec regressor;
    cplx derivative;  ///< w^H y'_n (without the phase rotation)
};

ErrorResult folms_error(const FilterState& state, const KnownSignal& known, cplx d,
                        DerivativeScheme scheme = DerivativeScheme::centered);

struct StepResult {
    FilterState state;
    cplx error;
};

StepResult folms_step(const FilterState& state, const KnownSignal& known, cplx d, const StepSizes& steps,
                      DerivativeScheme scheme = DerivativeScheme::centered);

struct RunTrace {
    std::vector<cplx> errors;
    /// Noise-free part of each error (e(n) minus the realized measurement noise).
    std::vector<cplx> excess_errors;
    // diagnostics, empty unless requested
    std::vector<double> w_error_sq;  ///< ||w^o_n e^{-j phi~} - w_n||^2 (equal-length filters only)
    std::vector<double> cfo_error;   ///< epsilon^o - epsilon
    std::vector<double> sfo_error;   ///< eta^o - eta
    std::vector<double> mu_w;        ///< emitted step sizes (variable-step runs)
    std::vector<double> mu_eps;
    std::vector<double> mu_eta;
    std::vector<double> noise_estimate;
    std::size_t iterations{0};
};

class DivergenceError : public std::runtime_error {
public:
    DivergenceError(std::size_t iteration, const std::string& what)
        : std::runtime_error(what), iteration_(iteration) {}

    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t iteration_;
};

/// Initial estimator state. `offsets` starts epsilon and eta at the true
/// initial offsets; `full` additionally copies the true mean channel into w.
enum class WarmStart { none, offsets, full };

struct RunOptions {
    DerivativeScheme scheme{DerivativeScheme::centered};
    WarmStart warm_start{WarmStart::offsets};
    bool record_diagnostics{false};
    double divergence_factor{1e6};
};

/// Divergence threshold on |e(n)|^2.
double divergence_threshold(const world::SystemParams& params, double factor);

/// Records one sample of the optional diagnostics.
void record_diagnostics(RunTrace& trace, const world::World& world, const FilterState& state);

/// Per-iteration update hook for co_simulate: receives the state, the freshly
/// evaluated terms and the regressor workspace, and must advance the state.
using UpdateFn = std::function<void(FilterState&, const ErrorTerms&, const Workspace&, RunTrace&)>;

/// World/estimator co-simulation loop shared by the fixed and variable-step
/// estimators: evaluates, checks for divergence, records, then calls `update`.
RunTrace co_simulate(const world::SystemParams& params, std::size_t n_iter, std::uint64_t seed,
                     const RunOptions& options, const UpdateFn& update);

/// Co-simulates one replica of the world with the fixed-step estimator.
RunTrace run_folms(const world::SystemParams& params, const StepSizes& steps, std::size_t n_iter, std::uint64_t seed,
                   const RunOptions& options = {});

/// Mean |e|^2 over the retained tail minus the noise variance.
double measure_emse(const RunTrace& trace, double noise_variance, double discard_fraction = 0.5);

/// Mean |e_a|^2 over the retained tail, using the recorded noise-free errors.
/// Same expectation as measure_emse with far lower variance when the EMSE is
/// small compared to the noise floor.
double measure_excess_emse(const RunTrace& trace, double discard_fraction = 0.5);

/// Mean of |z|^2 over the tail of `values` after dropping the leading fraction.
double tail_power(std::span<const cplx> values, double discard_fraction);

} // namespace folms::filter

#endif // FOLMS_FILTER_HPP
