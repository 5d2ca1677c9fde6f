#ifndef FOLMS_THEORY_HPP
#define FOLMS_THEORY_HPP

#include "folms/filter.hpp"
#include "folms/world.hpp"

#include <array>
#include <optional>
#include <stdexcept>

namespace folms::theory {

using filter::Clamp;
using filter::StepSizes;
using world::SystemParams;

/// Steady-state EMSE prediction. All powers in watts.
struct EmsePrediction {
    double zeta_w{0.0};
    double zeta_eps{0.0};
    double zeta_eta{0.0};
    double zeta_total{0.0};
    double mse{0.0};
    double gamma{0.0};
    bool valid{false};
};

/// Stability denominator of the complete expressions.
double stability_denominator(const SystemParams& p, const StepSizes& steps);

/// Closed-form EMSE including the gamma denominator. Terms whose step size in
/// the denominator is zero evaluate to 0 when their numerator is 0 and to
/// +inf otherwise.
EmsePrediction predict_emse_complete(const SystemParams& p, const StepSizes& steps);

/// Small-step-size approximation.
EmsePrediction predict_emse_simple(const SystemParams& p, const StepSizes& steps);

/// Uncoupled channel step-size seed; 0 when nothing in the channel path varies.
double approx_mu_w_opt(const SystemParams& p);

/// Random-walk (square-root) plus linear-drift (cube-root) step-size seed for
/// the carrier or sampling offset loop.
double approx_mu_fo_opt(OffsetKind kind, const SystemParams& p, double mu_w);

struct SolverOptions {
    Clamp w_box{1e-6, 1e-1};
    Clamp eps_box{1e-10, 1e-2};
    Clamp eta_box{1e-10, 1e-2};
    /// Hold mu_eps / mu_eta at exactly zero instead of optimizing them.
    bool disable_eps{false};
    bool disable_eta{false};
    /// Hold a coordinate at a given positive value; takes precedence over disable_*.
    std::optional<double> fixed_mu_w;
    std::optional<double> fixed_mu_eps;
    std::optional<double> fixed_mu_eta;
    double tolerance{1e-3};  ///< in log10 units
    int max_cycles{200};
};

struct SolverResult {
    StepSizes steps;
    EmsePrediction prediction;
    bool converged{false};
    int cycles{0};
    /// Per coordinate (w, eps, eta): optimum sits on a search-box edge.
    std::array<bool, 3> bound_active{};
};

class SolverInfeasible : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Minimizes the complete total EMSE over log10 step sizes by cyclic
/// golden-section search seeded from the closed-form approximations.
/// Throws SolverInfeasible if no point with gamma > 0 and finite EMSE exists.
SolverResult solve_optimal_step_sizes(const SystemParams& p, const SolverOptions& options = {});

/// 10 log10(watts); -inf for 0, NaN for negative input.
double to_db(double watts);

} // namespace folms::theory

#endif // FOLMS_THEORY_HPP
