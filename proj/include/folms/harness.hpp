#ifndef FOLMS_HARNESS_HPP
#define FOLMS_HARNESS_HPP

#include "folms/filter.hpp"
#include "folms/theory.hpp"
#include "folms/vss.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace folms::harness {

using filter::StepSizes;
using world::SystemParams;

enum class EstimatorKind { fixed, vss };

/// What the variable-step estimator is told about the noise: the true total
/// variance, only the receiver floor sigma_g^2, or nothing (estimated online).
enum class NoiseKnowledge { known, stale, estimated };

/// Per-replica EMSE estimator: mean noise-free error power, or mean |e|^2
/// minus the true noise variance.
enum class EmseMeasure { excess, error };

struct SweepAxis {
    std::string name;
    std::vector<double> values;
};

/// Step sizes for the fixed-step estimator; an empty entry is filled in by
/// the optimal-step-size solver.
struct StepChoice {
    std::optional<double> mu_w;
    std::optional<double> mu_eps;
    std::optional<double> mu_eta;
};

inline constexpr std::uint64_t default_seed = 20240611;

struct ExperimentConfig {
    SystemParams system;
    EstimatorKind estimator{EstimatorKind::fixed};
    sigproc::DerivativeScheme scheme{sigproc::DerivativeScheme::centered};
    filter::WarmStart warm_start{filter::WarmStart::full};
    StepChoice steps;
    theory::SolverOptions solver;
    vss::VssSettings vss;
    NoiseKnowledge noise{NoiseKnowledge::known};
    std::size_t replicas{16};
    std::size_t iterations{200000};  ///< measured iterations per replica
    /// Iterations run before measurement starts; defaults to 5e4 for the
    /// fixed-step estimator and 3e5 for the variable-step one.
    std::optional<std::size_t> preroll;
    std::uint64_t seed{default_seed};
    unsigned threads{0};  ///< 0 = hardware concurrency
    double divergence_factor{1e6};
    EmseMeasure measure{EmseMeasure::excess};
    std::vector<SweepAxis> axes;
    std::string output;

    std::size_t preroll_iterations() const;
    std::size_t total_iterations() const { return preroll_iterations() + iterations; }

    /// Throws ConfigError when an invariant is violated.
    void validate() const;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ExperimentFailed : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parses an INI-style configuration ("[section]" headers, "key = value",
/// full-line ";" or "#" comments). Unknown sections or keys are errors.
ExperimentConfig parse_config(std::istream& in, const std::string& source_name = "<config>");
ExperimentConfig load_config(const std::string& path);

/// Grid text: "log:start:stop:points", "lin:start:stop:points" or a comma list.
std::vector<double> parse_grid(const std::string& text);
std::vector<double> log_grid(double start, double stop, std::size_t points);

/// Step sizes used by the fixed-step estimator for `system`: configured
/// values, with the missing ones taken from the solver optimum over the free
/// coordinates.
StepSizes resolve_steps(const ExperimentConfig& config, const SystemParams& system);

/// VSS settings with the noise variance handed over according to config.noise.
vss::VssSettings resolve_vss(const ExperimentConfig& config, const SystemParams& system,
                             const vss::VssSettings& base);

struct MonteCarloResult {
    double mean{0.0};            ///< EMSE averaged over surviving replicas [W]
    double standard_error{0.0};  ///< across surviving replicas [W]
    std::vector<double> replicas;  ///< per-replica EMSE, NaN where diverged
    std::size_t diverged{0};
    StepSizes steps;               ///< fixed steps, or time-averaged emitted VSS steps
    double mean_noise_estimate{0.0};  ///< VSS only: time-averaged sigma_v^2 estimate
    double runtime_s{0.0};
};

/// Runs config.replicas independent replicas of config.system and aggregates
/// their steady-state EMSE. Throws ExperimentFailed if every replica diverged.
MonteCarloResult run_monte_carlo(const ExperimentConfig& config);

struct SweepRow {
    std::vector<double> swept;
    StepSizes steps;
    theory::EmsePrediction prediction;
    MonteCarloResult simulation;  ///< mean is NaN when every replica diverged
};

struct SweepResult {
    std::vector<std::string> axes;
    std::vector<SweepRow> rows;
    /// Solver optimum of the base configuration (step-size sweeps only).
    std::optional<theory::SolverResult> optimum;
};

/// Grid over mu_w / mu_eps / mu_eta (one or two axes). Unswept step sizes
/// come from resolve_steps.
SweepResult sweep_step_sizes(const ExperimentConfig& config);

/// Grid over system or VSS parameters. Fixed-step rows run at the solver
/// optimum of each point; every row's prediction is the theory at that optimum.
SweepResult sweep_system_params(const ExperimentConfig& config);

bool is_step_axis(const std::string& name);
bool is_system_axis(const std::string& name);

/// Sets a named sweep parameter on the system or VSS settings.
void apply_axis(const std::string& name, double value, SystemParams& system, vss::VssSettings& settings);

/// CSV header for a given sweep arity (0 for single-configuration output).
std::string csv_header(std::size_t arity);
std::string csv_row(const SweepRow& row);
void write_csv(std::ostream& out, const SweepResult& result);

/// 10 log10 of a standard error relative to its mean (first-order).
double stderr_db(double mean, double standard_error);

/// Runs fn(0..count-1) on up to `threads` workers; rethrows the first failure.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn);

/// First iteration after which the windowed excess-error power stays within
/// `tolerance_db` of its final value; the window is `window` samples long.
std::size_t convergence_time(const filter::RunTrace& trace, std::size_t window, double tolerance_db);

} // namespace folms::harness

#endif // FOLMS_HARNESS_HPP
