#include "folms/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

namespace folms::harness {

namespace {

constexpr double nan = std::numeric_limits<double>::quiet_NaN();

StepSizes make_steps(double mu_w, double mu_eps, double mu_eta) {
    StepSizes s;
    s.mu_w = mu_w;
    s.mu_eps = mu_eps;
    s.mu_eta = mu_eta;
    return s;
}

double to_double(const std::string& s) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end) {
        throw std::invalid_argument(fmt::format("expected a number, got '{}'", s));
    }
    return v;
}

std::uint64_t to_u64(const std::string& s) {
    std::uint64_t v = 0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end) {
        throw std::invalid_argument(fmt::format("expected a non-negative integer, got '{}'", s));
    }
    return v;
}

// integers may also be written as 2e5
std::size_t to_count(const std::string& s) {
    const double v = to_double(s);
    if (!(v >= 0.0) || v != std::floor(v) || v > 1e15) {
        throw std::invalid_argument(fmt::format("expected a non-negative integer, got '{}'", s));
    }
    return static_cast<std::size_t>(v);
}

bool to_bool(const std::string& s) {
    if (s == "true" || s == "yes" || s == "1") {
        return true;
    }
    if (s == "false" || s == "no" || s == "0") {
        return false;
    }
    throw std::invalid_argument(fmt::format("expected true or false, got '{}'", s));
}

template <typename E>
E to_enum(const std::string& s, std::initializer_list<std::pair<const char*, E>> options) {
    std::string names;
    for (const auto& [name, value] : options) {
        if (s == name) {
            return value;
        }
        names += names.empty() ? name : fmt::format(", {}", name);
    }
    throw std::invalid_argument(fmt::format("expected one of {}, got '{}'", names, s));
}

std::optional<double> to_step(const std::string& s) {
    if (s == "opt") {
        return std::nullopt;
    }
    const double v = to_double(s);
    if (!(v >= 0.0)) {
        throw std::invalid_argument("step sizes must be non-negative");
    }
    return v;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Line of `key` inside `[section]`, for diagnostics; 0 when not found.
std::size_t locate(const std::string& text, const std::string& section, const std::string& key) {
    std::istringstream in(text);
    std::string line;
    std::string current;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        const auto t = trim(line);
        if (t.size() >= 2 && t.front() == '[' && t.back() == ']') {
            current = trim(t.substr(1, t.size() - 2));
        } else if (current == section && !t.empty()) {
            const auto eq = t.find('=');
            if (eq != std::string::npos && trim(t.substr(0, eq)) == key) {
                return n;
            }
        }
    }
    return 0;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;
using Section = std::map<std::string, Setter>;

Setter real(double SystemParams::*field) {
    return [field](ExperimentConfig& c, const std::string& v) { c.system.*field = to_double(v); };
}

std::map<std::string, Section> schema() {
    std::map<std::string, Section> s;
    s["system"] = {
        {"signal_variance", real(&SystemParams::signal_variance)},
        {"oversampling", [](ExperimentConfig& c, const std::string& v) {
             c.system.oversampling = static_cast<int>(to_count(v));
         }},
        {"sampling_period", real(&SystemParams::sampling_period)},
        {"channel_taps", [](ExperimentConfig& c, const std::string& v) { c.system.channel_taps = to_count(v); }},
        {"filter_taps", [](ExperimentConfig& c, const std::string& v) { c.system.filter_taps = to_count(v); }},
        {"channel_gain", real(&SystemParams::channel_gain)},
        {"ar_coefficient", real(&SystemParams::ar_coefficient)},
        {"sigma_q2", real(&SystemParams::sigma_q2)},
        {"sigma_phi2", real(&SystemParams::sigma_phi2)},
        {"sigma_eps2", real(&SystemParams::sigma_eps2)},
        {"kappa", real(&SystemParams::kappa)},
        {"sigma_beta2", real(&SystemParams::sigma_beta2)},
        {"sigma_eta2", real(&SystemParams::sigma_eta2)},
        {"rho", real(&SystemParams::rho)},
        {"sigma_g2", real(&SystemParams::sigma_g2)},
        {"sigma_s2", real(&SystemParams::sigma_s2)},
        {"carrier_offset_hz", real(&SystemParams::carrier_offset_hz)},
        {"sampling_offset_hz", real(&SystemParams::sampling_offset_hz)},
    };
    s["estimator"] = {
        {"kind", [](ExperimentConfig& c, const std::string& v) {
             c.estimator = to_enum<EstimatorKind>(v, {{"fixed", EstimatorKind::fixed}, {"vss", EstimatorKind::vss}});
         }},
        {"derivative", [](ExperimentConfig& c, const std::string& v) {
             c.scheme = to_enum<sigproc::DerivativeScheme>(
                 v, {{"centered", sigproc::DerivativeScheme::centered},
                     {"backward", sigproc::DerivativeScheme::backward}});
         }},
        {"warm_start", [](ExperimentConfig& c, const std::string& v) {
             c.warm_start = to_enum<filter::WarmStart>(v, {{"none", filter::WarmStart::none},
                                                            {"offsets", filter::WarmStart::offsets},
                                                            {"full", filter::WarmStart::full}});
         }},
    };
    s["steps"] = {
        {"mu_w", [](ExperimentConfig& c, const std::string& v) { c.steps.mu_w = to_step(v); }},
        {"mu_eps", [](ExperimentConfig& c, const std::string& v) { c.steps.mu_eps = to_step(v); }},
        {"mu_eta", [](ExperimentConfig& c, const std::string& v) { c.steps.mu_eta = to_step(v); }},
    };
    s["solver"] = {
        {"mu_w_min", [](ExperimentConfig& c, const std::string& v) { c.solver.w_box.min = to_double(v); }},
        {"mu_w_max", [](ExperimentConfig& c, const std::string& v) { c.solver.w_box.max = to_double(v); }},
        {"mu_eps_min", [](ExperimentConfig& c, const std::string& v) { c.solver.eps_box.min = to_double(v); }},
        {"mu_eps_max", [](ExperimentConfig& c, const std::string& v) { c.solver.eps_box.max = to_double(v); }},
        {"mu_eta_min", [](ExperimentConfig& c, const std::string& v) { c.solver.eta_box.min = to_double(v); }},
        {"mu_eta_max", [](ExperimentConfig& c, const std::string& v) { c.solver.eta_box.max = to_double(v); }},
        {"tolerance", [](ExperimentConfig& c, const std::string& v) { c.solver.tolerance = to_double(v); }},
        {"max_cycles", [](ExperimentConfig& c, const std::string& v) {
             c.solver.max_cycles = static_cast<int>(to_count(v));
         }},
    };
    s["vss"] = {
        {"lambda_e", [](ExperimentConfig& c, const std::string& v) { c.vss.lambda_e = to_double(v); }},
        {"lambda_y", [](ExperimentConfig& c, const std::string& v) { c.vss.lambda_y = to_double(v); }},
        {"lambda_eps", [](ExperimentConfig& c, const std::string& v) { c.vss.lambda_eps = to_double(v); }},
        {"lambda_eta", [](ExperimentConfig& c, const std::string& v) { c.vss.lambda_eta = to_double(v); }},
        {"lambda_r", [](ExperimentConfig& c, const std::string& v) { c.vss.lambda_r = to_double(v); }},
        {"mu_w_min", [](ExperimentConfig& c, const std::string& v) { c.vss.w_clamp.min = to_double(v); }},
        {"mu_w_max", [](ExperimentConfig& c, const std::string& v) { c.vss.w_clamp.max = to_double(v); }},
        {"mu_eps_min", [](ExperimentConfig& c, const std::string& v) { c.vss.eps_clamp.min = to_double(v); }},
        {"mu_eps_max", [](ExperimentConfig& c, const std::string& v) { c.vss.eps_clamp.max = to_double(v); }},
        {"mu_eta_min", [](ExperimentConfig& c, const std::string& v) { c.vss.eta_clamp.min = to_double(v); }},
        {"mu_eta_max", [](ExperimentConfig& c, const std::string& v) { c.vss.eta_clamp.max = to_double(v); }},
        {"delta_factor", [](ExperimentConfig& c, const std::string& v) { c.vss.delta_factor = to_double(v); }},
        {"noise", [](ExperimentConfig& c, const std::string& v) {
             c.noise = to_enum<NoiseKnowledge>(v, {{"known", NoiseKnowledge::known},
                                                    {"stale", NoiseKnowledge::stale},
                                                    {"estimated", NoiseKnowledge::estimated}});
         }},
        {"noise_floor", [](ExperimentConfig& c, const std::string& v) {
             if (v == "none") {
                 c.vss.noise_floor.reset();
             } else {
                 c.vss.noise_floor = to_double(v);
             }
         }},
    };
    s["experiment"] = {
        {"replicas", [](ExperimentConfig& c, const std::string& v) { c.replicas = to_count(v); }},
        {"iterations", [](ExperimentConfig& c, const std::string& v) { c.iterations = to_count(v); }},
        {"preroll", [](ExperimentConfig& c, const std::string& v) { c.preroll = to_count(v); }},
        {"seed", [](ExperimentConfig& c, const std::string& v) { c.seed = to_u64(v); }},
        {"threads", [](ExperimentConfig& c, const std::string& v) {
             c.threads = static_cast<unsigned>(to_count(v));
         }},
        {"divergence_factor", [](ExperimentConfig& c, const std::string& v) {
             c.divergence_factor = to_double(v);
         }},
        {"measure", [](ExperimentConfig& c, const std::string& v) {
             c.measure = to_enum<EmseMeasure>(v, {{"excess", EmseMeasure::excess}, {"error", EmseMeasure::error}});
         }},
        {"full_scale", [](ExperimentConfig& c, const std::string& v) {
             if (to_bool(v)) {
                 c.iterations = 1000000;
             }
         }},
    };
    s["output"] = {
        {"path", [](ExperimentConfig& c, const std::string& v) { c.output = v; }},
    };
    return s;
}

void set_axis(ExperimentConfig& c, std::size_t index, const std::string& key, const std::string& value) {
    if (c.axes.size() <= index) {
        c.axes.resize(index + 1);
    }
    if (key == "axis") {
        c.axes[index].name = value;
    } else {
        c.axes[index].values = parse_grid(value);
    }
}

} // namespace

std::size_t ExperimentConfig::preroll_iterations() const {
    if (preroll) {
        return *preroll;
    }
    // the variable-step controller starts from sigma_e^2 = 1 and needs longer
    return estimator == EstimatorKind::vss ? 300000 : 50000;
}

void ExperimentConfig::validate() const {
    try {
        system.validate();
        vss.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (replicas < 1) {
        throw ConfigError("replicas must be at least 1");
    }
    if (iterations < 1000) {
        throw ConfigError("iterations must be at least 1000");
    }
    if (!(divergence_factor > 1.0)) {
        throw ConfigError("divergence_factor must exceed 1");
    }
    for (const auto& v : {steps.mu_w, steps.mu_eps, steps.mu_eta}) {
        if (v && !(*v >= 0.0 && std::isfinite(*v))) {
            throw ConfigError("step sizes must be finite and non-negative");
        }
    }
    if (steps.mu_w && *steps.mu_w == 0.0) {
        throw ConfigError("mu_w must be positive");
    }
    if (axes.size() > 2) {
        throw ConfigError("at most two sweep axes are supported");
    }
    for (std::size_t i = 0; i < axes.size(); ++i) {
        const auto& a = axes[i];
        if (a.name.empty()) {
            throw ConfigError(fmt::format("sweep axis {} has a grid but no name", i + 1));
        }
        if (!is_step_axis(a.name) && !is_system_axis(a.name)) {
            throw ConfigError(fmt::format("unknown sweep axis '{}'", a.name));
        }
        if (a.values.empty()) {
            throw ConfigError(fmt::format("sweep axis '{}' has an empty grid", a.name));
        }
        if (std::adjacent_find(a.values.begin(), a.values.end(), std::greater_equal<>()) != a.values.end()) {
            throw ConfigError(fmt::format("sweep grid for '{}' must be strictly increasing", a.name));
        }
    }
    if (axes.size() == 2) {
        if (axes[0].name == axes[1].name) {
            throw ConfigError("the two sweep axes must differ");
        }
        if (is_step_axis(axes[0].name) != is_step_axis(axes[1].name)) {
            throw ConfigError("cannot mix step-size and system-parameter sweep axes");
        }
    }
}

std::vector<double> log_grid(double start, double stop, std::size_t points) {
    if (!(start > 0.0 && stop > 0.0) || points == 0) {
        throw std::invalid_argument("log grid needs positive bounds and at least one point");
    }
    if (points == 1) {
        return {start};
    }
    std::vector<double> g(points);
    const double a = std::log10(start);
    const double b = std::log10(stop);
    for (std::size_t i = 0; i < points; ++i) {
        g[i] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1));
    }
    // land exactly on the endpoints
    g.front() = start;
    g.back() = stop;
    return g;
}

std::vector<double> parse_grid(const std::string& text) {
    const auto t = trim(text);
    if (t.rfind("log:", 0) == 0 || t.rfind("lin:", 0) == 0) {
        std::vector<std::string> parts;
        std::istringstream in(t.substr(4));
        for (std::string p; std::getline(in, p, ':');) {
            parts.push_back(trim(p));
        }
        if (parts.size() != 3) {
            throw std::invalid_argument("range grids are written kind:start:stop:points");
        }
        const double a = to_double(parts[0]);
        const double b = to_double(parts[1]);
        const std::size_t n = to_count(parts[2]);
        if (t[1] == 'o') {
            return log_grid(a, b, n);
        }
        if (n == 0) {
            throw std::invalid_argument("grid needs at least one point");
        }
        std::vector<double> g(n, a);
        for (std::size_t i = 1; i < n; ++i) {
            g[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
        }
        return g;
    }
    std::vector<double> g;
    std::istringstream in(t);
    for (std::string p; std::getline(in, p, ',');) {
        g.push_back(to_double(trim(p)));
    }
    return g;
}

ExperimentConfig parse_config(std::istream& in, const std::string& source_name) {
    const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    boost::property_tree::ptree tree;
    try {
        std::istringstream ini(text);
        boost::property_tree::ini_parser::read_ini(ini, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(fmt::format("{}:{}: {}", source_name, e.line(), e.message()));
    }

    ExperimentConfig c;
    const auto sections = schema();
    for (const auto& [section, body] : tree) {
        if (!body.data().empty()) {
            throw ConfigError(fmt::format("{}:{}: key '{}' outside of any section", source_name,
                                          locate(text, "", section), section));
        }
        const auto sec = sections.find(section);
        if (sec == sections.end() && section != "sweep") {
            throw ConfigError(fmt::format("{}: unknown section [{}]", source_name, section));
        }
        for (const auto& [key, node] : body) {
            const auto value = node.get_value<std::string>();
            const auto where = [&, key = key] {
                return fmt::format("{}:{}: [{}] {}", source_name, locate(text, section, key), section, key);
            };
            try {
                if (section == "sweep") {
                    if ((key == "axis1" || key == "grid1" || key == "axis2" || key == "grid2")) {
                        set_axis(c, key.back() == '1' ? 0 : 1, key.substr(0, 4), value);
                        continue;
                    }
                    throw ConfigError(fmt::format("{}: unknown key", where()));
                }
                const auto setter = sec->second.find(key);
                if (setter == sec->second.end()) {
                    throw ConfigError(fmt::format("{}: unknown key", where()));
                }
                setter->second(c, value);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(fmt::format("{}: {}", where(), e.what()));
            }
        }
    }
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(fmt::format("{}: {}", source_name, e.what()));
    }
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(fmt::format("cannot open configuration file '{}'", path));
    }
    return parse_config(in, path);
}

namespace {

std::optional<theory::SolverResult> solve_for(const ExperimentConfig& config, const SystemParams& system,
                                              const StepChoice& choice) {
    if (choice.mu_w && choice.mu_eps && choice.mu_eta) {
        return std::nullopt;
    }
    auto options = config.solver;
    options.fixed_mu_w = choice.mu_w;
    options.fixed_mu_eps = choice.mu_eps;
    options.fixed_mu_eta = choice.mu_eta;
    return theory::solve_optimal_step_sizes(system, options);
}

StepSizes steps_for(const ExperimentConfig& config, const SystemParams& system, const StepChoice& choice) {
    if (const auto r = solve_for(config, system, choice)) {
        return r->steps;
    }
    return make_steps(*choice.mu_w, *choice.mu_eps, *choice.mu_eta);
}

struct ReplicaOutcome {
    double emse{nan};
    double mu_w{0.0};
    double mu_eps{0.0};
    double mu_eta{0.0};
    double noise{0.0};
};

double tail_mean(const std::vector<double>& v, std::size_t from) {
    if (v.size() <= from) {
        return nan;
    }
    return std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(from), v.end(), 0.0) /
           static_cast<double>(v.size() - from);
}

// One grid point: every replica of `system` with the given estimator setup.
MonteCarloResult run_point(const ExperimentConfig& config, const SystemParams& system, const StepSizes& steps,
                           const vss::VssSettings& vss_settings, std::uint64_t grid_index) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t preroll = config.preroll_iterations();
    const std::size_t total = config.total_iterations();

    filter::RunOptions options;
    options.scheme = config.scheme;
    options.warm_start = config.warm_start;
    options.divergence_factor = config.divergence_factor;
    options.record_diagnostics = config.estimator == EstimatorKind::vss;

    std::vector<ReplicaOutcome> out(config.replicas);
    parallel_for(config.replicas, config.threads, [&](std::size_t r) {
        const auto seed = derive_seed(config.seed, {grid_index, static_cast<std::uint64_t>(r)});
        try {
            const auto trace = config.estimator == EstimatorKind::fixed
                                   ? filter::run_folms(system, steps, total, seed, options)
                                   : vss::run_vss(system, vss_settings, total, seed, options);
            ReplicaOutcome o;
            if (config.measure == EmseMeasure::excess) {
                o.emse = filter::tail_power(std::span(trace.excess_errors).subspan(preroll), 0.0);
            } else {
                o.emse = filter::tail_power(std::span(trace.errors).subspan(preroll), 0.0) - system.noise_variance();
            }
            if (config.estimator == EstimatorKind::vss) {
                o.mu_w = tail_mean(trace.mu_w, preroll);
                o.mu_eps = tail_mean(trace.mu_eps, preroll);
                o.mu_eta = tail_mean(trace.mu_eta, preroll);
                o.noise = tail_mean(trace.noise_estimate, preroll);
            }
            out[r] = o;
        } catch (const filter::DivergenceError&) {
            out[r] = ReplicaOutcome{};
        }
    });

    MonteCarloResult res;
    res.steps = steps;
    std::vector<double> ok;
    double mw = 0.0, me = 0.0, mh = 0.0, nv = 0.0;
    for (const auto& o : out) {
        res.replicas.push_back(o.emse);
        if (std::isnan(o.emse)) {
            ++res.diverged;
            continue;
        }
        ok.push_back(o.emse);
        mw += o.mu_w;
        me += o.mu_eps;
        mh += o.mu_eta;
        nv += o.noise;
    }
    if (ok.empty()) {
        res.mean = nan;
        res.standard_error = nan;
    } else {
        const double n = static_cast<double>(ok.size());
        res.mean = std::accumulate(ok.begin(), ok.end(), 0.0) / n;
        double ss = 0.0;
        for (double v : ok) {
            ss += (v - res.mean) * (v - res.mean);
        }
        res.standard_error = ok.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
        if (config.estimator == EstimatorKind::vss) {
            res.steps = make_steps(mw / n, me / n, mh / n);
            res.mean_noise_estimate = nv / n;
        }
    }
    res.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

// Row-major cartesian product of the configured axes.
std::vector<std::vector<double>> grid_points(const std::vector<SweepAxis>& axes) {
    std::vector<std::vector<double>> pts{{}};
    for (const auto& a : axes) {
        std::vector<std::vector<double>> next;
        for (const auto& p : pts) {
            for (double v : a.values) {
                auto q = p;
                q.push_back(v);
                next.push_back(std::move(q));
            }
        }
        pts = std::move(next);
    }
    return pts;
}

} // namespace

StepSizes resolve_steps(const ExperimentConfig& config, const SystemParams& system) {
    return steps_for(config, system, config.steps);
}

vss::VssSettings resolve_vss(const ExperimentConfig& config, const SystemParams& system,
                             const vss::VssSettings& base) {
    auto s = base;
    switch (config.noise) {
    case NoiseKnowledge::known:
        s.known_noise = system.noise_variance();
        break;
    case NoiseKnowledge::stale:
        s.known_noise = system.sigma_g2;
        break;
    case NoiseKnowledge::estimated:
        s.known_noise.reset();
        break;
    }
    return s;
}

MonteCarloResult run_monte_carlo(const ExperimentConfig& config) {
    config.validate();
    const StepSizes steps = config.estimator == EstimatorKind::fixed ? resolve_steps(config, config.system)
                                                                      : StepSizes{};
    auto r = run_point(config, config.system, steps, resolve_vss(config, config.system, config.vss), 0);
    if (r.diverged == config.replicas) {
        throw ExperimentFailed(fmt::format("all {} replicas diverged", config.replicas));
    }
    return r;
}

bool is_step_axis(const std::string& name) { return name == "mu_w" || name == "mu_eps" || name == "mu_eta"; }

bool is_system_axis(const std::string& name) {
    static const char* const names[] = {"sigma_q2",     "sigma_phi2",  "sigma_beta2", "sigma_eps2",
                                        "sigma_eta2",   "kappa",       "rho",         "channel_gain",
                                        "filter_taps",  "sigma_s2",    "lambda_r",    "lambda_e"};
    return std::find(std::begin(names), std::end(names), name) != std::end(names);
}

void apply_axis(const std::string& name, double value, SystemParams& p, vss::VssSettings& s) {
    static const std::map<std::string, double SystemParams::*> reals{
        {"sigma_q2", &SystemParams::sigma_q2},       {"sigma_phi2", &SystemParams::sigma_phi2},
        {"sigma_beta2", &SystemParams::sigma_beta2}, {"sigma_eps2", &SystemParams::sigma_eps2},
        {"sigma_eta2", &SystemParams::sigma_eta2},   {"kappa", &SystemParams::kappa},
        {"rho", &SystemParams::rho},                 {"channel_gain", &SystemParams::channel_gain},
        {"sigma_s2", &SystemParams::sigma_s2}};
    if (const auto it = reals.find(name); it != reals.end()) {
        p.*(it->second) = value;
    } else if (name == "filter_taps") {
        if (!(value >= 1.0) || value != std::floor(value)) {
            throw ConfigError(fmt::format("filter_taps must be a positive integer, got {}", value));
        }
        p.filter_taps = static_cast<std::size_t>(value);
    } else if (name == "lambda_r") {
        s.lambda_r = value;
    } else if (name == "lambda_e") {
        s.lambda_e = value;
    } else {
        throw ConfigError(fmt::format("'{}' is not a system sweep axis", name));
    }
}

SweepResult sweep_step_sizes(const ExperimentConfig& config) {
    config.validate();
    if (config.axes.empty() || !is_step_axis(config.axes.front().name)) {
        throw ConfigError("a step-size sweep needs mu_w, mu_eps or mu_eta axes");
    }
    if (config.estimator != EstimatorKind::fixed) {
        throw ConfigError("step-size sweeps apply to the fixed-step estimator only");
    }
    SweepResult result;
    StepChoice companions = config.steps;
    for (const auto& a : config.axes) {
        result.axes.push_back(a.name);
        (a.name == "mu_w" ? companions.mu_w : a.name == "mu_eps" ? companions.mu_eps : companions.mu_eta).reset();
    }
    StepSizes base;
    if (auto opt = solve_for(config, config.system, companions)) {
        base = opt->steps;
        result.optimum = std::move(opt);
    } else {
        base = make_steps(*companions.mu_w, *companions.mu_eps, *companions.mu_eta);
    }

    const auto points = grid_points(config.axes);
    for (std::size_t g = 0; g < points.size(); ++g) {
        SweepRow row;
        row.swept = points[g];
        row.steps = base;
        for (std::size_t k = 0; k < config.axes.size(); ++k) {
            const auto& n = config.axes[k].name;
            (n == "mu_w" ? row.steps.mu_w : n == "mu_eps" ? row.steps.mu_eps : row.steps.mu_eta) = points[g][k];
        }
        row.prediction = theory::predict_emse_complete(config.system, row.steps);
        row.simulation = run_point(config, config.system, row.steps, config.vss, g);
        result.rows.push_back(std::move(row));
    }
    return result;
}

SweepResult sweep_system_params(const ExperimentConfig& config) {
    config.validate();
    if (config.axes.empty() || !is_system_axis(config.axes.front().name)) {
        throw ConfigError("a system sweep needs system-parameter axes");
    }
    SweepResult result;
    for (const auto& a : config.axes) {
        result.axes.push_back(a.name);
    }
    const auto points = grid_points(config.axes);
    for (std::size_t g = 0; g < points.size(); ++g) {
        SystemParams system = config.system;
        vss::VssSettings settings = config.vss;
        for (std::size_t k = 0; k < config.axes.size(); ++k) {
            apply_axis(config.axes[k].name, points[g][k], system, settings);
        }
        try {
            system.validate();
            settings.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(fmt::format("sweep point {}: {}", g, e.what()));
        }
        SweepRow row;
        row.swept = points[g];
        const StepSizes optimal = resolve_steps(config, system);
        row.prediction = theory::predict_emse_complete(system, optimal);
        row.simulation = run_point(config, system, optimal, resolve_vss(config, system, settings), g);
        row.steps = row.simulation.steps;
        result.rows.push_back(std::move(row));
    }
    return result;
}

double stderr_db(double mean, double standard_error) {
    if (!(mean > 0.0)) {
        return nan;
    }
    return 10.0 / std::log(10.0) * standard_error / mean;
}

std::string csv_header(std::size_t arity) {
    std::string h;
    for (std::size_t k = 1; k <= arity; ++k) {
        h += fmt::format("swept_param_{},", k);
    }
    return h + "mu_w,mu_eps,mu_eta,zeta_pred_dB,zeta_sim_dB,stderr_dB,diverged,gamma,runtime_s";
}

std::string csv_row(const SweepRow& row) {
    std::string s;
    for (double v : row.swept) {
        s += fmt::format("{:.6e},", v);
    }
    const double pred = row.prediction.valid ? theory::to_db(row.prediction.zeta_total) : nan;
    const double sim = row.simulation.mean > 0.0 ? theory::to_db(row.simulation.mean) : nan;
    s += fmt::format("{:.6e},{:.6e},{:.6e},{:.4f},{:.4f},{:.4f},{},{:.6f},{:.3f}", row.steps.mu_w, row.steps.mu_eps,
                     row.steps.mu_eta, pred, sim, stderr_db(row.simulation.mean, row.simulation.standard_error),
                     row.simulation.diverged, row.prediction.gamma, row.simulation.runtime_s);
    return s;
}

void write_csv(std::ostream& out, const SweepResult& result) {
    out << csv_header(result.axes.size()) << '\n';
    for (const auto& row : result.rows) {
        out << csv_row(row) << '\n';
    }
}

void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn) {
    unsigned n = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
    n = static_cast<unsigned>(std::min<std::size_t>(n, count));
    if (n <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        }
    };
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n; ++t) {
        pool.emplace_back(worker);
    }
    pool.clear();
    if (failure) {
        std::rethrow_exception(failure);
    }
}

std::size_t convergence_time(const filter::RunTrace& trace, std::size_t window, double tolerance_db) {
    const auto& e = trace.excess_errors;
    if (window == 0 || e.size() < 4 * window) {
        throw std::invalid_argument("convergence_time needs at least four windows of data");
    }
    const double final_db = theory::to_db(filter::tail_power(e, 0.75));
    const std::size_t blocks = e.size() / window;
    std::size_t settled = 0;
    for (std::size_t b = 0; b < blocks; ++b) {
        const double p = filter::tail_power(std::span(e).subspan(b * window, window), 0.0);
        if (std::abs(theory::to_db(p) - final_db) > tolerance_db) {
            settled = (b + 1) * window;
        }
    }
    return settled;
}

} // namespace folms::harness
