// Command-line front end: predict, optimize, simulate and sweep.

#include "folms/harness.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

namespace {

using namespace folms;

enum Exit { ok = 0, config_error = 2, all_diverged = 3, infeasible = 4 };

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string output;
    std::optional<unsigned> threads;
    bool full_scale{false};
};

harness::ExperimentConfig load(const Options& o) {
    auto c = harness::load_config(o.config);
    // precedence: --seed, then FOLMS_SEED, then the file
    if (const char* env = std::getenv("FOLMS_SEED")) {
        try {
            std::size_t used = 0;
            c.seed = std::stoull(env, &used);
            if (env[used] != '\0') {
                throw std::invalid_argument(env);
            }
        } catch (const std::exception&) {
            throw harness::ConfigError(fmt::format("FOLMS_SEED must be an unsigned integer, got '{}'", env));
        }
    }
    if (o.seed) {
        c.seed = *o.seed;
    }
    if (!o.output.empty()) {
        c.output = o.output;
    }
    if (o.threads) {
        c.threads = *o.threads;
    }
    if (o.full_scale) {
        c.iterations = 1000000;
    }
    return c;
}

// Writes to a sibling temporary and renames, so a failed run leaves no file.
void emit(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    const std::filesystem::path target(path);
    auto tmp = target;
    tmp += ".partial";
    {
        std::ofstream out(tmp);
        if (!out || !(out << text) || !out.flush()) {
            std::filesystem::remove(tmp);
            throw std::runtime_error(fmt::format("cannot write '{}'", path));
        }
    }
    std::filesystem::rename(tmp, target);
}

void report(const char* label, const theory::EmsePrediction& p) {
    fmt::print("{}.zeta_w = {:.6e} W ({:.2f} dB)\n", label, p.zeta_w, theory::to_db(p.zeta_w));
    fmt::print("{}.zeta_eps = {:.6e} W ({:.2f} dB)\n", label, p.zeta_eps, theory::to_db(p.zeta_eps));
    fmt::print("{}.zeta_eta = {:.6e} W ({:.2f} dB)\n", label, p.zeta_eta, theory::to_db(p.zeta_eta));
    fmt::print("{}.zeta_total = {:.6e} W ({:.2f} dB)\n", label, p.zeta_total, theory::to_db(p.zeta_total));
    fmt::print("{}.gamma = {:.6f}\n", label, p.gamma);
    fmt::print("{}.valid = {}\n", label, p.valid);
}

void print_steps(const filter::StepSizes& s) {
    fmt::print("mu_w = {:.6e}\nmu_eps = {:.6e}\nmu_eta = {:.6e}\n", s.mu_w, s.mu_eps, s.mu_eta);
}

harness::SweepRow theory_row(const filter::StepSizes& steps, const theory::EmsePrediction& p) {
    harness::SweepRow row;
    row.steps = steps;
    row.prediction = p;
    row.simulation.mean = std::numeric_limits<double>::quiet_NaN();
    row.simulation.standard_error = std::numeric_limits<double>::quiet_NaN();
    return row;
}

int predict(const Options& o) {
    const auto c = load(o);
    const auto steps = harness::resolve_steps(c, c.system);
    print_steps(steps);
    const auto complete = theory::predict_emse_complete(c.system, steps);
    report("complete", complete);
    report("simple", theory::predict_emse_simple(c.system, steps));
    if (!c.output.empty()) {
        emit(c.output, harness::csv_header(0) + "\n" + harness::csv_row(theory_row(steps, complete)) + "\n");
    }
    return ok;
}

int optimize(const Options& o) {
    const auto c = load(o);
    auto options = c.solver;
    options.fixed_mu_w = c.steps.mu_w;
    options.fixed_mu_eps = c.steps.mu_eps;
    options.fixed_mu_eta = c.steps.mu_eta;
    const auto r = theory::solve_optimal_step_sizes(c.system, options);
    print_steps(r.steps);
    fmt::print("converged = {}\ncycles = {}\n", r.converged, r.cycles);
    fmt::print("bound_active = {} {} {}\n", r.bound_active[0], r.bound_active[1], r.bound_active[2]);
    if (!r.converged) {
        fmt::print(stderr, "warning: solver stopped at the cycle cap; reporting the best point found\n");
    }
    report("complete", r.prediction);
    if (!c.output.empty()) {
        emit(c.output, harness::csv_header(0) + "\n" + harness::csv_row(theory_row(r.steps, r.prediction)) + "\n");
    }
    return ok;
}

int simulate(const Options& o) {
    const auto c = load(o);
    const auto mc = harness::run_monte_carlo(c);
    harness::SweepRow row;
    row.simulation = mc;
    const auto optimal = c.estimator == harness::EstimatorKind::fixed ? mc.steps : harness::resolve_steps(c, c.system);
    row.prediction = theory::predict_emse_complete(c.system, optimal);
    row.steps = mc.steps;
    fmt::print(stderr, "zeta_sim = {:.2f} dB (stderr {:.2f} dB, {} of {} replicas diverged)\n",
               theory::to_db(mc.mean), harness::stderr_db(mc.mean, mc.standard_error), mc.diverged, c.replicas);
    if (c.estimator == harness::EstimatorKind::vss) {
        fmt::print(stderr, "noise estimate = {:.2f} dB (true {:.2f} dB)\n", theory::to_db(mc.mean_noise_estimate),
                   theory::to_db(c.system.noise_variance()));
    }
    emit(c.output, harness::csv_header(0) + "\n" + harness::csv_row(row) + "\n");
    return ok;
}

int sweep(const Options& o) {
    const auto c = load(o);
    if (c.axes.empty()) {
        throw harness::ConfigError("sweep needs at least [sweep] axis1 and grid1");
    }
    const auto result = harness::is_step_axis(c.axes.front().name) ? harness::sweep_step_sizes(c)
                                                                     : harness::sweep_system_params(c);
    if (result.optimum) {
        const auto& s = result.optimum->steps;
        fmt::print(stderr, "optimum: mu_w = {:.4e}, mu_eps = {:.4e}, mu_eta = {:.4e}, zeta = {:.2f} dB\n", s.mu_w,
                   s.mu_eps, s.mu_eta, theory::to_db(result.optimum->prediction.zeta_total));
    }
    std::ostringstream csv;
    harness::write_csv(csv, result);
    emit(c.output, csv.str());
    return ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Frequency-offset compensated LMS: theory, solver and Monte Carlo harness"};
    app.require_subcommand(1);
    Options opts;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("config", opts.config, "Configuration file")->required();
        sub->add_option("--seed", opts.seed, "Master seed (overrides FOLMS_SEED and the file)");
        sub->add_option("-o,--output", opts.output, "CSV output path (overrides [output] path)");
    };
    auto add_sim = [&](CLI::App* sub) {
        sub->add_option("-j,--threads", opts.threads, "Worker threads (0 = all cores)");
        sub->add_flag("--full-scale", opts.full_scale, "Measure 1e6 iterations per replica");
    };

    auto* p = app.add_subcommand("predict", "Evaluate the closed-form EMSE for the configured step sizes");
    auto* z = app.add_subcommand("optimize", "Solve for the step sizes minimizing the predicted EMSE");
    auto* s = app.add_subcommand("simulate", "Monte Carlo run of a single configuration");
    auto* w = app.add_subcommand("sweep", "Monte Carlo sweep over the configured grid");
    for (auto* sub : {p, z, s, w}) {
        add_common(sub);
    }
    add_sim(s);
    add_sim(w);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? ok : config_error;
    }

    try {
        if (p->parsed()) {
            return predict(opts);
        }
        if (z->parsed()) {
            return optimize(opts);
        }
        if (s->parsed()) {
            return simulate(opts);
        }
        return sweep(opts);
    } catch (const harness::ConfigError& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return config_error;
    } catch (const harness::ExperimentFailed& e) {
        fmt::print(stderr, "experiment failed: {}\n", e.what());
        return all_diverged;
    } catch (const theory::SolverInfeasible& e) {
        fmt::print(stderr, "solver infeasible: {}\n", e.what());
        return infeasible;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
}
