#include "folms/harness.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>

using namespace folms;
using namespace folms::harness;

namespace {

ExperimentConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in, "test.ini");
}

std::string error_of(const std::string& text) {
    try {
        parse(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

// Small fixed-step experiment on a drift-free world.
ExperimentConfig small(std::size_t replicas = 2, std::size_t iterations = 2000) {
    ExperimentConfig c;
    c.steps.mu_w = 1e-3;
    c.steps.mu_eps = 1e-6;
    c.steps.mu_eta = 1e-6;
    c.replicas = replicas;
    c.iterations = iterations;
    c.preroll = 1000;
    c.threads = 2;
    return c;
}

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string f; std::getline(in, f, ',');) {
        out.push_back(f);
    }
    return out;
}

} // namespace

TEST_SUITE("harness") {

TEST_CASE("a complete configuration parses") {
    const auto c = parse(R"(
; comment
[system]
sigma_q2 = 1e-12
kappa = 1e-5
filter_taps = 7
[estimator]
kind = vss
derivative = backward
warm_start = offsets
[steps]
mu_w = 2e-3
mu_eps = opt
[vss]
noise = estimated
lambda_e = 0.999
[experiment]
replicas = 4
iterations = 2e4
preroll = 5000
seed = 7
[sweep]
axis1 = sigma_s2
grid1 = log:1e-6:1e-4:3
[output]
path = out.csv
)");
    CHECK(c.system.sigma_q2 == 1e-12);
    CHECK(c.system.kappa == 1e-5);
    CHECK(c.system.filter_taps == 7);
    CHECK(c.estimator == EstimatorKind::vss);
    CHECK(c.scheme == sigproc::DerivativeScheme::backward);
    CHECK(c.warm_start == filter::WarmStart::offsets);
    CHECK(c.steps.mu_w == 2e-3);
    CHECK_FALSE(c.steps.mu_eps.has_value());
    CHECK_FALSE(c.steps.mu_eta.has_value());
    CHECK(c.noise == NoiseKnowledge::estimated);
    CHECK(c.vss.lambda_e == 0.999);
    CHECK(c.replicas == 4);
    CHECK(c.iterations == 20000);
    CHECK(c.preroll_iterations() == 5000);
    CHECK(c.seed == 7);
    REQUIRE(c.axes.size() == 1);
    CHECK(c.axes[0].name == "sigma_s2");
    CHECK(c.axes[0].values.size() == 3);
    CHECK(c.output == "out.csv");
}

TEST_CASE("defaults") {
    const auto c = parse("");
    CHECK(c.warm_start == filter::WarmStart::full);
    CHECK(c.estimator == EstimatorKind::fixed);
    CHECK(c.seed == default_seed);
    CHECK(c.preroll_iterations() == 50000);
    ExperimentConfig v;
    v.estimator = EstimatorKind::vss;
    CHECK(v.preroll_iterations() == 300000);
}

TEST_CASE("configuration errors carry their location") {
    const auto unknown = error_of("[system]\nsigma_q2 = 1e-12\nsigma_qq = 3\n");
    CHECK(unknown.find("test.ini:3") != std::string::npos);
    CHECK(unknown.find("sigma_qq") != std::string::npos);

    const auto bad = error_of("[experiment]\n\nreplicas = lots\n");
    CHECK(bad.find("test.ini:3") != std::string::npos);
    CHECK(bad.find("replicas") != std::string::npos);

    const auto outside = error_of("replicas = 3\n[experiment]\n");
    CHECK(outside.find("test.ini:1") != std::string::npos);
    CHECK(outside.find("outside") != std::string::npos);

    CHECK(error_of("[nonsense]\nx = 1\n").find("nonsense") != std::string::npos);
    CHECK(error_of("[sweep]\naxis1 = mu_w\ngrid1 = 1e-3, 1e-4\n").find("increasing") != std::string::npos);
    CHECK(error_of("[sweep]\naxis1 = mu_w\ngrid1 = 1e-3\naxis2 = rho\ngrid2 = 1e-6\n").find("mix") !=
          std::string::npos);
    CHECK(error_of("[sweep]\naxis1 = wombat\ngrid1 = 1\n").find("wombat") != std::string::npos);
    CHECK(error_of("[experiment]\niterations = 10\n").find("iterations") != std::string::npos);
    CHECK_FALSE(error_of("[estimator]\nkind = magic\n").empty());
    CHECK_THROWS_AS(load_config("/nonexistent/config.ini"), ConfigError);
}

TEST_CASE("grid specifications") {
    const auto g = parse_grid("log:1e-4:1e-2:5");
    REQUIRE(g.size() == 5);
    CHECK(g.front() == 1e-4);
    CHECK(g.back() == 1e-2);
    CHECK(g[2] == doctest::Approx(1e-3).epsilon(1e-12));
    CHECK(g[1] / g[0] == doctest::Approx(g[4] / g[3]).epsilon(1e-12));

    const auto l = parse_grid("lin:0:1:5");
    CHECK(l == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
    CHECK(parse_grid(" 1, 2.5 ,4 ") == std::vector<double>{1.0, 2.5, 4.0});
    CHECK(log_grid(3e-7, 3e-3, 9).back() == 3e-3);
    CHECK(log_grid(2.0, 5.0, 1) == std::vector<double>{2.0});
    CHECK_THROWS(parse_grid("log:1:2"));
    CHECK_THROWS(parse_grid("log:0:1:3"));
}

TEST_CASE("noiseless static world with a perfect start has no excess error") {
    auto c = small();
    c.system.sigma_g2 = 0.0;
    const auto r = run_monte_carlo(c);
    CHECK(r.diverged == 0);
    CHECK(r.mean < 1e-12);
}

TEST_CASE("Monte Carlo determinism, seed isolation and thread invariance") {
    auto c = small(3);
    c.system.sigma_q2 = 1e-12;
    const auto a = run_monte_carlo(c);
    const auto b = run_monte_carlo(c);
    CHECK(a.replicas == b.replicas);

    auto two = c;
    two.replicas = 2;
    const auto p = run_monte_carlo(two);
    CHECK(p.replicas[0] == a.replicas[0]);
    CHECK(p.replicas[1] == a.replicas[1]);

    auto serial = c;
    serial.threads = 1;
    CHECK(run_monte_carlo(serial).replicas == a.replicas);

    auto other = c;
    other.seed = c.seed + 1;
    CHECK(run_monte_carlo(other).replicas[0] != a.replicas[0]);
    CHECK(a.standard_error > 0.0);
    CHECK(a.steps.mu_w == 1e-3);
}

TEST_CASE("all replicas diverging is an error") {
    auto c = small();
    c.steps.mu_w = 0.5;
    CHECK_THROWS_AS(run_monte_carlo(c), ExperimentFailed);
}

TEST_CASE("unstable sweep points are flagged and the sweep completes") {
    auto c = small();
    c.axes = {SweepAxis{"mu_w", {1e-3, 0.5}}};
    const auto r = sweep_step_sizes(c);
    REQUIRE(r.rows.size() == 2);
    CHECK(r.rows[0].prediction.valid);
    CHECK(r.rows[0].simulation.diverged == 0);
    CHECK_FALSE(r.rows[1].prediction.valid);
    CHECK(r.rows[1].prediction.gamma <= 0.0);
    CHECK(r.rows[1].simulation.diverged == 2);
    CHECK(std::isnan(r.rows[1].simulation.mean));
    const auto fields = split(csv_row(r.rows[1]));
    CHECK(fields[4] == "nan");
}

TEST_CASE("channel step sweep has its minimum near the optimum") {
    auto c = small(4, 20000);
    c.preroll = 10000;
    c.threads = 0;
    c.system.sigma_q2 = 1e-12;
    c.steps = {};
    c.axes = {SweepAxis{"mu_w", log_grid(1e-4, 1e-2, 5)}};
    const auto r = sweep_step_sizes(c);
    REQUIRE(r.optimum.has_value());
    std::size_t best = 0;
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        if (r.rows[i].simulation.mean < r.rows[best].simulation.mean) {
            best = i;
        }
    }
    CHECK(best >= 1);
    CHECK(best <= 3);
    CHECK(r.rows.front().simulation.mean > r.rows[2].simulation.mean);
    CHECK(r.rows.back().simulation.mean > r.rows[2].simulation.mean);
}

TEST_CASE("system sweep tracks growing channel variation") {
    auto c = small(2, 10000);
    c.steps = {};
    c.system.sigma_q2 = 1e-12;
    c.axes = {SweepAxis{"sigma_q2", {1e-14, 1e-12, 1e-10}}};
    const auto r = sweep_system_params(c);
    REQUIRE(r.rows.size() == 3);
    for (std::size_t i = 1; i < 3; ++i) {
        CHECK(r.rows[i].prediction.zeta_total > r.rows[i - 1].prediction.zeta_total);
        CHECK(r.rows[i].simulation.mean > r.rows[i - 1].simulation.mean);
        CHECK(r.rows[i].steps.mu_w > r.rows[i - 1].steps.mu_w);
    }
}

TEST_CASE("CSV schema") {
    CHECK(csv_header(0) == "mu_w,mu_eps,mu_eta,zeta_pred_dB,zeta_sim_dB,stderr_dB,diverged,gamma,runtime_s");
    CHECK(csv_header(1).rfind("swept_param_1,mu_w,", 0) == 0);
    CHECK(csv_header(2).rfind("swept_param_1,swept_param_2,mu_w,", 0) == 0);

    auto c = small();
    c.system.sigma_q2 = 1e-12;
    c.axes = {SweepAxis{"mu_eps", {1e-7, 1e-5}}};
    const auto r = sweep_step_sizes(c);
    std::ostringstream out;
    write_csv(out, r);
    std::istringstream lines(out.str());
    std::string line;
    std::getline(lines, line);
    CHECK(line == csv_header(1));
    for (const auto& row : r.rows) {
        REQUIRE(std::getline(lines, line));
        const auto f = split(line);
        REQUIRE(f.size() == 10);
        CHECK(std::stod(f[0]) == doctest::Approx(row.swept[0]).epsilon(1e-6));
        CHECK(std::stod(f[2]) == doctest::Approx(row.swept[0]).epsilon(1e-6));
        const double pred = theory::to_db(theory::predict_emse_complete(c.system, row.steps).zeta_total);
        CHECK(std::stod(f[4]) == doctest::Approx(pred).epsilon(1e-6));
        CHECK(std::stod(f[5]) == doctest::Approx(theory::to_db(row.simulation.mean)).epsilon(1e-6));
        CHECK(std::stoi(f[7]) == 0);
    }
}

TEST_CASE("standard error in dB") {
    CHECK(stderr_db(1.0, 0.01) == doctest::Approx(10.0 / std::log(10.0) * 0.01));
    CHECK(std::isnan(stderr_db(0.0, 0.1)));
}

TEST_CASE("convergence time of a synthetic trace") {
    filter::RunTrace t;
    for (int i = 0; i < 4000; ++i) {
        t.excess_errors.push_back(i < 1000 ? cplx{1.0, 0.0} : cplx{1e-3, 0.0});
    }
    CHECK(convergence_time(t, 100, 1.0) == 1000);
    CHECK_THROWS(convergence_time(t, 2000, 1.0));
}

TEST_CASE("parallel_for visits every index and rethrows") {
    std::vector<int> hit(50, 0);
    parallel_for(hit.size(), 4, [&](std::size_t i) { hit[i] += 1; });
    CHECK(std::all_of(hit.begin(), hit.end(), [](int h) { return h == 1; }));
    CHECK_THROWS_AS(parallel_for(10, 3,
                                 [](std::size_t i) {
                                     if (i == 7) {
                                         throw std::runtime_error("boom");
                                     }
                                 }),
                    std::runtime_error);
}

}
