#include "doctest.h"

#include "esopt/filter.hpp"
#include "esopt/random.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace esopt;

TEST_CASE("drift and diffusion of the filter") {
    const ModelParams p = paper2016_preset();
    const FilterState pi{Eigen::Vector2d(0.25, 0.75)};
    CHECK(pi.valid());
    CHECK(conditional_drift(40.0, pi, 0.0, p) == doctest::Approx(15.0 * (35.0 - 40.0)));
    const Eigen::VectorXd d = filter_diffusion(pi, p);
    CHECK(d.sum() == doctest::Approx(0.0).scale(1.0));
    // pi1 (1 - pi1) kappa (mu1 - mu2) / sigma
    CHECK(d[0] == doctest::Approx(0.25 * 0.75 * 15.0 * 20.0 / 50.0));

    // The vertices of the simplex are fixed points of the noise.
    const FilterState e1{Eigen::Vector2d(1.0, 0.0)};
    CHECK(filter_diffusion(e1, p).norm() == 0.0);
}

TEST_CASE("filter step keeps the simplex under violent noise") {
    ModelParams p = paper2016_preset();
    p.mu = Eigen::Vector2d(500.0, -500.0);  // very large loadings
    FilterState pi{Eigen::Vector2d(0.5, 0.5)};
    NormalStream rng(3);
    for (int n = 0; n < 100000; ++n) {
        pi = filter_step(pi, 0.0, 0.0, 0.05 * rng(), 1e-3, p);
        REQUIRE(pi.valid(1e-12));
        REQUIRE(pi.pi.minCoeff() >= kFilterFloor * 0.5);
    }
    CHECK_THROWS_AS(filter_step(pi, 0.0, 0.0, 0.0, 0.0, p), ContractViolation);
}

TEST_CASE("regime path bookkeeping") {
    const ModelParams p = paper2016_preset();
    const RegimePath path = simulate_regime(p, 20.0, 11, 0);
    CHECK(path.initial == 0);
    for (std::size_t k = 1; k < path.jump_times.size(); ++k) CHECK(path.jump_times[k] > path.jump_times[k - 1]);
    CHECK(path.occupation(0, 20.0) + path.occupation(1, 20.0) == doctest::Approx(20.0));
    if (!path.jump_times.empty()) {
        CHECK(path.state_at(0.5 * path.jump_times[0]) == 0);
        CHECK(path.state_at(path.jump_times[0]) == path.states[0]);
    }
    // Absorbing chain never jumps.
    ModelParams frozen = p;
    frozen.Lambda.setZero();
    CHECK(simulate_regime(frozen, 5.0, 1, 1).jump_times.empty());
}

TEST_CASE("time in regime 1 matches the stationary law") {
    const ModelParams p = paper2016_preset();
    double total = 0.0;
    const int n = 400;
    for (int i = 0; i < n; ++i) total += simulate_regime(p, 10.0, stream_seed(5, i)).occupation(0, 10.0);
    CHECK(total / (10.0 * n) == doctest::Approx(0.5).epsilon(0.03));
}

TEST_CASE("mean filter follows the forward equation") {
    ModelParams p = paper2016_preset();
    p.nu0 = Eigen::Vector2d(0.9, 0.1);
    const double horizon = 0.5, dt = 1e-3;
    const int n = 2000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const FilterPath path = simulate_truth_and_filter(p, horizon, dt, stream_seed(17, i));
        const double x = path.pi(0, path.pi.cols() - 1);
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n, se = std::sqrt((sq / n - mean * mean) / n);
    const Eigen::MatrixXd L = p.Lambda.transpose() * horizon;
    const Eigen::VectorXd expected = L.exp() * p.nu0;
    CHECK(std::abs(mean - expected[0]) <= 3.0 * se + 1e-3);
}

TEST_CASE("pinned regime drives the filter towards it") {
    ModelParams p = paper2016_preset();
    p.Lambda.setZero();
    TruthOptions opts;
    opts.pinned_regime = 0;
    const FilterPath path = simulate_truth_and_filter(p, 5.0, 1e-3, 9, opts);
    CHECK(path.pi(0, path.pi.cols() - 1) > 0.99);
    for (int y : path.Y) CHECK(y == 0);
}

TEST_CASE("design path records on its stride") {
    const FilterPath path = simulate_design(paper2016_preset(), 40.0, FilterState{Eigen::Vector2d(0.5, 0.5)}, 0.1,
                                            1e-3, 4, 10);
    CHECK(path.Y.empty());
    CHECK(path.t.size() == 11);
    CHECK(path.t.back() == doctest::Approx(0.1));
    for (Eigen::Index k = 0; k < path.pi.cols(); ++k) CHECK(path.pi.col(k).sum() == doctest::Approx(1.0));
}

TEST_CASE("filter csv layout") {
    const ModelParams p = paper2016_preset();
    TruthOptions opts;
    opts.record_stride = 50;
    const FilterPath path = simulate_truth_and_filter(p, 0.1, 1e-3, 2, opts);
    std::ostringstream os;
    write_filter_csv(os, path);
    const std::string csv = os.str();
    CHECK(csv.rfind("t,S,Y,pi_1,pi_2\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

    // Same seed, same path.
    const FilterPath again = simulate_truth_and_filter(p, 0.1, 1e-3, 2, opts);
    CHECK(again.S == path.S);
}
