#include "doctest.h"

#include "esopt/grid.hpp"
#include "esopt/model.hpp"

#include <cmath>
#include <numbers>

using namespace esopt;

TEST_CASE("preset carries the study's parameter set") {
    const ModelParams p = paper2016_preset();
    CHECK(p.mu[0] == 50.0);
    CHECK(p.mu[1] == 30.0);
    CHECK(p.kappa == 15.0);
    CHECK(p.sigma == 50.0);
    CHECK(p.Lambda(0, 0) == -0.5);
    CHECK(p.Lambda(1, 1) == -0.5);
    CHECK(p.Lambda(0, 1) == 0.5);
    CHECK(p.rho == 0.05);
    CHECK(p.T == 1.0);
    CHECK(p.c0 == 0.0);
    CHECK(p.d_plus == 10.0);
    CHECK(p.d_minus == 10.0);
    CHECK(p.cS == 0.95);
    CHECK(p.q_lo == 0.0);
    CHECK(p.q_hi == 100.0);
    CHECK(p.M_u == 730.0);
    CHECK_FALSE(p.seasonality.has_value());
    CHECK_NOTHROW(p.validate());
    CHECK_THROWS_AS(preset("nope"), ConfigError);
}

TEST_CASE("validation names the offending field") {
    const auto field_of = [](ModelParams p) {
        try {
            p.validate();
        } catch (const ConfigError& e) {
            return e.field();
        }
        return std::string();
    };
    ModelParams p = paper2016_preset();
    p.mu = Eigen::Vector2d(30.0, 50.0);
    CHECK(field_of(p) == "mu");
    p = paper2016_preset();
    p.sigma = 0.0;
    CHECK(field_of(p) == "sigma");
    p = paper2016_preset();
    p.Lambda(0, 1) = 0.7;
    CHECK(field_of(p) == "Lambda");
    p = paper2016_preset();
    p.Lambda(0, 0) = 0.5;
    p.Lambda(0, 1) = -0.5;
    CHECK(field_of(p) == "Lambda");
    p = paper2016_preset();
    p.M_u = 0.0;  // admitted: the no-control oracles need it
    CHECK(field_of(p).empty());
}

TEST_CASE("reward rates") {
    const ModelParams p = paper2016_preset();
    CHECK(running_reward(40.0, 50.0, 2.0, p) == doctest::Approx(-2.0 * 50.0));
    CHECK(running_reward(40.0, 50.0, -2.0, p) == doctest::Approx(2.0 * 30.0));
    CHECK(running_reward(40.0, 50.0, 0.0, p) == 0.0);
    ModelParams c = p;
    c.c0 = 0.1;
    CHECK(running_reward(40.0, 50.0, 0.0, c) == doctest::Approx(-5.0));
    CHECK_THROWS_AS(running_reward(40.0, 101.0, 0.0, p), ContractViolation);
    CHECK_THROWS_AS(running_reward(40.0, 50.0, 731.0, p), ContractViolation);

    CHECK(terminal_reward(40.0, 50.0, p) == doctest::Approx(50.0 * (0.95 * 40.0 - 10.0)));
    CHECK(terminal_reward(40.0, 0.0, p) == 0.0);
}

TEST_CASE("rate bounds vanish at capacity and are C2") {
    const ModelParams p = paper2016_preset();
    const RateBounds lo = rate_bounds(p.q_lo, p), hi = rate_bounds(p.q_hi, p);
    CHECK(lo.u_min == 0.0);
    CHECK(hi.u_max == 0.0);
    CHECK(lo.u_max == p.M_u);
    CHECK(hi.u_min == -p.M_u);
    const RateBounds mid = rate_bounds(50.0, p);
    CHECK(mid.u_min == -p.M_u);
    CHECK(mid.u_max == p.M_u);
    for (double q = 0.0; q <= 100.0; q += 0.25) {
        const RateBounds b = rate_bounds(q, p);
        CHECK(b.u_min <= 0.0);
        CHECK(b.u_min >= -p.M_u);
        CHECK(b.u_max >= 0.0);
        CHECK(b.u_max <= p.M_u);
    }
    // First and second derivatives of the ramp vanish at both ends.
    const double h = 1e-4;
    for (double x : {0.0, 1.0}) {
        const double d1 = (smoothstep5(x + h) - smoothstep5(x - h)) / (2 * h);
        const double d2 = (smoothstep5(x + h) - 2 * smoothstep5(x) + smoothstep5(x - h)) / (h * h);
        CHECK(std::abs(d1) < 1e-6);
        CHECK(std::abs(d2) < 1e-2);
    }
    CHECK(smoothstep5(0.5) == doctest::Approx(0.5));
    CHECK_THROWS_AS(rate_bounds(-1.0, p), ContractViolation);
}

TEST_CASE("seasonality") {
    ModelParams p = paper2016_preset();
    CHECK(seasonality(0.3, p) == 0.0);
    p.seasonality = Seasonality{5.0, 0.25, 1.0};
    CHECK(seasonality(0.25, p) == doctest::Approx(5.0));
    CHECK(seasonality(0.75, p) == doctest::Approx(-5.0));
    CHECK(seasonality(0.5, p) == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
}

TEST_CASE("grid axis and layout") {
    const ModelParams p = paper2016_preset();
    const Grid4D g = default_grid(p);
    CHECK(g.s.n == 151);
    CHECK(g.q.n == 41);
    CHECK(g.nu.n == 21);
    CHECK(g.t.n == 200);
    CHECK(g.s.step() == doctest::Approx(2.0));
    CHECK(g.t.node(g.t.n - 1) == p.T);
    CHECK_NOTHROW(g.validate(p));

    const auto [i, w] = g.s.locate(41.0);
    CHECK(g.s.node(i) == doctest::Approx(40.0));
    CHECK(w == doctest::Approx(0.5));
    const auto [j, v] = g.s.locate(1e9);
    CHECK(j == g.s.n - 2);
    CHECK(v == doctest::Approx(1.0));

    CHECK(g.index(1, 0, 0, 0) == 1);
    CHECK(g.index(0, 0, 1, 0) == static_cast<std::size_t>(g.s.n));
    CHECK(g.index(0, 1, 0, 0) == static_cast<std::size_t>(g.s.n * g.nu.n));

    Grid4D narrow = g;
    narrow.s.lo = 0.0;
    CHECK_THROWS_AS(narrow.validate(p), ConfigError);

    Field4D f(g);
    for (int is = 0; is < g.s.n; ++is) f(is, 3, 4, 5) = 2.0 * g.s.node(is);
    CHECK(f.interpolate(41.0, g.q.node(3), g.nu.node(4), 5) == doctest::Approx(82.0));

    CHECK(mode_rate(Mode::Buy, 50.0, p) == p.M_u);
    CHECK(mode_rate(Mode::Sell, 50.0, p) == -p.M_u);
    CHECK(mode_rate(Mode::Wait, 50.0, p) == 0.0);
    CHECK(std::string(to_string(Mode::Sell)) == "sell");
}
