#include "doctest.h"

#include "esopt/barriers.hpp"
#include "esopt/hjb.hpp"
#include "esopt/parallel.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <cmath>

using namespace esopt;
using esopt::testing::small_grid;
using esopt::testing::small_pipeline;

namespace {

/// q (cS m - d_minus) e^{-rho tau} with m the OU mean of S_T in a frozen regime.
double no_control_value(double s, double q, double mu, double tau, const ModelParams& p) {
    const double m = mu + (s - mu) * std::exp(-p.kappa * tau);
    return q * (p.cS * m - p.d_minus) * std::exp(-p.rho * tau);
}

double no_control_sup_error(int n_t) {
    ModelParams p = paper2016_preset();
    p.M_u = 0.0;
    p.Lambda.setZero();
    Grid4D g = default_grid(p);
    g.q.n = 3;
    g.nu.n = 3;
    g.t.n = n_t;
    const SolveResult r = backward_solve(p, g);
    double err = 0.0, scale = 0.0;
    for (int it = 0; it < g.t.n; ++it)
        for (int iv : {0, g.nu.n - 1})
            for (int iq = 0; iq < g.q.n; ++iq)
                for (int is = 1; is < g.s.n - 1; ++is) {
                    const double mu = iv == 0 ? p.mu[1] : p.mu[0];
                    const double ex = no_control_value(g.s.node(is), g.q.node(iq), mu, p.T - g.t.node(it), p);
                    err = std::max(err, std::abs(r.value(is, iq, iv, it) - ex));
                    scale = std::max(scale, std::abs(ex));
                }
    return err / scale;
}

}  // namespace

TEST_CASE("threshold rule") {
    const ModelParams p = paper2016_preset();
    CHECK(pointwise_control(20.0, 50.0, 35.0, p).mode == Mode::Buy);
    CHECK(pointwise_control(25.0, 50.0, 35.0, p).mode == Mode::Buy);  // inclusive
    CHECK(pointwise_control(30.0, 50.0, 35.0, p).mode == Mode::Wait);
    CHECK(pointwise_control(45.0, 50.0, 35.0, p).mode == Mode::Sell);  // inclusive
    CHECK(pointwise_control(60.0, 50.0, 35.0, p).rate == -p.M_u);
    CHECK(pointwise_control(20.0, 50.0, 35.0, p).rate == p.M_u);
    CHECK(pointwise_control(20.0, p.q_hi, 35.0, p).rate == 0.0);
}

TEST_CASE("terminal slice equals the liquidation value exactly") {
    const auto& sp = small_pipeline();
    const auto& V = sp.solution.value;
    const auto& g = V.grid;
    const int it = g.t.n - 1;
    std::size_t mismatches = 0;
    for (int iq = 0; iq < g.q.n; ++iq)
        for (int iv = 0; iv < g.nu.n; ++iv)
            for (int is = 0; is < g.s.n; ++is)
                mismatches += V(is, iq, iv, it) != terminal_reward(g.s.node(is), g.q.node(iq), sp.params);
    CHECK(mismatches == 0);
}

TEST_CASE("no-control oracle and first-order convergence in time") {
    const double coarse = no_control_sup_error(100);
    const double fine = no_control_sup_error(400);
    CHECK(fine < coarse);
    CHECK(coarse / fine == doctest::Approx(4.0).epsilon(0.35));  // implicit Euler: error ~ dt
    CHECK(fine < 0.01);
}

TEST_CASE("value grows in storage level at t = 0 for nonnegative prices") {
    // At strongly negative prices spare capacity is worth more than stored units
    // (buying is paid), so V falls in q there; see the acceptance notes.
    const auto& V = small_pipeline().solution.value;
    const auto& g = V.grid;
    double vmax = 0.0;
    for (double v : V.data) vmax = std::max(vmax, std::abs(v));
    for (int iv = 0; iv < g.nu.n; ++iv)
        for (int is = 0; is < g.s.n; ++is) {
            if (g.s.node(is) < 0.0) continue;
            for (int iq = 1; iq < g.q.n; ++iq) REQUIRE(V(is, iq, iv, 0) >= V(is, iq - 1, iv, 0) - 1e-6 * vmax);
        }
    // s = -100 with headroom: being paid to fill beats holding.
    CHECK(V(0, g.q.n - 2, g.nu.n / 2, 0) > V(0, g.q.n - 1, g.nu.n / 2, 0));
}

TEST_CASE("mixed derivative margins") {
    const auto& V = small_pipeline().solution.value;
    const MixedDerivativeReport rep = check_mixed_derivative(V);
    CHECK(rep.terminal_min_margin == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(rep.min_margin > 0.0);

    // A field that does not depend on q has V_sq = 0 everywhere.
    Field4D flat(V.grid);
    for (int it = 0; it < V.grid.t.n; ++it)
        for (int iq = 0; iq < V.grid.q.n; ++iq)
            for (int iv = 0; iv < V.grid.nu.n; ++iv)
                for (int is = 0; is < V.grid.s.n; ++is) flat(is, iq, iv, it) = V.grid.s.node(is) * V.grid.s.node(is);
    CHECK(check_mixed_derivative(flat).min_margin == doctest::Approx(1.0));
}

TEST_CASE("V_q of a linear field") {
    const Grid4D g = small_grid(paper2016_preset());
    Field4D f(g);
    for (int iq = 0; iq < g.q.n; ++iq) f(5, iq, 2, 3) = 3.0 * g.q.node(iq) + 1.0;
    CHECK(value_dq(f, 5, 0, 2, 3) == doctest::Approx(3.0));
    CHECK(value_dq(f, 5, 4, 2, 3) == doctest::Approx(3.0));
    CHECK(value_dq(f, 5, g.q.n - 1, 2, 3) == doctest::Approx(3.0));
}

TEST_CASE("solve does not depend on the thread count") {
    const ModelParams p = paper2016_preset();
    Grid4D g = small_grid(p);
    g.t.n = 10;
    thread_cap() = 1;
    const SolveResult a = backward_solve(p, g);
    thread_cap() = 3;
    const SolveResult b = backward_solve(p, g);
    thread_cap() = 0;
    CHECK(a.value.data == b.value.data);
    CHECK(a.policy.modes == b.policy.modes);
}

TEST_CASE("threshold-rule sweeps report non-convergence with diagnostics") {
    const ModelParams p = paper2016_preset();
    Grid4D g = small_grid(p);
    g.t.n = 10;
    SolverOptions opts;
    opts.policy_iterations = 3;
    try {
        backward_solve(p, g, opts);
        FAIL("expected SolverError");
    } catch (const SolverError& e) {
        CHECK(std::string(e.diagnostics()).find("time index") != std::string::npos);
    }
    opts.policy_iterations = 0;
    CHECK_THROWS_AS(backward_solve(p, g, opts), ConfigError);
    CHECK(backward_solve(p, g).diagnostics.max_policy_iterations_used == 1);
}

TEST_CASE("three-region structure on the small grid") {
    const auto& sol = small_pipeline().solution;
    const auto& g = sol.policy.grid;
    // At mid-capacity and t = 0 the modes read Buy* Wait* Sell* along s with all three present.
    const int iq = g.q.n / 2, iv = g.nu.n / 2;
    int changes = 0;
    for (int is = 1; is < g.s.n; ++is) {
        const auto a = static_cast<int>(sol.policy(is - 1, iq, iv, 0)), b = static_cast<int>(sol.policy(is, iq, iv, 0));
        CHECK(b >= a);
        changes += b != a;
    }
    CHECK(changes == 2);
    CHECK(sol.policy(0, iq, iv, 0) == Mode::Buy);
    CHECK(sol.policy(g.s.n - 1, iq, iv, 0) == Mode::Sell);
}
