#include "doctest.h"

#include "esopt/barriers.hpp"
#include "test_support.hpp"

#include <cmath>
#include <random>

using namespace esopt;
using esopt::testing::small_grid;
using esopt::testing::small_pipeline;

namespace {

BarrierField synthetic_field(double (*buy)(double, double, double), double (*sell)(double, double, double)) {
    BarrierField b;
    b.q = {0.0, 100.0, 6};
    b.nu = {0.0, 1.0, 6};
    b.t = {0.0, 1.0, 9};
    b.s_spacing = 1.0;
    b.buy_level.resize(b.size());
    b.sell_level.resize(b.size());
    b.buy_status.assign(b.size(), BarrierStatus::Ok);
    b.sell_status.assign(b.size(), BarrierStatus::Ok);
    for (int it = 0; it < b.t.n; ++it)
        for (int iq = 0; iq < b.q.n; ++iq)
            for (int iv = 0; iv < b.nu.n; ++iv) {
                const double q = b.q.node(iq), nu = b.nu.node(iv), t = b.t.node(it);
                b.buy_level[b.index(iq, iv, it)] = buy(q, nu, t);
                b.sell_level[b.index(iq, iv, it)] = sell(q, nu, t);
            }
    return b;
}

double lin_buy(double q, double nu, double t) { return 20.0 + 0.05 * q + 10.0 * nu - 3.0 * t; }
double lin_sell(double q, double nu, double t) { return 45.0 + 0.02 * q + 8.0 * nu + 2.0 * t; }
double quad_buy(double q, double nu, double t) { return 20.0 + 1e-3 * q * q - 4.0 * nu * nu + q * nu * t * 0.01; }

}  // namespace

TEST_CASE("polynomial fits reproduce low-degree data exactly") {
    SmoothingOptions opts;
    opts.degrees = {2, 2, 1};
    opts.log_time = false;
    opts.include_terminal_slice = true;
    BarrierField b = synthetic_field(&quad_buy, &lin_sell);
    smooth_barriers(b, opts);
    CHECK(b.buy_smooth->max_deviation < 1e-9);
    CHECK(b.sell_smooth->max_deviation < 1e-9);
    CHECK(b.buy_smooth->fitted_nodes == b.size());
    CHECK(b.buy_smooth->poly(33.0, 0.3, 0.4) == doctest::Approx(quad_buy(33.0, 0.3, 0.4)));

    // Constant data under the warped basis.
    BarrierField c = synthetic_field(+[](double, double, double) { return 7.0; }, &lin_sell);
    smooth_barriers(c);
    CHECK(c.buy_smooth->max_deviation < 1e-8);
    CHECK(c.buy_smooth->poly(10.0, 0.7, 0.999) == doctest::Approx(7.0));
}

TEST_CASE("jet matches finite differences with and without the time warp") {
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> coef(-1.0, 1.0);
    std::vector<double> c(TensorPolynomial::term_count({3, 3, 4}));
    for (double& x : c) x = coef(gen);
    for (bool warped : {false, true}) {
        const TensorPolynomial p({3, 3, 4}, {0.0, 0.0, 0.0}, {100.0, 1.0, 1.0}, c,
                                 warped ? TimeWarp{true, 1.0, 0.005} : TimeWarp{});
        const std::array<double, 3> x{37.0, 0.41, 0.83};
        const std::array<double, 3> h{1e-3, 1e-5, 1e-6};
        const auto j = p.jet(x[0], x[1], x[2]);
        CHECK(j.value == doctest::Approx(p(x[0], x[1], x[2])));
        for (int a = 0; a < 3; ++a) {
            auto xp = x, xm = x;
            xp[a] += h[a];
            xm[a] -= h[a];
            const auto jp = p.jet(xp[0], xp[1], xp[2]), jm = p.jet(xm[0], xm[1], xm[2]);
            CHECK(j.grad[a] == doctest::Approx((jp.value - jm.value) / (2 * h[a])).epsilon(1e-5));
            for (int b = 0; b < 3; ++b)
                CHECK(j.hess[a][b] ==
                      doctest::Approx((jp.grad[b] - jm.grad[b]) / (2 * h[a])).epsilon(1e-4).scale(1.0));
        }
    }
    CHECK_THROWS_AS(TensorPolynomial({1, 1, 1}, {0, 0, 0}, {1, 1, 1}, std::vector<double>(8), TimeWarp{true, 1.0, 0.0}),
                    ContractViolation);
    CHECK_THROWS_AS(TensorPolynomial({1, 1, 1}, {0, 0, 0}, {1, 1, 1}, std::vector<double>(7)), ContractViolation);
}

TEST_CASE("fit needs enough usable nodes") {
    BarrierField b = synthetic_field(&lin_buy, &lin_sell);
    std::fill(b.buy_status.begin(), b.buy_status.end(), BarrierStatus::BelowRange);
    CHECK_THROWS_AS(smooth_barrier(b, false), ContractViolation);
    CHECK_NOTHROW(smooth_barrier(b, true, SmoothingOptions{{2, 2, 2}, false, false}));
}

TEST_CASE("extraction from a synthetic policy") {
    const ModelParams p = paper2016_preset();
    Grid4D g = small_grid(p);
    g.t.n = 3;
    PolicyField pol(g);
    for (int it = 0; it < g.t.n; ++it)
        for (int iq = 0; iq < g.q.n; ++iq)
            for (int iv = 0; iv < g.nu.n; ++iv)
                for (int is = 0; is < g.s.n; ++is) {
                    const double s = g.s.node(is);
                    Mode m = s <= 20.0 ? Mode::Buy : (s >= 50.0 ? Mode::Sell : Mode::Wait);
                    if (iq == 0) m = s >= 50.0 ? Mode::Sell : Mode::Wait;   // nothing to buy below
                    if (iq == 1) m = Mode::Buy;                             // buy everywhere
                    if (iq == 2 && is == 3) m = Mode::Sell;                 // stray sell
                    if (iq == 3) m = s <= 30.0 ? Mode::Buy : Mode::Sell;   // no waiting region
                    pol(is, iq, iv, it) = m;
                }
    const BarrierField b = extract_barriers(pol);
    CHECK(b.s_spacing == doctest::Approx(g.s.step()));
    const auto at = [&](int iq) { return b.index(iq, 2, 1); };
    CHECK(b.buy_status[at(5)] == BarrierStatus::Ok);
    CHECK(b.buy_level[at(5)] == doctest::Approx(20.0 + 0.5 * g.s.step()));  // s-grid hits 20 and 48
    CHECK(b.sell_level[at(5)] == doctest::Approx(52.0 - 0.5 * g.s.step()));
    CHECK(b.buy_status[at(0)] == BarrierStatus::BelowRange);
    CHECK(b.sell_status[at(0)] == BarrierStatus::Ok);
    CHECK(b.buy_status[at(1)] == BarrierStatus::AboveRange);
    CHECK(b.sell_status[at(1)] == BarrierStatus::AboveRange);
    CHECK(b.buy_status[at(2)] == BarrierStatus::NonMonotone);
    CHECK(b.buy_status[at(3)] == BarrierStatus::Merged);
    CHECK(b.sell_status[at(3)] == BarrierStatus::Merged);
    CHECK(std::string(to_string(BarrierStatus::AboveRange)) == "above_range");
    CHECK(b.flagged() == static_cast<std::size_t>(g.t.n * g.nu.n * 7));
}

TEST_CASE("forbidden slope and the non-parallelity margin") {
    const ModelParams p = paper2016_preset();
    CHECK(forbidden_slope(0.5, p) == doctest::Approx(2500.0 / (15.0 * 20.0 * 0.25)));
    CHECK(forbidden_slope(0.5, p) == doctest::Approx(33.3333333333).epsilon(1e-9));

    // Level linear in nu with slope b: margin sigma - loading nu (1 - nu) b, zero at the forbidden slope.
    static double slope = 0.0;
    slope = forbidden_slope(0.5, p);
    BarrierField b = synthetic_field(+[](double, double nu, double) { return 10.0 + slope * nu; }, &lin_sell);
    NonParallelityReport raw = check_nonparallelity(b, p, 1e-6);
    CHECK_FALSE(raw.used_smooth);
    CHECK(raw.nodes_checked == static_cast<std::size_t>(2 * b.q.n * (b.nu.n - 2) * b.t.n));
    CHECK(raw.min_buy_margin == doctest::Approx(p.sigma * (1.0 - 0.6 * 0.4 / 0.25)));
    SmoothingOptions opts;
    opts.log_time = false;
    opts.degrees = {1, 1, 1};
    smooth_barriers(b, opts);
    const NonParallelityReport smooth = check_nonparallelity(b, p);
    CHECK(smooth.used_smooth);
    CHECK(smooth.min_sell_margin == doctest::Approx(p.sigma - 15.0 / 50.0 * 20.0 * 0.24 * 8.0));
    CHECK_FALSE(smooth.worst.sell_side);
    CHECK(smooth.worst.margin == doctest::Approx(smooth.min_margin));
}

TEST_CASE("smoothed barriers on the solved field") {
    const auto& sp = small_pipeline();
    const BarrierField& b = sp.barriers;
    REQUIRE(b.smoothed());
    // The coarse grid resolves the barriers poorly; fit quality on the default grid is an acceptance item.
    CHECK(b.buy_smooth->max_deviation_early <= b.buy_smooth->max_deviation);
    CHECK(b.sell_smooth->max_deviation_early <= b.sell_smooth->max_deviation);
    CHECK(b.buy_smooth->fitted_nodes > b.buy_smooth->poly.terms());
    CHECK(region_consistency(sp.solution.policy, b) > 0.9);
    CHECK(check_nonparallelity(b, sp.params).min_margin > 0.0);

    // Away from the capacity edges the barriers do not cross on the fitted nodes.
    for (int it = 0; it < b.t.n - 1; ++it)
        for (int iq = 1; iq < b.q.n - 1; ++iq)
            for (int iv = 0; iv < b.nu.n; ++iv) {
                const double q = b.q.node(iq), nu = b.nu.node(iv), t = b.t.node(it);
                REQUIRE(b.buy_smooth->poly(q, nu, t) < b.sell_smooth->poly(q, nu, t));
            }

    CHECK(classify(-50.0, 50.0, 0.5, 0.0, b) == Mode::Buy);
    CHECK(classify(150.0, 50.0, 0.5, 0.0, b) == Mode::Sell);
    const double mid = 0.5 * (b.buy_smooth->poly(50.0, 0.5, 0.0) + b.sell_smooth->poly(50.0, 0.5, 0.0));
    CHECK(classify(mid, 50.0, 0.5, 0.0, b) == Mode::Wait);
    BarrierField raw = extract_barriers(sp.solution.policy);
    CHECK_THROWS_AS(classify(0.0, 0.0, 0.5, 0.0, raw), ContractViolation);
}
