#include "esopt/storage_system.hpp"

#include "esopt/filter.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>

namespace esopt {

namespace {

/// Barrier jets are requested many times at the same (q, nu, t) while the
/// transform integrates along s; a few recent entries per thread suffice.
const TensorPolynomial::Jet& cached_jet(const TensorPolynomial& poly, std::uint64_t id, double q, double nu,
                                        double t) {
    struct Entry {
        std::uint64_t id = 0;
        double q = 0, nu = 0, t = 0;
        TensorPolynomial::Jet jet;
    };
    thread_local std::array<Entry, 32> cache;
    thread_local std::size_t next = 0;
    for (const Entry& e : cache)
        if (e.id == id && e.q == q && e.nu == nu && e.t == t) return e.jet;
    Entry& e = cache[next];
    next = (next + 1) % cache.size();
    e = {id, q, nu, t, poly.jet(q, nu, t)};
    return e.jet;
}

double clamp_pi(double pi) { return std::clamp(pi, kFilterFloor, 1.0 - kFilterFloor); }

DiscontinuousSdeSpec make_spec(const StorageSystem& sys, std::shared_ptr<const TensorPolynomial> poly,
                               Mode below, Mode above) {
    static std::atomic<std::uint64_t> next_id{1};
    const std::uint64_t id = next_id++;
    DiscontinuousSdeSpec spec;
    spec.dim = 3;
    spec.noise_dim = 1;
    // Copies keep the spec valid independent of the StorageSystem's lifetime.
    const ModelParams p = sys.params;
    const auto drift = [p](const Vec& x, double t, Mode m) {
        const double pi = x[2];
        Vec a(3);
        a[0] = p.kappa * (p.mu[0] * pi + p.mu[1] * (1 - pi) + seasonality(std::clamp(t, 0.0, p.T), p) - x[0]);
        a[1] = mode_rate(m, std::clamp(x[1], p.q_lo, p.q_hi), p);
        a[2] = p.Lambda(0, 0) * pi + p.Lambda(1, 0) * (1 - pi);
        return a;
    };
    spec.alpha_plus = [drift, above](const Vec& x, double t) { return drift(x, t, above); };
    spec.alpha_minus = [drift, below](const Vec& x, double t) { return drift(x, t, below); };
    spec.beta = [p](const Vec& x, double) {
        const double pi = x[2];
        Mat b(3, 1);
        b << p.sigma, 0.0, p.kappa * (p.mu[0] - p.mu[1]) * pi * (1 - pi) / p.sigma;
        return b;
    };
    spec.surface = [poly, id](const Vec& x, double t) {
        const auto& j = cached_jet(*poly, id, x[1], x[2], t);
        SurfaceJet s;
        s.value = x[0] - j.value;
        s.dt = -j.grad[2];
        s.grad = Vec(3);
        s.grad << 1.0, -j.grad[0], -j.grad[1];
        s.hess = Mat::Zero(3, 3);
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) s.hess(a + 1, b + 1) = -j.hess[a][b];
        return s;
    };
    spec.inverse = [poly, id](double u, const Vec& x, double t) {
        return u + cached_jet(*poly, id, x[1], x[2], t).value;
    };
    spec.project = [p](Vec& x) {
        x[1] = std::clamp(x[1], p.q_lo, p.q_hi);
        x[2] = clamp_pi(x[2]);
    };
    return spec;
}

}  // namespace

double StorageSystem::gamma(double q, double nu, double t) const {
    return 0.5 * ((*buy)(q, nu, t) + (*sell)(q, nu, t));
}

Mode StorageSystem::mode_at(const Vec& x, double t) const {
    if (x[0] >= (*sell)(x[1], x[2], t)) return Mode::Sell;
    if (x[0] < (*buy)(x[1], x[2], t)) return Mode::Buy;
    return Mode::Wait;
}

const DiscontinuousSdeSpec& StorageSystem::spec_at(const Vec& x, double t) const {
    return x[0] < gamma(x[1], x[2], t) ? buy_spec : sell_spec;
}

Vec StorageSystem::drift(const Vec& x, double t, Mode m) const {
    return (m == Mode::Sell ? sell_spec.alpha_plus : m == Mode::Buy ? buy_spec.alpha_minus : buy_spec.alpha_plus)(x, t);
}

Mat StorageSystem::diffusion(const Vec& x, double t) const { return buy_spec.beta(x, t); }

void StorageSystem::project(Vec& x) const { buy_spec.project(x); }

StorageSystem storage_system_spec(const ModelParams& p, const BarrierField& barriers) {
    if (p.regimes() != 2) throw ContractViolation("storage_system_spec: two regimes required");
    if (!barriers.smoothed()) throw ContractViolation("storage_system_spec: barriers are not smoothed");
    StorageSystem sys;
    sys.params = p;
    sys.buy = std::make_shared<const TensorPolynomial>(barriers.buy_smooth->poly);
    sys.sell = std::make_shared<const TensorPolynomial>(barriers.sell_smooth->poly);

    std::vector<Vec> buy_points, sell_points;
    for (int it = 0; it < barriers.t.n; ++it)
        for (int iq = 0; iq < barriers.q.n; ++iq)
            for (int iv = 0; iv < barriers.nu.n; ++iv) {
                const double q = barriers.q.node(iq), nu = clamp_pi(barriers.nu.node(iv)), t = barriers.t.node(it);
                const double lo = (*sys.buy)(q, nu, t), hi = (*sys.sell)(q, nu, t);
                // Where buying or selling has a zero rate bound (q at capacity) the
                // inert mode equals Wait, so the order of the levels is immaterial.
                // No decision is taken on the unfitted terminal slice.
                const RateBounds rb = rate_bounds(q, p);
                if (!(lo < hi) && rb.u_max != 0.0 && rb.u_min != 0.0 && it < barriers.t.n - 1)
                    throw ContractViolation("storage_system_spec: smoothed barriers cross at q=" + std::to_string(q) +
                                            " nu=" + std::to_string(nu) + " t=" + std::to_string(t));
                Vec x(3);
                x << lo, q, nu;
                buy_points.push_back(x);
                x[0] = hi;
                sell_points.push_back(x);
            }
    sys.buy_spec = make_spec(sys, sys.buy, Mode::Buy, Mode::Wait);
    sys.sell_spec = make_spec(sys, sys.sell, Mode::Wait, Mode::Sell);
    const auto check = [&](const DiscontinuousSdeSpec& spec, const std::vector<Vec>& pts) {
        for (int it = 0; it < barriers.t.n; ++it) {
            const auto first = pts.begin() + static_cast<std::ptrdiff_t>(it) * barriers.q.n * barriers.nu.n;
            validate_spec(spec, {first, first + barriers.q.n * barriers.nu.n}, barriers.t.node(it));
        }
    };
    check(sys.buy_spec, buy_points);
    check(sys.sell_spec, sell_points);
    sys.buy_spec.x0 = sys.sell_spec.x0 = Vec::Zero(3);
    return sys;
}

}  // namespace esopt
