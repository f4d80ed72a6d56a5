#include "esopt/hjb.hpp"

#include "esopt/parallel.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace esopt {

ControlChoice pointwise_control(double s, double q, double Vq, const ModelParams& p) {
    const bool buy = s <= Vq - p.d_plus;
    const bool sell = s >= Vq + p.d_minus;
    const auto rb = rate_bounds(q, p);
    if (sell) return {Mode::Sell, rb.u_min};
    if (buy) return {Mode::Buy, rb.u_max};
    return {Mode::Wait, 0.0};
}

double value_dq(const ValueField& V, int is, int iq, int iv, int it) {
    const auto& q = V.grid.q;
    const int lo = std::max(iq - 1, 0), hi = std::min(iq + 1, q.n - 1);
    return (V(is, hi, iv, it) - V(is, lo, iv, it)) / (q.node(hi) - q.node(lo));
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;

/// Assembles I - dt*L on one (s, nu1) plane, where L is the generator of the
/// filtered price/filter pair at time t. Central differences where they keep
/// the stencil monotone, first-order upwind otherwise; V_ss = 0 at the price edges.
SpMat implicit_operator(const ModelParams& p, const Grid4D& g, double t, double dt) {
    const int ns = g.s.n, nv = g.nu.n;
    const double hs = g.s.step(), hv = g.nu.step();
    const double mu1 = p.mu[0], mu2 = p.mu[1];
    const double lam11 = p.Lambda(0, 0), lam21 = p.Lambda(1, 0);
    const double K = seasonality(t, p);
    const auto id = [ns](int i, int j) { return j * ns + i; };

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(ns) * nv * 9);

    // Adds the 1-D drift/diffusion stencil along one axis.
    const auto axis_terms = [&](int row, int k, int n, double h, double drift, double diff,
                                auto neighbour) {
        double diag = 0.0;
        if (k == 0) {
            trip.emplace_back(row, neighbour(k + 1), -dt * drift / h);
            diag += drift / h;
            return diag;
        }
        if (k == n - 1) {
            trip.emplace_back(row, neighbour(k - 1), dt * drift / h);
            diag -= drift / h;
            return diag;
        }
        double lo, hi;
        if (diff / (h * h) >= std::abs(drift) / (2 * h)) {
            lo = diff / (h * h) - drift / (2 * h);
            hi = diff / (h * h) + drift / (2 * h);
        } else {
            lo = diff / (h * h) + std::max(-drift, 0.0) / h;
            hi = diff / (h * h) + std::max(drift, 0.0) / h;
        }
        trip.emplace_back(row, neighbour(k - 1), -dt * lo);
        trip.emplace_back(row, neighbour(k + 1), -dt * hi);
        return lo + hi;
    };

    for (int j = 0; j < nv; ++j) {
        const double nu = g.nu.node(j);
        const double c = p.kappa / p.sigma * (mu1 - mu2) * nu * (1 - nu);
        const double b_nu = lam11 * nu + lam21 * (1 - nu);
        for (int i = 0; i < ns; ++i) {
            const double s = g.s.node(i);
            const double b_s = p.kappa * (mu1 * nu + mu2 * (1 - nu) + K - s);
            const int row = id(i, j);
            double diag = 1.0;
            const bool s_edge = i == 0 || i == ns - 1;
            diag += dt * axis_terms(row, i, ns, hs, b_s, s_edge ? 0.0 : 0.5 * p.sigma * p.sigma,
                                    [&](int k) { return id(k, j); });
            diag += dt * axis_terms(row, j, nv, hv, b_nu, 0.5 * c * c, [&](int k) { return id(i, k); });
            if (j > 0 && j < nv - 1 && c != 0.0) {
                // Cross term sigma*c*V_{s nu}; one-sided in s at the price edges.
                const int ip = std::min(i + 1, ns - 1), im = std::max(i - 1, 0);
                const double w = p.sigma * c / ((g.s.node(ip) - g.s.node(im)) * 2 * hv);
                trip.emplace_back(row, id(ip, j + 1), -dt * w);
                trip.emplace_back(row, id(ip, j - 1), dt * w);
                trip.emplace_back(row, id(im, j + 1), dt * w);
                trip.emplace_back(row, id(im, j - 1), -dt * w);
            }
            trip.emplace_back(row, row, diag);
        }
    }
    SpMat A(ns * nv, ns * nv);
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();
    return A;
}

class ImplicitSolver {
public:
    void factor(const SpMat& A) {
        lu_.analyzePattern(A);
        lu_.factorize(A);
        if (lu_.info() != Eigen::Success)
            throw SolverError("backward_solve: factorization failed", lu_.lastErrorMessage());
    }
    void solve_in_place(double* data, Eigen::Index rows, Eigen::Index cols) {
        Eigen::Map<Eigen::MatrixXd> X(data, rows, cols);
        Eigen::MatrixXd rhs = X;
        X = lu_.solve(rhs);
    }

private:
    Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu_;
};

double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

SolveResult backward_solve(const ModelParams& p, const Grid4D& grid, const SolverOptions& opts) {
    p.validate();
    grid.validate(p);
    if (p.regimes() != 2) throw ContractViolation("backward_solve: only two regimes are supported");
    if (opts.policy_iterations < 1) throw ConfigError("policy_iterations", "must be >= 1");

    SolveResult res{ValueField(grid), PolicyField(grid), {}};
    auto& V = res.value;
    auto& pol = res.policy;
    const int ns = grid.s.n, nq = grid.q.n, nv = grid.nu.n, nt = grid.t.n;

    // Terminal slice; its modes record the instantaneous threshold rule with V_q = Phi_q.
    for (int iq = 0; iq < nq; ++iq)
        for (int iv = 0; iv < nv; ++iv)
            for (int is = 0; is < ns; ++is) {
                const double s = grid.s.node(is), q = grid.q.node(iq);
                V(is, iq, iv, nt - 1) = terminal_reward(s, q, p);
                pol(is, iq, iv, nt - 1) = pointwise_control(s, q, p.cS * s - p.d_minus, p).mode;
            }

    const bool time_dependent = p.seasonality.has_value() && p.seasonality->amplitude != 0.0;
    ImplicitSolver solver;
    double factored_dt = -1.0;

    std::vector<double> rates_max(nq), rates_min(nq);
    for (int iq = 0; iq < nq; ++iq) {
        const auto rb = rate_bounds(grid.q.node(iq), p);
        rates_max[iq] = rb.u_max;
        rates_min[iq] = rb.u_min;
    }

    for (int it = nt - 2; it >= 0; --it) {
        const double t = grid.t.node(it);
        const double dt = grid.t.node(it + 1) - t;
        if (time_dependent || std::abs(dt - factored_dt) > 1e-14 * p.T) {
            solver.factor(implicit_operator(p, grid, t, dt));
            factored_dt = dt;
        }
        const double disc = std::exp(-p.rho * dt);

        // Value carried from the later slice along dQ = u dt. The reward is charged
        // on the realized move, which the capacity clamp can shorten on coarse t-grids.
        const auto candidate = [&](int is, int iq, int iv, double u) {
            const double s = grid.s.node(is), q = grid.q.node(iq);
            const double qf = std::clamp(q + u * dt, p.q_lo, p.q_hi);
            const auto [k, w] = grid.q.locate(qf);
            const double carried = (1 - w) * V(is, k, iv, it + 1) + (w != 0.0 ? w * V(is, k + 1, iv, it + 1) : 0.0);
            return disc * carried + dt * running_reward(s, q, (qf - q) / dt, p);
        };

        // Semi-Lagrangian argmax against the later slice.
        parallel_for(static_cast<std::size_t>(nq), [&](std::size_t iqz) {
            const int iq = static_cast<int>(iqz);
            const double q = grid.q.node(iq);
            for (int iv = 0; iv < nv; ++iv)
                for (int is = 0; is < ns; ++is) {
                    const double s = grid.s.node(is);
                    double best = candidate(is, iq, iv, 0.0);
                    Mode mode = Mode::Wait;
                    if (rates_max[iq] > 0.0) {
                        const double v = candidate(is, iq, iv, rates_max[iq]);
                        if (v >= best) best = v, mode = Mode::Buy;
                    }
                    if (rates_min[iq] < 0.0) {
                        const double v = candidate(is, iq, iv, rates_min[iq]);
                        if (v >= best) best = v, mode = Mode::Sell;
                    }
                    if (mode == Mode::Wait && (rates_max[iq] == 0.0 || rates_min[iq] == 0.0)) {
                        // A zero-rate trading mode ties with waiting; label it by the threshold rule.
                        const Mode rule = pointwise_control(s, q, value_dq(V, is, iq, iv, it + 1), p).mode;
                        if ((rule == Mode::Buy && rates_max[iq] == 0.0) ||
                            (rule == Mode::Sell && rates_min[iq] == 0.0))
                            mode = rule;
                    }
                    V(is, iq, iv, it) = best;
                    pol(is, iq, iv, it) = mode;
                }
        });
        solver.solve_in_place(V.slice(it).data(), static_cast<Eigen::Index>(ns) * nv, nq);
        int used = 1;

        for (int k = 1; k < opts.policy_iterations; ++k) {
            std::vector<double> previous(V.slice(it).begin(), V.slice(it).end());
            std::vector<double> rhs(previous.size());
            std::vector<Mode> modes(previous.size());
            parallel_for(static_cast<std::size_t>(nq), [&](std::size_t iqz) {
                const int iq = static_cast<int>(iqz);
                const double q = grid.q.node(iq);
                for (int iv = 0; iv < nv; ++iv)
                    for (int is = 0; is < ns; ++is) {
                        const std::size_t local = (static_cast<std::size_t>(iq) * nv + iv) * ns + is;
                        const auto choice =
                            pointwise_control(grid.s.node(is), q, value_dq(V, is, iq, iv, it), p);
                        modes[local] = choice.mode;
                        rhs[local] = candidate(is, iq, iv, choice.rate);
                    }
            });
            std::copy(rhs.begin(), rhs.end(), V.slice(it).begin());
            solver.solve_in_place(V.slice(it).data(), static_cast<Eigen::Index>(ns) * nv, nq);
            double change = 0.0;
            for (std::size_t n = 0; n < previous.size(); ++n)
                change = std::max(change, std::abs(V.slice(it)[n] - previous[n]));
            const double scale = std::max(max_abs(V.slice(it)), 1e-300);
            std::copy(modes.begin(), modes.end(), pol.modes.begin() + static_cast<long>(grid.index(0, 0, 0, it)));
            used = k + 1;
            res.diagnostics.last_relative_change = change / scale;
            if (change <= opts.tolerance * scale) break;
            if (k + 1 == opts.policy_iterations) {
                std::ostringstream diag;
                diag << "time index " << it << " (t=" << t << "): policy iteration did not converge after "
                     << opts.policy_iterations << " sweeps; last max|dV| = " << change
                     << ", tolerance = " << opts.tolerance * scale;
                throw SolverError("backward_solve: control/value fixed point did not converge", diag.str());
            }
        }
        res.diagnostics.max_policy_iterations_used = std::max(res.diagnostics.max_policy_iterations_used, used);
        ++res.diagnostics.steps;
    }
    return res;
}

Field4D mixed_derivative_field(const ValueField& V) {
    const auto& g = V.grid;
    if (g.s.n < 3 || g.q.n < 3) throw ContractViolation("mixed_derivative_field: need >= 3 nodes in s and q");
    Field4D out(g);
    for (int it = 0; it < g.t.n; ++it)
        for (int iq = 0; iq < g.q.n; ++iq) {
            const int ql = std::max(iq - 1, 0), qh = std::min(iq + 1, g.q.n - 1);
            const double dq = g.q.node(qh) - g.q.node(ql);
            for (int iv = 0; iv < g.nu.n; ++iv)
                for (int is = 0; is < g.s.n; ++is) {
                    const int sl = std::max(is - 1, 0), sh = std::min(is + 1, g.s.n - 1);
                    const double ds = g.s.node(sh) - g.s.node(sl);
                    out(is, iq, iv, it) = (V(sh, qh, iv, it) - V(sh, ql, iv, it) - V(sl, qh, iv, it) +
                                           V(sl, ql, iv, it)) /
                                          (ds * dq);
                }
        }
    return out;
}

}  // namespace esopt
