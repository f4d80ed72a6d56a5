#include "esopt/barriers.hpp"

#include "esopt/hjb.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace esopt {

namespace {

/// Chebyshev T_k and its first two derivatives in x for k = 0..deg.
void chebyshev(int deg, double x, double* T, double* dT, double* d2T) {
    T[0] = 1.0, dT[0] = 0.0, d2T[0] = 0.0;
    if (deg == 0) return;
    T[1] = x, dT[1] = 1.0, d2T[1] = 0.0;
    for (int k = 1; k < deg; ++k) {
        T[k + 1] = 2 * x * T[k] - T[k - 1];
        dT[k + 1] = 2 * T[k] + 2 * x * dT[k] - dT[k - 1];
        d2T[k + 1] = 4 * dT[k] + 2 * x * d2T[k] - d2T[k - 1];
    }
}

constexpr int kMaxDegree = 16;

}  // namespace

TensorPolynomial::TensorPolynomial(std::array<int, 3> degrees, std::array<double, 3> lo,
                                   std::array<double, 3> hi, std::vector<double> coefficients, TimeWarp warp)
    : degrees_(degrees), lo_(lo), hi_(hi), coef_(std::move(coefficients)), warp_(warp) {
    if (warp_.enabled && !(warp_.offset > 0.0 && hi_[2] <= warp_.horizon))
        throw ContractViolation("TensorPolynomial: time warp needs a positive offset and t <= horizon");
    for (int a = 0; a < 3; ++a) {
        if (degrees_[a] < 0 || degrees_[a] > kMaxDegree)
            throw ContractViolation("TensorPolynomial: degree out of range");
        if (!(hi_[a] > lo_[a])) throw ContractViolation("TensorPolynomial: empty box");
    }
    if (coef_.size() != term_count(degrees_))
        throw ContractViolation("TensorPolynomial: coefficient count does not match degrees");
}

void TensorPolynomial::basis(double q, double nu, double t, std::vector<double>& out) const {
    const std::array<double, 3> x{q, nu, t};
    double T[3][kMaxDegree + 1], dT[kMaxDegree + 1], d2T[kMaxDegree + 1];
    for (int a = 0; a < 3; ++a) {
        double xa = std::clamp(x[a], lo_[a], hi_[a]), l = lo_[a], h = hi_[a];
        if (a == 2) xa = warp_(xa), l = warp_(l), h = warp_(h);
        chebyshev(degrees_[a], (2 * xa - l - h) / (h - l), T[a], dT, d2T);
    }
    out.resize(term_count(degrees_));
    std::size_t n = 0;
    for (int i = 0; i <= degrees_[0]; ++i)
        for (int j = 0; j <= degrees_[1]; ++j)
            for (int k = 0; k <= degrees_[2]; ++k) out[n++] = T[0][i] * T[1][j] * T[2][k];
}

double TensorPolynomial::operator()(double q, double nu, double t) const {
    return jet(q, nu, t).value;
}

TensorPolynomial::Jet TensorPolynomial::jet(double q, double nu, double t) const {
    const std::array<double, 3> x{q, nu, t};
    double T[3][kMaxDegree + 1], D1[3][kMaxDegree + 1], D2[3][kMaxDegree + 1];
    for (int a = 0; a < 3; ++a) {
        const double xa = std::clamp(x[a], lo_[a], hi_[a]);
        double l = lo_[a], h = hi_[a], u = xa, du = 1.0, d2u = 0.0;
        if (a == 2 && warp_.enabled) {
            const double gap = warp_.horizon - xa + warp_.offset;
            l = warp_(l), h = warp_(h), u = warp_(xa), du = 1.0 / gap, d2u = 1.0 / (gap * gap);
        }
        const double scale = 2.0 / (h - l);
        chebyshev(degrees_[a], (2 * u - l - h) / (h - l), T[a], D1[a], D2[a]);
        for (int k = 0; k <= degrees_[a]; ++k) {
            const double d1 = D1[a][k] * scale, d2 = D2[a][k] * scale * scale;
            D1[a][k] = d1 * du;
            D2[a][k] = d2 * du * du + d1 * d2u;
        }
    }
    Jet out;
    std::size_t n = 0;
    for (int i = 0; i <= degrees_[0]; ++i)
        for (int j = 0; j <= degrees_[1]; ++j)
            for (int k = 0; k <= degrees_[2]; ++k) {
                const double c = coef_[n++];
                if (c == 0.0) continue;
                const double a0 = T[0][i], a1 = D1[0][i], a2 = D2[0][i];
                const double b0 = T[1][j], b1 = D1[1][j], b2 = D2[1][j];
                const double c0 = T[2][k], c1 = D1[2][k], c2 = D2[2][k];
                out.value += c * a0 * b0 * c0;
                out.grad[0] += c * a1 * b0 * c0;
                out.grad[1] += c * a0 * b1 * c0;
                out.grad[2] += c * a0 * b0 * c1;
                out.hess[0][0] += c * a2 * b0 * c0;
                out.hess[1][1] += c * a0 * b2 * c0;
                out.hess[2][2] += c * a0 * b0 * c2;
                out.hess[0][1] += c * a1 * b1 * c0;
                out.hess[0][2] += c * a1 * b0 * c1;
                out.hess[1][2] += c * a0 * b1 * c1;
            }
    out.hess[1][0] = out.hess[0][1];
    out.hess[2][0] = out.hess[0][2];
    out.hess[2][1] = out.hess[1][2];
    return out;
}

const char* to_string(BarrierStatus s) {
    switch (s) {
        case BarrierStatus::Ok: return "ok";
        case BarrierStatus::BelowRange: return "below_range";
        case BarrierStatus::AboveRange: return "above_range";
        case BarrierStatus::NonMonotone: return "non_monotone";
        case BarrierStatus::Merged: return "merged";
    }
    return "?";
}

std::size_t BarrierField::flagged() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < size(); ++i)
        n += (buy_status[i] != BarrierStatus::Ok) + (sell_status[i] != BarrierStatus::Ok);
    return n;
}

BarrierField extract_barriers(const PolicyField& policy) {
    const auto& g = policy.grid;
    BarrierField out;
    out.q = g.q;
    out.nu = g.nu;
    out.t = g.t;
    out.s_spacing = g.s.step();
    const std::size_t n = out.size();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.buy_level.assign(n, nan);
    out.sell_level.assign(n, nan);
    out.buy_status.assign(n, BarrierStatus::Ok);
    out.sell_status.assign(n, BarrierStatus::Ok);
    const int ns = g.s.n;

    for (int it = 0; it < g.t.n; ++it)
        for (int iq = 0; iq < g.q.n; ++iq)
            for (int iv = 0; iv < g.nu.n; ++iv) {
                const std::size_t k = out.index(iq, iv, it);
                bool monotone = true;
                int buys = 0, first_sell = ns;
                for (int is = 0; is < ns; ++is) {
                    const Mode m = policy(is, iq, iv, it);
                    if (is > 0 && static_cast<int>(m) < static_cast<int>(policy(is - 1, iq, iv, it)))
                        monotone = false;
                    if (m == Mode::Buy) ++buys;
                    if (m == Mode::Sell && first_sell == ns) first_sell = is;
                }
                if (!monotone) {
                    out.buy_status[k] = out.sell_status[k] = BarrierStatus::NonMonotone;
                    continue;
                }
                if (buys == 0)
                    out.buy_status[k] = BarrierStatus::BelowRange;
                else if (buys == ns)
                    out.buy_status[k] = BarrierStatus::AboveRange;
                else
                    out.buy_level[k] = 0.5 * (g.s.node(buys - 1) + g.s.node(buys));

                if (first_sell == ns)
                    out.sell_status[k] = BarrierStatus::AboveRange;
                else if (first_sell == 0)
                    out.sell_status[k] = BarrierStatus::BelowRange;
                else
                    out.sell_level[k] = 0.5 * (g.s.node(first_sell - 1) + g.s.node(first_sell));

                if (out.buy_status[k] == BarrierStatus::Ok && out.sell_status[k] == BarrierStatus::Ok &&
                    !(out.buy_level[k] < out.sell_level[k]))
                    out.buy_status[k] = out.sell_status[k] = BarrierStatus::Merged;
            }
    return out;
}

SmoothBarrier smooth_barrier(const BarrierField& field, bool sell_side, const SmoothingOptions& opts) {
    const auto& level = sell_side ? field.sell_level : field.buy_level;
    const auto& status = sell_side ? field.sell_status : field.buy_status;
    const std::array<double, 3> lo{field.q.lo, field.nu.lo, field.t.lo};
    const std::array<double, 3> hi{field.q.hi, field.nu.hi, field.t.hi};
    const std::size_t m = TensorPolynomial::term_count(opts.degrees);
    TimeWarp warp;
    if (opts.log_time) warp = {true, field.t.hi, field.t.step()};
    TensorPolynomial shape(opts.degrees, lo, hi, std::vector<double>(m, 0.0), warp);

    const int last_t = opts.include_terminal_slice ? field.t.n : field.t.n - 1;
    Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
    std::vector<double> phi;
    std::size_t used = 0;
    for (int it = 0; it < last_t; ++it)
        for (int iq = 0; iq < field.q.n; ++iq)
            for (int iv = 0; iv < field.nu.n; ++iv) {
                const std::size_t k = field.index(iq, iv, it);
                if (status[k] != BarrierStatus::Ok) continue;
                shape.basis(field.q.node(iq), field.nu.node(iv), field.t.node(it), phi);
                const Eigen::Map<const Eigen::VectorXd> row(phi.data(), static_cast<Eigen::Index>(m));
                normal.selfadjointView<Eigen::Lower>().rankUpdate(row);
                rhs += level[k] * row;
                ++used;
            }
    if (used < m) throw ContractViolation("smooth_barrier: fewer usable nodes than coefficients");
    normal.triangularView<Eigen::StrictlyUpper>() = normal.transpose();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(normal);
    if (qr.rank() < static_cast<Eigen::Index>(m))
        throw ContractViolation("smooth_barrier: node set does not determine the polynomial");
    const Eigen::VectorXd c = qr.solve(rhs);

    SmoothBarrier out;
    out.poly = TensorPolynomial(opts.degrees, lo, hi, std::vector<double>(c.data(), c.data() + c.size()), warp);
    out.fitted_nodes = used;
    for (int it = 0; it < last_t; ++it)
        for (int iq = 0; iq < field.q.n; ++iq)
            for (int iv = 0; iv < field.nu.n; ++iv) {
                const std::size_t k = field.index(iq, iv, it);
                if (status[k] != BarrierStatus::Ok) continue;
                const double fit = out.poly(field.q.node(iq), field.nu.node(iv), field.t.node(it));
                out.max_deviation = std::max(out.max_deviation, std::abs(fit - level[k]));
                if (field.t.node(it) <= 0.95 * field.t.hi)
                    out.max_deviation_early = std::max(out.max_deviation_early, std::abs(fit - level[k]));
            }
    return out;
}

void smooth_barriers(BarrierField& field, const SmoothingOptions& opts) {
    field.buy_smooth = smooth_barrier(field, false, opts);
    field.sell_smooth = smooth_barrier(field, true, opts);
}

double forbidden_slope(double nu, const ModelParams& p) {
    return p.sigma * p.sigma / (p.kappa * (p.mu[0] - p.mu[1]) * nu * (1 - nu));
}

NonParallelityReport check_nonparallelity(const BarrierField& b, const ModelParams& p, double threshold) {
    NonParallelityReport rep;
    rep.used_smooth = b.smoothed();
    rep.min_buy_margin = rep.min_sell_margin = std::numeric_limits<double>::infinity();
    const double loading = p.kappa / p.sigma * (p.mu[0] - p.mu[1]);

    const auto slope = [&](bool sell, int iq, int iv, int it) -> std::optional<double> {
        if (rep.used_smooth) {
            const auto& poly = (sell ? b.sell_smooth : b.buy_smooth)->poly;
            return poly.jet(b.q.node(iq), b.nu.node(iv), b.t.node(it)).grad[1];
        }
        const auto& level = sell ? b.sell_level : b.buy_level;
        const auto& status = sell ? b.sell_status : b.buy_status;
        const std::size_t lo = b.index(iq, iv - 1, it), hi = b.index(iq, iv + 1, it);
        if (status[lo] != BarrierStatus::Ok || status[hi] != BarrierStatus::Ok) return std::nullopt;
        return (level[hi] - level[lo]) / (b.nu.node(iv + 1) - b.nu.node(iv - 1));
    };

    for (int it = 0; it < b.t.n; ++it)
        for (int iq = 0; iq < b.q.n; ++iq)
            for (int iv = 1; iv < b.nu.n - 1; ++iv)
                for (bool sell : {false, true}) {
                    const auto& status = sell ? b.sell_status : b.buy_status;
                    if (!rep.used_smooth && status[b.index(iq, iv, it)] != BarrierStatus::Ok) continue;
                    const auto bn = slope(sell, iq, iv, it);
                    if (!bn) continue;
                    const double nu = b.nu.node(iv);
                    const double margin = std::abs(p.sigma - loading * nu * (1 - nu) * *bn);
                    ++rep.nodes_checked;
                    double& side_min = sell ? rep.min_sell_margin : rep.min_buy_margin;
                    side_min = std::min(side_min, margin);
                    if (rep.nodes_checked == 1 || margin < rep.worst.margin) rep.worst = {iq, iv, it, sell, margin};
                    if (margin <= threshold) rep.failing.push_back({iq, iv, it, sell, margin});
                }
    rep.min_margin = std::min(rep.min_buy_margin, rep.min_sell_margin);
    return rep;
}

MixedDerivativeReport check_mixed_derivative(const ValueField& V) {
    const Field4D vsq = mixed_derivative_field(V);
    const auto& g = V.grid;
    MixedDerivativeReport rep;
    rep.min_margin = rep.terminal_min_margin = std::numeric_limits<double>::infinity();
    for (int it = 0; it < g.t.n; ++it)
        for (int iq = 0; iq < g.q.n; ++iq)
            for (int iv = 0; iv < g.nu.n; ++iv)
                for (int is = 0; is < g.s.n; ++is) {
                    const double x = vsq(is, iq, iv, it);
                    const double margin = std::abs(x - 1.0);
                    rep.max_abs_vsq = std::max(rep.max_abs_vsq, std::abs(x));
                    if (margin < rep.min_margin) {
                        rep.min_margin = margin;
                        rep.arg_is = is, rep.arg_iq = iq, rep.arg_iv = iv, rep.arg_it = it;
                    }
                    if (it == g.t.n - 1) rep.terminal_min_margin = std::min(rep.terminal_min_margin, margin);
                }
    return rep;
}

Mode classify(double s, double q, double nu, double t, const BarrierField& b) {
    if (!b.smoothed()) throw ContractViolation("classify: barriers are not smoothed");
    if (s >= b.sell_smooth->poly(q, nu, t)) return Mode::Sell;
    if (s <= b.buy_smooth->poly(q, nu, t)) return Mode::Buy;
    return Mode::Wait;
}

double region_consistency(const PolicyField& policy, const BarrierField& b) {
    const auto& g = policy.grid;
    std::size_t match = 0, total = 0;
    for (int it = 0; it < g.t.n - 1; ++it)
        for (int iq = 0; iq < g.q.n; ++iq)
            for (int iv = 0; iv < g.nu.n; ++iv) {
                const double q = g.q.node(iq), nu = g.nu.node(iv), t = g.t.node(it);
                const double lo = b.buy_smooth->poly(q, nu, t), hi = b.sell_smooth->poly(q, nu, t);
                for (int is = 0; is < g.s.n; ++is) {
                    const double s = g.s.node(is);
                    const Mode m = s >= hi ? Mode::Sell : (s <= lo ? Mode::Buy : Mode::Wait);
                    match += m == policy(is, iq, iv, it);
                    ++total;
                }
            }
    return total ? static_cast<double>(match) / static_cast<double>(total) : 0.0;
}

}  // namespace esopt
