#include "esopt/grid.hpp"

#include <algorithm>
#include <cmath>

namespace esopt {

std::pair<int, double> Axis::locate(double x) const {
    const double h = step();
    double u = (x - lo) / h;
    u = std::clamp(u, 0.0, static_cast<double>(n - 1));
    int k = std::min(static_cast<int>(u), n - 2);
    return {k, u - k};
}

void Grid4D::validate(const ModelParams& p) const {
    const auto check_axis = [](const Axis& a, const char* name) {
        if (a.n < 3) throw ConfigError(std::string("n_") + name, "at least 3 nodes required");
        if (!(a.hi > a.lo)) throw ConfigError(std::string(name) + "_max", "axis must be increasing");
    };
    check_axis(s, "s");
    check_axis(q, "q");
    check_axis(nu, "nu");
    check_axis(t, "t");
    const double margin = 3.0 * 2.0 * p.sigma / std::sqrt(2.0 * p.kappa);
    if (!(s.lo < p.mu.minCoeff() - margin))
        throw ConfigError("s_min", "price window too narrow below the regime means");
    if (!(s.hi > p.mu.maxCoeff() + margin))
        throw ConfigError("s_max", "price window too narrow above the regime means");
    if (q.lo != p.q_lo || q.hi != p.q_hi) throw ConfigError("q", "q axis must span [q_lo, q_hi]");
    if (nu.lo != 0.0 || nu.hi != 1.0) throw ConfigError("nu", "nu axis must span [0, 1]");
    if (t.lo != 0.0 || t.hi != p.T) throw ConfigError("t", "time axis must span [0, T]");
}

Grid4D default_grid(const ModelParams& p) {
    Grid4D g;
    g.s = {-100.0, 200.0, 151};
    g.q = {p.q_lo, p.q_hi, 41};
    g.nu = {0.0, 1.0, 21};
    g.t = {0.0, p.T, 200};
    return g;
}

double Field4D::interpolate(double s, double q, double nu, int it) const {
    const auto [is, ws] = grid.s.locate(s);
    const auto [iq, wq] = grid.q.locate(q);
    const auto [iv, wv] = grid.nu.locate(nu);
    double acc = 0.0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c) {
                const double w = (a ? ws : 1 - ws) * (b ? wq : 1 - wq) * (c ? wv : 1 - wv);
                if (w != 0.0) acc += w * (*this)(is + a, iq + b, iv + c, it);
            }
    return acc;
}

const char* to_string(Mode m) {
    switch (m) {
        case Mode::Buy: return "buy";
        case Mode::Wait: return "wait";
        case Mode::Sell: return "sell";
    }
    return "?";
}

double mode_rate(Mode m, double q, const ModelParams& p) {
    const auto rb = rate_bounds(q, p);
    switch (m) {
        case Mode::Buy: return rb.u_max;
        case Mode::Sell: return rb.u_min;
        case Mode::Wait: break;
    }
    return 0.0;
}

double PolicyField::rate(int is, int iq, int iv, int it, const ModelParams& p) const {
    return mode_rate((*this)(is, iq, iv, it), grid.q.node(iq), p);
}

}  // namespace esopt
