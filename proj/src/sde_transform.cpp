#include "esopt/sde_transform.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/numeric/odeint.hpp>

#include <cmath>
#include <ostream>
#include <sstream>

namespace esopt {

namespace {

constexpr double kFdStep = 1e-4;
constexpr double kQuadTol = 1e-12;
constexpr unsigned kQuadDepth = 15;
constexpr double kJetTol = 1e-10;

/// int_0^b f, for either sign of b.
template <class F>
double integrate_from_zero(F&& f, double b) {
    using boost::math::quadrature::gauss_kronrod;
    if (b == 0.0) return 0.0;
    if (b > 0.0) return gauss_kronrod<double, 15>::integrate(f, 0.0, b, kQuadDepth, kQuadTol);
    return -gauss_kronrod<double, 15>::integrate(f, b, 0.0, kQuadDepth, kQuadTol);
}

int side_of(double u) { return u >= 0.0 ? 1 : -1; }

/// A = 2 alpha1_hat / a11 and B_k = 2 alpha_k_hat / a11, a = beta_hat beta_hat^T.
/// Writes A to out[0] and B_k to out[1..d-1]; `work` is scratch of size d.
void ratios_into(const DiscontinuousSdeSpec& spec, Vec& work, double t, int side, double* out) {
    const double u = work[0];
    work[0] = spec.inverse ? spec.inverse(u, work, t) : from_hat(spec, work, t)[0];
    const SurfaceJet sj = spec.surface(work, t);
    const Vec a = (side > 0 ? spec.alpha_plus : spec.alpha_minus)(work, t);
    const Mat b = spec.beta(work, t);
    work[0] = u;
    double a11 = 0.0, trace = 0.0;
    for (Eigen::Index c = 0; c < b.cols(); ++c) {
        const double n = sj.grad.dot(b.col(c));
        a11 += n * n;
        trace += b.col(c).dot(sj.hess * b.col(c));
    }
    if (!(a11 > 0.0)) throw ContractViolation("transform: noise loading normal to the surface vanishes");
    out[0] = 2.0 * (sj.dt + sj.grad.dot(a) + 0.5 * trace) / a11;
    for (int k = 1; k < spec.dim; ++k) out[k] = 2.0 * a[k] / a11;
}

struct Ratios {
    double A = 0.0;
    Vec B;
};

Ratios ratios(const DiscontinuousSdeSpec& spec, const Vec& y, double t, int side) {
    Vec work = y;
    std::vector<double> out(static_cast<std::size_t>(spec.dim));
    ratios_into(spec, work, t, side, out.data());
    Ratios r;
    r.A = out[0];
    r.B = Eigen::Map<const Vec>(out.data() + 1, spec.dim - 1);
    return r;
}

}  // namespace

void validate_spec(const DiscontinuousSdeSpec& spec, const std::vector<Vec>& points, double t, double floor) {
    if (spec.dim < 1 || spec.noise_dim < 1) throw ContractViolation("sde spec: dimensions must be positive");
    if (!spec.alpha_plus || !spec.alpha_minus || !spec.beta || !spec.surface)
        throw ContractViolation("sde spec: drift, diffusion and surface are required");
    for (const Vec& x : points) {
        if (x.size() != spec.dim) throw ContractViolation("sde spec: point dimension mismatch");
        const SurfaceJet sj = spec.surface(x, t);
        const Mat b = spec.beta(x, t);
        if (b.rows() != spec.dim || b.cols() != spec.noise_dim)
            throw ContractViolation("sde spec: diffusion has the wrong shape");
        if (std::abs(sj.grad[0]) < floor)
            throw ContractViolation("sde spec: surface derivative in x_1 vanishes");
        if ((sj.grad.transpose() * b).squaredNorm() < floor)
            throw ContractViolation("sde spec: diffusion is parallel to the surface (degenerate normal noise)");
    }
}

Vec to_hat(const DiscontinuousSdeSpec& spec, const Vec& x, double t) {
    Vec y = x;
    y[0] = spec.surface(x, t).value;
    return y;
}

Vec from_hat(const DiscontinuousSdeSpec& spec, const Vec& y, double t) {
    Vec x = y;
    if (spec.inverse) {
        x[0] = spec.inverse(y[0], y, t);
        return x;
    }
    for (int i = 0; i < 60; ++i) {
        const SurfaceJet sj = spec.surface(x, t);
        const double r = sj.value - y[0];
        if (std::abs(r) <= 1e-14 * (1.0 + std::abs(y[0]))) return x;
        x[0] -= r / sj.grad[0];
    }
    throw TransformError("surface inversion did not converge", "u=" + std::to_string(y[0]));
}

HatCoefficients hat_coefficients(const DiscontinuousSdeSpec& spec, const Vec& y, double t, int side) {
    if (side == 0) side = side_of(y[0]);
    const Vec x = from_hat(spec, y, t);
    const SurfaceJet sj = spec.surface(x, t);
    const Vec a = (side > 0 ? spec.alpha_plus : spec.alpha_minus)(x, t);
    const Mat b = spec.beta(x, t);
    HatCoefficients h;
    h.y = y;
    h.alpha = a;
    h.alpha[0] = sj.dt + sj.grad.dot(a) + 0.5 * (b.transpose() * sj.hess * b).trace();
    h.beta = b;
    h.beta.row(0) = sj.grad.transpose() * b;
    return h;
}

double g1(const DiscontinuousSdeSpec& spec, const Vec& x, double t) {
    const Vec y = to_hat(spec, x, t);
    const int side = side_of(y[0]);
    Vec work = y;
    const auto A = [&](double s) {
        work[0] = s;
        return ratios(spec, work, t, side).A;
    };
    return integrate_from_zero([&](double xi) { return std::exp(-integrate_from_zero(A, xi)); }, y[0]);
}

double gk(const DiscontinuousSdeSpec& spec, const Vec& x, double t, int k) {
    if (k < 2 || k > spec.dim) throw ContractViolation("gk: index out of range");
    const Vec y = to_hat(spec, x, t);
    const int side = side_of(y[0]);
    Vec work = y;
    const auto r = [&](double s) {
        work[0] = s;
        return ratios(spec, work, t, side);
    };
    const auto I = [&](double xi) { return integrate_from_zero([&](double s) { return r(s).A; }, xi); };
    const auto C = [&](double xi) {
        return -integrate_from_zero([&](double s) { return r(s).B[k - 2] * std::exp(I(s)); }, xi);
    };
    return integrate_from_zero([&](double xi) { return C(xi) * std::exp(-I(xi)); }, y[0]);
}

TransformJet transform_jet(const DiscontinuousSdeSpec& spec, const Vec& y, double t, bool second_order) {
    const int d = spec.dim, K = d - 1, P = d;  // parameters: y_2..y_d, then t
    const double u = y[0];
    const int side = side_of(u);
    const HatCoefficients end = hat_coefficients(spec, y, t, side);
    const Mat a = end.beta * end.beta.transpose();

    // Parameter pairs whose second derivatives enter the generator.
    std::vector<std::pair<int, int>> pairs;
    if (second_order)
        for (int j = 1; j < d; ++j)
            for (int l = j; l < d; ++l)
                if (a(j, l) != 0.0) pairs.emplace_back(j - 1, l - 1);
    const int S = static_cast<int>(pairs.size());
    const int n1 = 1 + P + S;

    // Coefficients at xi and their parameter derivatives; one row of d values
    // (A, B_2..B_d) per stencil point, reused across right-hand-side calls.
    const double h = kFdStep;
    const int stencil = 1 + 2 * P + 4 * S;
    std::vector<double> rows(static_cast<std::size_t>(stencil * d));
    std::vector<double> cA(1 + P + S), cB(static_cast<std::size_t>((1 + P + S) * K));
    Vec work(d);
    const auto eval = [&](int row, double xi, int p1, double h1, int p2, double h2) {
        work = y;
        work[0] = xi;
        double tt = t;
        if (p1 >= 0) (p1 == P - 1 ? tt : work[p1 + 1]) += h1;
        if (p2 >= 0) (p2 == P - 1 ? tt : work[p2 + 1]) += h2;
        ratios_into(spec, work, tt, side, &rows[static_cast<std::size_t>(row * d)]);
    };
    // cA[j] / cB[j*K + k]: j = 0 value, 1..P first derivatives, 1+P+s pair s.
    const auto coefs = [&](double xi) {
        eval(0, xi, -1, 0, -1, 0);
        for (int p = 0; p < P; ++p) {
            eval(1 + 2 * p, xi, p, h, -1, 0);
            eval(2 + 2 * p, xi, p, -h, -1, 0);
        }
        for (int s = 0; s < S; ++s) {
            const auto [p, q] = pairs[s];
            if (p == q) continue;
            const int r = 1 + 2 * P + 4 * s;
            eval(r, xi, p, h, q, h);
            eval(r + 1, xi, p, h, q, -h);
            eval(r + 2, xi, p, -h, q, h);
            eval(r + 3, xi, p, -h, q, -h);
        }
        const auto R = [&](int row, int c) { return rows[static_cast<std::size_t>(row * d + c)]; };
        for (int c = 0; c < d; ++c) {
            const auto set = [&](int j, double v) { (c == 0 ? cA[j] : cB[static_cast<std::size_t>(j * K + c - 1)]) = v; };
            set(0, R(0, c));
            for (int p = 0; p < P; ++p) set(1 + p, (R(1 + 2 * p, c) - R(2 + 2 * p, c)) / (2 * h));
            for (int s = 0; s < S; ++s) {
                const auto [p, q] = pairs[s];
                const int r = 1 + 2 * P + 4 * s;
                set(1 + P + s, p == q ? (R(1 + 2 * p, c) - 2 * R(0, c) + R(2 + 2 * p, c)) / (h * h)
                                      : (R(r, c) - R(r + 1, c) - R(r + 2, c) + R(r + 3, c)) / (4 * h * h));
            }
        }
    };

    // Bundles of n1 entries: I, g1, then (C_k, g_k) for each k.
    using State = std::vector<double>;
    State state(static_cast<std::size_t>((2 + 2 * K) * n1), 0.0);
    const auto off = [n1](int bundle) { return static_cast<std::size_t>(bundle * n1); };

    if (u != 0.0) {
        const auto rhs = [&](const State& x, State& dx, double tau) {
            coefs(u * tau);
            const double* I = &x[off(0)];
            const double E = std::exp(-I[0]), eI = 1.0 / E;
            const auto Ip = [&](int p) { return I[1 + p]; };
            const auto Is = [&](int s) { return I[1 + P + s]; };
            double* dI = &dx[off(0)];
            double* dg = &dx[off(1)];
            dI[0] = cA[0];
            dg[0] = E;
            for (int p = 0; p < P; ++p) {
                dI[1 + p] = cA[1 + p];
                dg[1 + p] = -Ip(p) * E;
            }
            for (int s = 0; s < S; ++s) {
                const auto [p, q] = pairs[s];
                dI[1 + P + s] = cA[1 + P + s];
                dg[1 + P + s] = (Ip(p) * Ip(q) - Is(s)) * E;
            }
            for (int k = 0; k < K; ++k) {
                const double* C = &x[off(2 + 2 * k)];
                double* dC = &dx[off(2 + 2 * k)];
                double* dG = &dx[off(3 + 2 * k)];
                const auto Bj = [&](int j) { return cB[static_cast<std::size_t>(j * K + k)]; };
                const double B = Bj(0);
                dC[0] = -B * eI;
                dG[0] = C[0] * E;
                for (int p = 0; p < P; ++p) {
                    dC[1 + p] = -(Bj(1 + p) + B * Ip(p)) * eI;
                    dG[1 + p] = (C[1 + p] - C[0] * Ip(p)) * E;
                }
                for (int s = 0; s < S; ++s) {
                    const auto [p, q] = pairs[s];
                    dC[1 + P + s] = -(Bj(1 + P + s) + Bj(1 + p) * Ip(q) + Bj(1 + q) * Ip(p) +
                                      B * (Is(s) + Ip(p) * Ip(q))) * eI;
                    dG[1 + P + s] = (C[1 + P + s] - C[1 + p] * Ip(q) - C[1 + q] * Ip(p) - C[0] * Is(s) +
                                     C[0] * Ip(p) * Ip(q)) * E;
                }
            }
            for (double& v : dx) v *= u;
        };
        namespace ode = boost::numeric::odeint;
        auto stepper = ode::make_controlled(kJetTol, kJetTol, ode::runge_kutta_dopri5<State>());
        ode::integrate_adaptive(stepper, rhs, state, 0.0, 1.0, 0.5);
    }

    const Ratios at = ratios(spec, y, t, side);
    const double* I = &state[off(0)];
    const double* g = &state[off(1)];
    const double E = std::exp(-I[0]);

    TransformJet jet;
    jet.G = y;
    jet.G[0] = g[0];
    jet.grad = Mat::Identity(d, d);
    jet.dt = Vec::Zero(d);
    jet.grad(0, 0) = E;
    for (int j = 1; j < d; ++j) jet.grad(0, j) = g[j];
    jet.dt[0] = g[P];
    for (int k = 0; k < K; ++k) {
        const double* C = &state[off(2 + 2 * k)];
        const double* gk_ = &state[off(3 + 2 * k)];
        jet.G[k + 1] += gk_[0];
        jet.grad(k + 1, 0) = C[0] * E;
        for (int j = 1; j < d; ++j) jet.grad(k + 1, j) += gk_[j];
        jet.dt[k + 1] = gk_[P];
    }
    if (second_order) {
        jet.hess.assign(d, Mat::Zero(d, d));
        Mat& h0 = jet.hess[0];
        h0(0, 0) = -at.A * E;
        for (int j = 1; j < d; ++j) h0(0, j) = h0(j, 0) = -I[j] * E;
        for (int s = 0; s < S; ++s) {
            const auto [p, q] = pairs[s];
            h0(p + 1, q + 1) = h0(q + 1, p + 1) = g[1 + P + s];
        }
        for (int k = 0; k < K; ++k) {
            const double* C = &state[off(2 + 2 * k)];
            const double* gk_ = &state[off(3 + 2 * k)];
            Mat& hk = jet.hess[k + 1];
            hk(0, 0) = -at.B[k] - at.A * C[0] * E;
            for (int j = 1; j < d; ++j) hk(0, j) = hk(j, 0) = (C[j] - C[0] * I[j]) * E;
            for (int s = 0; s < S; ++s) {
                const auto [p, q] = pairs[s];
                hk(p + 1, q + 1) = hk(q + 1, p + 1) = gk_[1 + P + s];
            }
        }
    }
    return jet;
}

TransformedCoefficients transformed_coefficients(const DiscontinuousSdeSpec& spec, const Vec& x, double t) {
    const Vec y = to_hat(spec, x, t);
    const HatCoefficients h = hat_coefficients(spec, y, t);
    const TransformJet jet = transform_jet(spec, y, t, true);
    const Mat a = h.beta * h.beta.transpose();
    TransformedCoefficients out;
    out.z = jet.G;
    out.drift = jet.grad * h.alpha + jet.dt;
    for (int i = 0; i < spec.dim; ++i) out.drift[i] += 0.5 * (a.cwiseProduct(jet.hess[i])).sum();
    out.diffusion = jet.grad * h.beta;
    return out;
}

Vec invert_transform(const DiscontinuousSdeSpec& spec, const Vec& z, double t, const Vec& guess, double tol,
                     int max_iter) {
    Vec y = guess;
    TransformJet jet = transform_jet(spec, y, t, false);
    Vec r = jet.G - z;
    const double scale = 1.0 + z.cwiseAbs().maxCoeff();
    double window = r.cwiseAbs().maxCoeff();
    for (int it = 0; it < max_iter; ++it) {
        const double res = r.cwiseAbs().maxCoeff();
        if (res <= tol * scale) return y;
        if (it > 0 && it % 5 == 0) {
            if (res > 0.5 * window) break;  // not even linear progress
            window = res;
        }
        const Vec step = jet.grad.partialPivLu().solve(r);
        double lambda = 1.0;
        bool accepted = false;
        for (int h = 0; h < 10 && !accepted; ++h, lambda *= 0.5) {
            const Vec trial = y - lambda * step;
            TransformJet tj = transform_jet(spec, trial, t, false);
            const Vec tr = tj.G - z;
            if (tr.cwiseAbs().maxCoeff() < r.cwiseAbs().maxCoeff()) {
                y = trial;
                jet = std::move(tj);
                r = tr;
                accepted = true;
            }
        }
        if (!accepted) break;  // stalled
    }
    if (r.cwiseAbs().maxCoeff() <= tol * scale) return y;
    std::ostringstream diag;
    diag << "t=" << t << " residual=" << r.cwiseAbs().maxCoeff() << " z=" << z.transpose()
         << " y=" << y.transpose();
    throw TransformError("inverse transform did not converge", diag.str());
}

void euler_step(const DiscontinuousSdeSpec& spec, Vec& x, double t, double dt, const Vec& dW) {
    const double f = spec.surface(x, t).value;
    x += spec.alpha_side(f)(x, t) * dt + spec.beta(x, t) * dW;
    if (spec.project) spec.project(x);
}

namespace {

void step_impl(const DiscontinuousSdeSpec& spec, Vec& x, double t, double dt, const Vec& dW, NormalStream& rng,
               StepStats& stats, const StepOptions& opts, int depth) {
    const auto bisect = [&] {
        ++stats.substep_warnings;
        Vec dW1(dW.size());
        for (Eigen::Index i = 0; i < dW.size(); ++i) dW1[i] = 0.5 * dW[i] + std::sqrt(0.25 * dt) * rng();
        const Vec dW2 = dW - dW1;
        step_impl(spec, x, t, 0.5 * dt, dW1, rng, stats, opts, depth + 1);
        step_impl(spec, x, t + 0.5 * dt, 0.5 * dt, dW2, rng, stats, opts, depth + 1);
    };
    const bool may_split = depth < opts.max_depth;

    const Vec y = to_hat(spec, x, t);
    const HatCoefficients h = hat_coefficients(spec, y, t);
    const double radius = opts.tube_factor * h.beta.row(0).norm() * std::sqrt(dt);

    if (std::abs(y[0]) <= radius) {
        const auto fallback = [&] {
            euler_step(spec, x, t, dt, dW);
            ++stats.steps;
            ++stats.fallback_steps;
        };
        const double a11 = h.beta.row(0).squaredNorm();
        const double other = hat_coefficients(spec, y, t, -side_of(y[0])).alpha[0];
        const double stiffness = 2.0 * std::max(std::abs(h.alpha[0]), std::abs(other)) / a11 * radius;
        if (!(stiffness <= opts.max_stiffness)) {
            fallback();
            return;
        }
        Vec z_next, guess;
        try {
            const TransformJet jet = transform_jet(spec, y, t, true);
            const Mat a = h.beta * h.beta.transpose();
            Vec drift = jet.grad * h.alpha + jet.dt;
            for (int i = 0; i < spec.dim; ++i) drift[i] += 0.5 * (a.cwiseProduct(jet.hess[i])).sum();
            // The surface outruns the tube: the transformed drift moves Z across it in one step.
            if (!(std::abs(drift[0]) * dt <= radius)) {
                fallback();
                return;
            }
            z_next = jet.G + drift * dt + jet.grad * h.beta * dW;
            guess = y + h.alpha * dt + h.beta * dW;
        } catch (const ContractViolation&) {
            fallback();
            return;
        }
        if (!z_next.allFinite()) {
            fallback();
            return;
        }
        try {
            const Vec y_next = invert_transform(spec, z_next, t + dt, guess);
            x = from_hat(spec, y_next, t + dt);
            if (spec.project) spec.project(x);
            ++stats.steps;
            ++stats.tube_steps;
            return;
        } catch (const TransformError&) {
        } catch (const ContractViolation&) {
        }
        if (depth < std::min(opts.max_depth, opts.max_inversion_depth))
            bisect();
        else
            fallback();
        return;
    }

    Vec next = x + (h.y[0] >= 0.0 ? spec.alpha_plus : spec.alpha_minus)(x, t) * dt + spec.beta(x, t) * dW;
    const double f_next = spec.surface(next, t + dt).value;
    if (side_of(f_next) != side_of(y[0]) && may_split) {
        bisect();
        return;
    }
    x = std::move(next);
    if (spec.project) spec.project(x);
    ++stats.steps;
}

}  // namespace

void transformed_step(const DiscontinuousSdeSpec& spec, Vec& x, double t, double dt, const Vec& dW,
                      NormalStream& rng, StepStats& stats, const StepOptions& opts) {
    step_impl(spec, x, t, dt, dW, rng, stats, opts, 0);
}

const char* to_string(Scheme s) { return s == Scheme::Plain ? "plain" : "transformed"; }

SdePath simulate_transformed(const DiscontinuousSdeSpec& spec, double horizon, double dt, std::uint64_t seed,
                             Scheme scheme, int record_stride, const StepOptions& opts) {
    if (!(dt > 0.0) || !(horizon > 0.0)) throw ContractViolation("simulate_transformed: dt and horizon must be positive");
    if (record_stride < 1) throw ContractViolation("simulate_transformed: record stride must be >= 1");
    const auto steps = static_cast<long>(std::llround(horizon / dt));
    const double h = horizon / static_cast<double>(steps);
    NormalStream noise(stream_seed(seed, 0));
    NormalStream bridge(stream_seed(seed, 1));
    SdePath path;
    Vec x = spec.x0;
    Vec dW(spec.noise_dim);
    const auto record = [&](double t) {
        path.t.push_back(t);
        path.x.push_back(x);
        path.region.push_back(side_of(spec.surface(x, t).value));
    };
    record(0.0);
    for (long n = 0; n < steps; ++n) {
        const double t = n * h;
        for (int i = 0; i < spec.noise_dim; ++i) dW[i] = std::sqrt(h) * noise();
        if (scheme == Scheme::Plain) {
            euler_step(spec, x, t, h, dW);
            ++path.stats.steps;
        } else {
            transformed_step(spec, x, t, h, dW, bridge, path.stats, opts);
        }
        if ((n + 1) % record_stride == 0 || n + 1 == steps) record((n + 1) * h);
    }
    return path;
}

void write_path_csv(std::ostream& os, const SdePath& path) {
    os << "t";
    const Eigen::Index d = path.x.empty() ? 0 : path.x.front().size();
    for (Eigen::Index i = 0; i < d; ++i) os << ",x_" << i + 1;
    os << ",region\n";
    os.precision(17);
    for (std::size_t n = 0; n < path.t.size(); ++n) {
        os << path.t[n];
        for (Eigen::Index i = 0; i < d; ++i) os << ',' << path.x[n][i];
        os << ',' << path.region[n] << '\n';
    }
}

DiscontinuousSdeSpec kinked_ou_spec(double theta, double a, double sigma, double x0) {
    DiscontinuousSdeSpec spec;
    spec.dim = 1;
    spec.noise_dim = 1;
    spec.alpha_plus = [theta, a](const Vec& x, double) { return Vec::Constant(1, -theta * x[0] - a); };
    spec.alpha_minus = [theta, a](const Vec& x, double) { return Vec::Constant(1, -theta * x[0] + a); };
    spec.beta = [sigma](const Vec&, double) { return Mat::Constant(1, 1, sigma); };
    spec.surface = [](const Vec& x, double) {
        SurfaceJet j;
        j.value = x[0];
        j.grad = Vec::Ones(1);
        j.hess = Mat::Zero(1, 1);
        return j;
    };
    spec.inverse = [](double u, const Vec&, double) { return u; };
    spec.x0 = Vec::Constant(1, x0);
    validate_spec(spec, {Vec::Zero(1), spec.x0}, 0.0);
    return spec;
}

}  // namespace esopt
