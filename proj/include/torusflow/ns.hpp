#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "torusflow/field.hpp"
#include "torusflow/operators.hpp"

namespace torusflow {

/// Numerical loss of regularity during time stepping (coefficients left the
/// representable range or crossed the configured sup-norm threshold).
class BlowUpError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Exact reference solution with h(theta) = -A (sin t1 cos t2, -cos t1 sin t2):
/// the field at time s is that shape scaled by exp(-2 nu (T - s)).
inline DivFreeField taylor_green_velocity(double amplitude, double nu, double horizon,
                                          double s, int alpha) {
    const double e = std::exp(-2.0 * nu * (horizon - s));
    const double c = 0.5 * amplitude * e * std::pow(2.0, 0.5 * (alpha + 1));
    DivFreeField f = DivFreeField::zero(alpha, 2);
    f.set({1, 1}, 0.0, -c);
    f.set({1, -1}, 0.0, c);
    return f;
}

/// Pressure paired with taylor_green_velocity:
/// p(s) = (A^2/4) exp(-4 nu (T - s)) (cos 2 t1 + cos 2 t2).
inline ScalarField taylor_green_pressure(double amplitude, double nu, double horizon,
                                         double s) {
    const double c = 0.25 * amplitude * amplitude * std::exp(-4.0 * nu * (horizon - s));
    ScalarField p;
    p.set({2, 0}, c, 0.0);
    p.set({0, 2}, c, 0.0);
    return p;
}

inline DivFreeField laplacian(const DivFreeField& f) {
    DivFreeField out = f;
    out.mean = {0.0, 0.0};
    for (auto& e : out.entries) {
        const double k2 = double(norm_sq<2>(e.k));
        e.a_cos *= -k2;
        e.a_sin *= -k2;
    }
    return out;
}

/// Multiplies every mode by exp(-nu |k|^2 tau) (the heat semigroup).
inline void integrating_factor(DivFreeField& f, double nu, double tau) {
    for (auto& e : f.entries) {
        const double g = std::exp(-nu * double(norm_sq<2>(e.k)) * tau);
        e.a_cos *= g;
        e.a_sin *= g;
    }
}

/// Solves -lap p = -div w for the mean-zero pressure, given w = (u . grad) u.
inline ScalarField pressure_from_advection(const VectorField2& w, int k_max) {
    CoeffBox2 pbox(w.comp[0].half);
    Mode2 m = pbox.first_mode();
    do {
        const long k2 = norm_sq<2>(m);
        if (k2 == 0) continue;
        const std::complex<double> div =
            std::complex<double>(0.0, m[0]) * w.comp[0].at(m) +
            std::complex<double>(0.0, m[1]) * w.comp[1].at(m);
        pbox.at(m) = div / double(k2);
    } while (pbox.next_mode(m));
    return scalar_from_box(pbox, k_max);
}

inline ScalarField pressure_from_velocity(const DivFreeField& u) {
    const auto w = advect(u, u);
    return pressure_from_advection(w, w.comp[0].half[0]);
}

/// Backward solution sampled on a uniform time grid: y[i], p[i] at times[i],
/// with y.back() equal to the prescribed terminal field.
struct NSTrajectory {
    double nu = 0.1;
    int alpha = 3;
    int k_max = 0;
    std::vector<double> times;
    std::vector<DivFreeField> y;
    std::vector<ScalarField> p;

    size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
    double dt() const {
        if (times.size() < 2) throw std::logic_error("NSTrajectory: no steps");
        return (times.back() - times.front()) / double(steps());
    }
};

namespace detail {

/// -P[(u . grad) u] truncated to the solver ball, plus the matching pressure.
inline DivFreeField ns_nonlinearity(const DivFreeField& u, ScalarField* pressure) {
    const auto w = advect(u, u);
    if (pressure) *pressure = pressure_from_advection(w, w.comp[0].half[0]);
    DivFreeField n = leray_project(w, u.alpha, u.k_max);
    n.scale(-1.0);
    return n;
}

}  // namespace detail

/// Integrates the system dy/ds + (y . grad) y + nu lap y + grad p = 0 from the
/// terminal field back to t_start, by running the equivalent dissipative initial
/// value problem for u(t) = -y(horizon - t) forward with integrating-factor RK4.
inline NSTrajectory solve_backward_ns(const DivFreeField& terminal, double nu,
                                      double t_start, double horizon, int n_steps,
                                      double blowup_threshold = 1e6) {
    if (n_steps <= 0) throw std::invalid_argument("solve_backward_ns: n_steps must be positive");
    if (!(horizon > t_start))
        throw std::invalid_argument("solve_backward_ns: horizon must exceed t_start");
    if (nu < 0) throw std::invalid_argument("solve_backward_ns: nu must be >= 0");
    const double dt = (horizon - t_start) / n_steps;
    const double cfl = dt * terminal.sup_bound() * std::max(1, terminal.k_max);
    if (cfl > 1.0)
        throw std::invalid_argument(
            "solve_backward_ns: time step too large for this field (dt * sup * k_max = " +
            std::to_string(cfl) + " > 1)");

    std::vector<DivFreeField> us;
    std::vector<ScalarField> qs;
    us.reserve(size_t(n_steps) + 1);
    qs.resize(size_t(n_steps) + 1);

    DivFreeField u = terminal;
    u.scale(-1.0);
    us.push_back(u);
    for (int j = 0; j < n_steps; ++j) {
        const auto na = detail::ns_nonlinearity(u, &qs[size_t(j)]);

        DivFreeField ub = u;
        ub.axpy(dt / 2, na);
        integrating_factor(ub, nu, dt / 2);
        const auto nb = detail::ns_nonlinearity(ub, nullptr);

        DivFreeField uc = u;
        integrating_factor(uc, nu, dt / 2);
        uc.axpy(dt / 2, nb);
        const auto nc = detail::ns_nonlinearity(uc, nullptr);

        DivFreeField ud = u;
        integrating_factor(ud, nu, dt);
        DivFreeField nce = nc;
        integrating_factor(nce, nu, dt / 2);
        ud.axpy(dt, nce);
        const auto nd = detail::ns_nonlinearity(ud, nullptr);

        integrating_factor(u, nu, dt);
        DivFreeField nae = na;
        integrating_factor(nae, nu, dt);
        u.axpy(dt / 6, nae);
        DivFreeField nbe = nb;
        integrating_factor(nbe, nu, dt / 2);
        u.axpy(dt / 3, nbe);
        u.axpy(dt / 3, nce);
        u.axpy(dt / 6, nd);

        const double sup = u.sup_bound();
        if (!std::isfinite(sup) || sup > blowup_threshold)
            throw BlowUpError("solve_backward_ns: solution blew up at step " +
                              std::to_string(j + 1) + " (sup bound " + std::to_string(sup) +
                              ")");
        us.push_back(u);
    }
    detail::ns_nonlinearity(u, &qs[size_t(n_steps)]);

    NSTrajectory traj;
    traj.nu = nu;
    traj.alpha = terminal.alpha;
    traj.k_max = terminal.k_max;
    traj.times.resize(size_t(n_steps) + 1);
    traj.y.resize(size_t(n_steps) + 1);
    traj.p.resize(size_t(n_steps) + 1);
    for (int i = 0; i <= n_steps; ++i) {
        traj.times[size_t(i)] = t_start + i * dt;
        DivFreeField yi = us[size_t(n_steps - i)];
        yi.scale(-1.0);
        traj.y[size_t(i)] = std::move(yi);
        traj.p[size_t(i)] = std::move(qs[size_t(n_steps - i)]);
    }
    return traj;
}

namespace detail {

inline double ball_l2_sq(const CoeffBox2& box, int k_max) {
    double s = 0;
    Mode2 m = box.first_mode();
    do {
        if (norm_sq<2>(m) <= long(k_max) * k_max) s += std::norm(box.at(m));
    } while (box.next_mode(m));
    return s * two_pi * two_pi;
}

}  // namespace detail

/// L2 norm of d/ds y + (y . grad) y + nu lap y + grad p on the solver's mode ball at
/// one interior time, with the time derivative replaced by a centered finite
/// difference (stencil_order 2 or 4). Modes above k_max carry pure truncation error
/// of the spatial cutoff, so they are excluded from the measurement.
inline std::vector<double> ns_residual_series(const NSTrajectory& traj,
                                              int stencil_order = 2) {
    if (stencil_order != 2 && stencil_order != 4)
        throw std::invalid_argument("ns_residual_series: stencil_order must be 2 or 4");
    const size_t n = traj.times.size();
    std::vector<double> out(n, std::numeric_limits<double>::quiet_NaN());
    if (n < 3) return out;
    const double dt = traj.dt();
    const size_t margin = stencil_order == 2 ? 1 : 2;
    if (n < 2 * margin + 1) return out;
    for (size_t i = margin; i + margin < n; ++i) {
        DivFreeField lin = laplacian(traj.y[i]);
        lin.scale(traj.nu);
        if (stencil_order == 2) {
            lin.axpy(0.5 / dt, traj.y[i + 1]);
            lin.axpy(-0.5 / dt, traj.y[i - 1]);
        } else {
            lin.axpy(-1.0 / (12 * dt), traj.y[i + 2]);
            lin.axpy(8.0 / (12 * dt), traj.y[i + 1]);
            lin.axpy(-8.0 / (12 * dt), traj.y[i - 1]);
            lin.axpy(1.0 / (12 * dt), traj.y[i - 2]);
        }
        const auto w = advect(traj.y[i], traj.y[i]);
        const int half = w.comp[0].half[0];
        const auto pbox = traj.p[i].to_box(half);
        const auto lb = lin.to_boxes(half);
        double sq = 0;
        for (int d = 0; d < 2; ++d) {
            CoeffBox2 r = w.comp[d];
            r.axpy(1.0, pbox.derivative(d));
            r.axpy(1.0, lb[d]);
            sq += detail::ball_l2_sq(r, traj.k_max);
        }
        out[i] = std::sqrt(sq);
    }
    return out;
}

inline double ns_residual(const NSTrajectory& traj, int stencil_order = 2) {
    double worst = 0;
    for (double v : ns_residual_series(traj, stencil_order))
        if (!std::isnan(v)) worst = std::max(worst, v);
    return worst;
}

enum class Quadrature { Trapezoid, FourthOrder };

/// out[i] = integral of v from times[i] to the end, on a uniform grid with spacing dt.
/// FourthOrder uses cubic Newton-Cotes segments (exact for cubics); with fewer than
/// four samples it falls back to the trapezoid rule.
inline std::vector<double> suffix_integral(const std::vector<double>& v, double dt,
                                           Quadrature rule) {
    const size_t n = v.size();
    std::vector<double> out(n, 0.0);
    if (n < 2) return out;
    for (size_t i = n - 1; i-- > 0;) {
        double seg;
        if (rule == Quadrature::Trapezoid || n < 4) {
            seg = dt / 2 * (v[i] + v[i + 1]);
        } else if (i == 0) {
            seg = dt / 24 * (9 * v[0] + 19 * v[1] - 5 * v[2] + v[3]);
        } else if (i + 2 >= n) {
            seg = dt / 24 * (v[n - 4] - 5 * v[n - 3] + 19 * v[n - 2] + 9 * v[n - 1]);
        } else {
            seg = dt / 24 * (-v[i - 1] + 13 * v[i] + 13 * v[i + 1] - v[i + 2]);
        }
        out[i] = out[i + 1] + seg;
    }
    return out;
}

/// Relative defect of ||y(s)||^2 + 2 nu int_s^T ||grad y||^2 dr against the terminal
/// value ||y(T)||^2, per stored time.
inline std::vector<double> energy_defect_series(const NSTrajectory& traj,
                                                Quadrature rule = Quadrature::FourthOrder) {
    const size_t n = traj.times.size();
    std::vector<double> grad(n), l2(n);
    for (size_t i = 0; i < n; ++i) {
        const auto nm = traj.y[i].norms();
        grad[i] = nm.grad_l2_sq;
        l2[i] = nm.l2_sq;
    }
    const auto tail = suffix_integral(grad, traj.dt(), rule);
    const double ref = l2.back();
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i)
        out[i] = std::abs(l2[i] + 2 * traj.nu * tail[i] - ref) / (ref > 0 ? ref : 1.0);
    return out;
}

inline double energy_defect(const NSTrajectory& traj,
                            Quadrature rule = Quadrature::FourthOrder) {
    double worst = 0;
    for (double v : energy_defect_series(traj, rule)) worst = std::max(worst, v);
    return worst;
}

/// Largest pointwise difference from a reference field, measured on a sampling grid.
inline double sup_difference(const DivFreeField& a, const DivFreeField& b, int grid = 48) {
    const auto ga = sample_grid(a, grid);
    const auto gb = sample_grid(b, grid);
    double worst = 0;
    for (size_t p = 0; p < ga[0].size(); ++p)
        worst = std::max(worst, std::hypot(ga[0][p] - gb[0][p], ga[1][p] - gb[1][p]));
    return worst;
}

}  // namespace torusflow
