#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "torusflow/flow.hpp"

namespace torusflow {

/// Adds w times the (real, Hermitian) coefficient series of the box at every table
/// point. Tables must be built at least to the box half-widths.
inline void accumulate_box(const CoeffBox2& box, const TrigTables& tab, double w, double* out) {
    if (tab.max_k < std::max(box.half[0], box.half[1]))
        throw std::invalid_argument("accumulate_box: tables too small for the box");
    const size_t n = tab.n;
    const double mean = box.get({0, 0}).real();
    if (mean != 0)
        for (size_t p = 0; p < n; ++p) out[p] += w * mean;
    for (int k1 = 0; k1 <= box.half[0]; ++k1)
        for (int k2 = (k1 == 0 ? 1 : -box.half[1]); k2 <= box.half[1]; ++k2) {
            const auto c = box.at({k1, k2});
            if (c == std::complex<double>{}) continue;
            const double cw = 2 * w * c.real(), sw = 2 * w * c.imag();
            const double sgn = k2 < 0 ? -1.0 : 1.0;
            const int k2a = std::abs(k2);
            const double* c1 = &tab.c[0][size_t(k1) * n];
            const double* s1 = &tab.s[0][size_t(k1) * n];
            const double* c2 = &tab.c[1][size_t(k2a) * n];
            const double* s2 = &tab.s[1][size_t(k2a) * n];
            for (size_t p = 0; p < n; ++p) {
                const double cs = c1[p] * c2[p] - sgn * s1[p] * s2[p];
                const double sn = s1[p] * c2[p] + sgn * c1[p] * s2[p];
                out[p] += cw * cs - sw * sn;
            }
        }
}

/// Linear interpolation of the stored pressure slices, exact at the nodes.
inline ScalarField interpolate_pressure(const NSTrajectory& traj, double s) {
    if (traj.times.size() < 2)
        throw std::invalid_argument("interpolate_pressure: empty trajectory");
    const double pos = (s - traj.times.front()) / traj.dt();
    const auto last = double(traj.times.size() - 1);
    if (pos <= 0) return traj.p.front();
    if (pos >= last) return traj.p.back();
    const size_t i = size_t(pos);
    const double w = pos - double(i);
    if (w == 0) return traj.p[i];
    const int km = std::max(traj.p[i].k_max, traj.p[i + 1].k_max);
    CoeffBox2 box = traj.p[i].to_box(km);
    for (auto& c : box.a) c *= 1.0 - w;
    box.axpy({w, 0.0}, traj.p[i + 1].to_box(km));
    return scalar_from_box(box, km);
}

/// One common-noise realization: every point is moved by the same increments, so
/// each recorded slice samples a single (numerical) diffeomorphism of the torus.
struct FlowPath {
    double dt = 0;
    std::vector<double> times;
    std::vector<PointSet> z;
    std::vector<std::vector<double>> dW;

    size_t steps() const { return dW.size(); }
};

inline FlowPath record_flow(const NoiseSpec2& spec, const DriftFn& drift, double t_start,
                            int n_steps, PointSet start, BrownianDriver& driver) {
    if (n_steps < 0) throw std::invalid_argument("record_flow: negative step count");
    FlowPath path;
    path.dt = driver.dt();
    path.times.reserve(size_t(n_steps) + 1);
    path.z.reserve(size_t(n_steps) + 1);
    path.dW.reserve(size_t(n_steps));
    const double eps = spec.epsilon();
    FlowScratch scratch;
    PointSet pts = std::move(start);
    path.times.push_back(t_start);
    path.z.push_back(pts);
    std::vector<double> dW(spec.channels().size());
    for (int j = 0; j < n_steps; ++j) {
        driver.increments(uint64_t(j), dW.data());
        const double s = t_start + j * path.dt;
        DivFreeField kick;
        if (drift) {
            const DivFreeField d = drift(s);
            kick = noise_kick(spec, eps, dW, &d, path.dt);
        } else {
            kick = noise_kick(spec, eps, dW, nullptr, path.dt);
        }
        apply_kick(pts, kick, scratch);
        path.dW.push_back(dW);
        path.times.push_back(t_start + (j + 1) * path.dt);
        path.z.push_back(pts);
    }
    return path;
}

/// Values of a 2-vector process at every path point.
struct GridSamples {
    std::vector<double> v0, v1;

    explicit GridSamples(size_t n = 0) : v0(n, 0.0), v1(n, 0.0) {}
};

inline GridSamples lift_y(const DivFreeField& y, const PointSet& pts) {
    GridSamples out(pts.size());
    TrigTables tab;
    tab.build(pts.x0.data(), pts.x1.data(), pts.size(), std::max(y.k_max, 1));
    accumulate_divfree(y, tab, 1.0, out.v0.data(), out.v1.data());
    return out;
}

/// The lifted processes along one recorded flow: Y is the drift evaluated at the
/// moved points, grad_p the driver term, and X one sample per noise channel of the
/// scaled directional derivative (left time points, matching the Ito sums).
struct BsdeTriple {
    FlowPath path;
    std::vector<GridSamples> Y;
    std::vector<GridSamples> grad_p;
    std::vector<std::vector<GridSamples>> X;
    double epsilon = 0;
};

inline BsdeTriple build_triple(const NSTrajectory& traj, FlowPath path, const NoiseSpec2& spec) {
    if (path.times.empty() || path.z.front().size() == 0)
        throw std::invalid_argument("build_triple: empty path");
    BsdeTriple triple;
    const auto chans = spec.channels();
    const double eps = spec.epsilon();
    triple.epsilon = eps;
    const size_t n = path.steps();
    TrigTables tab;
    for (size_t j = 0; j <= n; ++j) {
        const DivFreeField y = interpolate_field(traj, path.times[j]);
        const ScalarField p = interpolate_pressure(traj, path.times[j]);
        const PointSet& pts = path.z[j];
        const int k_tab = std::max({y.k_max + spec.cutoff, p.k_max, 1});
        tab.build(pts.x0.data(), pts.x1.data(), pts.size(), k_tab);
        GridSamples ys(pts.size()), gp(pts.size());
        accumulate_divfree(y, tab, 1.0, ys.v0.data(), ys.v1.data());
        accumulate_scalar_gradient(p, tab, 1.0, gp.v0.data(), gp.v1.data());
        triple.Y.push_back(std::move(ys));
        triple.grad_p.push_back(std::move(gp));
        if (j < n) {
            std::vector<GridSamples> xs;
            xs.reserve(chans.size());
            for (const auto& ch : chans) {
                const auto xf = directional_derivative(ch, y);
                GridSamples x(pts.size());
                accumulate_box(xf.comp[0], tab, eps, x.v0.data());
                accumulate_box(xf.comp[1], tab, eps, x.v1.data());
                xs.push_back(std::move(x));
            }
            triple.X.push_back(std::move(xs));
        }
    }
    triple.path = std::move(path);
    return triple;
}

/// Per-node max over points and components of
///   R_j = Y_j - Y_n - (trapezoid suffix of grad_p) + (left-point suffix of X dW).
inline std::vector<double> bsde_residual_series(const BsdeTriple& triple) {
    const size_t n = triple.path.steps();
    const size_t npts = triple.path.z.front().size();
    const double dt = triple.path.dt;
    std::vector<double> i0(npts, 0.0), i1(npts, 0.0), m0(npts, 0.0), m1(npts, 0.0);
    std::vector<double> out(n + 1, 0.0);
    const auto& yT = triple.Y[n];
    for (size_t j = n + 1; j-- > 0;) {
        if (j < n) {
            for (size_t p = 0; p < npts; ++p) {
                i0[p] += 0.5 * dt * (triple.grad_p[j].v0[p] + triple.grad_p[j + 1].v0[p]);
                i1[p] += 0.5 * dt * (triple.grad_p[j].v1[p] + triple.grad_p[j + 1].v1[p]);
            }
            for (size_t c = 0; c < triple.X[j].size(); ++c) {
                const double dw = triple.path.dW[j][c];
                if (dw == 0) continue;
                const auto& x = triple.X[j][c];
                for (size_t p = 0; p < npts; ++p) {
                    m0[p] += x.v0[p] * dw;
                    m1[p] += x.v1[p] * dw;
                }
            }
        }
        double worst = 0;
        for (size_t p = 0; p < npts; ++p) {
            const double r0 = triple.Y[j].v0[p] - yT.v0[p] - i0[p] + m0[p];
            const double r1 = triple.Y[j].v1[p] - yT.v1[p] - i1[p] + m1[p];
            worst = std::max({worst, std::abs(r0), std::abs(r1)});
        }
        out[j] = worst;
    }
    return out;
}

inline double bsde_residual(const BsdeTriple& triple) {
    double worst = 0;
    for (double v : bsde_residual_series(triple)) worst = std::max(worst, v);
    return worst;
}

/// Relative defect of sum_ch eps^2 |grad_ch y|^2 against 2 nu |grad y|^2, assembled
/// in coefficient space; exact (to roundoff) whenever eps is calibrated to nu.
inline double x_norm_identity_defect(const DivFreeField& y, const NoiseSpec2& spec) {
    const double eps = spec.epsilon();
    double lhs = 0;
    for (const auto& ch : spec.channels())
        lhs += eps * eps * directional_derivative(ch, y).l2_sq();
    const double rhs = 2 * spec.nu * y.norms().grad_l2_sq;
    const double den = std::max(std::abs(lhs), std::abs(rhs));
    return den == 0 ? 0.0 : std::abs(lhs - rhs) / den;
}

/// Rectangle-rule estimate of sum_ch eps^2 |grad_ch y|^2 from samples at the given
/// points. On the uniform starting grid it matches the spectral value to roundoff;
/// after a flow it inherits the flow's volume defect.
inline double x_norm_sampled(const DivFreeField& y, const NoiseSpec2& spec, const PointSet& pts) {
    const double eps = spec.epsilon();
    TrigTables tab;
    tab.build(pts.x0.data(), pts.x1.data(), pts.size(), std::max(y.k_max + spec.cutoff, 1));
    std::vector<double> x0(pts.size()), x1(pts.size());
    double total = 0;
    for (const auto& ch : spec.channels()) {
        const auto xf = directional_derivative(ch, y);
        std::fill(x0.begin(), x0.end(), 0.0);
        std::fill(x1.begin(), x1.end(), 0.0);
        accumulate_box(xf.comp[0], tab, eps, x0.data());
        accumulate_box(xf.comp[1], tab, eps, x1.data());
        for (size_t p = 0; p < pts.size(); ++p) total += x0[p] * x0[p] + x1[p] * x1[p];
    }
    return total * (two_pi * two_pi) / double(pts.size());
}

struct EnergyReport {
    double deterministic_defect = 0;
    double x_norm_defect = 0;
};

/// Both conservation statements for a solved trajectory: the time-integrated balance
/// of |y|^2 against the dissipation, and the per-slice norm identity for X.
inline EnergyReport energy_identities(const NSTrajectory& traj, const NoiseSpec2& spec,
                                      Quadrature rule = Quadrature::FourthOrder) {
    EnergyReport rep;
    rep.deterministic_defect = energy_defect(traj, rule);
    for (const auto& y : traj.y)
        rep.x_norm_defect = std::max(rep.x_norm_defect, x_norm_identity_defect(y, spec));
    return rep;
}

using PressureFn = std::function<ScalarField(double)>;

struct McOptions {
    int samples = 2000;
    int grid = 32;
    uint64_t seed = 1;
    uint64_t family = 10;
    int workers = 1;
};

/// Grid samples of an ensemble average.
struct McField {
    int grid = 0;
    std::vector<double> v0, v1;
};

/// Ensemble average over common-noise flows started from the identity grid:
///   mean over samples of [ h(Z_T(theta)) + trapezoid over nodes of grad p(s, Z_s(theta)) ].
/// Sample m always uses stream (family, m) and contributions are reduced in sample
/// order, so the result is independent of the worker count.
inline McField mc_average(const DivFreeField& h, const DriftFn& drift, const PressureFn& pressure,
                          const NoiseSpec2& spec, double t_start, double horizon, int n_steps,
                          const McOptions& opt) {
    if (opt.samples <= 0) throw std::invalid_argument("mc_average: needs at least one sample");
    if (opt.grid <= 0) throw std::invalid_argument("mc_average: grid must be positive");
    if (n_steps < 0 || horizon < t_start)
        throw std::invalid_argument("mc_average: bad time range");
    const size_t npts = size_t(opt.grid) * size_t(opt.grid);
    const auto chans = spec.channels();
    const double eps = spec.epsilon();
    const double dt = n_steps > 0 ? (horizon - t_start) / n_steps : 0.0;
    const PointSet start = identity_grid(opt.grid);

    // per-node kick templates: the entry set never changes within a node, only the
    // channel weights do, so each step reuses the template and patches the slots
    struct KickPlan {
        DivFreeField base;
        std::vector<int> slot;
        std::vector<double> scale;
    };
    std::vector<KickPlan> plans(size_t(n_steps) + 1);
    std::vector<ScalarField> p_nodes(size_t(n_steps) + 1);
    for (int j = 0; j <= n_steps; ++j) {
        const double s = t_start + j * dt;
        if (pressure) p_nodes[size_t(j)] = pressure(s);
        auto& plan = plans[size_t(j)];
        if (drift) {
            const DivFreeField d = drift(s);
            plan.base = DivFreeField::zero(d.alpha, std::max(spec.cutoff, d.k_max));
            plan.base.axpy(dt, d);
        } else {
            plan.base = DivFreeField::zero(spec.alpha, std::max(spec.cutoff, 1));
        }
        const int alpha = plan.base.alpha;
        for (const auto& ch : chans)
            if (!is_zero<2>(ch.k)) {
                bool present = false;
                for (const auto& e : plan.base.entries) present = present || e.k == ch.k;
                if (!present) plan.base.entries.push_back({ch.k, 0.0, 0.0});
            }
        plan.base.sort_entries();
        for (const auto& ch : chans) {
            if (is_zero<2>(ch.k)) {
                plan.slot.push_back(-1);
                plan.scale.push_back(eps);
                continue;
            }
            int idx = 0;
            while (!(plan.base.entries[size_t(idx)].k == ch.k)) ++idx;
            plan.slot.push_back(idx);
            plan.scale.push_back(
                eps * std::pow(double(norm_sq<2>(ch.k)), double(alpha - spec.alpha) / 2));
        }
    }

    const size_t m_total = size_t(opt.samples);
    std::vector<std::vector<double>> c0(m_total), c1(m_total);
    const auto run_block = [&](size_t lo, size_t hi) {
        FlowScratch scratch;
        std::vector<double> dW(chans.size());
        DivFreeField kick;
        for (size_t m = lo; m < hi; ++m) {
            PointSet pts = start;
            BrownianDriver driver{CounterRng{opt.seed}, stream_id(opt.family, uint64_t(m)),
                                  dt > 0 ? dt : 1.0, 1, int(chans.size())};
            auto& s0 = c0[m];
            auto& s1 = c1[m];
            s0.assign(npts, 0.0);
            s1.assign(npts, 0.0);
            for (int j = 0; j < n_steps; ++j) {
                driver.increments(uint64_t(j), dW.data());
                const auto& plan = plans[size_t(j)];
                kick = plan.base;
                for (size_t i = 0; i < chans.size(); ++i) {
                    const double w = plan.scale[i] * dW[i];
                    if (plan.slot[i] < 0) {
                        kick.mean[chans[i].kind == Kind::A ? 0 : 1] += w;
                    } else {
                        auto& e = kick.entries[size_t(plan.slot[i])];
                        (chans[i].kind == Kind::A ? e.a_cos : e.a_sin) += w;
                    }
                }
                const int k_tab = std::max({kick.k_max, p_nodes[size_t(j)].k_max, 1});
                scratch.tab.build(pts.x0.data(), pts.x1.data(), npts, k_tab);
                accumulate_scalar_gradient(p_nodes[size_t(j)], scratch.tab,
                                           j == 0 ? 0.5 * dt : dt, s0.data(), s1.data());
                scratch.d0.assign(npts, 0.0);
                scratch.d1.assign(npts, 0.0);
                accumulate_divfree(kick, scratch.tab, 1.0, scratch.d0.data(), scratch.d1.data());
                for (size_t p = 0; p < npts; ++p) {
                    pts.x0[p] += scratch.d0[p];
                    pts.x1[p] += scratch.d1[p];
                }
            }
            const int k_end = std::max({h.k_max, p_nodes[size_t(n_steps)].k_max, 1});
            scratch.tab.build(pts.x0.data(), pts.x1.data(), npts, k_end);
            if (n_steps > 0)
                accumulate_scalar_gradient(p_nodes[size_t(n_steps)], scratch.tab, 0.5 * dt,
                                           s0.data(), s1.data());
            accumulate_divfree(h, scratch.tab, 1.0, s0.data(), s1.data());
        }
    };

    const int workers = std::max(1, opt.workers);
    if (workers == 1 || m_total < 2) {
        run_block(0, m_total);
    } else {
        std::vector<std::thread> pool;
        const size_t per = (m_total + size_t(workers) - 1) / size_t(workers);
        for (size_t lo = 0; lo < m_total; lo += per)
            pool.emplace_back(run_block, lo, std::min(lo + per, m_total));
        for (auto& t : pool) t.join();
    }

    McField out;
    out.grid = opt.grid;
    out.v0.assign(npts, 0.0);
    out.v1.assign(npts, 0.0);
    for (size_t m = 0; m < m_total; ++m)
        for (size_t p = 0; p < npts; ++p) {
            out.v0[p] += c0[m][p];
            out.v1[p] += c1[m][p];
        }
    const double inv = 1.0 / double(m_total);
    for (size_t p = 0; p < npts; ++p) {
        out.v0[p] *= inv;
        out.v1[p] *= inv;
    }
    return out;
}

/// Band-limits the sampled average and keeps only its divergence-free part.
inline DivFreeField project_samples(const McField& f, int alpha, int k_max) {
    if (f.grid < 2 * k_max + 1)
        throw std::invalid_argument("project_samples: band exceeds the sample grid");
    const std::array<CoeffBox2, 2> boxes{from_grid<2>(f.v0, f.grid, {k_max, k_max}),
                                         from_grid<2>(f.v1, f.grid, {k_max, k_max})};
    return leray_project_boxes(boxes, alpha, k_max);
}

struct RepresentationResult {
    DivFreeField estimate;
    McField raw;
    double sup_error = std::numeric_limits<double>::quiet_NaN();
    double l2_error = std::numeric_limits<double>::quiet_NaN();
};

/// Estimates the drift at t_start from its terminal value and the pressure-gradient
/// running cost, then compares against a reference field when one is supplied.
inline RepresentationResult representation_formula(const DivFreeField& h, const DriftFn& drift,
                                                   const PressureFn& pressure,
                                                   const NoiseSpec2& spec, double t_start,
                                                   double horizon, int n_steps,
                                                   const McOptions& opt,
                                                   const DivFreeField* reference = nullptr,
                                                   int k_out = -1) {
    RepresentationResult res;
    res.raw = mc_average(h, drift, pressure, spec, t_start, horizon, n_steps, opt);
    if (k_out < 0) k_out = reference ? reference->k_max : h.k_max;
    res.estimate = project_samples(res.raw, h.alpha, k_out);
    if (reference) {
        res.sup_error = sup_difference(res.estimate, *reference, opt.grid);
        DivFreeField diff = res.estimate;
        diff.axpy(-1.0, *reference);
        res.l2_error = std::sqrt(diff.norms().l2_sq);
    }
    return res;
}

/// Convenience form: the drift, pressure, terminal value and reference all come from
/// one solved trajectory, with the flow stepping on the trajectory's own time grid.
inline RepresentationResult representation_formula(const NSTrajectory& traj,
                                                   const NoiseSpec2& spec,
                                                   const McOptions& opt) {
    const DriftFn drift = [&traj](double s) { return interpolate_field(traj, s); };
    const PressureFn pressure = [&traj](double s) { return interpolate_pressure(traj, s); };
    return representation_formula(traj.y.back(), drift, pressure, spec, traj.times.front(),
                                  traj.times.back(), int(traj.steps()), opt, &traj.y.front(),
                                  traj.k_max);
}

struct PicardOptions {
    int coarse_steps = 16;
    int substeps = 8;
    int samples = 2000;
    int grid = 16;
    int max_iters = 8;
    double tol = 0.0;
    uint64_t seed = 1;
    int workers = 1;
    int k_out = -1;
};

struct PicardState {
    std::vector<double> times;
    std::vector<DivFreeField> y;
    std::vector<double> history;
    bool diverged = false;
    int iterations = 0;
};

/// Fixed-point recovery of the drift from its terminal value and a prescribed
/// pressure. Each sweep re-estimates y at every coarse node from ensembles of flows
/// restarted there under the previous iterate; sweeps stop at the iteration cap, at
/// tol, or once the update grows three times in a row. Divergence is reported, never
/// thrown: either running growth, or a positive tol that was never reached (updates
/// stay bounded when the terminal value is bounded, so a stalled plateau above tol
/// is the usual signature of a horizon past the contraction range).
inline PicardState picard_solve(const DivFreeField& h, const PressureFn& pressure,
                                const NoiseSpec2& spec, double t_start, double horizon,
                                const PicardOptions& opt) {
    if (opt.coarse_steps < 1 || opt.substeps < 1)
        throw std::invalid_argument("picard_solve: bad time discretization");
    if (horizon <= t_start) throw std::invalid_argument("picard_solve: empty horizon");
    if (opt.max_iters < 1) throw std::invalid_argument("picard_solve: needs an iteration");
    const int nc = opt.coarse_steps;
    const double coarse_dt = (horizon - t_start) / nc;
    const int k_out = opt.k_out > 0 ? opt.k_out : h.k_max;

    PicardState st;
    st.times.resize(size_t(nc) + 1);
    for (int i = 0; i <= nc; ++i) st.times[size_t(i)] = t_start + i * coarse_dt;
    st.y.assign(st.times.size(), DivFreeField::zero(h.alpha, std::max(k_out, 1)));
    st.y.back() = h;

    bool met_tol = false;
    for (int m = 0; m < opt.max_iters; ++m) {
        const auto nodes = st.y;
        const auto times = st.times;
        const DriftFn drift = [nodes, times, coarse_dt](double s) {
            const double pos = (s - times.front()) / coarse_dt;
            const auto last = double(times.size() - 1);
            if (pos <= 0) return nodes.front();
            if (pos >= last) return nodes.back();
            const size_t i = size_t(pos);
            const double w = pos - double(i);
            if (w == 0) return nodes[i];
            DivFreeField out = nodes[i];
            out.scale(1.0 - w);
            out.axpy(w, nodes[i + 1]);
            return out;
        };

        std::vector<DivFreeField> next(st.y.size(), DivFreeField::zero(h.alpha, 1));
        next.back() = h;
        double worst = 0;
        bool finite = true;
        for (int i = 0; i < nc; ++i) {
            McOptions mo;
            mo.samples = opt.samples;
            mo.grid = opt.grid;
            mo.seed = opt.seed;
            // fresh increments for every (sweep, restart, sample)
            mo.family = 1000 + uint64_t(m) * 64 + uint64_t(i);
            mo.workers = opt.workers;
            const auto raw = mc_average(h, drift, pressure, spec, st.times[size_t(i)], horizon,
                                        (nc - i) * opt.substeps, mo);
            next[size_t(i)] = project_samples(raw, h.alpha, k_out);
            const double d = sup_difference(next[size_t(i)], st.y[size_t(i)], opt.grid);
            if (!std::isfinite(d)) finite = false;
            worst = std::max(worst, d);
        }
        st.y = std::move(next);
        st.history.push_back(worst);
        st.iterations = m + 1;
        if (!finite) {
            st.diverged = true;
            break;
        }
        const size_t hn = st.history.size();
        if (hn >= 4 && st.history[hn - 1] > st.history[hn - 2] &&
            st.history[hn - 2] > st.history[hn - 3] &&
            st.history[hn - 3] > st.history[hn - 4]) {
            st.diverged = true;
            break;
        }
        if (opt.tol > 0 && worst <= opt.tol) {
            met_tol = true;
            break;
        }
    }
    if (!st.diverged && opt.tol > 0 && !met_tol) st.diverged = true;
    if (!st.diverged && opt.tol <= 0 && st.history.size() >= 2 &&
        st.history.back() > st.history.front())
        st.diverged = true;
    return st;
}

/// Worst sup distance between the iterate and a reference trajectory at the coarse nodes.
inline double picard_error(const PicardState& st, const NSTrajectory& traj, int grid) {
    double worst = 0;
    for (size_t i = 0; i < st.times.size(); ++i)
        worst = std::max(worst, sup_difference(st.y[i], interpolate_field(traj, st.times[i]), grid));
    return worst;
}

}  // namespace torusflow
