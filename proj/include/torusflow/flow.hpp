#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "torusflow/field.hpp"
#include "torusflow/ns.hpp"
#include "torusflow/operators.hpp"
#include "torusflow/rng.hpp"

namespace torusflow {

/// Particle positions, stored unwrapped so trajectories stay continuous; all fields
/// are 2 pi periodic, so evaluation never needs wrapping.
struct PointSet {
    std::vector<double> x0, x1;

    size_t size() const { return x0.size(); }
    void shift(double d0, double d1) {
        for (auto& v : x0) v += d0;
        for (auto& v : x1) v += d1;
    }
};

/// Uniform G x G starting grid, row-major with the first coordinate outermost.
inline PointSet identity_grid(int grid) {
    PointSet p;
    p.x0.reserve(size_t(grid) * grid);
    p.x1.reserve(size_t(grid) * grid);
    for (int j0 = 0; j0 < grid; ++j0)
        for (int j1 = 0; j1 < grid; ++j1) {
            p.x0.push_back(two_pi * j0 / grid);
            p.x1.push_back(two_pi * j1 / grid);
        }
    return p;
}

inline double wrap_to_pi(double d) {
    d = std::remainder(d, two_pi);
    return d;
}

inline double torus_distance(double a0, double a1, double b0, double b1) {
    return std::hypot(wrap_to_pi(a0 - b0), wrap_to_pi(a1 - b1));
}

/// Merges one step's deterministic displacement drift*dt with the noise increments
/// (scaled channel coefficients) into a single field, so the step needs one
/// evaluation pass. dW holds one increment per channel in the frozen channel order.
inline DivFreeField noise_kick(const NoiseSpec2& spec, double eps,
                               const std::vector<double>& dW, const DivFreeField* drift,
                               double dt) {
    const auto chans = spec.channels();
    if (dW.size() != chans.size())
        throw std::invalid_argument("noise_kick: wrong number of increments");
    const int alpha = drift ? drift->alpha : spec.alpha;
    DivFreeField kick = DivFreeField::zero(alpha, std::max(spec.cutoff, drift ? drift->k_max : 0));
    if (drift) kick.axpy(dt, *drift);
    for (size_t i = 0; i < chans.size(); ++i) {
        const auto& ch = chans[i];
        // coefficients in the kick are read with the kick's own decay exponent
        const double convert =
            is_zero<2>(ch.k) ? 1.0
                             : std::pow(double(norm_sq<2>(ch.k)), double(alpha - spec.alpha) / 2);
        const double w = eps * dW[i] * convert;
        if (w == 0) continue;
        if (is_zero<2>(ch.k)) {
            kick.mean[ch.kind == Kind::A ? 0 : 1] += w;
            continue;
        }
        bool found = false;
        for (auto& e : kick.entries)
            if (e.k == ch.k) {
                (ch.kind == Kind::A ? e.a_cos : e.a_sin) += w;
                found = true;
                break;
            }
        if (!found)
            kick.entries.push_back({ch.k, ch.kind == Kind::A ? w : 0.0,
                                    ch.kind == Kind::B ? w : 0.0});
    }
    kick.sort_entries();
    return kick;
}

/// Scratch buffers reused across steps.
struct FlowScratch {
    TrigTables tab;
    std::vector<double> d0, d1;
};

/// One Euler step under a shared kick field: x += kick(x). The noise fields are
/// constant along their own flow direction, so the Ito and Stratonovich updates
/// coincide and no drift correction is applied.
inline void apply_kick(PointSet& pts, const DivFreeField& kick, FlowScratch& scratch) {
    const size_t n = pts.size();
    scratch.tab.build(pts.x0.data(), pts.x1.data(), n, kick.k_max);
    scratch.d0.assign(n, 0.0);
    scratch.d1.assign(n, 0.0);
    accumulate_divfree(kick, scratch.tab, 1.0, scratch.d0.data(), scratch.d1.data());
    for (size_t p = 0; p < n; ++p) {
        pts.x0[p] += scratch.d0[p];
        pts.x1[p] += scratch.d1[p];
    }
}

using DriftFn = std::function<DivFreeField(double)>;

/// Evolves a common-noise flow: every point sees the same Brownian increments, so the
/// result is a (numerical) volume-preserving diffeomorphism of the torus.
inline PointSet simulate_flow(const NoiseSpec2& spec, const DriftFn& drift, double t_start,
                              int n_steps, PointSet pts, BrownianDriver& driver) {
    const double dt = driver.dt();
    const double eps = spec.epsilon();
    FlowScratch scratch;
    std::vector<double> dW(spec.channels().size());
    for (int j = 0; j < n_steps; ++j) {
        driver.increments(uint64_t(j), dW.data());
        const double s = t_start + j * dt;
        DivFreeField kick;
        if (drift) {
            const DivFreeField d = drift(s);
            kick = noise_kick(spec, eps, dW, &d, dt);
        } else {
            kick = noise_kick(spec, eps, dW, nullptr, dt);
        }
        apply_kick(pts, kick, scratch);
    }
    return pts;
}

/// One Euler step where each path carries its own increments (dW is channel-major:
/// dW[ch * n_paths + p]). The drift field is still shared.
inline void em_step_paths(PointSet& pts, const DivFreeField* drift, double dt,
                          const NoiseSpec2& spec, double eps, const std::vector<double>& dW,
                          FlowScratch& scratch) {
    const size_t n = pts.size();
    const auto chans = spec.channels();
    if (dW.size() != chans.size() * n)
        throw std::invalid_argument("em_step_paths: wrong increment layout");
    const int kmax = std::max(spec.cutoff, drift ? drift->k_max : 0);
    scratch.tab.build(pts.x0.data(), pts.x1.data(), n, kmax);
    scratch.d0.assign(n, 0.0);
    scratch.d1.assign(n, 0.0);
    if (drift) accumulate_divfree(*drift, scratch.tab, dt, scratch.d0.data(), scratch.d1.data());
    for (size_t i = 0; i < chans.size(); ++i) {
        const auto& ch = chans[i];
        const double* w = &dW[i * n];
        if (is_zero<2>(ch.k)) {
            double* out = ch.kind == Kind::A ? scratch.d0.data() : scratch.d1.data();
            for (size_t p = 0; p < n; ++p) out[p] += eps * w[p];
            continue;
        }
        const int k1 = ch.k[0], k2 = std::abs(ch.k[1]);
        const double sgn = ch.k[1] < 0 ? -1.0 : 1.0;
        const double amp = eps * std::pow(double(norm_sq<2>(ch.k)), -double(spec.alpha + 1) / 2);
        const Mode2 kp = perp(ch.k);
        const double a0 = amp * kp[0], a1 = amp * kp[1];
        const double* c1 = &scratch.tab.c[0][size_t(k1) * n];
        const double* s1 = &scratch.tab.s[0][size_t(k1) * n];
        const double* c2 = &scratch.tab.c[1][size_t(k2) * n];
        const double* s2 = &scratch.tab.s[1][size_t(k2) * n];
        if (ch.kind == Kind::A) {
            for (size_t p = 0; p < n; ++p) {
                const double prof = c1[p] * c2[p] - sgn * s1[p] * s2[p];
                scratch.d0[p] += w[p] * prof * a0;
                scratch.d1[p] += w[p] * prof * a1;
            }
        } else {
            for (size_t p = 0; p < n; ++p) {
                const double prof = s1[p] * c2[p] + sgn * c1[p] * s2[p];
                scratch.d0[p] += w[p] * prof * a0;
                scratch.d1[p] += w[p] * prof * a1;
            }
        }
    }
    for (size_t p = 0; p < n; ++p) {
        pts.x0[p] += scratch.d0[p];
        pts.x1[p] += scratch.d1[p];
    }
}

/// Linear interpolation between stored time slots.
inline DivFreeField interpolate_field(const NSTrajectory& traj, double s) {
    if (traj.times.size() < 2) throw std::invalid_argument("interpolate_field: empty trajectory");
    const double pos = (s - traj.times.front()) / traj.dt();
    const auto last = double(traj.times.size() - 1);
    if (pos <= 0) return traj.y.front();
    if (pos >= last) return traj.y.back();
    const size_t i = size_t(pos);
    const double w = pos - double(i);
    if (w == 0) return traj.y[i];
    DivFreeField out = traj.y[i];
    out.scale(1.0 - w);
    out.axpy(w, traj.y[i + 1]);
    return out;
}

struct VolumeStats {
    double mean_abs = 0, max_abs = 0;
};

/// Jacobian determinant defect of the flow map, from centered differences of the
/// (periodic) displacement on the starting grid.
inline VolumeStats volume_distortion(const PointSet& flowed, int grid) {
    if (flowed.size() != size_t(grid) * grid)
        throw std::invalid_argument("volume_distortion: point count does not match grid");
    const double h = two_pi / grid;
    const size_t n = flowed.size();
    std::vector<double> u0(n), u1(n);
    for (int j0 = 0; j0 < grid; ++j0)
        for (int j1 = 0; j1 < grid; ++j1) {
            const size_t p = size_t(j0) * grid + size_t(j1);
            u0[p] = flowed.x0[p] - two_pi * j0 / grid;
            u1[p] = flowed.x1[p] - two_pi * j1 / grid;
        }
    const auto idx = [grid](int j0, int j1) {
        return size_t((j0 + grid) % grid) * grid + size_t((j1 + grid) % grid);
    };
    VolumeStats stats;
    double total = 0;
    for (int j0 = 0; j0 < grid; ++j0)
        for (int j1 = 0; j1 < grid; ++j1) {
            const double g00 = (u0[idx(j0 + 1, j1)] - u0[idx(j0 - 1, j1)]) / (2 * h);
            const double g01 = (u0[idx(j0, j1 + 1)] - u0[idx(j0, j1 - 1)]) / (2 * h);
            const double g10 = (u1[idx(j0 + 1, j1)] - u1[idx(j0 - 1, j1)]) / (2 * h);
            const double g11 = (u1[idx(j0, j1 + 1)] - u1[idx(j0, j1 - 1)]) / (2 * h);
            const double det = (1 + g00) * (1 + g11) - g01 * g10;
            const double defect = std::abs(det - 1.0);
            total += defect;
            stats.max_abs = std::max(stats.max_abs, defect);
        }
    stats.mean_abs = total / double(n);
    return stats;
}

namespace detail {

/// Periodic bilinear interpolation of a grid function (row-major, first coordinate
/// outermost, spacing 2 pi / G).
inline double bilinear_periodic(const std::vector<double>& v, int grid, double t0, double t1) {
    const double g = grid / two_pi;
    double f0 = t0 * g, f1 = t1 * g;
    f0 -= std::floor(f0 / grid) * grid;
    f1 -= std::floor(f1 / grid) * grid;
    const int i0 = int(f0) % grid, i1 = int(f1) % grid;
    const double w0 = f0 - std::floor(f0), w1 = f1 - std::floor(f1);
    const auto at = [&](int a, int b) {
        return v[size_t((a + grid) % grid) * grid + size_t((b + grid) % grid)];
    };
    return (1 - w0) * (1 - w1) * at(i0, i1) + w0 * (1 - w1) * at(i0 + 1, i1) +
           (1 - w0) * w1 * at(i0, i1 + 1) + w0 * w1 * at(i0 + 1, i1 + 1);
}

}  // namespace detail

/// Flows the identity grid and the grid shifted by xi under the same noise, and
/// measures how far the shifted flow is from the original flow composed with the
/// shift (estimated by bilinear interpolation of the displacement). Exact transport
/// makes this zero; the reported defect is dominated by interpolation error.
inline double right_translation_defect(const NoiseSpec2& spec, const DriftFn& drift,
                                       double t_start, int n_steps, int grid,
                                       std::array<double, 2> xi, uint64_t seed,
                                       uint64_t stream, double dt) {
    const size_t n = size_t(grid) * grid;
    const CounterRng rng{seed};
    BrownianDriver da{rng, stream, dt, 1, int(spec.channels().size())};
    const PointSet base = identity_grid(grid);
    const PointSet flowed = simulate_flow(spec, drift, t_start, n_steps, base, da);

    PointSet shifted_start = base;
    shifted_start.shift(xi[0], xi[1]);
    BrownianDriver db{rng, stream, dt, 1, int(spec.channels().size())};
    const PointSet shifted = simulate_flow(spec, drift, t_start, n_steps, shifted_start, db);

    std::vector<double> u0(n), u1(n);
    for (size_t p = 0; p < n; ++p) {
        u0[p] = flowed.x0[p] - base.x0[p];
        u1[p] = flowed.x1[p] - base.x1[p];
    }
    double worst = 0;
    for (size_t p = 0; p < n; ++p) {
        const double t0 = base.x0[p] + xi[0], t1 = base.x1[p] + xi[1];
        const double e0 = t0 + detail::bilinear_periodic(u0, grid, t0, t1);
        const double e1 = t1 + detail::bilinear_periodic(u1, grid, t0, t1);
        worst = std::max(worst, torus_distance(shifted.x0[p], shifted.x1[p], e0, e1));
    }
    return worst;
}

}  // namespace torusflow
