#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "torusflow/field.hpp"
#include "torusflow/lattice.hpp"
#include "torusflow/spectral.hpp"

namespace torusflow {

/// Components of a general (not necessarily divergence-free) vector field.
template <int N>
struct VectorBoxes {
    std::array<CoeffBox<N>, N> comp;

    double l2_sq() const {
        double s = 0;
        for (const auto& c : comp) s += c.l2_sq();
        return s;
    }
};

using VectorField2 = VectorBoxes<2>;
using VectorField3 = VectorBoxes<3>;

/// max_m |sum_d m_d comp_d(m)| over the box; zero for divergence-free fields.
template <int N>
inline double divergence_defect(const VectorBoxes<N>& v) {
    double worst = 0;
    Mode<N> m = v.comp[0].first_mode();
    do {
        std::complex<double> div{};
        for (int d = 0; d < N; ++d)
            div += std::complex<double>(0.0, double(m[d])) * v.comp[d].get(m);
        worst = std::max(worst, std::abs(div));
    } while (v.comp[0].next_mode(m));
    return worst;
}

/// (u . grad) v computed pseudo-spectrally on a G^N grid; retained modes (per-dim
/// bandwidth K_keep) are alias-free as long as K_keep <= G - K_u - K_v - 1.
template <int N>
inline VectorBoxes<N> advect_boxes(const std::array<CoeffBox<N>, N>& u,
                                   const std::array<CoeffBox<N>, N>& v, int grid,
                                   int keep) {
    int ku = 0, kv = 0;
    for (int d = 0; d < N; ++d)
        for (int e = 0; e < N; ++e) {
            ku = std::max(ku, u[d].half[e]);
            kv = std::max(kv, v[d].half[e]);
        }
    if (keep > grid - ku - kv - 1)
        throw std::invalid_argument("advect_boxes: grid too small for alias-free output");
    std::array<std::vector<double>, N> ug;
    for (int d = 0; d < N; ++d) ug[d] = to_grid<N>(u[d], grid);
    VectorBoxes<N> out;
    std::vector<double> w;
    for (int c = 0; c < N; ++c) {
        w.assign(ug[0].size(), 0.0);
        for (int d = 0; d < N; ++d) {
            const auto dv = to_grid<N>(v[c].derivative(d), grid);
            for (size_t i = 0; i < w.size(); ++i) w[i] += ug[d][i] * dv[i];
        }
        std::array<int, N> half;
        half.fill(keep);
        out.comp[c] = from_grid<N>(w, grid, half);
    }
    return out;
}

/// (u . grad) v for pair-basis fields on their stored product resolution, dealiased by
/// keeping only modes the grid resolves without contamination (2/3-style truncation).
inline VectorField2 advect(const DivFreeField& u, const DivFreeField& v) {
    if (u.alpha != v.alpha) throw std::invalid_argument("advect: alpha mismatch");
    if (u.resolution != v.resolution)
        throw std::invalid_argument("advect: resolution mismatch");
    const int grid = u.resolution;
    const int keep = std::min(u.k_max + v.k_max, grid - u.k_max - v.k_max - 1);
    if (keep < 0) throw std::invalid_argument("advect: resolution too small");
    return advect_boxes<2>(u.to_boxes(), v.to_boxes(), grid, keep);
}

inline DivFreeField leray_project(const VectorField2& v, int alpha, int k_max) {
    return leray_project_boxes(v.comp, alpha, k_max);
}

namespace detail {

/// profile(k.theta) * w, exact in coefficient space: multiplying by cos/sin shifts
/// modes by +-k. Grows the box by |k| per dimension.
template <int N>
inline CoeffBox<N> profile_multiply(const CoeffBox<N>& w, const Mode<N>& k, Kind kind) {
    std::array<int, N> half;
    for (int d = 0; d < N; ++d) half[d] = w.half[d] + std::abs(k[d]);
    CoeffBox<N> out(half);
    const std::complex<double> plus =
        kind == Kind::A ? std::complex<double>(0.5, 0.0) : std::complex<double>(0.0, -0.5);
    const std::complex<double> minus = std::conj(plus);
    Mode<N> m = w.first_mode();
    do {
        const auto c = w.at(m);
        if (c != std::complex<double>{}) {
            Mode<N> up, down;
            for (int d = 0; d < N; ++d) {
                up[d] = m[d] + k[d];
                down[d] = m[d] - k[d];
            }
            out.at(up) += plus * c;
            out.at(down) += minus * c;
        }
    } while (w.next_mode(m));
    return out;
}

}  // namespace detail

/// Direction and amplitude of one noise channel as plain doubles.
template <int N>
inline std::pair<std::array<double, N>, double> channel_direction(const Channel<N>& ch,
                                                                  int alpha) {
    std::array<double, N> dir{};
    if (is_zero<N>(ch.k)) {
        const int axis = N == 2 ? (ch.kind == Kind::A ? 0 : 1) : ch.slot - 1;
        dir[axis] = 1.0;
        return {dir, 1.0};
    }
    if constexpr (N == 2) {
        const Mode2 kp = perp(ch.k);
        dir = {double(kp[0]), double(kp[1])};
    } else {
        dir = orthogonal_frame<N>(ch.k)[ch.slot - 1];
    }
    return {dir, std::pow(norm<N>(ch.k), -double(alpha + 1))};
}

/// Exact directional derivative along one noise channel field:
/// (scale * profile(k.theta) * dir . grad) w, one component box at a time.
template <int N>
inline CoeffBox<N> channel_derivative_box(const CoeffBox<N>& w, const Channel<N>& ch,
                                          int alpha) {
    const auto [dir, scale] = channel_direction<N>(ch, alpha);
    CoeffBox<N> dw(w.half);
    Mode<N> m = w.first_mode();
    size_t i = 0;
    do {
        double dm = 0;
        for (int d = 0; d < N; ++d) dm += dir[d] * m[d];
        dw.a[i] = w.a[i] * std::complex<double>(0.0, dm);
        ++i;
    } while (w.next_mode(m));
    if (is_zero<N>(ch.k)) return dw;
    auto out = detail::profile_multiply<N>(dw, ch.k, ch.kind);
    for (auto& c : out.a) c *= scale;
    return out;
}

/// (channel field . grad) applied to a pair-basis field; exact.
inline VectorField2 directional_derivative(const Channel<2>& ch, const DivFreeField& y) {
    const auto boxes = y.to_boxes();
    return {channel_derivative_box<2>(boxes[0], ch, y.alpha),
            channel_derivative_box<2>(boxes[1], ch, y.alpha)};
}

/// Relative L2 defect of (eps^2/2) sum_channels grad_ch grad_ch V against nu * Lap V,
/// both sides assembled exactly in coefficient space.
template <int N>
inline double laplacian_identity_defect(const std::array<CoeffBox<N>, N>& v,
                                        const NoiseSpec<N>& spec) {
    std::array<int, N> pad;
    for (int d = 0; d < N; ++d) pad[d] = v[0].half[d] + 2 * spec.cutoff;
    const double eps = spec.epsilon();
    const double half_eps_sq = eps * eps / 2.0;

    double num = 0, den = 0;
    for (int c = 0; c < N; ++c) {
        CoeffBox<N> acc(pad);
        for (const auto& ch : spec.channels()) {
            const auto w1 = channel_derivative_box<N>(v[c], ch, spec.alpha);
            const auto w2 = channel_derivative_box<N>(w1, ch, spec.alpha);
            acc.axpy(half_eps_sq, w2.grown(pad));
        }
        CoeffBox<N> target(pad);
        Mode<N> m = v[c].first_mode();
        do {
            target.at(m) = -spec.nu * double(norm_sq<N>(m)) * v[c].at(m);
        } while (v[c].next_mode(m));
        den += target.l2_sq();
        acc.axpy(-1.0, target);
        num += acc.l2_sq();
    }
    if (den == 0) return 0.0;
    return std::sqrt(num / den);
}

inline double laplacian_identity_defect(const DivFreeField& v, const NoiseSpec<2>& spec) {
    return laplacian_identity_defect<2>(v.to_boxes(), spec);
}

/// Self-advection of every noise channel field; the continuum value is identically
/// zero (profiles are constant along their own perp direction), so the Stratonovich
/// and Ito forms of the particle transport coincide. Returns the largest L2 norm of
/// sum over kinds of (channel . grad) channel across modes, computed via advect.
template <int N>
inline double strat_ito_correction(const NoiseSpec<N>& spec) {
    double worst = 0;
    for (const auto& k : modes_up_to<N>(spec.cutoff, true)) {
        double mode_total = 0;
        for (int slot = 1; slot <= (is_zero<N>(k) ? (N == 2 ? 1 : N) : N - 1); ++slot) {
            const auto kinds = is_zero<N>(k) && N > 2 ? std::vector<Kind>{Kind::A}
                                                      : std::vector<Kind>{Kind::A, Kind::B};
            for (Kind kind : kinds) {
                const Channel<N> ch{k, kind, slot};
                const auto [dir, scale] = channel_direction<N>(ch, spec.alpha);
                std::array<CoeffBox<N>, N> boxes;
                std::array<int, N> half;
                for (int d = 0; d < N; ++d) half[d] = std::abs(k[d]);
                const std::complex<double> plus = kind == Kind::A
                                                      ? std::complex<double>(0.5, 0.0)
                                                      : std::complex<double>(0.0, -0.5);
                for (int d = 0; d < N; ++d) {
                    boxes[d] = CoeffBox<N>(half);
                    if (is_zero<N>(k)) {
                        boxes[d].at(k) = dir[d];
                    } else {
                        Mode<N> neg;
                        for (int e = 0; e < N; ++e) neg[e] = -k[e];
                        boxes[d].at(k) = plus * scale * dir[d];
                        boxes[d].at(neg) = std::conj(plus) * scale * dir[d];
                    }
                }
                int kinf = 0;
                for (int d = 0; d < N; ++d) kinf = std::max(kinf, std::abs(k[d]));
                const int grid = std::max(8, 4 * kinf + 2);
                const auto self = advect_boxes<N>(boxes, boxes, grid, 2 * kinf);
                mode_total += std::sqrt(self.l2_sq());
            }
        }
        worst = std::max(worst, mode_total);
    }
    return worst;
}

}  // namespace torusflow
