#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "torusflow/lattice.hpp"
#include "torusflow/rng.hpp"
#include "torusflow/spectral.hpp"

namespace torusflow {

/// Smallest product grid on which quadratic terms of a |k| <= k_max field keep their
/// retained modes alias-free (G >= 3*k_max + 2, rounded up to a multiple of 8).
inline int product_grid(int k_max) {
    const int need = std::max(8, 3 * k_max + 2);
    return (need + 7) / 8 * 8;
}

/// Divergence-free 2D field stored as real coefficients on the half-lattice pair basis:
///   y(theta) = mean + sum_k |k|^-(alpha+1) [a_cos cos(k.theta) + a_sin sin(k.theta)] perp(k)
/// Entries are lexicographically sorted, |k| <= k_max; absent modes are zero.
struct DivFreeField {
    struct Entry {
        Mode2 k{};
        double a_cos = 0, a_sin = 0;
    };

    int alpha = 3;
    int k_max = 0;
    int resolution = 8;
    std::array<double, 2> mean{};
    std::vector<Entry> entries;

    static DivFreeField zero(int alpha, int k_max) {
        DivFreeField f;
        f.alpha = alpha;
        f.k_max = k_max;
        f.resolution = product_grid(k_max);
        return f;
    }

    void sort_entries() {
        std::sort(entries.begin(), entries.end(),
                  [](const Entry& a, const Entry& b) { return a.k < b.k; });
    }

    void set(const Mode2& k, double a_cos, double a_sin) {
        if (!is_positive_halflattice<2>(k))
            throw std::invalid_argument("DivFreeField::set: mode outside half-lattice");
        if (norm_sq<2>(k) > long(k_max) * k_max)
            throw std::invalid_argument("DivFreeField::set: mode above k_max");
        for (auto& e : entries)
            if (e.k == k) {
                e.a_cos = a_cos;
                e.a_sin = a_sin;
                return;
            }
        entries.push_back({k, a_cos, a_sin});
        sort_entries();
    }

    /// Coefficients scale linearly, so fields combine entry-wise.
    DivFreeField& axpy(double c, const DivFreeField& other) {
        if (other.alpha != alpha)
            throw std::invalid_argument("DivFreeField::axpy: alpha mismatch");
        mean[0] += c * other.mean[0];
        mean[1] += c * other.mean[1];
        for (const auto& oe : other.entries) {
            bool found = false;
            for (auto& e : entries)
                if (e.k == oe.k) {
                    e.a_cos += c * oe.a_cos;
                    e.a_sin += c * oe.a_sin;
                    found = true;
                    break;
                }
            if (!found) {
                entries.push_back({oe.k, c * oe.a_cos, c * oe.a_sin});
                k_max = std::max(k_max, int(std::ceil(norm<2>(oe.k))));
            }
        }
        sort_entries();
        return *this;
    }

    void scale(double c) {
        mean[0] *= c;
        mean[1] *= c;
        for (auto& e : entries) {
            e.a_cos *= c;
            e.a_sin *= c;
        }
    }

    /// Drop entries below rel_tol of the largest coefficient magnitude.
    void prune(double rel_tol = 1e-13) {
        double peak = std::max(std::abs(mean[0]), std::abs(mean[1]));
        for (const auto& e : entries)
            peak = std::max({peak, std::abs(e.a_cos), std::abs(e.a_sin)});
        const double cut = peak * rel_tol;
        std::erase_if(entries, [cut](const Entry& e) {
            return std::abs(e.a_cos) <= cut && std::abs(e.a_sin) <= cut;
        });
    }

    struct Norms {
        double l2_sq = 0, h_alpha_sq = 0, grad_l2_sq = 0;
    };

    /// Closed-form norms from the coefficients (pair basis is L2-orthogonal).
    Norms norms() const {
        Norms n;
        const double vol = two_pi * two_pi;
        const double mean_sq = mean[0] * mean[0] + mean[1] * mean[1];
        n.l2_sq = vol * mean_sq;
        n.h_alpha_sq = vol * mean_sq;
        for (const auto& e : entries) {
            const double k2 = double(norm_sq<2>(e.k));
            const double coeff_sq = e.a_cos * e.a_cos + e.a_sin * e.a_sin;
            const double base = 2 * pi * pi * std::pow(k2, -double(alpha)) * coeff_sq;
            n.l2_sq += base;
            n.grad_l2_sq += base * k2;
            n.h_alpha_sq += base * (1.0 + std::pow(k2, double(alpha)));
        }
        return n;
    }

    /// Conservative sup-norm bound: |mean| + sum |coef| |k|^-alpha.
    double sup_bound() const {
        double s = std::hypot(mean[0], mean[1]);
        for (const auto& e : entries)
            s += std::hypot(e.a_cos, e.a_sin) * std::pow(double(norm_sq<2>(e.k)), -double(alpha) / 2);
        return s;
    }

    /// Full complex Fourier coefficients of both components.
    std::array<CoeffBox2, 2> to_boxes(int box_half = -1) const {
        if (box_half < 0) box_half = k_max;
        std::array<CoeffBox2, 2> out{CoeffBox2::square(box_half), CoeffBox2::square(box_half)};
        out[0].at({0, 0}) = mean[0];
        out[1].at({0, 0}) = mean[1];
        for (const auto& e : entries) {
            if (!out[0].contains(e.k)) continue;
            const double amp = std::pow(double(norm_sq<2>(e.k)), -double(alpha + 1) / 2);
            const std::complex<double> c(0.5 * e.a_cos * amp, -0.5 * e.a_sin * amp);
            const Mode2 kp = perp(e.k);
            const Mode2 neg{-e.k[0], -e.k[1]};
            for (int d = 0; d < 2; ++d) {
                out[d].at(e.k) += c * double(kp[d]);
                out[d].at(neg) += std::conj(c) * double(kp[d]);
            }
        }
        return out;
    }
};

/// Scalar field as cos/sin pairs over the half-lattice plus a mean.
struct ScalarField {
    struct Entry {
        Mode2 k{};
        double c_cos = 0, c_sin = 0;
    };
    int k_max = 0;
    double mean = 0;
    std::vector<Entry> entries;

    void set(const Mode2& k, double c_cos, double c_sin) {
        if (!is_positive_halflattice<2>(k))
            throw std::invalid_argument("ScalarField::set: mode outside half-lattice");
        for (auto& e : entries)
            if (e.k == k) {
                e.c_cos = c_cos;
                e.c_sin = c_sin;
                return;
            }
        entries.push_back({k, c_cos, c_sin});
        std::sort(entries.begin(), entries.end(),
                  [](const Entry& a, const Entry& b) { return a.k < b.k; });
        k_max = std::max(k_max, int(std::ceil(norm<2>(k))));
    }

    void prune(double rel_tol = 1e-13) {
        double peak = std::abs(mean);
        for (const auto& e : entries)
            peak = std::max({peak, std::abs(e.c_cos), std::abs(e.c_sin)});
        const double cut = peak * rel_tol;
        std::erase_if(entries, [cut](const Entry& e) {
            return std::abs(e.c_cos) <= cut && std::abs(e.c_sin) <= cut;
        });
    }

    double l2_sq() const {
        double s = two_pi * two_pi * mean * mean;
        for (const auto& e : entries)
            s += 2 * pi * pi * (e.c_cos * e.c_cos + e.c_sin * e.c_sin);
        return s;
    }

    CoeffBox2 to_box(int box_half = -1) const {
        if (box_half < 0) box_half = k_max;
        CoeffBox2 out = CoeffBox2::square(box_half);
        out.at({0, 0}) = mean;
        for (const auto& e : entries) {
            if (!out.contains(e.k)) continue;
            const std::complex<double> c(0.5 * e.c_cos, -0.5 * e.c_sin);
            out.at(e.k) += c;
            out.at({-e.k[0], -e.k[1]}) += std::conj(c);
        }
        return out;
    }
};

inline ScalarField scalar_from_box(const CoeffBox2& box, int k_max) {
    ScalarField out;
    out.k_max = k_max;
    out.mean = box.get({0, 0}).real();
    for (const auto& k : modes_up_to<2>(k_max)) {
        if (!box.contains(k)) continue;
        const auto c = box.at(k);
        if (c == std::complex<double>{}) continue;
        out.entries.push_back({k, 2 * c.real(), -2 * c.imag()});
    }
    return out;
}

/// Per-point tables of cos(m t_d), sin(m t_d) for m = 0..max_k, built with one sincos
/// per dimension and angle recurrences; layout is m-major so mode sweeps are contiguous.
struct TrigTables {
    int max_k = 0;
    size_t n = 0;
    std::array<std::vector<double>, 2> c, s;

    void build(const double* t0, const double* t1, size_t npts, int k) {
        max_k = k;
        n = npts;
        const double* ts[2] = {t0, t1};
        for (int d = 0; d < 2; ++d) {
            c[d].resize(size_t(k + 1) * npts);
            s[d].resize(size_t(k + 1) * npts);
            double* cd = c[d].data();
            double* sd = s[d].data();
            for (size_t p = 0; p < npts; ++p) {
                cd[p] = 1.0;
                sd[p] = 0.0;
            }
            if (k == 0) continue;
            for (size_t p = 0; p < npts; ++p) {
                cd[npts + p] = std::cos(ts[d][p]);
                sd[npts + p] = std::sin(ts[d][p]);
            }
            for (int m = 2; m <= k; ++m)
                for (size_t p = 0; p < npts; ++p) {
                    const double cm = cd[(size_t(m) - 1) * npts + p], sm = sd[(size_t(m) - 1) * npts + p];
                    const double c1 = cd[npts + p], s1 = sd[npts + p];
                    cd[size_t(m) * npts + p] = cm * c1 - sm * s1;
                    sd[size_t(m) * npts + p] = sm * c1 + cm * s1;
                }
        }
    }
};

/// Adds field values at the table's points into (out0, out1).
inline void accumulate_divfree(const DivFreeField& f, const TrigTables& t, double w,
                               double* out0, double* out1) {
    const size_t n = t.n;
    if (f.mean[0] != 0 || f.mean[1] != 0) {
        const double m0 = w * f.mean[0], m1 = w * f.mean[1];
        for (size_t p = 0; p < n; ++p) {
            out0[p] += m0;
            out1[p] += m1;
        }
    }
    for (const auto& e : f.entries) {
        const int k1 = e.k[0], k2 = std::abs(e.k[1]);
        if (k1 > t.max_k || k2 > t.max_k)
            throw std::invalid_argument("accumulate_divfree: tables too small");
        const double sgn = e.k[1] < 0 ? -1.0 : 1.0;
        const double amp = w * std::pow(double(norm_sq<2>(e.k)), -double(f.alpha + 1) / 2);
        const Mode2 kp = perp(e.k);
        const double ca0 = e.a_cos * amp * kp[0], ca1 = e.a_cos * amp * kp[1];
        const double cb0 = e.a_sin * amp * kp[0], cb1 = e.a_sin * amp * kp[1];
        const double* c1 = &t.c[0][size_t(k1) * n];
        const double* s1 = &t.s[0][size_t(k1) * n];
        const double* c2 = &t.c[1][size_t(k2) * n];
        const double* s2 = &t.s[1][size_t(k2) * n];
        for (size_t p = 0; p < n; ++p) {
            const double cosv = c1[p] * c2[p] - sgn * s1[p] * s2[p];
            const double sinv = s1[p] * c2[p] + sgn * c1[p] * s2[p];
            out0[p] += cosv * ca0 + sinv * cb0;
            out1[p] += cosv * ca1 + sinv * cb1;
        }
    }
}

/// Adds the scalar field's gradient at the table's points into (out0, out1).
inline void accumulate_scalar_gradient(const ScalarField& f, const TrigTables& t, double w,
                                       double* out0, double* out1) {
    const size_t n = t.n;
    for (const auto& e : f.entries) {
        const int k1 = e.k[0], k2 = std::abs(e.k[1]);
        if (k1 > t.max_k || k2 > t.max_k)
            throw std::invalid_argument("accumulate_scalar_gradient: tables too small");
        const double sgn = e.k[1] < 0 ? -1.0 : 1.0;
        const double* c1 = &t.c[0][size_t(k1) * n];
        const double* s1 = &t.s[0][size_t(k1) * n];
        const double* c2 = &t.c[1][size_t(k2) * n];
        const double* s2 = &t.s[1][size_t(k2) * n];
        const double wc = w * e.c_cos, ws = w * e.c_sin;
        for (size_t p = 0; p < n; ++p) {
            const double cosv = c1[p] * c2[p] - sgn * s1[p] * s2[p];
            const double sinv = s1[p] * c2[p] + sgn * c1[p] * s2[p];
            const double radial = -wc * sinv + ws * cosv;
            out0[p] += radial * e.k[0];
            out1[p] += radial * e.k[1];
        }
    }
}

inline void accumulate_scalar(const ScalarField& f, const TrigTables& t, double w,
                              double* out) {
    const size_t n = t.n;
    if (f.mean != 0)
        for (size_t p = 0; p < n; ++p) out[p] += w * f.mean;
    for (const auto& e : f.entries) {
        const int k1 = e.k[0], k2 = std::abs(e.k[1]);
        const double sgn = e.k[1] < 0 ? -1.0 : 1.0;
        const double* c1 = &t.c[0][size_t(k1) * n];
        const double* s1 = &t.s[0][size_t(k1) * n];
        const double* c2 = &t.c[1][size_t(k2) * n];
        const double* s2 = &t.s[1][size_t(k2) * n];
        for (size_t p = 0; p < n; ++p) {
            const double cosv = c1[p] * c2[p] - sgn * s1[p] * s2[p];
            const double sinv = s1[p] * c2[p] + sgn * c1[p] * s2[p];
            out[p] += w * (e.c_cos * cosv + e.c_sin * sinv);
        }
    }
}

/// Point evaluation by exact summation of the truncated series.
inline std::vector<std::array<double, 2>> evaluate(const DivFreeField& f,
                                                   const std::vector<std::array<double, 2>>& pts) {
    std::vector<double> t0(pts.size()), t1(pts.size());
    for (size_t p = 0; p < pts.size(); ++p) {
        t0[p] = pts[p][0];
        t1[p] = pts[p][1];
    }
    TrigTables tab;
    tab.build(t0.data(), t1.data(), pts.size(), f.k_max);
    std::vector<double> o0(pts.size(), 0.0), o1(pts.size(), 0.0);
    accumulate_divfree(f, tab, 1.0, o0.data(), o1.data());
    std::vector<std::array<double, 2>> out(pts.size());
    for (size_t p = 0; p < pts.size(); ++p) out[p] = {o0[p], o1[p]};
    return out;
}

inline std::array<double, 2> evaluate_at(const DivFreeField& f, double t1, double t2) {
    return evaluate(f, {{t1, t2}})[0];
}

/// Samples the field's components on the uniform G x G grid (row-major).
inline std::array<std::vector<double>, 2> sample_grid(const DivFreeField& f, int grid) {
    const auto boxes = f.to_boxes();
    return {to_grid<2>(boxes[0], grid), to_grid<2>(boxes[1], grid)};
}

/// Recover pair-basis coefficients from complex component boxes, projecting each mode
/// onto its divergence-free direction (Leray projection on the truncated lattice).
inline DivFreeField leray_project_boxes(const std::array<CoeffBox2, 2>& boxes, int alpha,
                                        int k_max) {
    DivFreeField out = DivFreeField::zero(alpha, k_max);
    out.mean = {boxes[0].get({0, 0}).real(), boxes[1].get({0, 0}).real()};
    for (const auto& k : modes_up_to<2>(k_max)) {
        if (!boxes[0].contains(k)) continue;
        const std::complex<double> v0 = boxes[0].at(k), v1 = boxes[1].at(k);
        const Mode2 kp = perp(k);
        const double k2 = double(norm_sq<2>(k));
        const std::complex<double> c = (v0 * double(kp[0]) + v1 * double(kp[1])) / k2;
        const double amp = std::pow(k2, double(alpha + 1) / 2);
        const double a_cos = 2 * c.real() * amp, a_sin = -2 * c.imag() * amp;
        if (a_cos != 0 || a_sin != 0) out.entries.push_back({k, a_cos, a_sin});
    }
    out.sort_entries();
    return out;
}

/// Uniform random coefficients in [-amplitude, amplitude] on all modes |k| <= k_max.
inline DivFreeField random_divfree(int k_max, int alpha, double amplitude, uint64_t seed,
                                   bool with_mean = false) {
    DivFreeField f = DivFreeField::zero(alpha, k_max);
    const CounterRng rng{seed};
    uint64_t i = 0;
    if (with_mean) {
        f.mean[0] = amplitude * (2 * rng.uniform(0, 0, 0, i++) - 1);
        f.mean[1] = amplitude * (2 * rng.uniform(0, 0, 0, i++) - 1);
    }
    for (const auto& k : modes_up_to<2>(k_max)) {
        const double a = amplitude * (2 * rng.uniform(0, 0, 0, i++) - 1);
        const double b = amplitude * (2 * rng.uniform(0, 0, 0, i++) - 1);
        f.entries.push_back({k, a, b});
    }
    return f;
}

}  // namespace torusflow
