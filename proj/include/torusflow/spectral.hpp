#pragma once

#include <array>
#include <complex>
#include <stdexcept>
#include <vector>

#include "torusflow/lattice.hpp"

namespace torusflow {

/// Dense complex Fourier coefficients on the centered box |m_d| <= half[d].
/// Real-valued fields keep the box Hermitian: a(-m) = conj(a(m)).
template <int N>
struct CoeffBox {
    std::array<int, N> half{};
    std::vector<std::complex<double>> a;

    explicit CoeffBox(std::array<int, N> h = {}) : half(h) {
        size_t n = 1;
        for (int d = 0; d < N; ++d) {
            if (half[d] < 0) throw std::invalid_argument("CoeffBox: negative extent");
            n *= size_t(2 * half[d] + 1);
        }
        a.assign(n, {});
    }
    static CoeffBox square(int k) {
        std::array<int, N> h;
        h.fill(k);
        return CoeffBox(h);
    }

    int extent(int d) const { return 2 * half[d] + 1; }
    size_t size_flat() const { return a.size(); }

    bool contains(const Mode<N>& m) const {
        for (int d = 0; d < N; ++d)
            if (m[d] < -half[d] || m[d] > half[d]) return false;
        return true;
    }
    size_t index(const Mode<N>& m) const {
        size_t idx = 0;
        for (int d = 0; d < N; ++d) idx = idx * size_t(extent(d)) + size_t(m[d] + half[d]);
        return idx;
    }
    std::complex<double>& at(const Mode<N>& m) { return a[index(m)]; }
    const std::complex<double>& at(const Mode<N>& m) const { return a[index(m)]; }
    std::complex<double> get(const Mode<N>& m) const { return contains(m) ? a[index(m)] : 0.0; }

    /// Row-major odometer over the box; starts at the most negative corner.
    Mode<N> first_mode() const {
        Mode<N> m;
        for (int d = 0; d < N; ++d) m[d] = -half[d];
        return m;
    }
    bool next_mode(Mode<N>& m) const {
        int d = N - 1;
        while (d >= 0 && m[d] == half[d]) {
            m[d] = -half[d];
            --d;
        }
        if (d < 0) return false;
        ++m[d];
        return true;
    }

    CoeffBox derivative(int dim) const {
        CoeffBox out(half);
        Mode<N> m = first_mode();
        size_t i = 0;
        do {
            out.a[i] = a[i] * std::complex<double>(0.0, double(m[dim]));
            ++i;
        } while (next_mode(m));
        return out;
    }

    /// Embed into a (weakly) larger box.
    CoeffBox grown(const std::array<int, N>& new_half) const {
        CoeffBox out(new_half);
        Mode<N> m = first_mode();
        do {
            if (out.contains(m)) out.at(m) = at(m);
        } while (next_mode(m));
        return out;
    }
    CoeffBox truncated(const std::array<int, N>& new_half) const {
        CoeffBox out(new_half);
        Mode<N> m = out.first_mode();
        do {
            if (contains(m)) out.at(m) = at(m);
        } while (out.next_mode(m));
        return out;
    }

    void axpy(std::complex<double> c, const CoeffBox& other) {
        if (other.half != half) throw std::invalid_argument("CoeffBox::axpy: shape mismatch");
        for (size_t i = 0; i < a.size(); ++i) a[i] += c * other.a[i];
    }

    /// Integral of |field|^2 over the torus (Parseval).
    double l2_sq() const {
        double s = 0;
        for (const auto& c : a) s += std::norm(c);
        return s * std::pow(two_pi, N);
    }

    double hermitian_defect() const {
        double worst = 0;
        Mode<N> m = first_mode();
        do {
            Mode<N> neg;
            for (int d = 0; d < N; ++d) neg[d] = -m[d];
            worst = std::max(worst, std::abs(at(m) - std::conj(at(neg))));
        } while (next_mode(m));
        return worst;
    }
};

namespace detail {

inline std::vector<std::complex<double>> twiddles(int grid) {
    std::vector<std::complex<double>> w(static_cast<size_t>(grid));
    for (int t = 0; t < grid; ++t) w[t] = std::polar(1.0, two_pi * t / grid);
    return w;
}

/// out[o][x][i] = sum_t M[x*len_in + t] * in[o][t][i]  (flat row-major contraction)
inline void contract_dim(const std::vector<std::complex<double>>& in, size_t outer,
                         size_t len_in, size_t inner, size_t len_out,
                         const std::vector<std::complex<double>>& M,
                         std::vector<std::complex<double>>& out) {
    out.assign(outer * len_out * inner, {});
    for (size_t o = 0; o < outer; ++o)
        for (size_t x = 0; x < len_out; ++x) {
            const auto* mrow = &M[x * len_in];
            auto* dst = &out[(o * len_out + x) * inner];
            for (size_t t = 0; t < len_in; ++t) {
                const auto c = mrow[t];
                const auto* src = &in[(o * len_in + t) * inner];
                for (size_t i = 0; i < inner; ++i) dst[i] += c * src[i];
            }
        }
}

}  // namespace detail

/// Exact synthesis of the truncated series on a uniform G^N grid (row-major points,
/// theta_j = 2 pi j / G). Requires G >= 2*half+1 in every dimension.
template <int N>
inline std::vector<double> to_grid(const CoeffBox<N>& box, int grid) {
    for (int d = 0; d < N; ++d)
        if (grid < 2 * box.half[d] + 1)
            throw std::invalid_argument("to_grid: grid under-resolves the box");
    const auto w = detail::twiddles(grid);
    std::vector<std::complex<double>> cur = box.a, next;
    std::array<size_t, N> sizes;
    for (int d = 0; d < N; ++d) sizes[d] = size_t(box.extent(d));
    for (int d = 0; d < N; ++d) {
        const size_t len_in = sizes[d], len_out = size_t(grid);
        std::vector<std::complex<double>> M(len_out * len_in);
        for (size_t j = 0; j < len_out; ++j)
            for (size_t t = 0; t < len_in; ++t) {
                const long m = long(t) - box.half[d];
                const long idx = ((m * long(j)) % grid + grid) % grid;
                M[j * len_in + t] = w[size_t(idx)];
            }
        size_t outer = 1, inner = 1;
        for (int e = 0; e < d; ++e) outer *= sizes[e];
        for (int e = d + 1; e < N; ++e) inner *= sizes[e];
        detail::contract_dim(cur, outer, len_in, inner, len_out, M, next);
        cur.swap(next);
        sizes[d] = len_out;
    }
    std::vector<double> out(cur.size());
    for (size_t i = 0; i < cur.size(); ++i) out[i] = cur[i].real();
    return out;
}

/// Exact analysis of grid samples back onto a coefficient box; exact when the sampled
/// field is band-limited inside half and G >= 2*half+1.
template <int N>
inline CoeffBox<N> from_grid(const std::vector<double>& values, int grid,
                             const std::array<int, N>& half) {
    size_t npts = 1;
    for (int d = 0; d < N; ++d) {
        npts *= size_t(grid);
        if (grid < 2 * half[d] + 1)
            throw std::invalid_argument("from_grid: grid under-resolves the box");
    }
    if (values.size() != npts) throw std::invalid_argument("from_grid: size mismatch");
    const auto w = detail::twiddles(grid);
    std::vector<std::complex<double>> cur(values.begin(), values.end()), next;
    std::array<size_t, N> sizes;
    sizes.fill(size_t(grid));
    const double inv_g = 1.0 / grid;
    for (int d = 0; d < N; ++d) {
        const size_t len_in = size_t(grid), len_out = size_t(2 * half[d] + 1);
        std::vector<std::complex<double>> M(len_out * len_in);
        for (size_t x = 0; x < len_out; ++x)
            for (size_t j = 0; j < len_in; ++j) {
                const long m = long(x) - half[d];
                const long idx = ((-m * long(j)) % grid + grid) % grid;
                M[x * len_in + j] = w[size_t(idx)] * inv_g;
            }
        size_t outer = 1, inner = 1;
        for (int e = 0; e < d; ++e) outer *= sizes[e];
        for (int e = d + 1; e < N; ++e) inner *= sizes[e];
        detail::contract_dim(cur, outer, len_in, inner, len_out, M, next);
        cur.swap(next);
        sizes[d] = len_out;
    }
    CoeffBox<N> out(half);
    out.a = std::move(cur);
    return out;
}

using CoeffBox2 = CoeffBox<2>;
using CoeffBox3 = CoeffBox<3>;

}  // namespace torusflow
