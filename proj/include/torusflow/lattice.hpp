#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace torusflow {

inline constexpr double pi = 3.141592653589793238462643383279502884;
inline constexpr double two_pi = 2.0 * pi;

template <int N>
using Mode = std::array<int, N>;

using Mode2 = Mode<2>;
using Mode3 = Mode<3>;

template <int N>
inline long norm_sq(const Mode<N>& k) {
    long s = 0;
    for (int d = 0; d < N; ++d) s += long(k[d]) * k[d];
    return s;
}

template <int N>
inline double norm(const Mode<N>& k) {
    return std::sqrt(double(norm_sq<N>(k)));
}

template <int N>
inline bool is_zero(const Mode<N>& k) {
    return norm_sq<N>(k) == 0;
}

/// First nonzero coordinate positive; the zero mode is excluded.
template <int N>
inline bool is_positive_halflattice(const Mode<N>& k) {
    for (int d = 0; d < N; ++d) {
        if (k[d] > 0) return true;
        if (k[d] < 0) return false;
    }
    return false;
}

/// All half-lattice modes with 0 < |k| <= cutoff, in ascending lexicographic order.
template <int N>
inline std::vector<Mode<N>> modes_up_to(int cutoff, bool include_zero = false) {
    if (cutoff < 0) throw std::invalid_argument("modes_up_to: cutoff must be >= 0");
    std::vector<Mode<N>> out;
    if (include_zero) out.push_back(Mode<N>{});
    Mode<N> k{};
    k[0] = 0;
    for (int d = 1; d < N; ++d) k[d] = -cutoff;
    const long c2 = long(cutoff) * cutoff;
    while (k[0] <= cutoff) {
        if (is_positive_halflattice<N>(k) && norm_sq<N>(k) <= c2) out.push_back(k);
        int d = N - 1;
        while (d > 0 && k[d] == cutoff) {
            k[d] = -cutoff;
            --d;
        }
        ++k[d];
    }
    return out;
}

/// (k2, -k1): orthogonal to k, same length.
inline Mode2 perp(const Mode2& k) { return Mode2{k[1], -k[0]}; }

namespace detail {

/// Exact rational arithmetic for the frame construction.
struct Frac {
    long long num = 0, den = 1;

    static Frac of(long long n, long long d = 1) {
        if (d == 0) throw std::invalid_argument("Frac: zero denominator");
        if (d < 0) { n = -n; d = -d; }
        long long g = std::gcd(n < 0 ? -n : n, d);
        if (g > 1) { n /= g; d /= g; }
        return Frac{n, d};
    }
    Frac operator+(const Frac& o) const { return of(num * o.den + o.num * den, den * o.den); }
    Frac operator-(const Frac& o) const { return of(num * o.den - o.num * den, den * o.den); }
    Frac operator*(const Frac& o) const { return of(num * o.num, den * o.den); }
    Frac operator/(const Frac& o) const { return of(num * o.den, den * o.num); }
    double value() const { return double(num) / double(den); }
};

template <int N>
using FracVec = std::array<Frac, N>;

template <int N>
inline Frac frac_dot(const FracVec<N>& a, const FracVec<N>& b) {
    Frac s = Frac::of(0);
    for (int d = 0; d < N; ++d) s = s + a[d] * b[d];
    return s;
}

}  // namespace detail

/// N-1 mutually orthogonal vectors, each orthogonal to k and of length |k|.
/// Gram-Schmidt over the standard basis vectors least aligned with k, carried out in
/// exact rational arithmetic, then rescaled; axis-aligned k yields exact axis frames.
template <int N>
inline std::array<std::array<double, N>, N - 1> orthogonal_frame(const Mode<N>& k) {
    static_assert(N >= 2);
    if (is_zero<N>(k)) throw std::invalid_argument("orthogonal_frame: k must be nonzero");
    using detail::Frac;
    using detail::FracVec;

    std::array<int, N> order{};
    for (int d = 0; d < N; ++d) order[d] = d;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        int ka = k[a] < 0 ? -k[a] : k[a], kb = k[b] < 0 ? -k[b] : k[b];
        return ka != kb ? ka < kb : a < b;
    });

    FracVec<N> kf;
    for (int d = 0; d < N; ++d) kf[d] = Frac::of(k[d]);
    const Frac k_dot_k = detail::frac_dot<N>(kf, kf);

    std::array<FracVec<N>, N - 1> basis;
    for (int j = 0; j < N - 1; ++j) {
        FracVec<N> v;
        for (int d = 0; d < N; ++d) v[d] = Frac::of(d == order[j] ? 1 : 0);
        Frac c = detail::frac_dot<N>(v, kf) / k_dot_k;
        for (int d = 0; d < N; ++d) v[d] = v[d] - c * kf[d];
        for (int m = 0; m < j; ++m) {
            Frac nn = detail::frac_dot<N>(basis[m], basis[m]);
            Frac cm = detail::frac_dot<N>(v, basis[m]) / nn;
            for (int d = 0; d < N; ++d) v[d] = v[d] - cm * basis[m][d];
        }
        if (detail::frac_dot<N>(v, v).num == 0)
            throw std::runtime_error("orthogonal_frame: degenerate pivot");
        basis[j] = v;
    }

    const double target_len = norm<N>(k);
    std::array<std::array<double, N>, N - 1> out{};
    for (int j = 0; j < N - 1; ++j) {
        double len2 = 0;
        for (int d = 0; d < N; ++d) {
            out[j][d] = basis[j][d].value();
            len2 += out[j][d] * out[j][d];
        }
        const double scale = target_len / std::sqrt(len2);
        for (int d = 0; d < N; ++d) out[j][d] *= scale;
    }
    return out;
}

enum class Kind : uint8_t { A, B };

inline char kind_char(Kind kind) { return kind == Kind::A ? 'A' : 'B'; }

/// One noise direction: cos (A) or sin (B) profile at mode k along frame slot `slot`
/// (1-based). In 2D the slot is always 1 and the direction is perp(k); at k = 0 the
/// fields are the constant unit vectors (2D: A -> e1, B -> e2; nD: A with slot 1..N).
template <int N>
struct Channel {
    Mode<N> k{};
    Kind kind = Kind::A;
    int slot = 1;
};

/// L2 norm squared of one basis field: (2pi)^N for k = 0, |k|^{-2a}(2pi)^N/2 otherwise.
template <int N>
inline double basis_norm_l2_sq(const Mode<N>& k, int alpha) {
    const double vol = std::pow(two_pi, N);
    if (is_zero<N>(k)) return vol;
    return std::pow(double(norm_sq<N>(k)), -double(alpha)) * vol / 2.0;
}

/// Strong (alpha) norm squared: the L2 value weighted by (1 + |k|^{2a}).
template <int N>
inline double basis_norm_alpha_sq(const Mode<N>& k, int alpha) {
    if (is_zero<N>(k)) return basis_norm_l2_sq<N>(k, alpha);
    const double k2a = std::pow(double(norm_sq<N>(k)), double(alpha));
    return basis_norm_l2_sq<N>(k, alpha) * (1.0 + k2a);
}

/// Value of one basis field at a point.
template <int N>
inline std::array<double, N> basis_value(const Channel<N>& ch, int alpha,
                                         const std::array<double, N>& theta) {
    std::array<double, N> out{};
    if (is_zero<N>(ch.k)) {
        int axis;
        if (N == 2) {
            axis = ch.kind == Kind::A ? 0 : 1;
        } else {
            if (ch.kind != Kind::A)
                throw std::invalid_argument("basis_value: zero mode has A channels only");
            axis = ch.slot - 1;
        }
        if (axis < 0 || axis >= N) throw std::invalid_argument("basis_value: bad slot");
        out[axis] = 1.0;
        return out;
    }
    std::array<double, N> dir{};
    if constexpr (N == 2) {
        if (ch.slot != 1) throw std::invalid_argument("basis_value: 2D slot must be 1");
        const Mode2 kp = perp(ch.k);
        dir = {double(kp[0]), double(kp[1])};
    } else {
        if (ch.slot < 1 || ch.slot > N - 1) throw std::invalid_argument("basis_value: bad slot");
        dir = orthogonal_frame<N>(ch.k)[ch.slot - 1];
    }
    double phase = 0;
    for (int d = 0; d < N; ++d) phase += ch.k[d] * theta[d];
    const double profile = ch.kind == Kind::A ? std::cos(phase) : std::sin(phase);
    const double scale = std::pow(norm<N>(ch.k), -double(alpha + 1));
    for (int d = 0; d < N; ++d) out[d] = scale * profile * dir[d];
    return out;
}

/// Truncated noise basis: cutoff for |k|, decay exponent alpha, viscosity to match.
template <int N>
struct NoiseSpec {
    int cutoff = 1;
    int alpha = 3;
    double nu = 0.1;

    /// Channel order is frozen (it keys the Brownian streams): the constant fields
    /// first, then for each half-lattice mode in lexicographic order, slots ascending
    /// with A before B within a slot.
    std::vector<Channel<N>> channels() const {
        std::vector<Channel<N>> out;
        if (N == 2) {
            out.push_back({Mode<N>{}, Kind::A, 1});
            out.push_back({Mode<N>{}, Kind::B, 1});
        } else {
            for (int slot = 1; slot <= N; ++slot) out.push_back({Mode<N>{}, Kind::A, slot});
        }
        for (const auto& k : modes_up_to<N>(cutoff)) {
            for (int slot = 1; slot <= N - 1; ++slot) {
                out.push_back({k, Kind::A, slot});
                out.push_back({k, Kind::B, slot});
            }
        }
        return out;
    }

    double inv_norm_sum() const {
        double s = 0;
        for (const auto& k : modes_up_to<N>(cutoff))
            s += std::pow(double(norm_sq<N>(k)), -double(alpha));
        return s;
    }

    /// Noise amplitude making the channel sum reproduce nu * Laplacian:
    /// eps^2/2 * (1 + (N-1)/N * sum_{0<|k|<=cutoff} |k|^{-2a}) = nu.
    double epsilon() const {
        if (nu < 0) throw std::invalid_argument("NoiseSpec: nu must be >= 0");
        const double dim_factor = double(N - 1) / double(N);
        return std::sqrt(2.0 * nu / (1.0 + dim_factor * inv_norm_sum()));
    }
};

using NoiseSpec2 = NoiseSpec<2>;
using NoiseSpec3 = NoiseSpec<3>;

}  // namespace torusflow
