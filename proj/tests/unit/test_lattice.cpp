#include <catch2/catch_amalgamated.hpp>

#include "torusflow/lattice.hpp"
#include "support/oracles.hpp"

using namespace torusflow;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("half-lattice membership and order match a brute-force scan", "[lattice]") {
    for (int cutoff = 1; cutoff <= 6; ++cutoff) {
        const auto got = modes_up_to<2>(cutoff);
        const auto want = oracles::halflattice_scan_2d(cutoff);
        REQUIRE(got.size() == want.size());
        for (size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i][0] == want[i][0]);
            CHECK(got[i][1] == want[i][1]);
        }
    }
    for (int cutoff = 1; cutoff <= 3; ++cutoff) {
        const auto got = modes_up_to<3>(cutoff);
        const auto want = oracles::halflattice_scan_3d(cutoff);
        REQUIRE(got.size() == want.size());
        for (size_t i = 0; i < got.size(); ++i)
            CHECK(std::equal(got[i].begin(), got[i].end(), want[i].begin()));
    }
}

TEST_CASE("mode enumeration worked examples", "[lattice]") {
    const auto m1 = modes_up_to<2>(1);
    REQUIRE(m1.size() == 2);
    CHECK(m1[0] == Mode2{0, 1});
    CHECK(m1[1] == Mode2{1, 0});

    const auto m2 = modes_up_to<2>(2);
    const std::vector<Mode2> want = {{0, 1}, {0, 2}, {1, -1}, {1, 0}, {1, 1}, {2, 0}};
    REQUIRE(m2.size() == want.size());
    for (size_t i = 0; i < want.size(); ++i) CHECK(m2[i] == want[i]);

    CHECK(modes_up_to<2>(0).empty());
    CHECK(modes_up_to<2>(0, true).size() == 1);
}

TEST_CASE("exactly one of {k, -k} is in the half-lattice", "[lattice]") {
    for (int k1 = -5; k1 <= 5; ++k1)
        for (int k2 = -5; k2 <= 5; ++k2) {
            const Mode2 k{k1, k2}, nk{-k1, -k2};
            if (is_zero<2>(k)) {
                CHECK_FALSE(is_positive_halflattice<2>(k));
            } else {
                CHECK(is_positive_halflattice<2>(k) != is_positive_halflattice<2>(nk));
            }
        }
}

TEST_CASE("perp is orthogonal, norm-preserving, and perp(perp) = -id", "[lattice]") {
    for (const auto& k : modes_up_to<2>(5)) {
        const auto kp = perp(k);
        CHECK(k[0] * kp[0] + k[1] * kp[1] == 0);
        CHECK(norm_sq<2>(kp) == norm_sq<2>(k));
        const auto kpp = perp(kp);
        CHECK(kpp[0] == -k[0]);
        CHECK(kpp[1] == -k[1]);
    }
    CHECK(perp({1, 0}) == Mode2{0, -1});
    CHECK(perp({0, 1}) == Mode2{1, 0});
}

TEST_CASE("orthogonal frames: worked examples", "[lattice]") {
    const auto axis = orthogonal_frame<3>({1, 0, 0});
    CHECK(axis[0] == std::array<double, 3>{0, 1, 0});
    CHECK(axis[1] == std::array<double, 3>{0, 0, 1});

    const auto scaled = orthogonal_frame<3>({0, 2, 0});
    CHECK(scaled[0] == std::array<double, 3>{2, 0, 0});
    CHECK(scaled[1] == std::array<double, 3>{0, 0, 2});

    const auto diag = orthogonal_frame<3>({1, 1, 0});
    const double r2 = std::sqrt(2.0);
    CHECK_THAT(diag[0][2], WithinAbs(r2, 1e-14));
    CHECK_THAT(diag[0][0], WithinAbs(0, 1e-14));
    CHECK_THAT(diag[1][0], WithinAbs(1, 1e-14));
    CHECK_THAT(diag[1][1], WithinAbs(-1, 1e-14));
}

TEST_CASE("orthogonal frames: invariants for all modes up to cutoff 3", "[lattice]") {
    for (const auto& k : modes_up_to<3>(3)) {
        const auto frame = orthogonal_frame<3>(k);
        const double len = norm<3>(k);
        for (int i = 0; i < 2; ++i) {
            double dot_k = 0, len2 = 0;
            for (int d = 0; d < 3; ++d) {
                dot_k += frame[i][d] * k[d];
                len2 += frame[i][d] * frame[i][d];
            }
            CHECK_THAT(dot_k, WithinAbs(0, 1e-12));
            CHECK_THAT(std::sqrt(len2), WithinRel(len, 1e-12));
        }
        double cross = 0;
        for (int d = 0; d < 3; ++d) cross += frame[0][d] * frame[1][d];
        CHECK_THAT(cross, WithinAbs(0, 1e-12));
    }
}

TEST_CASE("noise amplitude calibration: frozen values", "[lattice]") {
    CHECK_THAT((NoiseSpec2{0, 3, 0.05}.epsilon()),
               WithinAbs(std::sqrt(0.1), 1e-15));
    CHECK_THAT((NoiseSpec2{1, 3, 0.05}.epsilon()),
               WithinAbs(std::sqrt(0.05), 1e-15));
    // cutoff 2, alpha 2: sum |k|^-4 = 1 + 1/16 + 1/4 + 1 + 1/4 + 1/16 = 2.625.
    CHECK_THAT((NoiseSpec2{2, 2, 0.05}.inv_norm_sum()), WithinAbs(2.625, 1e-15));
    CHECK_THAT((NoiseSpec2{2, 2, 0.05}.epsilon()),
               WithinAbs(std::sqrt(0.1 / 2.3125), 1e-15));
    CHECK_THAT((NoiseSpec2{2, 2, 0.05}.epsilon()), WithinAbs(0.2079500980, 1e-9));
}

TEST_CASE("noise amplitude decreases with cutoff and vanishes with nu", "[lattice]") {
    double prev = NoiseSpec2{0, 3, 0.1}.epsilon();
    for (int cutoff = 1; cutoff <= 6; ++cutoff) {
        const double eps = NoiseSpec2{cutoff, 3, 0.1}.epsilon();
        CHECK(eps < prev);
        prev = eps;
    }
    CHECK(NoiseSpec2{3, 3, 0.0}.epsilon() == 0.0);
    CHECK_THROWS_AS((NoiseSpec2{3, 3, -1.0}.epsilon()), std::invalid_argument);
}

TEST_CASE("channel enumeration is frozen", "[lattice]") {
    const auto ch = NoiseSpec2{1, 3, 0.1}.channels();
    REQUIRE(ch.size() == 6);
    CHECK((is_zero<2>(ch[0].k) && ch[0].kind == Kind::A));
    CHECK((is_zero<2>(ch[1].k) && ch[1].kind == Kind::B));
    CHECK((ch[2].k == Mode2{0, 1} && ch[2].kind == Kind::A));
    CHECK((ch[3].k == Mode2{0, 1} && ch[3].kind == Kind::B));
    CHECK((ch[4].k == Mode2{1, 0} && ch[4].kind == Kind::A));
    CHECK((ch[5].k == Mode2{1, 0} && ch[5].kind == Kind::B));

    const auto ch3 = NoiseSpec3{1, 3, 0.1}.channels();
    CHECK(ch3.size() == 3 + 3 * 4);
    CHECK((is_zero<3>(ch3[0].k) && ch3[0].slot == 1));
    CHECK((is_zero<3>(ch3[2].k) && ch3[2].slot == 3));
    CHECK((ch3[3].slot == 1 && ch3[3].kind == Kind::A));
    CHECK((ch3[4].slot == 1 && ch3[4].kind == Kind::B));
    CHECK((ch3[5].slot == 2 && ch3[5].kind == Kind::A));
}

TEST_CASE("basis norm closed form and bounds", "[lattice]") {
    const double ref = 2 * pi * pi * (std::pow(25.0, -3.0) + 1.0);
    CHECK_THAT((basis_norm_alpha_sq<2>({3, 4}, 3)), WithinRel(ref, 1e-15));
    CHECK_THAT((basis_norm_alpha_sq<2>({3, 4}, 3)), WithinAbs(19.7404722, 1e-6));

    for (int alpha : {2, 3, 4})
        for (const auto& k : modes_up_to<2>(6)) {
            const double v = basis_norm_alpha_sq<2>(k, alpha);
            CHECK(v > 2 * pi * pi);
            CHECK(v <= 4 * pi * pi + 1e-12);
        }
    CHECK_THAT((basis_norm_alpha_sq<2>({0, 0}, 3)), WithinRel(two_pi * two_pi, 1e-15));
    CHECK_THAT((basis_norm_l2_sq<2>({1, 0}, 3)), WithinRel(2 * pi * pi, 1e-15));
}

TEST_CASE("basis norm matches direct grid quadrature", "[lattice]") {
    const int grid = 64;
    for (int alpha : {2, 3})
        for (const auto& k : modes_up_to<2>(3))
            for (Kind kind : {Kind::A, Kind::B}) {
                const Channel<2> ch{k, kind, 1};
                oracles::Field2Fn f = [&](double t1, double t2) {
                    return basis_value<2>(ch, alpha, {t1, t2});
                };
                const auto c = oracles::project_mode(f, k[0], k[1], grid);
                const double power2 =
                    2.0 * (std::norm(c[0]) + std::norm(c[1]));
                const double total = oracles::l2_sq_quadrature(f, grid);
                CHECK_THAT(total, WithinRel(power2 * two_pi * two_pi, 1e-12));
                const double k2a = std::pow(double(norm_sq<2>(k)), double(alpha));
                const double alpha_sq = two_pi * two_pi * (1.0 + k2a) * power2;
                CHECK_THAT(basis_norm_alpha_sq<2>(k, alpha), WithinRel(alpha_sq, 1e-12));
            }
}

TEST_CASE("basis field point values", "[lattice]") {
    const Channel<2> a10{{1, 0}, Kind::A, 1};
    auto v = basis_value<2>(a10, 3, {0, 0});
    CHECK_THAT(v[0], WithinAbs(0, 1e-15));
    CHECK_THAT(v[1], WithinAbs(-1, 1e-15));
    v = basis_value<2>(a10, 3, {pi, 0});
    CHECK_THAT(v[1], WithinAbs(1, 1e-15));

    const Channel<2> zero_a{{0, 0}, Kind::A, 1}, zero_b{{0, 0}, Kind::B, 1};
    CHECK(basis_value<2>(zero_a, 3, {0.7, 1.9}) == std::array<double, 2>{1, 0});
    CHECK(basis_value<2>(zero_b, 3, {0.7, 1.9}) == std::array<double, 2>{0, 1});

    // |k| = sqrt(2) scaling: amplitude |k|^-(alpha+1) along perp(k).
    const Channel<2> a11{{1, 1}, Kind::B, 1};
    v = basis_value<2>(a11, 2, {pi / 4, pi / 4});
    const double amp = std::pow(std::sqrt(2.0), -3.0);
    CHECK_THAT(v[0], WithinRel(amp, 1e-13));
    CHECK_THAT(v[1], WithinRel(-amp, 1e-13));

    const Channel<3> f3{{1, 0, 0}, Kind::A, 1};
    const auto w = basis_value<3>(f3, 3, {0, 0, 0});
    CHECK_THAT(w[1], WithinAbs(1, 1e-15));
    CHECK_THAT(w[0] + w[2], WithinAbs(0, 1e-15));
}
