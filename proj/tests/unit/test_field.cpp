#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "support/oracles.hpp"
#include "torusflow/field.hpp"
#include "torusflow/operators.hpp"

using namespace torusflow;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Direct trigonometric sum, independent of the grid transforms.
std::complex<double> eval_box(const CoeffBox2& box, double t1, double t2) {
    std::complex<double> s{};
    Mode2 m = box.first_mode();
    do {
        s += box.at(m) * std::exp(std::complex<double>(0.0, m[0] * t1 + m[1] * t2));
    } while (box.next_mode(m));
    return s;
}

DivFreeField taylor_green_field(double amplitude, double nu, double T, double s, int alpha) {
    const double e = std::exp(-2.0 * nu * (T - s));
    const double c = 0.5 * amplitude * e * std::pow(2.0, 0.5 * (alpha + 1));
    DivFreeField f = DivFreeField::zero(alpha, 2);
    f.set({1, 1}, 0.0, -c);
    f.set({1, -1}, 0.0, c);
    return f;
}

}  // namespace

TEST_CASE("product grid covers quadratic interactions", "[field]") {
    CHECK(product_grid(0) == 8);
    CHECK(product_grid(1) == 8);
    CHECK(product_grid(2) == 8);
    CHECK(product_grid(3) == 16);
    CHECK(product_grid(10) == 32);
    for (int k = 0; k <= 12; ++k) {
        const int g = product_grid(k);
        CHECK(g % 8 == 0);
        CHECK(g >= 3 * k + 2);
        // quadratic products are alias-free at least back down to the field's bandwidth
        CHECK(std::min(2 * k, g - 2 * k - 1) >= k);
    }
}

TEST_CASE("coefficient boxes round trip through grid samples", "[field]") {
    const auto f = random_divfree(3, 3, 1.0, 77, true);
    const auto boxes = f.to_boxes();
    for (int c = 0; c < 2; ++c) {
        const auto grid = to_grid<2>(boxes[c], 16);
        const auto back = from_grid<2>(grid, 16, boxes[c].half);
        double worst = 0;
        for (size_t i = 0; i < back.a.size(); ++i)
            worst = std::max(worst, std::abs(back.a[i] - boxes[c].a[i]));
        CHECK(worst <= 1e-14);
    }

    // single cosine mode lands on the expected grid samples
    CoeffBox2 cosbox = CoeffBox2::square(1);
    cosbox.at({1, 0}) = 0.5;
    cosbox.at({-1, 0}) = 0.5;
    const auto vals = to_grid<2>(cosbox, 8);
    for (int j0 = 0; j0 < 8; ++j0)
        for (int j1 = 0; j1 < 8; ++j1)
            CHECK_THAT(vals[size_t(j0) * 8 + j1], WithinAbs(std::cos(two_pi * j0 / 8.0), 1e-14));
}

TEST_CASE("grid samples agree with direct point evaluation", "[field]") {
    const auto f = random_divfree(3, 2, 0.7, 101, true);
    const int g = 16;
    const auto grids = sample_grid(f, g);
    std::vector<std::array<double, 2>> pts;
    for (int j0 = 0; j0 < g; ++j0)
        for (int j1 = 0; j1 < g; ++j1) pts.push_back({two_pi * j0 / g, two_pi * j1 / g});
    const auto direct = evaluate(f, pts);
    double worst = 0;
    for (size_t p = 0; p < pts.size(); ++p) {
        worst = std::max(worst, std::abs(direct[p][0] - grids[0][p]));
        worst = std::max(worst, std::abs(direct[p][1] - grids[1][p]));
    }
    CHECK(worst <= 1e-13);
}

TEST_CASE("3D coefficient boxes round trip and differentiate", "[field]") {
    CoeffBox3 box({2, 1, 1});
    const CounterRng rng{5};
    uint64_t ctr = 0;
    Mode3 m = box.first_mode();
    do {
        Mode3 neg{-m[0], -m[1], -m[2]};
        if (m < neg) {
            const double re = 2 * rng.uniform(1, 0, 0, ctr++) - 1;
            const double im = 2 * rng.uniform(1, 0, 0, ctr++) - 1;
            box.at(m) = {re, im};
            box.at(neg) = {re, -im};
        } else if (m == neg) {
            box.at(m) = 2 * rng.uniform(1, 0, 0, ctr++) - 1;
        }
    } while (box.next_mode(m));
    CHECK(box.hermitian_defect() <= 1e-15);

    const auto grid = to_grid<3>(box, 8);
    const auto back = from_grid<3>(grid, 8, box.half);
    double worst = 0;
    for (size_t i = 0; i < back.a.size(); ++i)
        worst = std::max(worst, std::abs(back.a[i] - box.a[i]));
    CHECK(worst <= 1e-13);

    CoeffBox3 cosb({1, 0, 0});
    cosb.at({1, 0, 0}) = 0.5;
    cosb.at({-1, 0, 0}) = 0.5;
    const auto dvals = to_grid<3>(cosb.derivative(0), 8);
    for (int j = 0; j < 8; ++j)
        CHECK_THAT(dvals[size_t(j) * 64], WithinAbs(-std::sin(two_pi * j / 8.0), 1e-14));
}

TEST_CASE("field evaluation matches the channel formula", "[field]") {
    DivFreeField a10 = DivFreeField::zero(3, 1);
    a10.set({1, 0}, 1.0, 0.0);
    auto v = evaluate_at(a10, 0.0, 0.0);
    CHECK_THAT(v[0], WithinAbs(0.0, 1e-15));
    CHECK_THAT(v[1], WithinAbs(-1.0, 1e-15));
    v = evaluate_at(a10, pi, 0.3);
    CHECK_THAT(v[1], WithinAbs(1.0, 1e-15));
    v = evaluate_at(a10, pi / 2, 1.7);
    CHECK_THAT(v[0], WithinAbs(0.0, 1e-15));
    CHECK_THAT(v[1], WithinAbs(0.0, 1e-15));

    DivFreeField b11 = DivFreeField::zero(2, 2);
    b11.set({1, 1}, 0.0, 1.0);
    v = evaluate_at(b11, pi / 4, pi / 4);
    CHECK_THAT(v[0], WithinAbs(std::pow(2.0, -1.5), 1e-15));
    CHECK_THAT(v[1], WithinAbs(-std::pow(2.0, -1.5), 1e-15));

    DivFreeField con = DivFreeField::zero(3, 0);
    con.mean = {0.3, -0.2};
    v = evaluate_at(con, 1.1, 2.2);
    CHECK_THAT(v[0], WithinAbs(0.3, 1e-15));
    CHECK_THAT(v[1], WithinAbs(-0.2, 1e-15));

    const CounterRng rng{42};
    const std::vector<Channel<2>> chans = {
        {{1, 0}, Kind::A, 1}, {{1, -2}, Kind::B, 1}, {{0, 3}, Kind::A, 1}, {{2, 2}, Kind::B, 1}};
    for (int alpha : {2, 3}) {
        uint64_t ctr = 0;
        for (const auto& ch : chans) {
            DivFreeField f = DivFreeField::zero(alpha, 3);
            f.set(ch.k, ch.kind == Kind::A ? 1.0 : 0.0, ch.kind == Kind::B ? 1.0 : 0.0);
            for (int rep = 0; rep < 4; ++rep) {
                const double t1 = two_pi * rng.uniform(2, uint64_t(alpha), 0, ctr++);
                const double t2 = two_pi * rng.uniform(2, uint64_t(alpha), 0, ctr++);
                const auto got = evaluate_at(f, t1, t2);
                const auto want = basis_value<2>(ch, alpha, {t1, t2});
                CHECK_THAT(got[0], WithinAbs(want[0], 1e-14));
                CHECK_THAT(got[1], WithinAbs(want[1], 1e-14));
            }
        }
    }
}

TEST_CASE("taylor-green field matches its closed form", "[field]") {
    const double A = 0.7, nu = 0.1, T = 1.0, s = 0.35;
    const oracles::TaylorGreen tg{A, nu, T};
    for (int alpha : {2, 3}) {
        const auto f = taylor_green_field(A, nu, T, s, alpha);
        const CounterRng rng{9};
        for (int rep = 0; rep < 12; ++rep) {
            const double t1 = two_pi * rng.uniform(0, uint64_t(alpha), 0, uint64_t(2 * rep));
            const double t2 = two_pi * rng.uniform(0, uint64_t(alpha), 0, uint64_t(2 * rep + 1));
            const auto got = evaluate_at(f, t1, t2);
            const auto want = tg.velocity(s, t1, t2);
            CHECK_THAT(got[0], WithinAbs(want[0], 1e-14));
            CHECK_THAT(got[1], WithinAbs(want[1], 1e-14));
        }
        const auto n = f.norms();
        CHECK_THAT(n.l2_sq, WithinRel(tg.l2_sq(s), 1e-13));
        CHECK_THAT(n.grad_l2_sq, WithinRel(tg.grad_l2_sq(s), 1e-13));
        CHECK(f.sup_bound() >= std::sqrt(2.0) * A * std::exp(-2 * nu * (T - s)) - 1e-12);
    }
}

TEST_CASE("projection recovers pair-basis coefficients from grid data", "[field]") {
    const auto f = random_divfree(3, 3, 0.8, 123, true);
    const int g = 16;
    const auto grids = sample_grid(f, g);
    const std::array<CoeffBox2, 2> rebuilt = {from_grid<2>(grids[0], g, {3, 3}),
                                              from_grid<2>(grids[1], g, {3, 3})};
    const auto proj = leray_project_boxes(rebuilt, 3, 3);
    REQUIRE(proj.entries.size() == f.entries.size());
    for (size_t i = 0; i < f.entries.size(); ++i) {
        CHECK(proj.entries[i].k == f.entries[i].k);
        CHECK_THAT(proj.entries[i].a_cos, WithinAbs(f.entries[i].a_cos, 1e-12));
        CHECK_THAT(proj.entries[i].a_sin, WithinAbs(f.entries[i].a_sin, 1e-12));
    }
    CHECK_THAT(proj.mean[0], WithinAbs(f.mean[0], 1e-14));
    CHECK_THAT(proj.mean[1], WithinAbs(f.mean[1], 1e-14));

    // projection is idempotent
    const auto twice = leray_project_boxes(proj.to_boxes(), 3, 3);
    for (size_t i = 0; i < f.entries.size(); ++i) {
        CHECK_THAT(twice.entries[i].a_cos, WithinAbs(proj.entries[i].a_cos, 1e-13));
        CHECK_THAT(twice.entries[i].a_sin, WithinAbs(proj.entries[i].a_sin, 1e-13));
    }

    // closed-form L2 norm equals the grid quadrature (band-limited, so exact)
    double quad = 0;
    for (size_t p = 0; p < grids[0].size(); ++p)
        quad += grids[0][p] * grids[0][p] + grids[1][p] * grids[1][p];
    quad *= (two_pi / g) * (two_pi / g);
    CHECK_THAT(f.norms().l2_sq, WithinRel(quad, 1e-12));
}

TEST_CASE("pair-basis fields are divergence-free and hermitian", "[field]") {
    const auto f = random_divfree(4, 2, 1.3, 17, true);
    const auto boxes = f.to_boxes();
    CHECK(boxes[0].hermitian_defect() <= 1e-15);
    CHECK(boxes[1].hermitian_defect() <= 1e-15);
    CHECK(divergence_defect<2>({boxes[0], boxes[1]}) <= 1e-12);
}

TEST_CASE("advection worked examples", "[field]") {
    // constant field advecting a single mode gives c . grad v
    DivFreeField c = DivFreeField::zero(3, 1);
    c.mean = {0.4, -0.3};
    DivFreeField a10 = DivFreeField::zero(3, 1);
    a10.set({1, 0}, 1.0, 0.0);
    const auto w = advect(c, a10);
    CHECK(std::sqrt(w.comp[0].l2_sq()) <= 1e-14);
    CHECK_THAT(w.comp[1].get({1, 0}).imag(), WithinAbs(-0.2, 1e-14));
    CHECK_THAT(w.comp[1].get({-1, 0}).imag(), WithinAbs(0.2, 1e-14));
    CHECK_THAT(w.comp[1].get({1, 0}).real(), WithinAbs(0.0, 1e-14));
    const double expect_l2 = 0.4 * 0.4 * 2 * pi * pi;
    CHECK_THAT(w.comp[1].l2_sq(), WithinRel(expect_l2, 1e-12));

    // basis fields do not advect themselves
    const auto self = advect(a10, a10);
    CHECK(self.l2_sq() <= 1e-28);

    // taylor-green self-advection is a pure gradient: nonzero, but killed by projection
    const double A = 0.9, nu = 0.1, T = 1.0, s = 0.25;
    const double e = std::exp(-2 * nu * (T - s));
    const auto tg = taylor_green_field(A, nu, T, s, 3);
    const auto wtg = advect(tg, tg);
    const double q = A * A * e * e;
    CHECK_THAT(wtg.l2_sq(), WithinRel(pi * pi * q * q, 1e-12));
    CHECK(leray_project(wtg, 3, 4).norms().l2_sq <= 1e-24);
    CHECK(wtg.comp[0].hermitian_defect() <= 1e-14);

    DivFreeField other = DivFreeField::zero(2, 1);
    CHECK_THROWS_AS(advect(a10, other), std::invalid_argument);
    DivFreeField big = random_divfree(4, 3, 1.0, 3);
    CHECK_THROWS_AS(advect(a10, big), std::invalid_argument);
}

TEST_CASE("channel directional derivatives", "[field]") {
    // ((1,0), cos) channel applied to the (0,1) sine mode: -cos t1 cos t2 e1
    DivFreeField b01 = DivFreeField::zero(2, 1);
    b01.set({0, 1}, 0.0, 1.0);
    const Channel<2> ch{{1, 0}, Kind::A, 1};
    const auto d = directional_derivative(ch, b01);
    for (int s1 : {-1, 1})
        for (int s2 : {-1, 1}) {
            const auto got = d.comp[0].get({s1, s2});
            CHECK_THAT(got.real(), WithinAbs(-0.25, 1e-15));
            CHECK_THAT(got.imag(), WithinAbs(0.0, 1e-15));
        }
    CHECK(d.comp[1].l2_sq() <= 1e-30);

    // every channel field is constant along itself
    const NoiseSpec2 spec{2, 3, 0.05};
    for (const auto& chan : spec.channels()) {
        DivFreeField f = DivFreeField::zero(spec.alpha, std::max(1, spec.cutoff));
        if (is_zero<2>(chan.k))
            f.mean[chan.kind == Kind::A ? 0 : 1] = 1.0;
        else
            f.set(chan.k, chan.kind == Kind::A ? 1.0 : 0.0, chan.kind == Kind::B ? 1.0 : 0.0);
        CHECK(directional_derivative(chan, f).l2_sq() <= 1e-28);
    }

    // finite-difference cross-check along the channel direction
    const auto f = random_divfree(3, 3, 0.6, 31, true);
    const Channel<2> chb{{1, 2}, Kind::B, 1};
    const auto db = directional_derivative(chb, f);
    const double t1 = 0.83, t2 = 2.41;
    const auto chvec = basis_value<2>(chb, f.alpha, {t1, t2});
    const double h = 1e-5;
    for (int comp = 0; comp < 2; ++comp) {
        const auto fwd = evaluate_at(f, t1 + h * chvec[0], t2 + h * chvec[1]);
        const auto bwd = evaluate_at(f, t1 - h * chvec[0], t2 - h * chvec[1]);
        const double fd = (fwd[comp] - bwd[comp]) / (2 * h);
        const auto exact = eval_box(db.comp[comp], t1, t2);
        CHECK_THAT(exact.imag(), WithinAbs(0.0, 1e-13));
        CHECK_THAT(exact.real(), WithinAbs(fd, 1e-8));
    }
}

TEST_CASE("noise channel sum reproduces the viscous term", "[field]") {
    uint64_t seed = 1000;
    for (int cutoff : {0, 1, 2, 3})
        for (int alpha : {2, 3, 4}) {
            const NoiseSpec2 spec{cutoff, alpha, 0.05};
            const auto f = random_divfree(3, alpha, 1.0, seed++, true);
            CHECK(laplacian_identity_defect(f, spec) <= 1e-12);
        }

    // 3D: same identity for a random vector field
    const NoiseSpec3 spec3{1, 2, 0.1};
    std::array<CoeffBox3, 3> v{CoeffBox3::square(2), CoeffBox3::square(2), CoeffBox3::square(2)};
    const CounterRng rng{77};
    uint64_t ctr = 0;
    for (int comp = 0; comp < 3; ++comp) {
        Mode3 m = v[comp].first_mode();
        do {
            Mode3 neg{-m[0], -m[1], -m[2]};
            if (m < neg) {
                const double re = 2 * rng.uniform(3, 0, 0, ctr++) - 1;
                const double im = 2 * rng.uniform(3, 0, 0, ctr++) - 1;
                v[comp].at(m) = {re, im};
                v[comp].at(neg) = {re, -im};
            } else if (m == neg) {
                v[comp].at(m) = 2 * rng.uniform(3, 0, 0, ctr++) - 1;
            }
        } while (v[comp].next_mode(m));
    }
    CHECK(laplacian_identity_defect<3>(v, spec3) <= 1e-12);
}

TEST_CASE("noise fields carry no drift correction", "[field]") {
    CHECK(strat_ito_correction(NoiseSpec2{3, 3, 0.05}) <= 1e-12);
    CHECK(strat_ito_correction(NoiseSpec2{2, 2, 0.1}) <= 1e-12);
    CHECK(strat_ito_correction(NoiseSpec3{1, 2, 0.1}) <= 1e-12);
}

TEST_CASE("scalar fields round trip and differentiate", "[field]") {
    ScalarField p;
    p.set({2, 0}, 0.5, 0.0);
    p.set({1, -1}, 0.0, 0.7);
    CHECK_THAT(p.l2_sq(), WithinRel(2 * pi * pi * (0.25 + 0.49), 1e-14));

    const auto box = p.to_box();
    CHECK(box.hermitian_defect() <= 1e-16);
    const auto back = scalar_from_box(box, p.k_max);
    REQUIRE(back.entries.size() == p.entries.size());
    for (size_t i = 0; i < p.entries.size(); ++i) {
        CHECK(back.entries[i].k == p.entries[i].k);
        CHECK_THAT(back.entries[i].c_cos, WithinAbs(p.entries[i].c_cos, 1e-15));
        CHECK_THAT(back.entries[i].c_sin, WithinAbs(p.entries[i].c_sin, 1e-15));
    }

    const double t1 = 1.3, t2 = -0.4;
    TrigTables tab;
    tab.build(&t1, &t2, 1, p.k_max);
    double g0 = 0, g1 = 0, val = 0;
    accumulate_scalar_gradient(p, tab, 1.0, &g0, &g1);
    accumulate_scalar(p, tab, 1.0, &val);
    const double want_val = 0.5 * std::cos(2 * t1) + 0.7 * std::sin(t1 - t2);
    const double want_g0 = -std::sin(2 * t1) + 0.7 * std::cos(t1 - t2);
    const double want_g1 = -0.7 * std::cos(t1 - t2);
    CHECK_THAT(val, WithinAbs(want_val, 1e-14));
    CHECK_THAT(g0, WithinAbs(want_g0, 1e-14));
    CHECK_THAT(g1, WithinAbs(want_g1, 1e-14));
}

TEST_CASE("field arithmetic and pruning", "[field]") {
    auto f = random_divfree(2, 3, 1.0, 55);
    const auto g = random_divfree(2, 3, 1.0, 56);
    auto sum = f;
    sum.axpy(2.0, g);
    REQUIRE(sum.entries.size() == f.entries.size());
    for (size_t i = 0; i < f.entries.size(); ++i)
        CHECK_THAT(sum.entries[i].a_cos,
                   WithinAbs(f.entries[i].a_cos + 2.0 * g.entries[i].a_cos, 1e-15));

    auto h = random_divfree(2, 3, 1.0, 55);
    REQUIRE(h.entries.size() == f.entries.size());
    for (size_t i = 0; i < f.entries.size(); ++i) {
        CHECK(h.entries[i].a_cos == f.entries[i].a_cos);
        CHECK(h.entries[i].a_sin == f.entries[i].a_sin);
    }

    DivFreeField tiny = DivFreeField::zero(3, 2);
    tiny.set({1, 0}, 1.0, 0.0);
    tiny.set({0, 1}, 1e-20, 0.0);
    tiny.prune();
    CHECK(tiny.entries.size() == 1);
    CHECK(tiny.entries[0].k == Mode2{1, 0});

    CHECK_THROWS_AS(tiny.set({-1, 0}, 1.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(tiny.set({0, 3}, 1.0, 0.0), std::invalid_argument);
}
