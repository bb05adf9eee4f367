#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "torusflow/rng.hpp"

using namespace torusflow;
using Catch::Matchers::WithinAbs;

TEST_CASE("counter draws are pure functions of the key", "[rng]") {
    const CounterRng rng{42};
    CHECK(rng.word(1, 2, 3, 0) == rng.word(1, 2, 3, 0));
    CHECK(rng.normal(7, 11, 2) == rng.normal(7, 11, 2));
    CHECK(rng.word(1, 2, 3, 0) != rng.word(1, 2, 3, 1));
    CHECK(rng.word(1, 2, 3, 0) != rng.word(1, 2, 4, 0));
    CHECK(rng.word(1, 2, 3, 0) != rng.word(2, 2, 3, 0));
    CHECK(CounterRng{1}.word(0, 0, 0, 0) != CounterRng{2}.word(0, 0, 0, 0));
}

TEST_CASE("uniform draws live in (0, 1]", "[rng]") {
    const CounterRng rng{7};
    for (uint64_t i = 0; i < 20000; ++i) {
        const double u = rng.uniform(0, i, 0, 0);
        CHECK(u > 0.0);
        CHECK(u <= 1.0);
    }
}

TEST_CASE("normal draws have the right first moments", "[rng]") {
    const CounterRng rng{123};
    const int n = 200000;
    double sum = 0, sum2 = 0, lag = 0, prev = 0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal(0, uint64_t(i), 0);
        sum += z;
        sum2 += z * z;
        if (i > 0) lag += z * prev;
        prev = z;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    const double corr = lag / (n - 1);
    CHECK_THAT(mean, WithinAbs(0, 4.0 / std::sqrt(double(n))));
    CHECK_THAT(var, WithinAbs(1.0, 4.0 * std::sqrt(2.0 / n)));
    CHECK_THAT(corr, WithinAbs(0, 4.0 / std::sqrt(double(n))));
}

TEST_CASE("coarse Brownian increments aggregate the fine path exactly", "[rng]") {
    BrownianDriver fine{CounterRng{99}, 5, 1e-3, 1, 4};
    BrownianDriver coarse{CounterRng{99}, 5, 1e-3, 4, 4};
    for (uint64_t j = 0; j < 50; ++j) {
        const auto dc = coarse.increments(j);
        std::array<double, 4> sum{};
        for (uint64_t a = 0; a < 4; ++a) {
            const auto df = fine.increments(4 * j + a);
            for (int c = 0; c < 4; ++c) sum[c] += df[c];
        }
        for (int c = 0; c < 4; ++c) CHECK(dc[c] == sum[c]);
    }
    CHECK(coarse.dt() == 4e-3);
}

TEST_CASE("increment variance tracks dt", "[rng]") {
    BrownianDriver d{CounterRng{5}, 0, 2e-3, 1, 1};
    const int n = 100000;
    double sum2 = 0;
    for (int j = 0; j < n; ++j) sum2 += d.increments(uint64_t(j))[0] * d.increments(uint64_t(j))[0];
    CHECK_THAT(sum2 / n, WithinAbs(2e-3, 4.0 * 2e-3 * std::sqrt(2.0 / n)));
}

TEST_CASE("stream ids separate path families", "[rng]") {
    CHECK(stream_id(0, 0) != stream_id(1, 0));
    CHECK(stream_id(0, 1) != stream_id(1, 0));
    CHECK(stream_id(2, 3) == stream_id(2, 3));
}
