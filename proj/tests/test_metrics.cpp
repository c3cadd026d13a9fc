#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "support.hpp"

using namespace geaf;
using Catch::Approx;

TEST_CASE("confusion counts and F1 on a small example", "[metrics]") {
    const std::vector<int> y{1, 1, 0, 0, 1, 0};
    const std::vector<int> p{1, 0, 0, 1, 1, 0};
    const auto m = compute_metrics(y, p);
    CHECK(m.tp == 2);
    CHECK(m.fp == 1);
    CHECK(m.tn == 2);
    CHECK(m.fn == 1);
    CHECK(m.accuracy == Approx(4.0 / 6.0));
    CHECK(m.f1 == Approx(2.0 / 3.0));
    CHECK(m.mae == Approx(2.0 / 6.0));
    CHECK(m.rmse == Approx(std::sqrt(2.0 / 6.0)));
}

TEST_CASE("F1 is zero without any positives", "[metrics]") {
    const std::vector<int> zeros(5, 0);
    const auto m = compute_metrics(zeros, zeros);
    CHECK(m.accuracy == 1.0);
    CHECK(m.f1 == 0.0);
}

TEST_CASE("binary error identities hold", "[metrics][property]") {
    std::mt19937_64 rng(17);
    std::bernoulli_distribution coin(0.5);
    std::uniform_int_distribution<int> len(1, 300);
    for (int t = 0; t < 500; ++t) {
        const int n = len(rng);
        std::vector<int> y(n);
        std::vector<int> p(n);
        for (int i = 0; i < n; ++i) {
            y[i] = coin(rng);
            p[i] = coin(rng);
        }
        const auto m = compute_metrics(y, p);
        CHECK(std::abs(m.mae - (1.0 - m.accuracy)) <= 1e-12);
        CHECK(std::abs(m.rmse - std::sqrt(m.mae)) <= 1e-12);
    }
}

TEST_CASE("invalid inputs are rejected", "[metrics]") {
    const std::vector<int> a{0, 1};
    const std::vector<int> b{0};
    const std::vector<int> c{0, 2};
    const std::vector<int> none;
    CHECK_THROWS_AS(compute_metrics(a, b), Error);
    CHECK_THROWS_AS(compute_metrics(none, none), Error);
    CHECK_THROWS_AS(compute_metrics(a, c), Error);
}

TEST_CASE("fitness modes", "[fitness]") {
    CHECK(fitness(0.9, 0.8) == Approx(0.72));
    CHECK(fitness(FitnessMode::product, 0.9, 0.8) == Approx(0.72));
    CHECK(fitness(FitnessMode::test_f1, 0.9, 0.8) == 0.8);
    CHECK(fitness(0.0, 0.8) == 0.0);
    CHECK_THROWS_AS(fitness(1.1, 0.5), Error);
    CHECK_THROWS_AS(fitness(0.5, -0.1), Error);
    CHECK_THROWS_AS(fitness(std::nan(""), 0.5), Error);
}
