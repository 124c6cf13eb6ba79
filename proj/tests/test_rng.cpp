#include <catch2/catch_amalgamated.hpp>

#include <mpgpe/rng.hpp>

#include "support/oracles.hpp"

using mpgpe::Rng;

TEST_CASE("same seed reproduces the stream", "[rng]") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) REQUIRE(a.uniform() == b.uniform());
    Rng c(42), d(42);
    for (int i = 0; i < 1000; ++i) REQUIRE(c.normal() == d.normal());
}

TEST_CASE("derived streams are independent of parent consumption", "[rng]") {
    Rng parent(7);
    const Rng before = parent.derive(3);
    for (int i = 0; i < 100; ++i) parent.uniform();
    Rng after = parent.derive(3);
    Rng b = before;
    for (int i = 0; i < 100; ++i) REQUIRE(b.uniform() == after.uniform());

    Rng s1 = parent.derive(1);
    Rng s2 = parent.derive(2);
    REQUIRE(s1.uniform() != s2.uniform());
}

TEST_CASE("uniform draws pass a KS test", "[rng]") {
    Rng rng(123);
    std::vector<double> xs(10000);
    for (auto& x : xs) x = rng.uniform();
    const double d = oracles::ks_statistic(xs, [](double x) {
        return std::clamp(x, 0.0, 1.0);
    });
    REQUIRE(d < 0.02);
}

TEST_CASE("normal draws match Gaussian moments and CDF", "[rng]") {
    Rng rng(99);
    const int n = 100000;
    std::vector<double> xs(n);
    double mean = 0.0;
    for (auto& x : xs) {
        x = rng.normal();
        mean += x;
    }
    mean /= n;
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= n - 1;
    REQUIRE(std::abs(mean) < 0.02);
    REQUIRE(std::abs(var - 1.0) < 0.02);
    const double d = oracles::ks_statistic(xs, [](double x) {
        return oracles::normal_cdf(x, 0.0, 1.0);
    });
    REQUIRE(d < 0.01);
}

TEST_CASE("uniform_index is unbiased over small ranges", "[rng]") {
    Rng rng(5);
    std::vector<int> counts(7, 0);
    const int n = 70000;
    for (int i = 0; i < n; ++i) ++counts[rng.uniform_index(7)];
    for (int c : counts) REQUIRE(std::abs(c - n / 7) < 500);
}

TEST_CASE("permutation is a valid shuffle", "[rng]") {
    Rng rng(11);
    auto p = rng.permutation(50);
    std::vector<bool> seen(50, false);
    for (auto i : p) {
        REQUIRE(i < 50);
        REQUIRE(!seen[i]);
        seen[i] = true;
    }
}
