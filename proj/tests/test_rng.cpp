#include <catch2/catch_amalgamated.hpp>

#include "mlchains/rng.hpp"

using mlchains::Rng;

TEST_CASE("identical seeds reproduce the sequence") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("derived streams differ from each other and the base") {
    Rng base(7);
    Rng s0 = Rng::stream(7, 0);
    Rng s1 = Rng::stream(7, 1);
    REQUIRE(s0.next_u64() != s1.next_u64());
    REQUIRE(Rng::stream(7, 0).next_u64() != base.next_u64());
}

TEST_CASE("below stays in range and hits all values") {
    Rng rng(1);
    std::vector<int> seen(5, 0);
    for (int i = 0; i < 2000; ++i) {
        const auto v = rng.below(5);
        REQUIRE(v < 5);
        ++seen[static_cast<std::size_t>(v)];
    }
    for (int count : seen) REQUIRE(count > 0);
}

TEST_CASE("unit is in [0, 1)") {
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.unit();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
    }
}

TEST_CASE("permutation is a bijection") {
    Rng rng(11);
    for (int n : {1, 2, 7, 33}) {
        auto p = rng.permutation(n);
        std::sort(p.begin(), p.end());
        for (int i = 0; i < n; ++i) REQUIRE(p[static_cast<std::size_t>(i)] == i);
    }
}

TEST_CASE("poisson mean is roughly right") {
    Rng rng(5);
    double total = 0.0;
    const int trials = 20000;
    for (int i = 0; i < trials; ++i) total += rng.poisson(3.0);
    REQUIRE(total / trials == Catch::Approx(3.0).margin(0.1));
}
