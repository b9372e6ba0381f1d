#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <vector>

#include "coref/rng.hpp"

using coref::Rng;

TEST_SUITE("rng") {

TEST_CASE("same seed, same stream") {
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next();
        CHECK(x == b.next());
        differs |= x != c.next();
    }
    CHECK(differs);
}

TEST_CASE("raw stream is the standard 64-bit Mersenne Twister") {
    // 10000th output of the default-seeded engine, fixed by the C++ standard
    Rng rng(5489u);
    std::uint64_t x = 0;
    for (int i = 0; i < 10000; ++i) x = rng.next();
    CHECK(x == 9981545732273789042ULL);
}

TEST_CASE("uniform and below stay in range") {
    Rng rng(1);
    std::vector<std::size_t> counts(7, 0);
    for (int i = 0; i < 70000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const auto k = rng.below(7);
        REQUIRE(k < 7);
        ++counts[k];
    }
    for (auto c : counts) CHECK(c == doctest::Approx(10000).epsilon(0.05));
    CHECK(rng.below(1) == 0);
}

TEST_CASE("shuffle is a seeded permutation") {
    std::vector<int> a(50), b(50);
    std::iota(a.begin(), a.end(), 0);
    std::iota(b.begin(), b.end(), 0);
    Rng r1(9), r2(9);
    r1.shuffle(std::span<int>(a));
    r2.shuffle(std::span<int>(b));
    CHECK(a == b);
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> identity(50);
    std::iota(identity.begin(), identity.end(), 0);
    CHECK(sorted == identity);
    CHECK(a != identity);
}

TEST_CASE("normal draws have unit moments") {
    Rng rng(3);
    const int n = 200000;
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    CHECK(std::abs(mean) < 0.01);
    CHECK(sq / n - mean * mean == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("mixed seeds separate streams") {
    CHECK(coref::mix_seed(1, 0) != coref::mix_seed(1, 1));
    CHECK(coref::mix_seed(1, 0) != coref::mix_seed(2, 0));
    CHECK(coref::mix_seed(7, 3) == coref::mix_seed(7, 3));
}

}  // TEST_SUITE
