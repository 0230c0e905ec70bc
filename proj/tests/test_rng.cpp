#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "clusterrank/rng.hpp"

using namespace clusterrank;

TEST_CASE("streams with the same seed are identical") {
    RandomStream a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.uniform() == b.uniform());
    RandomStream c(42), d(43);
    bool any_diff = false;
    for (int i = 0; i < 10; ++i) any_diff = any_diff || (c.uniform() != d.uniform());
    CHECK(any_diff);
}

TEST_CASE("derived seeds separate by tag and arity") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t w = 0; w < 50; ++w) {
        seen.insert(derive_seed(7, w));
        for (std::uint64_t j = 0; j < 20; ++j) seen.insert(derive_seed(7, w, j));
    }
    CHECK(seen.size() == 50 + 50 * 20);
    CHECK(derive_seed(7, std::uint64_t{3}) != derive_seed(7, std::uint64_t{3}, std::uint64_t{0}));
}

TEST_CASE("uniform draws live in [0,1) and have the right mean") {
    RandomStream rng(1);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    CHECK_THAT(sum / n, Catch::Matchers::WithinAbs(0.5, 0.01));
}

TEST_CASE("normal draws have the requested moments") {
    RandomStream rng(2);
    const int n = 200000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sumsq += z * z;
    }
    CHECK_THAT(sum / n, Catch::Matchers::WithinAbs(0.0, 0.02));
    CHECK_THAT(sumsq / n, Catch::Matchers::WithinAbs(1.0, 0.03));
}

TEST_CASE("uniform_below is within bounds and roughly uniform") {
    RandomStream rng(3);
    std::vector<int> counts(7, 0);
    const int n = 70000;
    for (int i = 0; i < n; ++i) ++counts[rng.uniform_below(7)];
    for (const int c : counts) CHECK_THAT(static_cast<double>(c) / n, Catch::Matchers::WithinAbs(1.0 / 7, 0.01));
    CHECK_THROWS_AS(rng.uniform_below(0), std::invalid_argument);
}

TEST_CASE("truncated poisson respects its range and rejection semantics") {
    RandomStream rng(4);
    double sum = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const int k = rng.truncated_poisson(25.0, 8, 50);
        REQUIRE(k >= 8);
        REQUIRE(k <= 50);
        sum += k;
    }
    // conditioning on [8,50] barely moves the Poisson(25) mean
    CHECK_THAT(sum / n, Catch::Matchers::WithinAbs(25.0, 0.25));
}

TEST_CASE("shuffle permutes and sample_indices draws distinct values") {
    RandomStream rng(5);
    std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8, 9};
    auto w = v;
    rng.shuffle(w);
    auto ws = w;
    std::sort(ws.begin(), ws.end());
    CHECK(ws == v);

    const auto picked = rng.sample_indices(50, 12);
    REQUIRE(picked.size() == 12);
    std::set<std::uint32_t> uniq(picked.begin(), picked.end());
    CHECK(uniq.size() == 12);
    for (const auto i : picked) CHECK(i < 50);
    CHECK_THROWS_AS(rng.sample_indices(5, 6), std::invalid_argument);
}
