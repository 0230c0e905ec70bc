#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "clusterrank/quadrature.hpp"

using namespace clusterrank;

namespace {

// Closed-form Gaussian moments: integral of x^(2k) exp(-x^2) dx
// = sqrt(pi) * (2k-1)!! / 2^k.
double gaussian_moment(int two_k) {
    double v = std::sqrt(std::numbers::pi);
    for (int i = 1; i < two_k; i += 2) v *= 0.5 * i;
    return v;
}

double apply_moment(const QuadratureRule& rule, int power) {
    double sum = 0.0;
    for (int i = 0; i < rule.order; ++i)
        sum += rule.weights[i] * std::pow(rule.nodes[i], power);
    return sum;
}

}  // namespace

TEST_CASE("order 1 is the midpoint rule with total weight sqrt(pi)") {
    const auto rule = gauss_hermite(1);
    REQUIRE(rule.nodes.size() == 1);
    CHECK(rule.nodes[0] == 0.0);
    CHECK_THAT(rule.weights[0], Catch::Matchers::WithinAbs(std::sqrt(std::numbers::pi), 1e-14));
}

TEST_CASE("order 2 has nodes at +-1/sqrt(2) with equal weights") {
    const auto rule = gauss_hermite(2);
    const double half = std::sqrt(std::numbers::pi) / 2.0;
    CHECK_THAT(rule.nodes[0], Catch::Matchers::WithinAbs(-1.0 / std::numbers::sqrt2, 1e-14));
    CHECK_THAT(rule.nodes[1], Catch::Matchers::WithinAbs(1.0 / std::numbers::sqrt2, 1e-14));
    CHECK_THAT(rule.weights[0], Catch::Matchers::WithinAbs(half, 1e-14));
    CHECK_THAT(rule.weights[1], Catch::Matchers::WithinAbs(half, 1e-14));
}

TEST_CASE("order 20 integrates x^4 exp(-x^2) to 3 sqrt(pi)/4") {
    const auto rule = gauss_hermite(20);
    CHECK_THAT(apply_moment(rule, 4),
               Catch::Matchers::WithinAbs(0.75 * std::sqrt(std::numbers::pi), 1e-10));
}

TEST_CASE("rule structure holds across orders") {
    for (const int order : {1, 2, 3, 5, 10, 20, 30, 31, 50}) {
        CAPTURE(order);
        const auto rule = gauss_hermite(order);
        REQUIRE(rule.order == order);
        REQUIRE(rule.nodes.size() == static_cast<std::size_t>(order));
        REQUIRE(rule.weights.size() == static_cast<std::size_t>(order));

        double wsum = 0.0;
        for (int i = 0; i < order; ++i) {
            CHECK(rule.weights[i] > 0.0);
            if (i > 0) CHECK(rule.nodes[i] > rule.nodes[i - 1]);
            // exact bitwise symmetry
            CHECK(rule.nodes[i] == -rule.nodes[order - 1 - i]);
            CHECK(rule.weights[i] == rule.weights[order - 1 - i]);
            wsum += rule.weights[i];
        }
        const double sqrt_pi = std::sqrt(std::numbers::pi);
        CHECK_THAT(wsum, Catch::Matchers::WithinRel(sqrt_pi, 1e-12));
    }
}

TEST_CASE("polynomials up to degree 2n-1 are integrated exactly") {
    for (const int order : {3, 7, 12}) {
        const auto rule = gauss_hermite(order);
        for (int power = 0; power <= 2 * order - 1; ++power) {
            CAPTURE(order, power);
            const double expected = power % 2 == 1 ? 0.0 : gaussian_moment(power);
            CHECK_THAT(apply_moment(rule, power),
                       Catch::Matchers::WithinAbs(expected, 1e-9 * std::max(1.0, expected)));
        }
    }
}

TEST_CASE("non-positive order is rejected") {
    CHECK_THROWS_AS(gauss_hermite(0), std::invalid_argument);
    CHECK_THROWS_AS(gauss_hermite(-3), std::invalid_argument);
}
