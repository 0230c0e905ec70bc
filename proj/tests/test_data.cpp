#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <vector>

#include "clusterrank/data.hpp"

using namespace clusterrank;

namespace {

std::vector<Rating> toy_entries() {
    return {{10, 100, 1}, {10, 200, 0}, {20, 100, 0}, {20, 300, 1}, {30, 300, 1}};
}

}  // namespace

TEST_CASE("indexes are sorted and independent of entry order") {
    auto a = RatingsTable::from_entries(toy_entries());
    auto shuffled = toy_entries();
    std::swap(shuffled[0], shuffled[4]);
    std::swap(shuffled[1], shuffled[3]);
    auto b = RatingsTable::from_entries(shuffled);

    CHECK(a.experts() == std::vector<Id>{10, 20, 30});
    CHECK(a.clusters() == std::vector<Id>{100, 200, 300});
    CHECK(a.experts() == b.experts());
    CHECK(a.clusters() == b.clusters());
    for (std::size_t e = 0; e < a.expert_count(); ++e) {
        const auto ra = a.row(e), rb = b.row(e);
        REQUIRE(ra.size() == rb.size());
        for (std::size_t k = 0; k < ra.size(); ++k) {
            CHECK(ra[k].first == rb[k].first);
            CHECK(ra[k].second == rb[k].second);
        }
    }
}

TEST_CASE("validation rejects bad input") {
    CHECK_THROWS_AS(RatingsTable::from_entries({}), std::invalid_argument);
    CHECK_THROWS_AS(RatingsTable::from_entries({{1, 1, 2}}), std::invalid_argument);
    CHECK_THROWS_AS(RatingsTable::from_entries({{1, 1, 1}, {1, 1, 0}}), std::invalid_argument);

    std::map<Id, double> missing{{10, 1.0}};
    CHECK_THROWS_AS(RatingsTable::from_entries(toy_entries(), missing), std::invalid_argument);
    std::map<Id, double> nonpos{{10, 1.0}, {20, 0.0}, {30, 1.0}};
    CHECK_THROWS_AS(RatingsTable::from_entries(toy_entries(), nonpos), std::invalid_argument);
}

TEST_CASE("weights attach to experts and extras are tolerated") {
    std::map<Id, double> w{{10, 2.0}, {20, 1.5}, {30, 1.0}, {99, 4.0}};
    const auto t = RatingsTable::from_entries(toy_entries(), w);
    REQUIRE(t.has_weights());
    CHECK(t.weight_at(0) == 2.0);
    CHECK(t.weight_at(1) == 1.5);
    CHECK(t.weight_at(2) == 1.0);
    CHECK(t.weights_map().count(99) == 0);
}

TEST_CASE("cluster counts and observed probabilities") {
    const auto t = RatingsTable::from_entries(toy_entries());
    const auto c = t.cluster_counts();
    CHECK(c.total == std::vector<std::uint32_t>{2, 1, 2});
    CHECK(c.ones == std::vector<std::uint32_t>{1, 0, 2});
    const auto p = t.observed_probabilities();
    CHECK(p[0] == 0.5);
    CHECK(p[1] == 0.0);
    CHECK(p[2] == 1.0);
}

TEST_CASE("restriction keeps exactly the requested clusters and their raters") {
    std::map<Id, double> w{{10, 2.0}, {20, 1.5}, {30, 3.0}};
    const auto t = RatingsTable::from_entries(toy_entries(), w);
    const std::vector<Id> keep{300};
    const auto r = t.restricted_to(keep);
    CHECK(r.clusters() == keep);
    CHECK(r.experts() == std::vector<Id>{20, 30});  // expert 10 never rated 300
    CHECK(r.size() == 2);
    CHECK(r.weight_at(0) == 1.5);
    CHECK(r.weight_at(1) == 3.0);

    const std::vector<Id> all{100, 200, 300};
    const auto full = t.restricted_to(all);
    CHECK(full.size() == t.size());
    CHECK(full.experts() == t.experts());
}
