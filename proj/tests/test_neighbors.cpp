#include <catch_amalgamated.hpp>

#include <random>

#include "betapoison/neighbors.hpp"
#include "oracles.hpp"

using namespace betapoison;

TEST_CASE("neighbor_count") {
    CHECK(neighbor_count(480, 0.1) == 48);
    CHECK(neighbor_count(5, 0.1) == 1);  // floor would give 0
    CHECK(neighbor_count(25, 0.16) == 4);
    CHECK(neighbor_count(10, 0.3) == 3);  // 10 * 0.3 is 2.9999999999999996 in binary
    CHECK_THROWS_AS(neighbor_count(10, 0.0), ArgumentError);
    CHECK_THROWS_AS(neighbor_count(10, 1.5), ArgumentError);
}

TEST_CASE("nearest neighbours agree with the brute-force table") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t n = 5 + rep * 7, d = 1 + rep % 6;
        std::vector<LabeledSample> samples;
        std::vector<oracle::Vec> pts;
        std::vector<std::size_t> ids;
        for (std::size_t i = 0; i < n; ++i) {
            FeatureVector f(d);
            // Coarse grid values create plenty of exact distance ties.
            for (auto& c : f) c = std::round(u(rng) * 4) / 4;
            const SampleId id = 1000 - 3 * i;  // ids not in index order
            samples.push_back({f, 0, false, id});
            pts.push_back(f);
            ids.push_back(id);
        }
        const Dataset ds(d, samples);
        const std::size_t count = std::min<std::size_t>(n - 1, 1 + rep);
        for (std::size_t q = 0; q < n; ++q) {
            const auto got = nearest_neighbors(ds, q, count);
            const auto want = oracle::neighbors(pts, ids, q, count);
            REQUIRE(got.size() == want.size());
            for (std::size_t j = 0; j < got.size(); ++j) {
                CHECK(got[j].index == want[j].index);
                CHECK(got[j].distance == want[j].distance);
            }
        }
    }
}

TEST_CASE("ties go to the smaller id and the query is excluded") {
    const Dataset ds(1, {{{0.0}, 0, false, 7}, {{1.0}, 0, false, 5}, {{-1.0}, 0, false, 3}, {{0.0}, 0, false, 9}});
    const auto nb = nearest_neighbors(ds, 0, 3);
    CHECK(nb[0].index == 3);  // the duplicate point, distance 0
    CHECK(nb[1].index == 2);  // id 3 before id 5 at distance 1
    CHECK(nb[2].index == 1);
    CHECK_THROWS_AS(nearest_neighbors(ds, 0, 4), CapacityError);
}
