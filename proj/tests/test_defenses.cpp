#include <catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "betapoison/defenses.hpp"
#include "oracles.hpp"

using namespace betapoison;

namespace {

LabeledSample at(std::initializer_list<double> f, Label label, SampleId id, bool poison = false) {
    return {FeatureVector(f), label, poison, id};
}

// 5 tight points near (10, 10) and a 4x5 unit grid; n = 25.
Dataset kpb_fixture() {
    std::vector<LabeledSample> s;
    SampleId id = 0;
    const double offs[5][2] = {{0, 0}, {0.004, 0}, {0, 0.004}, {-0.004, 0}, {0, -0.004}};
    for (const auto& o : offs) s.push_back(at({10 + o[0], 10 + o[1]}, 1, id++, true));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j) s.push_back(at({double(i), double(j)}, 0, id++));
    return Dataset(2, std::move(s), Role::suspicious);
}

Dataset random_dsp(unsigned seed, std::size_t n = 60) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<LabeledSample> s;
    for (std::size_t i = 0; i < n; ++i) {
        const Label l = i % 3 == 0 ? 1 : 0;
        const double shift = l == 1 ? 0.3 : 0.0;
        s.push_back({{u(rng) * 0.7 + shift, u(rng) * 0.7 + shift, u(rng)}, l, i % 5 == 0, 100 + 7 * i});
    }
    return Dataset(3, std::move(s), Role::suspicious);
}

Dataset permuted(const Dataset& ds, unsigned seed) {
    auto s = ds.samples();
    std::mt19937_64 rng(seed);
    std::shuffle(s.begin(), s.end(), rng);
    return Dataset(ds.dim(), std::move(s), ds.role());
}

bool subset(const std::vector<SampleId>& a, const std::vector<SampleId>& b) {
    return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

} // namespace

TEST_CASE("KPB flags the tight cluster") {
    const Dataset ds = kpb_fixture();
    const auto r = knn_proximity_defense(ds, 0.1, 0.16);
    CHECK(r.neighbors == 4);
    CHECK(r.flagged_ids == std::vector<SampleId>{0, 1, 2, 3, 4});
    for (std::size_t i = 5; i < ds.size(); ++i) CHECK(*r.diagnostics[i].avg_neighbor_distance >= 1.0);

    CHECK(knn_proximity_defense(ds, 0.0, 0.16).flagged_ids.empty());
    CHECK(knn_proximity_defense(ds, 1e6, 0.16).flagged_ids.size() == ds.size());
}

TEST_CASE("KPB average distance matches the brute-force table") {
    const Dataset ds = random_dsp(1);
    std::vector<oracle::Vec> pts;
    std::vector<std::size_t> ids;
    for (const auto& s : ds) {
        pts.push_back(s.features);
        ids.push_back(s.id);
    }
    const auto r = knn_proximity_defense(ds, 0.3, 0.1);
    REQUIRE(r.neighbors == 6);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        double total = 0;
        for (const auto& row : oracle::neighbors(pts, ids, i, 6)) total += row.distance;
        CHECK(*r.diagnostics[i].avg_neighbor_distance == Catch::Approx(total / 6).epsilon(1e-12));
        CHECK(r.is_flagged(ds[i].id) == (total / 6 < 0.3));
    }
}

TEST_CASE("NCC flags a sample whose near and wide votes disagree") {
    // Query at 0 with label 1; near four: three label-1 and one label-0; next four all label-0.
    std::vector<LabeledSample> s{at({0.0}, 1, 0, true), at({1.0}, 1, 1), at({2.0}, 1, 2), at({3.0}, 1, 3),
                                 at({3.5}, 0, 4),       at({-5.0}, 0, 5), at({-6.0}, 0, 6), at({-7.0}, 0, 7),
                                 at({-8.0}, 0, 8)};
    const Dataset ds(1, std::move(s));
    const auto r = ncc_defense(ds, 0.45);
    CHECK(r.neighbors == 4);
    CHECK(r.diagnostics[0].vote_near == Label{1});
    CHECK(r.diagnostics[0].vote_wide == Label{0});
    CHECK(r.is_flagged(0));
}

TEST_CASE("NCC never flags a single-label set") {
    auto s = random_dsp(2).samples();
    for (auto& x : s) x.label = 3;
    const Dataset ds(3, std::move(s));
    CHECK(ncc_defense(ds, 0.1).flagged_ids.empty());
    CHECK(ncc_defense(ds, 0.45).flagged_ids.empty());
}

TEST_CASE("CBD separates a near group from a far group") {
    std::vector<LabeledSample> s{at({-1.0}, 0, 0), at({1.0}, 0, 1)};
    const std::vector<double> near{0.09, 0.1, 0.11, 0.095};
    const std::vector<double> far{4.5, 5.0, 5.5, 4.8, 5.2};
    SampleId id = 2;
    for (double x : near) s.push_back(at({x}, 1, id++, true));
    for (double x : far) s.push_back(at({-x}, 1, id++));
    const Dataset ds(1, std::move(s));

    const auto r = cbd_defense(ds, 0, 1);
    std::vector<double> dists(near);
    dists.insert(dists.end(), far.begin(), far.end());
    REQUIRE(r.sse_curve.size() == 9);
    for (std::size_t k = 1; k <= 4; ++k) {
        CHECK(r.sse_curve[k - 1] == Catch::Approx(oracle::exhaustive_kmeans_sse(dists, k)).epsilon(1e-9).margin(1e-12));
    }
    CHECK(r.clusters == oracle::elbow(r.sse_curve));
    CHECK(r.clusters == 2);
    CHECK(r.flagged_ids == std::vector<SampleId>{2, 3, 4, 5});
    CHECK(!r.diagnostics[0].distance_to_mean);  // y_t samples carry no distance
    CHECK(r.diagnostics[2].cluster == std::size_t{0});
    CHECK(r.diagnostics[7].cluster == std::size_t{1});
}

TEST_CASE("CBD flags nothing when every distance is equal") {
    const Dataset ds(2, {at({1, 1}, 0, 0), at({-1, -1}, 0, 1), at({1, 0}, 1, 2), at({0, 1}, 1, 3), at({-1, 0}, 1, 4),
                         at({0, -1}, 1, 5)});
    const auto r = cbd_defense(ds, 0, 1);
    CHECK(r.clusters == 1);
    CHECK(r.flagged_ids.empty());
}

TEST_CASE("MDT only considers y_nt samples") {
    const Dataset ds = random_dsp(3);
    const auto all = mdt_defense(ds, 0, 1, 1e6);
    CHECK(all.flagged_ids.size() == ds.count(1));
    for (const auto& s : ds) CHECK(all.is_flagged(s.id) == (s.label == 1));

    const FeatureVector mean = class_mean(ds, 0);
    const auto r = mdt_defense(ds, 0, 1, 0.5);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds[i].label != 1) continue;
        const double d = oracle::euclid(ds[i].features, mean);
        CHECK(*r.diagnostics[i].distance_to_mean == Catch::Approx(d).epsilon(1e-12));
        CHECK(r.is_flagged(ds[i].id) == (d < 0.5));
    }
}

TEST_CASE("flagged sets grow with tau") {
    const Dataset ds = random_dsp(4);
    std::vector<SampleId> prev_kpb, prev_mdt;
    for (double tau = 0.0; tau <= 1.5; tau += 0.05) {
        const auto kpb = knn_proximity_defense(ds, tau, 0.1).flagged_ids;
        const auto mdt = mdt_defense(ds, 0, 1, tau).flagged_ids;
        CHECK(subset(prev_kpb, kpb));
        CHECK(subset(prev_mdt, mdt));
        prev_kpb = kpb;
        prev_mdt = mdt;
    }
}

TEST_CASE("results do not depend on sample order") {
    const Dataset ds = random_dsp(5);
    for (unsigned p = 0; p < 3; ++p) {
        const Dataset shuffled = permuted(ds, p);
        CHECK(knn_proximity_defense(ds, 0.25, 0.1).flagged_ids == knn_proximity_defense(shuffled, 0.25, 0.1).flagged_ids);
        CHECK(ncc_defense(ds, 0.1).flagged_ids == ncc_defense(shuffled, 0.1).flagged_ids);
        CHECK(cbd_defense(ds, 0, 1).flagged_ids == cbd_defense(shuffled, 0, 1).flagged_ids);
        CHECK(mdt_defense(ds, 0, 1, 0.4).flagged_ids == mdt_defense(shuffled, 0, 1, 0.4).flagged_ids);
    }
}

TEST_CASE("repeated runs are identical") {
    const Dataset ds = random_dsp(6);
    for (auto kind : {DefenseKind::kpb, DefenseKind::ncc, DefenseKind::cbd, DefenseKind::mdt}) {
        DefenseParams p;
        p.tau = 0.3;
        CHECK(run_defense(kind, ds, p) == run_defense(kind, ds, p));
    }
}

TEST_CASE("defense names") {
    for (auto kind : {DefenseKind::kpb, DefenseKind::ncc, DefenseKind::cbd, DefenseKind::mdt}) {
        CHECK(parse_defense(to_string(kind)) == kind);
    }
    CHECK_THROWS_AS(parse_defense("knn"), ArgumentError);
}

TEST_CASE("argument and capacity errors") {
    const Dataset ds = random_dsp(7, 5);
    CHECK_THROWS_AS(knn_proximity_defense(ds, -0.1, 0.1), ArgumentError);
    CHECK_THROWS_AS(mdt_defense(ds, 0, 1, -1.0), ArgumentError);
    CHECK_THROWS_AS(mdt_defense(ds, 1, 1, 1.0), ArgumentError);
    CHECK_THROWS_AS(mdt_defense(ds, 0, 9, 1.0), ArgumentError);
    CHECK_THROWS_AS(cbd_defense(ds, 0, 0), ArgumentError);
    CHECK_THROWS_AS(ncc_defense(ds, 0.6), CapacityError);  // 2 * 3 neighbours from 5 samples
    CHECK_NOTHROW(ncc_defense(ds, 0.5));
    const Dataset one(1, {at({0.5}, 0, 0)});
    CHECK_THROWS_AS(knn_proximity_defense(one, 0.1, 0.1), CapacityError);
    const Dataset single_nt(1, {at({0.5}, 0, 0), at({0.6}, 1, 1)});
    CHECK_THROWS_AS(cbd_defense(single_nt, 0, 1), CapacityError);
}
