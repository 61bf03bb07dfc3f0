// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <set>

#include "sfloc/network_sim.hpp"

using namespace sfloc;

TEST_CASE("grid placement puts gateways at cell centroids") {
    const auto l = place_gateways(1000, 1000, 9, PlacementScheme::grid, 0);
    REQUIRE(l.gateways.size() == 9);
    std::set<std::pair<double, double>> expect;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) expect.insert({(c + 0.5) * 1000.0 / 3, (r + 0.5) * 1000.0 / 3});
    for (const auto& g : l.gateways) CHECK(expect.count({g.x, g.y}) == 1);
    l.validate();

    const auto odd = place_gateways(600, 300, 5, PlacementScheme::grid, 0);
    REQUIRE(odd.gateways.size() == 5);
    odd.validate();
}

TEST_CASE("random placement is seeded and inside the area") {
    const auto a = place_gateways(800, 500, 20, PlacementScheme::uniform_random, 7);
    const auto b = place_gateways(800, 500, 20, PlacementScheme::uniform_random, 7);
    const auto c = place_gateways(800, 500, 20, PlacementScheme::uniform_random, 8);
    CHECK(a.gateways == b.gateways);
    CHECK(a.gateways != c.gateways);
    a.validate();
}

TEST_CASE("placement validation") {
    CHECK_THROWS_AS(place_gateways(100, 100, 0, PlacementScheme::grid, 0), std::invalid_argument);
    CHECK_THROWS_AS(place_gateways(0, 100, 3, PlacementScheme::grid, 0), std::invalid_argument);
    NetworkLayout bad{100, 100, {{150, 10}}};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("distance-binned SF follows the thresholds") {
    NetworkLayout l{1000, 1000, {{0, 0}}};
    DistanceBinnedSf p;
    p.thresholds_m = {100, 200, 300, 400, 500};
    Rng rng(1);
    const double probes[] = {0, 99.9, 100, 150, 250, 399, 450, 500, 900};
    const int expect[] = {7, 7, 8, 8, 9, 10, 11, 12, 12};
    for (std::size_t i = 0; i < std::size(probes); ++i)
        CHECK(assign_sf(p, {probes[i], 0}, l, rng).value() == expect[i]);
    DistanceBinnedSf bad;
    bad.thresholds_m = {1, 2, 2, 3, 4};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("default bins cover all SFs on a grid") {
    SyntheticDatasetSpec s;
    s.layout = place_gateways(1000, 1000, 9, PlacementScheme::grid, 0);
    s.sf_policy = default_distance_bins(s.layout);
    s.link.shadowing_sigma_db = 0;
    s.n_samples = 4000;
    s.rng_seed = 3;
    std::set<int> seen;
    for (const auto& f : generate_dataset(s)) seen.insert(f.sf.value());
    CHECK(seen.size() == 6);
}

TEST_CASE("fixed and random SF policies") {
    NetworkLayout l{10, 10, {{5, 5}}};
    Rng rng(2);
    CHECK(assign_sf(FixedSf{SpreadingFactor{10}}, {1, 1}, l, rng).value() == 10);
    std::array<int, 6> counts{};
    for (int i = 0; i < 6000; ++i) ++counts[assign_sf(UniformRandomSf{}, {1, 1}, l, rng).index()];
    for (int c : counts) CHECK(c > 800);
}

TEST_CASE("generated samples are deterministic and individually reproducible") {
    SyntheticDatasetSpec s;
    s.layout = place_gateways(1000, 1000, 4, PlacementScheme::grid, 0);
    s.sf_policy = UniformRandomSf{};
    s.n_samples = 50;
    s.rng_seed = 11;
    const auto a = generate_dataset(s);
    const auto b = generate_dataset(s);
    REQUIRE(a.size() == 50);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].rssi_dbm == b[i].rssi_dbm);
        CHECK(*a[i].position_m == *b[i].position_m);
        const auto one = generate_sample(s, i);
        CHECK(one.rssi_dbm == a[i].rssi_dbm);
    }
    s.rng_seed = 12;
    CHECK(generate_dataset(s)[0].position_m != a[0].position_m);
}

TEST_CASE("noiseless samples equal the channel model and censoring is by SF sensitivity") {
    SyntheticDatasetSpec s;
    s.layout = place_gateways(5000, 5000, 9, PlacementScheme::grid, 0);
    s.sf_policy = UniformRandomSf{};
    s.link.shadowing_sigma_db = 0;
    s.link.path_loss_exponent = 3.5;
    s.n_samples = 500;
    s.rng_seed = 5;
    std::size_t missing = 0;
    for (const auto& f : generate_dataset(s)) {
        REQUIRE(f.rssi_dbm.size() == 9);
        for (std::size_t g = 0; g < 9; ++g) {
            const double d = std::max(distance(*f.position_m, s.layout.gateways[g]), 1.0);
            const double r = rssi_at(s.link, d, 0.0);
            if (r > sensitivity(s.sens, f.sf)) {
                REQUIRE(f.rssi_dbm[g].has_value());
                CHECK(*f.rssi_dbm[g] == r);
            } else {
                CHECK_FALSE(f.rssi_dbm[g].has_value());
                ++missing;
            }
        }
    }
    CHECK(missing > 0);
}

TEST_CASE("shadowing has the configured spread") {
    SyntheticDatasetSpec s;
    s.layout = NetworkLayout{100, 100, {{50, 50}}};
    s.link.shadowing_sigma_db = 6.0;
    s.sf_policy = FixedSf{SpreadingFactor{12}};
    s.n_samples = 20000;
    s.rng_seed = 9;
    double sum = 0, sq = 0;
    for (const auto& f : generate_dataset(s)) {
        const double d = std::max(distance(*f.position_m, {50, 50}), 1.0);
        const double x = rssi_at(s.link, d, 0.0) - *f.rssi_dbm[0];
        sum += x;
        sq += x * x;
    }
    const double mean = sum / 20000, sd = std::sqrt(sq / 20000 - mean * mean);
    CHECK(std::abs(mean) < 0.15);
    CHECK(sd == Catch::Approx(6.0).margin(0.15));
}
