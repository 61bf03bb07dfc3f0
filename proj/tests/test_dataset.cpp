// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "sfloc/dataset.hpp"
#include "sfloc/network_sim.hpp"

using namespace sfloc;
using Catch::Approx;

namespace {

LoadResult parse(const std::string& text) {
    std::istringstream in(text);
    return load_canonical_csv(in);
}

Fingerprint planar(std::vector<std::optional<double>> r, int sf, double x, double y) {
    Fingerprint f;
    f.rssi_dbm = std::move(r);
    f.sf = SpreadingFactor{sf};
    f.position_m = Point{x, y};
    return f;
}

}  // namespace

TEST_CASE("canonical CSV parses values, MISSING and both coordinate kinds") {
    const auto r = parse("rssi_1,rssi_2,rssi_3,sf,lat,lon\n-80.5,MISSING,-101,9,51.2,4.4\n-70,-90,MISSING,12,51.21,4.41\n");
    CHECK(r.gateway_count == 3);
    CHECK_FALSE(r.planar);
    REQUIRE(r.samples.size() == 2);
    CHECK(*r.samples[0].rssi_dbm[0] == -80.5);
    CHECK_FALSE(r.samples[0].rssi_dbm[1]);
    CHECK(r.samples[0].sf.value() == 9);
    CHECK(r.samples[1].position_geo->lon_deg == 4.41);
    CHECK(r.samples[1].missing_count() == 1);

    const auto p = parse("rssi_1,sf,x_m,y_m\r\n-60,7,10.5,20\r\n");
    CHECK(p.planar);
    CHECK(p.samples.at(0).position_m->x == 10.5);
}

TEST_CASE("canonical CSV errors carry the line number") {
    auto line_of = [](const std::string& text) -> std::size_t {
        try {
            parse(text);
        } catch (const ParseError& e) {
            return e.line();
        }
        return 0;
    };
    CHECK(line_of("rssi_1,rssi_2,sf,lat,lon\n-80,-90,7,1,2\n-80,7,1,2\n") == 3);
    CHECK(line_of("rssi_1,sf,lat,lon\n-80,13,1,2\n") == 2);
    CHECK(line_of("rssi_1,sf,lat,lon\n-80,7,abc,2\n") == 2);
    CHECK(line_of("rssi_1,sf,lat,lon\nmissing,7,1,2\n") == 2);
    CHECK(line_of("rssi_2,sf,lat,lon\n") == 1);
    CHECK(line_of("rssi_1,sf,a,b\n") == 1);
    CHECK(parse("").samples.empty());
    CHECK(parse("rssi_1,sf,lat,lon\n").samples.empty());
}

TEST_CASE("canonical CSV round-trips bit-exactly") {
    SyntheticDatasetSpec s;
    s.layout = place_gateways(3000, 3000, 6, PlacementScheme::grid, 0);
    s.link.path_loss_exponent = 3.6;
    s.link.shadowing_sigma_db = 5;
    s.sf_policy = UniformRandomSf{};
    s.n_samples = 300;
    s.rng_seed = 4;
    const auto a = generate_dataset(s);
    REQUIRE(count_missing(a) > 0);
    std::ostringstream out;
    write_canonical_csv(out, a, 6);
    const auto b = parse(out.str());
    REQUIRE(b.samples.size() == a.size());
    CHECK(b.planar);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(b.samples[i].rssi_dbm == a[i].rssi_dbm);
        CHECK(b.samples[i].sf == a[i].sf);
        CHECK(*b.samples[i].position_m == *a[i].position_m);
    }
    std::ostringstream again;
    write_canonical_csv(again, b.samples, 6);
    CHECK(again.str() == out.str());
}

TEST_CASE("Antwerp adapter maps columns by name") {
    std::istringstream in(
        "\"BS1\",\"BS2\",\"BS3\",\"RX Time\",\"SF\",\"HDOP\",\"Latitude\",\"Longitude\"\n"
        "-200,-105,-200,2017-11-21,8,1.2,51.2,4.41\n"
        "-90,-200,-111.5,2017-11-21,12,0.9,51.21,4.42\n");
    const auto r = load_antwerp_csv(in);
    CHECK(r.gateway_count == 3);
    REQUIRE(r.samples.size() == 2);
    CHECK_FALSE(r.samples[0].rssi_dbm[0]);
    CHECK(*r.samples[0].rssi_dbm[1] == -105);
    CHECK(r.samples[1].sf.value() == 12);
    CHECK(r.samples[1].position_geo->lat_deg == 51.21);
    CHECK(r.samples[1].missing_count() == 1);

    std::istringstream bad("BS1,SF,Latitude\n-90,7,51\n");
    CHECK_THROWS_AS(load_antwerp_csv(bad), ParseError);
}

TEST_CASE("projection round-trips and agrees with haversine") {
    const GeoPoint origin{51.2194, 4.4025};
    const Projection p(origin);
    for (double dlat : {-0.02, 0.0, 0.013})
        for (double dlon : {-0.03, 0.0, 0.021}) {
            const GeoPoint g{origin.lat_deg + dlat, origin.lon_deg + dlon};
            const Point m = p.project(g);
            const GeoPoint back = p.unproject(m);
            CHECK(back.lat_deg == Approx(g.lat_deg).margin(1e-12));
            CHECK(back.lon_deg == Approx(g.lon_deg).margin(1e-12));
            const double planar = std::hypot(m.x, m.y);
            CHECK(planar == Approx(haversine_m(origin, g)).epsilon(2e-3).margin(1e-6));
        }
    CHECK(haversine_m({0, 0}, {0, 1}) == Approx(6371000.0 * M_PI / 180.0).epsilon(1e-12));
}

TEST_CASE("project_to_plane centres on the geographic centroid") {
    std::vector<Fingerprint> v(2);
    v[0].position_geo = GeoPoint{51.0, 4.0};
    v[1].position_geo = GeoPoint{51.2, 4.4};
    const auto proj = project_to_plane(v);
    CHECK(proj.origin().lat_deg == Approx(51.1));
    CHECK(proj.origin().lon_deg == Approx(4.2));
    CHECK(v[0].position_m->x == Approx(-v[1].position_m->x).margin(1e-6));
    CHECK(v[0].position_m->y == Approx(-v[1].position_m->y).margin(1e-6));
}

TEST_CASE("imputation leaves no MISSING and uses each sample's SF") {
    std::vector<Fingerprint> v{planar({std::nullopt, -90.0}, 7, 0, 0), planar({std::nullopt, std::nullopt}, 12, 1, 1)};
    SensitivityParams s;
    impute_dataset(v, s);
    CHECK(count_missing(v) == 0);
    CHECK(*v[0].rssi_dbm[0] == sensitivity(s, SpreadingFactor{7}));
    CHECK(*v[0].rssi_dbm[1] == -90.0);
    CHECK(*v[1].rssi_dbm[1] == sensitivity(s, SpreadingFactor{12}));
}

TEST_CASE("normalizer maps training range to [0, 1]") {
    std::vector<Fingerprint> v{planar({-100.0, -80.0}, 7, 0, 10), planar({-60.0, -80.0}, 12, 100, 30),
                               planar({-80.0, -80.0}, 9, 50, 20)};
    const auto n = Normalizer::fit(v);
    CHECK(n.degenerate_features() == 1);
    CHECK(n.normalize_rssi(0, -100) == 0.0);
    CHECK(n.normalize_rssi(0, -60) == 1.0);
    CHECK(n.normalize_rssi(1, -80) == 0.5);
    CHECK(n.unnormalize_rssi(0, n.normalize_rssi(0, -73.25)) == Approx(-73.25));
    CHECK(Normalizer::normalize_sf(SpreadingFactor{7}) == 0.0);
    CHECK(Normalizer::normalize_sf(SpreadingFactor{12}) == 1.0);
    const Point u = n.normalize_position({50, 20});
    CHECK(u.x == 0.5);
    CHECK(u.y == 0.5);
    const Point back = n.unnormalize_position(n.normalize_position({12.5, 27}));
    CHECK(back.x == Approx(12.5));
    CHECK(back.y == Approx(27));

    const auto f = n.features(v[1], FeatureMode::with_sf);
    REQUIRE(f.size() == 3);
    CHECK(f[0] == 1.0);
    CHECK(f[2] == 1.0);
    CHECK(n.features(v[1], FeatureMode::without_sf).size() == 2);
    const auto oh = n.features(v[2], FeatureMode::with_sf_onehot);
    REQUIRE(oh.size() == 8);
    CHECK(oh[2 + 2] == 1.0);
    CHECK(std::accumulate(oh.begin() + 2, oh.end(), 0.0) == 1.0);

    Fingerprint wrong = planar({-80.0}, 7, 0, 0);
    CHECK_THROWS_AS(n.features(wrong, FeatureMode::with_sf), DimensionMismatch);
    Fingerprint raw = planar({std::nullopt, -80.0}, 7, 0, 0);
    CHECK_THROWS_AS(n.features(raw, FeatureMode::with_sf), std::invalid_argument);
}

TEST_CASE("feature table layout") {
    std::vector<Fingerprint> v{planar({-100.0, -80.0}, 7, 0, 10), planar({-60.0, -70.0}, 12, 100, 30)};
    const auto n = Normalizer::fit(v);
    const std::vector<std::size_t> idx{1, 0};
    const auto t = make_table(v, idx, n, FeatureMode::with_sf);
    CHECK(t.dim() == 3);
    CHECK(t.size() == 2);
    CHECK(t.features(0, 0) == 1.0);
    CHECK(t.targets(0, 0) == 1.0);
    CHECK(t.targets(1, 1) == 0.0);
    CHECK(t.positions[0] == Point{100, 30});
}

TEST_CASE("split is a seeded partition") {
    const auto sizes = default_split_sizes(123528);
    CHECK(sizes.test == 23528);
    CHECK(sizes.validation == 10000);
    CHECK(sizes.train == 90000);

    const auto a = split(1000, {700, 100, 200}, 3);
    const auto b = split(1000, {700, 100, 200}, 3);
    const auto c = split(1000, {700, 100, 200}, 4);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    CHECK(a.train != c.train);
    std::set<std::size_t> all(a.train.begin(), a.train.end());
    all.insert(a.validation.begin(), a.validation.end());
    all.insert(a.test.begin(), a.test.end());
    CHECK(all.size() == 1000);
    CHECK(*all.rbegin() == 999);

    const auto partial = split(100, {10, 0, 5}, 1);
    CHECK(partial.train.size() == 10);
    CHECK(partial.test.size() == 5);
    CHECK_THROWS_AS(split(10, {8, 2, 1}, 0), std::invalid_argument);
}
