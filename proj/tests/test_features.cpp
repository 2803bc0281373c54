#include <cmath>
#include <numbers>

#include "doctest.h"
#include "support/datasets.hpp"
#include "v2n/error.hpp"
#include "v2n/features.hpp"

using namespace v2n;
using namespace v2n::features;
using v2n::testing::make_dataset;

namespace {

// Spherical law of cosines, an independent route to the same distance.
double cosine_law_km(GeoPoint a, GeoPoint b) {
    const double d = std::numbers::pi / 180.0;
    const double c = std::sin(a.latitude * d) * std::sin(b.latitude * d) +
                     std::cos(a.latitude * d) * std::cos(b.latitude * d) *
                         std::cos((b.longitude - a.longitude) * d);
    return kEarthRadiusKm * std::acos(std::clamp(c, -1.0, 1.0));
}

// Latitude offset giving `km` along a meridian.
double lat_for_km(double km) { return km / (kEarthRadiusKm * std::numbers::pi / 180.0); }

ingest::CleanDataset line_of_probes(const std::vector<double>& km, std::size_t steps = 40) {
    std::vector<std::pair<double, double>> coords;
    std::vector<std::vector<double>> flows;
    for (std::size_t p = 0; p < km.size(); ++p) {
        coords.push_back({45.0 + lat_for_km(km[p]), 7.6});
        std::vector<double> f(steps);
        for (std::size_t t = 0; t < steps; ++t) f[t] = 100.0 * (p + 1) + t;
        flows.push_back(f);
    }
    return make_dataset(coords, flows);
}

}  // namespace

TEST_CASE("haversine") {
    CHECK(haversine_km({45.0, 7.6}, {45.0, 7.6}) == 0.0);
    CHECK(haversine_km({0, 0}, {0, 180}) == doctest::Approx(std::numbers::pi * 6371.0).epsilon(1e-12));
    const GeoPoint a{45.0, 7.6}, b{45.1, 7.6};
    CHECK(haversine_km(a, b) == doctest::Approx(cosine_law_km(a, b)).epsilon(1e-9));
    CHECK(haversine_km(a, b) == doctest::Approx(11.12).epsilon(1e-3));
    CHECK(haversine_km(a, {44.3, 8.9}) == doctest::Approx(haversine_km({44.3, 8.9}, a)));
    CHECK_THROWS_AS(haversine_km({91, 0}, {0, 0}), PreconditionError);
    CHECK_THROWS_AS(haversine_km({0, 0}, {0, -181}), PreconditionError);
}

TEST_CASE("quantiles by linear interpolation") {
    const auto q = distance_quantiles({1, 2, 3, 4});
    CHECK(q.q1 == doctest::Approx(1.75));
    CHECK(q.median == doctest::Approx(2.5));
    CHECK(q.q3 == doctest::Approx(3.25));
    CHECK(q.w2 == doctest::Approx(4));

    const auto zeros = distance_quantiles({0, 0, 0});
    CHECK(zeros.radii() == std::vector<double>{0, 0, 0, 0});

    const auto outlier = distance_quantiles({1, 2, 3, 4, 100});
    CHECK(outlier.w2 == doctest::Approx(4));
}

TEST_CASE("neighborhood quantiles of a dataset") {
    const auto clean = line_of_probes({0, 1, 2, 3, 4});
    const auto q = neighborhood_quantiles(clean, "P0");
    CHECK(q.median == doctest::Approx(2.5).epsilon(1e-6));
    CHECK_THROWS_AS(neighborhood_quantiles(line_of_probes({0}), "P0"), PreconditionError);
}

TEST_CASE("neighborhoods grow with the radius and keep the target first") {
    const auto clean = line_of_probes({0, 3, 1, 2, 2});
    const auto small = build_neighborhood(clean, "P0", 1.5);
    CHECK(small.members == std::vector<std::string>{"P0", "P2"});
    const auto mid = build_neighborhood(clean, "P0", 2.5);
    CHECK(mid.members == std::vector<std::string>{"P0", "P2", "P3", "P4"});
    const auto all = full_neighborhood(clean, "P0");
    CHECK(all.members.size() == 5);
    CHECK(all.distances_km.front() == 0.0);
    for (double r = 0.0; r < 5.0; r += 0.25) {
        const auto a = build_neighborhood(clean, "P0", r);
        const auto b = build_neighborhood(clean, "P0", r + 0.25);
        for (const auto& m : a.members) {
            CHECK(std::find(b.members.begin(), b.members.end(), m) != b.members.end());
        }
    }
}

TEST_CASE("feature matrix layout") {
    const auto clean = line_of_probes({0, 1});
    const auto solo = build_neighborhood(clean, "P0", 0.0);
    const auto m = build_feature_matrix(clean, "P0", 10, 1, solo, FeatureScaler::identity());
    REQUIRE(m.rows.size() == 1);
    CHECK(m.at(1, 0)[kFlow] == clean.columns(0).flow[9]);

    const auto both = full_neighborhood(clean, "P0");
    const auto w = build_feature_matrix(clean, "P0", 10, 3, both, FeatureScaler::identity());
    REQUIRE(w.rows.size() == 6);
    CHECK(w.at(1, 1)[kFlow] == clean.columns(1).flow[9]);
    CHECK(w.at(3, 0)[kFlow] == clean.columns(0).flow[7]);
    CHECK(w.at(2, 1)[kDistanceKm] == doctest::Approx(1.0).epsilon(1e-6));

    try {
        build_feature_matrix(clean, "P0", 2, 3, both, FeatureScaler::identity());
        FAIL("expected an error");
    } catch (const PreconditionError& e) {
        const std::string what = e.what();
        CHECK(what.find('3') != std::string::npos);
        CHECK(what.find('2') != std::string::npos);
    }
}

TEST_CASE("92 probes with 12 lags give 1104 rows") {
    std::vector<double> km;
    for (int i = 0; i < 92; ++i) km.push_back(0.1 * i);
    const auto clean = line_of_probes(km, 20);
    const auto m = build_feature_matrix(clean, "P0", 12, 12, full_neighborhood(clean, "P0"),
                                        FeatureScaler::identity());
    CHECK(m.rows.size() == 1104);
}

TEST_CASE("calendar features") {
    const Timestamp t = from_civil(2020, 3, 2, 8, 30);
    const auto clean = make_dataset({{45.0, 7.6}}, {std::vector<double>(4, 1.0)}, t);
    const auto row = raw_features(clean, 0, 0, 0.0);
    CHECK(row[kDayOfWeek] == 1);
    CHECK(row[kMonth] == 3);
    CHECK(row[kDay] == 2);
    CHECK(row[kYear] == 2020);
    CHECK(row[kHourMinute] == doctest::Approx(8.5));
    const auto sunday = make_dataset({{45.0, 7.6}}, {std::vector<double>(1, 1.0)},
                                     from_civil(2020, 3, 1, 23, 55));
    CHECK(raw_features(sunday, 0, 0, 0.0)[kDayOfWeek] == 7);
    CHECK(raw_features(sunday, 0, 0, 0.0)[kHourMinute] < 24.0);
}

TEST_CASE("scaling uses training statistics and clips outside them") {
    const auto clean = line_of_probes({0, 1}, 40);
    const auto hood = full_neighborhood(clean, "P0");
    const auto scaler = FeatureScaler::fit(clean, hood, 0, 20);
    CHECK(scaler.min(kFlow) == 100.0);
    CHECK(scaler.max(kFlow) == 219.0);
    bool clipped = false;
    CHECK(scaler.scale(kFlow, 160.0, &clipped) == doctest::Approx(0.5042016807));
    CHECK_FALSE(clipped);
    CHECK(scaler.unscale(kFlow, scaler.scale(kFlow, 160.0)) == doctest::Approx(160.0));
    CHECK(scaler.scale(kFlow, 500.0, &clipped) == 1.0);
    CHECK(clipped);
    const auto late = build_feature_matrix(clean, "P0", 40, 2, hood, scaler);
    CHECK(late.clipped > 0);
    for (const auto& r : late.rows) {
        for (double v : r) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("the window never reads the step it forecasts from or later") {
    auto flows = std::vector<std::vector<double>>{std::vector<double>(30), std::vector<double>(30)};
    for (std::size_t t = 0; t < 30; ++t) {
        flows[0][t] = 10.0 + t;
        flows[1][t] = 50.0 - t;
    }
    const auto a = make_dataset({{45.0, 7.6}, {45.01, 7.6}}, flows);
    for (auto& f : flows) {
        for (std::size_t t = 15; t < 30; ++t) f[t] = 9999.0;
    }
    const auto b = make_dataset({{45.0, 7.6}, {45.01, 7.6}}, flows);
    const auto hood = full_neighborhood(a, "P0");
    const auto scaler = FeatureScaler::fit(a, hood, 0, 10);
    const auto x = build_feature_matrix(a, "P0", 15, 12, hood, scaler);
    const auto y = build_feature_matrix(b, "P0", 15, 12, hood, scaler);
    CHECK(x.rows == y.rows);
}
