#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "doctest.h"

#include "deepmaps/calibrate.hpp"
#include "deepmaps/grid.hpp"
#include "helpers.hpp"

using namespace deepmaps;
using namespace deepmaps::calibrate;

namespace {

GridSpec cal_spec() {
    GridSpec spec;
    spec.origin_lat = 30.0;
    spec.origin_lon = 110.0;
    spec.cell_size_km = 1.0;
    spec.width = 8;
    spec.height = 8;
    spec.start_time = 0;  // hour_of_day(t) == t % 24
    spec.num_hours = 24;
    return spec;
}

// 22 hand-frozen co-located pairs. The response is
//   y = 1.25 * mobile - 6.25 + 0.08 * hod + 0.05 * cx - 0.04 * cy
//       + 0.12 * temp - 0.02 * rh + noise
// and the expected estimates below were solved independently with a
// dense least-squares routine and an F distribution from a statistics
// package, then frozen.
std::vector<ColocatedPair> oracle_pairs() {
    const double mobile[] = {12.0, 18.0, 25.0, 31.0, 40.0, 47.0, 55.0, 62.0, 20.0, 33.0, 44.0,
                             51.0, 28.0, 36.0, 48.0, 58.0, 15.0, 23.0, 39.0, 53.0, 30.0, 42.0};
    const int hod[] = {0, 3, 6, 9, 12, 15, 18, 21, 1, 4, 7, 10, 13, 16, 19, 22, 2, 5,
                       8, 11, 14, 17};
    const int cx[] = {0, 1, 2, 3, 4, 5, 6, 7, 0, 2, 4, 6, 1, 3, 5, 7, 0, 3, 6, 2, 5, 7};
    const int cy[] = {7, 6, 5, 4, 3, 2, 1, 0, 3, 5, 7, 1, 2, 4, 6, 0, 5, 1, 7, 3, 0, 6};
    const double temp[] = {5.0,  7.5,  10.0, 12.5, 15.0, 17.5, 20.0, 22.5, 6.0,  11.0, 16.0,
                           21.0, 8.0,  13.0, 18.0, 23.0, 5.5,  9.5,  14.5, 19.5, 12.0, 16.5};
    const double rh[] = {30.0, 35.0, 40.0, 45.0, 50.0, 55.0, 60.0, 65.0, 32.0, 42.0, 52.0,
                         62.0, 37.0, 47.0, 57.0, 67.0, 31.0, 41.0, 51.0, 61.0, 46.0, 56.0};
    const double noise[] = {0.3, -0.5, 0.2,  0.4, -0.3, 0.1, -0.2, 0.6,  -0.4, 0.5, 0.0,
                            -0.6, 0.2, -0.1, 0.3, -0.2, 0.1, 0.4,  -0.5, 0.2,  -0.3, 0.1};
    std::vector<ColocatedPair> pairs;
    for (int i = 0; i < 22; ++i) {
        ColocatedPair p;
        p.cell = {cx[i], cy[i]};
        p.t = hod[i];
        p.mobile_pm25 = mobile[i];
        p.temp = temp[i];
        p.rh = rh[i];
        p.fixed_pm25 = 1.25 * mobile[i] - 6.25 + 0.08 * hod[i] + 0.05 * cx[i] - 0.04 * cy[i] +
                       0.12 * temp[i] - 0.02 * rh[i] + noise[i];
        pairs.push_back(p);
    }
    return pairs;
}

ingest::MobileAggregate make_agg(CellIndex cell, int t, double median) {
    ingest::MobileAggregate agg;
    agg.cell = cell;
    agg.t = t;
    agg.pm25_median = median;
    agg.sample_count = 5;
    return agg;
}

Label make_label(CellIndex cell, int t, double pm, LabelSource source = LabelSource::fixed) {
    Label l;
    l.cell = cell;
    l.t = t;
    l.pm25 = pm;
    l.source = source;
    return l;
}

}  // namespace

TEST_SUITE("calibrate") {

TEST_CASE("co-located pairing is an inner join on cell and hour") {
    std::vector<Label> fixed{make_label({1, 1}, 2, 20.0), make_label({0, 0}, 0, 7.0)};
    std::vector<ingest::MobileAggregate> mobile;
    mobile.push_back(make_agg({1, 1}, 2, 15.0));
    mobile.back().temp_mean = 18.0;
    mobile.back().rh_mean = 55.0;
    mobile.push_back(make_agg({2, 2}, 5, 30.0));  // no fixed label: dropped
    mobile.push_back(make_agg({0, 0}, 0, 6.5));
    mobile.push_back(make_agg({1, 1}, 3, 16.0));  // same cell, other hour: dropped

    const auto pairs = pair_colocated(fixed, mobile);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].cell == CellIndex{1, 1});
    CHECK(pairs[0].t == 2);
    CHECK(pairs[0].fixed_pm25 == doctest::Approx(20.0));
    CHECK(pairs[0].mobile_pm25 == doctest::Approx(15.0));
    REQUIRE(pairs[0].temp.has_value());
    CHECK(*pairs[0].temp == doctest::Approx(18.0));
    CHECK(pairs[1].cell == CellIndex{0, 0});
    CHECK_FALSE(pairs[1].temp.has_value());
}

TEST_CASE("regression recovers the frozen least-squares estimates") {
    const GridSpec spec = cal_spec();
    const auto model = fit_calibration(oracle_pairs(), spec);

    CHECK(model.n_used == 22);
    CHECK(model.n_skipped_incomplete == 0);
    CHECK(model.coefficients.at("intercept") ==
          doctest::Approx(-6.59310087836556).epsilon(1e-7));
    CHECK(model.coefficients.at("mobile_pm25") ==
          doctest::Approx(1.2656923407111988).epsilon(1e-7));
    CHECK(model.coefficients.at("hour_of_day") ==
          doctest::Approx(0.10107393560818392).epsilon(1e-7));
    CHECK(model.coefficients.at("cell_x") ==
          doctest::Approx(-0.022206510602076422).epsilon(1e-7));
    CHECK(model.coefficients.at("cell_y") ==
          doctest::Approx(-0.023457001242203526).epsilon(1e-7));
    CHECK(model.coefficients.at("temp") ==
          doctest::Approx(0.06394777554252597).epsilon(1e-7));
    CHECK(model.coefficients.at("rh") ==
          doctest::Approx(-0.009027300462746328).epsilon(1e-7));
    CHECK(model.r_squared == doctest::Approx(0.999710580057591).epsilon(1e-9));
    CHECK(model.f_statistic == doctest::Approx(8635.467305192178).epsilon(1e-6));
    CHECK(std::log10(model.p_value) ==
          doctest::Approx(std::log10(1.1677613339975368e-25)).epsilon(1e-6));
}

TEST_CASE("incomplete pairs are skipped without disturbing the fit") {
    const GridSpec spec = cal_spec();
    auto pairs = oracle_pairs();
    const auto clean = fit_calibration(pairs, spec);

    ColocatedPair no_temp;
    no_temp.cell = {1, 1};
    no_temp.t = 4;
    no_temp.mobile_pm25 = 30.0;
    no_temp.fixed_pm25 = 31.0;
    no_temp.rh = 50.0;
    pairs.push_back(no_temp);
    ColocatedPair no_rh = no_temp;
    no_rh.temp = 12.0;
    no_rh.rh.reset();
    pairs.push_back(no_rh);
    ColocatedPair neither = no_temp;
    neither.rh.reset();
    pairs.push_back(neither);

    const auto model = fit_calibration(pairs, spec);
    CHECK(model.n_used == 22);
    CHECK(model.n_skipped_incomplete == 3);
    CHECK(model.coefficients == clean.coefficients);
    CHECK(model.r_squared == clean.r_squared);
}

TEST_CASE("too few complete pairs is an input error") {
    const GridSpec spec = cal_spec();
    auto pairs = oracle_pairs();
    pairs.resize(20);  // below the 3-per-coefficient floor of 21
    bool threw = false;
    try {
        fit_calibration(pairs, spec);
    } catch (const InputError& e) {
        threw = true;
        CHECK(std::string(e.what()).find("at least 21") != std::string::npos);
    }
    CHECK(threw);

    auto padded = oracle_pairs();
    padded.resize(20);
    for (int k = 0; k < 5; ++k) {  // incomplete pairs do not count toward the floor
        ColocatedPair p;
        p.mobile_pm25 = 10.0 + k;
        p.fixed_pm25 = 12.0 + k;
        padded.push_back(p);
    }
    CHECK_THROWS_AS(fit_calibration(padded, spec), InputError);
}

TEST_CASE("rank-deficient designs are rejected by name") {
    const GridSpec spec = cal_spec();

    auto constant_temp = oracle_pairs();
    for (auto& p : constant_temp) p.temp = 15.0;
    bool threw = false;
    try {
        fit_calibration(constant_temp, spec);
    } catch (const InputError& e) {
        threw = true;
        const std::string what = e.what();
        CHECK(what.find("collinear") != std::string::npos);
        CHECK(what.find("temp") != std::string::npos);
    }
    CHECK(threw);

    auto both_constant = oracle_pairs();
    for (auto& p : both_constant) {
        p.temp = 15.0;
        p.rh = 50.0;
    }
    try {
        fit_calibration(both_constant, spec);
        CHECK(false);
    } catch (const InputError& e) {
        const std::string what = e.what();
        CHECK(what.find("temp, rh") != std::string::npos);
    }

    // pairwise dependence (rh an exact affine image of temp) is caught by the
    // solver even though neither column is constant
    auto dependent = oracle_pairs();
    for (auto& p : dependent) p.rh = 2.0 * *p.temp + 1.0;
    try {
        fit_calibration(dependent, spec);
        CHECK(false);
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("collinear") != std::string::npos);
    }
}

TEST_CASE("prediction is the plain linear form over named coefficients") {
    CalibrationModel model;
    model.coefficients = {{"intercept", 1.0}, {"mobile_pm25", 2.0}, {"hour_of_day", 0.5},
                          {"cell_x", 0.1},    {"cell_y", -0.2},     {"temp", 0.3},
                          {"rh", -0.1}};
    CHECK(model.predict(10.0, 3, {2, 4}, 10.0, 50.0) == doctest::Approx(19.9).epsilon(1e-12));

    const CalibrationModel empty;
    CHECK(empty.predict(10.0, 3, {2, 4}, 10.0, 50.0) == 0.0);
}

TEST_CASE("applying a model clamps at zero and skips bare aggregates") {
    const GridSpec spec = cal_spec();
    CalibrationModel model;
    model.coefficients = {{"intercept", -100.0}, {"mobile_pm25", 2.0}};

    std::vector<ingest::MobileAggregate> aggs;
    aggs.push_back(make_agg({0, 0}, 1, 60.0));
    aggs.back().temp_mean = 10.0;
    aggs.back().rh_mean = 40.0;
    aggs.push_back(make_agg({1, 0}, 1, 10.0));  // would predict -80: clamped
    aggs.back().temp_mean = 10.0;
    aggs.back().rh_mean = 40.0;
    aggs.push_back(make_agg({2, 0}, 1, 33.0));  // no covariates: skipped

    const auto result = apply_calibration(model, aggs, spec);
    CHECK(result.skipped_missing_covariates == 1);
    REQUIRE(result.labels.size() == 2);
    CHECK(result.labels[0].pm25 == doctest::Approx(20.0));
    CHECK(result.labels[0].source == LabelSource::mobile_calibrated);
    CHECK(result.labels[1].pm25 == 0.0);
}

TEST_CASE("fixed labels average co-located stations and ignore outside rows") {
    const GridSpec spec = cal_spec();
    double lat, lon;
    cell_center({3, 2}, spec, lat, lon);
    auto obs_at = [&](double pm, std::int64_t t) {
        Observation o;
        o.sensor_id = "s";
        o.lat = lat;
        o.lon = lon;
        o.timestamp = (spec.start_time + t) * 3600;
        o.pm25 = pm;
        return o;
    };
    std::vector<Observation> obs{obs_at(10.0, 2), obs_at(14.0, 2), obs_at(9.0, 1)};
    Observation off;  // outside the grid: contributes nothing
    off.sensor_id = "far";
    off.lat = spec.origin_lat - 1.0;
    off.lon = spec.origin_lon;
    off.timestamp = spec.start_time * 3600;
    off.pm25 = 99.0;
    obs.push_back(off);
    Observation late = obs_at(50.0, spec.num_hours);  // out of window
    obs.push_back(late);

    const auto labels = labels_from_fixed(obs, spec);
    REQUIRE(labels.size() == 2);
    CHECK(labels[0].t == 1);
    CHECK(labels[0].pm25 == doctest::Approx(9.0));
    CHECK(labels[1].t == 2);
    CHECK(labels[1].pm25 == doctest::Approx(12.0));  // (10 + 14) / 2
    CHECK(labels[1].cell == CellIndex{3, 2});
    CHECK(labels[1].source == LabelSource::fixed);
}

TEST_CASE("label union keeps the fixed value on collisions") {
    std::vector<Label> fixed{make_label({0, 0}, 0, 10.0),
                             make_label({1, 1}, 3, 20.0)};
    std::vector<Label> mobile{
        make_label({0, 0}, 0, 11.5, LabelSource::mobile_calibrated),
        make_label({2, 2}, 0, 30.0, LabelSource::mobile_calibrated)};

    const auto set = build_label_set(fixed, mobile);
    REQUIRE(set.size() == 3);
    CHECK(set.labels[0].cell == CellIndex{0, 0});
    CHECK(set.labels[0].pm25 == doctest::Approx(10.0));  // fixed wins
    CHECK(set.labels[0].source == LabelSource::fixed);
    CHECK(set.labels[1].cell == CellIndex{2, 2});
    CHECK(set.labels[2].t == 3);

    std::vector<Label> dup_fixed{make_label({0, 0}, 0, 1.0), make_label({0, 0}, 0, 2.0)};
    CHECK_THROWS_AS(build_label_set(dup_fixed, {}), InputError);
    std::vector<Label> dup_mobile{
        make_label({0, 0}, 0, 1.0, LabelSource::mobile_calibrated),
        make_label({0, 0}, 0, 2.0, LabelSource::mobile_calibrated)};
    CHECK_THROWS_AS(build_label_set({}, dup_mobile), InputError);
}

TEST_CASE("calibration report and label files round-trip") {
    const GridSpec spec = cal_spec();
    testutil::TempDir dir("calfiles");
    const auto model = fit_calibration(oracle_pairs(), spec);

    const auto report = dir.file("calibration.txt");
    write_calibration_report(model, report, "deadbeef01");
    const std::string text = testutil::read_text(report);
    CHECK(text.rfind("# config=deadbeef01\n", 0) == 0);
    CHECK(text.find("mobile_pm25 = ") != std::string::npos);
    CHECK(text.find("r_squared = ") != std::string::npos);
    CHECK(text.find("n_used = 22") != std::string::npos);

    LabelSet set;
    set.labels.push_back(make_label({3, 1}, 5, 12.25));
    set.labels.push_back(make_label({0, 2}, 1, 7.0 / 3.0, LabelSource::mobile_calibrated));
    set.labels.push_back(make_label({2, 0}, 1, 8.5));
    const auto path = dir.file("labels.csv");
    save_labels(set, path, "deadbeef01");
    CHECK(testutil::read_text(path).rfind("# config=deadbeef01\n", 0) == 0);

    const LabelSet loaded = load_labels(path);
    REQUIRE(loaded.size() == 3);
    // loader sorts by (t, y, x)
    CHECK(loaded.labels[0].cell == CellIndex{2, 0});
    CHECK(loaded.labels[0].t == 1);
    CHECK(loaded.labels[1].cell == CellIndex{0, 2});
    CHECK(loaded.labels[1].pm25 == doctest::Approx(7.0 / 3.0).epsilon(1e-15));
    CHECK(loaded.labels[1].source == LabelSource::mobile_calibrated);
    CHECK(loaded.labels[2].t == 5);
    CHECK(loaded.labels[2].pm25 == doctest::Approx(12.25));

    const auto broken = dir.file("broken.csv");
    testutil::write_text(broken, "x,y,t,pm25,source\n1,1,0,5,telepathy\n");
    CHECK_THROWS_AS(load_labels(broken), SchemaError);
    const auto garbled = dir.file("garbled.csv");
    testutil::write_text(garbled, "x,y,t,pm25,source\n1,one,0,5,fixed\n");
    CHECK_THROWS_AS(load_labels(garbled), SchemaError);
}

}  // TEST_SUITE
