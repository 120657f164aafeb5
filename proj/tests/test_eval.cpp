#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"

#include "deepmaps/eval.hpp"
#include "deepmaps/featurize.hpp"
#include "deepmaps/gbdt.hpp"
#include "deepmaps/grid.hpp"
#include "helpers.hpp"

using namespace deepmaps;
using namespace deepmaps::eval;

namespace {

GridSpec eval_spec(int w, int h, int hours) {
    GridSpec spec;
    spec.origin_lat = 30.0;
    spec.origin_lon = 110.0;
    spec.cell_size_km = 1.0;
    spec.width = w;
    spec.height = h;
    spec.start_time = 1200;
    spec.num_hours = hours;
    return spec;
}

/// Labels over every cell of a w x h grid for `hours` hours with
/// pm25 = 10 + 2x + 3y + t, plus an aligned feature matrix that carries
/// exactly that information across the three feature groups.
struct SmallCity {
    LabelSet labels;
    feat::FeatureMatrix matrix;
    GridSpec spec;
};

SmallCity small_city(int w = 6, int h = 6, int hours = 4, int fixed_x_below = 3) {
    SmallCity city;
    city.spec = eval_spec(w, h, hours);
    city.matrix.columns = {
        {"loc_a", feat::FeatureGroup::L, "geography"},
        {"loc_b", feat::FeatureGroup::L, "transport"},
        {"nbr_c0", feat::FeatureGroup::N, "neighboring"},
        {"macro_s1_3", feat::FeatureGroup::M, "macro"},
    };
    city.matrix.values.assign(4, {});
    for (int t = 0; t < hours; ++t) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                Label l;
                l.cell = {x, y};
                l.t = t;
                l.pm25 = 10.0 + 2.0 * x + 3.0 * y + t;
                l.source = x < fixed_x_below ? LabelSource::fixed
                                             : LabelSource::mobile_calibrated;
                city.labels.labels.push_back(l);
                city.matrix.keys.push_back({x, y, t});
                city.matrix.values[0].push_back(x);
                city.matrix.values[1].push_back(y);
                city.matrix.values[2].push_back(0.5 * t);
                city.matrix.values[3].push_back(20.0 + t);
                city.matrix.response.push_back(l.pm25);
            }
        }
    }
    return city;
}

gbdt::GbdtParams fast_gbdt(std::uint64_t seed) {
    gbdt::GbdtParams params;
    params.num_trees = 60;
    params.max_depth = 4;
    params.learning_rate = 0.15;
    params.min_samples_leaf = 2;
    params.seed = seed;
    return params;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("metric closed forms: rmse, smape, r-squared") {
    const Metrics m = compute_metrics({12.0, 16.0}, {10.0, 20.0});
    CHECK(m.rmse == doctest::Approx(std::sqrt(10.0)).epsilon(1e-12));
    CHECK(m.smape == doctest::Approx(2000.0 / 99.0).epsilon(1e-12));  // 20.2020...%
    CHECK(m.r_squared == doctest::Approx(0.6).epsilon(1e-12));

    // a 0/0 term contributes nothing to the SMAPE sum
    const Metrics zero = compute_metrics({0.0, 10.0}, {0.0, 10.0});
    CHECK(zero.smape == 0.0);
    CHECK(zero.rmse == 0.0);
    CHECK(zero.r_squared == doctest::Approx(1.0));

    // constant truth pins r-squared at 0 rather than dividing by zero
    const Metrics flat = compute_metrics({4.0, 6.0}, {5.0, 5.0});
    CHECK(flat.r_squared == 0.0);
    CHECK(flat.rmse == doctest::Approx(1.0).epsilon(1e-12));

    const Metrics single = compute_metrics({13.0}, {10.0});
    CHECK(single.rmse == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(single.smape == doctest::Approx(100.0 * 3.0 / 11.5).epsilon(1e-12));
    CHECK(single.r_squared == 0.0);

    CHECK_THROWS_AS(compute_metrics({1.0}, {1.0, 2.0}), InputError);
    CHECK_THROWS_AS(compute_metrics({}, {}), InputError);
}

TEST_CASE("random folds are balanced, exhaustive, and seed-deterministic") {
    SmallCity city = small_city(6, 6, 3);  // 108 labels
    const auto folds = kfold_split(city.labels, 5, 77, SplitMode::random);
    REQUIRE(folds.fold_of.size() == 108);

    std::vector<int> count(5, 0);
    for (int f : folds.fold_of) {
        REQUIRE(f >= 0);
        REQUIRE(f < 5);
        ++count[static_cast<std::size_t>(f)];
    }
    const auto [lo, hi] = std::minmax_element(count.begin(), count.end());
    CHECK(*hi - *lo <= 1);
    CHECK(std::accumulate(count.begin(), count.end(), 0) == 108);

    const auto again = kfold_split(city.labels, 5, 77, SplitMode::random);
    CHECK(again.fold_of == folds.fold_of);
    const auto other = kfold_split(city.labels, 5, 78, SplitMode::random);
    CHECK(other.fold_of != folds.fold_of);

    CHECK_THROWS_AS(kfold_split(city.labels, 1, 0, SplitMode::random), ConfigError);
    LabelSet three;
    three.labels.assign(3, Label{});
    CHECK_THROWS_AS(kfold_split(three, 5, 0, SplitMode::random), InputError);
}

TEST_CASE("grid-grouped folds never split a cell") {
    SmallCity city = small_city(4, 3, 5);  // 12 cells, 60 labels
    const auto folds = kfold_split(city.labels, 4, 9, SplitMode::grid_grouped);

    std::map<std::pair<int, int>, std::set<int>> folds_of_cell;
    std::vector<int> cell_count(4, 0);
    std::set<std::pair<int, int>> counted;
    for (std::size_t i = 0; i < folds.fold_of.size(); ++i) {
        const Label& l = city.labels.labels[i];
        folds_of_cell[{l.cell.y, l.cell.x}].insert(folds.fold_of[i]);
        if (counted.insert({l.cell.y, l.cell.x}).second)
            ++cell_count[static_cast<std::size_t>(folds.fold_of[i])];
    }
    for (const auto& [cell, fold_ids] : folds_of_cell) CHECK(fold_ids.size() == 1);
    for (int c : cell_count) CHECK(c == 3);  // 12 cells dealt into 4 folds

    LabelSet one_cell;
    for (int t = 0; t < 10; ++t) {
        Label l;
        l.cell = {1, 1};
        l.t = t;
        one_cell.labels.push_back(l);
    }
    CHECK_THROWS_AS(kfold_split(one_cell, 4, 0, SplitMode::grid_grouped), InputError);
}

TEST_CASE("mode and method names parse both ways") {
    CHECK(parse_split_mode("random") == SplitMode::random);
    CHECK(parse_split_mode("grid_grouped") == SplitMode::grid_grouped);
    CHECK_THROWS_AS(parse_split_mode("spatial"), ConfigError);

    for (Method m : {Method::deep_maps, Method::idw, Method::kriging, Method::knn})
        CHECK(parse_method(method_name(m)) == m);
    CHECK_THROWS_AS(parse_method("gbm"), ConfigError);
}

TEST_CASE("cross-validation scores every method on a learnable city") {
    SmallCity city = small_city();
    CrossValParams params;
    params.k = 4;
    params.seed = 11;
    params.gbdt = fast_gbdt(5);

    feat::Selection all = feat::parse_selection("L+M+N");

    for (Method method : {Method::deep_maps, Method::knn, Method::idw, Method::kriging}) {
        const auto result = cross_validate(city.labels, city.matrix, city.spec, method, all,
                                           params);
        CHECK(result.method == method);
        REQUIRE(result.folds.size() == 4);
        std::size_t tested = 0;
        for (const auto& fold : result.folds) {
            CHECK(fold.train_rows + fold.test_rows == city.labels.size());
            CHECK(fold.test_rows > 0);
            tested += fold.test_rows;
        }
        CHECK(tested == city.labels.size());
        CHECK(std::isfinite(result.pooled.rmse));
        CHECK(result.pooled.rmse >= 0.0);
        // the response is a smooth deterministic surface; every method
        // should explain most of it
        CHECK(result.pooled.r_squared > 0.5);

        const auto again = cross_validate(city.labels, city.matrix, city.spec, method, all,
                                          params);
        CHECK(again.pooled.rmse == result.pooled.rmse);
        CHECK(again.pooled.r_squared == result.pooled.r_squared);
        CHECK(again.fold_mean.smape == result.fold_mean.smape);
    }
}

TEST_CASE("cross-validation pools exactly the per-fold held-out predictions") {
    SmallCity city = small_city(5, 5, 3);
    CrossValParams params;
    params.k = 3;
    params.seed = 4;
    params.gbdt = fast_gbdt(6);

    const auto result = cross_validate(city.labels, city.matrix, city.spec, Method::idw,
                                       feat::parse_selection("L"), params);
    // the unweighted fold mean and the pooled metrics agree loosely but are
    // not the same statistic; both must be populated and finite
    CHECK(result.fold_mean.rmse > 0.0);
    CHECK(result.pooled.rmse > 0.0);
    double max_fold_rmse = 0.0;
    for (const auto& fold : result.folds)
        max_fold_rmse = std::max(max_fold_rmse, fold.metrics.rmse);
    CHECK(result.pooled.rmse <= max_fold_rmse + 1e-12);
    CHECK(result.fold_mean.rmse <= max_fold_rmse + 1e-12);
}

TEST_CASE("cross-validation insists on label-to-row alignment") {
    SmallCity city = small_city(4, 4, 2);
    CrossValParams params;
    params.gbdt = fast_gbdt(1);

    feat::FeatureMatrix swapped = city.matrix;
    std::swap(swapped.keys[0], swapped.keys[1]);
    CHECK_THROWS_AS(cross_validate(city.labels, swapped, city.spec, Method::idw,
                                   feat::parse_selection("L"), params),
                    InputError);

    feat::FeatureMatrix truncated = city.matrix;
    truncated.keys.pop_back();
    for (auto& col : truncated.values) col.pop_back();
    truncated.response.pop_back();
    CHECK_THROWS_AS(cross_validate(city.labels, truncated, city.spec, Method::idw,
                                   feat::parse_selection("L"), params),
                    InputError);
}

TEST_CASE("coverage ablation grows the training pool by mobile fraction") {
    SmallCity city = small_city(6, 6, 4);  // half fixed, half mobile
    const auto curve = coverage_ablation(city.labels, city.matrix, {0.0, 50.0, 100.0}, 21,
                                         fast_gbdt(3));
    REQUIRE(curve.points.size() == 3);
    CHECK(curve.points[0].fraction == 0.0);
    CHECK(curve.points[2].fraction == 100.0);

    const std::size_t n = city.labels.size();
    const std::size_t held_out = static_cast<std::size_t>(std::llround(0.15 * n));
    CHECK(curve.points[2].train_rows == n - held_out);  // 100% uses the whole pool
    CHECK(curve.points[0].train_rows < curve.points[1].train_rows);
    CHECK(curve.points[1].train_rows < curve.points[2].train_rows);
    // 50% takes half the mobile pool, up to rounding
    const auto added_half = curve.points[1].train_rows - curve.points[0].train_rows;
    const auto added_full = curve.points[2].train_rows - curve.points[0].train_rows;
    CHECK(added_half * 2 + 1 >= added_full);
    CHECK(added_half * 2 <= added_full + 1);

    for (const auto& point : curve.points) {
        CHECK(std::isfinite(point.metrics.rmse));
        CHECK(point.metrics.rmse >= 0.0);
    }
    // more coverage cannot hurt on a smooth noiseless surface
    CHECK(curve.points[2].metrics.rmse <= curve.points[0].metrics.rmse);

    const auto again = coverage_ablation(city.labels, city.matrix, {0.0, 50.0, 100.0}, 21,
                                         fast_gbdt(3));
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(again.points[i].metrics.rmse == curve.points[i].metrics.rmse);
        CHECK(again.points[i].train_rows == curve.points[i].train_rows);
    }
}

TEST_CASE("coverage ablation validates fractions and the label mix") {
    SmallCity city = small_city(4, 4, 2);
    const auto params = fast_gbdt(3);
    CHECK_THROWS_AS(coverage_ablation(city.labels, city.matrix, {}, 0, params), ConfigError);
    CHECK_THROWS_AS(coverage_ablation(city.labels, city.matrix, {-1.0, 50.0}, 0, params),
                    ConfigError);
    CHECK_THROWS_AS(coverage_ablation(city.labels, city.matrix, {0.0, 101.0}, 0, params),
                    ConfigError);
    CHECK_THROWS_AS(coverage_ablation(city.labels, city.matrix, {50.0, 50.0}, 0, params),
                    ConfigError);
    CHECK_THROWS_AS(coverage_ablation(city.labels, city.matrix, {20.0, 10.0}, 0, params),
                    ConfigError);
    CHECK_THROWS_AS(
        coverage_ablation(city.labels, city.matrix, {0.0, 100.0}, 0, params, 0.0),
        ConfigError);
    CHECK_THROWS_AS(
        coverage_ablation(city.labels, city.matrix, {0.0, 100.0}, 0, params, 1.0),
        ConfigError);

    SmallCity mobile_only = small_city(4, 4, 2, /*fixed_x_below=*/0);
    CHECK_THROWS_AS(
        coverage_ablation(mobile_only.labels, mobile_only.matrix, {0.0, 100.0}, 0, params),
        InputError);
}

TEST_CASE("city inference fills covered hours and masks absent ones") {
    const GridSpec spec = eval_spec(3, 2, 3);

    gbdt::GbdtModel model;  // no trees: predicts the base score everywhere
    model.base_score = 7.5;
    model.column_names = {"loc_a"};

    feat::FeatureMatrix matrix;
    matrix.columns = {{"loc_a", feat::FeatureGroup::L, "geography"}};
    matrix.values.assign(1, {});
    for (int t : {0, 2}) {  // hour 1 has no rows at all
        for (int y = 0; y < 2; ++y) {
            for (int x = 0; x < 3; ++x) {
                matrix.keys.push_back({x, y, t});
                matrix.values[0].push_back(x);
            }
        }
    }

    const auto result = infer_city(model, matrix, spec);
    REQUIRE(result.frames.size() == 3);
    CHECK(result.masked_hours == 1);
    CHECK(result.predicted_values == 12);
    for (int cell = 0; cell < 6; ++cell) {
        CHECK(result.frames[0].mask[static_cast<std::size_t>(cell)] == 1);
        CHECK(result.frames[0].values[static_cast<std::size_t>(cell)] ==
              doctest::Approx(7.5));
        CHECK(result.frames[1].mask[static_cast<std::size_t>(cell)] == 0);
    }
    CHECK(result.frames[2].t == 2);

    gbdt::GbdtModel negative = model;
    negative.base_score = -3.0;
    const auto clamped = infer_city(negative, matrix, spec);
    CHECK(clamped.frames[0].values[0] == 0.0);
}

TEST_CASE("partially covered hours name the missing cells") {
    const GridSpec spec = eval_spec(3, 2, 1);
    gbdt::GbdtModel model;
    model.base_score = 1.0;
    model.column_names = {"loc_a"};

    feat::FeatureMatrix matrix;
    matrix.columns = {{"loc_a", feat::FeatureGroup::L, "geography"}};
    matrix.values.assign(1, {});
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 3; ++x)
            if (!(x == 2 && y == 1)) {
                matrix.keys.push_back({x, y, 0});
                matrix.values[0].push_back(x);
            }

    bool threw = false;
    try {
        infer_city(model, matrix, spec);
    } catch (const InputError& e) {
        threw = true;
        const std::string what = e.what();
        CHECK(what.find("covers 5 of 6") != std::string::npos);
        CHECK(what.find("(2,1)") != std::string::npos);
    }
    CHECK(threw);

    feat::FeatureMatrix outside = matrix;
    outside.keys[0] = {9, 0, 0};
    CHECK_THROWS_AS(infer_city(model, outside, spec), InputError);
}

}  // TEST_SUITE
