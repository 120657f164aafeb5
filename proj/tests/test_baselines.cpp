#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "deepmaps/baselines.hpp"
#include "deepmaps/featurize.hpp"
#include "deepmaps/grid.hpp"
#include "doctest.h"

using namespace deepmaps;
using namespace deepmaps::baselines;

namespace {

std::vector<SpatialSample> random_sites(std::mt19937_64& engine, int n, double extent_km) {
    std::uniform_real_distribution<double> pos(0.0, extent_km);
    std::normal_distribution<double> val(40.0, 12.0);
    std::vector<SpatialSample> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out.push_back({{pos(engine), pos(engine)}, val(engine)});
    return out;
}

feat::FeatureMatrix matrix_from(const std::vector<std::vector<double>>& rows) {
    feat::FeatureMatrix m;
    const std::size_t cols = rows.empty() ? 0 : rows[0].size();
    for (std::size_t c = 0; c < cols; ++c)
        m.columns.push_back({"f" + std::to_string(c), feat::FeatureGroup::L, "other"});
    m.values.assign(cols, {});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        m.keys.push_back({static_cast<int>(r), 0, 0});
        for (std::size_t c = 0; c < cols; ++c) m.values[c].push_back(rows[r][c]);
    }
    return m;
}

/// Exhaustive KNN reference: standardize by train stats, full sort, mean of k.
double knn_oracle(const std::vector<std::vector<double>>& train,
                  const std::vector<double>& responses, const std::vector<double>& query,
                  int k) {
    const std::size_t cols = query.size();
    std::vector<double> mean(cols, 0.0), sd(cols, 0.0);
    for (std::size_t c = 0; c < cols; ++c) {
        for (const auto& row : train) mean[c] += row[c];
        mean[c] /= static_cast<double>(train.size());
        for (const auto& row : train) sd[c] += (row[c] - mean[c]) * (row[c] - mean[c]);
        sd[c] = std::sqrt(sd[c] / static_cast<double>(train.size()));
        if (sd[c] == 0.0) sd[c] = 1.0;
    }
    std::vector<std::pair<double, std::size_t>> dist;
    for (std::size_t r = 0; r < train.size(); ++r) {
        double d2 = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double diff = (train[r][c] - mean[c]) / sd[c] - (query[c] - mean[c]) / sd[c];
            d2 += diff * diff;
        }
        dist.push_back({d2, r});
    }
    std::stable_sort(dist.begin(), dist.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    double sum = 0.0;
    for (int i = 0; i < k; ++i) sum += responses[dist[static_cast<std::size_t>(i)].second];
    return sum / k;
}

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("idw reproduces a source value exactly at its site") {
    std::mt19937_64 engine(11);
    const auto sources = random_sites(engine, 20, 30.0);
    for (const auto& s : sources)
        CHECK(idw_interpolate(sources, s.pos, 2.0) == doctest::Approx(s.value).epsilon(1e-12));
}

TEST_CASE("idw two-source hand value") {
    // sources 10 at (0,0) and 20 at (3,0); query (1,0), power 2:
    // weights 1 and 1/4 -> (10 + 5) / 1.25 = 12
    const std::vector<SpatialSample> sources{{{0.0, 0.0}, 10.0}, {{3.0, 0.0}, 20.0}};
    CHECK(idw_interpolate(sources, {1.0, 0.0}, 2.0) == doctest::Approx(12.0).epsilon(1e-14));
}

TEST_CASE("idw respects the power parameter") {
    const std::vector<SpatialSample> sources{{{0.0, 0.0}, 0.0}, {{2.0, 0.0}, 10.0}};
    // power 1: weights 1, 1/1 at query (1,0) -> 5; power 4 biases to the near source
    CHECK(idw_interpolate(sources, {1.0, 0.0}, 1.0) == doctest::Approx(5.0));
    const double near_biased = idw_interpolate(sources, {0.5, 0.0}, 4.0);
    CHECK(near_biased < 2.0);
    CHECK_THROWS_AS(idw_interpolate({}, {0.0, 0.0}, 2.0), InputError);
}

TEST_CASE("average_duplicates merges coincident sites in first-seen order") {
    const std::vector<SpatialSample> sources{
        {{1.0, 1.0}, 10.0}, {{2.0, 2.0}, 5.0}, {{1.0, 1.0 + 1e-12}, 20.0}};
    const auto merged = average_duplicates(sources);
    REQUIRE(merged.size() == 2);
    CHECK(merged[0].value == doctest::Approx(15.0));
    CHECK(merged[0].pos.east == doctest::Approx(1.0));
    CHECK(merged[1].value == doctest::Approx(5.0));
}

TEST_CASE("variogram model evaluates the nugget literally at h = 0") {
    const VariogramModel model{2.5, 7.0, 10.0};
    CHECK(model.value(0.0) == 2.5);
    CHECK(model.value(1e-300) > 2.5 - 1e-12);
    // approaches nugget + sill at long range: gamma(a) = c0 + c1 (1 - e^-3)
    CHECK(model.value(10.0) ==
          doctest::Approx(2.5 + 7.0 * (1.0 - std::exp(-3.0))).epsilon(1e-12));
}

TEST_CASE("empirical variogram matches the hand-computed Matheron estimate") {
    // collinear sites 1 km apart, values 0,1,0,2; with 6 equal-width bins the
    // distances 1, 2, 3 fall in separate bins:
    //   h=1: pairs (0,1),(1,0),(0,2) -> gamma = (1+1+4)/(2*3) = 1
    //   h=2: pairs (0,0),(1,2)       -> gamma = (0+1)/(2*2)   = 0.25
    //   h=3: pair  (0,2)             -> gamma = 4/2           = 2
    const std::vector<SpatialSample> sites{
        {{0.0, 0.0}, 0.0}, {{1.0, 0.0}, 1.0}, {{2.0, 0.0}, 0.0}, {{3.0, 0.0}, 2.0}};
    const auto bins = empirical_variogram(sites, 6);
    REQUIRE(bins.size() == 3);
    CHECK(bins[0].mean_distance == doctest::Approx(1.0));
    CHECK(bins[0].pairs == 3);
    CHECK(bins[0].gamma == doctest::Approx(1.0));
    CHECK(bins[1].mean_distance == doctest::Approx(2.0));
    CHECK(bins[1].pairs == 2);
    CHECK(bins[1].gamma == doctest::Approx(0.25));
    CHECK(bins[2].mean_distance == doctest::Approx(3.0));
    CHECK(bins[2].pairs == 1);
    CHECK(bins[2].gamma == doctest::Approx(2.0));

    CHECK_THROWS_AS(empirical_variogram({{{0.0, 0.0}, 1.0}, {{0.0, 0.0}, 2.0}}, 6),
                    InputError);
    CHECK_THROWS_AS(empirical_variogram(sites, 0), ConfigError);
}

TEST_CASE("variogram fit recovers planted parameters from a Gaussian field") {
    // sample an exponential-covariance Gaussian random field by Cholesky and
    // check the fitted range/sill against the planted values
    const double true_range = 12.0, true_sill = 9.0;
    int range_hits = 0, sill_hits = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        std::mt19937_64 engine(seed);
        std::uniform_real_distribution<double> pos(0.0, 40.0);
        const int n = 200;
        Eigen::MatrixXd cov(n, n);
        std::vector<KmPoint> pts;
        for (int i = 0; i < n; ++i) pts.push_back({pos(engine), pos(engine)});
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                const double h = std::hypot(pts[static_cast<std::size_t>(i)].east -
                                                pts[static_cast<std::size_t>(j)].east,
                                            pts[static_cast<std::size_t>(i)].north -
                                                pts[static_cast<std::size_t>(j)].north);
                cov(i, j) = true_sill * std::exp(-3.0 * h / true_range);
            }
            cov(i, i) += 1e-9;
        }
        const Eigen::MatrixXd chol = cov.llt().matrixL();
        std::normal_distribution<double> normal(0.0, 1.0);
        Eigen::VectorXd z(n);
        for (int i = 0; i < n; ++i) z(i) = normal(engine);
        const Eigen::VectorXd field = chol * z;

        std::vector<SpatialSample> samples;
        for (int i = 0; i < n; ++i)
            samples.push_back({pts[static_cast<std::size_t>(i)],
                               25.0 + field(i)});
        const VariogramModel fit = fit_variogram(samples);
        const double total = fit.nugget + fit.partial_sill;
        if (fit.range_km > 0.5 * true_range && fit.range_km < 1.5 * true_range) ++range_hits;
        if (total > 0.7 * true_sill && total < 1.3 * true_sill) ++sill_hits;
        CHECK(fit.nugget >= 0.0);
        CHECK(fit.partial_sill >= 0.0);
    }
    // a single realization can be unlucky; most seeds must recover the model
    CHECK(range_hits >= 3);
    CHECK(sill_hits >= 3);
}

TEST_CASE("variogram fit handles a constant field") {
    std::vector<SpatialSample> flat;
    std::mt19937_64 engine(3);
    std::uniform_real_distribution<double> pos(0.0, 10.0);
    for (int i = 0; i < 12; ++i) flat.push_back({{pos(engine), pos(engine)}, 42.0});
    const VariogramModel fit = fit_variogram(flat);
    CHECK(fit.partial_sill == 0.0);
    CHECK_THROWS_AS(fit_variogram({{{0.0, 0.0}, 1.0}}, 12), InputError);
}

TEST_CASE("kriging weights solve the hand-built ordinary system") {
    // three sources, exponential model c0=0, c1=5, a=2; solution computed
    // independently with a dense linear solve
    const VariogramModel model{0.0, 5.0, 2.0};
    const std::vector<SpatialSample> sources{
        {{0.0, 0.0}, 10.0}, {{1.0, 0.0}, 14.0}, {{0.0, 1.0}, 12.0}};
    const KrigingSystem system = build_kriging_system(sources, model);
    const KrigingEstimate est = kriging_predict(system, {0.5, 0.5});
    CHECK(est.weight_sum == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(est.value == doctest::Approx(12.092717165305391).epsilon(1e-9));
}

TEST_CASE("zero-nugget kriging is exact at the sources") {
    std::mt19937_64 engine(17);
    const auto raw = random_sites(engine, 25, 20.0);
    const auto sources = average_duplicates(raw);
    const VariogramModel model{0.0, 8.0, 7.5};
    const KrigingSystem system = build_kriging_system(sources, model);
    for (const auto& s : sources) {
        const KrigingEstimate est = kriging_predict(system, s.pos);
        CHECK(est.value == doctest::Approx(s.value).epsilon(1e-8));
        CHECK(est.weight_sum == doctest::Approx(1.0).epsilon(1e-8));
    }
}

TEST_CASE("kriging weight sums stay 1 across random configurations") {
    std::mt19937_64 engine(23);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 3 + static_cast<int>(engine() % 20);
        const auto sources = average_duplicates(random_sites(engine, n, 25.0));
        const VariogramModel model{unit(engine) * 2.0, 1.0 + unit(engine) * 9.0,
                                   1.0 + unit(engine) * 20.0};
        const KrigingSystem system = build_kriging_system(sources, model);
        const KmPoint query{unit(engine) * 25.0, unit(engine) * 25.0};
        const KrigingEstimate est = kriging_predict(system, query);
        CHECK(est.weight_sum == doctest::Approx(1.0).epsilon(1e-8));
        CHECK(std::isfinite(est.value));
    }
}

TEST_CASE("a constant-variogram field predicts the mean everywhere") {
    const VariogramModel flat{0.0, 0.0, 5.0};
    const std::vector<SpatialSample> sources{{{0.0, 0.0}, 10.0}, {{4.0, 0.0}, 20.0}};
    const KrigingSystem system = build_kriging_system(sources, flat);
    CHECK(system.constant_field);
    CHECK(kriging_predict(system, {2.0, 9.0}).value == doctest::Approx(15.0));
}

TEST_CASE("knn matches an exhaustive reference on random data") {
    std::mt19937_64 engine(31);
    std::normal_distribution<double> normal(0.0, 3.0);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 30, cols = 4;
        std::vector<std::vector<double>> train(n, std::vector<double>(cols));
        std::vector<double> responses(n);
        for (std::size_t r = 0; r < n; ++r) {
            for (auto& v : train[r]) v = normal(engine);
            responses[r] = normal(engine) * 10.0;
        }
        std::vector<std::vector<double>> queries(5, std::vector<double>(cols));
        for (auto& q : queries)
            for (auto& v : q) v = normal(engine);

        const auto train_m = matrix_from(train);
        const auto query_m = matrix_from(queries);
        const auto got = knn_predict(train_m, responses, query_m, 7);
        REQUIRE(got.size() == queries.size());
        for (std::size_t q = 0; q < queries.size(); ++q)
            CHECK(got[q] == doctest::Approx(knn_oracle(train, responses, queries[q], 7))
                                .epsilon(1e-10));
    }
}

TEST_CASE("knn ties at the k-th distance resolve by training order") {
    // four training rows at the same point: the first k in row order win
    const auto train = matrix_from({{0.0}, {0.0}, {0.0}, {0.0}});
    const std::vector<double> responses{1.0, 2.0, 3.0, 100.0};
    const auto got = knn_predict(train, responses, matrix_from({{0.0}}), 3);
    CHECK(got[0] == doctest::Approx(2.0));
}

TEST_CASE("knn clamps k to the training size") {
    const auto train = matrix_from({{0.0}, {1.0}});
    const std::vector<double> responses{4.0, 8.0};
    const auto got = knn_predict(train, responses, matrix_from({{0.5}}), 10);
    CHECK(got[0] == doctest::Approx(6.0));
}

}  // TEST_SUITE("baselines")
