#include "deepmaps/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <utility>

#include "deepmaps/rng.hpp"

namespace deepmaps::eval {

Metrics compute_metrics(const std::vector<double>& predictions,
                        const std::vector<double>& truths) {
    if (predictions.size() != truths.size()) {
        throw InputError("compute_metrics: " + std::to_string(predictions.size()) +
                         " predictions vs " + std::to_string(truths.size()) + " truths");
    }
    if (predictions.empty()) throw InputError("compute_metrics: no samples");

    const std::size_t n = predictions.size();
    double sse = 0.0;
    double smape_sum = 0.0;
    double truth_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double err = predictions[i] - truths[i];
        sse += err * err;
        const double denom = (std::abs(truths[i]) + std::abs(predictions[i])) / 2.0;
        if (denom > 0.0) smape_sum += std::abs(err) / denom;
        truth_sum += truths[i];
    }
    const double truth_mean = truth_sum / static_cast<double>(n);
    double sst = 0.0;
    for (double t : truths) {
        const double d = t - truth_mean;
        sst += d * d;
    }

    Metrics m;
    m.rmse = std::sqrt(sse / static_cast<double>(n));
    m.smape = 100.0 * smape_sum / static_cast<double>(n);
    m.r_squared = sst > 0.0 ? 1.0 - sse / sst : 0.0;
    return m;
}

SplitMode parse_split_mode(const std::string& text) {
    if (text == "random") return SplitMode::random;
    if (text == "grid_grouped") return SplitMode::grid_grouped;
    throw ConfigError("unknown split mode '" + text + "' (random, grid_grouped)");
}

FoldAssignment kfold_split(const LabelSet& labels, int k, std::uint64_t seed, SplitMode mode) {
    if (k < 2) throw ConfigError("kfold_split: k must be >= 2, got " + std::to_string(k));
    const std::size_t n = labels.labels.size();

    FoldAssignment out;
    out.k = k;
    out.seed = seed;
    out.mode = mode;
    out.fold_of.assign(n, -1);

    auto engine = make_engine(seed, "kfold", 0);
    if (mode == SplitMode::random) {
        if (n < static_cast<std::size_t>(k)) {
            throw InputError("kfold_split: " + std::to_string(n) + " labels cannot fill " +
                             std::to_string(k) + " folds");
        }
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), engine);
        for (std::size_t i = 0; i < n; ++i) {
            out.fold_of[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
        }
        return out;
    }

    // grid_grouped: collect the distinct cells in (y, x) order, shuffle them,
    // and deal them round-robin so every observation of a cell lands in the
    // same fold.
    std::set<std::pair<int, int>> cell_set;
    for (const Label& label : labels.labels) cell_set.emplace(label.cell.y, label.cell.x);
    if (cell_set.size() < static_cast<std::size_t>(k)) {
        throw InputError("kfold_split: " + std::to_string(cell_set.size()) +
                         " distinct cells cannot fill " + std::to_string(k) + " folds");
    }
    std::vector<std::pair<int, int>> cells(cell_set.begin(), cell_set.end());
    std::shuffle(cells.begin(), cells.end(), engine);
    std::map<std::pair<int, int>, int> fold_of_cell;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        fold_of_cell[cells[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    }
    for (std::size_t i = 0; i < n; ++i) {
        out.fold_of[i] = fold_of_cell.at({labels.labels[i].cell.y, labels.labels[i].cell.x});
    }
    return out;
}

Method parse_method(const std::string& text) {
    if (text == "deep_maps") return Method::deep_maps;
    if (text == "idw") return Method::idw;
    if (text == "kriging") return Method::kriging;
    if (text == "knn") return Method::knn;
    throw ConfigError("unknown method '" + text + "' (deep_maps, idw, kriging, knn)");
}

std::string method_name(Method method) {
    switch (method) {
        case Method::deep_maps: return "deep_maps";
        case Method::idw: return "idw";
        case Method::kriging: return "kriging";
        case Method::knn: return "knn";
    }
    throw ConfigError("method_name: bad enum value");
}

namespace {

/// Check that matrix row i describes labels.labels[i]; the evaluators index
/// both by the same position.
void check_alignment(const LabelSet& labels, const feat::FeatureMatrix& matrix) {
    if (labels.labels.size() != matrix.rows()) {
        throw InputError("cross_validate: " + std::to_string(labels.labels.size()) +
                         " labels vs " + std::to_string(matrix.rows()) + " feature rows");
    }
    for (std::size_t i = 0; i < matrix.keys.size(); ++i) {
        const Label& label = labels.labels[i];
        const feat::SampleKey& key = matrix.keys[i];
        if (label.cell.x != key.x || label.cell.y != key.y || label.t != key.t) {
            throw InputError("cross_validate: feature row " + std::to_string(i) +
                             " is for cell (" + std::to_string(key.x) + "," +
                             std::to_string(key.y) + ") hour " + std::to_string(key.t) +
                             " but the label is for cell (" + std::to_string(label.cell.x) +
                             "," + std::to_string(label.cell.y) + ") hour " +
                             std::to_string(label.t));
        }
    }
}

feat::FeatureMatrix take_rows(const feat::FeatureMatrix& matrix,
                              const std::vector<std::size_t>& rows) {
    feat::FeatureMatrix out;
    out.columns = matrix.columns;
    out.keys.reserve(rows.size());
    for (std::size_t row : rows) out.keys.push_back(matrix.keys[row]);
    if (!matrix.response.empty()) {
        out.response.reserve(rows.size());
        for (std::size_t row : rows) out.response.push_back(matrix.response[row]);
    }
    out.values.resize(matrix.values.size());
    for (std::size_t c = 0; c < matrix.values.size(); ++c) {
        const std::vector<double>& src = matrix.values[c];
        std::vector<double>& dst = out.values[c];
        dst.reserve(rows.size());
        for (std::size_t row : rows) dst.push_back(src[row]);
    }
    return out;
}

constexpr std::size_t kMinKrigingSources = 10;

/// Predict the test labels of one fold with a spatial interpolator, hour by
/// hour, from the training labels of that hour (placed at cell centers).
std::vector<double> interpolate_fold(const LabelSet& labels, const GridSpec& spec,
                                     const std::vector<std::size_t>& train_rows,
                                     const std::vector<std::size_t>& test_rows,
                                     Method method, double idw_power) {
    std::map<int, std::vector<baselines::SpatialSample>> sources_by_hour;
    double train_sum = 0.0;
    for (std::size_t row : train_rows) {
        const Label& label = labels.labels[row];
        sources_by_hour[label.t].push_back({cell_center_km(label.cell, spec), label.pm25});
        train_sum += label.pm25;
    }
    const double train_mean =
        train_rows.empty() ? 0.0 : train_sum / static_cast<double>(train_rows.size());

    // Kriging reuses one factored system per hour; built lazily. Hours where
    // the variogram fit is infeasible fall back to IDW and are remembered.
    std::map<int, baselines::KrigingSystem> systems;
    std::set<int> idw_hours;

    std::vector<double> predictions;
    predictions.reserve(test_rows.size());
    for (std::size_t row : test_rows) {
        const Label& label = labels.labels[row];
        const KmPoint query = cell_center_km(label.cell, spec);
        auto it = sources_by_hour.find(label.t);
        if (it == sources_by_hour.end()) {
            predictions.push_back(train_mean);  // nothing observed that hour
            continue;
        }
        const std::vector<baselines::SpatialSample>& sources = it->second;
        bool use_kriging = method == Method::kriging &&
                           sources.size() >= kMinKrigingSources &&
                           idw_hours.count(label.t) == 0;
        if (use_kriging) {
            auto sys_it = systems.find(label.t);
            if (sys_it == systems.end()) {
                try {
                    baselines::VariogramModel model = baselines::fit_variogram(sources);
                    sys_it = systems
                                 .emplace(label.t,
                                          baselines::build_kriging_system(
                                              baselines::average_duplicates(sources), model))
                                 .first;
                } catch (const InputError&) {
                    idw_hours.insert(label.t);  // degenerate hour; fall back to IDW
                    use_kriging = false;
                }
            }
            if (use_kriging) {
                predictions.push_back(baselines::kriging_predict(sys_it->second, query).value);
                continue;
            }
        }
        predictions.push_back(baselines::idw_interpolate(sources, query, idw_power));
    }
    return predictions;
}

std::vector<double> clamp_nonneg(std::vector<double> values) {
    for (double& v : values) v = std::max(0.0, v);
    return values;
}

}  // namespace

CrossValResult cross_validate(const LabelSet& labels, const feat::FeatureMatrix& matrix,
                              const GridSpec& spec, Method method,
                              feat::Selection selection, const CrossValParams& params) {
    check_alignment(labels, matrix);
    const FoldAssignment folds = kfold_split(labels, params.k, params.seed, params.mode);

    const bool uses_features = method == Method::deep_maps || method == Method::knn;
    feat::FeatureMatrix selected;
    if (uses_features) selected = feat::filter_matrix(matrix, selection);

    CrossValResult result;
    result.method = method;
    result.selection = selection;

    std::vector<double> pooled_pred;
    std::vector<double> pooled_truth;
    for (int f = 0; f < folds.k; ++f) {
        std::vector<std::size_t> train_rows;
        std::vector<std::size_t> test_rows;
        for (std::size_t i = 0; i < folds.fold_of.size(); ++i) {
            (folds.fold_of[i] == f ? test_rows : train_rows).push_back(i);
        }
        if (test_rows.empty() || train_rows.empty()) {
            throw InputError("cross_validate: fold " + std::to_string(f) +
                             " has an empty train or test side");
        }

        std::vector<double> predictions;
        if (method == Method::deep_maps) {
            feat::FeatureMatrix train = take_rows(selected, train_rows);
            feat::FeatureMatrix test = take_rows(selected, test_rows);
            gbdt::GbdtParams fold_params = params.gbdt;
            fold_params.seed = derive_seed(params.gbdt.seed, "fold",
                                                static_cast<std::uint64_t>(f));
            gbdt::GbdtModel model = gbdt::fit(train, train.response, fold_params);
            predictions = clamp_nonneg(gbdt::predict(model, test));
        } else if (method == Method::knn) {
            feat::FeatureMatrix train = take_rows(selected, train_rows);
            feat::FeatureMatrix test = take_rows(selected, test_rows);
            predictions =
                clamp_nonneg(baselines::knn_predict(train, train.response, test, params.knn_k));
        } else {
            predictions = clamp_nonneg(interpolate_fold(labels, spec, train_rows, test_rows,
                                                        method, params.idw_power));
        }

        std::vector<double> truths;
        truths.reserve(test_rows.size());
        for (std::size_t row : test_rows) truths.push_back(labels.labels[row].pm25);

        FoldResult fold_result;
        fold_result.fold = f;
        fold_result.train_rows = train_rows.size();
        fold_result.test_rows = test_rows.size();
        fold_result.metrics = compute_metrics(predictions, truths);
        result.folds.push_back(fold_result);

        pooled_pred.insert(pooled_pred.end(), predictions.begin(), predictions.end());
        pooled_truth.insert(pooled_truth.end(), truths.begin(), truths.end());
    }

    result.pooled = compute_metrics(pooled_pred, pooled_truth);
    Metrics mean;
    for (const FoldResult& fold : result.folds) {
        mean.rmse += fold.metrics.rmse;
        mean.smape += fold.metrics.smape;
        mean.r_squared += fold.metrics.r_squared;
    }
    const double nf = static_cast<double>(result.folds.size());
    mean.rmse /= nf;
    mean.smape /= nf;
    mean.r_squared /= nf;
    result.fold_mean = mean;
    return result;
}

AblationCurve coverage_ablation(const LabelSet& labels, const feat::FeatureMatrix& matrix,
                                const std::vector<double>& fractions, std::uint64_t seed,
                                const gbdt::GbdtParams& gbdt_params, double test_fraction) {
    check_alignment(labels, matrix);
    if (fractions.empty()) throw ConfigError("coverage_ablation: no fractions given");
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        if (fractions[i] < 0.0 || fractions[i] > 100.0) {
            throw ConfigError("coverage_ablation: fraction " +
                              std::to_string(fractions[i]) + " is outside [0, 100]");
        }
        if (i > 0 && fractions[i] <= fractions[i - 1]) {
            throw ConfigError("coverage_ablation: fractions must be strictly increasing");
        }
    }
    if (test_fraction <= 0.0 || test_fraction >= 1.0) {
        throw ConfigError("coverage_ablation: test_fraction must be in (0, 1)");
    }

    const std::size_t n = labels.labels.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    {
        auto engine = make_engine(seed, "ablate_test", 0);
        std::shuffle(order.begin(), order.end(), engine);
    }
    const std::size_t test_count = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n))));
    if (test_count >= n) {
        throw InputError("coverage_ablation: " + std::to_string(n) +
                         " labels leave no training pool after holding out " +
                         std::to_string(test_count));
    }
    std::vector<char> is_test(n, 0);
    std::vector<std::size_t> test_rows(order.begin(),
                                       order.begin() + static_cast<std::ptrdiff_t>(test_count));
    std::sort(test_rows.begin(), test_rows.end());
    for (std::size_t row : test_rows) is_test[row] = 1;

    // The training pool splits into always-on fixed labels and a mobile pool
    // sampled by prefix, so each fraction's training set contains the last.
    std::vector<std::size_t> fixed_rows;
    std::vector<std::size_t> mobile_pool;
    for (std::size_t i = 0; i < n; ++i) {
        if (is_test[i]) continue;
        (labels.labels[i].source == LabelSource::fixed ? fixed_rows : mobile_pool).push_back(i);
    }
    if (fixed_rows.empty()) {
        throw InputError("coverage_ablation: no fixed labels in the training pool");
    }
    {
        auto engine = make_engine(seed, "ablate_sample", 0);
        std::shuffle(mobile_pool.begin(), mobile_pool.end(), engine);
    }

    feat::FeatureMatrix test = take_rows(matrix, test_rows);
    std::vector<double> truths;
    truths.reserve(test_rows.size());
    for (std::size_t row : test_rows) truths.push_back(labels.labels[row].pm25);

    gbdt::GbdtParams fit_params = gbdt_params;
    fit_params.seed = derive_seed(seed, "ablate_fit", 0);

    AblationCurve curve;
    curve.seed = seed;
    for (double fraction : fractions) {
        const std::size_t take = static_cast<std::size_t>(std::llround(
            fraction / 100.0 * static_cast<double>(mobile_pool.size())));
        std::vector<std::size_t> train_rows = fixed_rows;
        train_rows.insert(train_rows.end(), mobile_pool.begin(),
                          mobile_pool.begin() + static_cast<std::ptrdiff_t>(take));
        std::sort(train_rows.begin(), train_rows.end());

        feat::FeatureMatrix train = take_rows(matrix, train_rows);
        gbdt::GbdtModel model = gbdt::fit(train, train.response, fit_params);
        std::vector<double> predictions = clamp_nonneg(gbdt::predict(model, test));

        AblationPoint point;
        point.fraction = fraction;
        point.train_rows = train_rows.size();
        point.metrics = compute_metrics(predictions, truths);
        curve.points.push_back(point);
    }
    return curve;
}

InferenceResult infer_city(const gbdt::GbdtModel& model, const feat::FeatureMatrix& matrix,
                           const GridSpec& spec) {
    const std::size_t cells =
        static_cast<std::size_t>(spec.width) * static_cast<std::size_t>(spec.height);
    std::vector<std::vector<std::size_t>> rows_by_hour(
        static_cast<std::size_t>(spec.num_hours));
    for (std::size_t i = 0; i < matrix.keys.size(); ++i) {
        const feat::SampleKey& key = matrix.keys[i];
        if (key.t < 0 || key.t >= spec.num_hours || key.x < 0 || key.x >= spec.width ||
            key.y < 0 || key.y >= spec.height) {
            throw InputError("infer_city: feature row for cell (" + std::to_string(key.x) +
                             "," + std::to_string(key.y) + ") hour " + std::to_string(key.t) +
                             " is outside the grid");
        }
        rows_by_hour[static_cast<std::size_t>(key.t)].push_back(i);
    }

    const std::vector<double> predictions = clamp_nonneg(gbdt::predict(model, matrix));

    InferenceResult result;
    result.frames.reserve(static_cast<std::size_t>(spec.num_hours));
    for (int t = 0; t < spec.num_hours; ++t) {
        GridFrame frame;
        frame.t = t;
        frame.width = spec.width;
        frame.height = spec.height;
        frame.values.assign(cells, 0.0);
        frame.mask.assign(cells, 0);

        const std::vector<std::size_t>& rows = rows_by_hour[static_cast<std::size_t>(t)];
        if (rows.empty()) {
            // An hour the feature builder dropped entirely (e.g. an unfillable
            // gap in the outside-station series) stays masked.
            ++result.masked_hours;
            result.frames.push_back(std::move(frame));
            continue;
        }
        if (rows.size() != cells) {
            std::vector<char> seen(cells, 0);
            for (std::size_t row : rows) {
                const feat::SampleKey& key = matrix.keys[row];
                seen[static_cast<std::size_t>(key.y) * static_cast<std::size_t>(spec.width) +
                     static_cast<std::size_t>(key.x)] = 1;
            }
            std::string missing;
            int listed = 0;
            for (std::size_t cell = 0; cell < cells && listed < 3; ++cell) {
                if (seen[cell]) continue;
                const int x = static_cast<int>(cell) % spec.width;
                const int y = static_cast<int>(cell) / spec.width;
                missing += " (" + std::to_string(x) + "," + std::to_string(y) + ")";
                ++listed;
            }
            throw InputError("infer_city: hour " + std::to_string(t) + " covers " +
                             std::to_string(rows.size()) + " of " + std::to_string(cells) +
                             " cells; first missing:" + missing);
        }
        for (std::size_t row : rows) {
            const feat::SampleKey& key = matrix.keys[row];
            const std::size_t cell =
                static_cast<std::size_t>(key.y) * static_cast<std::size_t>(spec.width) +
                static_cast<std::size_t>(key.x);
            frame.values[cell] = predictions[row];
            frame.mask[cell] = 1;
            ++result.predicted_values;
        }
        result.frames.push_back(std::move(frame));
    }
    return result;
}

}  // namespace deepmaps::eval
