#include "deepmaps/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "deepmaps/rng.hpp"

namespace deepmaps::pipeline {

namespace {

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

/// Append the gridded meteorology to the dynamic series as seven channels:
/// temp, pressure, vapor pressure, rh, wind speed, and the wind direction
/// as sine/cosine components (a circular variable fed to thresholds split
/// poorly in degrees). Masked hours take the channel's mean over valid
/// hours so one silent station outage cannot poison whole rows.
void merge_meteorology(feat::DynamicSeries& series, const ingest::MeteoField& field) {
    std::size_t valid_hours = 0;
    for (std::uint8_t v : field.hour_valid) valid_hours += v;
    if (valid_hours == 0) {
        std::fprintf(stderr,
                     "pipeline: no meteorology hour has a reporting station; "
                     "met_* channels omitted\n");
        return;
    }

    struct Channel {
        const char* name;
        ingest::MeteoVar var;
        int component;  // 0 = raw, 1 = sin, 2 = cos
    };
    const Channel channels[] = {
        {"met_temp", ingest::MeteoVar::temp, 0},
        {"met_pressure", ingest::MeteoVar::pressure, 0},
        {"met_vapor_pressure", ingest::MeteoVar::vapor_pressure, 0},
        {"met_rh", ingest::MeteoVar::rh, 0},
        {"met_wind_speed", ingest::MeteoVar::wind_speed, 0},
        {"met_wind_sin", ingest::MeteoVar::wind_dir, 1},
        {"met_wind_cos", ingest::MeteoVar::wind_dir, 2},
    };

    const std::size_t cells =
        static_cast<std::size_t>(series.width) * static_cast<std::size_t>(series.height);
    for (const Channel& channel : channels) {
        // One full plane-per-hour pass; masked hours patched afterwards.
        std::vector<std::vector<double>> planes(
            static_cast<std::size_t>(series.num_hours));
        std::vector<double> sum_per_cell(cells, 0.0);
        for (int t = 0; t < series.num_hours; ++t) {
            std::vector<double>& plane = planes[static_cast<std::size_t>(t)];
            plane.assign(cells, 0.0);
            if (!field.hour_valid[static_cast<std::size_t>(t)]) continue;
            for (int y = 0; y < series.height; ++y) {
                for (int x = 0; x < series.width; ++x) {
                    double v = field.at(channel.var, t, x, y);
                    if (channel.component == 1) v = std::sin(v * kDegToRad);
                    if (channel.component == 2) v = std::cos(v * kDegToRad);
                    const std::size_t cell =
                        static_cast<std::size_t>(y) * series.width + x;
                    plane[cell] = v;
                    sum_per_cell[cell] += v;
                }
            }
        }
        for (int t = 0; t < series.num_hours; ++t) {
            if (field.hour_valid[static_cast<std::size_t>(t)]) continue;
            std::vector<double>& plane = planes[static_cast<std::size_t>(t)];
            for (std::size_t cell = 0; cell < cells; ++cell) {
                plane[cell] = sum_per_cell[cell] / static_cast<double>(valid_hours);
            }
        }
        series.names.push_back(channel.name);
        series.categories.push_back("meteorology");
        for (int t = 0; t < series.num_hours; ++t) {
            series.planes[static_cast<std::size_t>(t)].push_back(
                std::move(planes[static_cast<std::size_t>(t)]));
        }
    }
}

}  // namespace

CityData load_city_data(const RunConfig& config, IngestSummary* summary) {
    const std::string dir = config.data_dir + "/";
    IngestSummary local;

    CityData data;
    data.grid = config.grid;
    data.station_meta = ingest::build_station_meta(dir + kFixedCsv, data.grid);
    for (const auto& meta : data.station_meta) {
        ++local.stations_total;
        if (!meta.inside_study_area) ++local.stations_outside;
    }
    data.fixed_obs =
        ingest::load_fixed_observations(dir + kFixedCsv, data.grid, data.station_meta,
                                        &local.fixed);
    data.mobile_points = ingest::load_mobile_points(dir + kMobileCsv, data.grid, &local.mobile);
    const std::vector<ingest::MeteoReading> meteo =
        ingest::load_meteo_readings(dir + kMeteoCsv, &local.meteo);
    data.static_volume =
        ingest::load_static_features(dir + kStaticCsv, data.grid, &local.static_features);
    data.dynamic_series =
        ingest::load_dynamic_features(dir + kDynamicCsv, data.grid, &local.dynamic_features);

    data.mean_wind_ms = ingest::mean_wind_speed(meteo);
    data.macro_stations =
        ingest::build_macro_stations(data.station_meta, data.grid, data.mean_wind_ms);
    data.external_series = ingest::build_external_series(data.fixed_obs, data.station_meta,
                                                         data.grid);
    merge_meteorology(data.dynamic_series, ingest::grid_meteorology(meteo, data.grid));

    if (summary) *summary = local;
    return data;
}

LabelBuild build_labels(const CityData& data, const RunConfig& config) {
    (void)config;  // calibration has no tunables; signature kept for symmetry
    LabelBuild out;
    out.fixed_labels = calibrate::labels_from_fixed(data.fixed_obs, data.grid);
    out.aggregates = ingest::aggregate_mobile(data.mobile_points, data.grid);

    const std::vector<calibrate::ColocatedPair> pairs =
        calibrate::pair_colocated(out.fixed_labels, out.aggregates);
    out.colocated_pairs = pairs.size();
    out.model = calibrate::fit_calibration(pairs, data.grid);
    out.applied = calibrate::apply_calibration(out.model, out.aggregates, data.grid);
    out.labels = calibrate::build_label_set(out.fixed_labels, out.applied.labels);
    return out;
}

FeatureContext build_feature_context(const CityData& data, const RunConfig& config) {
    if (data.static_volume.channels() == 0) {
        throw InputError("build_feature_context: no static feature channels");
    }
    if (data.dynamic_series.channels() == 0) {
        throw InputError("build_feature_context: no dynamic feature channels");
    }

    FeatureContext context;

    const int static_channels = data.static_volume.channels();
    const feat::FilterBank bank_a =
        feat::build_filter_bank(feat::FilterFamily::A, config.static_filters, static_channels,
                                derive_seed(config.seed, "filter_bank", 0));
    const feat::FilterBank bank_b =
        feat::build_filter_bank(feat::FilterFamily::B, config.static_filters, static_channels,
                                derive_seed(config.seed, "filter_bank", 1));
    context.static_map = feat::convolve_static(data.static_volume, bank_a, bank_b);

    const int stacked = 2 * data.dynamic_series.channels();
    const feat::FilterBank bank_c =
        feat::build_filter_bank(feat::FilterFamily::C, config.dynamic_filters, stacked,
                                derive_seed(config.seed, "filter_bank", 2));
    const feat::FilterBank bank_d =
        feat::build_filter_bank(feat::FilterFamily::D, config.dynamic_filters, stacked,
                                derive_seed(config.seed, "filter_bank", 3));
    const feat::FilterBank bank_e =
        feat::build_filter_bank(feat::FilterFamily::E, config.dynamic_filters, stacked,
                                derive_seed(config.seed, "filter_bank", 4));
    context.dynamic_maps.reserve(static_cast<std::size_t>(data.dynamic_series.num_hours));
    for (int t = 0; t < data.dynamic_series.num_hours; ++t) {
        context.dynamic_maps.push_back(feat::convolve_dynamic(
            feat::dynamic_volume_at(data.dynamic_series, t), bank_c, bank_d, bank_e));
    }

    context.macro_config.stations = data.macro_stations;
    context.macro_config.base_shifts = config.macro_shifts;
    context.macro_config.gap_fill_hours = config.gap_fill_hours;
    context.macro_names = feat::macro_column_names(context.macro_config);

    std::vector<feat::ExternalSeries> filled;
    filled.reserve(data.external_series.size());
    for (const feat::ExternalSeries& series : data.external_series) {
        filled.push_back(feat::gap_fill(series, config.gap_fill_hours));
    }
    context.macro_rows.reserve(static_cast<std::size_t>(data.grid.num_hours));
    for (int t = 0; t < data.grid.num_hours; ++t) {
        context.macro_rows.push_back(
            feat::macro_feature_rows(filled, context.macro_config, t));
    }
    return context;
}

feat::FeatureInputs feature_inputs(const CityData& data, const FeatureContext& context) {
    feat::FeatureInputs inputs;
    inputs.static_volume = &data.static_volume;
    inputs.dynamic_series = &data.dynamic_series;
    inputs.static_map = &context.static_map;
    inputs.dynamic_maps = &context.dynamic_maps;
    inputs.macro_names = &context.macro_names;
    inputs.macro_rows = &context.macro_rows;
    return inputs;
}

TrainingMatrix build_training_matrix(const CityData& data, const FeatureContext& context,
                                     const LabelSet& labels) {
    if (labels.empty()) throw InputError("build_training_matrix: empty label set");

    std::vector<feat::SampleKey> keys;
    keys.reserve(labels.size());
    for (const Label& label : labels.labels) {
        keys.push_back({label.cell.x, label.cell.y, label.t});
    }

    TrainingMatrix out;
    const feat::Selection all{true, true, true};
    out.matrix = feat::assemble_matrix(keys, feature_inputs(data, context), all, &out.stats);

    // assemble_matrix drops hours without a macro row; walk the two sorted
    // sequences to keep only the surviving labels, in matrix order.
    out.labels.labels.reserve(out.matrix.rows());
    out.matrix.response.reserve(out.matrix.rows());
    std::size_t li = 0;
    for (const feat::SampleKey& key : out.matrix.keys) {
        while (li < labels.labels.size()) {
            const Label& label = labels.labels[li];
            const feat::SampleKey label_key{label.cell.x, label.cell.y, label.t};
            if (!feat::sample_key_less(label_key, key)) break;
            ++li;
        }
        if (li >= labels.labels.size()) {
            throw InputError("build_training_matrix: matrix row has no matching label");
        }
        const Label& label = labels.labels[li];
        if (label.cell.x != key.x || label.cell.y != key.y || label.t != key.t) {
            throw InputError("build_training_matrix: matrix row has no matching label");
        }
        out.labels.labels.push_back(label);
        out.matrix.response.push_back(label.pm25);
    }
    return out;
}

feat::FeatureMatrix build_city_matrix(const CityData& data, const FeatureContext& context) {
    std::vector<feat::SampleKey> keys;
    keys.reserve(static_cast<std::size_t>(data.grid.num_cells()) *
                 static_cast<std::size_t>(data.grid.num_hours));
    for (int t = 0; t < data.grid.num_hours; ++t) {
        if (t < static_cast<int>(context.macro_rows.size()) &&
            !context.macro_rows[static_cast<std::size_t>(t)].valid) {
            continue;  // the whole hour is a macro gap; inference masks it
        }
        for (int y = 0; y < data.grid.height; ++y) {
            for (int x = 0; x < data.grid.width; ++x) keys.push_back({x, y, t});
        }
    }
    if (keys.empty()) {
        throw InputError("build_city_matrix: every hour lost its macro row");
    }
    const feat::Selection all{true, true, true};
    return feat::assemble_matrix(keys, feature_inputs(data, context), all);
}

gbdt::GbdtParams gbdt_params_for(const RunConfig& config) {
    gbdt::GbdtParams params = config.gbdt;
    params.seed = derive_seed(config.seed, "gbdt", 0);
    return params;
}

TrainedModel train_full(const TrainingMatrix& training, const RunConfig& config) {
    TrainedModel out;
    out.model = gbdt::fit(training.matrix, training.matrix.response,
                          gbdt_params_for(config));
    std::map<std::string, std::string> category_of;
    for (const feat::ColumnInfo& column : training.matrix.columns) {
        category_of[column.name] = column.category;
    }
    out.importance = gbdt::feature_importance(out.model, category_of);
    return out;
}

std::vector<EvaluateRow> run_method_table(const TrainingMatrix& training,
                                          const RunConfig& config) {
    eval::CrossValParams params;
    params.k = config.cv_folds;
    params.seed = derive_seed(config.seed, "cv_split", 0);
    params.mode = config.cv_mode;
    params.gbdt = gbdt_params_for(config);
    params.knn_k = config.knn_k;
    params.idw_power = config.idw_power;

    struct Job {
        eval::Method method;
        const char* features;  // parsed selection, "-" = none
    };
    const Job jobs[] = {
        {eval::Method::idw, "-"},
        {eval::Method::kriging, "-"},
        {eval::Method::knn, "L"},
        {eval::Method::knn, "L+M"},
        {eval::Method::deep_maps, "L"},
        {eval::Method::deep_maps, "L+M"},
        {eval::Method::deep_maps, "N"},
        {eval::Method::deep_maps, "N+M"},
        {eval::Method::deep_maps, "L+M+N"},
    };

    std::vector<EvaluateRow> rows;
    rows.reserve(std::size(jobs));
    for (const Job& job : jobs) {
        feat::Selection selection;  // ignored by the interpolators
        if (job.features[0] != '-') selection = feat::parse_selection(job.features);
        const eval::CrossValResult result =
            eval::cross_validate(training.labels, training.matrix, config.grid, job.method,
                                 selection, params);
        EvaluateRow row;
        row.method = eval::method_name(job.method);
        row.features = job.features;
        row.pooled = result.pooled;
        row.fold_mean = result.fold_mean;
        rows.push_back(row);
    }
    return rows;
}

std::vector<eval::AblationCurve> run_ablation(const TrainingMatrix& training,
                                              const RunConfig& config,
                                              const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw ConfigError("run_ablation: no seeds given");
    std::vector<eval::AblationCurve> curves;
    curves.reserve(seeds.size());
    for (std::uint64_t seed : seeds) {
        curves.push_back(eval::coverage_ablation(training.labels, training.matrix,
                                                 config.ablation_fractions, seed, config.gbdt,
                                                 config.ablation_test_fraction));
    }
    return curves;
}

}  // namespace deepmaps::pipeline
