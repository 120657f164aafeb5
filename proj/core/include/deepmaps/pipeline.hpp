#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deepmaps/calibrate.hpp"
#include "deepmaps/eval.hpp"
#include "deepmaps/featurize.hpp"
#include "deepmaps/gbdt.hpp"
#include "deepmaps/grid.hpp"
#include "deepmaps/ingest.hpp"
#include "deepmaps/runconfig.hpp"

namespace deepmaps::pipeline {

// Canonical sensor/feature file names inside the data directory; `synth`
// writes exactly these and every other stage reads them.
inline constexpr const char* kFixedCsv = "fixed.csv";
inline constexpr const char* kMobileCsv = "mobile.csv";
inline constexpr const char* kMeteoCsv = "meteo.csv";
inline constexpr const char* kStaticCsv = "static_features.csv";
inline constexpr const char* kDynamicCsv = "dynamic_features.csv";
inline constexpr const char* kTruthCsv = "truth.csv";

struct IngestSummary {
    ingest::LoadCounts fixed;
    ingest::LoadCounts mobile;
    ingest::LoadCounts meteo;
    ingest::LoadCounts static_features;
    ingest::LoadCounts dynamic_features;
    std::size_t stations_total = 0;
    std::size_t stations_outside = 0;
};

/// Everything the data directory holds, parsed and gridded. Meteorology is
/// appended to the dynamic series as met_* channels (wind direction encoded
/// as sine/cosine components) so it reaches both the local columns and the
/// dynamic convolutions.
struct CityData {
    GridSpec grid;
    std::vector<ingest::StationMeta> station_meta;
    std::vector<Observation> fixed_obs;
    std::vector<Observation> mobile_points;
    feat::StaticVolume static_volume;
    feat::DynamicSeries dynamic_series;
    double mean_wind_ms = 0.0;
    std::vector<feat::MacroStation> macro_stations;
    std::vector<feat::ExternalSeries> external_series;  // raw, not gap-filled
};

CityData load_city_data(const RunConfig& config, IngestSummary* summary = nullptr);

struct LabelBuild {
    std::vector<Label> fixed_labels;
    std::vector<ingest::MobileAggregate> aggregates;
    std::size_t colocated_pairs = 0;
    calibrate::CalibrationModel model;
    calibrate::ApplyResult applied;
    LabelSet labels;
};

LabelBuild build_labels(const CityData& data, const RunConfig& config);

/// Derived feature state shared by training and inference: the convolved
/// static/dynamic maps plus the gap-filled macro rows.
struct FeatureContext {
    feat::FeatureMap static_map;
    std::vector<feat::FeatureMap> dynamic_maps;  // one per hour
    feat::MacroConfig macro_config;
    std::vector<std::string> macro_names;
    std::vector<feat::MacroRow> macro_rows;  // one per hour
};

FeatureContext build_feature_context(const CityData& data, const RunConfig& config);

feat::FeatureInputs feature_inputs(const CityData& data, const FeatureContext& context);

/// Full-column (L+N+M) matrix at the label keys, with the response filled
/// in. Labels whose hour lost its macro row are dropped from both the
/// matrix and the returned label set, so the two stay row-aligned.
struct TrainingMatrix {
    feat::FeatureMatrix matrix;
    LabelSet labels;
    feat::AssembleStats stats;
};

TrainingMatrix build_training_matrix(const CityData& data, const FeatureContext& context,
                                     const LabelSet& labels);

/// Full-column matrix over every cell of every hour that has a macro row
/// (unlabeled); hours without one are simply absent, which inference masks.
feat::FeatureMatrix build_city_matrix(const CityData& data, const FeatureContext& context);

/// GBDT parameters with the stage seed derived from the master seed.
gbdt::GbdtParams gbdt_params_for(const RunConfig& config);

struct TrainedModel {
    gbdt::GbdtModel model;
    gbdt::ImportanceReport importance;
};

/// Fit on every training row (all columns) and roll up importances.
TrainedModel train_full(const TrainingMatrix& training, const RunConfig& config);

/// One row of the method-comparison table.
struct EvaluateRow {
    std::string method;
    std::string features;  // "-" for the coordinate-only interpolators
    eval::Metrics pooled;
    eval::Metrics fold_mean;
};

/// The full comparison: IDW, kriging, KNN on L and L+M, and the boosted
/// model on L, L+M, N, N+M, L+M+N — all under the same fold split.
std::vector<EvaluateRow> run_method_table(const TrainingMatrix& training,
                                          const RunConfig& config);

/// Coverage ablation (one curve per seed) on the full-column matrix.
std::vector<eval::AblationCurve> run_ablation(const TrainingMatrix& training,
                                              const RunConfig& config,
                                              const std::vector<std::uint64_t>& seeds);

}  // namespace deepmaps::pipeline
