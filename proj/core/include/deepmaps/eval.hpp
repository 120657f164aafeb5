#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "deepmaps/baselines.hpp"
#include "deepmaps/featurize.hpp"
#include "deepmaps/gbdt.hpp"
#include "deepmaps/grid.hpp"

namespace deepmaps::eval {

struct Metrics {
    double rmse = 0.0;
    double smape = 0.0;      // percent
    double r_squared = 0.0;  // 0 when the truth variance is 0
};

/// RMSE, SMAPE = (100/n) * sum |p-t| / ((|t|+|p|)/2) with a 0/0 term
/// defined as 0, and R^2 = 1 - SSE/SST.
Metrics compute_metrics(const std::vector<double>& predictions,
                        const std::vector<double>& truths);

enum class SplitMode { random, grid_grouped };

SplitMode parse_split_mode(const std::string& text);

struct FoldAssignment {
    int k = 0;
    std::uint64_t seed = 0;
    SplitMode mode = SplitMode::random;
    std::vector<int> fold_of;  // parallel to the label set
};

/// random: seeded shuffle + round-robin (fold sizes differ by <= 1).
/// grid_grouped: whole cells are assigned to folds, so no cell leaks across
/// folds (balance then holds at cell granularity).
FoldAssignment kfold_split(const LabelSet& labels, int k, std::uint64_t seed, SplitMode mode);

enum class Method { deep_maps, idw, kriging, knn };

Method parse_method(const std::string& text);
std::string method_name(Method method);

struct CrossValParams {
    int k = 5;
    std::uint64_t seed = 0;
    SplitMode mode = SplitMode::random;
    gbdt::GbdtParams gbdt;
    int knn_k = 10;
    double idw_power = 2.0;
};

struct FoldResult {
    int fold = 0;
    std::size_t train_rows = 0;
    std::size_t test_rows = 0;
    Metrics metrics;
};

struct CrossValResult {
    Method method = Method::deep_maps;
    feat::Selection selection;
    Metrics pooled;      // metrics over all held-out predictions at once
    Metrics fold_mean;   // unweighted mean of the per-fold metrics
    std::vector<FoldResult> folds;
};

/// k-fold cross-validation of one method. `matrix` must hold one row per
/// label, in label order, with all feature groups; the selection picks the
/// columns for deep_maps/knn, while idw/kriging interpolate per hour from
/// the training labels (coordinates only). Predictions are clamped at 0.
CrossValResult cross_validate(const LabelSet& labels, const feat::FeatureMatrix& matrix,
                              const GridSpec& spec, Method method,
                              feat::Selection selection, const CrossValParams& params);

struct AblationPoint {
    double fraction = 0.0;  // percent of mobile labels added to the pool
    Metrics metrics;
    std::size_t train_rows = 0;
};

struct AblationCurve {
    std::uint64_t seed = 0;
    std::vector<AblationPoint> points;
};

/// Hold out `test_fraction` of all labels (seeded), then for each fraction x
/// train on every fixed label plus the first x% of a seeded shuffle of
/// mobile labels and score on the held-out set. Fractions must be strictly
/// increasing, within [0, 100].
AblationCurve coverage_ablation(const LabelSet& labels, const feat::FeatureMatrix& matrix,
                                const std::vector<double>& fractions, std::uint64_t seed,
                                const gbdt::GbdtParams& gbdt_params,
                                double test_fraction = 0.15);

struct InferenceResult {
    std::vector<GridFrame> frames;     // one per hour; mask 0 where not inferred
    std::size_t masked_hours = 0;      // hours with no feature rows (macro gaps)
    std::size_t predicted_values = 0;
};

/// Predict every cell-hour in `matrix` (clamped at 0). Hours entirely absent
/// from the matrix are masked frames; partially covered hours are an error
/// listing the missing keys.
InferenceResult infer_city(const gbdt::GbdtModel& model, const feat::FeatureMatrix& matrix,
                           const GridSpec& spec);

}  // namespace deepmaps::eval
