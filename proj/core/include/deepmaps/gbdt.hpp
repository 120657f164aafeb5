#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "deepmaps/featurize.hpp"

namespace deepmaps::gbdt {

struct GbdtParams {
    int num_trees = 400;
    int max_depth = 6;
    double learning_rate = 0.05;
    int min_samples_leaf = 20;
    double row_subsample = 0.8;
    double feature_subsample = 0.8;
    int histogram_bins = 64;
    std::uint64_t seed = 0;

    void validate() const;
};

/// feature < 0 marks a leaf. Split rule: x <= threshold goes left.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf prediction, residual space
    double gain = 0.0;   // SSE reduction of this split on its own samples
    int n_samples = 0;
};

struct Tree {
    std::vector<TreeNode> nodes;  // preorder, nodes[0] = root

    double predict_row(const std::vector<const std::vector<double>*>& cols, std::size_t row) const;
};

struct GbdtModel {
    double base_score = 0.0;
    double learning_rate = 0.05;
    GbdtParams params;
    std::vector<std::string> column_names;  // feature ids in trees index this
    std::vector<std::string> column_categories;
    std::vector<Tree> trees;
    std::vector<double> stage_mse;                // training MSE after each stage
    std::map<std::string, double> importance;     // normalized gain share per column
};

/// Stagewise least-squares boosting with histogram split finding.
/// Deterministic given the seed; row/feature subsampling is bound to column
/// names so column order cannot change the fit.
GbdtModel fit(const feat::FeatureMatrix& matrix, const std::vector<double>& response,
              const GbdtParams& params);

/// base_score + lr * sum of tree outputs; raw values, no clamping.
/// Throws SchemaError naming the first column the rows are missing.
std::vector<double> predict(const GbdtModel& model, const feat::FeatureMatrix& rows);

struct ImportanceReport {
    std::vector<std::pair<std::string, double>> per_column;         // descending weight
    std::vector<std::pair<std::string, double>> per_category;       // descending
    std::vector<std::pair<std::string, double>> per_macro_station;  // descending
};

/// Normalized loss-reduction weights, rolled up by the supplied
/// column->category map; macro_{station}_{shift} columns are additionally
/// aggregated per station.
ImportanceReport feature_importance(const GbdtModel& model,
                                    const std::map<std::string, std::string>& category_of);

/// Versioned, self-describing text format; numbers round-trip exactly.
void save_model(const GbdtModel& model, const std::string& path, const std::string& config_hash);
GbdtModel load_model(const std::string& path);

}  // namespace deepmaps::gbdt
