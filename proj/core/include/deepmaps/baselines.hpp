#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "deepmaps/featurize.hpp"
#include "deepmaps/grid.hpp"

namespace deepmaps::baselines {

/// One observation for spatial interpolation: position in km, measured value.
struct SpatialSample {
    KmPoint pos;
    double value = 0.0;
};

/// Inverse-distance weighting: sum(w_i v_i) / sum(w_i) with w_i = d_i^-power.
/// A query within 1e-9 km of a source returns that source's value exactly.
double idw_interpolate(const std::vector<SpatialSample>& sources, const KmPoint& query,
                       double power = 2.0);

/// Merge samples whose positions coincide (within snap_km) into one sample
/// with the mean value. First-seen order is preserved. Kriging requires
/// distinct sites, so callers average duplicates before building a system.
std::vector<SpatialSample> average_duplicates(const std::vector<SpatialSample>& sources,
                                              double snap_km = 1e-9);

/// Exponential semivariogram gamma(h) = c0 + c1 * (1 - exp(-3h/a)).
/// Evaluated literally at h = 0, so gamma(0) = c0.
struct VariogramModel {
    double nugget = 0.0;        // c0
    double partial_sill = 0.0;  // c1
    double range_km = 1.0;      // a

    double value(double h) const;
};

struct VariogramBin {
    double mean_distance = 0.0;
    double gamma = 0.0;  // Matheron estimate over the bin's pairs
    std::size_t pairs = 0;
};

/// Matheron empirical semivariogram on at most max_bins equal-width distance
/// bins; empty bins are dropped. Coincident pairs are excluded.
std::vector<VariogramBin> empirical_variogram(const std::vector<SpatialSample>& samples,
                                              int max_bins = 12);

/// Weighted least squares (bin-count weights) fit of the exponential model,
/// range searched by coarse scan plus golden-section refinement, nugget and
/// partial sill constrained non-negative. Requires >= 10 samples on >= 2
/// distinct sites. A constant field yields c1 = 0.
VariogramModel fit_variogram(const std::vector<SpatialSample>& samples, int max_bins = 12);

/// Ordinary-kriging system for one source set, factorized once so many
/// queries can reuse it. sources must have distinct sites (average_duplicates).
struct KrigingSystem {
    std::vector<SpatialSample> sources;
    VariogramModel model;
    bool constant_field = false;  // c1 = 0 or a single source
    double constant_value = 0.0;
    Eigen::FullPivLU<Eigen::MatrixXd> lu;  // (n+1)x(n+1) with unbiasedness row
};

KrigingSystem build_kriging_system(std::vector<SpatialSample> sources,
                                   const VariogramModel& model);

struct KrigingEstimate {
    double value = 0.0;
    double weight_sum = 0.0;  // sum of kriging weights; 1 up to solver roundoff
};

KrigingEstimate kriging_predict(const KrigingSystem& system, const KmPoint& query);

/// One-shot convenience: build the system for these sources and predict.
double kriging_predict(const std::vector<SpatialSample>& sources, const VariogramModel& model,
                       const KmPoint& query);

/// k-nearest-neighbour regression: z-score standardization from the training
/// statistics, Euclidean distance, unweighted mean of the k nearest
/// responses. Ties at the k-th distance resolve by training row order.
/// k larger than the training size is clamped (with a warning on stderr).
std::vector<double> knn_predict(const feat::FeatureMatrix& train,
                                const std::vector<double>& responses,
                                const feat::FeatureMatrix& query, int k = 10);

}  // namespace deepmaps::baselines
