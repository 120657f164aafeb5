#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deepmaps/grid.hpp"
#include "deepmaps/ingest.hpp"

namespace deepmaps::calibrate {

/// A mobile aggregate joined with the fixed-station label of its (cell, t).
struct ColocatedPair {
    CellIndex cell;
    int t = 0;
    double fixed_pm25 = 0.0;   // regression response
    double mobile_pm25 = 0.0;  // aggregate median
    std::optional<double> temp;
    std::optional<double> rh;
};

/// Inner join of fixed labels and mobile aggregates on (cell, t).
std::vector<ColocatedPair> pair_colocated(const std::vector<Label>& fixed,
                                          const std::vector<ingest::MobileAggregate>& mobile);

/// Covariate order of the calibration regression; index 0 is the intercept.
inline constexpr const char* kCoefficientNames[7] = {
    "intercept", "mobile_pm25", "hour_of_day", "cell_x", "cell_y", "temp", "rh"};

struct CalibrationModel {
    std::map<std::string, double> coefficients;
    double r_squared = 0.0;
    double f_statistic = 0.0;
    double p_value = 1.0;
    std::size_t n_used = 0;                // complete pairs in the fit
    std::size_t n_skipped_incomplete = 0;  // pairs dropped for missing temp/rh

    double predict(double mobile_pm25, int hour_of_day, CellIndex cell, double temp,
                   double rh) const;
};

/// Ordinary least squares of the fixed reading on {1, mobile_pm25,
/// hour_of_day, cell_x, cell_y, temp, rh}, solved by pivoted Cholesky on the
/// normal equations (columns standardized internally for conditioning).
/// Reports R-squared plus the overall F-test. Needs >= 21 complete pairs;
/// rank-deficient designs raise InputError naming the collinear columns.
CalibrationModel fit_calibration(const std::vector<ColocatedPair>& pairs, const GridSpec& spec);

struct ApplyResult {
    std::vector<Label> labels;  // source = mobile_calibrated, clamped at 0
    std::size_t skipped_missing_covariates = 0;
};

ApplyResult apply_calibration(const CalibrationModel& model,
                              const std::vector<ingest::MobileAggregate>& aggregates,
                              const GridSpec& spec);

/// Fixed observations to per-(cell, t) labels; co-located stations average.
/// Off-grid or out-of-window observations (outside stations) are ignored.
std::vector<Label> labels_from_fixed(const std::vector<Observation>& obs, const GridSpec& spec);

/// Union of the two label lists; a fixed label wins any (cell, t) collision.
/// Each input must already be free of internal duplicates.
LabelSet build_label_set(const std::vector<Label>& fixed,
                         const std::vector<Label>& mobile_cal);

/// Key-value text report: coefficients, R-squared, F statistic, p-value.
void write_calibration_report(const CalibrationModel& model, const std::string& path,
                              const std::string& config_hash);

/// Label CSV (x,y,t,pm25,source) with the config hash in a leading comment.
void save_labels(const LabelSet& labels, const std::string& path,
                 const std::string& config_hash);
LabelSet load_labels(const std::string& path);

}  // namespace deepmaps::calibrate
