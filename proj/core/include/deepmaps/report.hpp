#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "deepmaps/eval.hpp"
#include "deepmaps/gbdt.hpp"
#include "deepmaps/grid.hpp"
#include "deepmaps/pipeline.hpp"

namespace deepmaps::report {

// ---- results table: method,features,rmse,smape,r2 (pooled CV metrics) ----
void write_results_csv(const std::vector<pipeline::EvaluateRow>& rows, const std::string& path,
                       const std::string& config_hash);
std::vector<pipeline::EvaluateRow> load_results_csv(const std::string& path);

// ---- ablation curves: fraction,rmse,smape,r2,seed ----
void write_ablation_csv(const std::vector<eval::AblationCurve>& curves, const std::string& path,
                        const std::string& config_hash);
std::vector<eval::AblationCurve> load_ablation_csv(const std::string& path);

// ---- importances: kind,name,weight with kind in {column, category, macro_station} ----
void write_importance_csv(const gbdt::ImportanceReport& importance, const std::string& path,
                          const std::string& config_hash);
gbdt::ImportanceReport load_importance_csv(const std::string& path);

// ---- hourly rasters ----
/// x,y,t,value rows for the frame's unmasked cells (a fully masked hour
/// writes just the header).
void write_raster_csv(const GridFrame& frame, const std::string& path,
                      const std::string& config_hash);
GridFrame load_raster_csv(const std::string& path, const GridSpec& spec);

/// Text portable graymap, north up (top row = highest y). Values map
/// linearly from [lo, hi] to [0, 255]; masked cells render 0. The caller
/// records lo/hi in a sidecar so pixel values stay interpretable.
void write_raster_pgm(const GridFrame& frame, const std::string& path, double lo, double hi);

/// 16-sector compass histogram of wind directions (degrees, 0 = north,
/// clockwise); sector k is centered on k*22.5 degrees.
std::vector<std::size_t> wind_histogram(const std::vector<double>& directions_deg);

/// Compass label of a sector index: N, NNE, NE, ..., NNW.
std::string sector_label(std::size_t sector);

/// Render report.md from the artifacts in config.out_dir: the method table,
/// top-20 importances, category and macro-station rollups, the
/// wind-direction histogram from the meteorology file, the ablation table
/// when present, and a PGM image (plus scale sidecar) for every raster CSV
/// under out_dir/rasters. Missing required artifacts raise IoError naming
/// the file. Returns the markdown text it wrote.
std::string emit_report(const RunConfig& config);

}  // namespace deepmaps::report
