#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "deepmaps/eval.hpp"
#include "deepmaps/gbdt.hpp"
#include "deepmaps/grid.hpp"
#include "deepmaps/synthcity.hpp"

namespace deepmaps {

/// Every tunable of the pipeline in one flat key=value namespace. A single
/// grid section and master seed serve both the synthetic city and the
/// pipeline, so generated sensor files always match the raster the other
/// subcommands expect.
struct RunConfig {
    std::uint64_t seed = 0;

    std::string data_dir = "data";  // where synth writes and ingest reads
    std::string out_dir = "out";    // artifact directory

    GridSpec grid{39.75, 116.05, 1.0, 32, 32, 425000, 168};

    // feature extraction
    int static_filters = 8;             // random mean filters per static plan
    int dynamic_filters = 8;            // random mean filters per dynamic plan
    std::vector<int> macro_shifts{1, 2, 3, 6};
    int gap_fill_hours = 3;

    gbdt::GbdtParams gbdt;

    // evaluation
    int cv_folds = 5;
    eval::SplitMode cv_mode = eval::SplitMode::random;
    int knn_k = 10;
    double idw_power = 2.0;
    std::vector<double> ablation_fractions{0, 20, 40, 60, 80, 100};
    double ablation_test_fraction = 0.15;

    // synthetic city; its grid and seed mirror the top-level ones
    synth::CityConfig city;

    /// Copy the shared grid/seed into the city section and validate every
    /// field. Call after any direct mutation; the loaders call it for you.
    void finalize();
};

/// All known keys, in resolved order.
std::vector<std::string> run_config_keys();

/// Apply one key=value override. Unknown key or unparsable value -> ConfigError.
void set_run_config_value(RunConfig& config, const std::string& key, const std::string& value);

/// Current value of one key, formatted exactly as resolved_text prints it.
std::string get_run_config_value(const RunConfig& config, const std::string& key);

/// Defaults overlaid with the file's key=value lines ('#' and blank lines
/// ignored); finalized. Unknown keys are rejected, naming the offender.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(std::istream& in, const std::string& source_name);

/// Canonical "key=value" lines, sorted by key — the hashed representation.
std::string resolved_text(const RunConfig& config);

/// FNV-1a of resolved_text as 16 hex digits; every artifact carries it.
std::string config_hash(const RunConfig& config);

/// Write resolved_text (plus the hash as a comment) for the run log.
void write_resolved_config(const RunConfig& config, const std::string& path);

}  // namespace deepmaps
