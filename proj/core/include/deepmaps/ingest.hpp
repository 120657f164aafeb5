#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deepmaps/featurize.hpp"
#include "deepmaps/grid.hpp"

namespace deepmaps::ingest {

struct StationMeta {
    std::string station_id;
    double lat = 0.0;
    double lon = 0.0;
    bool inside_study_area = true;
};

/// Station roster from a fixed-station CSV: first occurrence of each id
/// fixes its position; inside_study_area reflects the grid extent.
std::vector<StationMeta> build_station_meta(const std::string& path, const GridSpec& spec);

/// Row accounting every loader reports: parsed + skipped = total data rows.
struct LoadCounts {
    std::size_t total = 0;
    std::size_t parsed = 0;
    std::size_t skipped = 0;     // malformed, out-of-bounds, or out-of-window
    std::size_t malformed = 0;   // subset of skipped
};

/// Fixed-station readings. Rows of stations flagged outside the study area
/// are kept regardless of position or hour (they feed the macro series);
/// rows of inside stations must land on the grid within the time window.
/// More than 10% malformed data rows raises SchemaError.
std::vector<Observation> load_fixed_observations(const std::string& path, const GridSpec& spec,
                                                 const std::vector<StationMeta>& meta,
                                                 LoadCounts* counts = nullptr);

/// Mobile GPS points snapped to the grid; out-of-bounds or out-of-window
/// points are dropped and counted. Empty temp/rh fields load as missing.
std::vector<Observation> load_mobile_points(const std::string& path, const GridSpec& spec,
                                            LoadCounts* counts = nullptr);

struct MobileAggregate {
    CellIndex cell;
    int t = 0;
    double pm25_median = 0.0;
    std::optional<double> temp_mean;
    std::optional<double> rh_mean;
    int sample_count = 0;  // surviving points
};

/// Per (cell, hour): Hampel outlier removal (groups of >= 5 drop points with
/// |x - median| > 3 * 1.4826 * MAD), then median pm25 and mean temp/rh over
/// the survivors. Output sorted by (t, y, x).
std::vector<MobileAggregate> aggregate_mobile(const std::vector<Observation>& points,
                                              const GridSpec& spec);

struct MeteoReading {
    std::string station_id;
    double lat = 0.0;
    double lon = 0.0;
    std::int64_t timestamp = 0;
    double temp = 0.0;
    double pressure = 0.0;
    double vapor_pressure = 0.0;
    double rh = 0.0;
    double wind_speed = 0.0;
    double wind_dir = 0.0;  // degrees, 0 = north, clockwise
};

std::vector<MeteoReading> load_meteo_readings(const std::string& path,
                                              LoadCounts* counts = nullptr);

enum class MeteoVar { temp, pressure, vapor_pressure, rh, wind_speed, wind_dir };
inline constexpr int kNumMeteoVars = 6;

/// Gridded meteorology: per hour and variable, IDW (power 2) of the
/// reporting stations evaluated at cell centers; wind direction goes through
/// unit-vector components. Hours with no reporting station are masked.
struct MeteoField {
    int width = 0;
    int height = 0;
    int num_hours = 0;
    std::array<std::vector<double>, kNumMeteoVars> values;  // [var][t*cells + y*width + x]
    std::vector<std::uint8_t> hour_valid;

    double at(MeteoVar var, int t, int x, int y) const {
        const std::size_t cells = static_cast<std::size_t>(width) * height;
        return values[static_cast<std::size_t>(var)]
                     [static_cast<std::size_t>(t) * cells +
                      static_cast<std::size_t>(y) * width + x];
    }
};

MeteoField grid_meteorology(const std::vector<MeteoReading>& readings, const GridSpec& spec);

/// Mean wind speed (m/s) over all readings; feeds the macro shift rule.
double mean_wind_speed(const std::vector<MeteoReading>& readings);

/// Static-feature CSV (x,y,feature_name,value) as channel planes. Channel
/// order is first appearance; unlisted cells are 0. Categories derive from
/// the name prefix: geo_* -> geography, transport_* -> transport,
/// vitality_* -> vitality, met_* -> meteorology, anything else -> other.
feat::StaticVolume load_static_features(const std::string& path, const GridSpec& spec,
                                        LoadCounts* counts = nullptr);

/// Dynamic-feature CSV (x,y,t,feature_name,value), same conventions.
feat::DynamicSeries load_dynamic_features(const std::string& path, const GridSpec& spec,
                                          LoadCounts* counts = nullptr);

std::string category_from_name(const std::string& feature_name);

/// Hourly series for each outside station from its fixed-CSV observations.
/// Multiple readings in one hour average; hours without readings stay
/// missing (macro assembly gap-fills them).
std::vector<feat::ExternalSeries> build_external_series(
    const std::vector<Observation>& fixed_obs, const std::vector<StationMeta>& meta,
    const GridSpec& spec);

/// Macro-station geometry (distance/bearing from the grid centroid) plus the
/// wind-derived shift for every outside station.
std::vector<feat::MacroStation> build_macro_stations(const std::vector<StationMeta>& meta,
                                                     const GridSpec& spec,
                                                     double mean_wind_speed_ms);

}  // namespace deepmaps::ingest
