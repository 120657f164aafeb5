#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace deepmaps {

// Error categories surfaced verbatim by the CLI.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Geometry and time axis of the study raster. All timestamps are UTC;
/// start_time is in epoch hours, Observation timestamps in epoch seconds.
struct GridSpec {
    double origin_lat = 39.75;   // degrees, south-west corner
    double origin_lon = 116.05;  // degrees
    double cell_size_km = 1.0;
    int width = 55;
    int height = 55;
    std::int64_t start_time = 425000;  // epoch hours UTC
    int num_hours = 672;

    void validate() const;
    int num_cells() const { return width * height; }
};

struct CellIndex {
    int x = 0;
    int y = 0;
    bool operator==(const CellIndex&) const = default;
};

enum class ObsSource { fixed, mobile };

struct Observation {
    ObsSource source = ObsSource::fixed;
    std::string sensor_id;
    double lat = 0.0;
    double lon = 0.0;
    std::int64_t timestamp = 0;  // epoch seconds
    double pm25 = 0.0;           // ug/m3
    std::optional<double> temp;  // degC
    std::optional<double> rh;    // percent
};

enum class LabelSource { fixed, mobile_calibrated };

struct Label {
    CellIndex cell;
    int t = 0;  // hour index into the GridSpec time axis
    double pm25 = 0.0;
    LabelSource source = LabelSource::fixed;
};

/// Unique-(cell,t) label collection, kept sorted by (t, y, x).
struct LabelSet {
    std::vector<Label> labels;

    std::size_t size() const { return labels.size(); }
    bool empty() const { return labels.empty(); }
};

/// One hourly raster; mask flags cells whose value is defined.
struct GridFrame {
    int t = 0;
    int width = 0;
    int height = 0;
    std::vector<double> values;      // row-major, index = y * width + x
    std::vector<std::uint8_t> mask;  // 1 = valid

    double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

inline constexpr double kKmPerDegLat = 111.32;

/// Cosine of the grid's mid latitude, fixed per spec so the projection is
/// affine (and therefore exactly invertible on cell centers).
double mean_lat_cos(const GridSpec& spec);

/// Local equirectangular projection: km east/north of the grid origin.
struct KmPoint {
    double east = 0.0;
    double north = 0.0;
};
KmPoint project_km(double lat, double lon, const GridSpec& spec);

/// Euclidean distance in km between two lat/lon points under the grid's
/// local projection.
double distance_km(double lat1, double lon1, double lat2, double lon2, const GridSpec& spec);

/// Snap a point to its cell, or nullopt when outside the raster.
/// Throws InputError on non-finite coordinates.
std::optional<CellIndex> grid_index(double lat, double lon, const GridSpec& spec);

/// Lat/lon of a cell's center.
void cell_center(CellIndex cell, const GridSpec& spec, double& lat, double& lon);

/// Cell-center position in km east/north of the origin.
KmPoint cell_center_km(CellIndex cell, const GridSpec& spec);

/// Hour index of an epoch-seconds timestamp, or nullopt outside
/// [0, num_hours).
std::optional<int> hour_index(std::int64_t timestamp, const GridSpec& spec);

/// Hour index without the range check (macro series reach before hour 0).
std::int64_t hour_offset(std::int64_t timestamp, const GridSpec& spec);

/// UTC hour-of-day (0-23) of hour index t.
int hour_of_day(int t, const GridSpec& spec);

}  // namespace deepmaps
