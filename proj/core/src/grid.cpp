#include "deepmaps/grid.hpp"

#include <cmath>

namespace deepmaps {

void GridSpec::validate() const {
    if (width < 1 || height < 1) throw ConfigError("GridSpec: width and height must be >= 1");
    if (!(cell_size_km > 0.0)) throw ConfigError("GridSpec: cell_size_km must be > 0");
    if (num_hours < 1) throw ConfigError("GridSpec: num_hours must be >= 1");
    if (!std::isfinite(origin_lat) || !std::isfinite(origin_lon))
        throw ConfigError("GridSpec: non-finite origin");
}

double mean_lat_cos(const GridSpec& spec) {
    const double north_extent_deg = spec.height * spec.cell_size_km / kKmPerDegLat;
    const double mid_lat = spec.origin_lat + 0.5 * north_extent_deg;
    return std::cos(mid_lat * M_PI / 180.0);
}

KmPoint project_km(double lat, double lon, const GridSpec& spec) {
    KmPoint p;
    p.east = (lon - spec.origin_lon) * kKmPerDegLat * mean_lat_cos(spec);
    p.north = (lat - spec.origin_lat) * kKmPerDegLat;
    return p;
}

double distance_km(double lat1, double lon1, double lat2, double lon2, const GridSpec& spec) {
    const KmPoint a = project_km(lat1, lon1, spec);
    const KmPoint b = project_km(lat2, lon2, spec);
    return std::hypot(a.east - b.east, a.north - b.north);
}

std::optional<CellIndex> grid_index(double lat, double lon, const GridSpec& spec) {
    if (!std::isfinite(lat) || !std::isfinite(lon))
        throw InputError("grid_index: non-finite coordinates");
    const KmPoint p = project_km(lat, lon, spec);
    const int x = static_cast<int>(std::floor(p.east / spec.cell_size_km));
    const int y = static_cast<int>(std::floor(p.north / spec.cell_size_km));
    if (x < 0 || x >= spec.width || y < 0 || y >= spec.height) return std::nullopt;
    return CellIndex{x, y};
}

void cell_center(CellIndex cell, const GridSpec& spec, double& lat, double& lon) {
    const double east_km = (cell.x + 0.5) * spec.cell_size_km;
    const double north_km = (cell.y + 0.5) * spec.cell_size_km;
    lat = spec.origin_lat + north_km / kKmPerDegLat;
    lon = spec.origin_lon + east_km / (kKmPerDegLat * mean_lat_cos(spec));
}

KmPoint cell_center_km(CellIndex cell, const GridSpec& spec) {
    return {(cell.x + 0.5) * spec.cell_size_km, (cell.y + 0.5) * spec.cell_size_km};
}

std::optional<int> hour_index(std::int64_t timestamp, const GridSpec& spec) {
    const std::int64_t t = hour_offset(timestamp, spec);
    if (t < 0 || t >= spec.num_hours) return std::nullopt;
    return static_cast<int>(t);
}

std::int64_t hour_offset(std::int64_t timestamp, const GridSpec& spec) {
    std::int64_t delta = timestamp - spec.start_time * 3600;
    // floor division for negative offsets
    if (delta >= 0) return delta / 3600;
    return -(( -delta + 3599) / 3600);
}

int hour_of_day(int t, const GridSpec& spec) {
    std::int64_t h = (spec.start_time + t) % 24;
    if (h < 0) h += 24;
    return static_cast<int>(h);
}

}  // namespace deepmaps
