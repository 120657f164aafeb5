#include "deepmaps/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <tuple>

#include "deepmaps/csv.hpp"

namespace deepmaps::ingest {

namespace {

void check_malformed_ratio(const std::string& path, const LoadCounts& counts) {
    if (counts.total > 0 && counts.malformed * 10 > counts.total)
        throw SchemaError(path + ": more than 10% malformed data rows (" +
                          std::to_string(counts.malformed) + " of " +
                          std::to_string(counts.total) + ")");
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<StationMeta> build_station_meta(const std::string& path, const GridSpec& spec) {
    csv::Reader reader(path);
    reader.require_header({"station_id", "lat", "lon", "timestamp", "pm25"});
    const int c_id = reader.column("station_id");
    const int c_lat = reader.column("lat");
    const int c_lon = reader.column("lon");
    std::vector<StationMeta> meta;
    std::set<std::string> seen;
    std::vector<std::string> row;
    while (reader.next(row)) {
        const std::string& id = row[static_cast<std::size_t>(c_id)];
        if (id.empty() || seen.count(id)) continue;
        double lat, lon;
        if (!csv::parse_double(row[static_cast<std::size_t>(c_lat)], lat) ||
            !csv::parse_double(row[static_cast<std::size_t>(c_lon)], lon))
            continue;
        seen.insert(id);
        StationMeta m;
        m.station_id = id;
        m.lat = lat;
        m.lon = lon;
        m.inside_study_area = grid_index(lat, lon, spec).has_value();
        meta.push_back(std::move(m));
    }
    return meta;
}

std::vector<Observation> load_fixed_observations(const std::string& path, const GridSpec& spec,
                                                 const std::vector<StationMeta>& meta,
                                                 LoadCounts* counts) {
    std::map<std::string, bool> inside;
    for (const auto& m : meta) inside[m.station_id] = m.inside_study_area;

    csv::Reader reader(path);
    reader.require_header({"station_id", "lat", "lon", "timestamp", "pm25"});
    const int c_id = reader.column("station_id");
    const int c_lat = reader.column("lat");
    const int c_lon = reader.column("lon");
    const int c_ts = reader.column("timestamp");
    const int c_pm = reader.column("pm25");

    std::vector<Observation> out;
    LoadCounts local;
    std::vector<std::string> row;
    while (reader.next(row)) {
        ++local.total;
        Observation obs;
        obs.source = ObsSource::fixed;
        obs.sensor_id = row[static_cast<std::size_t>(c_id)];
        std::int64_t ts;
        if (obs.sensor_id.empty() ||
            !csv::parse_double(row[static_cast<std::size_t>(c_lat)], obs.lat) ||
            !csv::parse_double(row[static_cast<std::size_t>(c_lon)], obs.lon) ||
            !csv::parse_timestamp(row[static_cast<std::size_t>(c_ts)], ts) ||
            !csv::parse_double(row[static_cast<std::size_t>(c_pm)], obs.pm25) ||
            !std::isfinite(obs.pm25) || obs.pm25 < 0.0) {
            ++local.malformed;
            ++local.skipped;
            continue;
        }
        obs.timestamp = ts;
        const auto it = inside.find(obs.sensor_id);
        const bool station_inside = (it == inside.end()) ? true : it->second;
        if (station_inside &&
            (!grid_index(obs.lat, obs.lon, spec) || !hour_index(ts, spec))) {
            ++local.skipped;
            continue;
        }
        ++local.parsed;
        out.push_back(std::move(obs));
    }
    check_malformed_ratio(path, local);
    if (counts) *counts = local;
    return out;
}

std::vector<Observation> load_mobile_points(const std::string& path, const GridSpec& spec,
                                            LoadCounts* counts) {
    csv::Reader reader(path);
    reader.require_header({"vehicle_id", "lat", "lon", "timestamp", "pm25", "temp", "rh"});
    const int c_id = reader.column("vehicle_id");
    const int c_lat = reader.column("lat");
    const int c_lon = reader.column("lon");
    const int c_ts = reader.column("timestamp");
    const int c_pm = reader.column("pm25");
    const int c_temp = reader.column("temp");
    const int c_rh = reader.column("rh");

    std::vector<Observation> out;
    LoadCounts local;
    std::vector<std::string> row;
    while (reader.next(row)) {
        ++local.total;
        Observation obs;
        obs.source = ObsSource::mobile;
        obs.sensor_id = row[static_cast<std::size_t>(c_id)];
        std::int64_t ts;
        bool ok = !obs.sensor_id.empty() &&
                  csv::parse_double(row[static_cast<std::size_t>(c_lat)], obs.lat) &&
                  csv::parse_double(row[static_cast<std::size_t>(c_lon)], obs.lon) &&
                  csv::parse_timestamp(row[static_cast<std::size_t>(c_ts)], ts) &&
                  csv::parse_double(row[static_cast<std::size_t>(c_pm)], obs.pm25) &&
                  std::isfinite(obs.pm25) && obs.pm25 >= 0.0;
        // temp/rh may be empty (missing sensor), but non-empty must parse
        double aux;
        if (ok) {
            const std::string& ts_temp = row[static_cast<std::size_t>(c_temp)];
            if (!ts_temp.empty()) {
                if (csv::parse_double(ts_temp, aux)) obs.temp = aux;
                else ok = false;
            }
        }
        if (ok) {
            const std::string& ts_rh = row[static_cast<std::size_t>(c_rh)];
            if (!ts_rh.empty()) {
                if (csv::parse_double(ts_rh, aux)) obs.rh = aux;
                else ok = false;
            }
        }
        if (!ok) {
            ++local.malformed;
            ++local.skipped;
            continue;
        }
        obs.timestamp = ts;
        if (!grid_index(obs.lat, obs.lon, spec) || !hour_index(ts, spec)) {
            ++local.skipped;
            continue;
        }
        ++local.parsed;
        out.push_back(std::move(obs));
    }
    check_malformed_ratio(path, local);
    if (counts) *counts = local;
    return out;
}

std::vector<MobileAggregate> aggregate_mobile(const std::vector<Observation>& points,
                                              const GridSpec& spec) {
    std::map<std::tuple<int, int, int>, std::vector<std::size_t>> groups;  // (t, y, x)
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto cell = grid_index(points[i].lat, points[i].lon, spec);
        const auto t = hour_index(points[i].timestamp, spec);
        if (!cell || !t)
            throw InputError("aggregate_mobile: point outside the grid or time window");
        groups[{*t, cell->y, cell->x}].push_back(i);
    }

    std::vector<MobileAggregate> out;
    for (const auto& [key, idx] : groups) {
        std::vector<double> vals;
        vals.reserve(idx.size());
        for (std::size_t i : idx) vals.push_back(points[i].pm25);

        std::vector<std::size_t> survivors;
        if (idx.size() >= 5) {
            const double med = median_of(vals);
            std::vector<double> dev;
            dev.reserve(vals.size());
            for (double v : vals) dev.push_back(std::abs(v - med));
            const double mad = median_of(dev);
            const double cutoff = 3.0 * 1.4826 * mad;
            for (std::size_t k = 0; k < idx.size(); ++k)
                if (std::abs(vals[k] - med) <= cutoff) survivors.push_back(idx[k]);
        } else {
            survivors = idx;
        }
        if (survivors.empty()) continue;

        MobileAggregate agg;
        agg.cell = {std::get<2>(key), std::get<1>(key)};
        agg.t = std::get<0>(key);
        agg.sample_count = static_cast<int>(survivors.size());
        std::vector<double> pm;
        double temp_sum = 0.0, rh_sum = 0.0;
        int temp_n = 0, rh_n = 0;
        for (std::size_t i : survivors) {
            pm.push_back(points[i].pm25);
            if (points[i].temp) {
                temp_sum += *points[i].temp;
                ++temp_n;
            }
            if (points[i].rh) {
                rh_sum += *points[i].rh;
                ++rh_n;
            }
        }
        agg.pm25_median = median_of(pm);
        if (temp_n > 0) agg.temp_mean = temp_sum / temp_n;
        if (rh_n > 0) agg.rh_mean = rh_sum / rh_n;
        out.push_back(std::move(agg));
    }
    return out;
}

std::vector<MeteoReading> load_meteo_readings(const std::string& path, LoadCounts* counts) {
    csv::Reader reader(path);
    reader.require_header({"station_id", "lat", "lon", "timestamp", "temp", "pressure",
                           "vapor_pressure", "rh", "wind_speed", "wind_dir"});
    const int c_id = reader.column("station_id");
    const int c_lat = reader.column("lat");
    const int c_lon = reader.column("lon");
    const int c_ts = reader.column("timestamp");
    const int c_temp = reader.column("temp");
    const int c_pres = reader.column("pressure");
    const int c_vap = reader.column("vapor_pressure");
    const int c_rh = reader.column("rh");
    const int c_ws = reader.column("wind_speed");
    const int c_wd = reader.column("wind_dir");

    std::vector<MeteoReading> out;
    LoadCounts local;
    std::vector<std::string> row;
    while (reader.next(row)) {
        ++local.total;
        MeteoReading r;
        r.station_id = row[static_cast<std::size_t>(c_id)];
        std::int64_t ts;
        const bool ok = !r.station_id.empty() &&
                        csv::parse_double(row[static_cast<std::size_t>(c_lat)], r.lat) &&
                        csv::parse_double(row[static_cast<std::size_t>(c_lon)], r.lon) &&
                        csv::parse_timestamp(row[static_cast<std::size_t>(c_ts)], ts) &&
                        csv::parse_double(row[static_cast<std::size_t>(c_temp)], r.temp) &&
                        csv::parse_double(row[static_cast<std::size_t>(c_pres)], r.pressure) &&
                        csv::parse_double(row[static_cast<std::size_t>(c_vap)],
                                          r.vapor_pressure) &&
                        csv::parse_double(row[static_cast<std::size_t>(c_rh)], r.rh) &&
                        csv::parse_double(row[static_cast<std::size_t>(c_ws)], r.wind_speed) &&
                        csv::parse_double(row[static_cast<std::size_t>(c_wd)], r.wind_dir) &&
                        r.rh >= 0.0 && r.rh <= 100.0 && r.wind_speed >= 0.0;
        if (!ok) {
            ++local.malformed;
            ++local.skipped;
            continue;
        }
        r.timestamp = ts;
        r.wind_dir = std::fmod(std::fmod(r.wind_dir, 360.0) + 360.0, 360.0);
        ++local.parsed;
        out.push_back(std::move(r));
    }
    check_malformed_ratio(path, local);
    if (counts) *counts = local;
    return out;
}

namespace {

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
constexpr double kRadToDeg = 180.0 / 3.14159265358979323846;

struct HourStation {
    KmPoint pos;
    double sum[kNumMeteoVars] = {0, 0, 0, 0, 0, 0};
    double wind_u = 0.0;  // east component sum
    double wind_v = 0.0;  // north component sum
    int n = 0;
};

double idw_at(const std::vector<HourStation>& stations, const KmPoint& q,
              const std::vector<double>& vals) {
    double wsum = 0.0, vsum = 0.0;
    for (std::size_t i = 0; i < stations.size(); ++i) {
        const double dx = stations[i].pos.east - q.east;
        const double dy = stations[i].pos.north - q.north;
        const double d2 = dx * dx + dy * dy;
        if (d2 < 1e-18) return vals[i];
        const double w = 1.0 / d2;
        wsum += w;
        vsum += w * vals[i];
    }
    return vsum / wsum;
}

}  // namespace

MeteoField grid_meteorology(const std::vector<MeteoReading>& readings, const GridSpec& spec) {
    MeteoField field;
    field.width = spec.width;
    field.height = spec.height;
    field.num_hours = spec.num_hours;
    const std::size_t cells = static_cast<std::size_t>(spec.width) * spec.height;
    for (auto& v : field.values)
        v.assign(cells * static_cast<std::size_t>(spec.num_hours), 0.0);
    field.hour_valid.assign(static_cast<std::size_t>(spec.num_hours), 0);

    // per-hour, per-station means (wind direction averaged in vector space)
    std::vector<std::map<std::string, HourStation>> hours(
        static_cast<std::size_t>(spec.num_hours));
    for (const auto& r : readings) {
        const auto t = hour_index(r.timestamp, spec);
        if (!t) continue;
        auto& st = hours[static_cast<std::size_t>(*t)][r.station_id];
        if (st.n == 0) st.pos = project_km(r.lat, r.lon, spec);
        st.sum[0] += r.temp;
        st.sum[1] += r.pressure;
        st.sum[2] += r.vapor_pressure;
        st.sum[3] += r.rh;
        st.sum[4] += r.wind_speed;
        st.wind_u += std::sin(r.wind_dir * kDegToRad);
        st.wind_v += std::cos(r.wind_dir * kDegToRad);
        ++st.n;
    }

    std::size_t masked = 0;
    std::vector<HourStation> sts;
    std::vector<double> vals;
    for (int t = 0; t < spec.num_hours; ++t) {
        const auto& by_id = hours[static_cast<std::size_t>(t)];
        if (by_id.empty()) {
            ++masked;
            continue;
        }
        field.hour_valid[static_cast<std::size_t>(t)] = 1;
        sts.clear();
        for (const auto& [id, st] : by_id) sts.push_back(st);

        const std::size_t base = static_cast<std::size_t>(t) * cells;
        for (int var = 0; var < kNumMeteoVars; ++var) {
            vals.resize(sts.size());
            if (var == static_cast<int>(MeteoVar::wind_dir)) continue;  // handled below
            for (std::size_t i = 0; i < sts.size(); ++i)
                vals[i] = sts[i].sum[var] / sts[i].n;
            auto& plane = field.values[static_cast<std::size_t>(var)];
            for (int y = 0; y < spec.height; ++y)
                for (int x = 0; x < spec.width; ++x)
                    plane[base + static_cast<std::size_t>(y) * spec.width + x] =
                        idw_at(sts, cell_center_km({x, y}, spec), vals);
        }
        // wind direction: interpolate the unit-vector components, then the angle
        std::vector<double> us(sts.size()), vs(sts.size());
        for (std::size_t i = 0; i < sts.size(); ++i) {
            const double norm = std::hypot(sts[i].wind_u, sts[i].wind_v);
            us[i] = norm > 0.0 ? sts[i].wind_u / norm : 0.0;
            vs[i] = norm > 0.0 ? sts[i].wind_v / norm : 0.0;
        }
        auto& dir_plane = field.values[static_cast<std::size_t>(MeteoVar::wind_dir)];
        for (int y = 0; y < spec.height; ++y) {
            for (int x = 0; x < spec.width; ++x) {
                const KmPoint q = cell_center_km({x, y}, spec);
                const double u = idw_at(sts, q, us);
                const double v = idw_at(sts, q, vs);
                double deg = std::atan2(u, v) * kRadToDeg;
                if (deg < 0.0) deg += 360.0;
                if (deg >= 360.0) deg -= 360.0;
                dir_plane[base + static_cast<std::size_t>(y) * spec.width + x] = deg;
            }
        }
    }
    if (masked > 0)
        std::fprintf(stderr, "grid_meteorology: %zu of %d hours have no readings, masked\n",
                     masked, spec.num_hours);
    return field;
}

double mean_wind_speed(const std::vector<MeteoReading>& readings) {
    if (readings.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& r : readings) sum += r.wind_speed;
    return sum / static_cast<double>(readings.size());
}

std::string category_from_name(const std::string& feature_name) {
    if (feature_name.rfind("geo_", 0) == 0) return "geography";
    if (feature_name.rfind("transport_", 0) == 0) return "transport";
    if (feature_name.rfind("vitality_", 0) == 0) return "vitality";
    if (feature_name.rfind("met_", 0) == 0) return "meteorology";
    return "other";
}

feat::StaticVolume load_static_features(const std::string& path, const GridSpec& spec,
                                        LoadCounts* counts) {
    csv::Reader reader(path);
    reader.require_header({"x", "y", "feature_name", "value"});
    const int c_x = reader.column("x");
    const int c_y = reader.column("y");
    const int c_name = reader.column("feature_name");
    const int c_val = reader.column("value");

    feat::StaticVolume vol;
    vol.width = spec.width;
    vol.height = spec.height;
    const std::size_t cells = static_cast<std::size_t>(spec.width) * spec.height;
    std::map<std::string, std::size_t> channel_of;
    LoadCounts local;
    std::vector<std::string> row;
    while (reader.next(row)) {
        ++local.total;
        std::int64_t x, y;
        double value;
        const std::string& name = row[static_cast<std::size_t>(c_name)];
        if (name.empty() || !csv::parse_int(row[static_cast<std::size_t>(c_x)], x) ||
            !csv::parse_int(row[static_cast<std::size_t>(c_y)], y) ||
            !csv::parse_double(row[static_cast<std::size_t>(c_val)], value) ||
            !std::isfinite(value) || x < 0 || x >= spec.width || y < 0 || y >= spec.height) {
            ++local.malformed;
            ++local.skipped;
            continue;
        }
        auto [it, inserted] = channel_of.try_emplace(name, vol.planes.size());
        if (inserted) {
            vol.names.push_back(name);
            vol.categories.push_back(category_from_name(name));
            vol.planes.emplace_back(cells, 0.0);
        }
        vol.planes[it->second][static_cast<std::size_t>(y) * spec.width + x] = value;
        ++local.parsed;
    }
    check_malformed_ratio(path, local);
    if (counts) *counts = local;
    return vol;
}

feat::DynamicSeries load_dynamic_features(const std::string& path, const GridSpec& spec,
                                          LoadCounts* counts) {
    csv::Reader reader(path);
    reader.require_header({"x", "y", "t", "feature_name", "value"});
    const int c_x = reader.column("x");
    const int c_y = reader.column("y");
    const int c_t = reader.column("t");
    const int c_name = reader.column("feature_name");
    const int c_val = reader.column("value");

    feat::DynamicSeries series;
    series.width = spec.width;
    series.height = spec.height;
    series.num_hours = spec.num_hours;
    const std::size_t cells = static_cast<std::size_t>(spec.width) * spec.height;
    std::map<std::string, std::size_t> channel_of;
    LoadCounts local;
    std::vector<std::string> row;

    // collect into per-channel hourly planes; channels appear lazily
    std::vector<std::vector<std::vector<double>>> by_channel;  // [c][t][cell]
    while (reader.next(row)) {
        ++local.total;
        std::int64_t x, y, t;
        double value;
        const std::string& name = row[static_cast<std::size_t>(c_name)];
        if (name.empty() || !csv::parse_int(row[static_cast<std::size_t>(c_x)], x) ||
            !csv::parse_int(row[static_cast<std::size_t>(c_y)], y) ||
            !csv::parse_int(row[static_cast<std::size_t>(c_t)], t) ||
            !csv::parse_double(row[static_cast<std::size_t>(c_val)], value) ||
            !std::isfinite(value) || x < 0 || x >= spec.width || y < 0 || y >= spec.height ||
            t < 0 || t >= spec.num_hours) {
            ++local.malformed;
            ++local.skipped;
            continue;
        }
        auto [it, inserted] = channel_of.try_emplace(name, by_channel.size());
        if (inserted) {
            series.names.push_back(name);
            series.categories.push_back(category_from_name(name));
            by_channel.emplace_back(static_cast<std::size_t>(spec.num_hours),
                                    std::vector<double>(cells, 0.0));
        }
        by_channel[it->second][static_cast<std::size_t>(t)]
                  [static_cast<std::size_t>(y) * spec.width + x] = value;
        ++local.parsed;
    }
    check_malformed_ratio(path, local);
    if (counts) *counts = local;

    series.planes.assign(static_cast<std::size_t>(spec.num_hours), {});
    for (int t = 0; t < spec.num_hours; ++t) {
        auto& frame = series.planes[static_cast<std::size_t>(t)];
        frame.reserve(by_channel.size());
        for (auto& chan : by_channel) frame.push_back(std::move(chan[static_cast<std::size_t>(t)]));
    }
    return series;
}

std::vector<feat::ExternalSeries> build_external_series(
    const std::vector<Observation>& fixed_obs, const std::vector<StationMeta>& meta,
    const GridSpec& spec) {
    std::set<std::string> outside;
    for (const auto& m : meta)
        if (!m.inside_study_area) outside.insert(m.station_id);

    // station -> hour offset -> (sum, count)
    std::map<std::string, std::map<std::int64_t, std::pair<double, int>>> acc;
    for (const auto& obs : fixed_obs) {
        if (!outside.count(obs.sensor_id)) continue;
        auto& slot = acc[obs.sensor_id][hour_offset(obs.timestamp, spec)];
        slot.first += obs.pm25;
        ++slot.second;
    }

    std::vector<feat::ExternalSeries> out;
    for (const auto& [id, by_hour] : acc) {
        if (by_hour.empty()) continue;
        feat::ExternalSeries series;
        series.id = id;
        series.start_offset = by_hour.begin()->first;
        const std::int64_t last = by_hour.rbegin()->first;
        series.values.assign(static_cast<std::size_t>(last - series.start_offset + 1),
                             std::nullopt);
        for (const auto& [h, slot] : by_hour)
            series.values[static_cast<std::size_t>(h - series.start_offset)] =
                slot.first / slot.second;
        out.push_back(std::move(series));
    }
    return out;
}

std::vector<feat::MacroStation> build_macro_stations(const std::vector<StationMeta>& meta,
                                                     const GridSpec& spec,
                                                     double mean_wind_speed_ms) {
    const KmPoint center{0.5 * spec.width * spec.cell_size_km,
                         0.5 * spec.height * spec.cell_size_km};
    std::vector<feat::MacroStation> out;
    for (const auto& m : meta) {
        if (m.inside_study_area) continue;
        const KmPoint p = project_km(m.lat, m.lon, spec);
        const double dx = p.east - center.east;
        const double dy = p.north - center.north;
        feat::MacroStation st;
        st.id = m.station_id;
        st.distance_km = std::hypot(dx, dy);
        double deg = std::atan2(dx, dy) * kRadToDeg;
        if (deg < 0.0) deg += 360.0;
        st.bearing_deg = deg;
        st.theta = feat::derive_shift(st.distance_km, mean_wind_speed_ms * 3.6);
        out.push_back(std::move(st));
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
    return out;
}

}  // namespace deepmaps::ingest
