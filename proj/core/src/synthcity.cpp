#include "deepmaps/synthcity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "deepmaps/csv.hpp"
#include "deepmaps/rng.hpp"

namespace deepmaps::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;

int hod_of(const GridSpec& grid, std::int64_t hour) {
    const std::int64_t h = (grid.start_time + hour) % 24;
    return static_cast<int>(h < 0 ? h + 24 : h);
}

/// Mean-filter a field in place (3x3 window, mean over in-bounds neighbors).
void box_smooth(std::vector<double>& field, int width, int height, int passes) {
    std::vector<double> tmp(field.size());
    for (int p = 0; p < passes; ++p) {
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                double sum = 0.0;
                int n = 0;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx, ny = y + dy;
                        if (nx < 0 || nx >= width || ny < 0 || ny >= height) continue;
                        sum += field[static_cast<std::size_t>(ny) * width + nx];
                        ++n;
                    }
                }
                tmp[static_cast<std::size_t>(y) * width + x] = sum / n;
            }
        }
        field.swap(tmp);
    }
}

void standardize(std::vector<double>& field) {
    const double n = static_cast<double>(field.size());
    double mean = std::accumulate(field.begin(), field.end(), 0.0) / n;
    double var = 0.0;
    for (double v : field) var += (v - mean) * (v - mean);
    var /= n;
    const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    for (double& v : field) v = (v - mean) / sd;
}

std::vector<double> smooth_random_field(std::uint64_t master, const char* purpose,
                                        std::uint64_t index, int width, int height,
                                        int passes) {
    auto engine = make_engine(master, purpose, index);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> field(static_cast<std::size_t>(width) * height);
    for (double& v : field) v = normal(engine);
    box_smooth(field, width, height, passes);
    standardize(field);
    return field;
}

/// Normalized AR(1) series over [-lead, length) hour offsets.
ExtendedSeries ar1_series(std::uint64_t master, const char* purpose, std::uint64_t index,
                          int lead, int length, double phi) {
    auto engine = make_engine(master, purpose, index);
    std::normal_distribution<double> normal(0.0, 1.0);
    ExtendedSeries s;
    s.lead_hours = lead;
    s.values.resize(static_cast<std::size_t>(lead + length));
    const double innovation = std::sqrt(1.0 - phi * phi);  // keeps variance ~1
    double state = normal(engine);
    for (auto& v : s.values) {
        v = state;
        state = phi * state + innovation * normal(engine);
    }
    return s;
}

}  // namespace

void CityConfig::validate() const {
    grid.validate();
    if (num_static < 1) throw ConfigError("city: num_static must be >= 1");
    if (num_dynamic < 1) throw ConfigError("city: num_dynamic must be >= 1");
    if (num_driver_channels < 0 || num_driver_channels > num_static)
        throw ConfigError("city: num_driver_channels must be in [0, num_static]");
    if (num_sources < 0) throw ConfigError("city: num_sources must be >= 0");
    if (source_strength < 0.0 || area_source_scale < 0.0)
        throw ConfigError("city: emission strengths must be >= 0");
    if (wind_speed_ms < 0.0) throw ConfigError("city: wind_speed_ms must be >= 0");
    if (diffusion_km2_h < 0.0) throw ConfigError("city: diffusion must be >= 0");
    if (decay_per_hour < 0.0) throw ConfigError("city: decay must be >= 0");
    if (substeps < 0) throw ConfigError("city: substeps must be >= 0");
    if (inflow_base < 0.0 || inflow_amplitude < 0.0)
        throw ConfigError("city: inflow levels must be >= 0");
    for (double w : edge_weight)
        if (w < 0.0) throw ConfigError("city: edge weights must be >= 0");
    if (num_fixed_stations < 1 || num_fixed_stations > grid.num_cells())
        throw ConfigError("city: num_fixed_stations must be in [1, cells]");
    if (num_mobile_vehicles < 0) throw ConfigError("city: num_mobile_vehicles must be >= 0");
    if (num_outside_stations < 0) throw ConfigError("city: num_outside_stations must be >= 0");
    if (num_meteo_stations < 1) throw ConfigError("city: num_meteo_stations must be >= 1");
    if (sensor_noise_sd < 0.0 || mobile_noise_sd < 0.0)
        throw ConfigError("city: noise levels must be >= 0");
    if (mobile_scale <= 0.0) throw ConfigError("city: mobile_scale must be > 0");
}

City generate_city(const CityConfig& config) {
    config.validate();
    City city;
    city.config = config;
    const GridSpec& grid = config.grid;
    const int w = grid.width, h = grid.height;
    const std::size_t cells = static_cast<std::size_t>(grid.num_cells());
    const int hours = grid.num_hours;

    // static channels, category prefixes cycling through the urban kinds
    static const char* kPrefixes[3] = {"geo", "transport", "vitality"};
    static const char* kCategories[3] = {"geography", "transport", "vitality"};
    city.static_volume.width = w;
    city.static_volume.height = h;
    for (int c = 0; c < config.num_static; ++c) {
        city.static_volume.planes.push_back(
            smooth_random_field(config.seed, "static_field", static_cast<std::uint64_t>(c), w,
                                h, 2));
        char name[64];
        std::snprintf(name, sizeof(name), "%s_s%d", kPrefixes[c % 3], c);
        city.static_volume.names.emplace_back(name);
        city.static_volume.categories.emplace_back(kCategories[c % 3]);
    }

    // emissions: rectified driver channels plus Gaussian point sources
    city.emission_base.assign(cells, 0.0);
    if (config.num_driver_channels > 0) {
        for (std::size_t i = 0; i < cells; ++i) {
            double sum = 0.0;
            for (int d = 0; d < config.num_driver_channels; ++d)
                sum += std::max(0.0, city.static_volume.planes[static_cast<std::size_t>(d)][i]);
            city.emission_base[i] =
                config.area_source_scale * sum / config.num_driver_channels;
        }
    }
    {
        auto engine = make_engine(config.seed, "sources", 0);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (int s = 0; s < config.num_sources; ++s) {
            const int sx = static_cast<int>(unit(engine) * w);
            const int sy = static_cast<int>(unit(engine) * h);
            const double amp = config.source_strength * (0.6 + 0.8 * unit(engine));
            const double sigma = 0.9 + 0.9 * unit(engine);
            const int r = static_cast<int>(std::ceil(3.0 * sigma));
            for (int y = std::max(0, sy - r); y <= std::min(h - 1, sy + r); ++y) {
                for (int x = std::max(0, sx - r); x <= std::min(w - 1, sx + r); ++x) {
                    const double d2 = static_cast<double>((x - sx) * (x - sx) +
                                                          (y - sy) * (y - sy));
                    city.emission_base[static_cast<std::size_t>(y) * w + x] +=
                        amp * std::exp(-d2 / (2.0 * sigma * sigma));
                }
            }
        }
    }

    // diurnal emission factor (deterministic, strictly positive)
    city.emission_factor.lead_hours = kHistoryHours;
    city.emission_factor.values.resize(static_cast<std::size_t>(kHistoryHours + hours));
    for (int i = 0; i < kHistoryHours + hours; ++i) {
        const int hod = hod_of(grid, i - kHistoryHours);
        const double f = 1.0 + 0.35 * std::sin(2.0 * kPi * (hod - 8) / 24.0) +
                         0.12 * std::sin(4.0 * kPi * (hod - 8) / 24.0);
        city.emission_factor.values[static_cast<std::size_t>(i)] = std::max(0.25, f);
    }

    // dynamic channels: channel 0 tracks the emission rhythm (a traffic
    // proxy), the rest are independent diurnal fields
    city.dynamic_series.width = w;
    city.dynamic_series.height = h;
    city.dynamic_series.num_hours = hours;
    std::vector<std::vector<double>> dyn_fields;
    for (int c = 0; c < config.num_dynamic; ++c) {
        dyn_fields.push_back(smooth_random_field(config.seed, "dynamic_field",
                                                 static_cast<std::uint64_t>(c), w, h, 2));
        char name[64];
        std::snprintf(name, sizeof(name), "%s_d%d", c == 0 ? "transport" : "vitality", c);
        city.dynamic_series.names.emplace_back(name);
        city.dynamic_series.categories.emplace_back(c == 0 ? "transport" : "vitality");
    }
    auto dyn_noise = make_engine(config.seed, "dynamic_noise", 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    city.dynamic_series.planes.assign(static_cast<std::size_t>(hours), {});
    for (int t = 0; t < hours; ++t) {
        const int hod = hod_of(grid, t);
        auto& frame = city.dynamic_series.planes[static_cast<std::size_t>(t)];
        frame.assign(static_cast<std::size_t>(config.num_dynamic),
                     std::vector<double>(cells, 0.0));
        for (int c = 0; c < config.num_dynamic; ++c) {
            const auto& field = dyn_fields[static_cast<std::size_t>(c)];
            double amp;
            if (c == 0) {
                amp = city.emission_factor.at(t);
            } else {
                amp = 1.0 + 0.3 * std::sin(2.0 * kPi * (hod - 3.0 * c) / 24.0);
            }
            auto& plane = frame[static_cast<std::size_t>(c)];
            for (std::size_t i = 0; i < cells; ++i) {
                const double base = c == 0 ? std::max(0.0, field[i]) : field[i];
                plane[i] = amp * base + 0.15 * normal(dyn_noise);
            }
        }
    }

    // wind series: AR jitter around the prevailing direction and speed
    const int total = kHistoryHours + hours;
    const auto dir_ar = ar1_series(config.seed, "wind_dir", 0, kHistoryHours, hours, 0.85);
    const auto spd_ar = ar1_series(config.seed, "wind_speed", 0, kHistoryHours, hours, 0.85);
    city.wind_dir_series.lead_hours = kHistoryHours;
    city.wind_speed_series.lead_hours = kHistoryHours;
    city.wind_dir_series.values.resize(static_cast<std::size_t>(total));
    city.wind_speed_series.values.resize(static_cast<std::size_t>(total));
    for (int i = 0; i < total; ++i) {
        double dir = config.wind_dir_deg +
                     config.wind_dir_jitter * dir_ar.values[static_cast<std::size_t>(i)];
        dir = std::fmod(std::fmod(dir, 360.0) + 360.0, 360.0);
        city.wind_dir_series.values[static_cast<std::size_t>(i)] = dir;
        const double spd = config.wind_speed_ms *
                           (1.0 + 0.2 * spd_ar.values[static_cast<std::size_t>(i)]);
        city.wind_speed_series.values[static_cast<std::size_t>(i)] =
            std::clamp(spd, 0.3 * config.wind_speed_ms, 2.0 * config.wind_speed_ms);
    }

    // regional inflow: the upwind edges (N, W by default weights) share one
    // signal; the others carry their own, information-free for the interior
    const int signal_lead = kHistoryHours + 12;  // outside stations lead by up to 12 h
    const auto shared = ar1_series(config.seed, "inflow_shared", 0, signal_lead, hours + 12,
                                   0.92);
    std::array<ExtendedSeries, 4> edge_signal;
    for (int e = 0; e < 4; ++e) {
        if (e == north || e == west) {
            edge_signal[static_cast<std::size_t>(e)] = shared;
        } else {
            edge_signal[static_cast<std::size_t>(e)] = ar1_series(
                config.seed, "inflow_edge", static_cast<std::uint64_t>(e), signal_lead,
                hours + 12, 0.92);
        }
        auto& series = city.edge_inflow[static_cast<std::size_t>(e)];
        series.lead_hours = kHistoryHours;
        series.values.resize(static_cast<std::size_t>(total));
        const double wgt = config.edge_weight[static_cast<std::size_t>(e)];
        for (int i = 0; i < total; ++i) {
            const std::int64_t hour = i - kHistoryHours;
            series.values[static_cast<std::size_t>(i)] = std::max(
                0.0, wgt * (config.inflow_base +
                            config.inflow_amplitude *
                                edge_signal[static_cast<std::size_t>(e)].at(hour)));
        }
    }

    // outside stations on a ring; alignment with the prevailing wind decides
    // how much of the shared upwind signal each one reads, so stations sitting
    // upwind report the air mass that later crosses the city while off-axis
    // ones mostly report their own local fluctuations
    auto out_engine = make_engine(config.seed, "outside", 0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double coslat = mean_lat_cos(grid);
    const KmPoint center{0.5 * w * grid.cell_size_km, 0.5 * h * grid.cell_size_km};
    for (int i = 0; i < config.num_outside_stations; ++i) {
        OutsideStation st;
        char id[32];
        std::snprintf(id, sizeof(id), "out%02d", i);
        st.id = id;
        st.bearing_deg = std::fmod(15.0 + 30.0 * i, 360.0);
        // beyond the circumscribed circle, so the station can never land on
        // the grid and read as an in-city sensor
        const double half_diag =
            0.5 * std::hypot(w * grid.cell_size_km, h * grid.cell_size_km);
        st.distance_km = half_diag + 2.0 * grid.cell_size_km + 30.0 * unit(out_engine);
        st.lead = std::clamp(
            static_cast<int>(std::lround(st.distance_km / (config.wind_speed_ms * 3.6))), 1,
            12);
        const double east = center.east + st.distance_km * std::sin(st.bearing_deg * kDegToRad);
        const double north_km =
            center.north + st.distance_km * std::cos(st.bearing_deg * kDegToRad);
        st.lat = grid.origin_lat + north_km / kKmPerDegLat;
        st.lon = grid.origin_lon + east / (kKmPerDegLat * coslat);
        const double off_axis = (st.bearing_deg - config.wind_dir_deg) * kDegToRad;
        const double align = std::max(0.0, std::cos(off_axis));
        const double mix = align * align;
        const auto local = ar1_series(config.seed, "outside_local",
                                      static_cast<std::uint64_t>(i), signal_lead, hours + 12,
                                      0.92);
        st.readings.lead_hours = kHistoryHours;
        st.readings.values.resize(static_cast<std::size_t>(total));
        for (int k = 0; k < total; ++k) {
            const std::int64_t hour = k - kHistoryHours;
            const double sig = mix * shared.at(hour + st.lead) +
                               (1.0 - mix) * local.at(hour + st.lead);
            st.readings.values[static_cast<std::size_t>(k)] =
                std::max(0.0, config.inflow_base + config.inflow_amplitude * sig);
        }
        city.outside_stations.push_back(std::move(st));
    }
    return city;
}

DispersionResult simulate_dispersion(const DispersionParams& params) {
    if (params.width < 1 || params.height < 1)
        throw ConfigError("dispersion: grid must be at least 1x1");
    if (params.hours < 1) throw ConfigError("dispersion: hours must be >= 1");
    if (params.cell_km <= 0.0) throw ConfigError("dispersion: cell size must be > 0");
    if (params.diffusion_km2_h < 0.0 || params.decay_per_hour < 0.0)
        throw ConfigError("dispersion: diffusion and decay must be >= 0");
    const std::size_t cells = static_cast<std::size_t>(params.width) * params.height;
    auto check_size = [&](const std::vector<double>& v, std::size_t want, const char* what) {
        if (!v.empty() && v.size() != want)
            throw ConfigError(std::string("dispersion: ") + what + " has wrong length");
    };
    check_size(params.flow_east_kmh, static_cast<std::size_t>(params.hours), "flow_east");
    check_size(params.flow_north_kmh, static_cast<std::size_t>(params.hours), "flow_north");
    check_size(params.emission_base, cells, "emission_base");
    check_size(params.emission_factor, static_cast<std::size_t>(params.hours),
               "emission_factor");
    check_size(params.initial, cells, "initial");
    for (const auto& e : params.edge_inflow)
        check_size(e, static_cast<std::size_t>(params.hours), "edge_inflow");

    double speed_max = 0.0;
    double speed_l1_max = 0.0;
    for (int t = 0; t < params.hours; ++t) {
        const double u =
            params.flow_east_kmh.empty() ? 0.0 : params.flow_east_kmh[static_cast<std::size_t>(t)];
        const double v = params.flow_north_kmh.empty()
                             ? 0.0
                             : params.flow_north_kmh[static_cast<std::size_t>(t)];
        speed_max = std::max(speed_max, std::hypot(u, v));
        speed_l1_max = std::max(speed_l1_max, std::abs(u) + std::abs(v));
    }

    const double dx = params.cell_km;
    int n = params.substeps;
    if (n == 0) {
        // Keep every update coefficient non-negative so the upwind scheme is
        // monotone: the per-axis Courant numbers, the diffusion stencil, and
        // decay must together fit inside one step. Bounding the axis Courant
        // numbers separately is not enough — a diagonal wind drives the
        // (|u|+|v|) sum to sqrt(2) times the speed, and once the centre
        // coefficient drops below -1 the checkerboard mode grows each step.
        const double rate = speed_l1_max / dx + 4.0 * params.diffusion_km2_h / (dx * dx) +
                            params.decay_per_hour;
        n = std::max(1, static_cast<int>(std::ceil(rate - 1e-12)));
    }
    const double dt = 1.0 / n;
    const double diff_number = params.diffusion_km2_h * dt / (dx * dx);
    const double courant = speed_max * dt / dx;
    if (diff_number > 0.25 + 1e-12)
        throw ConfigError("dispersion: diffusion number " + std::to_string(diff_number) +
                          " exceeds 0.25; increase substeps");
    if (courant > 1.0 + 1e-12)
        throw ConfigError("dispersion: Courant number " + std::to_string(courant) +
                          " exceeds 1; increase substeps");

    DispersionResult result;
    result.substeps_used = n;
    const int w = params.width, h = params.height;
    std::vector<double> cur = params.initial.empty() ? std::vector<double>(cells, 0.0)
                                                     : params.initial;
    std::vector<double> next(cells, 0.0);
    const double d_over_dx2 = params.diffusion_km2_h / (dx * dx);

    for (int t = 0; t < params.hours; ++t) {
        const double u = params.flow_east_kmh.empty()
                             ? 0.0
                             : params.flow_east_kmh[static_cast<std::size_t>(t)];
        const double v = params.flow_north_kmh.empty()
                             ? 0.0
                             : params.flow_north_kmh[static_cast<std::size_t>(t)];
        const double factor =
            params.emission_factor.empty() ? 1.0
                                           : params.emission_factor[static_cast<std::size_t>(t)];
        const bool inflow = params.boundary == BoundaryMode::inflow;
        auto edge_val = [&](int e) {
            return params.edge_inflow[static_cast<std::size_t>(e)].empty()
                       ? 0.0
                       : params.edge_inflow[static_cast<std::size_t>(e)]
                                           [static_cast<std::size_t>(t)];
        };
        const double g_n = edge_val(north), g_e = edge_val(east), g_s = edge_val(south),
                     g_w = edge_val(west);

        for (int sub = 0; sub < n; ++sub) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const std::size_t i = static_cast<std::size_t>(y) * w + x;
                    const double c = cur[i];
                    // ghost values: boundary concentration when flowing in,
                    // mirrored (zero-flux) when closed
                    const double cw = x > 0 ? cur[i - 1] : (inflow ? g_w : c);
                    const double ce = x < w - 1 ? cur[i + 1] : (inflow ? g_e : c);
                    const double cs = y > 0 ? cur[i - static_cast<std::size_t>(w)]
                                            : (inflow ? g_s : c);
                    const double cn = y < h - 1 ? cur[i + static_cast<std::size_t>(w)]
                                                : (inflow ? g_n : c);
                    const double adv_x = u >= 0.0 ? u * (c - cw) / dx : u * (ce - c) / dx;
                    const double adv_y = v >= 0.0 ? v * (c - cs) / dx : v * (cn - c) / dx;
                    const double lap = (cw + ce + cs + cn - 4.0 * c) * d_over_dx2;
                    const double src =
                        params.emission_base.empty() ? 0.0 : params.emission_base[i] * factor;
                    double val = c + dt * (-adv_x - adv_y + lap - params.decay_per_hour * c +
                                           src);
                    if (val < 0.0) {
                        val = 0.0;
                        ++result.negative_clips;
                    }
                    next[i] = val;
                }
            }
            cur.swap(next);
        }
        GridFrame frame;
        frame.t = t;
        frame.width = w;
        frame.height = h;
        frame.values = cur;
        frame.mask.assign(cells, 1);
        result.frames.push_back(std::move(frame));
    }
    return result;
}

DispersionResult simulate_city(const City& city) {
    const CityConfig& config = city.config;
    const GridSpec& grid = config.grid;
    const int warm = kHistoryHours;
    const int hours = grid.num_hours + warm;

    DispersionParams params;
    params.width = grid.width;
    params.height = grid.height;
    params.cell_km = grid.cell_size_km;
    params.hours = hours;
    params.substeps = config.substeps;
    params.diffusion_km2_h = config.diffusion_km2_h;
    params.decay_per_hour = config.decay_per_hour;
    params.boundary = config.boundary;
    params.emission_base = city.emission_base;
    params.flow_east_kmh.resize(static_cast<std::size_t>(hours));
    params.flow_north_kmh.resize(static_cast<std::size_t>(hours));
    params.emission_factor.resize(static_cast<std::size_t>(hours));
    for (auto& e : params.edge_inflow) e.resize(static_cast<std::size_t>(hours));
    for (int i = 0; i < hours; ++i) {
        const std::int64_t hour = i - warm;
        const double dir = city.wind_dir_series.at(hour) * kDegToRad;
        const double spd = city.wind_speed_series.at(hour) * 3.6;  // km/h
        params.flow_east_kmh[static_cast<std::size_t>(i)] = -std::sin(dir) * spd;
        params.flow_north_kmh[static_cast<std::size_t>(i)] = -std::cos(dir) * spd;
        params.emission_factor[static_cast<std::size_t>(i)] = city.emission_factor.at(hour);
        for (int e = 0; e < 4; ++e)
            params.edge_inflow[static_cast<std::size_t>(e)][static_cast<std::size_t>(i)] =
                city.edge_inflow[static_cast<std::size_t>(e)].at(hour);
    }
    // start the warmup from the mean boundary level so spin-up is short
    double bg = 0.0;
    for (int e = 0; e < 4; ++e) bg += params.edge_inflow[static_cast<std::size_t>(e)][0];
    params.initial.assign(static_cast<std::size_t>(grid.num_cells()), bg / 4.0);

    DispersionResult full = simulate_dispersion(params);
    DispersionResult out;
    out.negative_clips = full.negative_clips;
    out.substeps_used = full.substeps_used;
    out.frames.assign(full.frames.begin() + warm, full.frames.end());
    for (int t = 0; t < grid.num_hours; ++t) out.frames[static_cast<std::size_t>(t)].t = t;
    return out;
}

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    return out;
}

std::int64_t hour_to_epoch_s(const GridSpec& grid, std::int64_t hour) {
    return (grid.start_time + hour) * 3600;
}

}  // namespace

SampleSummary sample_sensors(const City& city, const DispersionResult& truth,
                             const std::string& out_dir, const std::string& config_hash) {
    const CityConfig& config = city.config;
    const GridSpec& grid = config.grid;
    if (static_cast<int>(truth.frames.size()) != grid.num_hours)
        throw InputError("sample_sensors: truth frame count does not match the grid");
    SampleSummary summary;
    std::normal_distribution<double> normal(0.0, 1.0);

    // fixed stations at seeded distinct cells
    std::vector<int> cell_ids(static_cast<std::size_t>(grid.num_cells()));
    std::iota(cell_ids.begin(), cell_ids.end(), 0);
    auto station_engine = make_engine(config.seed, "station_cells", 0);
    for (int i = 0; i < config.num_fixed_stations; ++i) {
        std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i),
                                                        cell_ids.size() - 1);
        std::swap(cell_ids[static_cast<std::size_t>(i)], cell_ids[pick(station_engine)]);
    }

    auto fixed = open_out(out_dir + "/fixed.csv");
    fixed << "# config=" << config_hash << "\n";
    fixed << "station_id,lat,lon,timestamp,pm25\n";
    for (int s = 0; s < config.num_fixed_stations; ++s) {
        const int cell = cell_ids[static_cast<std::size_t>(s)];
        const CellIndex idx{cell % grid.width, cell / grid.width};
        double lat, lon;
        cell_center(idx, grid, lat, lon);
        auto noise = make_engine(config.seed, "fixed_noise", static_cast<std::uint64_t>(s));
        char id[32];
        std::snprintf(id, sizeof(id), "st%02d", s);
        for (int t = 0; t < grid.num_hours; ++t) {
            const double v = std::max(
                0.0, truth.frames[static_cast<std::size_t>(t)].at(idx.x, idx.y) +
                         config.sensor_noise_sd * normal(noise));
            fixed << id << ',' << csv::fmt(lat) << ',' << csv::fmt(lon) << ','
                  << hour_to_epoch_s(grid, t) << ',' << csv::fmt(v) << "\n";
            ++summary.fixed_rows;
        }
    }
    // outside stations: extended series with the same sensor noise
    for (std::size_t s = 0; s < city.outside_stations.size(); ++s) {
        const auto& st = city.outside_stations[s];
        auto noise = make_engine(config.seed, "outside_noise", s);
        for (std::int64_t t = -kHistoryHours; t < grid.num_hours; ++t) {
            const double v =
                std::max(0.0, st.readings.at(t) + config.sensor_noise_sd * normal(noise));
            fixed << st.id << ',' << csv::fmt(st.lat) << ',' << csv::fmt(st.lon) << ','
                  << hour_to_epoch_s(grid, t) << ',' << csv::fmt(v) << "\n";
            ++summary.fixed_rows;
        }
    }

    // mobile vehicles: dwelling random walks that start at station cells so
    // co-located pairs exist for calibration
    auto mobile = open_out(out_dir + "/mobile.csv");
    mobile << "# config=" << config_hash << "\n";
    mobile << "vehicle_id,lat,lon,timestamp,pm25,temp,rh\n";
    const double coslat = mean_lat_cos(grid);
    auto ambient_temp = [&](int t) {
        const int hod = hod_of(grid, t);
        return 18.0 + 6.0 * std::sin(2.0 * kPi * (hod - 14) / 24.0);
    };
    auto ambient_rh = [&](int t) {
        const int hod = hod_of(grid, t);
        return 55.0 - 12.0 * std::sin(2.0 * kPi * (hod - 9) / 24.0);
    };
    for (int v = 0; v < config.num_mobile_vehicles; ++v) {
        auto walk = make_engine(config.seed, "mobile_walk", static_cast<std::uint64_t>(v));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const int start =
            cell_ids[static_cast<std::size_t>(v % config.num_fixed_stations)];
        CellIndex pos{start % grid.width, start / grid.width};
        char id[32];
        std::snprintf(id, sizeof(id), "veh%02d", v);
        for (int t = 0; t < grid.num_hours; ++t) {
            if (unit(walk) > 0.4) {  // move to a neighboring cell
                const int dx = static_cast<int>(unit(walk) * 3.0) - 1;
                const int dy = static_cast<int>(unit(walk) * 3.0) - 1;
                pos.x = std::clamp(pos.x + dx, 0, grid.width - 1);
                pos.y = std::clamp(pos.y + dy, 0, grid.height - 1);
            }
            const double truth_v = truth.frames[static_cast<std::size_t>(t)].at(pos.x, pos.y);
            const int points = 2 + static_cast<int>(unit(walk) * 3.0);
            double lat0, lon0;
            cell_center(pos, grid, lat0, lon0);
            for (int p = 0; p < points; ++p) {
                const double jx = (unit(walk) - 0.5) * 0.9;  // stay inside the cell
                const double jy = (unit(walk) - 0.5) * 0.9;
                const double lat = lat0 + jy * grid.cell_size_km / kKmPerDegLat;
                const double lon = lon0 + jx * grid.cell_size_km / (kKmPerDegLat * coslat);
                const std::int64_t ts =
                    hour_to_epoch_s(grid, t) + static_cast<std::int64_t>(unit(walk) * 3599.0);
                const double reading =
                    std::max(0.0, config.mobile_scale * truth_v + config.mobile_bias +
                                      config.mobile_noise_sd * normal(walk));
                const double temp = ambient_temp(t) + 0.6 * normal(walk);
                const double rh =
                    std::clamp(ambient_rh(t) + 1.5 * normal(walk), 5.0, 100.0);
                mobile << id << ',' << csv::fmt(lat) << ',' << csv::fmt(lon) << ',' << ts
                       << ',' << csv::fmt(reading) << ',' << csv::fmt(temp) << ','
                       << csv::fmt(rh) << "\n";
                ++summary.mobile_rows;
            }
        }
    }

    // meteorology stations
    auto meteo = open_out(out_dir + "/meteo.csv");
    meteo << "# config=" << config_hash << "\n";
    meteo << "station_id,lat,lon,timestamp,temp,pressure,vapor_pressure,rh,wind_speed,"
             "wind_dir\n";
    auto met_place = make_engine(config.seed, "meteo_cells", 0);
    std::uniform_int_distribution<int> cell_pick(0, grid.num_cells() - 1);
    for (int s = 0; s < config.num_meteo_stations; ++s) {
        const int cell = cell_pick(met_place);
        const CellIndex idx{cell % grid.width, cell / grid.width};
        double lat, lon;
        cell_center(idx, grid, lat, lon);
        auto noise = make_engine(config.seed, "meteo_noise", static_cast<std::uint64_t>(s));
        char id[32];
        std::snprintf(id, sizeof(id), "met%02d", s);
        for (int t = 0; t < grid.num_hours; ++t) {
            const int hod = hod_of(grid, t);
            const double temp = ambient_temp(t) + 0.4 * normal(noise);
            const double pressure =
                1013.0 + 2.0 * std::sin(2.0 * kPi * hod / 24.0) + 0.5 * normal(noise);
            const double vapor =
                12.0 + 2.0 * std::sin(2.0 * kPi * (hod - 15) / 24.0) + 0.3 * normal(noise);
            const double rh = std::clamp(ambient_rh(t) + 2.0 * normal(noise), 5.0, 100.0);
            const double ws =
                std::max(0.0, city.wind_speed_series.at(t) + 0.25 * normal(noise));
            double wd = city.wind_dir_series.at(t) + 6.0 * normal(noise);
            wd = std::fmod(std::fmod(wd, 360.0) + 360.0, 360.0);
            meteo << id << ',' << csv::fmt(lat) << ',' << csv::fmt(lon) << ','
                  << hour_to_epoch_s(grid, t) << ',' << csv::fmt(temp) << ','
                  << csv::fmt(pressure) << ',' << csv::fmt(vapor) << ',' << csv::fmt(rh)
                  << ',' << csv::fmt(ws) << ',' << csv::fmt(wd) << "\n";
            ++summary.meteo_rows;
        }
    }
    return summary;
}

void write_feature_files(const City& city, const std::string& out_dir,
                         const std::string& config_hash) {
    const GridSpec& grid = city.config.grid;
    auto stat = open_out(out_dir + "/static_features.csv");
    stat << "# config=" << config_hash << "\n";
    stat << "x,y,feature_name,value\n";
    for (int c = 0; c < city.static_volume.channels(); ++c) {
        const auto& plane = city.static_volume.planes[static_cast<std::size_t>(c)];
        const auto& name = city.static_volume.names[static_cast<std::size_t>(c)];
        for (int y = 0; y < grid.height; ++y)
            for (int x = 0; x < grid.width; ++x)
                stat << x << ',' << y << ',' << name << ','
                     << csv::fmt(plane[static_cast<std::size_t>(y) * grid.width + x]) << "\n";
    }

    auto dyn = open_out(out_dir + "/dynamic_features.csv");
    dyn << "# config=" << config_hash << "\n";
    dyn << "x,y,t,feature_name,value\n";
    for (int t = 0; t < grid.num_hours; ++t) {
        const auto& frame = city.dynamic_series.planes[static_cast<std::size_t>(t)];
        for (int c = 0; c < city.dynamic_series.channels(); ++c) {
            const auto& plane = frame[static_cast<std::size_t>(c)];
            const auto& name = city.dynamic_series.names[static_cast<std::size_t>(c)];
            for (int y = 0; y < grid.height; ++y)
                for (int x = 0; x < grid.width; ++x)
                    dyn << x << ',' << y << ',' << t << ',' << name << ','
                        << csv::fmt(plane[static_cast<std::size_t>(y) * grid.width + x])
                        << "\n";
        }
    }
}

void write_truth(const DispersionResult& truth, const GridSpec& spec,
                 const std::string& out_dir, const std::string& config_hash) {
    auto out = open_out(out_dir + "/truth.csv");
    out << "# config=" << config_hash << "\n";
    out << "x,y,t,value\n";
    for (const auto& frame : truth.frames)
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x)
                out << x << ',' << y << ',' << frame.t << ',' << csv::fmt(frame.at(x, y))
                    << "\n";
}

std::vector<GridFrame> load_truth(const std::string& path, const GridSpec& spec) {
    csv::Reader reader(path);
    reader.require_header({"x", "y", "t", "value"});
    const int c_x = reader.column("x");
    const int c_y = reader.column("y");
    const int c_t = reader.column("t");
    const int c_v = reader.column("value");
    std::vector<GridFrame> frames(static_cast<std::size_t>(spec.num_hours));
    const std::size_t cells = static_cast<std::size_t>(spec.num_cells());
    for (int t = 0; t < spec.num_hours; ++t) {
        frames[static_cast<std::size_t>(t)].t = t;
        frames[static_cast<std::size_t>(t)].width = spec.width;
        frames[static_cast<std::size_t>(t)].height = spec.height;
        frames[static_cast<std::size_t>(t)].values.assign(cells, 0.0);
        frames[static_cast<std::size_t>(t)].mask.assign(cells, 0);
    }
    std::vector<std::string> row;
    while (reader.next(row)) {
        std::int64_t x, y, t;
        double v;
        if (!csv::parse_int(row[static_cast<std::size_t>(c_x)], x) ||
            !csv::parse_int(row[static_cast<std::size_t>(c_y)], y) ||
            !csv::parse_int(row[static_cast<std::size_t>(c_t)], t) ||
            !csv::parse_double(row[static_cast<std::size_t>(c_v)], v) || x < 0 ||
            x >= spec.width || y < 0 || y >= spec.height || t < 0 || t >= spec.num_hours)
            throw SchemaError(path + ": malformed truth row " +
                              std::to_string(reader.data_rows_seen()));
        auto& frame = frames[static_cast<std::size_t>(t)];
        frame.values[static_cast<std::size_t>(y) * spec.width + x] = v;
        frame.mask[static_cast<std::size_t>(y) * spec.width + x] = 1;
    }
    for (const auto& frame : frames)
        for (std::uint8_t m : frame.mask)
            if (!m) throw SchemaError(path + ": truth raster has holes");
    return frames;
}

}  // namespace deepmaps::synth
