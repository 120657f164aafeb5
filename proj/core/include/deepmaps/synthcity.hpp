#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "deepmaps/featurize.hpp"
#include "deepmaps/grid.hpp"

namespace deepmaps::synth {

enum class BoundaryMode { closed, inflow };

enum Edge { north = 0, east = 1, south = 2, west = 3 };

/// Everything that defines one synthetic city. Physical scales are chosen so
/// concentrations land in a realistic 20-120 ug/m3 band.
struct CityConfig {
    GridSpec grid{39.75, 116.05, 1.0, 32, 32, 425000, 168};

    // urban feature channels
    int num_static = 6;           // static channels (smoothed random fields)
    int num_dynamic = 4;          // hourly channels (diurnal x spatial fields)
    int num_driver_channels = 2;  // leading static channels that drive emissions

    // emissions
    int num_sources = 6;             // Gaussian point sources
    double source_strength = 45.0;   // peak injection rate, ug/m3 per hour
    double area_source_scale = 18.0; // area-wide injection driven by the drivers

    // transport
    double wind_speed_ms = 2.2;      // prevailing speed
    double wind_dir_deg = 315.0;     // direction the wind comes from (0 = N)
    double wind_dir_jitter = 18.0;   // hourly AR jitter, degrees
    double diffusion_km2_h = 0.18;   // D
    double decay_per_hour = 0.04;    // linear removal rate
    int substeps = 0;                // per hour; 0 = choose from stability bounds
    BoundaryMode boundary = BoundaryMode::inflow;

    // regional inflow (concentration at the upwind boundary)
    double inflow_base = 30.0;
    double inflow_amplitude = 18.0;
    std::array<double, 4> edge_weight{1.0, 0.12, 0.12, 1.0};  // N,E,S,W

    // sensors
    int num_fixed_stations = 30;
    int num_mobile_vehicles = 10;
    int num_outside_stations = 12;
    int num_meteo_stations = 5;
    double sensor_noise_sd = 2.0;  // fixed-station (and outside) noise
    double mobile_scale = 0.8;     // mobile reads scale*truth + bias + noise
    double mobile_bias = 5.0;
    double mobile_noise_sd = 2.0;

    std::uint64_t seed = 0;

    void validate() const;
};

/// History buffer for an hourly signal reaching lead_hours before hour 0.
struct ExtendedSeries {
    int lead_hours = 24;          // values[0] is hour -lead_hours
    std::vector<double> values;   // lead_hours + num_hours entries

    double at(std::int64_t hour) const {
        return values[static_cast<std::size_t>(hour + lead_hours)];
    }
};

struct OutsideStation {
    std::string id;
    double lat = 0.0;
    double lon = 0.0;
    double distance_km = 0.0;  // from the grid centroid
    double bearing_deg = 0.0;  // 0 = north, clockwise, seen from the centroid
    int lead = 1;              // hours its readings lead the boundary inflow
    ExtendedSeries readings;   // noise-free series; sampling adds sensor noise
};

/// Hours of pre-window history generated for every hourly series, so the
/// simulation can warm up and outside stations can reach before hour 0.
inline constexpr int kHistoryHours = 24;

struct City {
    CityConfig config;
    feat::StaticVolume static_volume;
    feat::DynamicSeries dynamic_series;
    std::vector<double> emission_base;     // per cell, ug/m3 per hour
    ExtendedSeries emission_factor;        // diurnal multiplier
    ExtendedSeries wind_dir_series;        // degrees the wind comes from
    ExtendedSeries wind_speed_series;      // m/s
    std::array<ExtendedSeries, 4> edge_inflow;  // boundary concentration
    std::vector<OutsideStation> outside_stations;
};

/// Deterministic city from the config seed: smoothed random static fields
/// (the first num_driver_channels drive emissions), diurnal dynamic fields,
/// point + area emission sources, wind series, and regional inflow series
/// shared by the upwind edges so outside stations carry real signal.
City generate_city(const CityConfig& config);

/// Low-level dispersion inputs, exposed so physics tests can drive the
/// scheme directly without a full city.
struct DispersionParams {
    int width = 0;
    int height = 0;
    double cell_km = 1.0;
    int hours = 0;
    int substeps = 0;  // 0 = auto from the stability bounds
    double diffusion_km2_h = 0.0;
    double decay_per_hour = 0.0;
    BoundaryMode boundary = BoundaryMode::closed;
    std::vector<double> flow_east_kmh;   // per hour
    std::vector<double> flow_north_kmh;  // per hour
    std::array<std::vector<double>, 4> edge_inflow;  // per edge per hour (inflow mode)
    std::vector<double> emission_base;    // per cell (empty = none)
    std::vector<double> emission_factor;  // per hour (empty = all 1)
    std::vector<double> initial;          // per cell (empty = zeros)
};

struct DispersionResult {
    std::vector<GridFrame> frames;  // state at the end of each hour
    std::size_t negative_clips = 0;
    int substeps_used = 0;
};

/// Explicit first-order-upwind advection + 5-point diffusion, sub-stepped
/// within each hour. Enforces D*dt/dx^2 <= 0.25 and (|u|+|v|)*dt/dx <= 1
/// before stepping; violating explicit substeps raise ConfigError.
DispersionResult simulate_dispersion(const DispersionParams& params);

/// City-level wrapper: dispersion of the city's emissions under its wind and
/// inflow series.
DispersionResult simulate_city(const City& city);

struct SampleSummary {
    std::size_t fixed_rows = 0;
    std::size_t mobile_rows = 0;
    std::size_t meteo_rows = 0;
};

/// Write fixed.csv, mobile.csv and meteo.csv (ingest schemas) into out_dir.
/// Fixed stations sit at seeded random cell centers and read truth plus
/// Gaussian noise; outside stations append their (noisy) extended series;
/// mobile vehicles walk the grid reading scale*truth + bias + noise.
SampleSummary sample_sensors(const City& city, const DispersionResult& truth,
                             const std::string& out_dir, const std::string& config_hash);

/// Write static_features.csv / dynamic_features.csv (ingest schemas).
void write_feature_files(const City& city, const std::string& out_dir,
                         const std::string& config_hash);

/// Write truth.csv (x,y,t,value, one row per cell-hour).
void write_truth(const DispersionResult& truth, const GridSpec& spec,
                 const std::string& out_dir, const std::string& config_hash);

std::vector<GridFrame> load_truth(const std::string& path, const GridSpec& spec);

}  // namespace deepmaps::synth
