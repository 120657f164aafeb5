#include "deepmaps/runconfig.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <functional>

#include "deepmaps/csv.hpp"
#include "deepmaps/rng.hpp"

namespace deepmaps {

namespace {

std::string boundary_name(synth::BoundaryMode mode) {
    return mode == synth::BoundaryMode::closed ? "closed" : "inflow";
}

synth::BoundaryMode parse_boundary(const std::string& text) {
    if (text == "closed") return synth::BoundaryMode::closed;
    if (text == "inflow") return synth::BoundaryMode::inflow;
    throw ConfigError("unknown boundary mode '" + text + "' (closed, inflow)");
}

std::string split_mode_name(eval::SplitMode mode) {
    return mode == eval::SplitMode::random ? "random" : "grid_grouped";
}

double to_double(const std::string& key, const std::string& value) {
    double out = 0.0;
    if (!csv::parse_double(value, out)) {
        throw ConfigError(key + ": cannot parse '" + value + "' as a number");
    }
    return out;
}

int to_int(const std::string& key, const std::string& value) {
    std::int64_t out = 0;
    if (!csv::parse_int(value, out) || out < INT32_MIN || out > INT32_MAX) {
        throw ConfigError(key + ": cannot parse '" + value + "' as an integer");
    }
    return static_cast<int>(out);
}

std::int64_t to_int64(const std::string& key, const std::string& value) {
    std::int64_t out = 0;
    if (!csv::parse_int(value, out)) {
        throw ConfigError(key + ": cannot parse '" + value + "' as an integer");
    }
    return out;
}

std::uint64_t to_uint64(const std::string& key, const std::string& value) {
    if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos) {
        throw ConfigError(key + ": cannot parse '" + value + "' as an unsigned integer");
    }
    try {
        return std::stoull(value);
    } catch (const std::exception&) {
        throw ConfigError(key + ": '" + value + "' is out of range");
    }
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> parts;
    std::string current;
    for (char c : value) {
        if (c == ',') {
            parts.push_back(current);
            current.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            current.push_back(c);
        }
    }
    parts.push_back(current);
    return parts;
}

std::vector<int> to_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    for (const std::string& part : split_list(value)) out.push_back(to_int(key, part));
    return out;
}

std::vector<double> to_double_list(const std::string& key, const std::string& value) {
    std::vector<double> out;
    for (const std::string& part : split_list(value)) out.push_back(to_double(key, part));
    return out;
}

std::string join_ints(const std::vector<int>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(values[i]);
    }
    return out;
}

std::string join_doubles(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        out += csv::fmt(values[i]);
    }
    return out;
}

struct Entry {
    const char* key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

// The one table both the parser and the printer walk; order here is the
// resolved-text order (grouped by section, alphabetical inside).
const std::vector<Entry>& entries() {
    static const std::vector<Entry> table = {
        {"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = to_uint64(k, v); }},
        {"io.data_dir", [](const RunConfig& c) { return c.data_dir; },
         [](RunConfig& c, const std::string&, const std::string& v) { c.data_dir = v; }},
        {"io.out_dir", [](const RunConfig& c) { return c.out_dir; },
         [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; }},

        {"grid.origin_lat", [](const RunConfig& c) { return csv::fmt(c.grid.origin_lat); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.grid.origin_lat = to_double(k, v); }},
        {"grid.origin_lon", [](const RunConfig& c) { return csv::fmt(c.grid.origin_lon); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.grid.origin_lon = to_double(k, v); }},
        {"grid.cell_km", [](const RunConfig& c) { return csv::fmt(c.grid.cell_size_km); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.grid.cell_size_km = to_double(k, v); }},
        {"grid.width", [](const RunConfig& c) { return std::to_string(c.grid.width); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.grid.width = to_int(k, v); }},
        {"grid.height", [](const RunConfig& c) { return std::to_string(c.grid.height); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.grid.height = to_int(k, v); }},
        {"grid.start_hour", [](const RunConfig& c) { return std::to_string(c.grid.start_time); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.grid.start_time = to_int64(k, v); }},
        {"grid.hours", [](const RunConfig& c) { return std::to_string(c.grid.num_hours); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.grid.num_hours = to_int(k, v); }},

        {"features.static_filters", [](const RunConfig& c) { return std::to_string(c.static_filters); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.static_filters = to_int(k, v); }},
        {"features.dynamic_filters", [](const RunConfig& c) { return std::to_string(c.dynamic_filters); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.dynamic_filters = to_int(k, v); }},
        {"features.macro_shifts", [](const RunConfig& c) { return join_ints(c.macro_shifts); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.macro_shifts = to_int_list(k, v); }},
        {"features.gap_fill_hours", [](const RunConfig& c) { return std::to_string(c.gap_fill_hours); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.gap_fill_hours = to_int(k, v); }},

        {"gbdt.trees", [](const RunConfig& c) { return std::to_string(c.gbdt.num_trees); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.gbdt.num_trees = to_int(k, v); }},
        {"gbdt.max_depth", [](const RunConfig& c) { return std::to_string(c.gbdt.max_depth); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.gbdt.max_depth = to_int(k, v); }},
        {"gbdt.learning_rate", [](const RunConfig& c) { return csv::fmt(c.gbdt.learning_rate); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.gbdt.learning_rate = to_double(k, v); }},
        {"gbdt.min_samples_leaf", [](const RunConfig& c) { return std::to_string(c.gbdt.min_samples_leaf); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.gbdt.min_samples_leaf = to_int(k, v); }},
        {"gbdt.row_subsample", [](const RunConfig& c) { return csv::fmt(c.gbdt.row_subsample); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.gbdt.row_subsample = to_double(k, v); }},
        {"gbdt.feature_subsample", [](const RunConfig& c) { return csv::fmt(c.gbdt.feature_subsample); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.gbdt.feature_subsample = to_double(k, v); }},
        {"gbdt.histogram_bins", [](const RunConfig& c) { return std::to_string(c.gbdt.histogram_bins); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.gbdt.histogram_bins = to_int(k, v); }},

        {"cv.folds", [](const RunConfig& c) { return std::to_string(c.cv_folds); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.cv_folds = to_int(k, v); }},
        {"cv.mode", [](const RunConfig& c) { return split_mode_name(c.cv_mode); },
         [](RunConfig& c, const std::string&, const std::string& v) { c.cv_mode = eval::parse_split_mode(v); }},
        {"cv.knn_k", [](const RunConfig& c) { return std::to_string(c.knn_k); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.knn_k = to_int(k, v); }},
        {"cv.idw_power", [](const RunConfig& c) { return csv::fmt(c.idw_power); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.idw_power = to_double(k, v); }},
        {"ablate.fractions", [](const RunConfig& c) { return join_doubles(c.ablation_fractions); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.ablation_fractions = to_double_list(k, v); }},
        {"ablate.test_fraction", [](const RunConfig& c) { return csv::fmt(c.ablation_test_fraction); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.ablation_test_fraction = to_double(k, v); }},

        {"city.static_channels", [](const RunConfig& c) { return std::to_string(c.city.num_static); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.num_static = to_int(k, v); }},
        {"city.dynamic_channels", [](const RunConfig& c) { return std::to_string(c.city.num_dynamic); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.num_dynamic = to_int(k, v); }},
        {"city.driver_channels", [](const RunConfig& c) { return std::to_string(c.city.num_driver_channels); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.num_driver_channels = to_int(k, v); }},
        {"city.sources", [](const RunConfig& c) { return std::to_string(c.city.num_sources); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.num_sources = to_int(k, v); }},
        {"city.source_strength", [](const RunConfig& c) { return csv::fmt(c.city.source_strength); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.source_strength = to_double(k, v); }},
        {"city.area_source_scale", [](const RunConfig& c) { return csv::fmt(c.city.area_source_scale); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.area_source_scale = to_double(k, v); }},
        {"city.wind_speed_ms", [](const RunConfig& c) { return csv::fmt(c.city.wind_speed_ms); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.wind_speed_ms = to_double(k, v); }},
        {"city.wind_dir_deg", [](const RunConfig& c) { return csv::fmt(c.city.wind_dir_deg); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.wind_dir_deg = to_double(k, v); }},
        {"city.wind_dir_jitter", [](const RunConfig& c) { return csv::fmt(c.city.wind_dir_jitter); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.wind_dir_jitter = to_double(k, v); }},
        {"city.diffusion_km2_h", [](const RunConfig& c) { return csv::fmt(c.city.diffusion_km2_h); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.diffusion_km2_h = to_double(k, v); }},
        {"city.decay_per_hour", [](const RunConfig& c) { return csv::fmt(c.city.decay_per_hour); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.decay_per_hour = to_double(k, v); }},
        {"city.substeps", [](const RunConfig& c) { return std::to_string(c.city.substeps); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.substeps = to_int(k, v); }},
        {"city.boundary", [](const RunConfig& c) { return boundary_name(c.city.boundary); },
         [](RunConfig& c, const std::string&, const std::string& v) { c.city.boundary = parse_boundary(v); }},
        {"city.inflow_base", [](const RunConfig& c) { return csv::fmt(c.city.inflow_base); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.inflow_base = to_double(k, v); }},
        {"city.inflow_amplitude", [](const RunConfig& c) { return csv::fmt(c.city.inflow_amplitude); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.inflow_amplitude = to_double(k, v); }},
        {"city.edge_north", [](const RunConfig& c) { return csv::fmt(c.city.edge_weight[0]); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.edge_weight[0] = to_double(k, v); }},
        {"city.edge_east", [](const RunConfig& c) { return csv::fmt(c.city.edge_weight[1]); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.edge_weight[1] = to_double(k, v); }},
        {"city.edge_south", [](const RunConfig& c) { return csv::fmt(c.city.edge_weight[2]); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.edge_weight[2] = to_double(k, v); }},
        {"city.edge_west", [](const RunConfig& c) { return csv::fmt(c.city.edge_weight[3]); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.edge_weight[3] = to_double(k, v); }},
        {"city.fixed_stations", [](const RunConfig& c) { return std::to_string(c.city.num_fixed_stations); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.num_fixed_stations = to_int(k, v); }},
        {"city.mobile_vehicles", [](const RunConfig& c) { return std::to_string(c.city.num_mobile_vehicles); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.num_mobile_vehicles = to_int(k, v); }},
        {"city.outside_stations", [](const RunConfig& c) { return std::to_string(c.city.num_outside_stations); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.num_outside_stations = to_int(k, v); }},
        {"city.meteo_stations", [](const RunConfig& c) { return std::to_string(c.city.num_meteo_stations); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.num_meteo_stations = to_int(k, v); }},
        {"city.sensor_noise_sd", [](const RunConfig& c) { return csv::fmt(c.city.sensor_noise_sd); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.sensor_noise_sd = to_double(k, v); }},
        {"city.mobile_scale", [](const RunConfig& c) { return csv::fmt(c.city.mobile_scale); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.mobile_scale = to_double(k, v); }},
        {"city.mobile_bias", [](const RunConfig& c) { return csv::fmt(c.city.mobile_bias); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.mobile_bias = to_double(k, v); }},
        {"city.mobile_noise_sd", [](const RunConfig& c) { return csv::fmt(c.city.mobile_noise_sd); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.city.mobile_noise_sd = to_double(k, v); }},
    };
    return table;
}

const Entry* find_entry(const std::string& key) {
    for (const Entry& entry : entries()) {
        if (key == entry.key) return &entry;
    }
    return nullptr;
}

}  // namespace

void RunConfig::finalize() {
    city.grid = grid;
    city.seed = seed;

    grid.validate();
    gbdt.validate();
    city.validate();

    if (static_filters < 1) throw ConfigError("features.static_filters must be >= 1");
    if (dynamic_filters < 1) throw ConfigError("features.dynamic_filters must be >= 1");
    if (macro_shifts.empty()) throw ConfigError("features.macro_shifts must not be empty");
    for (int shift : macro_shifts) {
        if (shift < 1) throw ConfigError("features.macro_shifts entries must be >= 1");
    }
    if (gap_fill_hours < 0) throw ConfigError("features.gap_fill_hours must be >= 0");
    if (cv_folds < 2) throw ConfigError("cv.folds must be >= 2");
    if (knn_k < 1) throw ConfigError("cv.knn_k must be >= 1");
    if (idw_power <= 0.0) throw ConfigError("cv.idw_power must be > 0");
    if (ablation_fractions.empty()) throw ConfigError("ablate.fractions must not be empty");
    for (std::size_t i = 0; i < ablation_fractions.size(); ++i) {
        const double f = ablation_fractions[i];
        if (f < 0.0 || f > 100.0) throw ConfigError("ablate.fractions must lie in [0, 100]");
        if (i > 0 && f <= ablation_fractions[i - 1]) {
            throw ConfigError("ablate.fractions must be strictly increasing");
        }
    }
    if (ablation_test_fraction <= 0.0 || ablation_test_fraction >= 1.0) {
        throw ConfigError("ablate.test_fraction must be in (0, 1)");
    }
}

std::vector<std::string> run_config_keys() {
    std::vector<std::string> keys;
    keys.reserve(entries().size());
    for (const Entry& entry : entries()) keys.push_back(entry.key);
    return keys;
}

void set_run_config_value(RunConfig& config, const std::string& key, const std::string& value) {
    const Entry* entry = find_entry(key);
    if (!entry) throw ConfigError("unknown config key '" + key + "'");
    entry->set(config, key, value);
}

std::string get_run_config_value(const RunConfig& config, const std::string& key) {
    const Entry* entry = find_entry(key);
    if (!entry) throw ConfigError("unknown config key '" + key + "'");
    return entry->get(config);
}

RunConfig parse_run_config(std::istream& in, const std::string& source_name) {
    RunConfig config;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string trimmed = line;
        const auto first = trimmed.find_first_not_of(" \t");
        trimmed = first == std::string::npos ? "" : trimmed.substr(first);
        if (trimmed.empty() || trimmed[0] == '#') continue;

        const auto eq = trimmed.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source_name + ":" + std::to_string(line_no) +
                              ": expected key=value, got '" + trimmed + "'");
        }
        std::string key = trimmed.substr(0, eq);
        std::string value = trimmed.substr(eq + 1);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        const auto vstart = value.find_first_not_of(" \t");
        value = vstart == std::string::npos ? "" : value.substr(vstart);
        while (!value.empty() && (value.back() == ' ' || value.back() == '\t')) value.pop_back();

        try {
            set_run_config_value(config, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(source_name + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    config.finalize();
    return config;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    return parse_run_config(in, path);
}

std::string resolved_text(const RunConfig& config) {
    std::vector<std::string> lines;
    lines.reserve(entries().size());
    for (const Entry& entry : entries()) {
        lines.push_back(std::string(entry.key) + "=" + entry.get(config));
    }
    std::sort(lines.begin(), lines.end());
    std::string text;
    for (const std::string& line : lines) {
        text += line;
        text += '\n';
    }
    return text;
}

std::string config_hash(const RunConfig& config) {
    const std::string text = resolved_text(config);
    const std::uint64_t h = fnv1a64(text);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

void write_resolved_config(const RunConfig& config, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write resolved config to " + path);
    out << "# config=" << config_hash(config) << "\n" << resolved_text(config);
    if (!out) throw IoError("failed writing resolved config to " + path);
}

}  // namespace deepmaps
