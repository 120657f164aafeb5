#include "deepmaps/featurize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "deepmaps/csv.hpp"

namespace deepmaps::feat {

DynamicVolume dynamic_volume_at(const DynamicSeries& series, int t) {
    if (t < 0 || t >= series.num_hours)
        throw InputError("dynamic_volume_at: hour " + std::to_string(t) + " out of range");
    DynamicVolume v;
    v.width = series.width;
    v.height = series.height;
    v.t = t;
    const int prev = t > 0 ? t - 1 : 0;  // replicate hour 0 at the series start
    v.planes.reserve(2 * series.planes[t].size());
    for (const auto& plane : series.planes[t]) v.planes.push_back(plane);
    for (const auto& plane : series.planes[prev]) v.planes.push_back(plane);
    return v;
}

int kernel_size(FilterFamily family) {
    switch (family) {
        case FilterFamily::A: return 3;
        case FilterFamily::B: return 5;
        case FilterFamily::C: return 1;
        case FilterFamily::D: return 3;
        case FilterFamily::E: return 5;
    }
    return 3;
}

FilterBank build_filter_bank(FilterFamily family, int count, int channels, std::uint64_t seed) {
    if (count < 1 || channels < 1)
        throw ConfigError("build_filter_bank: count and channels must be >= 1");
    FilterBank bank;
    bank.family = family;
    bank.count = count;
    bank.channels = channels;
    bank.seed = seed;
    std::mt19937_64 engine(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    bank.weights.assign(count, std::vector<double>(channels));
    for (int i = 0; i < count; ++i)
        for (int c = 0; c < channels; ++c) bank.weights[i][c] = normal(engine);
    return bank;
}

namespace {

// Summed-area table with one extra row/column of zeros; box sums clamp to
// the raster, which is exactly the zero-padding contract.
struct Sat {
    int width, height;
    std::vector<double> s;  // (width+1) x (height+1)

    Sat(const std::vector<double>& plane, int w, int h) : width(w), height(h) {
        s.assign(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
        for (int y = 0; y < h; ++y) {
            double row = 0.0;
            for (int x = 0; x < w; ++x) {
                row += plane[static_cast<std::size_t>(y) * w + x];
                s[idx(x + 1, y + 1)] = s[idx(x + 1, y)] + row;
            }
        }
    }
    std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * (width + 1) + x; }

    double box(int x0, int y0, int x1, int y1) const {  // inclusive, pre-clamped
        return s[idx(x1 + 1, y1 + 1)] - s[idx(x0, y1 + 1)] - s[idx(x1 + 1, y0)] + s[idx(x0, y0)];
    }
};

// Per-channel k x k window sums (zero padding) for every cell.
std::vector<std::vector<double>> window_sums(const std::vector<std::vector<double>>& planes,
                                             int width, int height, int k) {
    const int r = k / 2;
    std::vector<std::vector<double>> out(planes.size());
    for (std::size_t c = 0; c < planes.size(); ++c) {
        if (k == 1) {
            out[c] = planes[c];
            continue;
        }
        Sat sat(planes[c], width, height);
        out[c].resize(static_cast<std::size_t>(width) * height);
        for (int y = 0; y < height; ++y) {
            const int y0 = std::max(0, y - r), y1 = std::min(height - 1, y + r);
            for (int x = 0; x < width; ++x) {
                const int x0 = std::max(0, x - r), x1 = std::min(width - 1, x + r);
                out[c][static_cast<std::size_t>(y) * width + x] = sat.box(x0, y0, x1, y1);
            }
        }
    }
    return out;
}

void apply_bank(const std::vector<std::vector<double>>& planes, int width, int height,
                const FilterBank& bank, const char* tag, FeatureMap& map) {
    if (static_cast<int>(planes.size()) != bank.channels)
        throw InputError(std::string("convolve: bank ") + tag + " expects depth " +
                         std::to_string(bank.channels) + ", volume has " +
                         std::to_string(planes.size()));
    const int k = kernel_size(bank.family);
    const double inv_k2 = 1.0 / (k * k);
    const auto sums = window_sums(planes, width, height, k);
    const std::size_t cells = static_cast<std::size_t>(width) * height;
    for (int i = 0; i < bank.count; ++i) {
        std::vector<double> plane(cells, 0.0);
        for (int c = 0; c < bank.channels; ++c) {
            const double w = bank.weights[i][c] * inv_k2;
            const auto& src = sums[c];
            for (std::size_t p = 0; p < cells; ++p) plane[p] += w * src[p];
        }
        for (double& v : plane) v = std::max(0.0, v);  // rectifier
        map.names.push_back(std::string("nbr_") + tag + std::to_string(i));
        map.planes.push_back(std::move(plane));
    }
}

}  // namespace

FeatureMap convolve_static(const StaticVolume& volume, const FilterBank& bank_a,
                           const FilterBank& bank_b) {
    FeatureMap map;
    map.width = volume.width;
    map.height = volume.height;
    apply_bank(volume.planes, volume.width, volume.height, bank_a, "a", map);
    apply_bank(volume.planes, volume.width, volume.height, bank_b, "b", map);
    return map;
}

FeatureMap convolve_dynamic(const DynamicVolume& volume, const FilterBank& bank_c,
                            const FilterBank& bank_d, const FilterBank& bank_e) {
    FeatureMap map;
    map.width = volume.width;
    map.height = volume.height;
    apply_bank(volume.planes, volume.width, volume.height, bank_c, "c", map);
    apply_bank(volume.planes, volume.width, volume.height, bank_d, "d", map);
    apply_bank(volume.planes, volume.width, volume.height, bank_e, "e", map);
    return map;
}

int derive_shift(double distance_km, double mean_wind_kmh) {
    if (!(mean_wind_kmh > 0.0)) return 12;
    const double raw = std::round(distance_km / mean_wind_kmh);
    return static_cast<int>(std::clamp(raw, 1.0, 12.0));
}

ExternalSeries gap_fill(const ExternalSeries& series, int max_gap_hours) {
    ExternalSeries out = series;
    int gap = 0;
    std::optional<double> last;
    for (auto& v : out.values) {
        if (v.has_value()) {
            last = v;
            gap = 0;
        } else if (last.has_value() && gap < max_gap_hours) {
            v = last;
            ++gap;
        } else {
            ++gap;
            last.reset();  // a too-long gap stops propagation entirely
        }
    }
    return out;
}

namespace {

std::vector<int> station_shifts(const MacroConfig& config, const MacroStation& station) {
    std::set<int> shifts(config.base_shifts.begin(), config.base_shifts.end());
    shifts.insert(station.theta);
    return {shifts.begin(), shifts.end()};
}

}  // namespace

std::vector<std::string> macro_column_names(const MacroConfig& config) {
    std::vector<std::string> names;
    for (const auto& station : config.stations)
        for (int theta : station_shifts(config, station))
            names.push_back("macro_" + station.id + "_" + std::to_string(theta));
    return names;
}

MacroRow macro_feature_rows(const std::vector<ExternalSeries>& filled_series,
                            const MacroConfig& config, int t) {
    MacroRow row;
    row.valid = true;
    for (const auto& station : config.stations) {
        const ExternalSeries* series = nullptr;
        for (const auto& s : filled_series)
            if (s.id == station.id) {
                series = &s;
                break;
            }
        if (series == nullptr) throw InputError("macro_feature_rows: no series for station " + station.id);
        for (int theta : station_shifts(config, station)) {
            const std::int64_t idx = static_cast<std::int64_t>(t) - theta - series->start_offset;
            if (idx < 0 || idx >= static_cast<std::int64_t>(series->values.size()) ||
                !series->values[static_cast<std::size_t>(idx)].has_value()) {
                row.valid = false;
                row.values.push_back(0.0);
            } else {
                row.values.push_back(*series->values[static_cast<std::size_t>(idx)]);
            }
        }
    }
    return row;
}

std::string group_name(FeatureGroup group) {
    switch (group) {
        case FeatureGroup::L: return "L";
        case FeatureGroup::N: return "N";
        case FeatureGroup::M: return "M";
    }
    return "?";
}

bool sample_key_less(const SampleKey& a, const SampleKey& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
}

int FeatureMatrix::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i].name == name) return static_cast<int>(i);
    return -1;
}

Selection parse_selection(const std::string& text) {
    Selection sel;
    std::string token;
    std::istringstream in(text);
    while (std::getline(in, token, '+')) {
        if (token == "L")
            sel.local = true;
        else if (token == "N")
            sel.neighboring = true;
        else if (token == "M")
            sel.macro = true;
        else
            throw ConfigError("unknown feature group '" + token + "' in selection '" + text + "'");
    }
    if (!sel.local && !sel.neighboring && !sel.macro)
        throw ConfigError("empty feature selection");
    return sel;
}

std::string selection_name(Selection s) {
    std::string out;
    auto add = [&out](const char* g) {
        if (!out.empty()) out += '+';
        out += g;
    };
    if (s.local) add("L");
    if (s.macro) add("M");
    if (s.neighboring) add("N");
    return out;
}

FeatureMatrix assemble_matrix(const std::vector<SampleKey>& keys, const FeatureInputs& inputs,
                              Selection selection, AssembleStats* stats) {
    if (!selection.local && !selection.neighboring && !selection.macro)
        throw ConfigError("assemble_matrix: empty feature selection");
    if (selection.local && (inputs.static_volume == nullptr || inputs.dynamic_series == nullptr))
        throw ConfigError("assemble_matrix: selection L requires static and dynamic volumes");
    if (selection.neighboring && (inputs.static_map == nullptr || inputs.dynamic_maps == nullptr))
        throw ConfigError("assemble_matrix: selection N requires convolved feature maps");
    if (selection.macro && (inputs.macro_names == nullptr || inputs.macro_rows == nullptr))
        throw ConfigError("assemble_matrix: selection M requires macro feature rows");

    std::vector<SampleKey> sorted = keys;
    std::sort(sorted.begin(), sorted.end(), sample_key_less);
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

    FeatureMatrix m;
    if (selection.local) {
        const auto& sv = *inputs.static_volume;
        for (int c = 0; c < sv.channels(); ++c)
            m.columns.push_back({sv.names[c], FeatureGroup::L, sv.categories[c]});
        const auto& ds = *inputs.dynamic_series;
        for (int c = 0; c < ds.channels(); ++c)
            m.columns.push_back({ds.names[c], FeatureGroup::L, ds.categories[c]});
    }
    if (selection.neighboring) {
        for (const auto& name : inputs.static_map->names)
            m.columns.push_back({name, FeatureGroup::N, "neighboring"});
        if (inputs.dynamic_maps->empty())
            throw ConfigError("assemble_matrix: dynamic feature maps are empty");
        for (const auto& name : inputs.dynamic_maps->front().names)
            m.columns.push_back({name, FeatureGroup::N, "neighboring"});
    }
    if (selection.macro) {
        for (const auto& name : *inputs.macro_names)
            m.columns.push_back({name, FeatureGroup::M, "macro"});
    }
    m.values.assign(m.columns.size(), {});

    AssembleStats local_stats;
    local_stats.rows_in = sorted.size();
    for (const auto& key : sorted) {
        if (selection.macro) {
            if (key.t < 0 || key.t >= static_cast<int>(inputs.macro_rows->size()) ||
                !(*inputs.macro_rows)[key.t].valid) {
                ++local_stats.rows_dropped_macro;
                continue;
            }
        }
        std::size_t col = 0;
        if (selection.local) {
            const std::size_t cell =
                static_cast<std::size_t>(key.y) * inputs.static_volume->width + key.x;
            for (const auto& plane : inputs.static_volume->planes) m.values[col++].push_back(plane[cell]);
            if (key.t < 0 || key.t >= inputs.dynamic_series->num_hours)
                throw InputError("assemble_matrix: hour " + std::to_string(key.t) +
                                 " outside the dynamic series");
            for (const auto& plane : inputs.dynamic_series->planes[key.t])
                m.values[col++].push_back(plane[cell]);
        }
        if (selection.neighboring) {
            const std::size_t ncell =
                static_cast<std::size_t>(key.y) * inputs.static_map->width + key.x;
            for (const auto& plane : inputs.static_map->planes) m.values[col++].push_back(plane[ncell]);
            if (key.t < 0 || key.t >= static_cast<int>(inputs.dynamic_maps->size()))
                throw InputError("assemble_matrix: hour " + std::to_string(key.t) +
                                 " outside the dynamic feature maps");
            for (const auto& plane : (*inputs.dynamic_maps)[key.t].planes)
                m.values[col++].push_back(plane[ncell]);
        }
        if (selection.macro) {
            for (double v : (*inputs.macro_rows)[key.t].values) m.values[col++].push_back(v);
        }
        m.keys.push_back(key);
    }
    if (stats != nullptr) *stats = local_stats;
    return m;
}

FeatureMatrix filter_matrix(const FeatureMatrix& matrix, Selection selection) {
    auto selected = [&](FeatureGroup g) {
        return (g == FeatureGroup::L && selection.local) ||
               (g == FeatureGroup::N && selection.neighboring) ||
               (g == FeatureGroup::M && selection.macro);
    };
    bool have_l = false, have_n = false, have_m = false;
    FeatureMatrix out;
    out.keys = matrix.keys;
    out.response = matrix.response;
    for (std::size_t c = 0; c < matrix.columns.size(); ++c) {
        const FeatureGroup g = matrix.columns[c].group;
        if (g == FeatureGroup::L) have_l = true;
        if (g == FeatureGroup::N) have_n = true;
        if (g == FeatureGroup::M) have_m = true;
        if (!selected(g)) continue;
        out.columns.push_back(matrix.columns[c]);
        out.values.push_back(matrix.values[c]);
    }
    if ((selection.local && !have_l) || (selection.neighboring && !have_n) ||
        (selection.macro && !have_m))
        throw InputError("filter_matrix: matrix lacks columns of the selected group " +
                         selection_name(selection));
    return out;
}

void export_matrix_csv(const FeatureMatrix& matrix, const std::string& path,
                       const std::string& config_hash) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    if (!config_hash.empty()) out << "# config=" << config_hash << "\n";
    out << "x,y,t";
    for (const auto& col : matrix.columns) out << ',' << col.name;
    const bool with_response = !matrix.response.empty();
    if (with_response) out << ",pm25";
    out << '\n';
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        out << matrix.keys[r].x << ',' << matrix.keys[r].y << ',' << matrix.keys[r].t;
        for (const auto& colvals : matrix.values) out << ',' << csv::fmt(colvals[r]);
        if (with_response) out << ',' << csv::fmt(matrix.response[r]);
        out << '\n';
    }
}

void export_matrix_sidecar(const FeatureMatrix& matrix, const std::string& path,
                           const std::string& config_hash) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    if (!config_hash.empty()) out << "# config=" << config_hash << "\n";
    out << "column,group,category\n";
    for (const auto& col : matrix.columns)
        out << col.name << ',' << group_name(col.group) << ',' << col.category << '\n';
}

FeatureMatrix load_matrix_csv(const std::string& matrix_path, const std::string& sidecar_path) {
    FeatureMatrix m;
    {
        csv::Reader side(sidecar_path);
        side.require_header({"column", "group", "category"});
        std::vector<std::string> f;
        while (side.next(f)) {
            if (f.size() != 3) throw SchemaError(sidecar_path + ": bad row");
            FeatureGroup g = f[1] == "L"   ? FeatureGroup::L
                             : f[1] == "N" ? FeatureGroup::N
                             : f[1] == "M" ? FeatureGroup::M
                                           : throw SchemaError(sidecar_path + ": bad group " + f[1]);
            m.columns.push_back({f[0], g, f[2]});
        }
    }
    csv::Reader reader(matrix_path);
    const auto& header = reader.header();
    if (header.size() < 3 || header[0] != "x" || header[1] != "y" || header[2] != "t")
        throw SchemaError(matrix_path + ": expected x,y,t leading columns");
    const bool with_response = !header.empty() && header.back() == "pm25";
    const std::size_t ncols = header.size() - 3 - (with_response ? 1 : 0);
    if (ncols != m.columns.size())
        throw SchemaError(matrix_path + ": column count does not match sidecar");
    for (std::size_t c = 0; c < ncols; ++c)
        if (header[3 + c] != m.columns[c].name)
            throw SchemaError(matrix_path + ": column '" + header[3 + c] +
                              "' does not match sidecar '" + m.columns[c].name + "'");
    m.values.assign(ncols, {});
    std::vector<std::string> f;
    while (reader.next(f)) {
        if (f.size() != header.size()) throw SchemaError(matrix_path + ": ragged row");
        std::int64_t x, y, t;
        if (!csv::parse_int(f[0], x) || !csv::parse_int(f[1], y) || !csv::parse_int(f[2], t))
            throw SchemaError(matrix_path + ": bad sample key");
        m.keys.push_back({static_cast<int>(x), static_cast<int>(y), static_cast<int>(t)});
        for (std::size_t c = 0; c < ncols; ++c) {
            double v;
            if (!csv::parse_double(f[3 + c], v)) throw SchemaError(matrix_path + ": bad value");
            m.values[c].push_back(v);
        }
        if (with_response) {
            double v;
            if (!csv::parse_double(f.back(), v)) throw SchemaError(matrix_path + ": bad response");
            m.response.push_back(v);
        }
    }
    return m;
}

}  // namespace deepmaps::feat
