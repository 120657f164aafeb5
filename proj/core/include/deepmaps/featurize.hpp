#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deepmaps/grid.hpp"

namespace deepmaps::feat {

/// Static urban features as channel planes, one width*height image per
/// channel (row-major, index = y*width + x).
struct StaticVolume {
    int width = 0;
    int height = 0;
    std::vector<std::string> names;
    std::vector<std::string> categories;
    std::vector<std::vector<double>> planes;

    int channels() const { return static_cast<int>(planes.size()); }
};

/// Hourly dynamic channels; planes[t][c] is one image.
struct DynamicSeries {
    int width = 0;
    int height = 0;
    int num_hours = 0;
    std::vector<std::string> names;
    std::vector<std::string> categories;
    std::vector<std::vector<std::vector<double>>> planes;

    int channels() const { return static_cast<int>(names.size()); }
};

/// Convolution input for hour t: the dynamic channels of hours t and t-1
/// stacked to depth 2*N_d. At t=0 the previous-hour slab replicates hour 0.
struct DynamicVolume {
    int width = 0;
    int height = 0;
    int t = 0;
    std::vector<std::vector<double>> planes;  // 2*N_d channel images

    int channels() const { return static_cast<int>(planes.size()); }
};

DynamicVolume dynamic_volume_at(const DynamicSeries& series, int t);

/// Filter families: kernel sizes A=3x3, B=5x5 (static), C=1x1, D=3x3,
/// E=5x5 (dynamic). Each filter channel is a k x k mean filter scaled by
/// one standard-normal weight.
enum class FilterFamily { A, B, C, D, E };

int kernel_size(FilterFamily family);

struct FilterBank {
    FilterFamily family = FilterFamily::A;
    int count = 0;     // filters in the bank (L or M)
    int channels = 0;  // input volume depth the bank applies to
    std::uint64_t seed = 0;
    std::vector<std::vector<double>> weights;  // [filter][channel], ~N(0,1)
};

/// Weights are drawn filter-major, channel-minor from a single engine
/// seeded with `seed`, so a bank is reproducible from its parameters.
FilterBank build_filter_bank(FilterFamily family, int count, int channels, std::uint64_t seed);

/// Convolved (rectified) feature channels; 2L planes for the static map,
/// 3M planes per hour for dynamic maps.
struct FeatureMap {
    int width = 0;
    int height = 0;
    std::vector<std::string> names;
    std::vector<std::vector<double>> planes;

    int channels() const { return static_cast<int>(planes.size()); }
};

/// Zero-padded stride-1 cross-correlation with banks A then B, rectified;
/// output channel order A^1..A^L, B^1..B^L.
FeatureMap convolve_static(const StaticVolume& volume, const FilterBank& bank_a,
                           const FilterBank& bank_b);

/// Same with families C, D, E on the stacked two-hour dynamic volume;
/// output order C then D then E (3M channels).
FeatureMap convolve_dynamic(const DynamicVolume& volume, const FilterBank& bank_c,
                            const FilterBank& bank_d, const FilterBank& bank_e);

/// One monitoring station outside the study area.
struct MacroStation {
    std::string id;
    double distance_km = 0.0;  // from the study-area centroid
    double bearing_deg = 0.0;  // 0 = north, clockwise
    int theta = 1;             // derived backward shift, hours
};

struct MacroConfig {
    std::vector<MacroStation> stations;
    std::vector<int> base_shifts{1, 2, 3, 6};  // Theta_0
    int gap_fill_hours = 3;
};

/// theta_i = clamp(round(d_i / mean_wind_kmh), 1, 12).
int derive_shift(double distance_km, double mean_wind_kmh);

/// Hourly pm25 series of an outside station; values[0] is the reading at
/// grid hour `start_offset` (negative offsets reach before the study).
struct ExternalSeries {
    std::string id;
    std::int64_t start_offset = 0;
    std::vector<std::optional<double>> values;
};

/// Forward-fill missing hours with the last reading, spending at most
/// `max_gap_hours` consecutive fills; the tail of a longer gap stays missing.
ExternalSeries gap_fill(const ExternalSeries& series, int max_gap_hours);

/// Column names "macro_{station}_{theta}", station-major, shifts ascending;
/// shifts per station = sorted unique union of Theta_0 and theta_i.
std::vector<std::string> macro_column_names(const MacroConfig& config);

/// Macro values at hour t, aligned with macro_column_names order. The row
/// is invalid when any required shifted value is missing after gap-filling
/// (series must already be gap-filled). Values are shared by every cell at
/// hour t.
struct MacroRow {
    bool valid = false;
    std::vector<double> values;
};
MacroRow macro_feature_rows(const std::vector<ExternalSeries>& filled_series,
                            const MacroConfig& config, int t);

enum class FeatureGroup { L, N, M };

std::string group_name(FeatureGroup group);

struct ColumnInfo {
    std::string name;
    FeatureGroup group = FeatureGroup::L;
    std::string category;
};

struct SampleKey {
    int x = 0;
    int y = 0;
    int t = 0;
    bool operator==(const SampleKey&) const = default;
};

/// Deterministic sample ordering: t-major, then y, then x.
bool sample_key_less(const SampleKey& a, const SampleKey& b);

struct FeatureMatrix {
    std::vector<SampleKey> keys;
    std::vector<ColumnInfo> columns;
    std::vector<std::vector<double>> values;  // column-major: values[c][row]
    std::vector<double> response;             // empty when unlabeled

    std::size_t rows() const { return keys.size(); }
    int num_columns() const { return static_cast<int>(columns.size()); }
    int column_index(const std::string& name) const;
    double cell_value(int column, std::size_t row) const { return values[column][row]; }
};

struct Selection {
    bool local = false;
    bool neighboring = false;
    bool macro = false;
};

/// Parse "L", "L+M", "N+M", "L+M+N", ... ; rejects unknown tokens.
Selection parse_selection(const std::string& text);
std::string selection_name(Selection selection);

struct FeatureInputs {
    const StaticVolume* static_volume = nullptr;
    const DynamicSeries* dynamic_series = nullptr;
    const FeatureMap* static_map = nullptr;                 // 2L channels
    const std::vector<FeatureMap>* dynamic_maps = nullptr;  // one per hour, 3M channels
    const std::vector<std::string>* macro_names = nullptr;
    const std::vector<MacroRow>* macro_rows = nullptr;      // one per hour
};

struct AssembleStats {
    std::size_t rows_in = 0;
    std::size_t rows_dropped_macro = 0;
};

/// Build the sample matrix for `keys` (sorted and deduplicated internally).
/// L columns = raw static + current-hour dynamic channels at the cell;
/// N columns = static map channels + that hour's dynamic map channels at
/// the cell; M columns = the hour's macro row. Rows whose macro row is
/// masked are dropped when the selection includes M.
FeatureMatrix assemble_matrix(const std::vector<SampleKey>& keys, const FeatureInputs& inputs,
                              Selection selection, AssembleStats* stats = nullptr);

/// Copy of `matrix` keeping only the columns of the selected groups (row set
/// and response unchanged). Selecting a group the matrix lacks is an error.
FeatureMatrix filter_matrix(const FeatureMatrix& matrix, Selection selection);

/// CSV export: "x,y,t,<columns...>" (+ optional pm25 response column) and a
/// sidecar "column,group,category" metadata table.
void export_matrix_csv(const FeatureMatrix& matrix, const std::string& path,
                       const std::string& config_hash);
void export_matrix_sidecar(const FeatureMatrix& matrix, const std::string& path,
                           const std::string& config_hash);
FeatureMatrix load_matrix_csv(const std::string& matrix_path, const std::string& sidecar_path);

}  // namespace deepmaps::feat
