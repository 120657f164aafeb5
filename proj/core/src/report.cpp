#include "deepmaps/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "deepmaps/csv.hpp"
#include "deepmaps/ingest.hpp"

namespace deepmaps::report {

namespace {

namespace fs = std::filesystem;

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    return out;
}

void require_written(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) throw IoError("failed writing " + path);
}

double field_double(const std::vector<std::string>& fields, int col, const std::string& path) {
    double v = 0.0;
    if (col < 0 || col >= static_cast<int>(fields.size()) ||
        !csv::parse_double(fields[static_cast<std::size_t>(col)], v)) {
        throw SchemaError(path + ": bad numeric field");
    }
    return v;
}

}  // namespace

void write_results_csv(const std::vector<pipeline::EvaluateRow>& rows, const std::string& path,
                       const std::string& config_hash) {
    std::ofstream out = open_out(path);
    out << "# config=" << config_hash << "\n";
    out << "method,features,rmse,smape,r2\n";
    for (const pipeline::EvaluateRow& row : rows) {
        out << row.method << ',' << row.features << ',' << csv::fmt(row.pooled.rmse) << ','
            << csv::fmt(row.pooled.smape) << ',' << csv::fmt(row.pooled.r_squared) << "\n";
    }
    require_written(out, path);
}

std::vector<pipeline::EvaluateRow> load_results_csv(const std::string& path) {
    csv::Reader reader(path);
    reader.require_header({"method", "features", "rmse", "smape", "r2"});
    std::vector<pipeline::EvaluateRow> rows;
    std::vector<std::string> fields;
    while (reader.next(fields)) {
        if (fields.size() != 5) throw SchemaError(path + ": expected 5 fields per row");
        pipeline::EvaluateRow row;
        row.method = fields[0];
        row.features = fields[1];
        row.pooled.rmse = field_double(fields, 2, path);
        row.pooled.smape = field_double(fields, 3, path);
        row.pooled.r_squared = field_double(fields, 4, path);
        rows.push_back(row);
    }
    return rows;
}

void write_ablation_csv(const std::vector<eval::AblationCurve>& curves, const std::string& path,
                        const std::string& config_hash) {
    std::ofstream out = open_out(path);
    out << "# config=" << config_hash << "\n";
    out << "fraction,rmse,smape,r2,seed\n";
    for (const eval::AblationCurve& curve : curves) {
        for (const eval::AblationPoint& point : curve.points) {
            out << csv::fmt(point.fraction) << ',' << csv::fmt(point.metrics.rmse) << ','
                << csv::fmt(point.metrics.smape) << ',' << csv::fmt(point.metrics.r_squared)
                << ',' << curve.seed << "\n";
        }
    }
    require_written(out, path);
}

std::vector<eval::AblationCurve> load_ablation_csv(const std::string& path) {
    csv::Reader reader(path);
    reader.require_header({"fraction", "rmse", "smape", "r2", "seed"});
    std::vector<eval::AblationCurve> curves;
    std::vector<std::string> fields;
    while (reader.next(fields)) {
        if (fields.size() != 5) throw SchemaError(path + ": expected 5 fields per row");
        std::int64_t seed = 0;
        if (!csv::parse_int(fields[4], seed)) throw SchemaError(path + ": bad seed field");
        const std::uint64_t useed = static_cast<std::uint64_t>(seed);
        if (curves.empty() || curves.back().seed != useed) {
            curves.push_back({useed, {}});
        }
        eval::AblationPoint point;
        point.fraction = field_double(fields, 0, path);
        point.metrics.rmse = field_double(fields, 1, path);
        point.metrics.smape = field_double(fields, 2, path);
        point.metrics.r_squared = field_double(fields, 3, path);
        curves.back().points.push_back(point);
    }
    return curves;
}

void write_importance_csv(const gbdt::ImportanceReport& importance, const std::string& path,
                          const std::string& config_hash) {
    std::ofstream out = open_out(path);
    out << "# config=" << config_hash << "\n";
    out << "kind,name,weight\n";
    for (const auto& [name, weight] : importance.per_column) {
        out << "column," << name << ',' << csv::fmt(weight) << "\n";
    }
    for (const auto& [name, weight] : importance.per_category) {
        out << "category," << name << ',' << csv::fmt(weight) << "\n";
    }
    for (const auto& [name, weight] : importance.per_macro_station) {
        out << "macro_station," << name << ',' << csv::fmt(weight) << "\n";
    }
    require_written(out, path);
}

gbdt::ImportanceReport load_importance_csv(const std::string& path) {
    csv::Reader reader(path);
    reader.require_header({"kind", "name", "weight"});
    gbdt::ImportanceReport importance;
    std::vector<std::string> fields;
    while (reader.next(fields)) {
        if (fields.size() != 3) throw SchemaError(path + ": expected 3 fields per row");
        const double weight = field_double(fields, 2, path);
        if (fields[0] == "column") {
            importance.per_column.emplace_back(fields[1], weight);
        } else if (fields[0] == "category") {
            importance.per_category.emplace_back(fields[1], weight);
        } else if (fields[0] == "macro_station") {
            importance.per_macro_station.emplace_back(fields[1], weight);
        } else {
            throw SchemaError(path + ": unknown importance kind '" + fields[0] + "'");
        }
    }
    return importance;
}

void write_raster_csv(const GridFrame& frame, const std::string& path,
                      const std::string& config_hash) {
    std::ofstream out = open_out(path);
    out << "# config=" << config_hash << "\n";
    out << "x,y,t,value\n";
    for (int y = 0; y < frame.height; ++y) {
        for (int x = 0; x < frame.width; ++x) {
            const std::size_t cell = static_cast<std::size_t>(y) * frame.width + x;
            if (!frame.mask[cell]) continue;
            out << x << ',' << y << ',' << frame.t << ',' << csv::fmt(frame.values[cell])
                << "\n";
        }
    }
    require_written(out, path);
}

GridFrame load_raster_csv(const std::string& path, const GridSpec& spec) {
    csv::Reader reader(path);
    reader.require_header({"x", "y", "t", "value"});
    GridFrame frame;
    frame.t = -1;
    frame.width = spec.width;
    frame.height = spec.height;
    const std::size_t cells = static_cast<std::size_t>(spec.width) * spec.height;
    frame.values.assign(cells, 0.0);
    frame.mask.assign(cells, 0);
    std::vector<std::string> fields;
    while (reader.next(fields)) {
        if (fields.size() != 4) throw SchemaError(path + ": expected 4 fields per row");
        std::int64_t x = 0, y = 0, t = 0;
        if (!csv::parse_int(fields[0], x) || !csv::parse_int(fields[1], y) ||
            !csv::parse_int(fields[2], t)) {
            throw SchemaError(path + ": bad coordinate field");
        }
        if (x < 0 || x >= spec.width || y < 0 || y >= spec.height) {
            throw SchemaError(path + ": cell (" + fields[0] + "," + fields[1] +
                              ") is outside the grid");
        }
        if (frame.t == -1) frame.t = static_cast<int>(t);
        if (frame.t != static_cast<int>(t)) {
            throw SchemaError(path + ": mixes hours " + std::to_string(frame.t) + " and " +
                              fields[2]);
        }
        const std::size_t cell = static_cast<std::size_t>(y) * spec.width +
                                 static_cast<std::size_t>(x);
        frame.values[cell] = field_double(fields, 3, path);
        frame.mask[cell] = 1;
    }
    if (frame.t == -1) frame.t = 0;  // fully masked hour: header-only file
    return frame;
}

void write_raster_pgm(const GridFrame& frame, const std::string& path, double lo, double hi) {
    const double span = hi > lo ? hi - lo : 1.0;
    std::ofstream out = open_out(path);
    out << "P2\n";
    out << "# scale: " << csv::fmt(lo) << " -> 0, " << csv::fmt(hi) << " -> 255; north up\n";
    out << frame.width << ' ' << frame.height << "\n255\n";
    for (int y = frame.height - 1; y >= 0; --y) {  // top row = highest y
        for (int x = 0; x < frame.width; ++x) {
            const std::size_t cell = static_cast<std::size_t>(y) * frame.width + x;
            int pixel = 0;
            if (frame.mask[cell]) {
                const double scaled = (frame.values[cell] - lo) / span * 255.0;
                pixel = static_cast<int>(std::lround(std::clamp(scaled, 0.0, 255.0)));
            }
            out << pixel << (x + 1 == frame.width ? "\n" : " ");
        }
    }
    require_written(out, path);
}

std::vector<std::size_t> wind_histogram(const std::vector<double>& directions_deg) {
    std::vector<std::size_t> bins(16, 0);
    for (double deg : directions_deg) {
        if (!std::isfinite(deg)) throw InputError("wind_histogram: non-finite direction");
        double norm = std::fmod(deg, 360.0);
        if (norm < 0.0) norm += 360.0;
        const std::size_t sector =
            static_cast<std::size_t>(std::lround(norm / 22.5)) % 16;
        ++bins[sector];
    }
    return bins;
}

std::string sector_label(std::size_t sector) {
    static const char* kLabels[16] = {"N",  "NNE", "NE", "ENE", "E",  "ESE", "SE", "SSE",
                                      "S",  "SSW", "SW", "WSW", "W",  "WNW", "NW", "NNW"};
    if (sector >= 16) throw InputError("sector_label: sector must be < 16");
    return kLabels[sector];
}

namespace {

std::string md_metrics_row(const std::string& a, const std::string& b,
                           const eval::Metrics& m) {
    return "| " + a + " | " + b + " | " + csv::fmt_short(m.rmse) + " | " +
           csv::fmt_short(m.smape) + " | " + csv::fmt_short(m.r_squared) + " |\n";
}

}  // namespace

std::string emit_report(const RunConfig& config) {
    const std::string hash = config_hash(config);
    const std::string out_dir = config.out_dir;

    const std::string results_path = out_dir + "/results.csv";
    const std::string importance_path = out_dir + "/importance.csv";
    const std::string meteo_path = config.data_dir + "/" + pipeline::kMeteoCsv;
    for (const std::string& required : {results_path, importance_path, meteo_path}) {
        if (!fs::exists(required)) throw IoError("report: missing artifact " + required);
    }

    const std::vector<pipeline::EvaluateRow> results = load_results_csv(results_path);
    const gbdt::ImportanceReport importance = load_importance_csv(importance_path);
    const std::vector<ingest::MeteoReading> meteo = ingest::load_meteo_readings(meteo_path);
    std::vector<double> directions;
    directions.reserve(meteo.size());
    for (const ingest::MeteoReading& reading : meteo) directions.push_back(reading.wind_dir);
    const std::vector<std::size_t> wind_bins = wind_histogram(directions);

    std::string md;
    md += "<!-- config=" + hash + " -->\n";
    md += "# Inference run report\n\n";
    md += "Config hash `" + hash + "`, grid " + std::to_string(config.grid.width) + "x" +
          std::to_string(config.grid.height) + " cells, " +
          std::to_string(config.grid.num_hours) + " hours.\n";

    md += "\n## Method comparison (pooled " + std::to_string(config.cv_folds) +
          "-fold cross-validation)\n\n";
    md += "| method | features | RMSE | SMAPE % | R2 |\n";
    md += "|---|---|---|---|---|\n";
    for (const pipeline::EvaluateRow& row : results) {
        md += md_metrics_row(row.method, row.features, row.pooled);
    }

    md += "\n## Top feature importances\n\n";
    md += "| rank | column | weight |\n|---|---|---|\n";
    const std::size_t top = std::min<std::size_t>(20, importance.per_column.size());
    for (std::size_t i = 0; i < top; ++i) {
        md += "| " + std::to_string(i + 1) + " | " + importance.per_column[i].first + " | " +
              csv::fmt_short(importance.per_column[i].second) + " |\n";
    }

    md += "\n## Importance by category\n\n";
    md += "| category | weight |\n|---|---|\n";
    for (const auto& [name, weight] : importance.per_category) {
        md += "| " + name + " | " + csv::fmt_short(weight) + " |\n";
    }

    md += "\n## Macro station weights\n\n";
    md += "Stations sorted by importance; the top entries point toward the "
          "dominant transport direction.\n\n";
    md += "| station | weight |\n|---|---|\n";
    for (const auto& [name, weight] : importance.per_macro_station) {
        md += "| " + name + " | " + csv::fmt_short(weight) + " |\n";
    }

    md += "\n## Wind direction histogram (16 sectors, direction wind comes from)\n\n";
    md += "| sector | hours | |\n|---|---|---|\n";
    const std::size_t peak = std::max<std::size_t>(
        1, *std::max_element(wind_bins.begin(), wind_bins.end()));
    for (std::size_t sector = 0; sector < wind_bins.size(); ++sector) {
        const std::size_t bar = (wind_bins[sector] * 40 + peak - 1) / peak;
        md += "| " + sector_label(sector) + " | " + std::to_string(wind_bins[sector]) +
              " | " + std::string(bar, '#') + " |\n";
    }

    const std::string ablation_path = out_dir + "/ablation.csv";
    if (fs::exists(ablation_path)) {
        md += "\n## Mobile coverage ablation\n\n";
        md += "| fraction % | RMSE | SMAPE % | R2 | seed |\n|---|---|---|---|---|\n";
        for (const eval::AblationCurve& curve : load_ablation_csv(ablation_path)) {
            for (const eval::AblationPoint& point : curve.points) {
                md += "| " + csv::fmt_short(point.fraction) + " | " +
                      csv::fmt_short(point.metrics.rmse) + " | " +
                      csv::fmt_short(point.metrics.smape) + " | " +
                      csv::fmt_short(point.metrics.r_squared) + " | " +
                      std::to_string(curve.seed) + " |\n";
            }
        }
    }

    const std::string rasters_dir = out_dir + "/rasters";
    if (fs::is_directory(rasters_dir)) {
        std::vector<std::string> raster_files;
        for (const fs::directory_entry& entry : fs::directory_iterator(rasters_dir)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("raster_", 0) == 0 && name.size() > 4 &&
                name.substr(name.size() - 4) == ".csv") {
                raster_files.push_back(entry.path().string());
            }
        }
        std::sort(raster_files.begin(), raster_files.end());

        std::vector<GridFrame> frames;
        frames.reserve(raster_files.size());
        double lo = 0.0, hi = 0.0;
        bool any_value = false;
        for (const std::string& file : raster_files) {
            frames.push_back(load_raster_csv(file, config.grid));
            const GridFrame& frame = frames.back();
            for (std::size_t cell = 0; cell < frame.values.size(); ++cell) {
                if (!frame.mask[cell]) continue;
                if (!any_value) {
                    lo = hi = frame.values[cell];
                    any_value = true;
                } else {
                    lo = std::min(lo, frame.values[cell]);
                    hi = std::max(hi, frame.values[cell]);
                }
            }
        }
        std::size_t masked_frames = 0;
        for (std::size_t i = 0; i < raster_files.size(); ++i) {
            std::string pgm = raster_files[i];
            pgm.replace(pgm.size() - 4, 4, ".pgm");
            write_raster_pgm(frames[i], pgm, lo, hi);
            bool all_masked = true;
            for (std::uint8_t m : frames[i].mask) all_masked = all_masked && !m;
            masked_frames += all_masked;
        }
        {
            std::ofstream scale = open_out(rasters_dir + "/raster_scale.txt");
            scale << "# config=" << hash << "\n";
            scale << "lo=" << csv::fmt(lo) << "\n";
            scale << "hi=" << csv::fmt(hi) << "\n";
            scale << "mapping=linear [lo,hi] -> [0,255]\n";
            scale << "orientation=north-up (top image row is the highest y)\n";
            require_written(scale, rasters_dir + "/raster_scale.txt");
        }
        md += "\n## Rasters\n\n";
        md += std::to_string(raster_files.size()) + " hourly rasters rendered to PGM (" +
              std::to_string(masked_frames) + " fully masked); values " + csv::fmt_short(lo) +
              " to " + csv::fmt_short(hi) + " mapped to 0..255.\n";
    }

    const std::string report_path = out_dir + "/report.md";
    std::ofstream out = open_out(report_path);
    out << md;
    require_written(out, report_path);
    return md;
}

}  // namespace deepmaps::report
