#include "deepmaps/calibrate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <tuple>

#include <boost/math/distributions/fisher_f.hpp>

#include "deepmaps/csv.hpp"

namespace deepmaps::calibrate {

namespace {
constexpr int kNumCoef = 7;  // intercept + 6 covariates
}

std::vector<ColocatedPair> pair_colocated(const std::vector<Label>& fixed,
                                          const std::vector<ingest::MobileAggregate>& mobile) {
    std::map<std::tuple<int, int, int>, double> fixed_by_key;  // (t, y, x) -> pm25
    for (const auto& l : fixed) fixed_by_key[{l.t, l.cell.y, l.cell.x}] = l.pm25;

    std::vector<ColocatedPair> pairs;
    for (const auto& agg : mobile) {
        const auto it = fixed_by_key.find({agg.t, agg.cell.y, agg.cell.x});
        if (it == fixed_by_key.end()) continue;
        ColocatedPair p;
        p.cell = agg.cell;
        p.t = agg.t;
        p.fixed_pm25 = it->second;
        p.mobile_pm25 = agg.pm25_median;
        p.temp = agg.temp_mean;
        p.rh = agg.rh_mean;
        pairs.push_back(p);
    }
    return pairs;
}

double CalibrationModel::predict(double mobile_pm25, int hod, CellIndex cell, double temp,
                                 double rh) const {
    auto coef = [&](const char* name) {
        const auto it = coefficients.find(name);
        return it == coefficients.end() ? 0.0 : it->second;
    };
    return coef("intercept") + coef("mobile_pm25") * mobile_pm25 +
           coef("hour_of_day") * static_cast<double>(hod) +
           coef("cell_x") * static_cast<double>(cell.x) +
           coef("cell_y") * static_cast<double>(cell.y) + coef("temp") * temp +
           coef("rh") * rh;
}

CalibrationModel fit_calibration(const std::vector<ColocatedPair>& pairs,
                                 const GridSpec& spec) {
    CalibrationModel model;
    std::vector<std::array<double, kNumCoef>> rows;
    std::vector<double> y;
    for (const auto& p : pairs) {
        if (!p.temp || !p.rh) {
            ++model.n_skipped_incomplete;
            continue;
        }
        rows.push_back({1.0, p.mobile_pm25, static_cast<double>(hour_of_day(p.t, spec)),
                        static_cast<double>(p.cell.x), static_cast<double>(p.cell.y), *p.temp,
                        *p.rh});
        y.push_back(p.fixed_pm25);
    }
    const std::size_t n = rows.size();
    model.n_used = n;
    if (n < 3 * kNumCoef)
        throw InputError("fit_calibration: need at least " + std::to_string(3 * kNumCoef) +
                         " complete pairs, got " + std::to_string(n));

    // standardize the non-intercept columns; constant ones are collinear
    // with the intercept and reported as such
    std::array<double, kNumCoef> mean{};
    std::array<double, kNumCoef> scale{};
    scale[0] = 1.0;
    std::string collinear;
    for (int j = 1; j < kNumCoef; ++j) {
        double m = 0.0;
        for (const auto& r : rows) m += r[static_cast<std::size_t>(j)];
        m /= static_cast<double>(n);
        double var = 0.0;
        for (const auto& r : rows) {
            const double d = r[static_cast<std::size_t>(j)] - m;
            var += d * d;
        }
        var /= static_cast<double>(n);
        mean[static_cast<std::size_t>(j)] = m;
        if (var > 0.0) {
            scale[static_cast<std::size_t>(j)] = std::sqrt(var);
        } else {
            scale[static_cast<std::size_t>(j)] = 1.0;
            if (!collinear.empty()) collinear += ", ";
            collinear += kCoefficientNames[j];
        }
    }
    if (!collinear.empty())
        throw InputError("fit_calibration: design is rank-deficient; collinear columns: " +
                         collinear);

    auto z_at = [&](std::size_t r, int j) {
        return (rows[r][static_cast<std::size_t>(j)] - mean[static_cast<std::size_t>(j)]) /
               scale[static_cast<std::size_t>(j)];
    };

    // normal equations on the standardized design
    double a[kNumCoef][kNumCoef] = {};
    double b[kNumCoef] = {};
    for (std::size_t r = 0; r < n; ++r) {
        double z[kNumCoef];
        for (int j = 0; j < kNumCoef; ++j) z[j] = z_at(r, j);
        for (int i = 0; i < kNumCoef; ++i) {
            b[i] += z[i] * y[r];
            for (int j = i; j < kNumCoef; ++j) a[i][j] += z[i] * z[j];
        }
    }
    for (int i = 0; i < kNumCoef; ++i)
        for (int j = 0; j < i; ++j) a[i][j] = a[j][i];

    // pivoted Cholesky: A[p,p] = L L^T, pivoting on the largest residual
    // diagonal; stall below the rank tolerance means collinearity
    int perm[kNumCoef];
    for (int i = 0; i < kNumCoef; ++i) perm[i] = i;
    double l[kNumCoef][kNumCoef] = {};
    double max_diag = 0.0;
    for (int i = 0; i < kNumCoef; ++i) max_diag = std::max(max_diag, a[i][i]);
    const double tol = 1e-10 * max_diag;
    for (int k = 0; k < kNumCoef; ++k) {
        int best = k;
        double best_d = -1.0;
        for (int j = k; j < kNumCoef; ++j) {
            double d = a[perm[j]][perm[j]];
            for (int s = 0; s < k; ++s) d -= l[j][s] * l[j][s];
            if (d > best_d) {
                best_d = d;
                best = j;
            }
        }
        if (best_d < tol) {
            std::string names;
            for (int j = k; j < kNumCoef; ++j) {
                if (!names.empty()) names += ", ";
                names += kCoefficientNames[perm[j]];
            }
            throw InputError("fit_calibration: design is rank-deficient; collinear columns: " +
                             names);
        }
        std::swap(perm[k], perm[best]);
        for (int s = 0; s < k; ++s) std::swap(l[k][s], l[best][s]);
        double d = a[perm[k]][perm[k]];
        for (int s = 0; s < k; ++s) d -= l[k][s] * l[k][s];
        l[k][k] = std::sqrt(d);
        for (int j = k + 1; j < kNumCoef; ++j) {
            double v = a[perm[j]][perm[k]];
            for (int s = 0; s < k; ++s) v -= l[j][s] * l[k][s];
            l[j][k] = v / l[k][k];
        }
    }
    // solve L w = Pb, then L^T u = w, then undo the permutation
    double w[kNumCoef];
    for (int i = 0; i < kNumCoef; ++i) {
        double v = b[perm[i]];
        for (int s = 0; s < i; ++s) v -= l[i][s] * w[s];
        w[i] = v / l[i][i];
    }
    double u[kNumCoef];
    for (int i = kNumCoef - 1; i >= 0; --i) {
        double v = w[i];
        for (int s = i + 1; s < kNumCoef; ++s) v -= l[s][i] * u[s];
        u[i] = v / l[i][i];
    }
    double beta_z[kNumCoef];
    for (int i = 0; i < kNumCoef; ++i) beta_z[perm[i]] = u[i];

    // back to raw units
    double intercept = beta_z[0];
    for (int j = 1; j < kNumCoef; ++j)
        intercept -= beta_z[j] * mean[static_cast<std::size_t>(j)] /
                     scale[static_cast<std::size_t>(j)];
    model.coefficients["intercept"] = intercept;
    for (int j = 1; j < kNumCoef; ++j)
        model.coefficients[kCoefficientNames[j]] =
            beta_z[j] / scale[static_cast<std::size_t>(j)];

    double y_mean = 0.0;
    for (double v : y) y_mean += v;
    y_mean /= static_cast<double>(n);
    double sse = 0.0, sst = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        double fit = beta_z[0];
        for (int j = 1; j < kNumCoef; ++j) fit += beta_z[j] * z_at(r, j);
        sse += (y[r] - fit) * (y[r] - fit);
        sst += (y[r] - y_mean) * (y[r] - y_mean);
    }
    if (sst > 0.0) {
        model.r_squared = std::clamp(1.0 - sse / sst, 0.0, 1.0);
    } else {
        model.r_squared = 0.0;  // constant response
    }

    const int df1 = kNumCoef - 1;
    const int df2 = static_cast<int>(n) - kNumCoef;
    if (model.r_squared >= 1.0 - 1e-15) {
        model.f_statistic = std::numeric_limits<double>::infinity();
        model.p_value = 0.0;
    } else if (model.r_squared <= 0.0 || df2 <= 0) {
        model.f_statistic = 0.0;
        model.p_value = 1.0;
    } else {
        model.f_statistic =
            (model.r_squared / df1) / ((1.0 - model.r_squared) / df2);
        const boost::math::fisher_f dist(df1, df2);
        model.p_value = boost::math::cdf(boost::math::complement(dist, model.f_statistic));
    }
    return model;
}

ApplyResult apply_calibration(const CalibrationModel& model,
                              const std::vector<ingest::MobileAggregate>& aggregates,
                              const GridSpec& spec) {
    ApplyResult result;
    for (const auto& agg : aggregates) {
        if (!agg.temp_mean || !agg.rh_mean) {
            ++result.skipped_missing_covariates;
            continue;
        }
        Label label;
        label.cell = agg.cell;
        label.t = agg.t;
        label.source = LabelSource::mobile_calibrated;
        label.pm25 = std::max(0.0, model.predict(agg.pm25_median, hour_of_day(agg.t, spec),
                                                 agg.cell, *agg.temp_mean, *agg.rh_mean));
        result.labels.push_back(label);
    }
    return result;
}

std::vector<Label> labels_from_fixed(const std::vector<Observation>& obs,
                                     const GridSpec& spec) {
    std::map<std::tuple<int, int, int>, std::pair<double, int>> acc;  // (t,y,x) -> (sum, n)
    for (const auto& o : obs) {
        const auto cell = grid_index(o.lat, o.lon, spec);
        const auto t = hour_index(o.timestamp, spec);
        if (!cell || !t) continue;
        auto& slot = acc[{*t, cell->y, cell->x}];
        slot.first += o.pm25;
        ++slot.second;
    }
    std::vector<Label> out;
    out.reserve(acc.size());
    for (const auto& [key, slot] : acc) {
        Label l;
        l.cell = {std::get<2>(key), std::get<1>(key)};
        l.t = std::get<0>(key);
        l.pm25 = slot.first / slot.second;
        l.source = LabelSource::fixed;
        out.push_back(l);
    }
    return out;
}

LabelSet build_label_set(const std::vector<Label>& fixed,
                         const std::vector<Label>& mobile_cal) {
    std::map<std::tuple<int, int, int>, Label> by_key;
    auto insert_all = [&](const std::vector<Label>& labels, bool overwrite,
                          const char* which) {
        for (const auto& l : labels) {
            const std::tuple<int, int, int> key{l.t, l.cell.y, l.cell.x};
            const auto it = by_key.find(key);
            if (it == by_key.end()) {
                by_key.emplace(key, l);
            } else if (it->second.source == l.source) {
                throw InputError(std::string("build_label_set: duplicate (cell,t) inside the ") +
                                 which + " input");
            } else if (overwrite) {
                it->second = l;
            }
        }
    };
    insert_all(mobile_cal, false, "mobile");
    insert_all(fixed, true, "fixed");
    LabelSet set;
    set.labels.reserve(by_key.size());
    for (const auto& [key, l] : by_key) set.labels.push_back(l);
    return set;
}

void write_calibration_report(const CalibrationModel& model, const std::string& path,
                              const std::string& config_hash) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "# config=" << config_hash << "\n";
    for (const char* name : kCoefficientNames) {
        const auto it = model.coefficients.find(name);
        out << name << " = " << csv::fmt(it == model.coefficients.end() ? 0.0 : it->second)
            << "\n";
    }
    out << "r_squared = " << csv::fmt(model.r_squared) << "\n";
    out << "f_statistic = " << csv::fmt(model.f_statistic) << "\n";
    out << "p_value = " << csv::fmt(model.p_value) << "\n";
    out << "n_used = " << model.n_used << "\n";
    out << "n_skipped_incomplete = " << model.n_skipped_incomplete << "\n";
}

void save_labels(const LabelSet& labels, const std::string& path,
                 const std::string& config_hash) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "# config=" << config_hash << "\n";
    out << "x,y,t,pm25,source\n";
    for (const auto& l : labels.labels)
        out << l.cell.x << ',' << l.cell.y << ',' << l.t << ',' << csv::fmt(l.pm25) << ','
            << (l.source == LabelSource::fixed ? "fixed" : "mobile_calibrated") << "\n";
}

LabelSet load_labels(const std::string& path) {
    csv::Reader reader(path);
    reader.require_header({"x", "y", "t", "pm25", "source"});
    const int c_x = reader.column("x");
    const int c_y = reader.column("y");
    const int c_t = reader.column("t");
    const int c_pm = reader.column("pm25");
    const int c_src = reader.column("source");
    LabelSet set;
    std::vector<std::string> row;
    while (reader.next(row)) {
        std::int64_t x, y, t;
        Label l;
        const std::string& src = row[static_cast<std::size_t>(c_src)];
        if (!csv::parse_int(row[static_cast<std::size_t>(c_x)], x) ||
            !csv::parse_int(row[static_cast<std::size_t>(c_y)], y) ||
            !csv::parse_int(row[static_cast<std::size_t>(c_t)], t) ||
            !csv::parse_double(row[static_cast<std::size_t>(c_pm)], l.pm25) ||
            (src != "fixed" && src != "mobile_calibrated"))
            throw SchemaError(path + ": malformed label row " +
                              std::to_string(reader.data_rows_seen()));
        l.cell = {static_cast<int>(x), static_cast<int>(y)};
        l.t = static_cast<int>(t);
        l.source = src == "fixed" ? LabelSource::fixed : LabelSource::mobile_calibrated;
        set.labels.push_back(l);
    }
    std::sort(set.labels.begin(), set.labels.end(), [](const Label& a, const Label& b) {
        return std::tuple(a.t, a.cell.y, a.cell.x) < std::tuple(b.t, b.cell.y, b.cell.x);
    });
    return set;
}

}  // namespace deepmaps::calibrate
