#include "deepmaps/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace deepmaps::baselines {

namespace {
constexpr double kSnapKm = 1e-9;

double dist(const KmPoint& a, const KmPoint& b) {
    const double dx = a.east - b.east;
    const double dy = a.north - b.north;
    return std::sqrt(dx * dx + dy * dy);
}
}  // namespace

double idw_interpolate(const std::vector<SpatialSample>& sources, const KmPoint& query,
                       double power) {
    if (sources.empty()) throw InputError("idw_interpolate: no sources");
    if (!(power > 0.0)) throw ConfigError("idw_interpolate: power must be > 0");
    double wsum = 0.0;
    double vsum = 0.0;
    for (const auto& s : sources) {
        const double d = dist(s.pos, query);
        if (d < kSnapKm) return s.value;
        const double w = std::pow(d, -power);
        wsum += w;
        vsum += w * s.value;
    }
    return vsum / wsum;
}

std::vector<SpatialSample> average_duplicates(const std::vector<SpatialSample>& sources,
                                              double snap_km) {
    std::vector<SpatialSample> merged;
    std::vector<std::size_t> counts;
    for (const auto& s : sources) {
        bool found = false;
        for (std::size_t i = 0; i < merged.size(); ++i) {
            if (dist(merged[i].pos, s.pos) < snap_km) {
                merged[i].value += s.value;
                ++counts[i];
                found = true;
                break;
            }
        }
        if (!found) {
            merged.push_back(s);
            counts.push_back(1);
        }
    }
    for (std::size_t i = 0; i < merged.size(); ++i)
        merged[i].value /= static_cast<double>(counts[i]);
    return merged;
}

double VariogramModel::value(double h) const {
    return nugget + partial_sill * (1.0 - std::exp(-3.0 * h / range_km));
}

std::vector<VariogramBin> empirical_variogram(const std::vector<SpatialSample>& samples,
                                              int max_bins) {
    if (max_bins < 1) throw ConfigError("empirical_variogram: max_bins must be >= 1");
    const std::size_t n = samples.size();
    double d_max = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) d_max = std::max(d_max, dist(samples[i].pos, samples[j].pos));
    if (d_max <= 0.0) throw InputError("empirical_variogram: all sites coincide");

    struct Acc {
        double dist_sum = 0.0;
        double sq_sum = 0.0;
        std::size_t pairs = 0;
    };
    std::vector<Acc> acc(static_cast<std::size_t>(max_bins));
    const double width = d_max / max_bins;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double h = dist(samples[i].pos, samples[j].pos);
            if (h < kSnapKm) continue;
            const int b = std::min(max_bins - 1, static_cast<int>(h / width));
            auto& a = acc[static_cast<std::size_t>(b)];
            const double dv = samples[i].value - samples[j].value;
            a.dist_sum += h;
            a.sq_sum += dv * dv;
            ++a.pairs;
        }
    }
    std::vector<VariogramBin> bins;
    for (const auto& a : acc) {
        if (a.pairs == 0) continue;
        const double np = static_cast<double>(a.pairs);
        bins.push_back({a.dist_sum / np, a.sq_sum / (2.0 * np), a.pairs});
    }
    return bins;
}

namespace {

struct NuggetSillFit {
    double c0 = 0.0;
    double c1 = 0.0;
    double sse = 0.0;
};

// For a fixed range, the model is linear in (c0, c1): weighted 2x2 normal
// equations, then project onto c0 >= 0, c1 >= 0.
NuggetSillFit solve_for_range(const std::vector<VariogramBin>& bins, double range_km) {
    double sw = 0.0, swg = 0.0, swgg = 0.0, swy = 0.0, swgy = 0.0;
    for (const auto& b : bins) {
        const double w = static_cast<double>(b.pairs);
        const double g = 1.0 - std::exp(-3.0 * b.mean_distance / range_km);
        sw += w;
        swg += w * g;
        swgg += w * g * g;
        swy += w * b.gamma;
        swgy += w * g * b.gamma;
    }
    Eigen::Matrix2d a;
    a << sw, swg, swg, swgg;
    Eigen::Vector2d rhs(swy, swgy);
    NuggetSillFit fit;
    const double det = a.determinant();
    if (std::abs(det) > 1e-12 * sw * std::max(swgg, 1e-30)) {
        Eigen::Vector2d x = a.fullPivLu().solve(rhs);
        fit.c0 = x[0];
        fit.c1 = x[1];
    } else {
        fit.c0 = -1.0;  // force the constrained branches below
    }
    if (fit.c0 < 0.0) {
        fit.c0 = 0.0;
        fit.c1 = swgg > 0.0 ? swgy / swgg : 0.0;
    }
    if (fit.c1 < 0.0) {
        fit.c1 = 0.0;
        fit.c0 = sw > 0.0 ? swy / sw : 0.0;
        if (fit.c0 < 0.0) fit.c0 = 0.0;
    }
    double sse = 0.0;
    for (const auto& b : bins) {
        const double g = 1.0 - std::exp(-3.0 * b.mean_distance / range_km);
        const double r = b.gamma - fit.c0 - fit.c1 * g;
        sse += static_cast<double>(b.pairs) * r * r;
    }
    fit.sse = sse;
    return fit;
}

}  // namespace

VariogramModel fit_variogram(const std::vector<SpatialSample>& samples, int max_bins) {
    if (samples.size() < 10)
        throw InputError("fit_variogram: need at least 10 samples");
    const auto distinct = average_duplicates(samples);
    if (distinct.size() < 2)
        throw InputError("fit_variogram: need at least 2 distinct sites");

    const auto bins = empirical_variogram(samples, max_bins);
    double d_max = 0.0;
    double gamma_max = 0.0;
    for (const auto& b : bins) {
        d_max = std::max(d_max, b.mean_distance);
        gamma_max = std::max(gamma_max, b.gamma);
    }
    VariogramModel model;
    model.range_km = std::max(d_max / 3.0, 1e-6);
    if (gamma_max <= 0.0) return model;  // constant field: c0 = c1 = 0

    // coarse log-spaced scan over the range, then golden-section refinement
    const double a_lo = std::max(d_max * 1e-3, 1e-6);
    const double a_hi = 4.0 * d_max;
    const int scan = 64;
    int best_idx = 0;
    double best_sse = std::numeric_limits<double>::infinity();
    std::vector<double> cand(scan);
    for (int i = 0; i < scan; ++i) {
        const double t = static_cast<double>(i) / (scan - 1);
        cand[i] = a_lo * std::pow(a_hi / a_lo, t);
        const double sse = solve_for_range(bins, cand[i]).sse;
        if (sse < best_sse) {
            best_sse = sse;
            best_idx = i;
        }
    }
    double lo = cand[std::max(0, best_idx - 1)];
    double hi = cand[std::min(scan - 1, best_idx + 1)];
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - phi * (hi - lo);
    double x2 = lo + phi * (hi - lo);
    double f1 = solve_for_range(bins, x1).sse;
    double f2 = solve_for_range(bins, x2).sse;
    for (int it = 0; it < 60 && hi - lo > 1e-9 * d_max; ++it) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = solve_for_range(bins, x1).sse;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = solve_for_range(bins, x2).sse;
        }
    }
    const double a_best = (f1 <= f2) ? x1 : x2;
    const auto fit = solve_for_range(bins, a_best);
    model.range_km = a_best;
    model.nugget = fit.c0;
    model.partial_sill = fit.c1;
    return model;
}

KrigingSystem build_kriging_system(std::vector<SpatialSample> sources,
                                   const VariogramModel& model) {
    if (sources.empty()) throw InputError("kriging: no sources");
    KrigingSystem sys;
    sys.model = model;
    sys.sources = std::move(sources);
    const std::size_t n = sys.sources.size();
    if (n == 1 || model.partial_sill <= 0.0) {
        // constant variogram (or a lone site) carries no spatial structure
        double mean = 0.0;
        for (const auto& s : sys.sources) mean += s.value;
        sys.constant_field = true;
        sys.constant_value = mean / static_cast<double>(n);
        return sys;
    }
    Eigen::MatrixXd a(n + 1, n + 1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j)
            a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                model.value(dist(sys.sources[i].pos, sys.sources[j].pos));
        a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n)) = 1.0;
        a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(i)) = 1.0;
    }
    a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)) = 0.0;
    sys.lu.compute(a);
    if (!sys.lu.isInvertible())
        throw InputError("kriging: singular system (duplicate or degenerate sites?)");
    return sys;
}

KrigingEstimate kriging_predict(const KrigingSystem& system, const KmPoint& query) {
    if (system.constant_field) return {system.constant_value, 1.0};
    const std::size_t n = system.sources.size();
    Eigen::VectorXd rhs(n + 1);
    for (std::size_t i = 0; i < n; ++i)
        rhs[static_cast<Eigen::Index>(i)] = system.model.value(dist(system.sources[i].pos, query));
    rhs[static_cast<Eigen::Index>(n)] = 1.0;
    const Eigen::VectorXd x = system.lu.solve(rhs);
    KrigingEstimate est;
    for (std::size_t i = 0; i < n; ++i) {
        est.value += x[static_cast<Eigen::Index>(i)] * system.sources[i].value;
        est.weight_sum += x[static_cast<Eigen::Index>(i)];
    }
    return est;
}

double kriging_predict(const std::vector<SpatialSample>& sources, const VariogramModel& model,
                       const KmPoint& query) {
    const auto sys = build_kriging_system(average_duplicates(sources), model);
    return kriging_predict(sys, query).value;
}

std::vector<double> knn_predict(const feat::FeatureMatrix& train,
                                const std::vector<double>& responses,
                                const feat::FeatureMatrix& query, int k) {
    const std::size_t n = train.rows();
    if (n == 0) throw InputError("knn_predict: empty training set");
    if (responses.size() != n)
        throw InputError("knn_predict: responses do not match training rows");
    if (k < 1) throw ConfigError("knn_predict: k must be >= 1");
    if (static_cast<std::size_t>(k) > n) {
        std::fprintf(stderr, "knn_predict: k=%d exceeds %zu training rows, clamping\n", k, n);
        k = static_cast<int>(n);
    }
    const int ncols = train.num_columns();
    std::vector<const std::vector<double>*> qcols(static_cast<std::size_t>(ncols));
    for (int c = 0; c < ncols; ++c) {
        const int qi = query.column_index(train.columns[static_cast<std::size_t>(c)].name);
        if (qi < 0)
            throw SchemaError("knn_predict: query rows are missing column '" +
                              train.columns[static_cast<std::size_t>(c)].name + "'");
        qcols[static_cast<std::size_t>(c)] = &query.values[static_cast<std::size_t>(qi)];
    }

    // training-set z-score parameters; constant columns pass through unscaled
    std::vector<double> mean(static_cast<std::size_t>(ncols), 0.0);
    std::vector<double> scale(static_cast<std::size_t>(ncols), 1.0);
    for (int c = 0; c < ncols; ++c) {
        const auto& col = train.values[static_cast<std::size_t>(c)];
        const double m = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(n);
        double var = 0.0;
        for (double v : col) var += (v - m) * (v - m);
        var /= static_cast<double>(n);
        mean[static_cast<std::size_t>(c)] = m;
        if (var > 0.0) scale[static_cast<std::size_t>(c)] = std::sqrt(var);
    }

    std::vector<double> out(query.rows(), 0.0);
    std::vector<std::pair<double, std::size_t>> order(n);
    for (std::size_t q = 0; q < query.rows(); ++q) {
        for (std::size_t r = 0; r < n; ++r) {
            double d2 = 0.0;
            for (int c = 0; c < ncols; ++c) {
                const std::size_t cc = static_cast<std::size_t>(c);
                const double dz = (train.values[cc][r] - mean[cc]) / scale[cc] -
                                  ((*qcols[cc])[q] - mean[cc]) / scale[cc];
                d2 += dz * dz;
            }
            order[r] = {d2, r};
        }
        std::stable_sort(order.begin(), order.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        double sum = 0.0;
        for (int i = 0; i < k; ++i) sum += responses[order[static_cast<std::size_t>(i)].second];
        out[q] = sum / static_cast<double>(k);
    }
    return out;
}

}  // namespace deepmaps::baselines
