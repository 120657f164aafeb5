#include "deepmaps/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "deepmaps/csv.hpp"
#include "deepmaps/rng.hpp"

namespace deepmaps::gbdt {

void GbdtParams::validate() const {
    if (num_trees < 1) throw ConfigError("gbdt: num_trees must be >= 1");
    if (max_depth < 1) throw ConfigError("gbdt: max_depth must be >= 1");
    if (!(learning_rate > 0.0) || learning_rate > 1.0)
        throw ConfigError("gbdt: learning_rate must be in (0,1]");
    if (min_samples_leaf < 1) throw ConfigError("gbdt: min_samples_leaf must be >= 1");
    if (!(row_subsample > 0.0) || row_subsample > 1.0)
        throw ConfigError("gbdt: row_subsample must be in (0,1]");
    if (!(feature_subsample > 0.0) || feature_subsample > 1.0)
        throw ConfigError("gbdt: feature_subsample must be in (0,1]");
    if (histogram_bins < 2) throw ConfigError("gbdt: histogram_bins must be >= 2");
}

double Tree::predict_row(const std::vector<const std::vector<double>*>& cols,
                         std::size_t row) const {
    int idx = 0;
    while (nodes[idx].feature >= 0) {
        const TreeNode& n = nodes[idx];
        idx = ((*cols[n.feature])[row] <= n.threshold) ? n.left : n.right;
    }
    return nodes[idx].value;
}

namespace {

// Equal-frequency bin upper edges; bin b holds values v <= edges[b]
// (last bin is everything above the last edge).
std::vector<double> quantile_edges(std::vector<double> values, int max_bins) {
    std::sort(values.begin(), values.end());
    std::vector<double> edges;
    const std::size_t n = values.size();
    for (int b = 1; b < max_bins; ++b) {
        const std::size_t pos = static_cast<std::size_t>(
            std::min<double>(static_cast<double>(n) - 1.0,
                             std::floor(static_cast<double>(b) * static_cast<double>(n) /
                                        static_cast<double>(max_bins))));
        const double e = values[pos];
        if (edges.empty() || e > edges.back()) edges.push_back(e);
    }
    // drop a trailing edge equal to the maximum: a split there sends
    // everything left and can never be valid
    if (!edges.empty() && edges.back() >= values.back()) edges.pop_back();
    return edges;
}

std::uint16_t bin_of(const std::vector<double>& edges, double v) {
    const auto it = std::lower_bound(edges.begin(), edges.end(), v);
    return static_cast<std::uint16_t>(it - edges.begin());
}

struct SplitChoice {
    double gain = 0.0;
    int feature = -1;
    int bin = -1;  // split at edges[bin]: bins <= bin go left
    int left_count = 0;
};

struct TreeBuilder {
    const std::vector<std::vector<std::uint16_t>>& binned;
    const std::vector<std::vector<double>>& edges;
    const std::vector<double>& residual;
    const std::vector<int>& active_features;  // sorted by column name
    const std::vector<std::string>& names;
    int max_depth;
    int min_leaf;
    std::vector<TreeNode> nodes;

    SplitChoice best_split(const std::vector<int>& rows) const {
        SplitChoice best;
        const int n = static_cast<int>(rows.size());
        double total_sum = 0.0;
        for (int r : rows) total_sum += residual[r];
        std::vector<int> cnt;
        std::vector<double> sum;
        for (int f : active_features) {
            const auto& fe = edges[f];
            if (fe.empty()) continue;
            const int nbins = static_cast<int>(fe.size()) + 1;
            cnt.assign(nbins, 0);
            sum.assign(nbins, 0.0);
            const auto& fb = binned[f];
            for (int r : rows) {
                const std::uint16_t b = fb[r];
                ++cnt[b];
                sum[b] += residual[r];
            }
            int nl = 0;
            double sl = 0.0;
            for (int b = 0; b + 1 < nbins; ++b) {
                nl += cnt[b];
                sl += sum[b];
                const int nr = n - nl;
                if (nl < min_leaf) continue;
                if (nr < min_leaf) break;
                const double sr = total_sum - sl;
                const double gain = sl * sl / nl + sr * sr / nr - total_sum * total_sum / n;
                const bool better =
                    gain > best.gain ||
                    (gain == best.gain && best.feature >= 0 &&
                     (names[f] < names[best.feature] ||
                      (f == best.feature && b < best.bin)));
                if (better) best = {gain, f, b, nl};
            }
        }
        return best;
    }

    int build(std::vector<int>& rows, int depth) {
        const int idx = static_cast<int>(nodes.size());
        nodes.push_back({});
        const int n = static_cast<int>(rows.size());
        double sum = 0.0;
        for (int r : rows) sum += residual[r];
        nodes[idx].n_samples = n;
        nodes[idx].value = sum / n;
        if (depth >= max_depth || n < 2 * min_leaf) return idx;
        const SplitChoice split = best_split(rows);
        if (split.feature < 0 || !(split.gain > 0.0)) return idx;

        std::vector<int> left_rows, right_rows;
        left_rows.reserve(split.left_count);
        right_rows.reserve(n - split.left_count);
        const auto& fb = binned[split.feature];
        for (int r : rows) (fb[r] <= split.bin ? left_rows : right_rows).push_back(r);

        nodes[idx].feature = split.feature;
        nodes[idx].threshold = edges[split.feature][split.bin];
        nodes[idx].gain = split.gain;
        rows.clear();
        rows.shrink_to_fit();
        nodes[idx].left = build(left_rows, depth + 1);
        nodes[idx].right = build(right_rows, depth + 1);
        return idx;
    }
};

}  // namespace

GbdtModel fit(const feat::FeatureMatrix& matrix, const std::vector<double>& response,
              const GbdtParams& params) {
    params.validate();
    const std::size_t n = matrix.rows();
    if (n != response.size()) throw InputError("gbdt::fit: rows and response sizes differ");
    if (n < 2) throw InputError("gbdt::fit: need at least 2 rows");
    const int ncols = matrix.num_columns();
    if (ncols < 1) throw InputError("gbdt::fit: matrix has no columns");
    for (double v : response)
        if (!std::isfinite(v)) throw InputError("gbdt::fit: non-finite response value");
    for (const auto& col : matrix.values)
        for (double v : col)
            if (!std::isfinite(v)) throw InputError("gbdt::fit: non-finite feature value");

    GbdtModel model;
    model.params = params;
    model.learning_rate = params.learning_rate;
    for (const auto& c : matrix.columns) {
        model.column_names.push_back(c.name);
        model.column_categories.push_back(c.category);
    }
    model.base_score = std::accumulate(response.begin(), response.end(), 0.0) /
                       static_cast<double>(n);

    // equal-frequency bins from the training data, per column
    std::vector<std::vector<double>> edges(ncols);
    std::vector<std::vector<std::uint16_t>> binned(ncols);
    for (int c = 0; c < ncols; ++c) {
        edges[c] = quantile_edges(matrix.values[c], params.histogram_bins);
        binned[c].resize(n);
        for (std::size_t r = 0; r < n; ++r) binned[c][r] = bin_of(edges[c], matrix.values[c][r]);
    }

    std::vector<double> residual(response);
    for (double& r : residual) r -= model.base_score;

    // name-sorted column index, the basis for order-independent draws
    std::vector<int> by_name(ncols);
    std::iota(by_name.begin(), by_name.end(), 0);
    std::sort(by_name.begin(), by_name.end(), [&](int a, int b) {
        return matrix.columns[a].name < matrix.columns[b].name;
    });

    const int feat_take = std::max(
        1, static_cast<int>(std::lround(params.feature_subsample * ncols)));
    const std::size_t row_take = std::max<std::size_t>(
        2, static_cast<std::size_t>(std::lround(params.row_subsample * static_cast<double>(n))));

    std::vector<int> all_rows(n);
    std::iota(all_rows.begin(), all_rows.end(), 0);
    std::vector<const std::vector<double>*> col_ptrs;
    for (const auto& col : matrix.values) col_ptrs.push_back(&col);

    for (int stage = 0; stage < params.num_trees; ++stage) {
        // feature subsample keyed by (seed, stage, column name)
        std::vector<int> active;
        if (feat_take >= ncols) {
            active = by_name;
        } else {
            std::vector<std::pair<std::uint64_t, int>> prio;
            prio.reserve(ncols);
            const std::uint64_t stage_key = derive_seed(params.seed, "feature_subsample", stage);
            for (int c : by_name)
                prio.emplace_back(splitmix64(stage_key ^ fnv1a64(matrix.columns[c].name)), c);
            std::sort(prio.begin(), prio.end());
            for (int i = 0; i < feat_take; ++i) active.push_back(prio[i].second);
            std::sort(active.begin(), active.end(), [&](int a, int b) {
                return matrix.columns[a].name < matrix.columns[b].name;
            });
        }

        std::vector<int> rows;
        if (row_take >= n) {
            rows = all_rows;
        } else {
            auto engine = make_engine(params.seed, "row_subsample", stage);
            std::vector<int> pool(all_rows);
            for (std::size_t i = 0; i < row_take; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
                std::swap(pool[i], pool[pick(engine)]);
            }
            rows.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(row_take));
            std::sort(rows.begin(), rows.end());
        }

        TreeBuilder builder{binned, edges, residual, active, model.column_names,
                            params.max_depth, params.min_samples_leaf, {}};
        builder.build(rows, 0);
        if (builder.nodes.size() == 1 && builder.nodes[0].feature < 0) {
            // nothing left to split on; further stages see the same picture
            if (params.row_subsample >= 1.0 && params.feature_subsample >= 1.0) break;
            continue;
        }

        Tree tree{std::move(builder.nodes)};
        for (std::size_t r = 0; r < n; ++r)
            residual[r] -= params.learning_rate * tree.predict_row(col_ptrs, r);
        model.trees.push_back(std::move(tree));

        double mse = 0.0;
        for (double r : residual) mse += r * r;
        model.stage_mse.push_back(mse / static_cast<double>(n));
    }

    double total_gain = 0.0;
    std::map<std::string, double> gains;
    for (const auto& tree : model.trees)
        for (const auto& node : tree.nodes)
            if (node.feature >= 0) {
                gains[model.column_names[node.feature]] += node.gain;
                total_gain += node.gain;
            }
    if (total_gain > 0.0)
        for (auto& [name, g] : gains) model.importance[name] = g / total_gain;
    return model;
}

std::vector<double> predict(const GbdtModel& model, const feat::FeatureMatrix& rows) {
    std::vector<const std::vector<double>*> cols(model.column_names.size(), nullptr);
    for (std::size_t c = 0; c < model.column_names.size(); ++c) {
        const int idx = rows.column_index(model.column_names[c]);
        if (idx < 0) {
            throw SchemaError("gbdt::predict: rows are missing column '" +
                              model.column_names[c] + "'");
        } else {
            cols[c] = &rows.values[idx];
        }
    }
    std::vector<double> out(rows.rows(), model.base_score);
    for (const auto& tree : model.trees)
        for (std::size_t r = 0; r < out.size(); ++r)
            out[r] += model.learning_rate * tree.predict_row(cols, r);
    return out;
}

ImportanceReport feature_importance(const GbdtModel& model,
                                    const std::map<std::string, std::string>& category_of) {
    ImportanceReport report;
    std::map<std::string, double> categories;
    std::map<std::string, double> stations;
    for (const auto& [name, w] : model.importance) {
        report.per_column.emplace_back(name, w);
        auto it = category_of.find(name);
        const std::string cat = it != category_of.end() ? it->second : std::string("other");
        categories[cat] += w;
        if (name.rfind("macro_", 0) == 0) {
            // macro_{station}_{shift}
            const auto last = name.rfind('_');
            if (last != std::string::npos && last > 6)
                stations[name.substr(6, last - 6)] += w;
        }
    }
    auto by_weight = [](auto& vec) {
        std::sort(vec.begin(), vec.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
    };
    for (const auto& [c, w] : categories) report.per_category.emplace_back(c, w);
    for (const auto& [s, w] : stations) report.per_macro_station.emplace_back(s, w);
    by_weight(report.per_column);
    by_weight(report.per_category);
    by_weight(report.per_macro_station);
    return report;
}

namespace {
constexpr const char* kMagic = "deepmaps-gbdt 1";
}

void save_model(const GbdtModel& model, const std::string& path, const std::string& config_hash) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << kMagic << "\n";
    out << "config " << (config_hash.empty() ? "-" : config_hash) << "\n";
    const auto& p = model.params;
    out << "params " << p.num_trees << ' ' << p.max_depth << ' ' << csv::fmt(p.learning_rate)
        << ' ' << p.min_samples_leaf << ' ' << csv::fmt(p.row_subsample) << ' '
        << csv::fmt(p.feature_subsample) << ' ' << p.histogram_bins << ' ' << p.seed << "\n";
    out << "base_score " << csv::fmt(model.base_score) << "\n";
    out << "learning_rate " << csv::fmt(model.learning_rate) << "\n";
    out << "columns " << model.column_names.size() << "\n";
    for (std::size_t c = 0; c < model.column_names.size(); ++c)
        out << "column " << model.column_names[c] << ' '
            << (c < model.column_categories.size() && !model.column_categories[c].empty()
                    ? model.column_categories[c]
                    : "-")
            << "\n";
    out << "trees " << model.trees.size() << "\n";
    for (const auto& tree : model.trees) {
        out << "tree " << tree.nodes.size() << "\n";
        for (const auto& n : tree.nodes)
            out << "node " << n.feature << ' ' << csv::fmt(n.threshold) << ' ' << n.left << ' '
                << n.right << ' ' << csv::fmt(n.value) << ' ' << csv::fmt(n.gain) << ' '
                << n.n_samples << "\n";
    }
    out << "importance " << model.importance.size() << "\n";
    for (const auto& [name, w] : model.importance)
        out << "weight " << name << ' ' << csv::fmt(w) << "\n";
    out << "end\n";
}

namespace {

std::vector<std::string> tokens_of(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string t;
    while (in >> t) out.push_back(t);
    return out;
}

double parse_num(const std::string& s, const std::string& path) {
    double v;
    if (!csv::parse_double(s, v)) throw SchemaError(path + ": bad number '" + s + "'");
    return v;
}

}  // namespace

GbdtModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model file: " + path);
    std::string line;
    if (!std::getline(in, line) || line != kMagic)
        throw SchemaError(path + ": not a deepmaps-gbdt v1 model file");
    GbdtModel model;
    auto expect = [&](const char* key) {
        if (!std::getline(in, line)) throw SchemaError(path + ": truncated model file");
        auto toks = tokens_of(line);
        if (toks.empty() || toks[0] != key)
            throw SchemaError(path + ": expected '" + key + "' record");
        return toks;
    };
    expect("config");
    {
        auto t = expect("params");
        if (t.size() != 9) throw SchemaError(path + ": bad params record");
        model.params.num_trees = static_cast<int>(parse_num(t[1], path));
        model.params.max_depth = static_cast<int>(parse_num(t[2], path));
        model.params.learning_rate = parse_num(t[3], path);
        model.params.min_samples_leaf = static_cast<int>(parse_num(t[4], path));
        model.params.row_subsample = parse_num(t[5], path);
        model.params.feature_subsample = parse_num(t[6], path);
        model.params.histogram_bins = static_cast<int>(parse_num(t[7], path));
        model.params.seed = static_cast<std::uint64_t>(std::stoull(t[8]));
    }
    model.base_score = parse_num(expect("base_score")[1], path);
    model.learning_rate = parse_num(expect("learning_rate")[1], path);
    const int ncols = static_cast<int>(parse_num(expect("columns")[1], path));
    for (int c = 0; c < ncols; ++c) {
        auto t = expect("column");
        if (t.size() != 3) throw SchemaError(path + ": bad column record");
        model.column_names.push_back(t[1]);
        model.column_categories.push_back(t[2] == "-" ? "" : t[2]);
    }
    const int ntrees = static_cast<int>(parse_num(expect("trees")[1], path));
    for (int i = 0; i < ntrees; ++i) {
        auto t = expect("tree");
        const int nnodes = static_cast<int>(parse_num(t[1], path));
        Tree tree;
        for (int k = 0; k < nnodes; ++k) {
            auto nt = expect("node");
            if (nt.size() != 8) throw SchemaError(path + ": bad node record");
            TreeNode node;
            node.feature = static_cast<int>(parse_num(nt[1], path));
            node.threshold = parse_num(nt[2], path);
            node.left = static_cast<int>(parse_num(nt[3], path));
            node.right = static_cast<int>(parse_num(nt[4], path));
            node.value = parse_num(nt[5], path);
            node.gain = parse_num(nt[6], path);
            node.n_samples = static_cast<int>(parse_num(nt[7], path));
            tree.nodes.push_back(node);
        }
        model.trees.push_back(std::move(tree));
    }
    const int nimp = static_cast<int>(parse_num(expect("importance")[1], path));
    for (int i = 0; i < nimp; ++i) {
        auto t = expect("weight");
        if (t.size() != 3) throw SchemaError(path + ": bad weight record");
        model.importance[t[1]] = parse_num(t[2], path);
    }
    expect("end");
    return model;
}

}  // namespace deepmaps::gbdt
