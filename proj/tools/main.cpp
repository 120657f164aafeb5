// Subcommand CLI for the whole pipeline: generate a synthetic city, ingest
// and calibrate its sensor files, assemble features, train and evaluate the
// boosted model against the interpolation baselines, run the coverage
// ablation, infer hourly rasters, and render the run report.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "deepmaps/calibrate.hpp"
#include "deepmaps/csv.hpp"
#include "deepmaps/eval.hpp"
#include "deepmaps/featurize.hpp"
#include "deepmaps/gbdt.hpp"
#include "deepmaps/grid.hpp"
#include "deepmaps/ingest.hpp"
#include "deepmaps/pipeline.hpp"
#include "deepmaps/report.hpp"
#include "deepmaps/runconfig.hpp"
#include "deepmaps/synthcity.hpp"

namespace fs = std::filesystem;
using namespace deepmaps;

namespace {

struct GlobalFlags {
    std::string config_path;
    std::string seed_text;
    std::string out_dir;
    bool quiet = false;
};

void add_global_flags(CLI::App* cmd, GlobalFlags& flags) {
    cmd->add_option("--config", flags.config_path, "run configuration file (key=value lines)");
    cmd->add_option("--seed", flags.seed_text, "master seed (overrides the config)");
    cmd->add_option("--out", flags.out_dir, "artifact directory (overrides the config)");
    cmd->add_flag("--quiet", flags.quiet, "suppress progress output");
}

RunConfig resolve_config(const GlobalFlags& flags) {
    RunConfig config;
    if (!flags.config_path.empty()) {
        config = load_run_config(flags.config_path);
    }
    if (!flags.seed_text.empty()) set_run_config_value(config, "seed", flags.seed_text);
    if (!flags.out_dir.empty()) config.out_dir = flags.out_dir;
    config.finalize();
    return config;
}

/// Shared state for every stage that trains or evaluates on the city data.
struct Prepared {
    pipeline::CityData data;
    pipeline::LabelBuild labels;
    pipeline::FeatureContext context;
    pipeline::TrainingMatrix training;
};

Prepared prepare(const RunConfig& config, bool quiet) {
    Prepared p;
    p.data = pipeline::load_city_data(config);
    p.labels = pipeline::build_labels(p.data, config);
    p.context = pipeline::build_feature_context(p.data, config);
    p.training = pipeline::build_training_matrix(p.data, p.context, p.labels.labels);
    if (!quiet) {
        std::fprintf(stderr,
                     "prepare: %zu labels (%zu dropped for macro gaps), %d feature columns\n",
                     p.training.matrix.rows(), p.training.stats.rows_dropped_macro,
                     p.training.matrix.num_columns());
    }
    return p;
}

int run_synth(const RunConfig& config, bool quiet) {
    const std::string hash = config_hash(config);
    const synth::City city = synth::generate_city(config.city);
    const synth::DispersionResult truth = synth::simulate_city(city);
    fs::create_directories(config.data_dir);
    const synth::SampleSummary summary =
        synth::sample_sensors(city, truth, config.data_dir, hash);
    synth::write_feature_files(city, config.data_dir, hash);
    synth::write_truth(truth, config.grid, config.data_dir, hash);
    if (!quiet) {
        std::fprintf(stderr,
                     "synth: %zu fixed, %zu mobile, %zu meteo rows plus feature and truth "
                     "files in %s\n",
                     summary.fixed_rows, summary.mobile_rows, summary.meteo_rows,
                     config.data_dir.c_str());
    }
    return 0;
}

void write_counts(std::FILE* out, const char* name, const ingest::LoadCounts& counts) {
    std::fprintf(out, "%s.total=%zu\n%s.parsed=%zu\n%s.skipped=%zu\n%s.malformed=%zu\n", name,
                 counts.total, name, counts.parsed, name, counts.skipped, name,
                 counts.malformed);
}

int run_ingest(const RunConfig& config, bool quiet) {
    pipeline::IngestSummary summary;
    const pipeline::CityData data = pipeline::load_city_data(config, &summary);

    const std::string path = config.out_dir + "/ingest_summary.txt";
    std::FILE* out = std::fopen(path.c_str(), "wb");
    if (!out) throw IoError("cannot write " + path);
    std::fprintf(out, "# config=%s\n", config_hash(config).c_str());
    write_counts(out, "fixed", summary.fixed);
    write_counts(out, "mobile", summary.mobile);
    write_counts(out, "meteo", summary.meteo);
    write_counts(out, "static_features", summary.static_features);
    write_counts(out, "dynamic_features", summary.dynamic_features);
    std::fprintf(out, "stations.total=%zu\nstations.outside=%zu\n", summary.stations_total,
                 summary.stations_outside);
    std::fprintf(out, "mean_wind_ms=%s\n", csv::fmt(data.mean_wind_ms).c_str());
    std::fprintf(out, "static_channels=%d\ndynamic_channels=%d\n",
                 data.static_volume.channels(), data.dynamic_series.channels());
    std::fclose(out);

    if (!quiet) {
        std::fprintf(stderr, "ingest: %zu fixed, %zu mobile, %zu meteo rows parsed; %s\n",
                     summary.fixed.parsed, summary.mobile.parsed, summary.meteo.parsed,
                     path.c_str());
    }
    return 0;
}

int run_calibrate(const RunConfig& config, bool quiet) {
    const std::string hash = config_hash(config);
    const pipeline::CityData data = pipeline::load_city_data(config);
    const pipeline::LabelBuild build = pipeline::build_labels(data, config);
    calibrate::write_calibration_report(build.model, config.out_dir + "/calibration_report.txt",
                                        hash);
    calibrate::save_labels(build.labels, config.out_dir + "/labels.csv", hash);
    if (!quiet) {
        std::fprintf(stderr,
                     "calibrate: %zu co-located pairs, R2 %s, %zu labels (%zu fixed)\n",
                     build.colocated_pairs, csv::fmt_short(build.model.r_squared).c_str(),
                     build.labels.size(), build.fixed_labels.size());
    }
    return 0;
}

int run_featurize(const RunConfig& config, bool quiet) {
    const std::string hash = config_hash(config);
    const Prepared p = prepare(config, quiet);
    feat::export_matrix_csv(p.training.matrix, config.out_dir + "/features.csv", hash);
    feat::export_matrix_sidecar(p.training.matrix, config.out_dir + "/features_columns.csv",
                                hash);
    if (!quiet) {
        std::fprintf(stderr, "featurize: %zu rows x %d columns -> %s/features.csv\n",
                     p.training.matrix.rows(), p.training.matrix.num_columns(),
                     config.out_dir.c_str());
    }
    return 0;
}

int run_train(const RunConfig& config, bool quiet) {
    const std::string hash = config_hash(config);
    const Prepared p = prepare(config, quiet);
    const pipeline::TrainedModel trained = pipeline::train_full(p.training, config);
    gbdt::save_model(trained.model, config.out_dir + "/model.txt", hash);
    report::write_importance_csv(trained.importance, config.out_dir + "/importance.csv", hash);
    if (!quiet) {
        const double final_mse =
            trained.model.stage_mse.empty() ? 0.0 : trained.model.stage_mse.back();
        std::fprintf(stderr, "train: %zu trees, final training MSE %s -> %s/model.txt\n",
                     trained.model.trees.size(), csv::fmt_short(final_mse).c_str(),
                     config.out_dir.c_str());
    }
    return 0;
}

int run_evaluate(const RunConfig& config, bool quiet) {
    const Prepared p = prepare(config, quiet);
    const std::vector<pipeline::EvaluateRow> rows = pipeline::run_method_table(p.training, config);
    report::write_results_csv(rows, config.out_dir + "/results.csv", config_hash(config));
    if (!quiet) {
        std::fprintf(stderr, "%-10s %-7s %10s %10s %8s\n", "method", "features", "rmse",
                     "smape", "r2");
        for (const pipeline::EvaluateRow& row : rows) {
            std::fprintf(stderr, "%-10s %-7s %10s %10s %8s\n", row.method.c_str(),
                         row.features.c_str(), csv::fmt_short(row.pooled.rmse).c_str(),
                         csv::fmt_short(row.pooled.smape).c_str(),
                         csv::fmt_short(row.pooled.r_squared).c_str());
        }
    }
    return 0;
}

int run_ablate(const RunConfig& config, bool quiet) {
    const Prepared p = prepare(config, quiet);
    const std::vector<eval::AblationCurve> curves =
        pipeline::run_ablation(p.training, config, {config.seed});
    report::write_ablation_csv(curves, config.out_dir + "/ablation.csv", config_hash(config));
    if (!quiet) {
        for (const eval::AblationCurve& curve : curves) {
            for (const eval::AblationPoint& point : curve.points) {
                std::fprintf(stderr, "ablate: %5.1f%% mobile -> rmse %s\n", point.fraction,
                             csv::fmt_short(point.metrics.rmse).c_str());
            }
        }
    }
    return 0;
}

int run_infer(const RunConfig& config, bool quiet) {
    const std::string model_path = config.out_dir + "/model.txt";
    if (!fs::exists(model_path)) {
        throw IoError("infer: missing " + model_path + " (run train first)");
    }
    const gbdt::GbdtModel model = gbdt::load_model(model_path);
    const pipeline::CityData data = pipeline::load_city_data(config);
    const pipeline::FeatureContext context = pipeline::build_feature_context(data, config);
    const feat::FeatureMatrix city_matrix = pipeline::build_city_matrix(data, context);
    const eval::InferenceResult result = eval::infer_city(model, city_matrix, config.grid);

    const std::string rasters_dir = config.out_dir + "/rasters";
    fs::create_directories(rasters_dir);
    const std::string hash = config_hash(config);
    for (const GridFrame& frame : result.frames) {
        char name[32];
        std::snprintf(name, sizeof name, "/raster_%04d.csv", frame.t);
        report::write_raster_csv(frame, rasters_dir + name, hash);
    }
    if (!quiet) {
        std::fprintf(stderr, "infer: %zu values over %zu hours (%zu hours masked) -> %s\n",
                     result.predicted_values, result.frames.size(), result.masked_hours,
                     rasters_dir.c_str());
    }
    return 0;
}

int run_report(const RunConfig& config, bool quiet) {
    report::emit_report(config);
    if (!quiet) std::fprintf(stderr, "report: wrote %s/report.md\n", config.out_dir.c_str());
    return 0;
}

std::string one_line(const char* text) {
    std::string s(text);
    for (char& c : s) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return s;
}

int fail(const char* kind, const std::exception& e) {
    std::fprintf(stderr, "error: %s: %s\n", kind, one_line(e.what()).c_str());
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hourly city-scale PM2.5 inference from sparse fixed and mobile sensors"};
    app.require_subcommand(1);

    GlobalFlags flags;
    add_global_flags(&app, flags);

    struct Command {
        const char* name;
        const char* help;
        int (*run)(const RunConfig&, bool);
    };
    const std::vector<Command> commands = {
        {"synth", "generate a synthetic city and its sensor/feature/truth files", run_synth},
        {"ingest", "parse and validate the data directory, write a summary", run_ingest},
        {"calibrate", "fit the mobile calibration and write the label set", run_calibrate},
        {"featurize", "export the assembled feature matrix for the labels", run_featurize},
        {"train", "fit the boosted model on all labels, write model and importances",
         run_train},
        {"evaluate", "cross-validate every method/feature combination", run_evaluate},
        {"ablate", "mobile-coverage ablation curve on a fixed test split", run_ablate},
        {"infer", "predict every cell-hour with the trained model", run_infer},
        {"report", "render report.md plus raster images from the artifacts", run_report},
    };
    std::vector<CLI::App*> subcommands;
    for (const Command& command : commands) {
        CLI::App* sub = app.add_subcommand(command.name, command.help);
        add_global_flags(sub, flags);
        subcommands.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "error: cli: %s\n", one_line(e.what()).c_str());
        return 2;
    }

    try {
        const RunConfig config = resolve_config(flags);
        fs::create_directories(config.out_dir);
        write_resolved_config(config, config.out_dir + "/config_resolved.txt");
        if (!flags.quiet) {
            std::fprintf(stderr, "config %s (resolved copy in %s)\n",
                         config_hash(config).c_str(), config.out_dir.c_str());
        }
        for (std::size_t i = 0; i < commands.size(); ++i) {
            if (subcommands[i]->parsed()) return commands[i].run(config, flags.quiet);
        }
        std::fprintf(stderr, "error: cli: no subcommand\n");
        return 2;
    } catch (const ConfigError& e) {
        return fail("config", e);
    } catch (const SchemaError& e) {
        return fail("schema", e);
    } catch (const InputError& e) {
        return fail("input", e);
    } catch (const IoError& e) {
        return fail("io", e);
    } catch (const std::exception& e) {
        return fail("internal", e);
    }
}
