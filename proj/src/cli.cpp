#include "stv/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "stv/config.hpp"
#include "stv/pipeline.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace stv {

namespace {

int guard(const char* what, const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << what << ": " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << what << ": " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << what << ": " << e.what() << "\n";
        return 4;
    }
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << content;
}

std::string checkpoint_path(const CliPaths& p) {
    return p.checkpoint.empty() ? p.out_dir + "/checkpoint.bin" : p.checkpoint;
}
std::string calibration_path(const CliPaths& p) {
    return p.calibration.empty() ? p.out_dir + "/calibration.json" : p.calibration;
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir);
}

uint64_t init_seed_of(uint64_t seed) { return mix_keys(seed, fnv1a("init")); }

// Model dims tied to the generator are taken from the bundle on disk.
void derive_model_dims(RunConfig& rc, const DatasetBundle& bundle) {
    rc.model.n_categories = bundle.config.n_categories;
    rc.model.d_dem = bundle.config.d_dem;
    rc.model.d_ext = bundle.config.d_ext;
    rc.model.t_in = bundle.config.t_in;
    rc.model.t_out = bundle.config.t_out;
}

std::vector<double> fractions_grid() {
    std::vector<double> g;
    for (int i = 1; i <= 10; ++i) g.push_back(0.1 * i);
    return g;
}

}  // namespace

int cmd_gen_data(const CliPaths& paths, std::optional<uint64_t> seed) {
    return guard("gen-data", [&]() {
        RunConfig rc = load_run_config(paths.config);
        if (seed) {
            rc.seed = *seed;
            rc.data.seed = *seed;
        }
        ensure_out_dir(paths.out_dir);
        DatasetBundle bundle = generate_synthetic(rc.data);
        save_bundle(bundle, paths.out_dir);
        std::cout << "wrote bundle: " << paths.out_dir << "\n"
                  << "  nodes=" << bundle.config.n_nodes << " steps=" << bundle.config.n_steps
                  << " categories=" << bundle.config.n_categories
                  << " windows=" << bundle.n_windows() << "\n"
                  << "  splits train=[" << bundle.splits.train_begin << ","
                  << bundle.splits.train_end << ") val=[" << bundle.splits.val_begin << ","
                  << bundle.splits.val_end << ") cal=[" << bundle.splits.cal_begin << ","
                  << bundle.splits.cal_end << ") test=[" << bundle.splits.test_begin << ","
                  << bundle.splits.test_end << ")\n";
    });
}

int cmd_train(const CliPaths& paths, std::optional<uint64_t> seed,
              const std::optional<std::string>& variant) {
    return guard("train", [&]() {
        RunConfig rc = load_run_config(paths.config);
        DatasetBundle bundle = load_bundle(paths.data_dir);
        derive_model_dims(rc, bundle);
        if (seed) {
            rc.seed = *seed;
            rc.train.seed = *seed;
        }
        if (variant) rc.model.variant = variant_from_string(*variant);
        apply_variant(rc.model.variant, rc.train);
        rc.model.validate();
        rc.train.validate();
        ensure_out_dir(paths.out_dir);

        Model model = Model::build(rc.model, rc.uq, bundle.graph, init_seed_of(rc.seed));
        std::cout << "training variant \"" << variant_name(rc.model.variant) << "\" ("
                  << model.n_parameters() << " parameters)\n";
        TrainResult result = train(model, bundle, rc.train);
        save_checkpoint(checkpoint_path(paths), model, result.best_moments, result.best_epoch,
                        result.best_val, rc.train);
        write_text(paths.out_dir + "/history.csv", result.history_csv());
        write_text(paths.out_dir + "/config_resolved.json", rc.to_json().dump(2) + "\n");
        std::cout << "best epoch " << result.best_epoch << " val_total " << result.best_val
                  << "; wrote " << checkpoint_path(paths) << "\n";
    });
}

int cmd_calibrate(const CliPaths& paths, std::optional<uint64_t> seed,
                  std::optional<double> alpha) {
    return guard("calibrate", [&]() {
        (void)seed;  // the calibration pass is deterministic
        DatasetBundle bundle = load_bundle(paths.data_dir);
        LoadedCheckpoint ck = load_checkpoint(checkpoint_path(paths), bundle.graph);
        const double a = alpha.value_or(ck.model.uq().alpha);
        if (a <= 0.0 || a >= 1.0) throw ConfigError("alpha must be in (0,1)");
        CalibrationRecord rec = calibrate_split(ck.model, bundle, bundle.splits.cal_begin,
                                                bundle.splits.cal_end, a);
        ensure_out_dir(paths.out_dir);
        rec.save(calibration_path(paths));
        std::cout << "calibration: n=" << rec.n_cal << " coverage_gap=" << rec.coverage_gap
                  << " margin_c=" << rec.margin_c << "\n";
    });
}

int cmd_eval(const CliPaths& paths) {
    return guard("eval", [&]() {
        DatasetBundle bundle = load_bundle(paths.data_dir);
        LoadedCheckpoint ck = load_checkpoint(checkpoint_path(paths), bundle.graph);
        const Model& model = ck.model;
        const double alpha = model.uq().alpha;

        std::optional<double> margin;
        bool calibrated = false;
        if (std::filesystem::exists(calibration_path(paths))) {
            CalibrationRecord rec = CalibrationRecord::load(calibration_path(paths));
            margin = rec.margin_c;
            calibrated = true;
        } else {
            std::cerr << "WARNING: no calibration record at " << calibration_path(paths)
                      << "; evaluating uncalibrated intervals\n";
        }
        SplitPredictions pred = predict_split(model, bundle, bundle.splits.test_begin,
                                              bundle.splits.test_end, margin);
        EvalReport rep = evaluate_predictions(pred, alpha, calibrated, model.config().variant);
        ensure_out_dir(paths.out_dir);
        rep.save(paths.out_dir + "/report.json", paths.out_dir + "/report.csv");

        // abstention curve: midpoint prediction, interval width as uncertainty
        {
            std::vector<double> point(pred.y.size()), width(pred.y.size());
            for (size_t i = 0; i < pred.y.size(); ++i) {
                point[i] = 0.5 * (pred.lower[i] + pred.upper[i]);
                width[i] = pred.upper[i] - pred.lower[i];
            }
            auto curve = metrics::selective_regression_curve(point, width, pred.y,
                                                             fractions_grid());
            std::ostringstream os;
            os << "kept_fraction,mae\n";
            char buf[64];
            for (auto [f, m] : curve) {
                std::snprintf(buf, sizeof buf, "%.6g,%.17g", f, m);
                os << buf << "\n";
            }
            write_text(paths.out_dir + "/selective_curve.csv", os.str());
        }
        {
            std::ostringstream os;
            os << "nominal,empirical,source\n";
            char buf[96];
            if (!pred.mu.empty()) {
                const std::vector<double> levels = {0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95, 0.99};
                auto pts = metrics::reliability_curve(
                    levels,
                    [&](double level) {
                        Interval iv = gaussian_interval(pred.mu, pred.sigma2, 1.0 - level);
                        for (auto& v : iv.lower) v = expm1_value(v);
                        for (auto& v : iv.upper) v = expm1_value(v);
                        return iv;
                    },
                    pred.y, "gaussian");
                for (const auto& p : pts) {
                    std::snprintf(buf, sizeof buf, "%.6g,%.17g,%s", p.nominal, p.empirical,
                                  p.source.c_str());
                    os << buf << "\n";
                }
            }
            if (calibrated) {
                const double emp = metrics::coverage(pred.lower, pred.upper, pred.y) / 100.0;
                std::snprintf(buf, sizeof buf, "%.6g,%.17g,%s", 1.0 - alpha, emp,
                              "quantile_calibrated");
                os << buf << "\n";
            }
            write_text(paths.out_dir + "/reliability_curve.csv", os.str());
        }
        std::cout << "test mae=" << rep.overall.mae << " rmse=" << rep.overall.rmse
                  << " mpiw=" << rep.overall.mpiw;
        if (rep.overall.interval_score) std::cout << " is=" << *rep.overall.interval_score;
        if (rep.overall.coverage) {
            std::cout << " cov=" << *rep.overall.coverage
                      << (rep.overall.coverage_pass.value_or(false) ? " (pass)" : " (fail)");
        }
        std::cout << (calibrated ? "" : " [uncalibrated]") << "\n";
    });
}

int cmd_predict(const CliPaths& paths, int64_t window_index) {
    return guard("predict", [&]() {
        DatasetBundle bundle = load_bundle(paths.data_dir);
        LoadedCheckpoint ck = load_checkpoint(checkpoint_path(paths), bundle.graph);
        const Model& model = ck.model;
        if (window_index < 0 || window_index >= bundle.n_windows()) {
            throw ConfigError("window index " + std::to_string(window_index) +
                              " out of range [0," + std::to_string(bundle.n_windows()) + ")");
        }
        std::optional<double> margin;
        if (std::filesystem::exists(calibration_path(paths))) {
            margin = CalibrationRecord::load(calibration_path(paths)).margin_c;
        } else {
            std::cerr << "WARNING: no calibration record; predictions are uncalibrated\n";
        }
        SplitPredictions p =
            predict_split(model, bundle, window_index, window_index + 1, margin);

        const bool mc_on = model.uq().mc_passes >= 2 &&
                           variant_has_gaussian(model.config().variant) &&
                           model.config().dropout > 0.0;
        McStats mc;
        if (mc_on) {
            WindowTensors w = materialize_window(bundle, window_index, model.config().pad_to());
            mc = mc_dropout_predict(model, w.v_in, w.e_in, statics_tensor(bundle),
                                    model.uq().mc_passes, ck.train_cfg.seed);
        }
        ensure_out_dir(paths.out_dir);
        std::ostringstream os;
        os << "node,horizon,category,lower,median,upper,mu,sigma2";
        if (mc_on) os << ",mc_mu,mc_var_aleatoric,mc_var_epistemic,mc_var_total";
        os << "\n";
        char buf[64];
        auto put = [&](double v) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            os << "," << buf;
        };
        for (int64_t i = 0; i < p.n_nodes; ++i) {
            for (int64_t h = 0; h < p.t_out; ++h) {
                for (int64_t c = 0; c < p.n_categories; ++c) {
                    const int64_t k = p.index(0, i, h, c);
                    os << i << "," << h + 1 << "," << c;
                    put(p.lower[k]);
                    put(p.median[k]);
                    put(p.upper[k]);
                    if (!p.mu.empty()) {
                        put(p.mu_orig[k]);
                        put(p.sigma2[k]);
                    } else {
                        os << ",,";
                    }
                    if (mc_on) {
                        put(expm1_value(mc.mean[static_cast<size_t>(k)]));
                        put(mc.aleatoric[static_cast<size_t>(k)]);
                        put(mc.epistemic[static_cast<size_t>(k)]);
                        put(mc.total[static_cast<size_t>(k)]);
                    }
                    os << "\n";
                }
            }
        }
        write_text(paths.out_dir + "/predictions.csv", os.str());
        std::cout << "wrote " << paths.out_dir << "/predictions.csv\n";
    });
}

int run_cli(int argc, char** argv) {
    if (const char* env = std::getenv("STVISIT_THREADS")) {
#ifdef _OPENMP
        const int n = std::atoi(env);
        if (n > 0) omp_set_num_threads(n);
#else
        (void)env;
#endif
    }

    CLI::App app{"uncertainty-aware facility-visit forecasting"};
    app.require_subcommand(1);
    CliPaths paths;
    std::optional<uint64_t> seed;
    std::optional<std::string> variant;
    std::optional<double> alpha;
    int64_t window_index = 0;

    auto add_common = [&](CLI::App* sub, bool need_config, bool need_data) {
        auto* c = sub->add_option("--config", paths.config, "run configuration JSON");
        if (need_config) c->required();
        auto* d = sub->add_option("--data", paths.data_dir, "dataset bundle directory");
        if (need_data) d->required();
        sub->add_option("--out", paths.out_dir, "output directory")->required();
        sub->add_option("--seed", seed, "seed override");
        sub->add_option("--checkpoint", paths.checkpoint, "checkpoint path override");
        sub->add_option("--calibration", paths.calibration, "calibration record path override");
    };

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset bundle");
    add_common(gen, true, false);
    auto* tr = app.add_subcommand("train", "train a model on a bundle");
    add_common(tr, true, true);
    tr->add_option("--variant", variant, "model variant (full, w/o STCE, ...)");
    auto* cal = app.add_subcommand("calibrate", "fit the conformal margin on the cal split");
    add_common(cal, false, true);
    cal->add_option("--alpha", alpha, "miscoverage override");
    auto* ev = app.add_subcommand("eval", "score the test split");
    add_common(ev, false, true);
    auto* pr = app.add_subcommand("predict", "emit predictions for one window");
    add_common(pr, false, true);
    pr->add_option("--window", window_index, "window index")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (gen->parsed()) return cmd_gen_data(paths, seed);
    if (tr->parsed()) return cmd_train(paths, seed, variant);
    if (cal->parsed()) return cmd_calibrate(paths, seed, alpha);
    if (ev->parsed()) return cmd_eval(paths);
    if (pr->parsed()) return cmd_predict(paths, window_index);
    return 2;
}

}  // namespace stv
