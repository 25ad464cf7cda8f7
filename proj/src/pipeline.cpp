#include "stv/pipeline.hpp"

#include <cmath>

namespace stv {

SplitPredictions predict_split(const Model& model, const DatasetBundle& bundle, int64_t begin,
                               int64_t end, std::optional<double> margin) {
    if (end <= begin) throw ContractError("predict_split: empty window range");
    const ModelConfig& cfg = model.config();
    const Variant variant = cfg.variant;
    Tensor statics = statics_tensor(bundle);

    SplitPredictions p;
    p.n_windows = end - begin;
    p.n_nodes = bundle.config.n_nodes;
    p.t_out = cfg.t_out;
    p.n_categories = cfg.n_categories;
    const int64_t per_window = p.n_nodes * p.t_out * p.n_categories;
    const int64_t total = p.n_windows * per_window;
    p.y.resize(total);
    p.lower.resize(total);
    p.median.resize(total);
    p.upper.resize(total);
    const bool gaussian = variant_has_gaussian(variant);
    if (gaussian) {
        p.mu.resize(total);
        p.sigma2.resize(total);
        p.mu_orig.resize(total);
    }

    ExecCtx ctx;  // eval mode
    for (int64_t wi = begin; wi < end; ++wi) {
        WindowTensors w = materialize_window(bundle, wi, cfg.pad_to());
        Model::Output out = model.forward(w.v_in, w.e_in, statics, ctx);
        const int64_t base = (wi - begin) * per_window;
        for (int64_t k = 0; k < per_window; ++k) p.y[base + k] = w.y_raw[static_cast<size_t>(k)];

        if (variant_has_quantile(variant)) {
            const auto& lo = out.lower.values();
            const auto& md = out.median.values();
            const auto& up = out.upper.values();
            for (int64_t k = 0; k < per_window; ++k) {
                p.lower[base + k] = std::expm1(lo[k]);
                p.median[base + k] = std::expm1(md[k]);
                p.upper[base + k] = std::expm1(up[k]);
            }
        } else {
            // interval ablation: analytic Gaussian interval on the log scale,
            // mapped through the monotone inverse transform
            Interval iv = gaussian_interval(out.mu.values(), out.sigma2.values(),
                                            model.uq().alpha);
            for (int64_t k = 0; k < per_window; ++k) {
                p.lower[base + k] = std::expm1(iv.lower[k]);
                p.median[base + k] = std::expm1(out.mu.values()[k]);
                p.upper[base + k] = std::expm1(iv.upper[k]);
            }
        }
        if (gaussian) {
            for (int64_t k = 0; k < per_window; ++k) {
                p.mu[base + k] = out.mu.values()[k];
                p.sigma2[base + k] = out.sigma2.values()[k];
                p.mu_orig[base + k] = std::expm1(out.mu.values()[k]);
            }
        }
    }
    if (margin) {
        Interval iv = apply_calibration(p.lower, p.upper, *margin);
        p.lower = std::move(iv.lower);
        p.upper = std::move(iv.upper);
    }
    return p;
}

CalibrationRecord calibrate_split(const Model& model, const DatasetBundle& bundle, int64_t begin,
                                  int64_t end, double alpha) {
    SplitPredictions p = predict_split(model, bundle, begin, end, std::nullopt);
    return fit_calibration(p.lower, p.upper, p.y, alpha);
}

namespace {

template <typename Keep>
MetricBlock block_for(const SplitPredictions& p, double alpha, bool with_intervals, Keep keep) {
    std::vector<double> y, point, lo, up;
    for (int64_t w = 0; w < p.n_windows; ++w) {
        for (int64_t i = 0; i < p.n_nodes; ++i) {
            for (int64_t h = 0; h < p.t_out; ++h) {
                for (int64_t c = 0; c < p.n_categories; ++c) {
                    if (!keep(h, c)) continue;
                    const int64_t k = p.index(w, i, h, c);
                    y.push_back(p.y[k]);
                    point.push_back(0.5 * (p.lower[k] + p.upper[k]));
                    lo.push_back(p.lower[k]);
                    up.push_back(p.upper[k]);
                }
            }
        }
    }
    return make_metric_block(y, point, lo, up, alpha, with_intervals);
}

}  // namespace

EvalReport evaluate_predictions(const SplitPredictions& p, double alpha, bool calibrated,
                                Variant variant) {
    const bool with_intervals = variant != Variant::kNoUq;
    EvalReport rep;
    rep.alpha = alpha;
    rep.calibrated = calibrated;
    rep.overall = block_for(p, alpha, with_intervals, [](int64_t, int64_t) { return true; });
    rep.median_mae = metrics::mae(p.y, p.median);
    for (int64_t c = 0; c < p.n_categories; ++c) {
        MetricBlock b = block_for(p, alpha, with_intervals,
                                  [c](int64_t, int64_t cc) { return cc == c; });
        b.category = "cat" + std::to_string(c);
        rep.per_category.push_back(b);
    }
    for (int64_t h = 0; h < p.t_out; ++h) {
        MetricBlock b = block_for(p, alpha, with_intervals,
                                  [h](int64_t hh, int64_t) { return hh == h; });
        b.horizon = std::to_string(h + 1);
        rep.per_horizon.push_back(b);
    }
    return rep;
}

}  // namespace stv
