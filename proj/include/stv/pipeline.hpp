#ifndef STV_PIPELINE_HPP
#define STV_PIPELINE_HPP

#include <optional>
#include <vector>

#include "stv/metrics.hpp"
#include "stv/model.hpp"

namespace stv {

// Flattened predictions over (window, node, horizon, category), all on the
// original count scale except sigma2 (log-scale variance, as trained).
struct SplitPredictions {
    std::vector<double> y;
    std::vector<double> lower, median, upper;
    std::vector<double> mu, sigma2;      // log scale, empty without a Gaussian head
    std::vector<double> mu_orig;         // expm1(mu)
    int64_t n_windows = 0, n_nodes = 0, t_out = 0, n_categories = 0;

    int64_t index(int64_t w, int64_t i, int64_t h, int64_t c) const {
        return ((w * n_nodes + i) * t_out + h) * n_categories + c;
    }
};

// Deterministic eval-mode pass over [begin, end) windows. When margin is set
// the conformal widening is applied on the original scale.
SplitPredictions predict_split(const Model& model, const DatasetBundle& bundle, int64_t begin,
                               int64_t end, std::optional<double> margin);

CalibrationRecord calibrate_split(const Model& model, const DatasetBundle& bundle,
                                  int64_t begin, int64_t end, double alpha);

// Headline metrics use the interval midpoint (lower+upper)/2 as the point
// prediction; the median head's own MAE is reported separately. Interval
// metrics are omitted for the quantile-only ablation.
EvalReport evaluate_predictions(const SplitPredictions& p, double alpha, bool calibrated,
                                Variant variant);

}  // namespace stv

#endif  // STV_PIPELINE_HPP
