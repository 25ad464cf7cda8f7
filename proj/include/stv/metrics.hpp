#ifndef STV_METRICS_HPP
#define STV_METRICS_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stv/uncertainty.hpp"

namespace stv {
namespace metrics {

double mae(const std::vector<double>& y, const std::vector<double>& y_hat);
double rmse(const std::vector<double>& y, const std::vector<double>& y_hat);
double mpiw(const std::vector<double>& lower, const std::vector<double>& upper);
double interval_score(const std::vector<double>& lower, const std::vector<double>& upper,
                      const std::vector<double>& y, double alpha);
// Strict-inequality coverage percentage in [0,100]; boundary hits count as
// misses.
double coverage(const std::vector<double>& lower, const std::vector<double>& upper,
                const std::vector<double>& y);

// For each kept fraction f, keeps the round(f*n) samples with the smallest
// uncertainty (ties by sample index) and reports their MAE.
std::vector<std::pair<double, double>> selective_regression_curve(
    const std::vector<double>& point, const std::vector<double>& uncertainty,
    const std::vector<double>& y, const std::vector<double>& kept_fractions);

struct ReliabilityPoint {
    double nominal = 0.0;
    double empirical = 0.0;
    std::string source;
};

// Per nominal level, empirical coverage of the interval the callback emits.
std::vector<ReliabilityPoint> reliability_curve(
    const std::vector<double>& nominal_levels,
    const std::function<Interval(double)>& intervals_at, const std::vector<double>& y,
    const std::string& source);

}  // namespace metrics

struct MetricBlock {
    std::string split = "test";
    std::string category = "all";
    std::string horizon = "all";
    double mae = 0.0;
    double rmse = 0.0;
    double mpiw = 0.0;
    std::optional<double> interval_score;
    std::optional<double> coverage;
    std::optional<bool> coverage_pass;
};

struct EvalReport {
    double alpha = 0.1;
    bool calibrated = false;
    MetricBlock overall;
    double median_mae = 0.0;  // MAE of the median head itself
    std::vector<MetricBlock> per_category;
    std::vector<MetricBlock> per_horizon;

    std::string to_json() const;
    std::string to_csv() const;
    void save(const std::string& json_path, const std::string& csv_path) const;
};

// Builds a block from original-scale values; interval metrics are skipped
// when with_intervals is false (the quantile-only ablation's convention).
MetricBlock make_metric_block(const std::vector<double>& y, const std::vector<double>& point,
                              const std::vector<double>& lower, const std::vector<double>& upper,
                              double alpha, bool with_intervals);

}  // namespace stv

#endif  // STV_METRICS_HPP
