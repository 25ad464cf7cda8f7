#include "stv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace stv {
namespace metrics {

namespace {
void require_nonempty_same(const char* op, const std::vector<double>& a,
                           const std::vector<double>& b) {
    if (a.empty() || a.size() != b.size()) {
        throw ContractError(std::string(op) + ": inputs must be nonempty and equal length");
    }
}
}  // namespace

double mae(const std::vector<double>& y, const std::vector<double>& y_hat) {
    require_nonempty_same("mae", y, y_hat);
    double s = 0.0;
    for (size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - y_hat[i]);
    return s / static_cast<double>(y.size());
}

double rmse(const std::vector<double>& y, const std::vector<double>& y_hat) {
    require_nonempty_same("rmse", y, y_hat);
    double s = 0.0;
    for (size_t i = 0; i < y.size(); ++i) s += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
    return std::sqrt(s / static_cast<double>(y.size()));
}

double mpiw(const std::vector<double>& lower, const std::vector<double>& upper) {
    require_nonempty_same("mpiw", lower, upper);
    double s = 0.0;
    for (size_t i = 0; i < lower.size(); ++i) {
        if (upper[i] < lower[i]) throw ContractError("mpiw: crossing interval");
        s += upper[i] - lower[i];
    }
    return s / static_cast<double>(lower.size());
}

double interval_score(const std::vector<double>& lower, const std::vector<double>& upper,
                      const std::vector<double>& y, double alpha) {
    require_nonempty_same("interval_score", lower, y);
    if (alpha <= 0.0 || alpha >= 1.0) throw ParamError("interval_score: alpha outside (0,1)");
    const double pen = 2.0 / alpha;
    double s = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
        if (upper[i] < lower[i]) throw ContractError("interval_score: crossing interval");
        double v = upper[i] - lower[i];
        if (y[i] < lower[i]) v += pen * (lower[i] - y[i]);
        if (y[i] > upper[i]) v += pen * (y[i] - upper[i]);
        s += v;
    }
    return s / static_cast<double>(y.size());
}

double coverage(const std::vector<double>& lower, const std::vector<double>& upper,
                const std::vector<double>& y) {
    require_nonempty_same("coverage", lower, y);
    int64_t in = 0;
    for (size_t i = 0; i < y.size(); ++i) {
        if (lower[i] < y[i] && y[i] < upper[i]) ++in;
    }
    return 100.0 * static_cast<double>(in) / static_cast<double>(y.size());
}

std::vector<std::pair<double, double>> selective_regression_curve(
    const std::vector<double>& point, const std::vector<double>& uncertainty,
    const std::vector<double>& y, const std::vector<double>& kept_fractions) {
    const size_t n = y.size();
    if (point.size() != n || uncertainty.size() != n) {
        throw ContractError("selective_regression_curve: length mismatch");
    }
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return uncertainty[a] < uncertainty[b]; });
    std::vector<std::pair<double, double>> curve;
    for (double f : kept_fractions) {
        if (f <= 0.0 || f > 1.0) throw ParamError("selective_regression_curve: fraction outside (0,1]");
        size_t k = static_cast<size_t>(std::llround(f * static_cast<double>(n)));
        k = std::min(std::max<size_t>(k, 1), n);
        double s = 0.0;
        for (size_t i = 0; i < k; ++i) s += std::abs(y[order[i]] - point[order[i]]);
        curve.emplace_back(f, s / static_cast<double>(k));
    }
    return curve;
}

std::vector<ReliabilityPoint> reliability_curve(
    const std::vector<double>& nominal_levels,
    const std::function<Interval(double)>& intervals_at, const std::vector<double>& y,
    const std::string& source) {
    std::vector<ReliabilityPoint> pts;
    for (double level : nominal_levels) {
        Interval iv = intervals_at(level);
        ReliabilityPoint p;
        p.nominal = level;
        p.empirical = coverage(iv.lower, iv.upper, y) / 100.0;
        p.source = source;
        pts.push_back(p);
    }
    return pts;
}

}  // namespace metrics

MetricBlock make_metric_block(const std::vector<double>& y, const std::vector<double>& point,
                              const std::vector<double>& lower, const std::vector<double>& upper,
                              double alpha, bool with_intervals) {
    MetricBlock b;
    b.mae = metrics::mae(y, point);
    b.rmse = metrics::rmse(y, point);
    b.mpiw = metrics::mpiw(lower, upper);
    if (with_intervals) {
        b.interval_score = metrics::interval_score(lower, upper, y, alpha);
        b.coverage = metrics::coverage(lower, upper, y);
        b.coverage_pass = *b.coverage >= 100.0 * (1.0 - alpha);
    }
    return b;
}

namespace {
nlohmann::json block_json(const MetricBlock& b) {
    nlohmann::json j;
    j["split"] = b.split;
    j["category"] = b.category;
    j["horizon"] = b.horizon;
    j["mae"] = b.mae;
    j["rmse"] = b.rmse;
    j["mpiw"] = b.mpiw;
    if (b.interval_score) j["interval_score"] = *b.interval_score;
    if (b.coverage) j["coverage"] = *b.coverage;
    if (b.coverage_pass) j["coverage_pass"] = *b.coverage_pass;
    return j;
}

void block_csv(std::ostringstream& os, const MetricBlock& b) {
    os << b.split << "," << b.category << "," << b.horizon << ",";
    char buf[64];
    auto put = [&](double v, bool comma) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << buf;
        if (comma) os << ",";
    };
    put(b.mae, true);
    put(b.rmse, true);
    put(b.mpiw, true);
    if (b.interval_score) put(*b.interval_score, true); else os << ",";
    if (b.coverage) put(*b.coverage, false);
    os << "\n";
}
}  // namespace

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["alpha"] = alpha;
    j["calibrated"] = calibrated;
    j["overall"] = block_json(overall);
    j["median_mae"] = median_mae;
    auto cats = nlohmann::json::array();
    for (const auto& b : per_category) cats.push_back(block_json(b));
    j["per_category"] = cats;
    auto hors = nlohmann::json::array();
    for (const auto& b : per_horizon) hors.push_back(block_json(b));
    j["per_horizon"] = hors;
    return j.dump(2);
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os << "split,category,horizon,mae,rmse,mpiw,interval_score,coverage\n";
    block_csv(os, overall);
    for (const auto& b : per_category) block_csv(os, b);
    for (const auto& b : per_horizon) block_csv(os, b);
    return os.str();
}

void EvalReport::save(const std::string& json_path, const std::string& csv_path) const {
    std::ofstream fj(json_path);
    if (!fj) throw IoError("cannot write " + json_path);
    fj << to_json() << "\n";
    std::ofstream fc(csv_path);
    if (!fc) throw IoError("cannot write " + csv_path);
    fc << to_csv();
}

}  // namespace stv
