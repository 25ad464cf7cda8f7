#include "stv/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace stv {

void UqConfig::validate() const {
    if (alpha <= 0.0 || alpha >= 1.0) throw ConfigError("uq.alpha must be in (0,1)");
    if (mc_passes < 1) throw ConfigError("uq.mc_passes must be >= 1");
    if (sigma_floor <= 0.0 || residual_epsilon <= 0.0) {
        throw ConfigError("uq.sigma_floor and uq.residual_epsilon must be > 0");
    }
}

namespace {
Tensor square(const Tensor& x) { return ops::mul(x, x); }
}

QuantileOut quantile_heads(const Tensor& features, const HeadParams& p) {
    Tensor m = affine_last(features, p.median.w, p.median.b);
    Tensor gap_l = ops::softplus(affine_last(features, p.gap_low.w, p.gap_low.b));
    Tensor gap_u = ops::softplus(affine_last(features, p.gap_up.w, p.gap_up.b));
    QuantileOut out;
    out.lower = ops::relu(ops::sub(m, gap_l));
    out.median = ops::relu(m);
    out.upper = ops::relu(ops::add(m, gap_u));
    return out;
}

GaussianOut gaussian_head(const Tensor& features, const HeadParams& p, double sigma_floor) {
    GaussianOut out;
    out.mu = ops::relu(affine_last(features, p.mu.w, p.mu.b));
    out.sigma2 = ops::add_scalar(ops::softplus(affine_last(features, p.sigma_raw.w, p.sigma_raw.b)),
                                 sigma_floor);
    return out;
}

Tensor pinball_loss(const std::vector<Tensor>& preds, const Tensor& y,
                    const std::vector<double>& levels) {
    if (preds.size() != levels.size() || preds.empty()) {
        throw ContractError("pinball_loss: need one prediction tensor per level");
    }
    if (y.size() == 0) throw ContractError("pinball_loss: empty sample set");
    Tensor acc;
    for (size_t i = 0; i < levels.size(); ++i) {
        const double q = levels[i];
        if (q <= 0.0 || q >= 1.0) throw ParamError("pinball_loss: level outside (0,1)");
        Tensor z = ops::sub(y, preds[i]);
        // rho_q(z) = q*relu(z) + (1-q)*relu(-z) = max(qz, (q-1)z)
        Tensor rho = ops::add(ops::mul_scalar(ops::relu(z), q),
                              ops::mul_scalar(ops::relu(ops::mul_scalar(z, -1.0)), 1.0 - q));
        Tensor term = ops::mean_all(rho);
        acc = acc.defined() ? ops::add(acc, term) : term;
    }
    return ops::mul_scalar(acc, 1.0 / static_cast<double>(levels.size()));
}

Tensor nll_loss(const Tensor& mu, const Tensor& sigma2, const Tensor& y) {
    for (double s : sigma2.values()) {
        if (s <= 0.0) throw ContractError("nll_loss: sigma2 must be positive");
    }
    Tensor resid = ops::sub(y, mu);
    Tensor quad = ops::div(square(resid), ops::mul_scalar(sigma2, 2.0));
    Tensor logterm = ops::mul_scalar(ops::log(sigma2), 0.5);
    return ops::mean_all(ops::add(logterm, quad));
}

Tensor calib_loss(const Tensor& mu, const Tensor& sigma, const Tensor& y, double eps) {
    Tensor r = ops::div(ops::sub(y, mu), ops::add_scalar(sigma, eps));
    Tensor m1 = ops::mean_all(r);
    Tensor m2 = ops::mean_all(square(r));
    return ops::add(square(m1), square(ops::add_scalar(m2, -1.0)));
}

Tensor mc_mean(const std::vector<Tensor>& mus) {
    if (mus.empty()) throw ContractError("mc_mean: no passes");
    Tensor acc;
    for (size_t m = 1; m < mus.size(); ++m) {
        Tensor d = ops::sub(mus[m], mus[0]);
        acc = acc.defined() ? ops::add(acc, d) : d;
    }
    if (!acc.defined()) return mus[0];
    return ops::add(mus[0], ops::mul_scalar(acc, 1.0 / static_cast<double>(mus.size())));
}

Tensor param_loss(const std::vector<Tensor>& mus, const Tensor& mu_hat) {
    if (mus.size() < 2) throw ParamError("param_loss: needs M >= 2 passes");
    Tensor acc;
    for (const Tensor& m : mus) {
        Tensor term = ops::mean_all(square(ops::sub(m, mu_hat)));
        acc = acc.defined() ? ops::add(acc, term) : term;
    }
    return ops::mul_scalar(acc, 1.0 / static_cast<double>(mus.size()));
}

Tensor total_loss(const std::vector<std::pair<std::string, Tensor>>& components,
                  const std::vector<double>& weights) {
    if (components.size() != weights.size()) {
        throw ContractError("total_loss: component/weight count mismatch");
    }
    Tensor acc;
    for (size_t i = 0; i < components.size(); ++i) {
        const auto& [name, c] = components[i];
        if (!c.defined() || c.size() != 1) {
            throw ContractError("total_loss: component " + name + " is not a scalar");
        }
        if (!std::isfinite(c.values()[0])) {
            throw NumericError("total_loss: component " + name + " is non-finite");
        }
        Tensor term = ops::mul_scalar(c, weights[i]);
        acc = acc.defined() ? ops::add(acc, term) : term;
    }
    return acc;
}

Interval gaussian_interval(const std::vector<double>& mu, const std::vector<double>& sigma2,
                           double alpha) {
    if (alpha <= 0.0 || alpha >= 1.0) throw ParamError("gaussian_interval: alpha outside (0,1)");
    const double z = normal_quantile(1.0 - alpha / 2.0);
    Interval iv;
    iv.lower.resize(mu.size());
    iv.upper.resize(mu.size());
    for (size_t i = 0; i < mu.size(); ++i) {
        const double s = std::sqrt(sigma2[i]);
        iv.lower[i] = std::max(0.0, mu[i] - z * s);
        iv.upper[i] = std::max(0.0, mu[i] + z * s);
    }
    return iv;
}

McStats decompose_mc(const std::vector<std::vector<double>>& mus,
                     const std::vector<std::vector<double>>& sigma2s) {
    if (mus.size() < 2) throw ParamError("decompose_mc: needs M >= 2 passes");
    if (sigma2s.size() != mus.size()) throw ContractError("decompose_mc: pass count mismatch");
    const size_t m_passes = mus.size();
    const size_t n = mus[0].size();
    McStats st;
    st.mean.assign(n, 0.0);
    st.aleatoric.assign(n, 0.0);
    st.epistemic.assign(n, 0.0);
    st.total.assign(n, 0.0);
    const double inv_m = 1.0 / static_cast<double>(m_passes);
    for (size_t i = 0; i < n; ++i) {
        double dmu = 0.0, dsig = 0.0;
        for (size_t m = 1; m < m_passes; ++m) {
            dmu += mus[m][i] - mus[0][i];
            dsig += sigma2s[m][i] - sigma2s[0][i];
        }
        st.mean[i] = mus[0][i] + dmu * inv_m;
        st.aleatoric[i] = sigma2s[0][i] + dsig * inv_m;
        double ep = 0.0;
        for (size_t m = 0; m < m_passes; ++m) {
            const double d = mus[m][i] - st.mean[i];
            ep += d * d;
        }
        st.epistemic[i] = ep * inv_m;
        st.total[i] = st.aleatoric[i] + st.epistemic[i];
    }
    return st;
}

std::string CalibrationRecord::to_json() const {
    nlohmann::json j;
    j["alpha"] = alpha;
    j["n_cal"] = n_cal;
    j["coverage_gap"] = coverage_gap;
    j["margin_c"] = margin_c;
    j["score_quantiles"] = {score_p50, score_p90, score_p99};
    return j.dump(2);
}

CalibrationRecord CalibrationRecord::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    CalibrationRecord r;
    r.alpha = j.at("alpha").get<double>();
    r.n_cal = j.at("n_cal").get<int64_t>();
    r.coverage_gap = j.at("coverage_gap").get<double>();
    r.margin_c = j.at("margin_c").get<double>();
    auto q = j.at("score_quantiles");
    r.score_p50 = q.at(0).get<double>();
    r.score_p90 = q.at(1).get<double>();
    r.score_p99 = q.at(2).get<double>();
    return r;
}

void CalibrationRecord::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << to_json() << "\n";
}

CalibrationRecord CalibrationRecord::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return from_json(text);
}

namespace {
double nearest_rank(const std::vector<double>& sorted, double p) {
    const size_t n = sorted.size();
    size_t k = static_cast<size_t>(std::ceil(p * static_cast<double>(n) - 1e-12));
    if (k < 1) k = 1;
    if (k > n) k = n;
    return sorted[k - 1];
}
}  // namespace

CalibrationRecord fit_calibration(const std::vector<double>& lower,
                                  const std::vector<double>& upper,
                                  const std::vector<double>& y, double alpha) {
    const size_t n = y.size();
    if (n == 0) throw ContractError("fit_calibration: empty calibration set");
    if (lower.size() != n || upper.size() != n) {
        throw ContractError("fit_calibration: interval/target length mismatch");
    }
    std::vector<double> scores(n);
    int64_t covered = 0;
    for (size_t i = 0; i < n; ++i) {
        scores[i] = std::max({lower[i] - y[i], y[i] - upper[i], 0.0});
        if (lower[i] <= y[i] && y[i] <= upper[i]) ++covered;
    }
    CalibrationRecord rec;
    rec.alpha = alpha;
    rec.n_cal = static_cast<int64_t>(n);
    rec.coverage_gap =
        (1.0 - alpha) - static_cast<double>(covered) / static_cast<double>(n);
    std::sort(scores.begin(), scores.end());
    const int64_t rank = static_cast<int64_t>(
        std::ceil(static_cast<double>(n + 1) * (1.0 - alpha) - 1e-12));
    rec.margin_c = (rank > static_cast<int64_t>(n)) ? scores.back()
                                                    : scores[static_cast<size_t>(rank - 1)];
    rec.score_p50 = nearest_rank(scores, 0.50);
    rec.score_p90 = nearest_rank(scores, 0.90);
    rec.score_p99 = nearest_rank(scores, 0.99);
    return rec;
}

Interval apply_calibration(const std::vector<double>& lower, const std::vector<double>& upper,
                           double c) {
    if (c < 0.0) throw ParamError("apply_calibration: margin must be >= 0");
    Interval iv;
    iv.lower.resize(lower.size());
    iv.upper.resize(upper.size());
    for (size_t i = 0; i < lower.size(); ++i) {
        iv.lower[i] = std::max(0.0, lower[i] - c);
        iv.upper[i] = upper[i] + c;
    }
    return iv;
}

}  // namespace stv
