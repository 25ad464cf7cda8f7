#ifndef STV_UNCERTAINTY_HPP
#define STV_UNCERTAINTY_HPP

#include <string>
#include <utility>
#include <vector>

#include "stv/backbone.hpp"
#include "stv/nn.hpp"

namespace stv {

struct UqConfig {
    double alpha = 0.1;  // miscoverage; intervals target 1 - alpha
    int64_t mc_passes = 20;  // inference-time stochastic passes
    double sigma_floor = 1e-4;
    double residual_epsilon = 1e-6;

    std::vector<double> quantile_levels() const { return {alpha / 2.0, 0.5, 1.0 - alpha / 2.0}; }
    void validate() const;
};

struct HeadParams {
    ConvParams median, gap_low, gap_up;  // quantile heads
    ConvParams mu, sigma_raw;            // Gaussian head
};

struct QuantileOut {
    Tensor lower, median, upper;  // non-crossing by construction, ReLU'd
};

// median = affine(f); lower = median - softplus(g_l(f)); upper = median +
// softplus(g_u(f)); all three pass ReLU (order is preserved).
QuantileOut quantile_heads(const Tensor& features, const HeadParams& p);

struct GaussianOut {
    Tensor mu;      // ReLU(affine)
    Tensor sigma2;  // softplus(affine) + sigma_floor, strictly positive
};
GaussianOut gaussian_head(const Tensor& features, const HeadParams& p, double sigma_floor);

// mean over levels and elements of rho_q(y - pred_q).
Tensor pinball_loss(const std::vector<Tensor>& preds, const Tensor& y,
                    const std::vector<double>& levels);

// mean of 0.5*log(sigma2) + (y-mu)^2 / (2*sigma2); constant term omitted.
Tensor nll_loss(const Tensor& mu, const Tensor& sigma2, const Tensor& y);

// (mean r)^2 + (mean r^2 - 1)^2 with r = (y-mu)/(sigma+eps).
Tensor calib_loss(const Tensor& mu, const Tensor& sigma, const Tensor& y, double eps);

// mean over elements of (1/M) sum_m (mu_m - mu_hat)^2.
Tensor param_loss(const std::vector<Tensor>& mus, const Tensor& mu_hat);

// Shifted mean mu_1 + (sum_m (mu_m - mu_1))/M: exact when all passes agree.
Tensor mc_mean(const std::vector<Tensor>& mus);

// Weighted sum; throws NumericError naming the first non-finite component.
Tensor total_loss(const std::vector<std::pair<std::string, Tensor>>& components,
                  const std::vector<double>& weights);

// ---- post-hoc plain-vector machinery ----

struct Interval {
    std::vector<double> lower, upper;
};

// mu +/- z_{1-alpha/2} * sigma, clipped at 0.
Interval gaussian_interval(const std::vector<double>& mu, const std::vector<double>& sigma2,
                           double alpha);

struct McStats {
    std::vector<double> mean, aleatoric, epistemic, total;
};

// Pass-index-ordered reduction of M stochastic passes; total is computed as
// aleatoric + epistemic so the decomposition identity is exact by
// construction, and identical passes give exactly zero epistemic variance.
McStats decompose_mc(const std::vector<std::vector<double>>& mus,
                     const std::vector<std::vector<double>>& sigma2s);

struct CalibrationRecord {
    double alpha = 0.1;
    int64_t n_cal = 0;
    double coverage_gap = 0.0;  // (1-alpha) - empirical coverage, reported only
    double margin_c = 0.0;
    double score_p50 = 0.0, score_p90 = 0.0, score_p99 = 0.0;

    std::string to_json() const;
    static CalibrationRecord from_json(const std::string& text);
    void save(const std::string& path) const;
    static CalibrationRecord load(const std::string& path);
};

// Split-conformal margin: scores s_i = max{l_i - y_i, y_i - u_i, 0};
// c is the ceil((n+1)(1-alpha))-th smallest score (max score when the rank
// exceeds n).
CalibrationRecord fit_calibration(const std::vector<double>& lower,
                                  const std::vector<double>& upper,
                                  const std::vector<double>& y, double alpha);

// [l - c, u + c], lower clipped at 0.
Interval apply_calibration(const std::vector<double>& lower, const std::vector<double>& upper,
                           double c);

}  // namespace stv

#endif  // STV_UNCERTAINTY_HPP
