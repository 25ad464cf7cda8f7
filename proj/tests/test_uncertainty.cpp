#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <limits>

#include "doctest.h"
#include "stv/metrics.hpp"
#include "stv/uncertainty.hpp"
#include "test_util.hpp"

using namespace stv;
using stv_test::rand_tensor;

namespace {
HeadParams zero_heads(int64_t d, int64_t c) {
    HeadParams h;
    auto z = [&](ConvParams& p) {
        p.w = Tensor::zeros({d, c});
        p.b = Tensor::zeros({c});
    };
    z(h.median);
    z(h.gap_low);
    z(h.gap_up);
    z(h.mu);
    z(h.sigma_raw);
    return h;
}
}  // namespace

TEST_CASE("quantile heads: zero parameters give (0, 0, ln 2) after ReLU") {
    HeadParams h = zero_heads(4, 2);
    Tensor f = rand_tensor(1, {3, 2, 4});
    QuantileOut q = quantile_heads(f, h);
    for (double v : q.lower.values()) CHECK(v == 0.0);
    for (double v : q.median.values()) CHECK(v == 0.0);
    for (double v : q.upper.values()) CHECK(v == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("quantile heads: collapsed gaps and exact ordering") {
    HeadParams h = zero_heads(4, 2);
    for (auto& v : h.gap_low.b.values()) v = -50.0;  // softplus(-50) ~ 2e-22
    for (auto& v : h.gap_up.b.values()) v = -50.0;
    h.median.w = rand_tensor(2, {4, 2});
    Tensor f = rand_tensor(3, {5, 3, 4});
    QuantileOut q = quantile_heads(f, h);
    for (int64_t i = 0; i < q.median.size(); ++i) {
        CHECK(q.lower.values()[i] == doctest::Approx(q.median.values()[i]).epsilon(1e-12));
        CHECK(q.upper.values()[i] == doctest::Approx(q.median.values()[i]).epsilon(1e-12));
    }

    HeadParams hr = zero_heads(4, 2);
    hr.median.w = rand_tensor(4, {4, 2});
    hr.gap_low.w = rand_tensor(5, {4, 2});
    hr.gap_up.w = rand_tensor(6, {4, 2});
    QuantileOut qr = quantile_heads(f, hr);
    for (int64_t i = 0; i < qr.median.size(); ++i) {
        CHECK(qr.lower.values()[i] <= qr.median.values()[i]);
        CHECK(qr.median.values()[i] <= qr.upper.values()[i]);
        CHECK(qr.lower.values()[i] >= 0.0);
    }
}

TEST_CASE("pinball loss hand values") {
    Tensor y2 = Tensor::from({1}, {2.0});
    Tensor q0 = Tensor::from({1}, {0.0});
    CHECK(pinball_loss({q0}, y2, {0.5}).item() == doctest::Approx(1.0).epsilon(1e-15));

    Tensor y1 = Tensor::from({1}, {1.0});
    CHECK(pinball_loss({q0}, y1, {0.9}).item() == doctest::Approx(0.9).epsilon(1e-15));
    Tensor ym1 = Tensor::from({1}, {-1.0});
    CHECK(pinball_loss({q0}, ym1, {0.9}).item() == doctest::Approx(0.1).epsilon(1e-15));

    CHECK_THROWS_AS(pinball_loss({}, y1, {}), ContractError);
}

TEST_CASE("pinball loss matches a brute-force recompute and halves the MAE at q=0.5") {
    Tensor y = rand_tensor(11, {4, 5}, 0.0, 3.0);
    Tensor pred = rand_tensor(12, {4, 5}, 0.0, 3.0);
    const std::vector<double> levels = {0.05, 0.5, 0.95};
    Tensor loss = pinball_loss({pred, pred, pred}, y, levels);
    double want = 0.0;
    for (double q : levels) {
        double s = 0.0;
        for (int64_t i = 0; i < y.size(); ++i) {
            const double z = y.values()[i] - pred.values()[i];
            s += std::max(q * z, (q - 1.0) * z);
        }
        want += s / static_cast<double>(y.size());
    }
    want /= 3.0;
    CHECK(std::abs(loss.item() - want) < 1e-12);

    const double half_mae = pinball_loss({pred}, y, {0.5}).item();
    CHECK(half_mae == 0.5 * metrics::mae(y.values(), pred.values()));
}

TEST_CASE("gaussian head values") {
    HeadParams h = zero_heads(4, 3);
    Tensor f = rand_tensor(21, {2, 2, 4});
    GaussianOut g = gaussian_head(f, h, 1e-4);
    for (double v : g.mu.values()) CHECK(v == 0.0);
    for (double v : g.sigma2.values()) {
        CHECK(v == doctest::Approx(std::log(2.0) + 1e-4).epsilon(1e-12));
    }

    h.mu.w = rand_tensor(22, {4, 3});
    h.sigma_raw.w = rand_tensor(23, {4, 3});
    GaussianOut gr = gaussian_head(f, h, 1e-4);
    for (double v : gr.sigma2.values()) CHECK(v > 0.0);
}

TEST_CASE("nll loss hand values and contract") {
    Tensor y = Tensor::from({2}, {1.0, 2.0});
    CHECK(nll_loss(y, Tensor::full({2}, 1.0), y).item() == doctest::Approx(0.0).epsilon(1e-15));
    Tensor mu = Tensor::from({2}, {0.0, 1.0});
    CHECK(nll_loss(mu, Tensor::full({2}, 1.0), y).item() ==
          doctest::Approx(0.5).epsilon(1e-15));
    const double e2 = std::exp(2.0);
    CHECK(nll_loss(y, Tensor::full({2}, e2), y).item() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(nll_loss(y, Tensor::full({2}, 0.0), y), ContractError);
}

TEST_CASE("normal quantiles are accurate to 1e-8") {
    CHECK(std::abs(normal_quantile(0.95) - 1.6448536269514722) < 1e-8);
    CHECK(std::abs(normal_quantile(0.75) - 0.6744897501960817) < 1e-8);
    CHECK(std::abs(normal_quantile(0.0005) + normal_quantile(0.9995)) < 1e-8);
}

TEST_CASE("gaussian intervals") {
    Interval iv = gaussian_interval({10.0}, {1.0}, 0.1);
    CHECK(iv.lower[0] == doctest::Approx(8.3551).epsilon(1e-3));
    CHECK(iv.upper[0] == doctest::Approx(11.6449).epsilon(1e-3));

    Interval point = gaussian_interval({3.0}, {0.0}, 0.1);
    CHECK(point.lower[0] == 3.0);
    CHECK(point.upper[0] == 3.0);

    Interval clipped = gaussian_interval({0.5}, {4.0}, 0.1);
    CHECK(clipped.lower[0] == 0.0);
}

TEST_CASE("mc decomposition: identity, hand case, exact zero epistemic") {
    std::vector<std::vector<double>> mus = {{1.0, 2.0}, {3.0, 2.0}};
    std::vector<std::vector<double>> sig = {{0.5, 0.5}, {0.7, 0.5}};
    McStats st = decompose_mc(mus, sig);
    CHECK(st.mean[0] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(st.epistemic[0] == doctest::Approx(1.0).epsilon(1e-15));
    for (size_t i = 0; i < st.total.size(); ++i) {
        CHECK(st.total[i] == st.aleatoric[i] + st.epistemic[i]);  // bitwise by construction
    }

    // identical passes (dropout rate 0): epistemic must be exactly zero
    std::vector<double> base = stv_test::rand_vec(31, 7, 0.0, 5.0);
    std::vector<std::vector<double>> same(20, base);
    McStats z = decompose_mc(same, same);
    for (size_t i = 0; i < z.epistemic.size(); ++i) {
        CHECK(z.epistemic[i] == 0.0);
        CHECK(z.mean[i] == base[i]);
    }
    CHECK_THROWS_AS(decompose_mc({base}, {base}), ParamError);
}

TEST_CASE("param loss: identical passes give zero, hand case, brute force") {
    Tensor a = rand_tensor(41, {3, 2});
    Tensor mu_hat = mc_mean({a, a, a});
    CHECK(param_loss({a, a, a}, mu_hat).item() == 0.0);

    Tensor p0 = Tensor::from({1}, {0.0});
    Tensor p1 = Tensor::from({1}, {2.0});
    Tensor mh = mc_mean({p0, p1});
    CHECK(mh.item() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(param_loss({p0, p1}, mh).item() == doctest::Approx(1.0).epsilon(1e-15));

    Tensor r1 = rand_tensor(42, {2, 3});
    Tensor r2 = rand_tensor(43, {2, 3});
    Tensor r3 = rand_tensor(44, {2, 3});
    Tensor rh = mc_mean({r1, r2, r3});
    double want = 0.0;
    for (int64_t i = 0; i < r1.size(); ++i) {
        const double m = rh.values()[i];
        want += ((r1.values()[i] - m) * (r1.values()[i] - m) +
                 (r2.values()[i] - m) * (r2.values()[i] - m) +
                 (r3.values()[i] - m) * (r3.values()[i] - m)) / 3.0;
    }
    want /= static_cast<double>(r1.size());
    CHECK(std::abs(param_loss({r1, r2, r3}, rh).item() - want) < 1e-12);
    CHECK_THROWS_AS(param_loss({r1}, rh), ParamError);
}

TEST_CASE("calibration loss hand values and brute force") {
    const double eps = 1e-6;
    Tensor mu = Tensor::zeros({2});
    Tensor sigma = Tensor::full({2}, 1.0);
    Tensor y = Tensor::from({2}, {1.0 + eps, -(1.0 + eps)});
    CHECK(calib_loss(mu, sigma, y, eps).item() == doctest::Approx(0.0).epsilon(1e-15));

    Tensor y0 = Tensor::zeros({2});
    CHECK(calib_loss(mu, sigma, y0, eps).item() == doctest::Approx(1.0).epsilon(1e-15));

    Tensor rm = rand_tensor(51, {6}, 0.0, 2.0);
    Tensor rs = rand_tensor(52, {6}, 0.5, 1.5);
    Tensor ry = rand_tensor(53, {6}, 0.0, 2.0);
    double m1 = 0.0, m2 = 0.0;
    for (int64_t i = 0; i < 6; ++i) {
        const double r = (ry.values()[i] - rm.values()[i]) / (rs.values()[i] + eps);
        m1 += r;
        m2 += r * r;
    }
    m1 /= 6.0;
    m2 /= 6.0;
    const double want = m1 * m1 + (m2 - 1.0) * (m2 - 1.0);
    CHECK(std::abs(calib_loss(rm, rs, ry, eps).item() - want) < 1e-12);
}

TEST_CASE("total loss: weighted sum, ablation by zero weight, non-finite naming") {
    auto c = [](double v) { return Tensor::scalar(v); };
    std::vector<std::pair<std::string, Tensor>> comps = {
        {"quant", c(1.0)}, {"nll", c(2.0)}, {"param", c(3.0)}, {"calib", c(4.0)}};
    CHECK(total_loss(comps, {1, 1, 1, 1}).item() == doctest::Approx(10.0).epsilon(1e-15));
    CHECK(total_loss(comps, {1, 0, 1, 0}).item() == doctest::Approx(4.0).epsilon(1e-15));

    comps[2].second = c(0.0);
    comps[2].second.values()[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(total_loss(comps, {1, 1, 1, 1}), doctest::Contains("param"),
                         NumericError);
}

TEST_CASE("split-conformal margin: worked rank cases") {
    // all covered with slack at alpha = 0.5
    CalibrationRecord r1 = fit_calibration({0, 0, 0}, {1, 1, 1}, {0.5, 0.5, 0.5}, 0.5);
    CHECK(r1.margin_c == 0.0);
    CHECK(r1.coverage_gap == doctest::Approx(-0.5).epsilon(1e-12));

    // rank exceeds n -> max score
    CalibrationRecord r2 = fit_calibration({0, 0, 0}, {1, 1, 1}, {0.5, 1.2, 2.0}, 0.1);
    CHECK(r2.margin_c == 1.0);
    CHECK(r2.n_cal == 3);

    // perfect coverage at exactly 1 - alpha
    CalibrationRecord r3 = fit_calibration({0, 0, 0, 0}, {1, 1, 1, 2}, {0.5, 0.5, 0.5, 3.0}, 0.25);
    CHECK(r3.coverage_gap == doctest::Approx(0.0).epsilon(1e-12));

    CHECK_THROWS_AS(fit_calibration({}, {}, {}, 0.1), ContractError);
}

TEST_CASE("apply_calibration widens and clips") {
    Interval id = apply_calibration({2.0}, {4.0}, 0.0);
    CHECK(id.lower[0] == 2.0);
    CHECK(id.upper[0] == 4.0);
    Interval w = apply_calibration({2.0}, {4.0}, 1.0);
    CHECK(w.lower[0] == 1.0);
    CHECK(w.upper[0] == 5.0);
    Interval cl = apply_calibration({0.5}, {4.0}, 1.0);
    CHECK(cl.lower[0] == 0.0);
    CHECK(cl.upper[0] == 5.0);
    CHECK_THROWS_AS(apply_calibration({1.0}, {2.0}, -0.1), ParamError);
}

TEST_CASE("coverage is monotone in the margin") {
    const size_t n = 500;
    std::vector<double> lo(n), up(n), y(n);
    for (size_t i = 0; i < n; ++i) {
        y[i] = 10.0 * hash01(61, i);
        const double m = 10.0 * hash01(62, i);
        lo[i] = m - 2.0 * hash01(63, i);
        up[i] = m + 2.0 * hash01(64, i);
    }
    double prev = -1.0;
    for (double c : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0}) {
        Interval iv = apply_calibration(lo, up, c);
        const double cov = metrics::coverage(iv.lower, iv.upper, y);
        CHECK(cov >= prev);
        prev = cov;
    }
}

TEST_CASE("exchangeable calibration achieves target coverage") {
    // iid setting: intervals of random width around noisy point predictions
    const size_t n_cal = 800, n_test = 2500;
    const double alpha = 0.1;
    // midpoints sit well above zero so the count-style lower clip stays inactive
    auto gen = [](uint64_t key, size_t n, std::vector<double>& lo, std::vector<double>& up,
                  std::vector<double>& y) {
        lo.resize(n);
        up.resize(n);
        y.resize(n);
        for (size_t i = 0; i < n; ++i) {
            const double mu = 15.0 + 20.0 * hash01(key, 3 * i);
            y[i] = mu + 3.0 * hash_normal(key + 7, i);
            lo[i] = mu - 1.0;
            up[i] = mu + 1.0;
        }
    };
    std::vector<double> lo_c, up_c, y_c, lo_t, up_t, y_t;
    gen(100, n_cal, lo_c, up_c, y_c);
    gen(200, n_test, lo_t, up_t, y_t);
    CalibrationRecord rec = fit_calibration(lo_c, up_c, y_c, alpha);
    Interval iv = apply_calibration(lo_t, up_t, rec.margin_c);
    const double cov = metrics::coverage(iv.lower, iv.upper, y_t);
    CHECK(cov >= 100.0 * (1.0 - alpha) - 3.0);
}

TEST_CASE("calibration record JSON uses the exact field names") {
    CalibrationRecord rec = fit_calibration({0, 0}, {1, 1}, {0.5, 2.0}, 0.2);
    const std::string text = rec.to_json();
    for (const char* key : {"alpha", "n_cal", "coverage_gap", "margin_c", "score_quantiles"}) {
        CHECK(text.find(key) != std::string::npos);
    }
    CalibrationRecord back = CalibrationRecord::from_json(text);
    CHECK(back.margin_c == rec.margin_c);
    CHECK(back.n_cal == rec.n_cal);
    CHECK(back.alpha == rec.alpha);
}
