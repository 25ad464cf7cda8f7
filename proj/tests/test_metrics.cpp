#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "stv/metrics.hpp"
#include "test_util.hpp"

using namespace stv;

TEST_CASE("mae and rmse hand values") {
    CHECK(metrics::mae({1, 2, 3}, {1, 2, 3}) == 0.0);
    CHECK(metrics::mae({0, 2}, {1, 1}) == 1.0);
    CHECK(metrics::rmse({1, 2}, {1, 2}) == 0.0);
    CHECK(metrics::rmse({3, 4}, {0, 0}) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));
    CHECK_THROWS_AS(metrics::mae({}, {}), ContractError);
}

TEST_CASE("rmse dominates mae on random inputs") {
    for (uint64_t seed = 0; seed < 100; ++seed) {
        auto y = stv_test::rand_vec(seed, 17, -4.0, 4.0);
        auto p = stv_test::rand_vec(seed + 1000, 17, -4.0, 4.0);
        CHECK(metrics::rmse(y, p) >= metrics::mae(y, p) - 1e-12);
    }
}

TEST_CASE("mpiw hand values and crossing guard") {
    CHECK(metrics::mpiw({1, 1}, {1, 1}) == 0.0);
    CHECK(metrics::mpiw({0, 0}, {1, 3}) == 2.0);
    CHECK_THROWS_AS(metrics::mpiw({2}, {1}), ContractError);
}

TEST_CASE("interval score: width-only when covered, exact penalty case, boundary") {
    const std::vector<double> lo = {0, 1}, up = {2, 3}, y = {1, 2};
    CHECK(metrics::interval_score(lo, up, y, 0.1) == metrics::mpiw(lo, up));

    CHECK(metrics::interval_score({0.0}, {1.0}, {1.5}, 0.1) ==
          doctest::Approx(11.0).epsilon(1e-15));

    // boundary hit: indicator is strict, no penalty
    CHECK(metrics::interval_score({0.0}, {1.0}, {1.0}, 0.1) == 1.0);
}

TEST_CASE("interval score dominates mpiw with equality iff fully covered") {
    for (uint64_t seed = 0; seed < 50; ++seed) {
        const size_t n = 23;
        std::vector<double> lo(n), up(n), y(n);
        bool all_in = true;
        for (size_t i = 0; i < n; ++i) {
            lo[i] = hash01(seed, 3 * i);
            up[i] = lo[i] + hash01(seed, 3 * i + 1);
            y[i] = 2.0 * hash01(seed, 3 * i + 2);
            if (y[i] < lo[i] || y[i] > up[i]) all_in = false;
        }
        const double is = metrics::interval_score(lo, up, y, 0.2);
        const double w = metrics::mpiw(lo, up);
        CHECK(is >= w - 1e-15);
        if (all_in) CHECK(is == w);
        if (is == w) {
            for (size_t i = 0; i < n; ++i) {
                CHECK(y[i] >= lo[i]);
                CHECK(y[i] <= up[i]);
            }
        }
    }
}

TEST_CASE("coverage uses strict inequalities") {
    CHECK(metrics::coverage({0, 0}, {2, 2}, {1, 1}) == 100.0);
    CHECK(metrics::coverage({1.0}, {2.0}, {1.0}) == 0.0);  // boundary counts as a miss
    CHECK(metrics::coverage({0, 0, 0, 0}, {1, 1, 1, 1}, {0.5, 0.5, 0.5, 2.0}) == 75.0);
}

TEST_CASE("metrics agree with brute-force recomputation on random instances") {
    for (uint64_t seed = 0; seed < 100; ++seed) {
        const size_t n = 11;
        std::vector<double> y(n), p(n), lo(n), up(n);
        for (size_t i = 0; i < n; ++i) {
            y[i] = 5.0 * hash01(seed, 4 * i);
            p[i] = 5.0 * hash01(seed, 4 * i + 1);
            lo[i] = p[i] - hash01(seed, 4 * i + 2);
            up[i] = p[i] + hash01(seed, 4 * i + 3);
        }
        double mae_w = 0, mse_w = 0, w_w = 0, is_w = 0;
        int64_t cov_w = 0;
        const double alpha = 0.1;
        for (size_t i = 0; i < n; ++i) {
            mae_w += std::abs(y[i] - p[i]);
            mse_w += (y[i] - p[i]) * (y[i] - p[i]);
            w_w += up[i] - lo[i];
            double term = up[i] - lo[i];
            if (y[i] < lo[i]) term += (2.0 / alpha) * (lo[i] - y[i]);
            if (y[i] > up[i]) term += (2.0 / alpha) * (y[i] - up[i]);
            is_w += term;
            if (lo[i] < y[i] && y[i] < up[i]) ++cov_w;
        }
        CHECK(std::abs(metrics::mae(y, p) - mae_w / n) < 1e-12);
        CHECK(std::abs(metrics::rmse(y, p) - std::sqrt(mse_w / n)) < 1e-12);
        CHECK(std::abs(metrics::mpiw(lo, up) - w_w / n) < 1e-12);
        CHECK(std::abs(metrics::interval_score(lo, up, y, alpha) - is_w / n) < 1e-12);
        CHECK(metrics::coverage(lo, up, y) == 100.0 * cov_w / static_cast<double>(n));
    }
}

TEST_CASE("selective regression curve") {
    const size_t n = 40;
    std::vector<double> y(n), p(n), unc(n);
    for (size_t i = 0; i < n; ++i) {
        y[i] = 10.0 * hash01(7, i);
        p[i] = y[i] + (hash01(8, i) - 0.5);
        unc[i] = std::abs(y[i] - p[i]);  // perfectly rank-correlated
    }
    std::vector<double> grid;
    for (int i = 1; i <= 10; ++i) grid.push_back(0.1 * i);
    auto curve = metrics::selective_regression_curve(p, unc, y, grid);
    CHECK(curve.back().second == doctest::Approx(metrics::mae(y, p)).epsilon(1e-12));
    for (size_t i = 1; i < curve.size(); ++i) CHECK(curve[i].second >= curve[i - 1].second);

    // brute-force oracle: sort by (uncertainty, index) then slice
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return unc[a] < unc[b]; });
    for (auto [f, got] : curve) {
        size_t k = static_cast<size_t>(std::llround(f * n));
        double s = 0.0;
        for (size_t i = 0; i < k; ++i) s += std::abs(y[order[i]] - p[order[i]]);
        CHECK(got == s / static_cast<double>(k));
    }
}

TEST_CASE("reliability curve") {
    // degenerate zero-width intervals cover nothing
    std::vector<double> y = stv_test::rand_vec(9, 50, 1.0, 2.0);
    auto zero_iv = [&](double) {
        Interval iv;
        iv.lower.assign(y.size(), 0.5);
        iv.upper.assign(y.size(), 0.5);
        return iv;
    };
    auto pts = metrics::reliability_curve({0.5, 0.9}, zero_iv, y, "test");
    for (const auto& p : pts) CHECK(p.empirical == 0.0);

    // true-Gaussian oracle stays within 3 binomial standard errors
    const size_t n = 5000;
    std::vector<double> mu(n), sigma2(n), yy(n);
    for (size_t i = 0; i < n; ++i) {
        mu[i] = 10.0 + 2.0 * hash01(11, i);
        sigma2[i] = 0.5 + hash01(12, i);
        yy[i] = mu[i] + std::sqrt(sigma2[i]) * hash_normal(13, i);
    }
    auto gauss_iv = [&](double level) {
        return gaussian_interval(mu, sigma2, 1.0 - level);
    };
    auto gp = metrics::reliability_curve({0.5, 0.8, 0.9, 0.95}, gauss_iv, yy, "gaussian");
    for (const auto& p : gp) {
        const double se = std::sqrt(p.nominal * (1.0 - p.nominal) / static_cast<double>(n));
        CHECK(std::abs(p.empirical - p.nominal) <= 3.0 * se);
    }
}

TEST_CASE("eval report serialization carries the five metrics") {
    std::vector<double> y = {1, 2, 3, 4}, p = {1, 2, 2, 5}, lo = {0, 1, 1, 3},
                        up = {2, 3, 3, 6};
    EvalReport rep;
    rep.alpha = 0.1;
    rep.calibrated = true;
    rep.overall = make_metric_block(y, p, lo, up, 0.1, true);
    rep.median_mae = metrics::mae(y, p);
    const std::string j = rep.to_json();
    for (const char* key : {"mae", "rmse", "mpiw", "interval_score", "coverage", "median_mae"}) {
        CHECK(j.find(key) != std::string::npos);
    }
    const std::string csv = rep.to_csv();
    CHECK(csv.find("split,category,horizon,mae,rmse,mpiw,interval_score,coverage") == 0);

    // interval metrics absent for the quantile-only convention
    EvalReport bare;
    bare.overall = make_metric_block(y, p, lo, up, 0.1, false);
    CHECK(bare.to_json().find("interval_score") == std::string::npos);
}
