#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "stv/graph.hpp"
#include "test_util.hpp"

using namespace stv;
using stv_test::rand_tensor;

TEST_CASE("gaussian adjacency: coincident, analytic and thresholded pairs") {
    std::vector<std::array<double, 2>> coords = {{0.0, 0.0}, {0.0, 0.0}};
    GraphSpec g = build_gaussian_adjacency(coords, 2.0, 0.5);
    CHECK(g.at(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(g.at(0, 0) == 0.0);

    coords = {{0.0, 0.0}, {2.0, 0.0}};
    g = build_gaussian_adjacency(coords, 2.0, 0.1);  // d = sigma
    CHECK(g.at(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

    coords = {{0.0, 0.0}, {6.0, 0.0}};
    g = build_gaussian_adjacency(coords, 2.0, 0.1);  // d = 3 sigma, exp(-9) < 0.1
    CHECK(g.at(0, 1) == 0.0);

    CHECK_THROWS_AS(build_gaussian_adjacency(coords, 0.0, 0.1), ParamError);
}

TEST_CASE("gaussian adjacency is symmetric with zero diagonal") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        std::vector<std::array<double, 2>> coords;
        for (int i = 0; i < 9; ++i) {
            coords.push_back({10.0 * hash01(seed, 2 * i), 10.0 * hash01(seed, 2 * i + 1)});
        }
        GraphSpec g = build_gaussian_adjacency(coords, median_pairwise_distance(coords), 0.1);
        for (int64_t i = 0; i < g.n_nodes; ++i) {
            CHECK(g.at(i, i) == 0.0);
            for (int64_t j = 0; j < g.n_nodes; ++j) {
                CHECK(g.at(i, j) == g.at(j, i));
                CHECK(g.at(i, j) >= 0.0);
                if (i != j && g.at(i, j) != 0.0) CHECK(g.at(i, j) >= g.epsilon);
            }
        }
    }
}

TEST_CASE("pooling over time") {
    Tensor x = Tensor::from({2, 1, 2}, {1.0, 2.0, 3.0, 4.0});
    Tensor u = pool_node_embedding(x);
    CHECK(u.values() == std::vector<double>{1.0, 2.0, 3.0, 4.0});

    Tensor c = Tensor::full({3, 4, 2}, 7.5);
    CHECK(pool_node_embedding(c).values() == std::vector<double>(6, 7.5));

    Tensor two = Tensor::from({1, 2, 1}, {1.0, 3.0});
    CHECK(pool_node_embedding(two).values()[0] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("adaptive affinity: identical embeddings give uniform rows; N=1 gives [[1]]") {
    Tensor u = Tensor::full({4, 3}, 0.8);
    Tensor w = rand_tensor(5, {3, 2});
    Tensor a = rand_tensor(6, {4});
    Tensor alpha = adaptive_affinity(u, w, a);
    for (double v : alpha.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

    Tensor u1 = rand_tensor(7, {1, 3});
    Tensor alpha1 = adaptive_affinity(u1, w, a);
    CHECK(alpha1.values() == std::vector<double>{1.0});
}

TEST_CASE("adaptive affinity matches a brute-force recompute") {
    const int64_t n = 3, d = 4, dp = 2;
    Tensor u = rand_tensor(11, {n, d});
    Tensor w = rand_tensor(12, {d, dp});
    Tensor a = rand_tensor(13, {2 * dp});
    Tensor alpha = adaptive_affinity(u, w, a);

    // independent recompute with plain loops
    std::vector<double> p(static_cast<size_t>(n * dp), 0.0);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t k = 0; k < dp; ++k) {
            for (int64_t e = 0; e < d; ++e) {
                p[i * dp + k] += u.values()[i * d + e] * w.values()[e * dp + k];
            }
        }
    }
    for (int64_t i = 0; i < n; ++i) {
        std::vector<double> row(static_cast<size_t>(n));
        for (int64_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (int64_t k = 0; k < dp; ++k) {
                s += a.values()[k] * p[i * dp + k] + a.values()[dp + k] * p[j * dp + k];
            }
            row[static_cast<size_t>(j)] = s > 0.0 ? s : 0.2 * s;
        }
        double mx = *std::max_element(row.begin(), row.end());
        double denom = 0.0;
        for (double& v : row) {
            v = std::exp(v - mx);
            denom += v;
        }
        for (int64_t j = 0; j < n; ++j) {
            CHECK(alpha.values()[i * n + j] ==
                  doctest::Approx(row[static_cast<size_t>(j)] / denom).epsilon(1e-12));
        }
    }
}

TEST_CASE("adaptive affinity is permutation-equivariant (exact)") {
    const int64_t n = 5, d = 3, dp = 2;
    Tensor u = rand_tensor(17, {n, d});
    Tensor w = rand_tensor(18, {d, dp});
    Tensor a = rand_tensor(19, {2 * dp});
    Tensor alpha = adaptive_affinity(u, w, a);

    const std::vector<int64_t> perm = {3, 0, 4, 1, 2};
    Tensor up = Tensor::zeros({n, d});
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t k = 0; k < d; ++k) {
            up.values()[perm[i] * d + k] = u.values()[i * d + k];
        }
    }
    Tensor alphap = adaptive_affinity(up, w, a);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            CHECK(alphap.values()[perm[i] * n + perm[j]] == alpha.values()[i * n + j]);
        }
    }
}

TEST_CASE("symmetrize/normalize hand cases") {
    Tensor sym_in = Tensor::from({2, 2}, {0.1, 0.9, 0.9, 0.1});
    auto pair = symmetrize_normalize(sym_in);
    CHECK(stv_test::max_abs_diff(pair.symmetric.values(), sym_in.values()) == 0.0);

    Tensor alpha = Tensor::from({2, 2}, {0.0, 1.0, 0.0, 0.0});
    pair = symmetrize_normalize(alpha);
    CHECK(pair.symmetric.values() == std::vector<double>{0.0, 0.5, 0.5, 0.0});
    CHECK(pair.normalized.values()[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pair.normalized.values()[2] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pair.normalized.values()[0] == 0.0);

    Tensor one = Tensor::from({1, 1}, {1.0});
    pair = symmetrize_normalize(one);
    CHECK(pair.normalized.values()[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("symmetrized transpose equality is exact") {
    Tensor alpha = rand_tensor(23, {6, 6}, 0.0, 1.0);
    auto pair = symmetrize_normalize(alpha);
    for (int64_t i = 0; i < 6; ++i) {
        for (int64_t j = 0; j < 6; ++j) {
            CHECK(pair.symmetric.values()[i * 6 + j] == pair.symmetric.values()[j * 6 + i]);
        }
    }
}

TEST_CASE("normalized adjacency has spectral radius <= 1") {
    for (uint64_t seed = 0; seed < 6; ++seed) {
        Tensor alpha = rand_tensor(seed + 41, {8, 8}, 0.0, 1.0);
        auto pair = symmetrize_normalize(alpha);
        std::vector<double> v = stv_test::rand_vec(seed + 51, 8, 0.1, 1.0);
        double lambda = 0.0;
        for (int iter = 0; iter < 300; ++iter) {
            std::vector<double> nv(8, 0.0);
            for (int64_t i = 0; i < 8; ++i) {
                for (int64_t j = 0; j < 8; ++j) {
                    nv[i] += pair.normalized.values()[i * 8 + j] * v[static_cast<size_t>(j)];
                }
            }
            double norm = 0.0;
            for (double x : nv) norm += x * x;
            norm = std::sqrt(norm);
            if (norm == 0.0) break;
            for (double& x : nv) x /= norm;
            lambda = norm;
            v = nv;
        }
        CHECK(lambda <= 1.0 + 1e-6);
    }
}

TEST_CASE("blend: endpoints, arithmetic, monotonicity, errors") {
    Tensor a0 = Tensor::from({2, 2}, {0.0, 1.0, 1.0, 0.0});
    Tensor ah = Tensor::from({2, 2}, {0.0, 0.2, 0.2, 0.0});
    CHECK(stv_test::max_abs_diff(blend_adjacency(a0, ah, 1.0).values(), a0.values()) == 0.0);
    CHECK(stv_test::max_abs_diff(blend_adjacency(a0, ah, 0.0).values(), ah.values()) == 0.0);
    Tensor mid = blend_adjacency(a0, ah, 0.5);
    CHECK(mid.values()[1] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK_THROWS_AS(blend_adjacency(a0, ah, 1.5), ParamError);

    Tensor absent;
    CHECK(stv_test::max_abs_diff(blend_adjacency(absent, ah, 0.7).values(), ah.values()) == 0.0);

    // monotone per entry when a0 >= ah entrywise
    double prev = -1.0;
    for (double lam : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const double v = blend_adjacency(a0, ah, lam).values()[1];
        CHECK(v >= prev);
        prev = v;
    }
}

TEST_CASE("graph spec JSON round trip uses the exact field names") {
    std::vector<std::array<double, 2>> coords = {{0.0, 0.0}, {1.5, 2.5}, {3.0, 1.0}};
    GraphSpec g = build_gaussian_adjacency(coords, 2.0, 0.1);
    const std::string text = g.to_json();
    for (const char* key : {"n_nodes", "sigma", "epsilon", "coords", "adjacency"}) {
        CHECK(text.find(key) != std::string::npos);
    }
    GraphSpec h = GraphSpec::from_json(text);
    CHECK(h.n_nodes == g.n_nodes);
    CHECK(h.sigma == g.sigma);
    CHECK(h.epsilon == g.epsilon);
    CHECK(h.adjacency == g.adjacency);
}

TEST_CASE("prior normalization modes") {
    std::vector<std::array<double, 2>> coords = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
    GraphSpec g = build_gaussian_adjacency(coords, 1.0, 0.0);
    auto raw = normalize_prior(g, SpatialNorm::kRaw);
    CHECK(raw == g.adjacency);
    auto sym = normalize_prior(g, SpatialNorm::kSymNormSelfLoop);
    CHECK(sym[0] > 0.0);  // self-loop survives normalization
    auto nosl = normalize_prior(g, SpatialNorm::kSymNorm);
    CHECK(nosl[0] == 0.0);
}
