#include "stv/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace stv {

GraphSpec build_gaussian_adjacency(const std::vector<std::array<double, 2>>& coords,
                                   double sigma, double epsilon) {
    if (sigma <= 0.0) throw ParamError("build_gaussian_adjacency: sigma must be > 0");
    if (epsilon < 0.0 || epsilon > 1.0) {
        throw ParamError("build_gaussian_adjacency: epsilon must be in [0,1]");
    }
    if (coords.size() < 2) throw ParamError("build_gaussian_adjacency: need at least 2 nodes");
    GraphSpec g;
    g.n_nodes = static_cast<int64_t>(coords.size());
    g.coords = coords;
    g.sigma = sigma;
    g.epsilon = epsilon;
    g.adjacency.assign(static_cast<size_t>(g.n_nodes * g.n_nodes), 0.0);
    for (int64_t i = 0; i < g.n_nodes; ++i) {
        for (int64_t j = 0; j < g.n_nodes; ++j) {
            if (i == j) continue;
            const double dx = coords[i][0] - coords[j][0];
            const double dy = coords[i][1] - coords[j][1];
            const double w = std::exp(-(dx * dx + dy * dy) / (sigma * sigma));
            if (w >= epsilon) g.adjacency[i * g.n_nodes + j] = w;
        }
    }
    return g;
}

double median_pairwise_distance(const std::vector<std::array<double, 2>>& coords) {
    std::vector<double> d;
    for (size_t i = 0; i < coords.size(); ++i) {
        for (size_t j = i + 1; j < coords.size(); ++j) {
            const double dx = coords[i][0] - coords[j][0];
            const double dy = coords[i][1] - coords[j][1];
            d.push_back(std::sqrt(dx * dx + dy * dy));
        }
    }
    if (d.empty()) return 1.0;
    std::sort(d.begin(), d.end());
    return d[d.size() / 2];
}

std::string GraphSpec::to_json() const {
    nlohmann::json j;
    j["n_nodes"] = n_nodes;
    j["sigma"] = sigma;
    j["epsilon"] = epsilon;
    auto cs = nlohmann::json::array();
    for (const auto& c : coords) cs.push_back({c[0], c[1]});
    j["coords"] = cs;
    j["adjacency"] = adjacency;
    return j.dump(2);
}

GraphSpec GraphSpec::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    GraphSpec g;
    g.n_nodes = j.at("n_nodes").get<int64_t>();
    g.sigma = j.at("sigma").get<double>();
    g.epsilon = j.at("epsilon").get<double>();
    for (const auto& c : j.at("coords")) {
        g.coords.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
    }
    g.adjacency = j.at("adjacency").get<std::vector<double>>();
    if (static_cast<int64_t>(g.adjacency.size()) != g.n_nodes * g.n_nodes) {
        throw IoError("graph.json: adjacency length does not match n_nodes^2");
    }
    return g;
}

void GraphSpec::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << to_json() << "\n";
}

GraphSpec GraphSpec::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return from_json(text);
}

SpatialNorm spatial_norm_from_string(const std::string& s) {
    if (s == "raw") return SpatialNorm::kRaw;
    if (s == "sym-norm") return SpatialNorm::kSymNorm;
    if (s == "sym-norm+self-loop") return SpatialNorm::kSymNormSelfLoop;
    throw ParamError("unknown spatial normalization: " + s);
}

std::vector<double> normalize_prior(const GraphSpec& g, SpatialNorm mode) {
    const int64_t n = g.n_nodes;
    std::vector<double> a = g.adjacency;
    if (mode == SpatialNorm::kRaw) return a;
    if (mode == SpatialNorm::kSymNormSelfLoop) {
        for (int64_t i = 0; i < n; ++i) a[i * n + i] += 1.0;
    }
    std::vector<double> rinv(static_cast<size_t>(n));
    std::vector<double> row(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < n; ++j) row[static_cast<size_t>(j)] = a[i * n + j];
        const double deg = stable_sum(row);
        rinv[static_cast<size_t>(i)] = deg > 0.0 ? 1.0 / std::sqrt(deg) : 1.0;
    }
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            a[i * n + j] *= rinv[static_cast<size_t>(i)] * rinv[static_cast<size_t>(j)];
        }
    }
    return a;
}

Tensor pool_node_embedding(const Tensor& x) {
    if (x.rank() != 3) {
        throw ShapeError("pool_node_embedding: expects {N,T,d}, got " + shape_str(x.shape()));
    }
    return ops::mean_axis(x, 1);
}

Tensor adaptive_affinity(const Tensor& u, const Tensor& w_u, const Tensor& attn_vec,
                         double leaky_slope) {
    if (u.rank() != 2) throw ShapeError("adaptive_affinity: u must be {N,d}");
    const int64_t dp = w_u.dim(1);
    if (attn_vec.rank() != 1 || attn_vec.dim(0) != 2 * dp) {
        throw ShapeError("adaptive_affinity: attention vector must have length 2*d_proj");
    }
    Tensor p = ops::matmul(u, w_u);  // {N, d'}
    auto halves = ops::split_last(attn_vec, {dp, dp});
    Tensor s_self = ops::reshape(ops::matmul(p, ops::reshape(halves[0], {dp, 1})), {u.dim(0)});
    Tensor s_peer = ops::reshape(ops::matmul(p, ops::reshape(halves[1], {dp, 1})), {u.dim(0)});
    Tensor scores = ops::leaky_relu(ops::outer_sum(s_self, s_peer), leaky_slope);
    return ops::row_softmax(scores);
}

SymNormPair symmetrize_normalize(const Tensor& alpha) {
    if (alpha.rank() != 2 || alpha.dim(0) != alpha.dim(1)) {
        throw ShapeError("symmetrize_normalize: expects square matrix");
    }
    const int64_t n = alpha.dim(0);
    Tensor sym = ops::mul_scalar(ops::add(alpha, ops::transpose2d(alpha)), 0.5);
    Tensor deg = ops::sum_axis(sym, 1);              // {N}
    Tensor rinv = ops::rsqrt_guarded(deg);           // {N}, zero-degree -> 1
    Tensor scale = ops::matmul(ops::reshape(rinv, {n, 1}), ops::reshape(rinv, {1, n}));
    return SymNormPair{sym, ops::mul(sym, scale)};
}

Tensor blend_adjacency(const Tensor& prior, const Tensor& learned, double lambda) {
    if (lambda < 0.0 || lambda > 1.0) {
        throw ParamError("blend_adjacency: lambda must be in [0,1]");
    }
    if (!prior.defined()) return learned;
    if (prior.shape() != learned.shape()) {
        throw ShapeError("blend_adjacency: prior " + shape_str(prior.shape()) + " vs learned " +
                         shape_str(learned.shape()));
    }
    return ops::add(ops::mul_scalar(prior, lambda), ops::mul_scalar(learned, 1.0 - lambda));
}

}  // namespace stv
