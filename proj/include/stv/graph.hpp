#ifndef STV_GRAPH_HPP
#define STV_GRAPH_HPP

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "stv/ops.hpp"

namespace stv {

// Prior spatial graph over planar node coordinates.
struct GraphSpec {
    int64_t n_nodes = 0;
    std::vector<std::array<double, 2>> coords;
    double sigma = 1.0;
    double epsilon = 0.1;
    std::vector<double> adjacency;  // n x n, row-major, zero diagonal

    double at(int64_t i, int64_t j) const { return adjacency[i * n_nodes + j]; }
    std::string to_json() const;
    static GraphSpec from_json(const std::string& text);
    void save(const std::string& path) const;
    static GraphSpec load(const std::string& path);
};

// a_ij = exp(-d_ij^2 / sigma^2) when i != j and the value clears epsilon,
// else 0. Distances are Euclidean between node centroids.
GraphSpec build_gaussian_adjacency(const std::vector<std::array<double, 2>>& coords,
                                   double sigma, double epsilon);

double median_pairwise_distance(const std::vector<std::array<double, 2>>& coords);

// Degree-normalized variants of a fixed prior, used by the encoder.
enum class SpatialNorm { kRaw, kSymNorm, kSymNormSelfLoop };
SpatialNorm spatial_norm_from_string(const std::string& s);
std::vector<double> normalize_prior(const GraphSpec& g, SpatialNorm mode);

// ---- adaptive graph learning (differentiable) ----

// Mean over the time axis: {N,T,d} -> {N,d}.
Tensor pool_node_embedding(const Tensor& x);

// Attention affinities: scores_ij = LeakyReLU(a . [W_u u_i || W_u u_j]),
// rows softmaxed. attn_vec has length 2*d_proj.
Tensor adaptive_affinity(const Tensor& u, const Tensor& w_u, const Tensor& attn_vec,
                         double leaky_slope = 0.2);

struct SymNormPair {
    Tensor symmetric;   // (alpha + alpha^T) / 2
    Tensor normalized;  // D^{-1/2} sym D^{-1/2}, zero-degree rows left zero
};
SymNormPair symmetrize_normalize(const Tensor& alpha);

// lambda * prior + (1 - lambda) * learned; prior may be undefined.
Tensor blend_adjacency(const Tensor& prior, const Tensor& learned, double lambda);

}  // namespace stv

#endif  // STV_GRAPH_HPP
