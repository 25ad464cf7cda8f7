#ifndef STV_STCE_HPP
#define STV_STCE_HPP

#include "stv/exec.hpp"
#include "stv/graph.hpp"
#include "stv/nn.hpp"

namespace stv {

// Context encoder: embeds visits, static attributes and external factors,
// fuses them, runs a per-time graph convolution over the prior adjacency,
// mixes along time, and projects to {N, T_in, d_model}.

struct StceConfig {
    int64_t n_categories = 4;
    int64_t d_dem = 32;
    int64_t d_ext = 16;
    int64_t d_hid = 128;
    int64_t d_model = 64;
    int64_t kernel_size = 3;
    double dropout = 0.3;
    Act activation = Act::kSilu;
    SpatialNorm spatial_norm = SpatialNorm::kSymNormSelfLoop;
};

struct StceParams {
    Tensor w_v, b_v;      // {C,d_hid}, {d_hid}
    Tensor w_d, b_d;      // {d_dem,d_hid}
    Tensor w_e, b_e;      // {d_ext,d_hid}
    Tensor w_g, b_g;      // {d_hid,d_hid}
    Tensor kernel;        // {d_hid,k}
    Tensor ln1_g, ln1_b;  // {d_hid}
    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
    Tensor w_p, b_p;      // {2*d_hid,d_model}
    Tensor ln2_g, ln2_b;  // {d_model}
    Tensor w_o, b_o;      // {d_model,d_model}
};

struct StceEmbeds {
    Tensor visits;    // {N,T,d_hid}
    Tensor statics;   // {N,d_hid}
    Tensor external;  // {N,T,d_hid}
};

StceEmbeds embed_inputs(const Tensor& visits, const Tensor& statics, const Tensor& external,
                        const StceParams& p, const StceConfig& cfg, const ExecCtx& ctx);

Tensor fuse_initial(const StceEmbeds& h);

// prior_norm is the degree-normalized prior adjacency as an {N,N} tensor.
Tensor spatial_encode(const Tensor& x, const Tensor& prior_norm, const StceParams& p);

Tensor temporal_mix(const Tensor& x, const StceParams& p, const StceConfig& cfg);

Tensor project_output(const Tensor& x_hat, const Tensor& h_static, const StceParams& p,
                      const StceConfig& cfg, const ExecCtx& ctx);

Tensor stce_forward(const Tensor& visits, const Tensor& statics, const Tensor& external,
                    const Tensor& prior_norm, const StceParams& p, const StceConfig& cfg,
                    const ExecCtx& ctx);

}  // namespace stv

#endif  // STV_STCE_HPP
