#ifndef STV_BACKBONE_HPP
#define STV_BACKBONE_HPP

#include <string>
#include <vector>

#include "stv/exec.hpp"
#include "stv/graph.hpp"
#include "stv/nn.hpp"

namespace stv {

// Hierarchical U-shaped backbone of G-Mamba blocks: adaptive-graph spatial
// mixing, selective state-space temporal mixing, channel mixing and residual
// projection per block; strided down/up sampling along time between scales;
// skip fusion on the way back up.

struct SsmParams {
    // State diagonal is parameterized as -softplus(a_raw) so it stays
    // strictly negative and the discretized factor stays inside (0,1).
    Tensor a_raw;        // {d, n_state}
    Tensor w_dt, b_dt;   // {d,d}, {d}
    Tensor w_b, w_c;     // {d, n_state}
    Tensor skip;         // {d}
};

Tensor ssm_apply(const Tensor& x, const SsmParams& p);

struct GMambaBlockParams {
    Tensor w_u, attn;        // adaptive graph: {d, d_attn}, {2*d_attn}
    Tensor w_g, b_g;         // spatial conv
    SsmParams ssm;
    Tensor ln1_g, ln1_b;
    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
    Tensor w_o, b_o;
    Tensor ln2_g, ln2_b;
};

struct ConvParams {
    Tensor w, b;
};

struct BackboneConfig {
    int64_t d_model = 64;
    int64_t n_stages = 2;        // S
    int64_t blocks_per_stage = 2;
    int64_t n_state = 2;
    int64_t kernel_size = 4;     // down/up sampling kernel
    int64_t attn_dim = 16;
    double lambda = 0.5;
    double dropout = 0.3;
    bool spatial_mixing = true;  // off for the SSM-only ablation
    Act activation = Act::kSilu;

    int64_t scale_width(int64_t s) const { return d_model << s; }
};

struct BackboneParams {
    std::vector<std::vector<GMambaBlockParams>> enc_blocks;  // per stage
    std::vector<ConvParams> down;
    std::vector<GMambaBlockParams> bottleneck;
    std::vector<ConvParams> up;    // indexed by target scale
    std::vector<ConvParams> fuse;  // indexed by scale
    std::vector<std::vector<GMambaBlockParams>> dec_blocks;
};

Tensor gmamba_block(const Tensor& x, const Tensor& prior, const GMambaBlockParams& p,
                    const BackboneConfig& cfg, const ExecCtx& ctx, const std::string& site);

// Stride-2 temporal convolution, channel width doubles; T must be >= 2.
Tensor down_sample(const Tensor& x, const ConvParams& p, const BackboneConfig& cfg);
// Transposed stride-2 temporal convolution; output trimmed to target_len.
Tensor up_sample(const Tensor& x, const ConvParams& p, const BackboneConfig& cfg,
                 int64_t target_len);

Tensor fuse_skip(const Tensor& y_enc, const Tensor& y_dec, const ConvParams& p);

// Full encoder/bottleneck/decoder pass; returns the finest-scale output
// {N, T_in, d_model}. T_in must be divisible by 2^S.
Tensor backbone_forward(const Tensor& r, const Tensor& prior, const BackboneParams& p,
                        const BackboneConfig& cfg, const ExecCtx& ctx);

// Flattens time x channel per node and maps to {N, T_out, d_head}.
Tensor output_head(const Tensor& z0, const ConvParams& head, int64_t t_out, int64_t d_head);

}  // namespace stv

#endif  // STV_BACKBONE_HPP
