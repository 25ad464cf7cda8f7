#include "stv/backbone.hpp"

namespace stv {

Tensor ssm_apply(const Tensor& x, const SsmParams& p) {
    Tensor a = ops::mul_scalar(ops::softplus(p.a_raw), -1.0);
    return ops::ssm_scan(x, a, p.w_dt, p.b_dt, p.w_b, p.w_c, p.skip);
}

Tensor gmamba_block(const Tensor& x, const Tensor& prior, const GMambaBlockParams& p,
                    const BackboneConfig& cfg, const ExecCtx& ctx, const std::string& site) {
    Tensor g = x;
    if (cfg.spatial_mixing) {
        Tensor u = pool_node_embedding(x);
        Tensor alpha = adaptive_affinity(u, p.w_u, p.attn);
        SymNormPair sn = symmetrize_normalize(alpha);
        Tensor a_star = blend_adjacency(prior, sn.normalized, cfg.lambda);
        Tensor mixed = ops::graph_mix(a_star, affine_last(x, p.w_g));
        g = ops::add(ops::relu(ops::add(mixed, p.b_g)), x);
    }
    Tensor tm = ops::add(ssm_apply(g, p.ssm), g);
    Tensor normed = ops::layer_norm(tm, p.ln1_g, p.ln1_b);
    Tensor mlp = chan_mlp(normed, p.mlp_w1, p.mlp_b1, p.mlp_w2, p.mlp_b2, cfg.activation);
    mlp = ops::dropout(mlp, cfg.dropout, ctx.stream(site.c_str()), ctx.dropout_on);
    Tensor cm = ops::add(mlp, tm);
    Tensor o = ops::layer_norm(affine_last(cm, p.w_o, p.b_o), p.ln2_g, p.ln2_b);
    return ops::add(o, x);
}

Tensor down_sample(const Tensor& x, const ConvParams& p, const BackboneConfig& cfg) {
    if (x.dim(1) < 2) {
        throw ContractError("down_sample: temporal length must be >= 2, got " +
                            std::to_string(x.dim(1)));
    }
    return ops::strided_conv1d(x, p.w, p.b, 2);
}

namespace {
Tensor trim_time(const Tensor& x, int64_t target_len) {
    if (x.dim(1) == target_len) return x;
    if (x.dim(1) < target_len) {
        throw ShapeError("trim_time: cannot grow " + std::to_string(x.dim(1)) + " to " +
                         std::to_string(target_len));
    }
    // drop trailing frames via split along time after a transpose-free view:
    // reshape to rows and copy the kept prefix per node
    const int64_t n = x.dim(0), t = x.dim(1), d = x.dim(2);
    Tensor flat = ops::reshape(x, {n, t * d});
    auto parts = ops::split_last(flat, {target_len * d, (t - target_len) * d});
    return ops::reshape(parts[0], {n, target_len, d});
}
}  // namespace

Tensor up_sample(const Tensor& x, const ConvParams& p, const BackboneConfig& cfg,
                 int64_t target_len) {
    Tensor y = ops::transposed_conv1d(x, p.w, p.b, 2);
    return trim_time(y, target_len);
}

Tensor fuse_skip(const Tensor& y_enc, const Tensor& y_dec, const ConvParams& p) {
    if (y_enc.shape() != y_dec.shape()) {
        throw ShapeError("fuse_skip: " + shape_str(y_enc.shape()) + " vs " +
                         shape_str(y_dec.shape()));
    }
    return affine_last(ops::concat_last({y_enc, y_dec}), p.w, p.b);
}

Tensor backbone_forward(const Tensor& r, const Tensor& prior, const BackboneParams& p,
                        const BackboneConfig& cfg, const ExecCtx& ctx) {
    const int64_t s_total = cfg.n_stages;
    if (r.dim(1) % (1LL << s_total) != 0) {
        throw ConfigError("backbone: T_in=" + std::to_string(r.dim(1)) +
                          " is not divisible by 2^S");
    }
    Tensor x = r;
    std::vector<Tensor> skips(static_cast<size_t>(s_total));
    for (int64_t s = 0; s < s_total; ++s) {
        Tensor y = x;
        for (size_t b = 0; b < p.enc_blocks[static_cast<size_t>(s)].size(); ++b) {
            y = gmamba_block(y, prior, p.enc_blocks[static_cast<size_t>(s)][b], cfg, ctx,
                             "bb.enc.s" + std::to_string(s) + ".b" + std::to_string(b));
        }
        skips[static_cast<size_t>(s)] = y;
        x = down_sample(y, p.down[static_cast<size_t>(s)], cfg);
    }
    Tensor z = x;
    for (size_t b = 0; b < p.bottleneck.size(); ++b) {
        z = gmamba_block(z, prior, p.bottleneck[b], cfg, ctx, "bb.mid.b" + std::to_string(b));
    }
    for (int64_t s = s_total - 1; s >= 0; --s) {
        const Tensor& y_enc = skips[static_cast<size_t>(s)];
        Tensor y_hat = up_sample(z, p.up[static_cast<size_t>(s)], cfg, y_enc.dim(1));
        z = fuse_skip(y_enc, y_hat, p.fuse[static_cast<size_t>(s)]);
        for (size_t b = 0; b < p.dec_blocks[static_cast<size_t>(s)].size(); ++b) {
            z = gmamba_block(z, prior, p.dec_blocks[static_cast<size_t>(s)][b], cfg, ctx,
                             "bb.dec.s" + std::to_string(s) + ".b" + std::to_string(b));
        }
    }
    return z;
}

Tensor output_head(const Tensor& z0, const ConvParams& head, int64_t t_out, int64_t d_head) {
    const int64_t n = z0.dim(0), t = z0.dim(1), d = z0.dim(2);
    Tensor flat = ops::reshape(z0, {n, t * d});
    Tensor y = ops::add(ops::matmul(flat, head.w), head.b);
    if (head.w.dim(1) != t_out * d_head) {
        throw ShapeError("output_head: weight maps to " + std::to_string(head.w.dim(1)) +
                         " but t_out*d_head=" + std::to_string(t_out * d_head));
    }
    return ops::reshape(y, {n, t_out, d_head});
}

}  // namespace stv
