#include "stv/stce.hpp"

namespace stv {

Act act_from_string(const std::string& s) {
    if (s == "silu") return Act::kSilu;
    if (s == "gelu") return Act::kGelu;
    if (s == "relu") return Act::kRelu;
    throw ParamError("unknown activation: " + s);
}

Tensor affine_last(const Tensor& x, const Tensor& w, const Tensor& b) {
    return ops::add(affine_last(x, w), b);
}

Tensor affine_last(const Tensor& x, const Tensor& w) {
    if (w.rank() != 2 || x.last_dim() != w.dim(0)) {
        throw ShapeError("affine_last: x " + shape_str(x.shape()) + " vs w " +
                         shape_str(w.shape()));
    }
    const int64_t rows = x.size() / x.last_dim();
    Tensor flat = ops::reshape(x, {rows, x.last_dim()});
    Tensor y = ops::matmul(flat, w);
    Shape os(x.shape().begin(), x.shape().end() - 1);
    os.push_back(w.dim(1));
    return ops::reshape(y, os);
}

Tensor chan_mlp(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                const Tensor& b2, Act act) {
    return affine_last(apply_act(affine_last(x, w1, b1), act), w2, b2);
}

StceEmbeds embed_inputs(const Tensor& visits, const Tensor& statics, const Tensor& external,
                        const StceParams& p, const StceConfig& cfg, const ExecCtx& ctx) {
    if (visits.rank() != 3 || external.rank() != 3 || visits.dim(1) != external.dim(1)) {
        throw ShapeError("embed_inputs: visits and externals must agree on T");
    }
    StceEmbeds h;
    h.visits = ops::dropout(apply_act(affine_last(visits, p.w_v, p.b_v), cfg.activation),
                            cfg.dropout, ctx.stream("stce.embed.v"), ctx.dropout_on);
    h.statics = ops::dropout(apply_act(affine_last(statics, p.w_d, p.b_d), cfg.activation),
                             cfg.dropout, ctx.stream("stce.embed.d"), ctx.dropout_on);
    h.external = ops::dropout(apply_act(affine_last(external, p.w_e, p.b_e), cfg.activation),
                              cfg.dropout, ctx.stream("stce.embed.e"), ctx.dropout_on);
    return h;
}

Tensor fuse_initial(const StceEmbeds& h) {
    const int64_t t_len = h.visits.dim(1);
    return ops::add(ops::add(h.visits, ops::broadcast_time(h.statics, t_len)), h.external);
}

Tensor spatial_encode(const Tensor& x, const Tensor& prior_norm, const StceParams& p) {
    Tensor projected = affine_last(x, p.w_g);
    Tensor mixed = ops::graph_mix(prior_norm, projected);
    return ops::relu(ops::add(mixed, p.b_g));
}

Tensor temporal_mix(const Tensor& x, const StceParams& p, const StceConfig& cfg) {
    Tensor u = ops::add(ops::depthwise_conv1d(x, p.kernel), x);
    Tensor normed = ops::layer_norm(u, p.ln1_g, p.ln1_b);
    Tensor mixed = chan_mlp(normed, p.mlp_w1, p.mlp_b1, p.mlp_w2, p.mlp_b2, cfg.activation);
    return ops::add(mixed, u);
}

Tensor project_output(const Tensor& x_hat, const Tensor& h_static, const StceParams& p,
                      const StceConfig& cfg, const ExecCtx& ctx) {
    const int64_t t_len = x_hat.dim(1);
    Tensor joined = ops::concat_last({x_hat, ops::broadcast_time(h_static, t_len)});
    Tensor z = ops::layer_norm(affine_last(joined, p.w_p, p.b_p), p.ln2_g, p.ln2_b);
    Tensor r = ops::silu(affine_last(z, p.w_o, p.b_o));
    return ops::dropout(r, cfg.dropout, ctx.stream("stce.proj"), ctx.dropout_on);
}

Tensor stce_forward(const Tensor& visits, const Tensor& statics, const Tensor& external,
                    const Tensor& prior_norm, const StceParams& p, const StceConfig& cfg,
                    const ExecCtx& ctx) {
    StceEmbeds h = embed_inputs(visits, statics, external, p, cfg, ctx);
    Tensor fused = fuse_initial(h);
    Tensor spatial = spatial_encode(fused, prior_norm, p);
    Tensor mixed = temporal_mix(spatial, p, cfg);
    return project_output(mixed, h.statics, p, cfg, ctx);
}

}  // namespace stv
