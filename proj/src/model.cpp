#include "stv/model.hpp"

#include <cmath>

namespace stv {

Variant variant_from_string(const std::string& s) {
    if (s == "full") return Variant::kFull;
    if (s == "w/o STCE" || s == "no-stce") return Variant::kNoStce;
    if (s == "w/o G-Mamba" || s == "no-gmamba") return Variant::kNoGMamba;
    if (s == "w/o Node-based" || s == "no-node") return Variant::kNoNodeBased;
    if (s == "w/o Distribution-based" || s == "no-dist") return Variant::kNoDistribution;
    if (s == "w/o Parameter-based" || s == "no-param") return Variant::kNoParameter;
    if (s == "w/o UQ" || s == "no-uq") return Variant::kNoUq;
    throw ParamError("unknown variant: " + s);
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::kFull: return "full";
        case Variant::kNoStce: return "w/o STCE";
        case Variant::kNoGMamba: return "w/o G-Mamba";
        case Variant::kNoNodeBased: return "w/o Node-based";
        case Variant::kNoDistribution: return "w/o Distribution-based";
        case Variant::kNoParameter: return "w/o Parameter-based";
        case Variant::kNoUq: return "w/o UQ";
    }
    throw ContractError("variant_name: bad enum");
}

bool variant_has_quantile(Variant v) { return v != Variant::kNoNodeBased; }
bool variant_has_gaussian(Variant v) { return v != Variant::kNoUq; }
bool variant_sigma_constant(Variant v) { return v == Variant::kNoDistribution; }

void ModelConfig::validate() const {
    if (n_categories < 1 || d_dem < 1 || d_ext < 1 || d_hid < 1 || d_model < 1) {
        throw ConfigError("model dims must be positive");
    }
    if (t_in < 1 || t_out < 1) throw ConfigError("t_in and t_out must be >= 1");
    if (n_stages < 0 || blocks_per_stage < 1) {
        throw ConfigError("n_stages must be >= 0 and blocks_per_stage >= 1");
    }
    if (n_state < 1) throw ConfigError("n_state must be >= 1");
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda must be in [0,1]");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
    if (pad_to() % (1LL << n_stages) != 0) {
        throw ConfigError("pad_to must be divisible by 2^n_stages");
    }
    act_from_string(activation);
    spatial_norm_from_string(spatial_norm);
}

namespace {

class ParamFactory {
  public:
    ParamFactory(std::vector<std::pair<std::string, Tensor>>& reg, uint64_t seed)
        : reg_(reg), seed_(seed) {}

    Tensor uniform(const std::string& name, Shape shape, int64_t fan_in) {
        const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
        return fill(name, std::move(shape), [&](uint64_t key, uint64_t i) {
            return (2.0 * hash01(key, i) - 1.0) * bound;
        });
    }
    Tensor constant(const std::string& name, Shape shape, double v) {
        return fill(name, std::move(shape), [&](uint64_t, uint64_t) { return v; });
    }
    Tensor uniform_range(const std::string& name, Shape shape, double lo, double hi) {
        return fill(name, std::move(shape), [&](uint64_t key, uint64_t i) {
            return lo + (hi - lo) * hash01(key, i);
        });
    }

  private:
    template <typename Fn>
    Tensor fill(const std::string& name, Shape shape, Fn fn) {
        const uint64_t key = mix_keys(seed_, fnv1a(name));
        std::vector<double> v(static_cast<size_t>(numel(shape)));
        for (size_t i = 0; i < v.size(); ++i) v[i] = fn(key, static_cast<uint64_t>(i));
        Tensor t = Tensor::param(std::move(shape), std::move(v));
        reg_.emplace_back(name, t);
        return t;
    }
    std::vector<std::pair<std::string, Tensor>>& reg_;
    uint64_t seed_;
};

GMambaBlockParams build_block(ParamFactory& f, const std::string& prefix, int64_t d,
                              int64_t attn_dim, int64_t n_state, bool spatial) {
    GMambaBlockParams p;
    if (spatial) {
        p.w_u = f.uniform(prefix + ".w_u", {d, attn_dim}, d);
        p.attn = f.uniform(prefix + ".attn", {2 * attn_dim}, attn_dim);
        p.w_g = f.uniform(prefix + ".w_g", {d, d}, d);
        p.b_g = f.constant(prefix + ".b_g", {d}, 0.0);
    }
    p.ssm.a_raw = f.uniform_range(prefix + ".ssm.a_raw", {d, n_state}, 0.5, 1.5);
    p.ssm.w_dt = f.uniform(prefix + ".ssm.w_dt", {d, d}, d);
    p.ssm.b_dt = f.constant(prefix + ".ssm.b_dt", {d}, 0.0);
    p.ssm.w_b = f.uniform(prefix + ".ssm.w_b", {d, n_state}, d);
    p.ssm.w_c = f.uniform(prefix + ".ssm.w_c", {d, n_state}, d);
    p.ssm.skip = f.constant(prefix + ".ssm.skip", {d}, 1.0);
    p.ln1_g = f.constant(prefix + ".ln1_g", {d}, 1.0);
    p.ln1_b = f.constant(prefix + ".ln1_b", {d}, 0.0);
    p.mlp_w1 = f.uniform(prefix + ".mlp_w1", {d, d}, d);
    p.mlp_b1 = f.constant(prefix + ".mlp_b1", {d}, 0.0);
    p.mlp_w2 = f.uniform(prefix + ".mlp_w2", {d, d}, d);
    p.mlp_b2 = f.constant(prefix + ".mlp_b2", {d}, 0.0);
    p.w_o = f.uniform(prefix + ".w_o", {d, d}, d);
    p.b_o = f.constant(prefix + ".b_o", {d}, 0.0);
    p.ln2_g = f.constant(prefix + ".ln2_g", {d}, 1.0);
    p.ln2_b = f.constant(prefix + ".ln2_b", {d}, 0.0);
    return p;
}

ConvParams build_affine(ParamFactory& f, const std::string& prefix, int64_t in, int64_t out) {
    ConvParams p;
    p.w = f.uniform(prefix + ".w", {in, out}, in);
    p.b = f.constant(prefix + ".b", {out}, 0.0);
    return p;
}

}  // namespace

Model Model::build(const ModelConfig& cfg, const UqConfig& uq, const GraphSpec& prior,
                   uint64_t init_seed) {
    cfg.validate();
    Model m;
    m.cfg_ = cfg;
    m.uq_ = uq;

    m.stce_cfg_.n_categories = cfg.n_categories;
    m.stce_cfg_.d_dem = cfg.d_dem;
    m.stce_cfg_.d_ext = cfg.d_ext;
    m.stce_cfg_.d_hid = cfg.d_hid;
    m.stce_cfg_.d_model = cfg.d_model;
    m.stce_cfg_.kernel_size = cfg.stce_kernel;
    m.stce_cfg_.dropout = cfg.dropout;
    m.stce_cfg_.activation = act_from_string(cfg.activation);
    m.stce_cfg_.spatial_norm = spatial_norm_from_string(cfg.spatial_norm);

    m.bb_cfg_.d_model = cfg.d_model;
    m.bb_cfg_.n_stages = cfg.n_stages;
    m.bb_cfg_.blocks_per_stage = cfg.blocks_per_stage;
    m.bb_cfg_.n_state = cfg.n_state;
    m.bb_cfg_.kernel_size = cfg.updown_kernel;
    m.bb_cfg_.attn_dim = cfg.attn_dim;
    m.bb_cfg_.lambda = cfg.lambda;
    m.bb_cfg_.dropout = cfg.dropout;
    m.bb_cfg_.spatial_mixing = cfg.variant != Variant::kNoGMamba;
    m.bb_cfg_.activation = act_from_string(cfg.activation);

    m.prior_spec_ = prior;
    m.prior_raw_ = Tensor::from({prior.n_nodes, prior.n_nodes}, prior.adjacency);
    m.prior_norm_ = Tensor::from({prior.n_nodes, prior.n_nodes},
                                 normalize_prior(prior, m.stce_cfg_.spatial_norm));

    ParamFactory f(m.params_, init_seed);
    if (cfg.variant == Variant::kNoStce) {
        m.embed_w_ = f.uniform("enc.w", {cfg.n_categories, cfg.d_model}, cfg.n_categories);
        m.embed_b_ = f.constant("enc.b", {cfg.d_model}, 0.0);
    } else {
        auto& s = m.stce_;
        s.w_v = f.uniform("stce.w_v", {cfg.n_categories, cfg.d_hid}, cfg.n_categories);
        s.b_v = f.constant("stce.b_v", {cfg.d_hid}, 0.0);
        s.w_d = f.uniform("stce.w_d", {cfg.d_dem, cfg.d_hid}, cfg.d_dem);
        s.b_d = f.constant("stce.b_d", {cfg.d_hid}, 0.0);
        s.w_e = f.uniform("stce.w_e", {cfg.d_ext, cfg.d_hid}, cfg.d_ext);
        s.b_e = f.constant("stce.b_e", {cfg.d_hid}, 0.0);
        s.w_g = f.uniform("stce.w_g", {cfg.d_hid, cfg.d_hid}, cfg.d_hid);
        s.b_g = f.constant("stce.b_g", {cfg.d_hid}, 0.0);
        s.kernel = f.uniform("stce.kernel", {cfg.d_hid, cfg.stce_kernel}, cfg.stce_kernel);
        s.ln1_g = f.constant("stce.ln1_g", {cfg.d_hid}, 1.0);
        s.ln1_b = f.constant("stce.ln1_b", {cfg.d_hid}, 0.0);
        s.mlp_w1 = f.uniform("stce.mlp_w1", {cfg.d_hid, cfg.d_hid}, cfg.d_hid);
        s.mlp_b1 = f.constant("stce.mlp_b1", {cfg.d_hid}, 0.0);
        s.mlp_w2 = f.uniform("stce.mlp_w2", {cfg.d_hid, cfg.d_hid}, cfg.d_hid);
        s.mlp_b2 = f.constant("stce.mlp_b2", {cfg.d_hid}, 0.0);
        s.w_p = f.uniform("stce.w_p", {2 * cfg.d_hid, cfg.d_model}, 2 * cfg.d_hid);
        s.b_p = f.constant("stce.b_p", {cfg.d_model}, 0.0);
        s.ln2_g = f.constant("stce.ln2_g", {cfg.d_model}, 1.0);
        s.ln2_b = f.constant("stce.ln2_b", {cfg.d_model}, 0.0);
        s.w_o = f.uniform("stce.w_o", {cfg.d_model, cfg.d_model}, cfg.d_model);
        s.b_o = f.constant("stce.b_o", {cfg.d_model}, 0.0);
    }

    const bool spatial = m.bb_cfg_.spatial_mixing;
    const int64_t s_total = cfg.n_stages;
    m.bb_.enc_blocks.resize(static_cast<size_t>(s_total));
    m.bb_.dec_blocks.resize(static_cast<size_t>(s_total));
    m.bb_.down.resize(static_cast<size_t>(s_total));
    m.bb_.up.resize(static_cast<size_t>(s_total));
    m.bb_.fuse.resize(static_cast<size_t>(s_total));
    for (int64_t s = 0; s < s_total; ++s) {
        const int64_t d = m.bb_cfg_.scale_width(s);
        const int64_t d_next = m.bb_cfg_.scale_width(s + 1);
        for (int64_t bi = 0; bi < cfg.blocks_per_stage; ++bi) {
            m.bb_.enc_blocks[static_cast<size_t>(s)].push_back(
                build_block(f, "bb.enc" + std::to_string(s) + ".b" + std::to_string(bi), d,
                            cfg.attn_dim, cfg.n_state, spatial));
            m.bb_.dec_blocks[static_cast<size_t>(s)].push_back(
                build_block(f, "bb.dec" + std::to_string(s) + ".b" + std::to_string(bi), d,
                            cfg.attn_dim, cfg.n_state, spatial));
        }
        auto& down = m.bb_.down[static_cast<size_t>(s)];
        down.w = f.uniform("bb.down" + std::to_string(s) + ".w", {d_next, d, cfg.updown_kernel},
                           d * cfg.updown_kernel);
        down.b = f.constant("bb.down" + std::to_string(s) + ".b", {d_next}, 0.0);
        auto& up = m.bb_.up[static_cast<size_t>(s)];
        up.w = f.uniform("bb.up" + std::to_string(s) + ".w", {d_next, d, cfg.updown_kernel},
                         d_next * cfg.updown_kernel);
        up.b = f.constant("bb.up" + std::to_string(s) + ".b", {d}, 0.0);
        m.bb_.fuse[static_cast<size_t>(s)] =
            build_affine(f, "bb.fuse" + std::to_string(s), 2 * d, d);
    }
    {
        const int64_t d_mid = m.bb_cfg_.scale_width(s_total);
        for (int64_t bi = 0; bi < cfg.blocks_per_stage; ++bi) {
            m.bb_.bottleneck.push_back(build_block(f, "bb.mid.b" + std::to_string(bi), d_mid,
                                                   cfg.attn_dim, cfg.n_state, spatial));
        }
    }

    const int64_t d_head = cfg.d_model;
    m.trunk_ = build_affine(f, "head.trunk", cfg.pad_to() * cfg.d_model, cfg.t_out * d_head);
    if (variant_has_quantile(cfg.variant)) {
        m.heads_.median = build_affine(f, "head.median", d_head, cfg.n_categories);
        m.heads_.gap_low = build_affine(f, "head.gap_low", d_head, cfg.n_categories);
        m.heads_.gap_up = build_affine(f, "head.gap_up", d_head, cfg.n_categories);
    }
    if (variant_has_gaussian(cfg.variant)) {
        m.heads_.mu = build_affine(f, "head.mu", d_head, cfg.n_categories);
        if (!variant_sigma_constant(cfg.variant)) {
            m.heads_.sigma_raw = build_affine(f, "head.sigma_raw", d_head, cfg.n_categories);
        }
    }
    return m;
}

Tensor Model::backbone_output(const Tensor& v_in, const Tensor& e_in, const Tensor& statics,
                              const ExecCtx& ctx) const {
    Tensor r;
    if (cfg_.variant == Variant::kNoStce) {
        r = ops::add(affine_last(v_in, embed_w_), embed_b_);
    } else {
        r = stce_forward(v_in, statics, e_in, prior_norm_, stce_, stce_cfg_, ctx);
    }
    return backbone_forward(r, prior_raw_, bb_, bb_cfg_, ctx);
}

Model::Output Model::forward(const Tensor& v_in, const Tensor& e_in, const Tensor& statics,
                             const ExecCtx& ctx) const {
    Tensor z0 = backbone_output(v_in, e_in, statics, ctx);
    Tensor feat = output_head(z0, trunk_, cfg_.t_out, cfg_.d_model);

    Output out;
    if (variant_has_quantile(cfg_.variant)) {
        QuantileOut q = quantile_heads(feat, heads_);
        out.lower = q.lower;
        out.median = q.median;
        out.upper = q.upper;
    }
    if (variant_has_gaussian(cfg_.variant)) {
        if (variant_sigma_constant(cfg_.variant)) {
            out.mu = ops::relu(affine_last(feat, heads_.mu.w, heads_.mu.b));
            out.sigma2 = Tensor::full(out.mu.shape(), 1.0);
        } else {
            GaussianOut g = gaussian_head(feat, heads_, uq_.sigma_floor);
            out.mu = g.mu;
            out.sigma2 = g.sigma2;
        }
    }
    return out;
}

Tensor Model::param(const std::string& name) const {
    for (const auto& [n, t] : params_) {
        if (n == name) return t;
    }
    throw ContractError("unknown parameter: " + name);
}

void Model::zero_grad() {
    for (auto& [n, t] : params_) t.zero_grad();
}

int64_t Model::n_parameters() const {
    int64_t n = 0;
    for (const auto& [nm, t] : params_) n += t.size();
    return n;
}

Model Model::clone() const {
    Model m = Model::build(cfg_, uq_, prior_spec_, 0);
    m.copy_values_from(*this);
    return m;
}

void Model::copy_values_from(const Model& other) {
    if (other.params_.size() != params_.size()) {
        throw ContractError("copy_values_from: parameter sets differ");
    }
    for (size_t i = 0; i < params_.size(); ++i) {
        params_[i].second.values() = other.params_[i].second.values();
    }
}

Tensor statics_tensor(const DatasetBundle& b) {
    return Tensor::from({b.config.n_nodes, b.config.d_dem}, b.demographics);
}

McStats mc_dropout_predict(const Model& model, const Tensor& v_in, const Tensor& e_in,
                           const Tensor& statics, int64_t m_passes, uint64_t seed) {
    if (m_passes < 2) throw ParamError("mc_dropout_predict: M must be >= 2");
    if (!variant_has_gaussian(model.config().variant)) {
        throw ContractError("mc_dropout_predict: model has no Gaussian head");
    }
    std::vector<std::vector<double>> mus, sig2s;
    for (int64_t m = 0; m < m_passes; ++m) {
        ExecCtx ctx;
        ctx.dropout_on = true;
        ctx.seed = seed;
        ctx.pass = static_cast<uint64_t>(m);
        Model::Output out = model.forward(v_in, e_in, statics, ctx);
        mus.push_back(out.mu.values());
        sig2s.push_back(out.sigma2.values());
    }
    return decompose_mc(mus, sig2s);
}

}  // namespace stv
