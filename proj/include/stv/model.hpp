#ifndef STV_MODEL_HPP
#define STV_MODEL_HPP

#include <string>
#include <utility>
#include <vector>

#include "stv/backbone.hpp"
#include "stv/data.hpp"
#include "stv/stce.hpp"
#include "stv/uncertainty.hpp"

namespace stv {

enum class Variant {
    kFull,
    kNoStce,          // plain affine embedding of visits only
    kNoGMamba,        // SSM-only blocks, no adaptive graph / spatial mixing
    kNoNodeBased,     // no quantile heads; intervals from the Gaussian head
    kNoDistribution,  // constant sigma, NLL and calibration losses dropped
    kNoParameter,     // single pass, ensemble-consistency loss dropped
    kNoUq,            // quantile heads only
};

Variant variant_from_string(const std::string& s);
std::string variant_name(Variant v);
bool variant_has_quantile(Variant v);
bool variant_has_gaussian(Variant v);
bool variant_sigma_constant(Variant v);

struct ModelConfig {
    int64_t n_categories = 4;
    int64_t d_dem = 32;
    int64_t d_ext = 16;
    int64_t d_hid = 128;
    int64_t d_model = 64;
    int64_t t_in = 7;
    int64_t t_out = 3;
    int64_t n_stages = 2;
    int64_t blocks_per_stage = 2;
    int64_t n_state = 2;
    int64_t stce_kernel = 3;
    int64_t updown_kernel = 4;
    int64_t attn_dim = 16;
    double lambda = 0.5;
    double dropout = 0.3;
    std::string activation = "silu";
    std::string spatial_norm = "sym-norm+self-loop";
    Variant variant = Variant::kFull;

    // inputs are left-padded so the shape ladder divides cleanly
    int64_t pad_to() const {
        const int64_t block = 1LL << n_stages;
        return (t_in + block - 1) / block * block;
    }
    void validate() const;
};

class Model {
  public:
    static Model build(const ModelConfig& cfg, const UqConfig& uq, const GraphSpec& prior,
                       uint64_t init_seed);

    struct Output {
        Tensor lower, median, upper;  // log scale, defined when quantile heads exist
        Tensor mu, sigma2;            // log scale, defined when the Gaussian head exists
    };
    Output forward(const Tensor& v_in, const Tensor& e_in, const Tensor& statics,
                   const ExecCtx& ctx) const;

    // Finest-scale backbone features {N, pad_to, d_model} (the heads' input).
    Tensor backbone_output(const Tensor& v_in, const Tensor& e_in, const Tensor& statics,
                           const ExecCtx& ctx) const;

    const ModelConfig& config() const { return cfg_; }
    const UqConfig& uq() const { return uq_; }
    std::vector<std::pair<std::string, Tensor>>& params() { return params_; }
    const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }
    Tensor param(const std::string& name) const;
    void zero_grad();
    int64_t n_parameters() const;

    // Independent parameter storage with identical values; used by the
    // per-window training workers.
    Model clone() const;
    void copy_values_from(const Model& other);

  private:
    ModelConfig cfg_;
    UqConfig uq_;
    StceConfig stce_cfg_;
    BackboneConfig bb_cfg_;
    StceParams stce_;
    BackboneParams bb_;
    ConvParams trunk_;
    HeadParams heads_;
    Tensor embed_w_, embed_b_;  // visit-only bypass for the encoder ablation
    Tensor prior_norm_;         // normalized prior for the encoder
    Tensor prior_raw_;          // blend prior for the blocks
    GraphSpec prior_spec_;
    std::vector<std::pair<std::string, Tensor>> params_;
};

// Static covariates as a constant {N, d_dem} tensor.
Tensor statics_tensor(const DatasetBundle& b);

// M stochastic forward passes with dropout forced on; reduction is in
// pass-index order. Requires the Gaussian head and M >= 2.
McStats mc_dropout_predict(const Model& model, const Tensor& v_in, const Tensor& e_in,
                           const Tensor& statics, int64_t m_passes, uint64_t seed);

}  // namespace stv

#endif  // STV_MODEL_HPP
