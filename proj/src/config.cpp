#include "stv/config.hpp"

#include <fstream>

namespace stv {

namespace {
template <typename T>
void opt(const njson& j, const char* key, T& field) {
    if (j.contains(key)) field = j.at(key).get<T>();
}
}  // namespace

njson model_config_to_json(const ModelConfig& c) {
    njson j;
    j["n_categories"] = c.n_categories;
    j["d_dem"] = c.d_dem;
    j["d_ext"] = c.d_ext;
    j["d_hid"] = c.d_hid;
    j["d_model"] = c.d_model;
    j["t_in"] = c.t_in;
    j["t_out"] = c.t_out;
    j["n_stages"] = c.n_stages;
    j["blocks_per_stage"] = c.blocks_per_stage;
    j["n_state"] = c.n_state;
    j["stce_kernel"] = c.stce_kernel;
    j["updown_kernel"] = c.updown_kernel;
    j["attn_dim"] = c.attn_dim;
    j["lambda"] = c.lambda;
    j["dropout"] = c.dropout;
    j["activation"] = c.activation;
    j["spatial_norm"] = c.spatial_norm;
    j["variant"] = variant_name(c.variant);
    return j;
}

ModelConfig model_config_from_json(const njson& j) {
    reject_unknown_keys(j,
                        {"n_categories", "d_dem", "d_ext", "d_hid", "d_model", "t_in", "t_out",
                         "n_stages", "blocks_per_stage", "n_state", "stce_kernel",
                         "updown_kernel", "attn_dim", "lambda", "dropout", "activation",
                         "spatial_norm", "variant"},
                        "model config");
    ModelConfig c;
    opt(j, "n_categories", c.n_categories);
    opt(j, "d_dem", c.d_dem);
    opt(j, "d_ext", c.d_ext);
    opt(j, "d_hid", c.d_hid);
    opt(j, "d_model", c.d_model);
    opt(j, "t_in", c.t_in);
    opt(j, "t_out", c.t_out);
    opt(j, "n_stages", c.n_stages);
    opt(j, "blocks_per_stage", c.blocks_per_stage);
    opt(j, "n_state", c.n_state);
    opt(j, "stce_kernel", c.stce_kernel);
    opt(j, "updown_kernel", c.updown_kernel);
    opt(j, "attn_dim", c.attn_dim);
    opt(j, "lambda", c.lambda);
    opt(j, "dropout", c.dropout);
    opt(j, "activation", c.activation);
    opt(j, "spatial_norm", c.spatial_norm);
    if (j.contains("variant")) c.variant = variant_from_string(j.at("variant").get<std::string>());
    return c;
}

njson uq_config_to_json(const UqConfig& c) {
    njson j;
    j["alpha"] = c.alpha;
    j["mc_passes"] = c.mc_passes;
    j["sigma_floor"] = c.sigma_floor;
    j["residual_epsilon"] = c.residual_epsilon;
    return j;
}

UqConfig uq_config_from_json(const njson& j) {
    reject_unknown_keys(j, {"alpha", "mc_passes", "sigma_floor", "residual_epsilon"}, "uq config");
    UqConfig c;
    opt(j, "alpha", c.alpha);
    opt(j, "mc_passes", c.mc_passes);
    opt(j, "sigma_floor", c.sigma_floor);
    opt(j, "residual_epsilon", c.residual_epsilon);
    return c;
}

njson train_config_to_json(const TrainConfig& c) {
    njson j;
    j["batch_size"] = c.batch_size;
    j["lr"] = c.lr;
    j["lr_gamma"] = c.lr_gamma;
    j["lr_step_epochs"] = c.lr_step_epochs;
    j["weight_decay"] = c.weight_decay;
    j["max_epochs"] = c.max_epochs;
    j["patience"] = c.patience;
    j["clip_norm"] = c.clip_norm;
    j["seed"] = c.seed;
    j["mc_passes"] = c.mc_passes;
    j["w_quant"] = c.w_quant;
    j["w_nll"] = c.w_nll;
    j["w_param"] = c.w_param;
    j["w_calib"] = c.w_calib;
    return j;
}

TrainConfig train_config_from_json(const njson& j) {
    reject_unknown_keys(j,
                        {"batch_size", "lr", "lr_gamma", "lr_step_epochs", "weight_decay",
                         "max_epochs", "patience", "clip_norm", "seed", "mc_passes", "w_quant",
                         "w_nll", "w_param", "w_calib"},
                        "train config");
    TrainConfig c;
    opt(j, "batch_size", c.batch_size);
    opt(j, "lr", c.lr);
    opt(j, "lr_gamma", c.lr_gamma);
    opt(j, "lr_step_epochs", c.lr_step_epochs);
    opt(j, "weight_decay", c.weight_decay);
    opt(j, "max_epochs", c.max_epochs);
    opt(j, "patience", c.patience);
    opt(j, "clip_norm", c.clip_norm);
    opt(j, "seed", c.seed);
    opt(j, "mc_passes", c.mc_passes);
    opt(j, "w_quant", c.w_quant);
    opt(j, "w_nll", c.w_nll);
    opt(j, "w_param", c.w_param);
    opt(j, "w_calib", c.w_calib);
    return c;
}

void RunConfig::validate() const {
    data.validate();
    model.validate();
    uq.validate();
    train.validate();
    if (model.n_categories != data.n_categories || model.d_dem != data.d_dem ||
        model.d_ext != data.d_ext || model.t_in != data.t_in || model.t_out != data.t_out) {
        throw ConfigError("model dims derived from the data section are inconsistent");
    }
}

njson RunConfig::to_json() const {
    njson j;
    j["seed"] = seed;
    j["data"] = synthetic_config_to_json(data);
    j["model"] = model_config_to_json(model);
    j["uq"] = uq_config_to_json(uq);
    j["train"] = train_config_to_json(train);
    return j;
}

RunConfig run_config_from_json(const njson& j) {
    reject_unknown_keys(j, {"seed", "data", "model", "uq", "train"}, "run config");
    RunConfig rc;
    opt(j, "seed", rc.seed);
    if (j.contains("data")) rc.data = synthetic_config_from_json(j.at("data"));
    if (!j.contains("data") || !j.at("data").contains("seed")) rc.data.seed = rc.seed;
    if (j.contains("model")) {
        const njson& jm = j.at("model");
        reject_unknown_keys(jm,
                            {"d_hid", "d_model", "n_stages", "blocks_per_stage", "n_state",
                             "stce_kernel", "updown_kernel", "attn_dim", "lambda", "dropout",
                             "activation", "spatial_norm", "variant"},
                            "model section");
        opt(jm, "d_hid", rc.model.d_hid);
        opt(jm, "d_model", rc.model.d_model);
        opt(jm, "n_stages", rc.model.n_stages);
        opt(jm, "blocks_per_stage", rc.model.blocks_per_stage);
        opt(jm, "n_state", rc.model.n_state);
        opt(jm, "stce_kernel", rc.model.stce_kernel);
        opt(jm, "updown_kernel", rc.model.updown_kernel);
        opt(jm, "attn_dim", rc.model.attn_dim);
        opt(jm, "lambda", rc.model.lambda);
        opt(jm, "dropout", rc.model.dropout);
        opt(jm, "activation", rc.model.activation);
        opt(jm, "spatial_norm", rc.model.spatial_norm);
        if (jm.contains("variant")) {
            rc.model.variant = variant_from_string(jm.at("variant").get<std::string>());
        }
    }
    // dims shared with the generator are derived, not separately configurable
    rc.model.n_categories = rc.data.n_categories;
    rc.model.d_dem = rc.data.d_dem;
    rc.model.d_ext = rc.data.d_ext;
    rc.model.t_in = rc.data.t_in;
    rc.model.t_out = rc.data.t_out;
    if (j.contains("uq")) rc.uq = uq_config_from_json(j.at("uq"));
    if (j.contains("train")) rc.train = train_config_from_json(j.at("train"));
    if (!j.contains("train") || !j.at("train").contains("seed")) rc.train.seed = rc.seed;
    return rc;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read config " + path);
    njson j;
    try {
        j = njson::parse(f);
    } catch (const njson::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    RunConfig rc = run_config_from_json(j);
    rc.validate();
    return rc;
}

}  // namespace stv
