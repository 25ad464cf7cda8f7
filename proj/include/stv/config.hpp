#ifndef STV_CONFIG_HPP
#define STV_CONFIG_HPP

#include <string>

#include "stv/data.hpp"
#include "stv/json_util.hpp"
#include "stv/model.hpp"
#include "stv/training.hpp"

namespace stv {

// Single JSON document driving the CLI. Sections: data, model, uq, train.
// Unknown keys are rejected everywhere; the top-level seed feeds every
// section that does not pin its own.
struct RunConfig {
    uint64_t seed = 0;
    SyntheticConfig data;
    ModelConfig model;
    UqConfig uq;
    TrainConfig train;

    void validate() const;
    njson to_json() const;
};

RunConfig run_config_from_json(const njson& j);
RunConfig load_run_config(const std::string& path);

njson model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const njson& j);  // full document (checkpoints)
njson uq_config_to_json(const UqConfig& c);
UqConfig uq_config_from_json(const njson& j);
njson train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const njson& j);

}  // namespace stv

#endif  // STV_CONFIG_HPP
