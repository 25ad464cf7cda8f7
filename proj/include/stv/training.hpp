#ifndef STV_TRAINING_HPP
#define STV_TRAINING_HPP

#include <string>
#include <vector>

#include "stv/model.hpp"

namespace stv {

struct TrainConfig {
    int64_t batch_size = 128;
    double lr = 1e-3;
    double lr_gamma = 0.5;        // multiplicative step decay
    int64_t lr_step_epochs = 15;  // applied every this many epochs
    double weight_decay = 5e-4;   // decoupled; 0 disables
    int64_t max_epochs = 100;
    int64_t patience = 50;        // evaluations (one per epoch) without improvement
    double clip_norm = 1.0;
    uint64_t seed = 0;
    int64_t mc_passes = 2;  // stochastic passes per training step
    double w_quant = 1.0, w_nll = 1.0, w_param = 1.0, w_calib = 1.0;

    void validate() const;
};

// Zeroes the loss weights a variant removes and pins M=1 for the
// single-pass ablation.
void apply_variant(Variant v, TrainConfig& t);

using ParamRegistry = std::vector<std::pair<std::string, Tensor>>;

struct AdamState {
    std::vector<std::vector<double>> m, v;
    int64_t t = 0;
    static AdamState init(const ParamRegistry& params);
};

// Standard bias-corrected update; reads and clears nothing, grads stay put.
void adam_step(ParamRegistry& params, AdamState& st, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

// Decoupled weight decay: p -= lr * wd * p.
void apply_weight_decay(ParamRegistry& params, double lr, double wd);

// Global L2 clipping across all gradients; returns the pre-clip norm.
double clip_gradients(ParamRegistry& params, double clip_norm);

double lr_at(int64_t epoch, const TrainConfig& cfg);

struct LossParts {
    double quant = 0.0, nll = 0.0, param = 0.0, calib = 0.0, total = 0.0;
};

// Tape-recorded total loss for one window (weighted; M stochastic passes
// contribute the ensemble-consistency term). parts_out gets plain values.
Tensor window_loss(const Model& model, const WindowTensors& w, const Tensor& statics,
                   const ExecCtx& base_ctx, const TrainConfig& tcfg, LossParts* parts_out);

struct EpochStats {
    int64_t epoch = 0;
    double lr = 0.0;
    LossParts train;
    double val_total = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    int64_t best_epoch = -1;
    double best_val = 0.0;
    AdamState best_moments;
    std::string history_csv() const;
};

// Minibatch optimization with seeded shuffling, gradient clipping, step-decay
// learning rate, early stopping and best-checkpoint restore (the model is
// left holding the best parameters).
TrainResult train(Model& model, const DatasetBundle& data, const TrainConfig& tcfg);

// Trains the requested variant end to end and scores the test split
// (post-hoc calibrated from the calibration split).
struct EvalReport;
EvalReport ablation_run(const std::string& variant, const DatasetBundle& data,
                        const ModelConfig& model_cfg, const UqConfig& uq_cfg,
                        const TrainConfig& train_cfg, uint64_t init_seed);

// ---- checkpoint container: JSON header + raw little-endian 64-bit floats ----

void save_checkpoint(const std::string& path, const Model& model, const AdamState& moments,
                     int64_t epoch, double best_val, const TrainConfig& tcfg);

struct LoadedCheckpoint {
    Model model;
    AdamState moments;
    int64_t epoch = 0;
    double best_val = 0.0;
    TrainConfig train_cfg;
};
LoadedCheckpoint load_checkpoint(const std::string& path, const GraphSpec& prior);

}  // namespace stv

#endif  // STV_TRAINING_HPP
