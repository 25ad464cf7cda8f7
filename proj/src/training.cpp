#include "stv/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <thread>
#include <sstream>

#include "stv/config.hpp"
#include "stv/pipeline.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace stv {

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (lr <= 0.0) throw ConfigError("lr must be > 0");
    if (lr_gamma <= 0.0 || lr_gamma > 1.0) throw ConfigError("lr_gamma must be in (0,1]");
    if (lr_step_epochs < 1) throw ConfigError("lr_step_epochs must be >= 1");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (clip_norm <= 0.0) throw ConfigError("clip_norm must be > 0");
    if (mc_passes < 1) throw ConfigError("mc_passes must be >= 1");
}

void apply_variant(Variant v, TrainConfig& t) {
    switch (v) {
        case Variant::kFull:
        case Variant::kNoStce:
        case Variant::kNoGMamba:
            break;
        case Variant::kNoNodeBased:
            t.w_quant = 0.0;
            break;
        case Variant::kNoDistribution:
            t.w_nll = 0.0;
            t.w_calib = 0.0;
            break;
        case Variant::kNoParameter:
            t.w_param = 0.0;
            t.mc_passes = 1;
            break;
        case Variant::kNoUq:
            t.w_nll = 0.0;
            t.w_calib = 0.0;
            t.w_param = 0.0;
            t.mc_passes = 1;
            break;
    }
}

AdamState AdamState::init(const ParamRegistry& params) {
    AdamState st;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const auto& [name, t] : params) {
        st.m.emplace_back(static_cast<size_t>(t.size()), 0.0);
        st.v.emplace_back(static_cast<size_t>(t.size()), 0.0);
    }
    return st;
}

void adam_step(ParamRegistry& params, AdamState& st, double lr, double beta1, double beta2,
               double eps) {
    if (st.m.size() != params.size()) throw ContractError("adam_step: moment/param mismatch");
    st.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
    for (size_t k = 0; k < params.size(); ++k) {
        Tensor& p = params[k].second;
        const auto& g = p.grad();
        auto& m = st.m[k];
        auto& v = st.v[k];
        if (g.size() != m.size()) throw ContractError("adam_step: gradient shape mismatch");
        auto& vals = p.values();
        for (size_t i = 0; i < vals.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            vals[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

void apply_weight_decay(ParamRegistry& params, double lr, double wd) {
    if (wd == 0.0) return;
    for (auto& [name, p] : params) {
        for (double& x : p.values()) x -= lr * wd * x;
    }
}

double clip_gradients(ParamRegistry& params, double clip_norm) {
    if (clip_norm <= 0.0) throw ParamError("clip_gradients: clip_norm must be > 0");
    double sq = 0.0;
    for (auto& [name, p] : params) {
        for (double g : p.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > clip_norm) {
        const double scale = clip_norm / norm;
        for (auto& [name, p] : params) {
            for (double& g : p.grad()) g *= scale;
        }
    }
    return norm;
}

double lr_at(int64_t epoch, const TrainConfig& cfg) {
    if (epoch < 0) throw ParamError("lr_at: epoch must be >= 0");
    return cfg.lr * std::pow(cfg.lr_gamma, static_cast<double>(epoch / cfg.lr_step_epochs));
}

Tensor window_loss(const Model& model, const WindowTensors& w, const Tensor& statics,
                   const ExecCtx& base_ctx, const TrainConfig& tcfg, LossParts* parts_out) {
    const Variant variant = model.config().variant;
    const UqConfig& uq = model.uq();
    const bool want_param = tcfg.w_param != 0.0 && tcfg.mc_passes >= 2 &&
                            variant_has_gaussian(variant);
    const int64_t passes = want_param ? tcfg.mc_passes : 1;

    std::vector<Model::Output> outs;
    outs.reserve(static_cast<size_t>(passes));
    for (int64_t m = 0; m < passes; ++m) {
        ExecCtx ctx = base_ctx;
        ctx.pass = static_cast<uint64_t>(m);
        outs.push_back(model.forward(w.v_in, w.e_in, statics, ctx));
    }
    const Model::Output& first = outs.front();

    std::vector<std::pair<std::string, Tensor>> components;
    std::vector<double> weights;
    LossParts parts;
    if (tcfg.w_quant != 0.0 && variant_has_quantile(variant)) {
        Tensor lq = pinball_loss({first.lower, first.median, first.upper}, w.y_log,
                                 uq.quantile_levels());
        parts.quant = lq.item();
        components.emplace_back("quant", lq);
        weights.push_back(tcfg.w_quant);
    }
    if (tcfg.w_nll != 0.0 && variant_has_gaussian(variant) && !variant_sigma_constant(variant)) {
        Tensor ln = nll_loss(first.mu, first.sigma2, w.y_log);
        parts.nll = ln.item();
        components.emplace_back("nll", ln);
        weights.push_back(tcfg.w_nll);
    }
    if (want_param) {
        std::vector<Tensor> mus;
        for (const auto& o : outs) mus.push_back(o.mu);
        Tensor mu_hat = mc_mean(mus);
        Tensor lp = param_loss(mus, mu_hat);
        parts.param = lp.item();
        components.emplace_back("param", lp);
        weights.push_back(tcfg.w_param);
    }
    if (tcfg.w_calib != 0.0 && variant_has_gaussian(variant) && !variant_sigma_constant(variant)) {
        Tensor lc = calib_loss(first.mu, ops::sqrt(first.sigma2), w.y_log, uq.residual_epsilon);
        parts.calib = lc.item();
        components.emplace_back("calib", lc);
        weights.push_back(tcfg.w_calib);
    }
    if (components.empty()) throw ConfigError("window_loss: every loss component is disabled");
    Tensor total = total_loss(components, weights);
    parts.total = total.item();
    if (parts_out) *parts_out = parts;
    return total;
}

namespace {

double validation_loss(const Model& model, const DatasetBundle& data, const Tensor& statics,
                       const TrainConfig& tcfg) {
    ExecCtx ctx;  // eval mode: no dropout, no stochastic passes
    TrainConfig eval_cfg = tcfg;
    eval_cfg.mc_passes = 1;  // ensemble term is zero without dropout anyway
    eval_cfg.w_param = 0.0;
    double sum = 0.0;
    int64_t count = 0;
    for (int64_t wi = data.splits.val_begin; wi < data.splits.val_end; ++wi) {
        WindowTensors w = materialize_window(data, wi, model.config().pad_to());
        LossParts parts;
        window_loss(model, w, statics, ctx, eval_cfg, &parts);
        sum += parts.total;
        ++count;
    }
    return sum / static_cast<double>(count);
}

std::vector<std::vector<double>> snapshot_values(const ParamRegistry& params) {
    std::vector<std::vector<double>> snap;
    snap.reserve(params.size());
    for (const auto& [name, t] : params) snap.push_back(t.values());
    return snap;
}

void restore_values(ParamRegistry& params, const std::vector<std::vector<double>>& snap) {
    for (size_t i = 0; i < params.size(); ++i) params[i].second.values() = snap[i];
}

}  // namespace

std::string TrainResult::history_csv() const {
    std::ostringstream os;
    os << "epoch,lr,loss_quant,loss_nll,loss_param,loss_calib,loss_total,val_total\n";
    char buf[64];
    auto put = [&](double v, bool comma) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << buf << (comma ? "," : "\n");
    };
    for (const EpochStats& e : history) {
        os << e.epoch << ",";
        put(e.lr, true);
        put(e.train.quant, true);
        put(e.train.nll, true);
        put(e.train.param, true);
        put(e.train.calib, true);
        put(e.train.total, true);
        put(e.val_total, false);
    }
    return os.str();
}

TrainResult train(Model& model, const DatasetBundle& data, const TrainConfig& tcfg) {
    tcfg.validate();
    if (data.splits.train_end <= data.splits.train_begin ||
        data.splits.val_end <= data.splits.val_begin) {
        throw ConfigError("train: empty train or validation split");
    }
    Tensor statics = statics_tensor(data);
    const int64_t pad_to = model.config().pad_to();
    const int64_t n_params = model.n_parameters();

    AdamState moments = AdamState::init(model.params());
    TrainResult result;
    std::vector<std::vector<double>> best_params = snapshot_values(model.params());
    result.best_moments = moments;
    double best_val = std::numeric_limits<double>::infinity();
    int64_t best_epoch = -1;

    std::vector<int64_t> order;
    for (int64_t wi = data.splits.train_begin; wi < data.splits.train_end; ++wi) {
        order.push_back(wi);
    }

    // Windows inside a batch run on independent worker clones; gradients are
    // kept per window and reduced in window order, so the result is
    // bit-identical for any worker count.
    const int n_workers = std::max(
        1, std::min<int>(worker_threads(), static_cast<int>(tcfg.batch_size)));
    std::vector<Model> workers;
    for (int k = 0; k < n_workers; ++k) workers.push_back(model.clone());

    for (int64_t epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
        const double lr = lr_at(epoch, tcfg);
        SeqRng shuffle_rng(mix_keys(tcfg.seed, static_cast<uint64_t>(epoch) + 0x5157ULL));
        fisher_yates(order, shuffle_rng);

        LossParts epoch_parts;
        int64_t seen = 0;
        for (size_t pos = 0; pos < order.size();) {
            const size_t batch_end =
                std::min(order.size(), pos + static_cast<size_t>(tcfg.batch_size));
            const size_t batch_n = batch_end - pos;
            const double inv_b = 1.0 / static_cast<double>(batch_n);

            std::vector<std::vector<double>> win_grads(batch_n);
            std::vector<LossParts> win_parts(batch_n);
            std::vector<std::exception_ptr> errors(static_cast<size_t>(n_workers));
            for (Model& wm : workers) wm.copy_values_from(model);

            auto run_worker = [&](int worker_id) {
                try {
#ifdef _OPENMP
                    if (n_workers > 1) omp_set_num_threads(1);
#endif
                    Model& wm = workers[static_cast<size_t>(worker_id)];
                    for (size_t p = static_cast<size_t>(worker_id); p < batch_n;
                         p += static_cast<size_t>(n_workers)) {
                        const int64_t wi = order[pos + p];
                        WindowTensors w = materialize_window(data, wi, pad_to);
                        ExecCtx ctx;
                        ctx.dropout_on = true;
                        ctx.seed = tcfg.seed;
                        ctx.step = static_cast<uint64_t>(epoch) * 1000003ULL +
                                   static_cast<uint64_t>(wi);
                        wm.zero_grad();
                        Tape tape;
                        TapeScope scope(tape);
                        Tensor loss = window_loss(wm, w, statics, ctx, tcfg, &win_parts[p]);
                        Tensor scaled = ops::mul_scalar(loss, inv_b);
                        backward(tape, scaled);
                        auto& flat = win_grads[p];
                        flat.reserve(static_cast<size_t>(n_params));
                        for (auto& [name, t] : wm.params()) {
                            flat.insert(flat.end(), t.grad().begin(), t.grad().end());
                        }
                    }
                } catch (...) {
                    errors[static_cast<size_t>(worker_id)] = std::current_exception();
                }
            };
            if (n_workers == 1) {
                run_worker(0);
            } else {
                std::vector<std::thread> pool;
                for (int k = 0; k < n_workers; ++k) pool.emplace_back(run_worker, k);
                for (auto& th : pool) th.join();
            }
            for (auto& e : errors) {
                if (e) std::rethrow_exception(e);
            }

            model.zero_grad();
            for (size_t p = 0; p < batch_n; ++p) {
                size_t off = 0;
                for (auto& [name, t] : model.params()) {
                    auto& g = t.grad();
                    const double* src = win_grads[p].data() + off;
                    for (size_t e = 0; e < g.size(); ++e) g[e] += src[e];
                    off += g.size();
                }
                epoch_parts.quant += win_parts[p].quant;
                epoch_parts.nll += win_parts[p].nll;
                epoch_parts.param += win_parts[p].param;
                epoch_parts.calib += win_parts[p].calib;
                epoch_parts.total += win_parts[p].total;
                ++seen;
            }
            pos = batch_end;
            clip_gradients(model.params(), tcfg.clip_norm);
            adam_step(model.params(), moments, lr);
            apply_weight_decay(model.params(), lr, tcfg.weight_decay);
        }
        const double inv_n = 1.0 / static_cast<double>(seen);
        epoch_parts.quant *= inv_n;
        epoch_parts.nll *= inv_n;
        epoch_parts.param *= inv_n;
        epoch_parts.calib *= inv_n;
        epoch_parts.total *= inv_n;

        EpochStats stats;
        stats.epoch = epoch;
        stats.lr = lr;
        stats.train = epoch_parts;
        stats.val_total = validation_loss(model, data, statics, tcfg);
        result.history.push_back(stats);

        if (stats.val_total < best_val) {
            best_val = stats.val_total;
            best_epoch = epoch;
            best_params = snapshot_values(model.params());
            result.best_moments = moments;
        }
        if (epoch - best_epoch >= tcfg.patience) break;
    }
    restore_values(model.params(), best_params);
    result.best_epoch = best_epoch;
    result.best_val = best_val;
    return result;
}

EvalReport ablation_run(const std::string& variant, const DatasetBundle& data,
                        const ModelConfig& model_cfg, const UqConfig& uq_cfg,
                        const TrainConfig& train_cfg, uint64_t init_seed) {
    ModelConfig mc = model_cfg;
    mc.variant = variant_from_string(variant);
    TrainConfig tc = train_cfg;
    apply_variant(mc.variant, tc);
    Model model = Model::build(mc, uq_cfg, data.graph, init_seed);
    train(model, data, tc);
    CalibrationRecord rec = calibrate_split(model, data, data.splits.cal_begin,
                                            data.splits.cal_end, uq_cfg.alpha);
    SplitPredictions pred = predict_split(model, data, data.splits.test_begin,
                                          data.splits.test_end, rec.margin_c);
    return evaluate_predictions(pred, uq_cfg.alpha, true, mc.variant);
}

// ---- checkpoint I/O ----

namespace {
constexpr char kMagic[8] = {'S', 'T', 'V', 'C', 'K', 'P', 'T', '1'};

void append_array(njson& arrays, std::string name, const Shape& shape, int64_t& offset,
                  int64_t count) {
    njson e;
    e["name"] = std::move(name);
    e["shape"] = shape;
    e["offset"] = offset;
    arrays.push_back(e);
    offset += count * static_cast<int64_t>(sizeof(double));
}

void write_doubles(std::ofstream& f, const std::vector<double>& v) {
    static_assert(sizeof(double) == 8);
    f.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}
}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const AdamState& moments,
                     int64_t epoch, double best_val, const TrainConfig& tcfg) {
    njson header;
    header["format_version"] = 1;
    header["epoch"] = epoch;
    header["best_val_loss"] = best_val;
    header["adam_t"] = moments.t;
    header["model_config"] = model_config_to_json(model.config());
    header["uq_config"] = uq_config_to_json(model.uq());
    header["train_config"] = train_config_to_json(tcfg);
    njson arrays = njson::array();
    int64_t offset = 0;
    for (const auto& [name, t] : model.params()) {
        append_array(arrays, "p:" + name, t.shape(), offset, t.size());
    }
    for (size_t k = 0; k < model.params().size(); ++k) {
        const auto& [name, t] = model.params()[k];
        append_array(arrays, "m:" + name, t.shape(), offset, t.size());
        append_array(arrays, "v:" + name, t.shape(), offset, t.size());
    }
    header["arrays"] = arrays;
    const std::string htext = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f.write(kMagic, sizeof kMagic);
    const uint64_t hlen = htext.size();
    f.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
    f.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (const auto& [name, t] : model.params()) write_doubles(f, t.values());
    for (size_t k = 0; k < model.params().size(); ++k) {
        write_doubles(f, moments.m[k]);
        write_doubles(f, moments.v[k]);
    }
    if (!f) throw IoError("short write to " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path, const GraphSpec& prior) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path);
    char magic[8];
    f.read(magic, sizeof magic);
    if (!f || std::memcmp(magic, kMagic, sizeof magic) != 0) {
        throw IoError(path + ": not a checkpoint file");
    }
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
    std::string htext(hlen, '\0');
    f.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw IoError(path + ": truncated header");
    njson header = njson::parse(htext);
    if (header.at("format_version").get<int64_t>() != 1) {
        throw IoError(path + ": unsupported checkpoint version");
    }

    LoadedCheckpoint out;
    out.epoch = header.at("epoch").get<int64_t>();
    out.best_val = header.at("best_val_loss").get<double>();
    out.train_cfg = train_config_from_json(header.at("train_config"));
    ModelConfig mc = model_config_from_json(header.at("model_config"));
    UqConfig uq = uq_config_from_json(header.at("uq_config"));
    out.model = Model::build(mc, uq, prior, 0);
    out.moments = AdamState::init(out.model.params());
    out.moments.t = header.at("adam_t").get<int64_t>();

    std::vector<char> payload((std::istreambuf_iterator<char>(f)),
                              std::istreambuf_iterator<char>());
    auto read_into = [&](int64_t offset, std::vector<double>& dst) {
        const size_t bytes = dst.size() * sizeof(double);
        if (offset < 0 || static_cast<size_t>(offset) + bytes > payload.size()) {
            throw IoError(path + ": truncated payload");
        }
        std::memcpy(dst.data(), payload.data() + offset, bytes);
    };
    size_t seen = 0;
    for (const auto& e : header.at("arrays")) {
        const std::string name = e.at("name").get<std::string>();
        const int64_t offset = e.at("offset").get<int64_t>();
        const std::string base = name.substr(2);
        const char tag = name[0];
        bool matched = false;
        auto& params = out.model.params();
        for (size_t k = 0; k < params.size(); ++k) {
            if (params[k].first != base) continue;
            matched = true;
            if (tag == 'p') {
                read_into(offset, params[k].second.values());
            } else if (tag == 'm') {
                read_into(offset, out.moments.m[k]);
            } else if (tag == 'v') {
                read_into(offset, out.moments.v[k]);
            } else {
                throw IoError(path + ": bad array tag " + name);
            }
            break;
        }
        if (!matched) throw IoError(path + ": unknown parameter " + base);
        ++seen;
    }
    if (seen != out.model.params().size() * 3) {
        throw IoError(path + ": checkpoint parameter set does not match the model");
    }
    return out;
}

}  // namespace stv
