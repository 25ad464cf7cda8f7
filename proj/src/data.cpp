#include "stv/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stv/json_util.hpp"
#include "stv/rng.hpp"

namespace stv {

namespace {

// Weekday/monthly archetypes: ambulatory and social assistance carry strong
// weekday structure, hospitals a mild one, long-term care stays flat with a
// slow trend, social assistance additionally peaks early in each 30-day cycle.
constexpr int kArchetypes = 4;
const double kWeekProfile[kArchetypes][7] = {
    {1.15, 1.20, 1.15, 1.10, 1.05, 0.55, 0.50},
    {1.02, 1.03, 1.02, 1.01, 1.00, 0.96, 0.96},
    {1.00, 1.00, 1.00, 1.00, 1.00, 1.00, 1.00},
    {1.05, 1.10, 1.05, 1.00, 0.95, 0.60, 0.55},
};
const double kWeatherSensitivity[kArchetypes] = {0.8, 1.0, 0.2, 0.7};

int archetype(int64_t category) { return static_cast<int>(category % kArchetypes); }

// Dense Cholesky of K + jitter*I; desk-scale node counts only.
std::vector<double> cholesky(std::vector<double> k, int64_t n, double jitter) {
    for (int64_t i = 0; i < n; ++i) k[i * n + i] += jitter;
    std::vector<double> l(static_cast<size_t>(n * n), 0.0);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j <= i; ++j) {
            double s = k[i * n + j];
            for (int64_t m = 0; m < j; ++m) s -= l[i * n + m] * l[j * n + m];
            if (i == j) {
                if (s <= 0.0) throw NumericError("cholesky: matrix not positive definite");
                l[i * n + i] = std::sqrt(s);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    return l;
}

std::vector<double> kernel_matrix(const std::vector<std::array<double, 2>>& coords,
                                  double length) {
    const int64_t n = static_cast<int64_t>(coords.size());
    std::vector<double> k(static_cast<size_t>(n * n));
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            const double dx = coords[i][0] - coords[j][0];
            const double dy = coords[i][1] - coords[j][1];
            k[i * n + j] = std::exp(-(dx * dx + dy * dy) / (length * length));
        }
    }
    return k;
}

void correlate(const std::vector<double>& l, const std::vector<double>& eps,
               std::vector<double>& out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j <= i; ++j) s += l[i * n + j] * eps[static_cast<size_t>(j)];
        out[static_cast<size_t>(i)] = s;
    }
}

}  // namespace

void Shock::validate() const {
    if (kind != "drop" && kind != "surge") {
        throw ConfigError("shock.kind must be \"drop\" or \"surge\", got \"" + kind + "\"");
    }
    if (multiplier <= 0.0) throw ConfigError("shock.multiplier must be > 0");
    if (kind == "drop" && multiplier >= 1.0) throw ConfigError("drop shock needs multiplier < 1");
    if (kind == "surge" && multiplier <= 1.0) throw ConfigError("surge shock needs multiplier > 1");
    if (duration < 1) throw ConfigError("shock.duration must be >= 1");
    if (start < 0) throw ConfigError("shock.start must be >= 0");
}

void SyntheticConfig::validate() const {
    if (n_nodes < 2) throw ConfigError("n_nodes must be >= 2");
    if (t_in < 1 || t_out < 1) throw ConfigError("t_in and t_out must be >= 1");
    if (n_steps < t_in + t_out + 1) throw ConfigError("n_steps must be >= t_in + t_out + 1");
    if (n_categories < 1) throw ConfigError("n_categories must be >= 1");
    if (static_cast<int64_t>(base_rates.size()) != n_categories) {
        throw ConfigError("base_rates must list one rate per category");
    }
    for (double r : base_rates) {
        if (r <= 0.0) throw ConfigError("base_rates entries must be > 0");
    }
    if (seasonal_amplitude < 0.0 || seasonal_amplitude > 2.0) {
        throw ConfigError("seasonal_amplitude must be in [0,2]");
    }
    if (noise_dispersion < 0.0) throw ConfigError("noise_dispersion must be >= 0");
    if (drift_rho < 0.0 || drift_rho >= 1.0) throw ConfigError("drift_rho must be in [0,1)");
    if (weather_rho < 0.0 || weather_rho >= 1.0) throw ConfigError("weather_rho must be in [0,1)");
    if (spatial_correlation_length <= 0.0) {
        throw ConfigError("spatial_correlation_length must be > 0");
    }
    if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9) {
        throw ConfigError("train_ratio/val_ratio/test_ratio must sum to 1");
    }
    if (cal_fraction < 0.0 || cal_fraction > 1.0) {
        throw ConfigError("cal_fraction must be in [0,1]");
    }
    if (d_dem < 2 || d_ext < 1) throw ConfigError("d_dem must be >= 2 and d_ext >= 1");
    for (const Shock& s : shocks) {
        s.validate();
        for (int64_t v : s.nodes) {
            if (v < 0 || v >= n_nodes) throw ConfigError("shock.nodes entry out of range");
        }
        for (int64_t c : s.categories) {
            if (c < 0 || c >= n_categories) throw ConfigError("shock.categories entry out of range");
        }
    }
}

int64_t DatasetBundle::n_windows() const {
    return count_windows(config.n_steps, config.t_in, config.t_out);
}

DatasetBundle generate_synthetic(const SyntheticConfig& config) {
    config.validate();
    const int64_t n = config.n_nodes, t_steps = config.n_steps, c_cats = config.n_categories;
    DatasetBundle b;
    b.config = config;

    const uint64_t seed = config.seed;
    std::vector<std::array<double, 2>> coords(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        coords[static_cast<size_t>(i)] = {
            config.coord_extent * hash01(mix_keys(seed, fnv1a("coords.x")), static_cast<uint64_t>(i)),
            config.coord_extent * hash01(mix_keys(seed, fnv1a("coords.y")), static_cast<uint64_t>(i))};
    }
    const double sigma =
        config.graph_sigma > 0.0 ? config.graph_sigma : median_pairwise_distance(coords);
    b.graph = build_gaussian_adjacency(coords, sigma, config.graph_epsilon);

    std::vector<double> size_factor(static_cast<size_t>(n));
    std::vector<double> age_share(static_cast<size_t>(n));
    std::vector<double> trend_sign(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        size_factor[static_cast<size_t>(i)] =
            std::exp(0.5 * hash_normal(mix_keys(seed, fnv1a("size")), static_cast<uint64_t>(i)));
        age_share[static_cast<size_t>(i)] = 1.0 / (1.0 + std::exp(-0.8 * hash_normal(
            mix_keys(seed, fnv1a("age")), static_cast<uint64_t>(i))));
        trend_sign[static_cast<size_t>(i)] =
            hash01(mix_keys(seed, fnv1a("trend")), static_cast<uint64_t>(i)) < 0.5 ? -1.0 : 1.0;
    }

    const std::vector<double> chol_l =
        cholesky(kernel_matrix(coords, config.spatial_correlation_length), n, 1e-8);
    // the weather field is far more local than the slow demand drift
    const std::vector<double> chol_w =
        cholesky(kernel_matrix(coords, config.spatial_correlation_length / 3.0), n, 1e-8);

    // spatially correlated AR(1) series: slow drift and a weather-like field
    std::vector<double> drift(static_cast<size_t>(n * t_steps));
    std::vector<double> weather(static_cast<size_t>(n * t_steps));
    {
        std::vector<double> z(static_cast<size_t>(n), 0.0), w(static_cast<size_t>(n), 0.0);
        std::vector<double> eps(static_cast<size_t>(n)), corr(static_cast<size_t>(n));
        const double rho_d = config.drift_rho, rho_w = config.weather_rho;
        for (int64_t t = 0; t < t_steps; ++t) {
            for (int64_t i = 0; i < n; ++i) {
                eps[static_cast<size_t>(i)] = hash_normal(mix_keys(seed, fnv1a("drift.eps")),
                                                          static_cast<uint64_t>(t * n + i));
            }
            correlate(chol_l, eps, corr, n);
            for (int64_t i = 0; i < n; ++i) {
                z[static_cast<size_t>(i)] = rho_d * z[static_cast<size_t>(i)] +
                                            std::sqrt(1.0 - rho_d * rho_d) * corr[static_cast<size_t>(i)];
                drift[static_cast<size_t>(i * t_steps + t)] = z[static_cast<size_t>(i)];
            }
            for (int64_t i = 0; i < n; ++i) {
                eps[static_cast<size_t>(i)] = hash_normal(mix_keys(seed, fnv1a("weather.eps")),
                                                          static_cast<uint64_t>(t * n + i));
            }
            correlate(chol_w, eps, corr, n);
            for (int64_t i = 0; i < n; ++i) {
                w[static_cast<size_t>(i)] = rho_w * w[static_cast<size_t>(i)] +
                                            std::sqrt(1.0 - rho_w * rho_w) * corr[static_cast<size_t>(i)];
                weather[static_cast<size_t>(i * t_steps + t)] = w[static_cast<size_t>(i)];
            }
        }
    }

    // demographics: log population scale, age share, then correlated noise
    b.demographics.assign(static_cast<size_t>(n * config.d_dem), 0.0);
    for (int64_t i = 0; i < n; ++i) {
        b.demographics[i * config.d_dem + 0] = std::log(size_factor[static_cast<size_t>(i)]);
        b.demographics[i * config.d_dem + 1] = age_share[static_cast<size_t>(i)];
    }
    {
        std::vector<double> eps(static_cast<size_t>(n)), corr(static_cast<size_t>(n));
        for (int64_t k = 2; k < config.d_dem; ++k) {
            for (int64_t i = 0; i < n; ++i) {
                eps[static_cast<size_t>(i)] = hash_normal(mix_keys(seed, fnv1a("dem.noise")),
                                                          static_cast<uint64_t>(k * n + i));
            }
            correlate(chol_l, eps, corr, n);
            for (int64_t i = 0; i < n; ++i) {
                b.demographics[i * config.d_dem + k] = corr[static_cast<size_t>(i)];
            }
        }
    }

    // externals: weather, day-of-week indicators (compressed when narrow),
    // then correlated filler noise
    b.externals.assign(static_cast<size_t>(n * t_steps * config.d_ext), 0.0);
    const int64_t dow_cols = std::min<int64_t>(7, config.d_ext - 1);
    std::vector<double> dow_proj;  // {7, dow_cols} when compressed
    if (dow_cols > 0 && dow_cols < 7) {
        dow_proj.resize(static_cast<size_t>(7 * dow_cols));
        for (size_t i = 0; i < dow_proj.size(); ++i) {
            dow_proj[i] = hash_normal(mix_keys(seed, fnv1a("dow.proj")), static_cast<uint64_t>(i));
        }
    }
    {
        std::vector<double> eps(static_cast<size_t>(n)), corr(static_cast<size_t>(n));
        for (int64_t t = 0; t < t_steps; ++t) {
            const int64_t dow = t % 7;
            for (int64_t i = 0; i < n; ++i) {
                double* row = b.externals.data() + (i * t_steps + t) * config.d_ext;
                row[0] = weather[static_cast<size_t>(i * t_steps + t)];
                if (dow_cols == 7) {
                    for (int64_t k = 0; k < 7; ++k) row[1 + k] = (k == dow) ? 1.0 : 0.0;
                } else {
                    for (int64_t k = 0; k < dow_cols; ++k) {
                        row[1 + k] = dow_proj[static_cast<size_t>(dow * dow_cols + k)];
                    }
                }
            }
            for (int64_t k = 1 + dow_cols; k < config.d_ext; ++k) {
                for (int64_t i = 0; i < n; ++i) {
                    eps[static_cast<size_t>(i)] = hash_normal(
                        mix_keys(seed, fnv1a("ext.noise")),
                        static_cast<uint64_t>((k * t_steps + t) * n + i));
                }
                correlate(chol_l, eps, corr, n);
                for (int64_t i = 0; i < n; ++i) {
                    b.externals[(i * t_steps + t) * config.d_ext + k] = corr[static_cast<size_t>(i)];
                }
            }
        }
    }

    // counts: rounded log-normal around smooth latent intensities
    b.visits.assign(static_cast<size_t>(n * t_steps * c_cats), 0.0);
    const double amp = config.seasonal_amplitude;
    const double disp = config.noise_dispersion;
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t t = 0; t < t_steps; ++t) {
            const int64_t dow = t % 7;
            const int64_t dom = t % 30;
            for (int64_t c = 0; c < c_cats; ++c) {
                const int arch = archetype(c);
                double lam = config.base_rates[static_cast<size_t>(c)] *
                             size_factor[static_cast<size_t>(i)];
                if (arch == 2) {
                    lam *= 0.5 + age_share[static_cast<size_t>(i)];
                    lam *= 1.0 + amp * 0.2 * trend_sign[static_cast<size_t>(i)] *
                                     (static_cast<double>(t) / static_cast<double>(t_steps) - 0.5);
                }
                lam *= 1.0 + amp * (kWeekProfile[arch][dow] - 1.0);
                if (arch == 3) lam *= 1.0 + amp * (dom < 3 ? 0.7 : -0.0778);
                lam *= std::exp(config.drift_scale *
                                    drift[static_cast<size_t>(i * t_steps + t)] -
                                0.5 * config.drift_scale * config.drift_scale);
                // weather drives demand with a one-step lag, so the newest
                // weather frame leads the visit series it is paired with
                const int64_t tw = std::max<int64_t>(0, t - 1);
                lam *= std::exp(config.weather_coupling * kWeatherSensitivity[arch] *
                                weather[static_cast<size_t>(i * t_steps + tw)]);
                for (const Shock& s : config.shocks) {
                    if (t < s.start || t >= s.start + s.duration) continue;
                    if (!s.nodes.empty() &&
                        std::find(s.nodes.begin(), s.nodes.end(), i) == s.nodes.end())
                        continue;
                    if (!s.categories.empty() &&
                        std::find(s.categories.begin(), s.categories.end(), c) ==
                            s.categories.end())
                        continue;
                    lam *= s.multiplier;
                }
                const double eps = hash_normal(mix_keys(seed, fnv1a("count.noise")),
                                               static_cast<uint64_t>((i * t_steps + t) * c_cats + c));
                const double draw = lam * std::exp(disp * eps - 0.5 * disp * disp);
                b.visits[(i * t_steps + t) * c_cats + c] =
                    static_cast<double>(std::max<int64_t>(0, std::llround(draw)));
            }
        }
    }

    b.splits = split_dataset(b.n_windows(), config.train_ratio, config.val_ratio,
                             config.test_ratio, config.cal_fraction);
    return b;
}

std::vector<double> log_transform(const std::vector<double>& v) {
    std::vector<double> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
        if (v[i] < 0.0) throw ContractError("log_transform: negative input");
        out[i] = std::log1p(v[i]);
    }
    return out;
}

std::vector<double> inverse_transform(const std::vector<double>& v) {
    std::vector<double> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = std::expm1(v[i]);
    return out;
}

int64_t count_windows(int64_t n_steps, int64_t t_in, int64_t t_out) {
    if (t_in < 1 || t_out < 1) throw ContractError("count_windows: t_in and t_out must be >= 1");
    const int64_t n = n_steps - (t_in + t_out) + 1;
    if (n < 1) throw ContractError("count_windows: series shorter than t_in + t_out");
    return n;
}

SplitRanges split_dataset(int64_t n_windows, double train_ratio, double val_ratio,
                          double test_ratio, double cal_fraction) {
    if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9) {
        throw ConfigError("split ratios must sum to 1");
    }
    const int64_t n_train = static_cast<int64_t>(std::floor(train_ratio * static_cast<double>(n_windows)));
    const int64_t n_valblock = static_cast<int64_t>(std::floor(val_ratio * static_cast<double>(n_windows)));
    const int64_t n_test = n_windows - n_train - n_valblock;
    const int64_t n_cal = static_cast<int64_t>(std::floor(cal_fraction * static_cast<double>(n_valblock)));
    const int64_t n_val = n_valblock - n_cal;
    if (n_train < 1) throw ConfigError("split: train set is empty");
    if (n_val < 1) throw ConfigError("split: validation set is empty");
    if (n_cal < 1) throw ConfigError("split: calibration set is empty (check cal_fraction)");
    if (n_test < 1) throw ConfigError("split: test set is empty");
    SplitRanges s;
    s.train_begin = 0;
    s.train_end = n_train;
    s.val_begin = n_train;
    s.val_end = n_train + n_val;
    s.cal_begin = s.val_end;
    s.cal_end = s.val_end + n_cal;
    s.test_begin = s.cal_end;
    s.test_end = n_windows;
    return s;
}

WindowTensors materialize_window(const DatasetBundle& b, int64_t start, int64_t pad_to) {
    const auto& cfg = b.config;
    if (pad_to < cfg.t_in) throw ContractError("materialize_window: pad_to < t_in");
    if (start < 0 || start + cfg.t_in + cfg.t_out > cfg.n_steps) {
        throw ContractError("materialize_window: window out of range");
    }
    const int64_t n = cfg.n_nodes, c_cats = cfg.n_categories, d_ext = cfg.d_ext;
    const int64_t pad = pad_to - cfg.t_in;
    WindowTensors w;
    w.v_in = Tensor::zeros({n, pad_to, c_cats});
    w.e_in = Tensor::zeros({n, pad_to, d_ext});
    w.y_log = Tensor::zeros({n, cfg.t_out, c_cats});
    w.y_raw.resize(static_cast<size_t>(n * cfg.t_out * c_cats));
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t tt = 0; tt < pad_to; ++tt) {
            const int64_t src_t = start + std::max<int64_t>(0, tt - pad);
            for (int64_t c = 0; c < c_cats; ++c) {
                const double raw = b.visit(i, src_t, c);
                w.v_in.values()[(i * pad_to + tt) * c_cats + c] =
                    b.log1p_transform ? std::log1p(raw) : raw;
            }
            for (int64_t k = 0; k < d_ext; ++k) {
                w.e_in.values()[(i * pad_to + tt) * d_ext + k] =
                    b.externals[(i * cfg.n_steps + src_t) * d_ext + k];
            }
        }
        for (int64_t h = 0; h < cfg.t_out; ++h) {
            const int64_t src_t = start + cfg.t_in + h;
            for (int64_t c = 0; c < c_cats; ++c) {
                const double raw = b.visit(i, src_t, c);
                w.y_raw[static_cast<size_t>((i * cfg.t_out + h) * c_cats + c)] = raw;
                w.y_log.values()[(i * cfg.t_out + h) * c_cats + c] =
                    b.log1p_transform ? std::log1p(raw) : raw;
            }
        }
    }
    return w;
}

namespace {

njson shock_to_json(const Shock& s) {
    njson j;
    j["kind"] = s.kind;
    j["start"] = s.start;
    j["duration"] = s.duration;
    j["multiplier"] = s.multiplier;
    j["nodes"] = s.nodes;
    j["categories"] = s.categories;
    return j;
}

Shock shock_from_json(const njson& j) {
    reject_unknown_keys(j, {"kind", "start", "duration", "multiplier", "nodes", "categories"},
                        "shock");
    Shock s;
    s.kind = j.at("kind").get<std::string>();
    s.start = j.at("start").get<int64_t>();
    s.duration = j.at("duration").get<int64_t>();
    s.multiplier = j.at("multiplier").get<double>();
    if (j.contains("nodes")) s.nodes = j.at("nodes").get<std::vector<int64_t>>();
    if (j.contains("categories")) s.categories = j.at("categories").get<std::vector<int64_t>>();
    return s;
}

}  // namespace

njson synthetic_config_to_json(const SyntheticConfig& c) {
    njson j;
    j["n_nodes"] = c.n_nodes;
    j["n_steps"] = c.n_steps;
    j["n_categories"] = c.n_categories;
    j["seed"] = c.seed;
    j["base_rates"] = c.base_rates;
    j["seasonal_amplitude"] = c.seasonal_amplitude;
    j["spatial_correlation_length"] = c.spatial_correlation_length;
    j["noise_dispersion"] = c.noise_dispersion;
    j["drift_scale"] = c.drift_scale;
    j["drift_rho"] = c.drift_rho;
    j["weather_rho"] = c.weather_rho;
    j["weather_coupling"] = c.weather_coupling;
    j["coord_extent"] = c.coord_extent;
    j["d_dem"] = c.d_dem;
    j["d_ext"] = c.d_ext;
    j["t_in"] = c.t_in;
    j["t_out"] = c.t_out;
    j["train_ratio"] = c.train_ratio;
    j["val_ratio"] = c.val_ratio;
    j["test_ratio"] = c.test_ratio;
    j["cal_fraction"] = c.cal_fraction;
    j["graph_sigma"] = c.graph_sigma;
    j["graph_epsilon"] = c.graph_epsilon;
    auto shocks = njson::array();
    for (const Shock& s : c.shocks) shocks.push_back(shock_to_json(s));
    j["shocks"] = shocks;
    return j;
}

SyntheticConfig synthetic_config_from_json(const njson& j) {
    reject_unknown_keys(
        j,
        {"n_nodes", "n_steps", "n_categories", "seed", "base_rates", "seasonal_amplitude",
         "spatial_correlation_length", "noise_dispersion", "drift_scale", "drift_rho",
         "weather_rho", "weather_coupling", "coord_extent", "d_dem", "d_ext", "t_in", "t_out", "train_ratio",
         "val_ratio", "test_ratio", "cal_fraction", "graph_sigma", "graph_epsilon", "shocks"},
        "data config");
    SyntheticConfig c;
    auto opt = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    opt("n_nodes", c.n_nodes);
    opt("n_steps", c.n_steps);
    opt("n_categories", c.n_categories);
    opt("seed", c.seed);
    opt("base_rates", c.base_rates);
    opt("seasonal_amplitude", c.seasonal_amplitude);
    opt("spatial_correlation_length", c.spatial_correlation_length);
    opt("noise_dispersion", c.noise_dispersion);
    opt("drift_scale", c.drift_scale);
    opt("drift_rho", c.drift_rho);
    opt("weather_rho", c.weather_rho);
    opt("weather_coupling", c.weather_coupling);
    opt("coord_extent", c.coord_extent);
    opt("d_dem", c.d_dem);
    opt("d_ext", c.d_ext);
    opt("t_in", c.t_in);
    opt("t_out", c.t_out);
    opt("train_ratio", c.train_ratio);
    opt("val_ratio", c.val_ratio);
    opt("test_ratio", c.test_ratio);
    opt("cal_fraction", c.cal_fraction);
    opt("graph_sigma", c.graph_sigma);
    opt("graph_epsilon", c.graph_epsilon);
    if (j.contains("shocks")) {
        for (const auto& js : j.at("shocks")) c.shocks.push_back(shock_from_json(js));
    }
    if (static_cast<int64_t>(c.base_rates.size()) != c.n_categories &&
        c.base_rates.size() == 4 && !j.contains("base_rates")) {
        // default rates cycle when the category count is overridden alone
        std::vector<double> rates;
        for (int64_t i = 0; i < c.n_categories; ++i) rates.push_back(c.base_rates[i % 4]);
        c.base_rates = rates;
    }
    return c;
}

namespace {

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << content;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

void save_bundle(const DatasetBundle& b, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir);
    const auto& c = b.config;

    njson manifest;
    manifest["config"] = synthetic_config_to_json(c);
    manifest["shapes"] = {{"n_nodes", c.n_nodes},
                          {"n_steps", c.n_steps},
                          {"n_categories", c.n_categories},
                          {"d_dem", c.d_dem},
                          {"d_ext", c.d_ext}};
    manifest["t_in"] = c.t_in;
    manifest["t_out"] = c.t_out;
    manifest["n_windows"] = b.n_windows();
    manifest["splits"] = {{"train", {b.splits.train_begin, b.splits.train_end}},
                          {"val", {b.splits.val_begin, b.splits.val_end}},
                          {"cal", {b.splits.cal_begin, b.splits.cal_end}},
                          {"test", {b.splits.test_begin, b.splits.test_end}}};
    manifest["transform"] = b.log1p_transform ? "log1p" : "none";
    write_file(dir + "/manifest.json", manifest.dump(2) + "\n");

    char buf[64];
    {
        std::ostringstream os;
        os << "node,time,category,count\n";
        for (int64_t i = 0; i < c.n_nodes; ++i) {
            for (int64_t t = 0; t < c.n_steps; ++t) {
                for (int64_t cc = 0; cc < c.n_categories; ++cc) {
                    os << i << "," << t << "," << cc << ","
                       << static_cast<long long>(b.visit(i, t, cc)) << "\n";
                }
            }
        }
        write_file(dir + "/visits.csv", os.str());
    }
    {
        std::ostringstream os;
        os << "node,dim,value\n";
        for (int64_t i = 0; i < c.n_nodes; ++i) {
            for (int64_t k = 0; k < c.d_dem; ++k) {
                std::snprintf(buf, sizeof buf, "%.17g", b.demographics[i * c.d_dem + k]);
                os << i << "," << k << "," << buf << "\n";
            }
        }
        write_file(dir + "/demographics.csv", os.str());
    }
    {
        std::ostringstream os;
        os << "node,time,dim,value\n";
        for (int64_t i = 0; i < c.n_nodes; ++i) {
            for (int64_t t = 0; t < c.n_steps; ++t) {
                for (int64_t k = 0; k < c.d_ext; ++k) {
                    std::snprintf(buf, sizeof buf, "%.17g",
                                  b.externals[(i * c.n_steps + t) * c.d_ext + k]);
                    os << i << "," << t << "," << k << "," << buf << "\n";
                }
            }
        }
        write_file(dir + "/externals.csv", os.str());
    }
    b.graph.save(dir + "/graph.json");
}

DatasetBundle load_bundle(const std::string& dir) {
    njson manifest = njson::parse(read_file(dir + "/manifest.json"));
    DatasetBundle b;
    b.config = synthetic_config_from_json(manifest.at("config"));
    b.config.validate();
    b.log1p_transform = manifest.at("transform").get<std::string>() == "log1p";
    auto sp = manifest.at("splits");
    b.splits.train_begin = sp.at("train").at(0).get<int64_t>();
    b.splits.train_end = sp.at("train").at(1).get<int64_t>();
    b.splits.val_begin = sp.at("val").at(0).get<int64_t>();
    b.splits.val_end = sp.at("val").at(1).get<int64_t>();
    b.splits.cal_begin = sp.at("cal").at(0).get<int64_t>();
    b.splits.cal_end = sp.at("cal").at(1).get<int64_t>();
    b.splits.test_begin = sp.at("test").at(0).get<int64_t>();
    b.splits.test_end = sp.at("test").at(1).get<int64_t>();
    const auto& c = b.config;

    b.visits.assign(static_cast<size_t>(c.n_nodes * c.n_steps * c.n_categories), 0.0);
    b.demographics.assign(static_cast<size_t>(c.n_nodes * c.d_dem), 0.0);
    b.externals.assign(static_cast<size_t>(c.n_nodes * c.n_steps * c.d_ext), 0.0);

    auto for_each_line = [](const std::string& text, const std::string& header,
                            const std::string& what, auto&& fn) {
        std::istringstream is(text);
        std::string line;
        if (!std::getline(is, line) || split_csv_line(line) != split_csv_line(header)) {
            throw IoError(what + ": unexpected header");
        }
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            fn(split_csv_line(line));
        }
    };
    for_each_line(read_file(dir + "/visits.csv"), "node,time,category,count", "visits.csv",
                  [&](const std::vector<std::string>& f) {
                      if (f.size() != 4) throw IoError("visits.csv: bad row");
                      const int64_t i = std::stoll(f[0]), t = std::stoll(f[1]),
                                    cc = std::stoll(f[2]);
                      b.visits[(i * c.n_steps + t) * c.n_categories + cc] = std::stod(f[3]);
                  });
    for_each_line(read_file(dir + "/demographics.csv"), "node,dim,value", "demographics.csv",
                  [&](const std::vector<std::string>& f) {
                      if (f.size() != 3) throw IoError("demographics.csv: bad row");
                      const int64_t i = std::stoll(f[0]), k = std::stoll(f[1]);
                      b.demographics[i * c.d_dem + k] = std::stod(f[2]);
                  });
    for_each_line(read_file(dir + "/externals.csv"), "node,time,dim,value", "externals.csv",
                  [&](const std::vector<std::string>& f) {
                      if (f.size() != 4) throw IoError("externals.csv: bad row");
                      const int64_t i = std::stoll(f[0]), t = std::stoll(f[1]),
                                    k = std::stoll(f[2]);
                      b.externals[(i * c.n_steps + t) * c.d_ext + k] = std::stod(f[3]);
                  });
    b.graph = GraphSpec::load(dir + "/graph.json");
    return b;
}

}  // namespace stv
