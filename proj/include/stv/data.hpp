#ifndef STV_DATA_HPP
#define STV_DATA_HPP

#include <string>
#include <vector>

#include "stv/graph.hpp"
#include "stv/tensor.hpp"

namespace stv {

struct Shock {
    std::string kind;  // "drop" | "surge"
    int64_t start = 0;
    int64_t duration = 0;
    double multiplier = 1.0;
    std::vector<int64_t> nodes;       // empty = all nodes
    std::vector<int64_t> categories;  // empty = all categories

    void validate() const;
};

struct SyntheticConfig {
    int64_t n_nodes = 20;
    int64_t n_steps = 600;
    int64_t n_categories = 4;
    uint64_t seed = 0;
    std::vector<double> base_rates = {40.0, 12.0, 8.0, 6.0};
    double seasonal_amplitude = 1.0;
    double spatial_correlation_length = 30.0;
    double noise_dispersion = 0.15;
    double drift_scale = 0.25;
    double drift_rho = 0.95;
    double weather_rho = 0.8;
    double weather_coupling = 0.15;
    double coord_extent = 100.0;
    int64_t d_dem = 32;
    int64_t d_ext = 16;
    int64_t t_in = 7;
    int64_t t_out = 3;
    double train_ratio = 0.8;
    double val_ratio = 0.1;
    double test_ratio = 0.1;
    double cal_fraction = 0.5;
    double graph_sigma = 0.0;  // <= 0 selects the median pairwise distance
    double graph_epsilon = 0.1;
    std::vector<Shock> shocks;

    void validate() const;
};

// Half-open, chronologically ordered window-index ranges.
struct SplitRanges {
    int64_t train_begin = 0, train_end = 0;
    int64_t val_begin = 0, val_end = 0;
    int64_t cal_begin = 0, cal_end = 0;
    int64_t test_begin = 0, test_end = 0;
};

struct DatasetBundle {
    SyntheticConfig config;
    std::vector<double> visits;        // N*T*C raw counts
    std::vector<double> demographics;  // N*d_dem
    std::vector<double> externals;     // N*T*d_ext
    GraphSpec graph;
    SplitRanges splits;
    bool log1p_transform = true;

    double visit(int64_t i, int64_t t, int64_t c) const {
        return visits[(i * config.n_steps + t) * config.n_categories + c];
    }
    int64_t n_windows() const;
};

DatasetBundle generate_synthetic(const SyntheticConfig& config);

// ln(x+1) elementwise; inputs must be >= 0.
std::vector<double> log_transform(const std::vector<double>& v);
// exp(x)-1 elementwise.
std::vector<double> inverse_transform(const std::vector<double>& v);
inline double log1p_value(double x) { return std::log1p(x); }
inline double expm1_value(double x) { return std::expm1(x); }

int64_t count_windows(int64_t n_steps, int64_t t_in, int64_t t_out);

SplitRanges split_dataset(int64_t n_windows, double train_ratio, double val_ratio,
                          double test_ratio, double cal_fraction);

// One training/eval sample: inputs left-padded to pad_to by repeating the
// earliest frame; targets are the following t_out steps.
struct WindowTensors {
    Tensor v_in;   // {N, pad_to, C}, log scale
    Tensor e_in;   // {N, pad_to, d_ext}
    Tensor y_log;  // {N, t_out, C}
    std::vector<double> y_raw;
};
WindowTensors materialize_window(const DatasetBundle& b, int64_t start, int64_t pad_to);

void save_bundle(const DatasetBundle& b, const std::string& dir);
DatasetBundle load_bundle(const std::string& dir);

}  // namespace stv

#endif  // STV_DATA_HPP
