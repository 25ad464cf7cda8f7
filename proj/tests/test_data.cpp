#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "stv/data.hpp"
#include "test_util.hpp"

using namespace stv;

namespace {

SyntheticConfig small_cfg() {
    SyntheticConfig c;
    c.n_nodes = 6;
    c.n_steps = 60;
    c.n_categories = 2;
    c.base_rates = {30.0, 8.0};
    c.d_dem = 4;
    c.d_ext = 3;
    c.seed = 7;
    return c;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("degenerate generator: no seasonality, noise, drift or weather is constant") {
    SyntheticConfig c = small_cfg();
    c.seasonal_amplitude = 0.0;
    c.noise_dispersion = 0.0;
    c.drift_scale = 0.0;
    c.weather_coupling = 0.0;
    DatasetBundle b = generate_synthetic(c);
    for (int64_t i = 0; i < c.n_nodes; ++i) {
        for (int64_t cc = 0; cc < c.n_categories; ++cc) {
            const double first = b.visit(i, 0, cc);
            CHECK(first == std::llround(first));  // integral counts
            for (int64_t t = 1; t < c.n_steps; ++t) CHECK(b.visit(i, t, cc) == first);
        }
    }
}

TEST_CASE("generator is bit-deterministic per seed") {
    SyntheticConfig c = small_cfg();
    DatasetBundle a = generate_synthetic(c);
    DatasetBundle b = generate_synthetic(c);
    CHECK(a.visits == b.visits);
    CHECK(a.demographics == b.demographics);
    CHECK(a.externals == b.externals);
    CHECK(a.graph.adjacency == b.graph.adjacency);

    c.seed = 8;
    DatasetBundle d = generate_synthetic(c);
    CHECK(a.visits != d.visits);
}

TEST_CASE("drop shock scales the windowed mean") {
    SyntheticConfig c;
    c.n_nodes = 20;
    c.n_steps = 200;
    c.seed = 3;
    Shock s;
    s.kind = "drop";
    s.start = 100;
    s.duration = 10;
    s.multiplier = 0.3;
    c.shocks = {s};
    DatasetBundle b = generate_synthetic(c);
    double pre = 0.0, in = 0.0;
    for (int64_t i = 0; i < c.n_nodes; ++i) {
        for (int64_t cc = 0; cc < c.n_categories; ++cc) {
            for (int64_t t = 90; t < 100; ++t) pre += b.visit(i, t, cc);
            for (int64_t t = 100; t < 110; ++t) in += b.visit(i, t, cc);
        }
    }
    const double ratio = in / pre;
    CHECK(ratio > 0.3 * 0.85);
    CHECK(ratio < 0.3 * 1.15);
}

TEST_CASE("shock locality: untouched nodes keep their level") {
    SyntheticConfig c;
    c.n_nodes = 20;
    c.n_steps = 200;
    c.seed = 11;
    Shock s;
    s.kind = "surge";
    s.start = 100;
    s.duration = 50;
    s.multiplier = 3.0;
    s.nodes = {0, 1, 2};
    c.shocks = {s};
    DatasetBundle b = generate_synthetic(c);
    double pre = 0.0, in = 0.0;
    for (int64_t i = 3; i < c.n_nodes; ++i) {
        for (int64_t cc = 0; cc < c.n_categories; ++cc) {
            for (int64_t t = 50; t < 100; ++t) pre += b.visit(i, t, cc);
            for (int64_t t = 100; t < 150; ++t) in += b.visit(i, t, cc);
        }
    }
    CHECK(std::abs(in / pre - 1.0) < 0.10);
}

TEST_CASE("shock validation") {
    Shock s;
    s.kind = "drop";
    s.start = 0;
    s.duration = 5;
    s.multiplier = 1.2;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.kind = "surge";
    s.multiplier = 0.4;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.kind = "other";
    CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("log transform and inverse") {
    CHECK(log_transform({0.0})[0] == 0.0);
    CHECK(log_transform({std::exp(1.0) - 1.0})[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(log_transform({-0.5}), ContractError);

    auto counts = stv_test::rand_vec(5, 200, 0.0, 5000.0);
    for (double& v : counts) v = std::floor(v);
    auto back = inverse_transform(log_transform(counts));
    for (size_t i = 0; i < counts.size(); ++i) {
        CHECK(std::abs(back[i] - counts[i]) < 1e-12 * std::max(1.0, counts[i]));
    }
}

TEST_CASE("window counting") {
    CHECK(count_windows(10, 7, 3) == 1);
    CHECK(count_windows(12, 7, 3) == 3);
    CHECK_THROWS_AS(count_windows(9, 7, 3), ContractError);
}

TEST_CASE("split layout: 100 windows -> 80/5/5/10 and guards") {
    SplitRanges s = split_dataset(100, 0.8, 0.1, 0.1, 0.5);
    CHECK(s.train_end - s.train_begin == 80);
    CHECK(s.val_end - s.val_begin == 5);
    CHECK(s.cal_end - s.cal_begin == 5);
    CHECK(s.test_end - s.test_begin == 10);
    // chronological, disjoint, covering
    CHECK(s.train_begin == 0);
    CHECK(s.train_end == s.val_begin);
    CHECK(s.val_end == s.cal_begin);
    CHECK(s.cal_end == s.test_begin);
    CHECK(s.test_end == 100);

    CHECK_THROWS_AS(split_dataset(100, 0.8, 0.1, 0.1, 0.0), ConfigError);
    CHECK_THROWS_AS(split_dataset(100, 0.7, 0.1, 0.1, 0.5), ConfigError);
    CHECK_THROWS_AS(split_dataset(5, 0.8, 0.1, 0.1, 0.5), ConfigError);
}

TEST_CASE("no temporal leakage across split boundaries") {
    SyntheticConfig c = small_cfg();
    DatasetBundle b = generate_synthetic(c);
    CHECK(b.splits.train_end <= b.splits.val_begin);
    CHECK(b.splits.val_end <= b.splits.cal_begin);
    CHECK(b.splits.cal_end <= b.splits.test_begin);
    CHECK(b.splits.test_end == b.n_windows());
}

TEST_CASE("window materialization pads by repeating the earliest frame") {
    SyntheticConfig c = small_cfg();
    DatasetBundle b = generate_synthetic(c);
    WindowTensors w = materialize_window(b, 5, 8);
    CHECK(w.v_in.shape() == Shape{c.n_nodes, 8, c.n_categories});
    CHECK(w.y_log.shape() == Shape{c.n_nodes, c.t_out, c.n_categories});
    for (int64_t i = 0; i < c.n_nodes; ++i) {
        for (int64_t cc = 0; cc < c.n_categories; ++cc) {
            const double frame0 = std::log1p(b.visit(i, 5, cc));
            CHECK(w.v_in.values()[(i * 8 + 0) * c.n_categories + cc] == frame0);
            CHECK(w.v_in.values()[(i * 8 + 1) * c.n_categories + cc] == frame0);  // pad copy
            const double frame2 = std::log1p(b.visit(i, 6, cc));
            CHECK(w.v_in.values()[(i * 8 + 2) * c.n_categories + cc] == frame2);
            // targets follow the input window
            const double t0 = b.visit(i, 5 + c.t_in, cc);
            CHECK(w.y_raw[static_cast<size_t>((i * c.t_out) * c.n_categories + cc)] == t0);
        }
    }
    CHECK_THROWS_AS(materialize_window(b, b.n_windows() + 10, 8), ContractError);
}

TEST_CASE("bundle save/load round trip is exact; reruns are byte-identical") {
    namespace fs = std::filesystem;
    const std::string dir = "data_test_bundle";
    fs::remove_all(dir);
    SyntheticConfig c = small_cfg();
    DatasetBundle b = generate_synthetic(c);
    save_bundle(b, dir);
    for (const char* f :
         {"manifest.json", "visits.csv", "demographics.csv", "externals.csv", "graph.json"}) {
        CHECK(fs::exists(dir + "/" + std::string(f)));
    }
    DatasetBundle l = load_bundle(dir);
    CHECK(l.visits == b.visits);
    CHECK(l.demographics == b.demographics);
    CHECK(l.externals == b.externals);
    CHECK(l.graph.adjacency == b.graph.adjacency);
    CHECK(l.splits.test_begin == b.splits.test_begin);
    CHECK(l.config.n_steps == c.n_steps);

    const std::string once = slurp(dir + "/visits.csv");
    const std::string dir2 = "data_test_bundle2";
    fs::remove_all(dir2);
    save_bundle(generate_synthetic(c), dir2);
    CHECK(slurp(dir2 + "/visits.csv") == once);
    CHECK(slurp(dir2 + "/externals.csv") == slurp(dir + "/externals.csv"));
    CHECK(slurp(dir2 + "/manifest.json") == slurp(dir + "/manifest.json"));
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("visits.csv keeps the exact header and integer counts") {
    namespace fs = std::filesystem;
    const std::string dir = "data_test_header";
    fs::remove_all(dir);
    save_bundle(generate_synthetic(small_cfg()), dir);
    std::ifstream f(dir + "/visits.csv");
    std::string header;
    std::getline(f, header);
    CHECK(header == "node,time,category,count");
    std::string row;
    std::getline(f, row);
    CHECK(row.find('.') == std::string::npos);
    fs::remove_all(dir);
}
