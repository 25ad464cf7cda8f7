#ifndef STV_TEST_OP_CATALOG_HPP
#define STV_TEST_OP_CATALOG_HPP

#include <functional>
#include <vector>

#include "stv/ops.hpp"
#include "test_util.hpp"

// Finite-difference harness cases covering every op kind in the substrate.
// Inputs for kinked activations are shifted away from their kinks so central
// differences stay meaningful.

namespace stv_test {

struct CatalogCase {
    const char* name;
    std::function<stv::Tensor(const std::vector<stv::Tensor>&)> f;
    std::vector<stv::Shape> shapes;
    double lo = -1.0, hi = 1.0;
};

inline stv::Tensor weighted_sum(const stv::Tensor& t, uint64_t key) {
    stv::Tensor w = rand_tensor(key, t.shape(), -1.0, 1.0);
    return stv::ops::sum_all(stv::ops::mul(t, w));
}

inline std::vector<CatalogCase> catalog_cases() {
    using namespace stv;
    std::vector<CatalogCase> cases;
    auto unary = [&](const char* name, auto fn, double lo = -1.0, double hi = 1.0) {
        cases.push_back({name,
                         [fn](const std::vector<Tensor>& in) {
                             return weighted_sum(fn(in[0]), 998877);
                         },
                         {{3, 4}},
                         lo,
                         hi});
    };
    unary("exp", [](const Tensor& x) { return ops::exp(x); });
    unary("log", [](const Tensor& x) { return ops::log(x); }, 0.2, 2.0);
    unary("sqrt", [](const Tensor& x) { return ops::sqrt(x); }, 0.2, 2.0);
    unary("softplus", [](const Tensor& x) { return ops::softplus(x); });
    unary("sigmoid", [](const Tensor& x) { return ops::sigmoid(x); });
    unary("relu", [](const Tensor& x) { return ops::relu(ops::add_scalar(x, 2.5)); });
    unary("leaky_relu",
          [](const Tensor& x) { return ops::leaky_relu(ops::add_scalar(x, 2.5), 0.2); });
    unary("silu", [](const Tensor& x) { return ops::silu(x); });
    unary("gelu", [](const Tensor& x) { return ops::gelu(x); });
    unary("tanh", [](const Tensor& x) { return ops::tanh(x); });
    unary("row_softmax", [](const Tensor& x) { return ops::row_softmax(x); });
    unary("add_scalar", [](const Tensor& x) { return ops::add_scalar(x, 0.7); });
    unary("mul_scalar", [](const Tensor& x) { return ops::mul_scalar(x, -1.3); });
    unary("rsqrt_guarded", [](const Tensor& x) { return ops::rsqrt_guarded(x); }, 0.3, 2.0);
    unary("reshape", [](const Tensor& x) { return ops::reshape(x, {2, 6}); });
    unary("sum_axis", [](const Tensor& x) { return ops::sum_axis(x, 1); });
    unary("mean_axis", [](const Tensor& x) { return ops::mean_axis(x, 0); });
    unary("mean_all", [](const Tensor& x) { return ops::mean_all(x); });
    unary("dropout", [](const Tensor& x) { return ops::dropout(x, 0.4, 777, true); });

    cases.push_back({"matmul",
                     [](const std::vector<Tensor>& in) {
                         return ops::sum_all(ops::matmul(in[0], in[1]));
                     },
                     {{3, 4}, {4, 2}}});
    cases.push_back({"add", [](const std::vector<Tensor>& in) {
                         return weighted_sum(ops::add(in[0], in[1]), 11);
                     }, {{3, 4}, {3, 4}}});
    cases.push_back({"add_bias", [](const std::vector<Tensor>& in) {
                         return weighted_sum(ops::add(in[0], in[1]), 12);
                     }, {{3, 4}, {4}}});
    cases.push_back({"sub", [](const std::vector<Tensor>& in) {
                         return weighted_sum(ops::sub(in[0], in[1]), 13);
                     }, {{3, 4}, {3, 4}}});
    cases.push_back({"mul", [](const std::vector<Tensor>& in) {
                         return weighted_sum(ops::mul(in[0], in[1]), 14);
                     }, {{3, 4}, {3, 4}}});
    cases.push_back({"div",
                     [](const std::vector<Tensor>& in) {
                         return weighted_sum(ops::div(in[0], ops::add_scalar(in[1], 2.0)), 15);
                     },
                     {{3, 4}, {3, 4}},
                     0.2,
                     1.0});
    cases.push_back({"concat_split",
                     [](const std::vector<Tensor>& in) {
                         Tensor c = ops::concat_last({in[0], in[1]});
                         auto parts = ops::split_last(c, {2, 3, 1});
                         return ops::add(weighted_sum(parts[0], 16),
                                         ops::add(weighted_sum(parts[1], 17),
                                                  weighted_sum(parts[2], 18)));
                     },
                     {{3, 2}, {3, 4}}});
    cases.push_back({"layer_norm",
                     [](const std::vector<Tensor>& in) {
                         return weighted_sum(ops::layer_norm(in[0], in[1], in[2]), 19);
                     },
                     {{3, 5}, {5}, {5}}});
    cases.push_back({"depthwise_conv1d",
                     [](const std::vector<Tensor>& in) {
                         return weighted_sum(ops::depthwise_conv1d(in[0], in[1]), 20);
                     },
                     {{2, 6, 3}, {3, 3}}});
    cases.push_back({"strided_conv1d",
                     [](const std::vector<Tensor>& in) {
                         return weighted_sum(ops::strided_conv1d(in[0], in[1], in[2], 2), 21);
                     },
                     {{2, 8, 3}, {4, 3, 4}, {4}}});
    cases.push_back({"transposed_conv1d",
                     [](const std::vector<Tensor>& in) {
                         return weighted_sum(ops::transposed_conv1d(in[0], in[1], in[2], 2), 22);
                     },
                     {{2, 4, 3}, {3, 2, 4}, {2}}});
    cases.push_back({"broadcast_time",
                     [](const std::vector<Tensor>& in) {
                         return weighted_sum(ops::broadcast_time(in[0], 5), 23);
                     },
                     {{3, 4}}});
    cases.push_back({"outer_sum",
                     [](const std::vector<Tensor>& in) {
                         return weighted_sum(ops::outer_sum(in[0], in[1]), 24);
                     },
                     {{4}, {4}}});
    cases.push_back({"transpose2d",
                     [](const std::vector<Tensor>& in) {
                         return weighted_sum(ops::transpose2d(in[0]), 25);
                     },
                     {{3, 5}}});
    cases.push_back({"graph_mix",
                     [](const std::vector<Tensor>& in) {
                         return weighted_sum(ops::graph_mix(in[0], in[1]), 26);
                     },
                     {{4, 4}, {4, 3, 2}}});
    cases.push_back({"ssm_scan",
                     [](const std::vector<Tensor>& in) {
                         Tensor a = ops::mul_scalar(ops::softplus(in[1]), -1.0);
                         return weighted_sum(
                             ops::ssm_scan(in[0], a, in[2], in[3], in[4], in[5], in[6]), 27);
                     },
                     {{2, 5, 3}, {3, 2}, {3, 3}, {3}, {3, 2}, {3, 2}, {3}}});
    return cases;
}

}  // namespace stv_test

#endif
