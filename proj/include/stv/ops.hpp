#ifndef STV_OPS_HPP
#define STV_OPS_HPP

#include <cstdint>
#include <vector>

#include "stv/tape.hpp"
#include "stv/tensor.hpp"

namespace stv {
namespace ops {

// Every op validates shapes, checks its output for non-finite values, and
// records a backward node on the active tape when any input requires grad.

Tensor reshape(const Tensor& x, Shape shape);
Tensor matmul(const Tensor& a, const Tensor& b);  // 2-D x 2-D

// add supports equal shapes or a rank-1 rhs broadcast over the last axis.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, double s);
Tensor mul_scalar(const Tensor& x, double s);

Tensor concat_last(const std::vector<Tensor>& xs);
std::vector<Tensor> split_last(const Tensor& x, const std::vector<int64_t>& widths);

Tensor sum_axis(const Tensor& x, int64_t axis);
Tensor mean_axis(const Tensor& x, int64_t axis);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor silu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor tanh(const Tensor& x);

Tensor row_softmax(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift,
                  double eps = 1e-5);

// x: {N,T,d}, kernel: {d,k}; zero "same" padding centred at (k-1)/2.
Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel);
// x: {N,T,c_in}, w: {c_out,c_in,k}, b: {c_out}; pad (k-s)/2 either side.
Tensor strided_conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int64_t stride);
// Adjoint layout: x: {N,T',c_in}, w: {c_in,c_out,k}, b: {c_out}; out length = stride*T'.
Tensor transposed_conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int64_t stride);

// Bernoulli mask keyed by (stream_key, element); identical across replays.
Tensor dropout(const Tensor& x, double rate, uint64_t stream_key, bool active);

Tensor broadcast_time(const Tensor& x, int64_t t_len);  // {N,d} -> {N,T,d}
Tensor outer_sum(const Tensor& rows, const Tensor& cols);  // {N},{M} -> {N,M}
Tensor transpose2d(const Tensor& x);
// 1/sqrt(x) with x <= 0 mapped to 1 (zero-degree guard); guarded entries get
// zero gradient.
Tensor rsqrt_guarded(const Tensor& x);

// out[i, ...] = sum_j a[i,j] * x[j, ...]; the node contraction uses
// value-sorted summation so relabeling nodes permutes outputs exactly.
Tensor graph_mix(const Tensor& a, const Tensor& x);

// Selective diagonal state-space scan, one left-to-right pass per node:
//   delta_t = softplus(x_t W_dt + b_dt)
//   h_t[d,n] = exp(delta_t[d] a[d,n]) h_{t-1}[d,n] + delta_t[d] (x_t W_b)[n] x_t[d]
//   y_t[d]   = sum_n (x_t W_c)[n] h_t[d,n] + skip[d] x_t[d]
// x: {N,T,d}; a: {d,n}; w_dt: {d,d}; b_dt: {d}; w_b, w_c: {d,n}; skip: {d}.
Tensor ssm_scan(const Tensor& x, const Tensor& a, const Tensor& w_dt, const Tensor& b_dt,
                const Tensor& w_b, const Tensor& w_c, const Tensor& skip);

}  // namespace ops
}  // namespace stv

#endif  // STV_OPS_HPP
