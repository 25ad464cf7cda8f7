#ifndef STV_NN_HPP
#define STV_NN_HPP

#include <string>

#include "stv/ops.hpp"

namespace stv {

enum class Act { kSilu, kGelu, kRelu };
Act act_from_string(const std::string& s);

inline Tensor apply_act(const Tensor& x, Act a) {
    switch (a) {
        case Act::kSilu: return ops::silu(x);
        case Act::kGelu: return ops::gelu(x);
        case Act::kRelu: return ops::relu(x);
    }
    throw ContractError("apply_act: bad enum");
}

// y = x @ w + b applied along the last axis of any-rank x.
Tensor affine_last(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor affine_last(const Tensor& x, const Tensor& w);  // no bias

// Two affine maps with an activation between, width-preserving.
Tensor chan_mlp(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                const Tensor& b2, Act act = Act::kSilu);

}  // namespace stv

#endif  // STV_NN_HPP
