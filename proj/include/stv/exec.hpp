#ifndef STV_EXEC_HPP
#define STV_EXEC_HPP

#include <cstdint>

#include "stv/common.hpp"
#include "stv/rng.hpp"

namespace stv {

// Per-call execution context. Dropout masks are keyed by
// (seed, step, pass, site), so any forward pass can be replayed exactly and
// concurrent passes draw from disjoint streams.
struct ExecCtx {
    bool dropout_on = false;
    uint64_t seed = 0;
    uint64_t step = 0;
    uint64_t pass = 0;

    uint64_t stream(const char* site) const {
        return mix_keys(mix_keys(seed, step), mix_keys(pass, fnv1a(site)));
    }
};

}  // namespace stv

#endif  // STV_EXEC_HPP
