#ifndef STV_COMMON_HPP
#define STV_COMMON_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stv {

// Error taxonomy. The CLI maps these onto its exit-code contract:
// config/usage -> 2, I/O -> 3, numeric failure -> 4.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ParamError : ConfigError {
    using ConfigError::ConfigError;
};
struct ShapeError : ConfigError {
    using ConfigError::ConfigError;
};
struct ContractError : ConfigError {
    using ConfigError::ConfigError;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Order-independent summation via 128-bit fixed-point accumulation: integer
// addition is exactly commutative and associative, so node-contracting
// reductions computed this way are exactly permutation-equivariant. The
// 2^-60 resolution sits below double rounding for the magnitudes that flow
// through the model (finite checks bound every operand).
// Two-lane fixed point: hi counts units of 2^-20, lo units of 2^-72. The
// round-and-subtract split is exact, so each addend maps to a unique integer
// pair and the integer sums are order-independent. Headroom: |addend| up to
// ~2^40 and a few thousand addends stay clear of int64 overflow.
struct InvariantAccumulator {
    int64_t hi = 0;
    int64_t lo = 0;
    void add(double a) {
        const double h = std::nearbyint(a * 0x1p20);
        hi += static_cast<int64_t>(h);
        lo += std::llrint((a - h * 0x1p-20) * 0x1p72);
    }
    double value() const {
        return static_cast<double>(hi) * 0x1p-20 + static_cast<double>(lo) * 0x1p-72;
    }
};

inline double stable_sum(std::span<const double> addends) {
    InvariantAccumulator acc;
    for (double a : addends) acc.add(a);
    return acc.value();
}

inline void check_finite(const char* op, const std::vector<double>& v) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw NumericError(std::string(op) + ": non-finite output");
        }
    }
}

// Worker cap for data-parallel sections; STVISIT_THREADS overrides the
// hardware count. Results never depend on this value.
int worker_threads();

// FNV-1a, used to key per-site PRNG streams and per-parameter init streams.
inline uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace stv

#endif  // STV_COMMON_HPP
