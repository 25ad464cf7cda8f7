#ifndef STV_RNG_HPP
#define STV_RNG_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "stv/common.hpp"

namespace stv {

namespace detail {
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}
}  // namespace detail

inline uint64_t mix_keys(uint64_t a, uint64_t b) {
    return detail::splitmix64(a ^ detail::splitmix64(b));
}

// Counter-based uniform in [0, 1): a pure function of (key, counter), so any
// stream can be replayed or evaluated out of order.
inline double hash01(uint64_t key, uint64_t counter) {
    uint64_t z = detail::splitmix64(key ^ detail::splitmix64(counter + 0x632BE59BD9B4E019ULL));
    return static_cast<double>(z >> 11) * 0x1.0p-53;
}

// Standard-normal inverse CDF (Acklam's rational approximation,
// |rel err| < 1.2e-9 on the central range).
double normal_icdf(double p);

inline double normal_quantile(double p) { return normal_icdf(p); }

inline double hash_normal(uint64_t key, uint64_t counter) {
    double u = hash01(key, counter);
    if (u < 1e-12) u = 1e-12;
    if (u > 1.0 - 1e-12) u = 1.0 - 1e-12;
    return normal_icdf(u);
}

// Small sequential generator for shuffles; the algorithm is pinned here so
// permutations are identical across platforms.
class SeqRng {
  public:
    explicit SeqRng(uint64_t seed) : state_(seed) {}
    uint64_t next_u64() {
        state_ = detail::splitmix64(state_ + 0x9E3779B97F4A7C15ULL);
        return state_;
    }
    double next01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    // uniform in [0, n)
    uint64_t next_below(uint64_t n) { return next_u64() % n; }

  private:
    uint64_t state_;
};

template <typename T>
void fisher_yates(std::vector<T>& v, SeqRng& rng) {
    for (size_t i = v.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng.next_below(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace stv

#endif  // STV_RNG_HPP
