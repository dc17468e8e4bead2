#pragma once

#include <cmath>
#include <cstdint>

#include "pr/tensor.hpp"

namespace pr::rng {

// SplitMix64 finalizer; full-avalanche 64-bit mix.
inline std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Hash-chain key for counter-based streams. Every random draw in the
/// project is addressed by a key built from (seed, ids..., role, ...) so
/// that batched, looped and parallel evaluation orders see identical noise.
struct Key {
    std::uint64_t state = 0;

    Key with(std::uint64_t field) const { return Key{mix(state ^ field)}; }
};

inline Key key(std::uint64_t seed) { return Key{mix(seed)}; }

// Stream roles. Values are part of the reproducibility contract: tests
// re-derive draws from these constants.
enum class Role : std::uint64_t {
    param_init = 1,
    train_batch = 2,
    train_noise = 3,
    train_sigma = 4,
    train_index = 5,
    score_dx = 6,
    score_y = 7,
    score_y_proj = 8,
    msma = 9,
    dist_unet = 10,
    perceptual_init = 11,
    toy_background = 12,
    toy_foreground = 13,
    projection = 14,
};

inline Key with_role(Key k, Role r) { return k.with(static_cast<std::uint64_t>(r)); }

/// Counter-based stream: value i is a pure function of (key, i).
class Stream {
public:
    Stream() = default;
    explicit Stream(Key k) : state_(k.state) {}

    std::uint64_t u64_at(std::uint64_t counter) const {
        return mix(state_ + (counter + 1) * 0x9e3779b97f4a7c15ull);
    }

    // uniform in [0, 1) with 53 bits
    double uniform_at(std::uint64_t counter) const {
        return static_cast<double>(u64_at(counter) >> 11) * 0x1.0p-53;
    }

    // standard normal via Box-Muller on the (2i, 2i+1) uniform pair
    double gaussian_at(std::uint64_t counter) const {
        double u1 = uniform_at(2 * counter);
        double u2 = uniform_at(2 * counter + 1);
        double r = std::sqrt(-2.0 * std::log1p(-u1));
        return r * std::cos(2.0 * M_PI * u2);
    }

    std::uint64_t next_u64() { return u64_at(cursor_++); }
    double next_uniform() { return uniform_at(cursor_++); }
    double next_gaussian() { return gaussian_at(cursor_++); }

    // uniform integer in [0, n)
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(next_uniform() * static_cast<double>(n));
    }

    template <typename T>
    void fill_gaussian(Tensor<T>& t) {
        for (std::size_t i = 0; i < t.size(); ++i) {
            t[i] = static_cast<T>(next_gaussian());
        }
    }

    template <typename T>
    void fill_gaussian(Tensor<T>& t, double stddev) {
        for (std::size_t i = 0; i < t.size(); ++i) {
            t[i] = static_cast<T>(next_gaussian() * stddev);
        }
    }

private:
    std::uint64_t state_ = 0;
    std::uint64_t cursor_ = 0;
};

template <typename T>
Tensor<T> gaussian_like_shape(Key k, const std::vector<std::size_t>& shape) {
    Tensor<T> t(shape);
    Stream s(k);
    s.fill_gaussian(t);
    return t;
}

}  // namespace pr::rng
