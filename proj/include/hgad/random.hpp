#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "hgad/tensor.hpp"

namespace hgad {

using Rng = std::mt19937_64;

/// Independent stream for one purpose (init, batching, ga, ...) derived from a run seed.
/// Streams do not shift when another purpose draws more or fewer numbers.
inline Rng make_stream(std::uint64_t seed, std::string_view purpose) {
    std::uint64_t tag = 1469598103934665603ULL;  // FNV-1a
    for (char c : purpose) {
        tag ^= static_cast<unsigned char>(c);
        tag *= 1099511628211ULL;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
    return Rng(seq);
}

inline double uniform(Rng& rng, double low, double high) {
    return std::uniform_real_distribution<double>(low, high)(rng);
}

inline double normal(Rng& rng, double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(rng);
}

/// Glorot-uniform init: entries uniform in +-sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    Tensor t(std::move(shape));
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : t.data()) v = uniform(rng, -limit, limit);
    t.set_requires_grad(true);
    return t;
}

inline Tensor gaussian(Shape shape, double stddev, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = normal(rng, 0.0, stddev);
    t.set_requires_grad(true);
    return t;
}

}  // namespace hgad
