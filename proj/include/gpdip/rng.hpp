#pragma once

#include <cstdint>
#include <random>

#include "gpdip/tensor.hpp"

namespace gpdip {

// Seeded generator identified by (seed, stream). Distinct streams of the same
// master seed are decorrelated by hashing both into the engine seed, so work
// can be split across threads without changing any draw.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    // Independent generator for a sub-stream of this generator's seed.
    Rng derive(std::uint64_t sub_stream) const;

    double normal();
    double normal(double sigma) { return sigma * normal(); }
    double uniform();
    std::uint64_t next_u64() { return engine_(); }
    std::size_t uniform_index(std::size_t n);

    std::mt19937_64& engine() { return engine_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x);

// I.i.d. N(0, sigma^2) entries.
Tensor gaussian_tensor(Rng& rng, const Shape& shape, double sigma);

}  // namespace gpdip
