#include "gpdip/rng.hpp"

#include "gpdip/error.hpp"

namespace gpdip {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL))) {}

Rng Rng::derive(std::uint64_t sub_stream) const {
    return Rng(seed_, splitmix64(stream_ * 0x9e3779b97f4a7c15ULL + sub_stream + 1));
}

double Rng::normal() { return normal_(engine_); }

double Rng::uniform() { return uniform_(engine_); }

std::size_t Rng::uniform_index(std::size_t n) {
    std::uniform_int_distribution<std::size_t> d(0, n - 1);
    return d(engine_);
}

Tensor gaussian_tensor(Rng& rng, const Shape& shape, double sigma) {
    if (sigma < 0.0) throw ShapeError("gaussian_tensor: sigma must be non-negative");
    Tensor t(shape);  // throws on zero-size shapes
    if (sigma == 0.0) return t;
    for (double& v : t.storage()) v = rng.normal(sigma);
    return t;
}

}  // namespace gpdip
