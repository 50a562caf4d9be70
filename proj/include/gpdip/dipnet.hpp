#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpdip/network_spec.hpp"
#include "gpdip/ops.hpp"
#include "gpdip/rng.hpp"
#include "gpdip/tensor.hpp"

namespace gpdip {

// Trainable tensors of a network: one filter bank per Conv layer and one
// bias vector per Bias layer, in layer order.
struct ParamSet {
    std::vector<Tensor> tensors;
    std::vector<std::size_t> layer;  // owning layer index of each tensor
    std::uint64_t seed = 0;

    std::size_t count() const;  // total number of scalars
    double squared_norm() const;
    bool all_finite() const;
    ParamSet zeros_like() const;
};

struct NetworkInput {
    Tensor x;
    bool frozen = true;
    double sigma_p = 0.0;  // std of the per-iteration input perturbation
};

// Draws one realization of the spec's input process on the given spatial
// extents: white noise, or white noise filtered (circularly) by the Gaussian
// taps of InputDescriptor::filter_std.
Tensor draw_input(const InputDescriptor& input, const Shape& spatial, Rng& rng);

// Weights N(0, gain / fan_in), bias entries N(0, sigma_b^2). Deterministic in
// the seed; the input is drawn from an independent stream of the same seed.
ParamSet init_params(const NetworkSpec& spec, std::uint64_t seed);
NetworkInput init_input(const NetworkSpec& spec, const Shape& spatial, std::uint64_t seed);

// Output of every layer from one forward pass; outputs[0] is the input.
struct ForwardCache {
    std::vector<Tensor> outputs;
    bool valid() const { return !outputs.empty(); }
};

// Runs the layer list. When `cache` is non-null it receives all intermediate
// tensors for backward().
Tensor forward(const NetworkSpec& spec, const ParamSet& params, const Tensor& input, Padding padding,
               ForwardCache* cache = nullptr);

struct Gradients {
    ParamSet params;
    Tensor input;
};

// Reverse pass for the loss whose gradient with respect to the network output
// is `output_grad` (f - y for 0.5 ||y - f||^2).
Gradients backward(const NetworkSpec& spec, const ParamSet& params, const ForwardCache& cache, const Tensor& output_grad,
                   Padding padding);

// Spatial extents of the network output for a given input extent.
Shape output_spatial(const NetworkSpec& spec, const Shape& input_spatial);

// Flat checkpoint: one JSON header line (shapes, layer indices, seed,
// iteration), then all tensor values as little-endian doubles.
void save_checkpoint(const ParamSet& params, const std::string& path, std::int64_t iteration = 0);
ParamSet load_checkpoint(const std::string& path, std::int64_t* iteration = nullptr);

}  // namespace gpdip
