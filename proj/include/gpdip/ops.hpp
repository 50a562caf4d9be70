#pragma once

#include <cstddef>
#include <string>

#include "gpdip/tensor.hpp"

namespace gpdip {

enum class Padding { circular, reflect };
enum class Activation { erf, relu };
enum class ResampleMode { decimate, avgpool, nearest, bilinear };
enum class MergeKind { add, concat };

std::string to_string(Padding p);
std::string to_string(Activation a);
std::string to_string(ResampleMode m);
std::string to_string(MergeKind k);
Padding parse_padding(const std::string& s);
Activation parse_activation(const std::string& s);
ResampleMode parse_resample_mode(const std::string& s);
MergeKind parse_merge_kind(const std::string& s);

inline bool is_downsampling(ResampleMode m) { return m == ResampleMode::decimate || m == ResampleMode::avgpool; }

// Maps a possibly out-of-range index onto [0, n) under the padding rule.
// Reflect mirrors about the edge samples without repeating them.
std::size_t pad_index(long i, std::size_t n, Padding padding);

// "Same"-size cross-correlation (no filter flip).
//   input   [Cin, W]        or [Cin, H, W]
//   filters [Cout, Cin, d]  or [Cout, Cin, d, d], d odd
// out[o](t) = sum_i sum_j filters[o][i][j] * input[i](t + j - d/2)
Tensor conv(const Tensor& input, const Tensor& filters, Padding padding);

struct ConvGrad {
    Tensor input;
    Tensor filters;
};

// Reverse-mode gradients of conv(input, filters) contracted with `upstream`.
ConvGrad conv_grad(const Tensor& input, const Tensor& filters, const Tensor& upstream, Padding padding);

Tensor activation(const Tensor& x, Activation kind);
// upstream * h'(x), elementwise.
Tensor activation_grad(const Tensor& x, const Tensor& upstream, Activation kind);

// Down modes require every spatial extent divisible by `factor`; up modes
// multiply every spatial extent by it. `boundary` only affects bilinear.
Tensor resample(const Tensor& x, int factor, ResampleMode mode, Padding boundary = Padding::circular);
// Exact adjoint of resample() at the given input shape.
Tensor resample_grad(const Shape& input_shape, const Tensor& upstream, int factor, ResampleMode mode,
                     Padding boundary = Padding::circular);

Tensor merge(const Tensor& a, const Tensor& b, MergeKind kind);

struct MergeGrad {
    Tensor a;
    Tensor b;
};
MergeGrad merge_grad(const Shape& a_shape, const Shape& b_shape, const Tensor& upstream, MergeKind kind);

// Per-channel bias: x[c](t) + bias[c].
Tensor add_bias(const Tensor& x, const Tensor& bias);
// Sum over each channel's plane.
Tensor bias_grad(const Tensor& upstream);

namespace reference {

// Direct-loop serial implementations, kept as the oracle for the
// blocked/OpenMP kernels above and as the baseline in bench/.
Tensor conv(const Tensor& input, const Tensor& filters, Padding padding);
ConvGrad conv_grad(const Tensor& input, const Tensor& filters, const Tensor& upstream, Padding padding);

}  // namespace reference

}  // namespace gpdip
