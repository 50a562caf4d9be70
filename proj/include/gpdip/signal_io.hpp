#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gpdip/rng.hpp"
#include "gpdip/tensor.hpp"

namespace gpdip {

// Images are Tensors of shape [C, H, W] with C in {1, 3} and nominal range
// [0, 1]. Values are clamped only when encoding.
using ImageBuffer = Tensor;

// Reads P2/P5 (grayscale) and P3/P6 (color) with maxval 255 or 65535.
ImageBuffer read_netpbm(const std::string& path);
ImageBuffer decode_netpbm(const std::string& bytes);
// Binary P5/P6 by default; `ascii` selects P2/P3.
void write_netpbm(const ImageBuffer& img, const std::string& path, int maxval = 255, bool ascii = false);
std::string encode_netpbm(const ImageBuffer& img, int maxval = 255, bool ascii = false);

ImageBuffer add_noise(const ImageBuffer& img, double sigma, Rng& rng);

struct Mask {
    Shape spatial;
    std::vector<std::uint8_t> observed;  // 1 = observed, row-major over `spatial`

    std::size_t count_observed() const;
    double fraction_observed() const;
};

Mask full_mask(const Shape& spatial);
// Drops exactly floor(fraction * n) positions chosen uniformly without
// replacement.
Mask random_mask(const Shape& spatial, double fraction_dropped, Rng& rng);
// Zeroes the unobserved positions of every channel.
Tensor apply_mask(const Tensor& x, const Mask& mask);

// Mean squared difference over observed positions (all channels).
double mse(const Tensor& a, const Tensor& b, const Mask* mask = nullptr);
// 10 log10(1 / mse); +infinity when the inputs agree exactly.
double psnr(const Tensor& a, const Tensor& b, const Mask* mask = nullptr);
double psnr_from_mse(double mse);
double mse_from_psnr(double psnr);

struct Signal1D {
    std::vector<double> position;
    std::vector<double> value;
    std::vector<std::uint8_t> observed;  // all ones when the file has two columns
};

Signal1D read_signal_csv(const std::string& path);
Signal1D parse_signal_csv(const std::string& text);
void write_signal_csv(const Signal1D& signal, const std::string& path, bool with_observed = true);
std::string format_signal_csv(const Signal1D& signal, bool with_observed = true);

// Grayscale or RGB conversion helpers for the CLI.
ImageBuffer to_grayscale(const ImageBuffer& img);

}  // namespace gpdip
