#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpdip/gp.hpp"
#include "gpdip/inference.hpp"
#include "gpdip/kernel.hpp"

namespace gpdip {

// A corrupted observation of a clean image: noisy target with a full mask for
// denoising, clean target with a random mask for inpainting.
struct Instance {
    Task task = Task::denoise;
    Tensor clean;
    Tensor target;
    Mask mask;
    double noise_sigma = 0.0;
};

// Noise and mask draws use Rng(seed, 5).
Instance make_instance(Task task, const Tensor& clean, double noise_sigma, double drop_fraction, std::uint64_t seed);

// Image network: `preset` at `channels` wide (input channels min(channels, 32))
// with a linear readout to `out_channels`.
NetworkSpec image_network(const std::string& preset_name, int channels, int out_channels, int dims = 2);

struct SchemeResult {
    Scheme scheme = Scheme::sgd;
    std::uint64_t seed = 0;
    double psnr_final = 0.0;  // final estimate (ema, posterior mean or last iterate)
    double psnr_best = 0.0;   // oracle early stopping over the estimate
    int best_iteration = 0;
    double seconds = 0.0;
    RunResult run;
};

// Reported PSNR: oracle early stopping for the SGD family, the final
// posterior mean for sgld.
double reported_psnr(const SchemeResult& r);

SchemeResult run_scheme(const Instance& inst, const NetworkSpec& spec, const InferenceConfig& config);

struct GpReconstruction {
    Tensor mean;
    Tensor variance;
    double psnr = 0.0;
    double jitter = 0.0;
};

// Per-channel GP regression from the observed pixels to every pixel. The
// observed mean is removed first and the kernel is rescaled so that K(0)
// equals the variance of the centered observations.
GpReconstruction gp_reconstruct(const StationaryKernel& kernel, const Instance& inst, double sigma_n);

// Limiting kernel of `spec` on a grid wide enough for every pixel pair.
StationaryKernel image_kernel(const NetworkSpec& spec, const Shape& spatial);

struct SuiteEntry {
    std::string image;
    Scheme scheme = Scheme::sgd;
    std::uint64_t seed = 0;
    double psnr = 0.0;  // reported_psnr
};

struct SuiteTable {
    std::vector<std::string> images;
    std::vector<Scheme> schemes;
    std::vector<SuiteEntry> entries;
    double mean(Scheme s, const std::string& image) const;
    double stddev(Scheme s, const std::string& image) const;
    // One row per scheme, one "mean +- std" column per image.
    std::string to_text() const;
    std::string to_csv() const;
};

struct ChannelPoint {
    int channels = 0;
    std::vector<double> psnr;  // one per seed
    double median() const;
};

struct ChannelSweep {
    std::vector<ChannelPoint> points;
    double gp_psnr = 0.0;
    std::string to_csv() const;
};

// Variance of the observed target pixels about their per-channel means,
// averaged over channels.
double observed_variance(const Instance& inst);

// Sets the gain of the final (readout) conv so the network's prior output
// variance equals observed_variance(inst), the amplitude gp_reconstruct gives
// its kernel.
NetworkSpec matched_readout(NetworkSpec spec, const Instance& inst);

// Base config of the channel sweep: plain sgd run to interpolation. `lr` is
// the step at 32 channels; sweep_channels scales it by 32 / channels.
InferenceConfig sweep_config();

// DIP at each channel count (final iterate of plain gradient descent, readout
// matched as above) against a GP with the limiting kernel of the same
// architecture.
ChannelSweep sweep_channels(const Instance& inst, const std::string& preset_name, const std::vector<int>& channels,
                            const std::vector<std::uint64_t>& seeds, const InferenceConfig& config, double gp_sigma_n);

}  // namespace gpdip
