#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "gpdip/ops.hpp"

namespace gpdip {

struct ConvLayer {
    int out_channels = 0;
    int width = 3;
    // Variance gain of the i.i.d. weights, N(0, gain / fan_in). Zero selects
    // the default: 2 when the conv feeds a relu, 1 otherwise.
    double gain = 0.0;
};

struct ActLayer {
    Activation kind = Activation::relu;
};

struct DownLayer {
    int factor = 2;
    ResampleMode mode = ResampleMode::decimate;
};

struct UpLayer {
    int factor = 2;
    ResampleMode mode = ResampleMode::bilinear;
};

struct BiasLayer {
    double sigma = 0.0;
};

// Merges the running tensor with the output of layer `source` (-1 is the
// network input).
struct SkipLayer {
    int source = -1;
    MergeKind kind = MergeKind::concat;
};

using Layer = std::variant<ConvLayer, ActLayer, DownLayer, UpLayer, BiasLayer, SkipLayer>;

enum class InputKernel { white, gaussian };

struct InputDescriptor {
    int channels = 1;
    int dims = 1;
    InputKernel kernel = InputKernel::white;
    double sigma = 1.0;       // std of the white noise before filtering
    double filter_std = 0.0;  // Gaussian filter std (gaussian kernel only)
};

struct NetworkSpec {
    InputDescriptor input;
    std::vector<Layer> layers;

    // Throws ShapeError on inconsistent layer lists.
    void validate() const;
};

// Per-layer bookkeeping derived from a spec: channel count and cumulative
// resampling scale of every layer's output. Index -1 of the layer list is the
// network input, stored at position 0.
struct LayerGeometry {
    std::vector<int> channels;
    std::vector<double> scale;  // spatial downsampling factor relative to the input

    int channels_after(int layer) const { return channels[static_cast<std::size_t>(layer + 1)]; }
    double scale_after(int layer) const { return scale[static_cast<std::size_t>(layer + 1)]; }
};

LayerGeometry layer_geometry(const NetworkSpec& spec);

// Resolved weight gain for conv layer `index`.
double conv_gain(const NetworkSpec& spec, std::size_t index);

// Product of down factors over product of up factors.
double net_downsampling(const NetworkSpec& spec);

// Appends a width-1 linear conv with unit gain producing `channels` outputs.
// The limiting kernel's correlation is unchanged by it.
NetworkSpec with_readout(const NetworkSpec& spec, int channels);

std::string describe(const Layer& layer);

nlohmann::json to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const nlohmann::json& j);
NetworkSpec load_spec(const std::string& path);
void save_spec(const NetworkSpec& spec, const std::string& path);

struct PresetOptions {
    int depth = 2;
    int channels = 64;
    int input_channels = 0;  // 0: same as channels
    int width = 3;
    int dims = 1;
    InputKernel input_kernel = InputKernel::white;
    double input_sigma = 1.0;
    double filter_std = 0.0;
};

// Named architectures: conv_d, ae_d, unet_small, dip_paper_scaled.
// "conv_<d>" / "ae_<d>" override options.depth.
NetworkSpec preset(const std::string& name, PresetOptions options = {});
std::vector<std::string> preset_names();

}  // namespace gpdip
