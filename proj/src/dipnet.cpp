#include "gpdip/dipnet.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <variant>

#include "gpdip/error.hpp"
#include "gpdip/kernel.hpp"

namespace gpdip {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string at_layer(std::size_t i, const std::string& what) { return "layer " + std::to_string(i) + ": " + what; }

void accumulate(Tensor& into, const Tensor& g) {
    if (into.empty())
        into = g;
    else
        into += g;
}

// Circular filtering of one axis of a [C, ...] tensor with symmetric taps.
Tensor filter_axis(const Tensor& x, const std::vector<double>& taps, std::size_t axis) {
    const Shape& s = x.shape();
    const long radius = static_cast<long>(taps.size() / 2);
    const std::size_t n = s[axis];
    std::size_t inner = 1;
    for (std::size_t a = axis + 1; a < s.size(); ++a) inner *= s[a];
    const std::size_t outer = x.size() / (n * inner);
    Tensor out(s);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t t = 0; t < n; ++t)
            for (std::size_t k = 0; k < inner; ++k) {
                double acc = 0.0;
                for (long j = -radius; j <= radius; ++j) {
                    const std::size_t src = pad_index(static_cast<long>(t) + j, n, Padding::circular);
                    acc += taps[static_cast<std::size_t>(j + radius)] * x[(o * n + src) * inner + k];
                }
                out[(o * n + t) * inner + k] = acc;
            }
    return out;
}

}  // namespace

std::size_t ParamSet::count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
}

double ParamSet::squared_norm() const {
    double s = 0.0;
    for (const auto& t : tensors) s += dot(t, t);
    return s;
}

bool ParamSet::all_finite() const {
    for (const auto& t : tensors)
        if (!t.all_finite()) return false;
    return true;
}

ParamSet ParamSet::zeros_like() const {
    ParamSet z;
    z.layer = layer;
    z.seed = seed;
    for (const auto& t : tensors) z.tensors.emplace_back(t.shape());
    return z;
}

Tensor draw_input(const InputDescriptor& input, const Shape& spatial, Rng& rng) {
    if (spatial.size() != static_cast<std::size_t>(input.dims)) throw ShapeError("draw_input: spatial rank does not match input dims");
    Shape shape{static_cast<std::size_t>(input.channels)};
    shape.insert(shape.end(), spatial.begin(), spatial.end());
    Tensor x = gaussian_tensor(rng, shape, input.sigma);
    if (input.kernel == InputKernel::gaussian) {
        const auto taps = gaussian_taps(input.filter_std);
        for (std::size_t axis = 1; axis < shape.size(); ++axis) x = filter_axis(x, taps, axis);
    }
    return x;
}

ParamSet init_params(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    const LayerGeometry geom = layer_geometry(spec);
    ParamSet p;
    p.seed = seed;
    Rng rng(seed, 1);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const int cin = geom.channels_after(static_cast<int>(i) - 1);
        if (const auto* c = std::get_if<ConvLayer>(&spec.layers[i])) {
            Shape s{static_cast<std::size_t>(c->out_channels), static_cast<std::size_t>(cin)};
            std::size_t fan_in = static_cast<std::size_t>(cin);
            for (int a = 0; a < spec.input.dims; ++a) {
                s.push_back(static_cast<std::size_t>(c->width));
                fan_in *= static_cast<std::size_t>(c->width);
            }
            p.tensors.push_back(gaussian_tensor(rng, s, std::sqrt(conv_gain(spec, i) / static_cast<double>(fan_in))));
            p.layer.push_back(i);
        } else if (const auto* b = std::get_if<BiasLayer>(&spec.layers[i])) {
            p.tensors.push_back(gaussian_tensor(rng, Shape{static_cast<std::size_t>(cin)}, b->sigma));
            p.layer.push_back(i);
        }
    }
    return p;
}

NetworkInput init_input(const NetworkSpec& spec, const Shape& spatial, std::uint64_t seed) {
    Rng rng(seed, 2);
    return NetworkInput{draw_input(spec.input, spatial, rng), true, 0.0};
}

Shape output_spatial(const NetworkSpec& spec, const Shape& input_spatial) {
    Shape s = input_spatial;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (const auto* d = std::get_if<DownLayer>(&spec.layers[i])) {
            for (auto& e : s) {
                if (e % static_cast<std::size_t>(d->factor) != 0) throw ShapeError(at_layer(i, "extent not divisible by down factor"));
                e /= static_cast<std::size_t>(d->factor);
            }
        } else if (const auto* u = std::get_if<UpLayer>(&spec.layers[i])) {
            for (auto& e : s) e *= static_cast<std::size_t>(u->factor);
        }
    }
    return s;
}

Tensor forward(const NetworkSpec& spec, const ParamSet& params, const Tensor& input, Padding padding, ForwardCache* cache) {
    if (input.spatial_dims() != static_cast<std::size_t>(spec.input.dims) ||
        input.channels() != static_cast<std::size_t>(spec.input.channels))
        throw ShapeError("forward: input shape " + shape_string(input.shape()) + " does not match the spec input");
    std::vector<Tensor> outputs;
    outputs.reserve(spec.layers.size() + 1);
    outputs.push_back(input);
    std::size_t next_param = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const Tensor& x = outputs.back();
        Tensor y;
        try {
            std::visit(Overloaded{
                           [&](const ConvLayer&) {
                               if (next_param >= params.tensors.size() || params.layer[next_param] != i)
                                   throw ShapeError("missing conv parameters");
                               y = conv(x, params.tensors[next_param++], padding);
                           },
                           [&](const ActLayer& l) { y = activation(x, l.kind); },
                           [&](const DownLayer& l) { y = resample(x, l.factor, l.mode, padding); },
                           [&](const UpLayer& l) { y = resample(x, l.factor, l.mode, padding); },
                           [&](const BiasLayer&) {
                               if (next_param >= params.tensors.size() || params.layer[next_param] != i)
                                   throw ShapeError("missing bias parameters");
                               y = add_bias(x, params.tensors[next_param++]);
                           },
                           [&](const SkipLayer& l) { y = merge(x, outputs[static_cast<std::size_t>(l.source + 1)], l.kind); },
                       },
                       spec.layers[i]);
        } catch (const ShapeError& e) {
            throw ShapeError(at_layer(i, e.what()));
        }
        outputs.push_back(std::move(y));
    }
    if (next_param != params.tensors.size()) throw ShapeError("forward: parameter set has extra tensors");
    Tensor out = outputs.back();
    if (cache) cache->outputs = std::move(outputs);
    return out;
}

Gradients backward(const NetworkSpec& spec, const ParamSet& params, const ForwardCache& cache, const Tensor& output_grad,
                   Padding padding) {
    if (!cache.valid() || cache.outputs.size() != spec.layers.size() + 1) throw ShapeError("backward: missing forward cache");
    if (output_grad.shape() != cache.outputs.back().shape()) throw ShapeError("backward: output gradient shape mismatch");
    const std::size_t n = spec.layers.size();
    std::vector<Tensor> g(n + 1);
    g[n] = output_grad;
    Gradients out{params.zeros_like(), Tensor()};
    std::size_t next_param = params.tensors.size();
    for (std::size_t i = n; i-- > 0;) {
        const Tensor& x = cache.outputs[i];
        const Tensor& up = g[i + 1];
        std::visit(Overloaded{
                       [&](const ConvLayer&) {
                           --next_param;
                           ConvGrad cg = conv_grad(x, params.tensors[next_param], up, padding);
                           out.params.tensors[next_param] = std::move(cg.filters);
                           accumulate(g[i], cg.input);
                       },
                       [&](const ActLayer& l) { accumulate(g[i], activation_grad(x, up, l.kind)); },
                       [&](const DownLayer& l) { accumulate(g[i], resample_grad(x.shape(), up, l.factor, l.mode, padding)); },
                       [&](const UpLayer& l) { accumulate(g[i], resample_grad(x.shape(), up, l.factor, l.mode, padding)); },
                       [&](const BiasLayer&) {
                           --next_param;
                           out.params.tensors[next_param] = bias_grad(up);
                           accumulate(g[i], up);
                       },
                       [&](const SkipLayer& l) {
                           const std::size_t src = static_cast<std::size_t>(l.source + 1);
                           MergeGrad mg = merge_grad(x.shape(), cache.outputs[src].shape(), up, l.kind);
                           accumulate(g[i], mg.a);
                           accumulate(g[src], mg.b);
                       },
                   },
                   spec.layers[i]);
        g[i + 1] = Tensor();
    }
    out.input = std::move(g[0]);
    return out;
}

void save_checkpoint(const ParamSet& params, const std::string& path, std::int64_t iteration) {
    nlohmann::json header;
    header["format"] = "gpdip-params";
    header["version"] = 1;
    header["seed"] = params.seed;
    header["iteration"] = iteration;
    header["layers"] = params.layer;
    nlohmann::json shapes = nlohmann::json::array();
    for (const auto& t : params.tensors) shapes.push_back(t.shape());
    header["shapes"] = shapes;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path + " for writing");
    f << header.dump() << '\n';
    for (const auto& t : params.tensors)
        for (double v : t.data()) {
            std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
            unsigned char b[8];
            for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(bits >> (8 * k));
            f.write(reinterpret_cast<const char*>(b), 8);
        }
    if (!f) throw FormatError("write failed: " + path);
}

ParamSet load_checkpoint(const std::string& path, std::int64_t* iteration) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw FormatError(path + ": missing header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": bad header: " + e.what());
    }
    if (header.value("format", "") != "gpdip-params") throw FormatError(path + ": not a parameter checkpoint");
    ParamSet p;
    p.seed = header.at("seed").get<std::uint64_t>();
    p.layer = header.at("layers").get<std::vector<std::size_t>>();
    for (const auto& s : header.at("shapes")) {
        Tensor t(s.get<Shape>());
        for (double& v : t.data()) {
            unsigned char b[8];
            if (!f.read(reinterpret_cast<char*>(b), 8)) throw FormatError(path + ": truncated payload");
            std::uint64_t bits = 0;
            for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
            v = std::bit_cast<double>(bits);
        }
        p.tensors.push_back(std::move(t));
    }
    if (p.layer.size() != p.tensors.size()) throw FormatError(path + ": layer list does not match shapes");
    if (iteration) *iteration = header.value("iteration", std::int64_t{0});
    return p;
}

}  // namespace gpdip
