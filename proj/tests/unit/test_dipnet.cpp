#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "gpdip/dipnet.hpp"
#include "gpdip/error.hpp"
#include "gpdip/kernel.hpp"
#include "helpers.hpp"

using namespace gpdip;
using testing::central_difference;
using testing::random_tensor;
using testing::rel_err;

namespace {

NetworkSpec toy_preset(const std::string& name, int dims) {
    PresetOptions o;
    o.channels = 3;
    o.input_channels = 2;
    o.dims = dims;
    return with_readout(preset(name, o), 1);
}

Shape toy_spatial(const std::string& name, int dims) {
    const std::size_t n = name == "dip_paper_scaled" ? 32 : 8;
    return dims == 1 ? Shape{n} : Shape{n, n};
}

}  // namespace

TEST_CASE("init is deterministic and scaled") {
    PresetOptions o;
    o.channels = 64;
    o.dims = 2;
    const NetworkSpec spec = preset("conv_2", o);
    const ParamSet a = init_params(spec, 9), b = init_params(spec, 9), c = init_params(spec, 10);
    REQUIRE(a.tensors.size() == 2);
    CHECK(a.tensors[0] == b.tensors[0]);
    CHECK_FALSE(a.tensors[0] == c.tensors[0]);
    for (std::size_t t = 0; t < a.tensors.size(); ++t) {
        const Tensor& w = a.tensors[t];
        CHECK(w.size() >= 4096);
        const double fan_in = static_cast<double>(w.shape()[1] * w.shape()[2] * w.shape()[3]);
        const double expected = conv_gain(spec, a.layer[t]) / fan_in;
        CHECK(dot(w, w) / static_cast<double>(w.size()) == doctest::Approx(expected).epsilon(0.1));
    }
    CHECK(init_params(NetworkSpec{}, 1).tensors.empty());

    const NetworkInput in = init_input(spec, Shape{16, 16}, 9);
    CHECK(in.frozen);
    CHECK(in.x.shape() == Shape{64, 16, 16});
    CHECK(in.x == init_input(spec, Shape{16, 16}, 9).x);
}

TEST_CASE("bias parameters") {
    NetworkSpec spec;
    spec.input.channels = 2;
    spec.layers = {ConvLayer{4, 3}, BiasLayer{0.5}, ActLayer{Activation::erf}};
    const ParamSet p = init_params(spec, 1);
    REQUIRE(p.tensors.size() == 2);
    CHECK(p.tensors[1].shape() == Shape{4});
    CHECK(p.count() == 4 * 2 * 3 + 4);
}

TEST_CASE("forward basics") {
    const NetworkSpec spec = toy_preset("unet_small", 2);
    const ParamSet p = init_params(spec, 3);
    const NetworkInput in = init_input(spec, Shape{8, 8}, 3);
    const Tensor y1 = forward(spec, p, in.x, Padding::reflect);
    CHECK(y1 == forward(spec, p, in.x, Padding::reflect));
    CHECK(y1.shape() == Shape{1, 8, 8});
    CHECK(forward(spec, p.zeros_like(), in.x, Padding::reflect) == Tensor(y1.shape()));
    CHECK(output_spatial(toy_preset("ae_2", 1), Shape{16}) == Shape{16});
    CHECK_THROWS_AS(forward(spec, p, Tensor(Shape{5, 8, 8}), Padding::reflect), ShapeError);
    try {
        forward(spec, p, Tensor(Shape{2, 6, 6}), Padding::reflect);
        FAIL("expected a shape error");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("layer") != std::string::npos);
    }
}

TEST_CASE("backward basics") {
    const NetworkSpec spec = toy_preset("conv_2", 1);
    const ParamSet p = init_params(spec, 4);
    const NetworkInput in = init_input(spec, Shape{12}, 4);
    ForwardCache cache;
    const Tensor y = forward(spec, p, in.x, Padding::reflect, &cache);
    const Gradients g = backward(spec, p, cache, Tensor(y.shape()), Padding::reflect);
    CHECK(g.params.squared_norm() == 0.0);
    CHECK(dot(g.input, g.input) == 0.0);
    CHECK_THROWS_AS(backward(spec, p, ForwardCache{}, Tensor(y.shape()), Padding::reflect), ShapeError);
}

TEST_CASE("end-to-end finite differences on every preset") {
    Rng rng(2024);
    for (const std::string name : {"conv_2", "ae_2", "unet_small", "dip_paper_scaled"})
        for (int dims : {1, 2}) {
            if (name == "dip_paper_scaled" && dims == 1) continue;
            CAPTURE(name);
            CAPTURE(dims);
            const NetworkSpec spec = toy_preset(name, dims);
            ParamSet p = init_params(spec, 11);
            const Tensor x = init_input(spec, toy_spatial(name, dims), 11).x;
            ForwardCache cache;
            const Tensor y = forward(spec, p, x, Padding::reflect, &cache);
            const Tensor u = random_tensor(rng, y.shape());
            const Gradients g = backward(spec, p, cache, u, Padding::reflect);
            for (int k = 0; k < 12; ++k) {
                const std::size_t t = rng.uniform_index(p.tensors.size());
                const std::size_t i = rng.uniform_index(p.tensors[t].size());
                auto loss = [&](const Tensor& w) {
                    ParamSet q = p;
                    q.tensors[t] = w;
                    return dot(forward(spec, q, x, Padding::reflect), u);
                };
                CHECK(rel_err(g.params.tensors[t][i], central_difference(loss, p.tensors[t], i)) <= 1e-4);
            }
            for (int k = 0; k < 4; ++k) {
                const std::size_t i = rng.uniform_index(x.size());
                auto loss = [&](const Tensor& z) { return dot(forward(spec, p, z, Padding::reflect), u); };
                CHECK(rel_err(g.input[i], central_difference(loss, x, i)) <= 1e-4);
            }
        }
}

TEST_CASE("gaussian-filtered input draws") {
    InputDescriptor d;
    d.channels = 1;
    d.dims = 1;
    d.kernel = InputKernel::gaussian;
    d.filter_std = 2.0;
    Rng rng(8);
    const StationaryKernel k = input_kernel(d, 4);
    double c0 = 0.0, c3 = 0.0;
    const int reps = 400;
    const std::size_t n = 256;
    for (int r = 0; r < reps; ++r) {
        const Tensor x = draw_input(d, Shape{n}, rng);
        for (std::size_t t = 0; t < n; ++t) {
            c0 += x[t] * x[t];
            c3 += x[t] * x[(t + 3) % n];
        }
    }
    c0 /= reps * n;
    c3 /= reps * n;
    CHECK(c0 == doctest::Approx(k.variance()).epsilon(0.05));
    CHECK(c3 == doctest::Approx(k.at(3)).epsilon(0.08));
}

TEST_CASE("output at a fixed pixel is close to gaussian for wide networks") {
    PresetOptions o;
    o.channels = 256;
    o.dims = 1;
    const NetworkSpec spec = with_readout(preset("conv_2", o), 1);
    std::vector<double> z;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const ParamSet p = init_params(spec, seed);
        const Tensor x = init_input(spec, Shape{8}, seed).x;
        z.push_back(forward(spec, p, x, Padding::circular)[3]);
    }
    // Jarque-Bera statistic; chi-square(2) exceeds 9.21 with probability 0.01.
    const double n = static_cast<double>(z.size());
    double m = 0.0;
    for (double v : z) m += v;
    m /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : z) {
        const double d = v - m;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    const double skew = m3 / std::pow(m2, 1.5);
    const double kurt = m4 / (m2 * m2) - 3.0;
    const double jb = n / 6.0 * (skew * skew + kurt * kurt / 4.0);
    CHECK(jb < 9.21);
}

TEST_CASE("checkpoint round trip") {
    const NetworkSpec spec = toy_preset("unet_small", 2);
    const ParamSet p = init_params(spec, 21);
    const auto path = (std::filesystem::temp_directory_path() / "gpdip_ckpt_test.bin").string();
    save_checkpoint(p, path, 77);
    std::int64_t it = 0;
    const ParamSet q = load_checkpoint(path, &it);
    CHECK(it == 77);
    CHECK(q.seed == 21);
    REQUIRE(q.tensors.size() == p.tensors.size());
    for (std::size_t i = 0; i < p.tensors.size(); ++i) CHECK(q.tensors[i] == p.tensors[i]);
    CHECK(q.layer == p.layer);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
}

TEST_CASE("presets") {
    PresetOptions o;
    o.channels = 4;
    const NetworkSpec c2 = preset("conv_2", o);
    int convs = 0, acts = 0;
    for (const Layer& l : c2.layers) {
        convs += std::holds_alternative<ConvLayer>(l);
        acts += std::holds_alternative<ActLayer>(l);
    }
    CHECK(convs == 2);
    CHECK(acts == 2);
    CHECK(c2.layers.size() == 4);
    CHECK(preset("conv_3", o).layers.size() == 6);
    CHECK(output_spatial(preset("ae_2", o), Shape{32}) == Shape{32});
    CHECK_THROWS_AS(preset("resnet", o), ShapeError);
    const NetworkSpec round = spec_from_json(to_json(preset("unet_small", o)));
    CHECK(to_json(round) == to_json(preset("unet_small", o)));
}
