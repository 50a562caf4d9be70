#include "gpdip/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <numbers>
#include <variant>

#include "gpdip/error.hpp"

namespace gpdip {

StationaryKernel::StationaryKernel(int dims, int half_width, std::vector<double> values)
    : dims_(dims), half_width_(half_width), values_(std::move(values)) {
    if (dims != 1 && dims != 2) throw ShapeError("kernel: dims must be 1 or 2");
    if (half_width < 0) throw ShapeError("kernel: negative half width");
    const std::size_t side = static_cast<std::size_t>(2 * half_width + 1);
    const std::size_t expect = dims == 1 ? side : side * side;
    if (values_.size() != expect) throw ShapeError("kernel: value count does not match the lag grid");
}

StationaryKernel StationaryKernel::from_function(int dims, int half_width, const std::function<double(Lag)>& f) {
    const int side = 2 * half_width + 1;
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(dims == 1 ? side : side * side));
    if (dims == 1) {
        for (int r = -half_width; r <= half_width; ++r) v.push_back(f(Lag{r, 0}));
    } else {
        for (int r0 = -half_width; r0 <= half_width; ++r0)
            for (int r1 = -half_width; r1 <= half_width; ++r1) v.push_back(f(Lag{r0, r1}));
    }
    return StationaryKernel(dims, half_width, std::move(v));
}

bool StationaryKernel::in_support(Lag r) const {
    if (std::abs(r[0]) > half_width_) return false;
    if (dims_ == 1) return r[1] == 0;
    return std::abs(r[1]) <= half_width_;
}

std::size_t StationaryKernel::index(Lag r) const {
    const auto s = static_cast<std::size_t>(side());
    if (dims_ == 1) return static_cast<std::size_t>(r[0] + half_width_);
    return static_cast<std::size_t>(r[0] + half_width_) * s + static_cast<std::size_t>(r[1] + half_width_);
}

Lag StationaryKernel::lag_of(std::size_t i) const {
    const int s = side();
    if (dims_ == 1) return {static_cast<int>(i) - half_width_, 0};
    return {static_cast<int>(i) / s - half_width_, static_cast<int>(i) % s - half_width_};
}

double StationaryKernel::at(Lag r) const {
    if (!in_support(r))
        throw ShapeError("kernel: lag (" + std::to_string(r[0]) + "," + std::to_string(r[1]) + ") outside half width " +
                         std::to_string(half_width_));
    return values_[index(r)];
}

double StationaryKernel::asymmetry() const {
    double m = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i) {
        const Lag r = lag_of(i);
        m = std::max(m, std::abs(values_[i] - at(Lag{-r[0], -r[1]})));
    }
    return m;
}

StationaryKernel crop(const StationaryKernel& k, int half_width) {
    if (half_width > k.half_width()) throw ShapeError("kernel: cannot crop to a larger half width");
    return StationaryKernel::from_function(k.dims(), half_width, [&](Lag r) { return k.at(r); });
}

StationaryKernel white_kernel(double sigma, int dims, int half_width) {
    if (!(sigma > 0.0)) throw ShapeError("white_kernel: sigma must be positive");
    const double var = sigma * sigma;
    return StationaryKernel::from_function(dims, half_width, [&](Lag r) { return r[0] == 0 && r[1] == 0 ? var : 0.0; });
}

std::vector<double> gaussian_taps(double filter_std) {
    if (!(filter_std > 0.0)) throw ShapeError("gaussian_taps: filter std must be positive");
    const int radius = static_cast<int>(std::ceil(3.0 * filter_std));
    std::vector<double> g;
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        g.push_back(std::exp(-0.5 * i * i / (filter_std * filter_std)));
        sum += g.back();
    }
    for (double& v : g) v /= sum;
    return g;
}

StationaryKernel gaussian_filtered_kernel(double sigma_noise, double filter_std, int dims, int half_width) {
    if (!(sigma_noise > 0.0)) throw ShapeError("gaussian_filtered_kernel: sigma must be positive");
    if (!(filter_std > 0.0)) throw ShapeError("gaussian_filtered_kernel: filter std must be positive");
    if (half_width < 6.0 * filter_std)
        throw ShapeError("gaussian_filtered_kernel: half width " + std::to_string(half_width) + " cannot hold 6*s support");
    const auto g = gaussian_taps(filter_std);
    const int radius = static_cast<int>(g.size() / 2);
    auto autocorr = [&](int r) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i) {
            const int j = i + r;
            if (j < -radius || j > radius) continue;
            s += g[static_cast<std::size_t>(i + radius)] * g[static_cast<std::size_t>(j + radius)];
        }
        return s;
    };
    const double var = sigma_noise * sigma_noise;
    return StationaryKernel::from_function(dims, half_width, [&](Lag r) {
        return dims == 1 ? var * autocorr(r[0]) : var * autocorr(r[0]) * autocorr(r[1]);
    });
}

StationaryKernel transfer_conv(const StationaryKernel& k, double gain) {
    if (!(gain > 0.0)) throw ShapeError("transfer_conv: gain must be positive");
    std::vector<double> v = k.values();
    for (double& x : v) x *= gain;
    return StationaryKernel(k.dims(), k.half_width(), std::move(v));
}

double transfer_rho(double rho, Activation kind) {
    rho = std::clamp(rho, -1.0, 1.0);
    if (kind == Activation::erf) return 2.0 / std::numbers::pi * std::asin(rho);
    const double t = std::acos(rho);
    return (std::sin(t) + (std::numbers::pi - t) * std::cos(t)) / std::numbers::pi;
}

StationaryKernel transfer_nonlinearity(const StationaryKernel& k, Activation kind) {
    const double k0 = k.variance();
    if (!std::isfinite(k0) || !(k0 > 0.0)) throw NumericalError("transfer_nonlinearity: K(0) must be finite and positive");
    std::vector<double> v = k.values();
    for (double& x : v) {
        if (!std::isfinite(x)) throw NumericalError("transfer_nonlinearity: non-finite kernel value");
        const double rho_out = transfer_rho(x / k0, kind);
        x = kind == Activation::erf ? rho_out : 0.5 * k0 * rho_out;
    }
    // K'(0) is exact by construction: 1 for erf, K(0)/2 for relu.
    v[k.index(Lag{0, 0})] = kind == Activation::erf ? 1.0 : 0.5 * k0;
    return StationaryKernel(k.dims(), k.half_width(), std::move(v));
}

StationaryKernel transfer_bias(const StationaryKernel& k, double sigma_b) {
    if (sigma_b < 0.0) throw ShapeError("transfer_bias: sigma_b must be non-negative");
    std::vector<double> v = k.values();
    for (double& x : v) x += sigma_b * sigma_b;
    return StationaryKernel(k.dims(), k.half_width(), std::move(v));
}

namespace {

// Keys cubic convolution weight, a = -1/2 (Catmull-Rom).
double cubic_weight(double x) {
    constexpr double a = -0.5;
    x = std::abs(x);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

struct Stencil {
    int base = 0;
    std::array<double, 4> w{};  // weights for base-1 .. base+2
};

Stencil stencil(int r, int factor) {
    const double u = static_cast<double>(r) / factor;
    Stencil s;
    s.base = static_cast<int>(std::floor(u));
    const double t = u - s.base;
    for (int m = -1; m <= 2; ++m) s.w[static_cast<std::size_t>(m + 1)] = cubic_weight(t - m);
    return s;
}

}  // namespace

StationaryKernel transfer_resample(const StationaryKernel& k, int factor, ResampleMode mode) {
    if (factor < 2) throw ShapeError("transfer_resample: factor must be >= 2");
    const int L = k.half_width();
    const int dims = k.dims();
    switch (mode) {
        case ResampleMode::decimate: {
            const int out_l = L / factor;
            if (out_l < 1) throw ShapeError("transfer_resample: insufficient grid support for decimation");
            return StationaryKernel::from_function(dims, out_l, [&](Lag r) { return k.at(Lag{factor * r[0], factor * r[1]}); });
        }
        case ResampleMode::avgpool: {
            // Box filter of width tau correlated with itself: triangular weights.
            const int out_l = (L - factor + 1) / factor;
            if (out_l < 1) throw ShapeError("transfer_resample: insufficient grid support for average pooling");
            std::vector<double> tri;
            for (int m = -(factor - 1); m <= factor - 1; ++m)
                tri.push_back(static_cast<double>(factor - std::abs(m)) / (static_cast<double>(factor) * factor));
            auto filtered = [&](Lag r) {
                double s = 0.0;
                for (int m0 = -(factor - 1); m0 <= factor - 1; ++m0) {
                    const double w0 = tri[static_cast<std::size_t>(m0 + factor - 1)];
                    if (dims == 1) {
                        s += w0 * k.at(Lag{r[0] + m0, 0});
                        continue;
                    }
                    for (int m1 = -(factor - 1); m1 <= factor - 1; ++m1)
                        s += w0 * tri[static_cast<std::size_t>(m1 + factor - 1)] * k.at(Lag{r[0] + m0, r[1] + m1});
                }
                return s;
            };
            return StationaryKernel::from_function(dims, out_l, [&](Lag r) { return filtered(Lag{factor * r[0], factor * r[1]}); });
        }
        case ResampleMode::nearest:
        case ResampleMode::bilinear: {
            if (L < 2) throw ShapeError("transfer_resample: insufficient grid support for upsampling");
            const int out_l = factor * (L - 1);
            return StationaryKernel::from_function(dims, out_l, [&](Lag r) {
                const Stencil s0 = stencil(r[0], factor);
                if (dims == 1) {
                    double v = 0.0;
                    for (int m = 0; m < 4; ++m)
                        if (s0.w[static_cast<std::size_t>(m)] != 0.0) v += s0.w[static_cast<std::size_t>(m)] * k.at(s0.base - 1 + m);
                    return v;
                }
                const Stencil s1 = stencil(r[1], factor);
                double v = 0.0;
                for (int m0 = 0; m0 < 4; ++m0) {
                    const double w0 = s0.w[static_cast<std::size_t>(m0)];
                    if (w0 == 0.0) continue;
                    for (int m1 = 0; m1 < 4; ++m1) {
                        const double w1 = s1.w[static_cast<std::size_t>(m1)];
                        if (w1 == 0.0) continue;
                        v += w0 * w1 * k.at(Lag{s0.base - 1 + m0, s1.base - 1 + m1});
                    }
                }
                return v;
            });
        }
    }
    throw ShapeError("transfer_resample: unknown mode");
}

StationaryKernel transfer_skip(const StationaryKernel& ka, const StationaryKernel& kb, MergeKind kind, int channels_a,
                               int channels_b) {
    if (ka.dims() != kb.dims() || ka.half_width() != kb.half_width()) throw ShapeError("transfer_skip: lag grids differ");
    std::vector<double> v(ka.values().size());
    if (kind == MergeKind::add) {
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = ka.values()[i] + kb.values()[i];
    } else {
        if (channels_a < 1 || channels_b < 1) throw ShapeError("transfer_skip: channel counts must be positive");
        const double wa = static_cast<double>(channels_a) / (channels_a + channels_b);
        const double wb = 1.0 - wa;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = wa * ka.values()[i] + wb * kb.values()[i];
    }
    return StationaryKernel(ka.dims(), ka.half_width(), std::move(v));
}

StationaryKernel input_kernel(const InputDescriptor& input, int half_width) {
    if (input.kernel == InputKernel::white) return white_kernel(input.sigma, input.dims, half_width);
    return gaussian_filtered_kernel(input.sigma, input.filter_std, input.dims, std::max(half_width, static_cast<int>(std::ceil(6.0 * input.filter_std))));
}

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// Half-width each layer output must carry so that the final kernel is exact
// on [-L, L]. need[i + 1] belongs to layer i; need[0] to the input.
std::vector<int> plan_support(const NetworkSpec& spec, int half_width) {
    const std::size_t n = spec.layers.size();
    std::vector<int> need(n + 1, 0);
    need[n] = half_width;
    for (std::size_t i = n; i-- > 0;) {
        const int out = need[i + 1];
        int in = out;
        std::visit(Overloaded{
                       [&](const DownLayer& l) {
                           in = l.mode == ResampleMode::avgpool ? l.factor * out + l.factor - 1 : l.factor * out;
                       },
                       [&](const UpLayer& l) { in = (out + l.factor - 1) / l.factor + 1; },
                       [&](const SkipLayer& l) {
                           auto& src = need[static_cast<std::size_t>(l.source + 1)];
                           src = std::max(src, out);
                       },
                       [](const auto&) {},
                   },
                   spec.layers[i]);
        need[i] = std::max(need[i], std::max(in, 1));
    }
    return need;
}

}  // namespace

KernelDerivation derive_kernel(const NetworkSpec& spec, int half_width) {
    spec.validate();
    if (half_width < 1) throw ShapeError("derive_kernel: half width must be positive");
    const LayerGeometry geom = layer_geometry(spec);
    const std::vector<int> need = plan_support(spec, half_width);

    KernelDerivation out{input_kernel(spec.input, need[0]), {}};
    out.trace.push_back({-1, "input", false, out.kernel});
    std::vector<StationaryKernel> outputs{out.kernel};  // outputs[i + 1] = kernel after layer i
    StationaryKernel k = out.kernel;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        bool interpolated = false;
        std::visit(Overloaded{
                       [&](const ConvLayer&) { k = transfer_conv(k, conv_gain(spec, i)); },
                       [&](const ActLayer& l) { k = transfer_nonlinearity(k, l.kind); },
                       [&](const DownLayer& l) { k = transfer_resample(k, l.factor, l.mode); },
                       [&](const UpLayer& l) {
                           k = transfer_resample(k, l.factor, l.mode);
                           interpolated = true;
                       },
                       [&](const BiasLayer& l) { k = transfer_bias(k, l.sigma); },
                       [&](const SkipLayer& l) {
                           const StationaryKernel& src = outputs[static_cast<std::size_t>(l.source + 1)];
                           const int common = std::min(k.half_width(), src.half_width());
                           k = transfer_skip(crop(k, common), crop(src, common), l.kind,
                                             geom.channels_after(static_cast<int>(i) - 1), geom.channels_after(l.source));
                       },
                   },
                   spec.layers[i]);
        if (k.half_width() < need[i + 1]) throw ShapeError("derive_kernel: insufficient grid support at layer " + std::to_string(i));
        outputs.push_back(k);
        out.trace.push_back({static_cast<int>(i), describe(spec.layers[i]), interpolated, k});
    }
    out.kernel = crop(k, half_width);
    return out;
}

Eigen::MatrixXd to_gram(const StationaryKernel& k, const std::vector<Point>& points) {
    const auto n = static_cast<Eigen::Index>(points.size());
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) {
            const Point& a = points[static_cast<std::size_t>(i)];
            const Point& b = points[static_cast<std::size_t>(j)];
            const double v = k.at(Lag{a[0] - b[0], k.dims() == 1 ? 0 : a[1] - b[1]});
            m(i, j) = v;
            m(j, i) = v;
        }
    return m;
}

Eigen::MatrixXd cross_gram(const StationaryKernel& k, const std::vector<Point>& a, const std::vector<Point>& b) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                k.at(Lag{a[i][0] - b[j][0], k.dims() == 1 ? 0 : a[i][1] - b[j][1]});
    return m;
}

std::string kernel_to_text(const StationaryKernel& k) {
    std::string out = "gpdip-kernel 1\n";
    char buf[128];
    std::snprintf(buf, sizeof buf, "dims %d\nhalf_width %d\nvariance %.17g\n", k.dims(), k.half_width(), k.variance());
    out += buf;
    for (std::size_t i = 0; i < k.values().size(); ++i) {
        const Lag r = k.lag_of(i);
        if (k.dims() == 1)
            std::snprintf(buf, sizeof buf, "%d %.17g\n", r[0], k.values()[i]);
        else
            std::snprintf(buf, sizeof buf, "%d %d %.17g\n", r[0], r[1], k.values()[i]);
        out += buf;
    }
    return out;
}

StationaryKernel kernel_from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    auto next = [&]() {
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line[0] != '#') return true;
        }
        return false;
    };
    auto fail = [&](const std::string& what) -> FormatError {
        return FormatError("kernel file line " + std::to_string(line_no) + ": " + what);
    };
    if (!next() || line.rfind("gpdip-kernel 1", 0) != 0) throw fail("missing 'gpdip-kernel 1' header");
    int dims = 0, half_width = -1;
    auto keyed = [&](const char* key) {
        if (!next()) throw fail(std::string("missing ") + key);
        std::istringstream ls(line);
        std::string k;
        double v = 0.0;
        if (!(ls >> k >> v) || k != key) throw fail(std::string("expected '") + key + " <value>'");
        return v;
    };
    dims = static_cast<int>(keyed("dims"));
    half_width = static_cast<int>(keyed("half_width"));
    keyed("variance");
    if (dims != 1 && dims != 2) throw fail("dims must be 1 or 2");
    if (half_width < 0) throw fail("negative half width");
    const std::size_t side = static_cast<std::size_t>(2 * half_width + 1);
    const std::size_t count = dims == 1 ? side : side * side;
    std::vector<double> values(count, 0.0);
    std::vector<char> seen(count, 0);
    StationaryKernel shape_only(dims, half_width, std::vector<double>(count, 0.0));
    std::size_t read = 0;
    while (next()) {
        std::istringstream ls(line);
        Lag r{0, 0};
        double v = 0.0;
        bool ok = static_cast<bool>(ls >> r[0]);
        if (ok && dims == 2) ok = static_cast<bool>(ls >> r[1]);
        if (ok) ok = static_cast<bool>(ls >> v);
        if (!ok) throw fail("malformed lag line");
        if (!shape_only.in_support(r)) throw fail("lag outside the declared half width");
        const std::size_t idx = shape_only.index(r);
        if (seen[idx]) throw fail("duplicate lag");
        seen[idx] = 1;
        values[idx] = v;
        ++read;
    }
    if (read != count) throw FormatError("kernel file: expected " + std::to_string(count) + " lags, found " + std::to_string(read));
    return StationaryKernel(dims, half_width, std::move(values));
}

void write_kernel(const StationaryKernel& k, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw FormatError("cannot open " + path + " for writing");
    f << kernel_to_text(k);
    if (!f) throw FormatError("write failed: " + path);
}

StationaryKernel read_kernel(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FormatError("cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return kernel_from_text(ss.str());
}

nlohmann::json kernel_to_json(const StationaryKernel& k) {
    return {{"dims", k.dims()}, {"half_width", k.half_width()}, {"variance", k.variance()}, {"values", k.values()}};
}

nlohmann::json derivation_to_json(const KernelDerivation& d) {
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& e : d.trace)
        trace.push_back({{"layer", e.layer},
                         {"op", e.op},
                         {"interpolated", e.interpolated},
                         {"half_width", e.kernel.half_width()},
                         {"variance", e.kernel.variance()}});
    return {{"kernel", kernel_to_json(d.kernel)}, {"trace", trace}};
}

}  // namespace gpdip
