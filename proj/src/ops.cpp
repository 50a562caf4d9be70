#include "gpdip/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Core>

#include "gpdip/error.hpp"

namespace gpdip {

std::string to_string(Padding p) { return p == Padding::circular ? "circular" : "reflect"; }
std::string to_string(Activation a) { return a == Activation::erf ? "erf" : "relu"; }
std::string to_string(MergeKind k) { return k == MergeKind::add ? "add" : "concat"; }
std::string to_string(ResampleMode m) {
    switch (m) {
        case ResampleMode::decimate: return "decimate";
        case ResampleMode::avgpool: return "avgpool";
        case ResampleMode::nearest: return "nearest";
        case ResampleMode::bilinear: return "bilinear";
    }
    return "?";
}

Padding parse_padding(const std::string& s) {
    if (s == "circular") return Padding::circular;
    if (s == "reflect") return Padding::reflect;
    throw ShapeError("unknown padding '" + s + "'");
}
Activation parse_activation(const std::string& s) {
    if (s == "erf") return Activation::erf;
    if (s == "relu") return Activation::relu;
    throw ShapeError("unknown activation '" + s + "'");
}
ResampleMode parse_resample_mode(const std::string& s) {
    if (s == "decimate") return ResampleMode::decimate;
    if (s == "avgpool") return ResampleMode::avgpool;
    if (s == "nearest") return ResampleMode::nearest;
    if (s == "bilinear") return ResampleMode::bilinear;
    throw ShapeError("unknown resample mode '" + s + "'");
}
MergeKind parse_merge_kind(const std::string& s) {
    if (s == "add") return MergeKind::add;
    if (s == "concat") return MergeKind::concat;
    throw ShapeError("unknown merge kind '" + s + "'");
}

std::size_t pad_index(long i, std::size_t n, Padding padding) {
    const long len = static_cast<long>(n);
    if (padding == Padding::circular) {
        long m = i % len;
        return static_cast<std::size_t>(m < 0 ? m + len : m);
    }
    if (len == 1) return 0;
    const long period = 2 * (len - 1);
    long m = i % period;
    if (m < 0) m += period;
    return static_cast<std::size_t>(m < len ? m : period - m);
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Fixed column-block width for the GEMM partition. Independent of the thread
// count, so every output element sees the same reduction order on any machine.
constexpr long kColBlock = 512;

// y[:, j0:j1] = a * b[:, j0:j1] over fixed column blocks of b.
template <class A, class B, class Y>
void blocked_gemm(const A& a, const B& b, Y& y) {
    const long cols = b.cols();
    const long blocks = (cols + kColBlock - 1) / kColBlock;
#pragma omp parallel for schedule(static)
    for (long blk = 0; blk < blocks; ++blk) {
        const long c0 = blk * kColBlock;
        const long cb = std::min(kColBlock, cols - c0);
        y.middleCols(c0, cb).noalias() = a * b.middleCols(c0, cb);
    }
}

struct ConvGeometry {
    std::size_t cin = 0, cout = 0, height = 1, width = 0;
    std::size_t dy = 1, dx = 0;
    std::size_t taps() const { return dy * dx; }
    std::size_t n() const { return height * width; }
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& filters) {
    const auto& is = input.shape();
    const auto& fs = filters.shape();
    if (is.size() != 2 && is.size() != 3) throw ShapeError("conv: input must be [C,W] or [C,H,W], got " + shape_string(is));
    if (fs.size() != is.size() + 1) throw ShapeError("conv: filter rank does not match input " + shape_string(fs));
    if (fs[1] != is[0])
        throw ShapeError("conv: filter expects " + std::to_string(fs[1]) + " input channels, input has " + std::to_string(is[0]));
    ConvGeometry g;
    g.cout = fs[0];
    g.cin = fs[1];
    if (is.size() == 2) {
        g.width = is[1];
        g.dx = fs[2];
    } else {
        g.height = is[1];
        g.width = is[2];
        g.dy = fs[2];
        g.dx = fs[3];
        if (g.dy != g.dx) throw ShapeError("conv: 2D filters must be square");
    }
    if (g.dx % 2 == 0) throw ShapeError("conv: filter width must be odd, got " + std::to_string(g.dx));
    return g;
}

// map[a * n + t] = padded source index for tap a at output position t.
std::vector<std::size_t> tap_map(std::size_t taps, std::size_t n, Padding padding) {
    std::vector<std::size_t> map(taps * n);
    const long half = static_cast<long>(taps / 2);
    for (std::size_t a = 0; a < taps; ++a)
        for (std::size_t t = 0; t < n; ++t)
            map[a * n + t] = pad_index(static_cast<long>(t) + static_cast<long>(a) - half, n, padding);
    return map;
}

// Output positions x whose tap b reads x + b - d/2 without padding.
struct Span {
    std::size_t lo, hi;
};
Span interior(std::size_t b, std::size_t d, std::size_t width) {
    const std::size_t half = d / 2;
    const std::size_t lo = b < half ? half - b : 0;
    const std::size_t shift_hi = b > half ? b - half : 0;
    const std::size_t hi = width > shift_hi ? width - shift_hi : 0;
    return lo < hi ? Span{lo, hi} : Span{0, 0};
}

std::vector<double> im2col(const Tensor& input, const ConvGeometry& g, Padding padding) {
    const std::size_t n = g.n();
    const auto ymap = tap_map(g.dy, g.height, padding);
    const auto xmap = tap_map(g.dx, g.width, padding);
    std::vector<double> cols(g.cin * g.taps() * n);
    const double* in = input.data().data();
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(g.cin); ++i) {
        const double* src = in + i * n;
        for (std::size_t a = 0; a < g.dy; ++a)
            for (std::size_t b = 0; b < g.dx; ++b) {
                double* dst = cols.data() + ((i * g.dy + a) * g.dx + b) * n;
                const std::size_t* xm = xmap.data() + b * g.width;
                const Span in = interior(b, g.dx, g.width);
                for (std::size_t y = 0; y < g.height; ++y) {
                    const double* row = src + ymap[a * g.height + y] * g.width;
                    double* out = dst + y * g.width;
                    for (std::size_t x = 0; x < in.lo; ++x) out[x] = row[xm[x]];
                    const double* shifted = row + in.lo + b - g.dx / 2;
                    for (std::size_t x = in.lo; x < in.hi; ++x) out[x] = shifted[x - in.lo];
                    for (std::size_t x = in.hi; x < g.width; ++x) out[x] = row[xm[x]];
                }
            }
    }
    return cols;
}

void col2im(const std::vector<double>& cols, const ConvGeometry& g, Padding padding, Tensor& grad) {
    const std::size_t n = g.n();
    const auto ymap = tap_map(g.dy, g.height, padding);
    const auto xmap = tap_map(g.dx, g.width, padding);
    double* out = grad.data().data();
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(g.cin); ++i) {
        double* dst = out + i * n;
        for (std::size_t a = 0; a < g.dy; ++a)
            for (std::size_t b = 0; b < g.dx; ++b) {
                const double* src = cols.data() + ((i * g.dy + a) * g.dx + b) * n;
                const std::size_t* xm = xmap.data() + b * g.width;
                const Span in = interior(b, g.dx, g.width);
                for (std::size_t y = 0; y < g.height; ++y) {
                    double* row = dst + ymap[a * g.height + y] * g.width;
                    const double* col = src + y * g.width;
                    for (std::size_t x = 0; x < in.lo; ++x) row[xm[x]] += col[x];
                    double* shifted = row + in.lo + b - g.dx / 2;
                    for (std::size_t x = in.lo; x < in.hi; ++x) shifted[x - in.lo] += col[x];
                    for (std::size_t x = in.hi; x < g.width; ++x) row[xm[x]] += col[x];
                }
            }
    }
}

Shape output_shape(const Tensor& input, std::size_t cout) {
    Shape s = input.shape();
    s[0] = cout;
    return s;
}

}  // namespace

Tensor conv(const Tensor& input, const Tensor& filters, Padding padding) {
    const ConvGeometry g = conv_geometry(input, filters);
    const auto cols = im2col(input, g, padding);
    const long k = static_cast<long>(g.cin * g.taps());
    const long n = static_cast<long>(g.n());
    const long m = static_cast<long>(g.cout);
    Tensor out(output_shape(input, g.cout));
    Eigen::Map<const RowMat> w(filters.data().data(), m, k);
    Eigen::Map<const RowMat> c(cols.data(), k, n);
    Eigen::Map<RowMat> y(out.data().data(), m, n);
    blocked_gemm(w, c, y);
    return out;
}

ConvGrad conv_grad(const Tensor& input, const Tensor& filters, const Tensor& upstream, Padding padding) {
    const ConvGeometry g = conv_geometry(input, filters);
    if (upstream.shape() != output_shape(input, g.cout))
        throw ShapeError("conv_grad: upstream shape " + shape_string(upstream.shape()) + " does not match conv output");
    const auto cols = im2col(input, g, padding);
    const long k = static_cast<long>(g.cin * g.taps());
    const long n = static_cast<long>(g.n());
    const long m = static_cast<long>(g.cout);
    Eigen::Map<const RowMat> w(filters.data().data(), m, k);
    Eigen::Map<const RowMat> c(cols.data(), k, n);
    Eigen::Map<const RowMat> dy(upstream.data().data(), m, n);

    ConvGrad grad{Tensor(input.shape()), Tensor(filters.shape())};
    Eigen::Map<RowMat> dw(grad.filters.data().data(), m, k);
    const auto ct = c.transpose();
    blocked_gemm(dy, ct, dw);

    std::vector<double> dcols(static_cast<std::size_t>(k * n));
    Eigen::Map<RowMat> dc(dcols.data(), k, n);
    const auto wt = w.transpose();
    blocked_gemm(wt, dy, dc);
    col2im(dcols, g, padding, grad.input);
    return grad;
}

Tensor activation(const Tensor& x, Activation kind) {
    Tensor out(x.shape());
    auto src = x.data();
    auto dst = out.data();
    if (kind == Activation::relu) {
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
    } else {
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::erf(src[i]);
    }
    return out;
}

Tensor activation_grad(const Tensor& x, const Tensor& upstream, Activation kind) {
    if (x.shape() != upstream.shape()) throw ShapeError("activation_grad: shape mismatch");
    Tensor out(x.shape());
    auto src = x.data();
    auto up = upstream.data();
    auto dst = out.data();
    if (kind == Activation::relu) {
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0.0 ? up[i] : 0.0;
    } else {
        const double scale = 2.0 / std::sqrt(std::numbers::pi);
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] = up[i] * scale * std::exp(-src[i] * src[i]);
    }
    return out;
}

namespace {

// Sparse linear map along one axis: out[o] = sum_k weight[o][k] * in[index[o][k]].
struct AxisMap {
    std::size_t in_len = 0, out_len = 0, arity = 0;
    std::vector<std::size_t> index;
    std::vector<double> weight;
};

AxisMap axis_map(std::size_t in_len, int factor, ResampleMode mode, Padding boundary) {
    const auto tau = static_cast<std::size_t>(factor);
    AxisMap m;
    m.in_len = in_len;
    switch (mode) {
        case ResampleMode::decimate:
            m.out_len = in_len / tau;
            m.arity = 1;
            for (std::size_t o = 0; o < m.out_len; ++o) {
                m.index.push_back(o * tau);
                m.weight.push_back(1.0);
            }
            break;
        case ResampleMode::avgpool:
            m.out_len = in_len / tau;
            m.arity = tau;
            for (std::size_t o = 0; o < m.out_len; ++o)
                for (std::size_t k = 0; k < tau; ++k) {
                    m.index.push_back(o * tau + k);
                    m.weight.push_back(1.0 / static_cast<double>(tau));
                }
            break;
        case ResampleMode::nearest:
            m.out_len = in_len * tau;
            m.arity = 1;
            for (std::size_t o = 0; o < m.out_len; ++o) {
                m.index.push_back(o / tau);
                m.weight.push_back(1.0);
            }
            break;
        case ResampleMode::bilinear:
            // Half-pixel aligned sample centres: src = (o + 0.5) / tau - 0.5.
            m.out_len = in_len * tau;
            m.arity = 2;
            for (std::size_t o = 0; o < m.out_len; ++o) {
                const double src = (static_cast<double>(o) + 0.5) / static_cast<double>(tau) - 0.5;
                const double fl = std::floor(src);
                const double frac = src - fl;
                const long i0 = static_cast<long>(fl);
                if (boundary == Padding::circular) {
                    m.index.push_back(pad_index(i0, in_len, Padding::circular));
                    m.index.push_back(pad_index(i0 + 1, in_len, Padding::circular));
                } else {
                    const long last = static_cast<long>(in_len) - 1;
                    m.index.push_back(static_cast<std::size_t>(std::clamp(i0, 0L, last)));
                    m.index.push_back(static_cast<std::size_t>(std::clamp(i0 + 1, 0L, last)));
                }
                m.weight.push_back(1.0 - frac);
                m.weight.push_back(frac);
            }
            break;
    }
    return m;
}

void check_resample(const Shape& shape, int factor, ResampleMode mode) {
    if (shape.size() != 2 && shape.size() != 3) throw ShapeError("resample: expected [C,W] or [C,H,W], got " + shape_string(shape));
    if (factor < 1) throw ShapeError("resample: factor must be positive");
    if (is_downsampling(mode))
        for (std::size_t d = 1; d < shape.size(); ++d)
            if (shape[d] % static_cast<std::size_t>(factor) != 0)
                throw ShapeError("resample: extent " + std::to_string(shape[d]) + " not divisible by factor " +
                                 std::to_string(factor));
}

}  // namespace

Tensor resample(const Tensor& x, int factor, ResampleMode mode, Padding boundary) {
    check_resample(x.shape(), factor, mode);
    const bool two_d = x.rank() == 3;
    const std::size_t h = two_d ? x.shape()[1] : 1;
    const std::size_t w = x.shape().back();
    const AxisMap mx = axis_map(w, factor, mode, boundary);
    const AxisMap my = two_d ? axis_map(h, factor, mode, boundary) : AxisMap{1, 1, 1, {0}, {1.0}};
    Shape out_shape = x.shape();
    out_shape.back() = mx.out_len;
    if (two_d) out_shape[1] = my.out_len;
    Tensor out(out_shape);
    const std::size_t in_plane = h * w;
    const std::size_t out_plane = my.out_len * mx.out_len;
    for (std::size_t c = 0; c < x.channels(); ++c) {
        const double* src = x.data().data() + c * in_plane;
        double* dst = out.data().data() + c * out_plane;
        for (std::size_t oy = 0; oy < my.out_len; ++oy)
            for (std::size_t ox = 0; ox < mx.out_len; ++ox) {
                double acc = 0.0;
                for (std::size_t ky = 0; ky < my.arity; ++ky) {
                    const std::size_t iy = my.index[oy * my.arity + ky];
                    const double wy = my.weight[oy * my.arity + ky];
                    for (std::size_t kx = 0; kx < mx.arity; ++kx)
                        acc += wy * mx.weight[ox * mx.arity + kx] * src[iy * w + mx.index[ox * mx.arity + kx]];
                }
                dst[oy * mx.out_len + ox] = acc;
            }
    }
    return out;
}

Tensor resample_grad(const Shape& input_shape, const Tensor& upstream, int factor, ResampleMode mode, Padding boundary) {
    check_resample(input_shape, factor, mode);
    const bool two_d = input_shape.size() == 3;
    const std::size_t h = two_d ? input_shape[1] : 1;
    const std::size_t w = input_shape.back();
    const AxisMap mx = axis_map(w, factor, mode, boundary);
    const AxisMap my = two_d ? axis_map(h, factor, mode, boundary) : AxisMap{1, 1, 1, {0}, {1.0}};
    Shape expect = input_shape;
    expect.back() = mx.out_len;
    if (two_d) expect[1] = my.out_len;
    if (upstream.shape() != expect) throw ShapeError("resample_grad: upstream shape " + shape_string(upstream.shape()) + " expected " + shape_string(expect));
    Tensor grad(input_shape);
    const std::size_t in_plane = h * w;
    const std::size_t out_plane = my.out_len * mx.out_len;
    for (std::size_t c = 0; c < input_shape[0]; ++c) {
        double* dst = grad.data().data() + c * in_plane;
        const double* src = upstream.data().data() + c * out_plane;
        for (std::size_t oy = 0; oy < my.out_len; ++oy)
            for (std::size_t ox = 0; ox < mx.out_len; ++ox) {
                const double g = src[oy * mx.out_len + ox];
                for (std::size_t ky = 0; ky < my.arity; ++ky) {
                    const std::size_t iy = my.index[oy * my.arity + ky];
                    const double wy = my.weight[oy * my.arity + ky];
                    for (std::size_t kx = 0; kx < mx.arity; ++kx)
                        dst[iy * w + mx.index[ox * mx.arity + kx]] += wy * mx.weight[ox * mx.arity + kx] * g;
                }
            }
    }
    return grad;
}

Tensor merge(const Tensor& a, const Tensor& b, MergeKind kind) {
    if (kind == MergeKind::add) {
        if (a.shape() != b.shape())
            throw ShapeError("merge(add): shapes differ " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
        return a + b;
    }
    if (a.rank() != b.rank() || a.spatial_shape() != b.spatial_shape())
        throw ShapeError("merge(concat): spatial extents differ " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    Shape s = a.shape();
    s[0] = a.channels() + b.channels();
    std::vector<double> data;
    data.reserve(a.size() + b.size());
    data.insert(data.end(), a.storage().begin(), a.storage().end());
    data.insert(data.end(), b.storage().begin(), b.storage().end());
    return Tensor(std::move(s), std::move(data));
}

MergeGrad merge_grad(const Shape& a_shape, const Shape& b_shape, const Tensor& upstream, MergeKind kind) {
    if (kind == MergeKind::add) {
        if (a_shape != b_shape || upstream.shape() != a_shape) throw ShapeError("merge_grad(add): shape mismatch");
        return {upstream, upstream};
    }
    Shape s = a_shape;
    s[0] = a_shape[0] + b_shape[0];
    if (upstream.shape() != s) throw ShapeError("merge_grad(concat): upstream shape mismatch");
    const std::size_t na = shape_size(a_shape);
    const auto& u = upstream.storage();
    return {Tensor(a_shape, std::vector<double>(u.begin(), u.begin() + static_cast<long>(na))),
            Tensor(b_shape, std::vector<double>(u.begin() + static_cast<long>(na), u.end()))};
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (bias.size() != x.channels()) throw ShapeError("add_bias: bias length does not match channel count");
    Tensor out = x;
    for (std::size_t c = 0; c < x.channels(); ++c)
        for (double& v : out.channel(c)) v += bias[c];
    return out;
}

Tensor bias_grad(const Tensor& upstream) {
    Tensor g(Shape{upstream.channels()});
    for (std::size_t c = 0; c < upstream.channels(); ++c) {
        double s = 0.0;
        for (double v : upstream.channel(c)) s += v;
        g[c] = s;
    }
    return g;
}

}  // namespace gpdip
