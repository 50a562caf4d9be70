#include "gpdip/error.hpp"
#include "gpdip/ops.hpp"

namespace gpdip::reference {

namespace {

struct Dims {
    std::size_t cin, cout, h, w, d, dy;
};

Dims dims_of(const Tensor& input, const Tensor& filters) {
    const auto& is = input.shape();
    const auto& fs = filters.shape();
    if ((is.size() != 2 && is.size() != 3) || fs.size() != is.size() + 1 || fs[1] != is[0])
        throw ShapeError("reference::conv: incompatible input " + shape_string(is) + " and filters " + shape_string(fs));
    const bool two_d = is.size() == 3;
    Dims d{is[0], fs[0], two_d ? is[1] : 1, is.back(), fs.back(), two_d ? fs[2] : 1};
    if (d.d % 2 == 0) throw ShapeError("reference::conv: even filter width");
    return d;
}

}  // namespace

Tensor conv(const Tensor& input, const Tensor& filters, Padding padding) {
    const Dims g = dims_of(input, filters);
    Shape out_shape = input.shape();
    out_shape[0] = g.cout;
    Tensor out(out_shape);
    const long hy = static_cast<long>(g.dy / 2), hx = static_cast<long>(g.d / 2);
    for (std::size_t o = 0; o < g.cout; ++o)
        for (std::size_t y = 0; y < g.h; ++y)
            for (std::size_t x = 0; x < g.w; ++x) {
                double acc = 0.0;
                for (std::size_t i = 0; i < g.cin; ++i)
                    for (std::size_t a = 0; a < g.dy; ++a)
                        for (std::size_t b = 0; b < g.d; ++b) {
                            const std::size_t sy = pad_index(static_cast<long>(y + a) - hy, g.h, padding);
                            const std::size_t sx = pad_index(static_cast<long>(x + b) - hx, g.w, padding);
                            acc += filters[((o * g.cin + i) * g.dy + a) * g.d + b] * input[(i * g.h + sy) * g.w + sx];
                        }
                out[(o * g.h + y) * g.w + x] = acc;
            }
    return out;
}

ConvGrad conv_grad(const Tensor& input, const Tensor& filters, const Tensor& upstream, Padding padding) {
    const Dims g = dims_of(input, filters);
    Shape out_shape = input.shape();
    out_shape[0] = g.cout;
    if (upstream.shape() != out_shape) throw ShapeError("reference::conv_grad: upstream shape mismatch");
    ConvGrad grad{Tensor(input.shape()), Tensor(filters.shape())};
    const long hy = static_cast<long>(g.dy / 2), hx = static_cast<long>(g.d / 2);
    for (std::size_t o = 0; o < g.cout; ++o)
        for (std::size_t y = 0; y < g.h; ++y)
            for (std::size_t x = 0; x < g.w; ++x) {
                const double u = upstream[(o * g.h + y) * g.w + x];
                for (std::size_t i = 0; i < g.cin; ++i)
                    for (std::size_t a = 0; a < g.dy; ++a)
                        for (std::size_t b = 0; b < g.d; ++b) {
                            const std::size_t sy = pad_index(static_cast<long>(y + a) - hy, g.h, padding);
                            const std::size_t sx = pad_index(static_cast<long>(x + b) - hx, g.w, padding);
                            const std::size_t fi = ((o * g.cin + i) * g.dy + a) * g.d + b;
                            const std::size_t xi = (i * g.h + sy) * g.w + sx;
                            grad.filters[fi] += u * input[xi];
                            grad.input[xi] += u * filters[fi];
                        }
            }
    return grad;
}

}  // namespace gpdip::reference
