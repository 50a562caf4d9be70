#include "gpdip/empirics.hpp"

#include <cmath>

#include "gpdip/dipnet.hpp"
#include "gpdip/error.hpp"

namespace gpdip {

Tensor sample_output(const NetworkSpec& spec, Rng& rng, std::size_t length) {
    const NetworkSpec net = with_readout(spec, 1);
    net.validate();
    const ParamSet params = init_params(net, rng.next_u64());
    const Shape spatial(static_cast<std::size_t>(net.input.dims), length);
    const Tensor x = draw_input(net.input, spatial, rng);
    return forward(net, params, x, Padding::circular);
}

namespace {

// Circular second moment of one output, symmetrized over +r and -r.
std::vector<double> circular_moments(const Tensor& z, int dims, int half_width) {
    const StationaryKernel grid(dims, half_width, std::vector<double>(dims == 1 ? 2 * half_width + 1 : (2 * half_width + 1) * (2 * half_width + 1)));
    std::vector<double> m(grid.values().size(), 0.0);
    const std::size_t w = z.shape().back();
    const std::size_t h = dims == 2 ? z.shape()[1] : 1;
    const double inv_n = 1.0 / static_cast<double>(w * h);
    for (std::size_t i = 0; i < m.size(); ++i) {
        const Lag r = grid.lag_of(i);
        double acc = 0.0;
        for (std::size_t y = 0; y < h; ++y) {
            const std::size_t yy = dims == 2 ? pad_index(static_cast<long>(y) + r[0], h, Padding::circular) : 0;
            const long dx = dims == 2 ? r[1] : r[0];
            for (std::size_t x = 0; x < w; ++x) acc += z[y * w + x] * z[yy * w + pad_index(static_cast<long>(x) + dx, w, Padding::circular)];
        }
        m[i] = acc * inv_n;
    }
    std::vector<double> sym(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        const Lag r = grid.lag_of(i);
        sym[i] = 0.5 * (m[i] + m[grid.index(Lag{-r[0], -r[1]})]);
    }
    return sym;
}

}  // namespace

CovarianceEstimate estimate_covariance(const NetworkSpec& spec, std::size_t n_samples, std::size_t length, const Rng& rng,
                                       int half_width) {
    if (n_samples < 100) throw ShapeError("estimate_covariance: need at least 100 samples");
    if (half_width < 1) throw ShapeError("estimate_covariance: half width must be positive");
    spec.validate();
    const Shape out_spatial = output_spatial(with_readout(spec, 1), Shape(static_cast<std::size_t>(spec.input.dims), length));
    if (out_spatial[0] < 4 * static_cast<std::size_t>(half_width))
        throw ShapeError("estimate_covariance: output extent " + std::to_string(out_spatial[0]) + " is below 4 * half width");

    const int dims = spec.input.dims;
    std::vector<std::vector<double>> per_sample(n_samples);
    const long n = static_cast<long>(n_samples);
#pragma omp parallel for schedule(dynamic)
    for (long s = 0; s < n; ++s) {
        Rng local = rng.derive(static_cast<std::uint64_t>(s));
        per_sample[static_cast<std::size_t>(s)] = circular_moments(sample_output(spec, local, length), dims, half_width);
    }

    CovarianceEstimate est;
    est.dims = dims;
    est.half_width = half_width;
    est.n_samples = n_samples;
    const std::size_t m = per_sample[0].size();
    const StationaryKernel grid(dims, half_width, std::vector<double>(m, 0.0));
    const std::size_t zero = grid.index(Lag{0, 0});
    est.values.assign(m, 0.0);
    for (const auto& c : per_sample)
        for (std::size_t i = 0; i < m; ++i) est.values[i] += c[i];
    const double nd = static_cast<double>(n_samples);
    for (double& v : est.values) v /= nd;
    const double k0 = est.values[zero];
    if (!(k0 > 0.0)) throw NumericalError("estimate_covariance: zero output variance");

    est.stderr_k.assign(m, 0.0);
    est.rho.assign(m, 0.0);
    est.stderr_rho.assign(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        est.rho[i] = est.values[i] / k0;
        double var_k = 0.0, var_r = 0.0;
        for (const auto& c : per_sample) {
            const double dk = c[i] - est.values[i];
            const double dr = c[i] - est.rho[i] * c[zero];
            var_k += dk * dk;
            var_r += dr * dr;
        }
        est.stderr_k[i] = std::sqrt(var_k / (nd - 1.0) / nd);
        est.stderr_rho[i] = std::sqrt(var_r / (nd - 1.0) / nd) / k0;
    }
    return est;
}

ComparisonReport compare(const StationaryKernel& analytic, const CovarianceEstimate& empirical, int check_half_width) {
    if (analytic.dims() != empirical.dims) throw ShapeError("compare: kernel dims differ");
    const int l = check_half_width;
    if (l < 0) throw ShapeError("compare: negative check half width");
    if (l > analytic.half_width() || l > empirical.half_width)
        throw ShapeError("compare: check half width " + std::to_string(l) + " exceeds a kernel grid (analytic " +
                         std::to_string(analytic.half_width()) + ", empirical " + std::to_string(empirical.half_width) + ")");
    const StationaryKernel est = empirical.as_kernel();
    ComparisonReport rep;
    rep.check_half_width = l;
    for (std::size_t i = 0; i < est.values().size(); ++i) {
        const Lag r = est.lag_of(i);
        if (std::abs(r[0]) > l || std::abs(r[1]) > l) continue;
        LagComparison row{r, analytic.rho(r), empirical.rho[i], empirical.stderr_rho[i]};
        rep.max_abs_rho_err = std::max(rep.max_abs_rho_err, std::abs(row.rho_hat - row.rho));
        rep.rows.push_back(row);
    }
    return rep;
}

nlohmann::json to_json(const ComparisonReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows)
        rows.push_back({{"lag", r.lag}, {"rho", r.rho}, {"rho_hat", r.rho_hat}, {"stderr", r.stderr_rho}});
    return {{"max_abs_rho_err", report.max_abs_rho_err}, {"check_half_width", report.check_half_width}, {"lags", rows}};
}

}  // namespace gpdip
