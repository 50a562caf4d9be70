#include "gpdip/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>

#include "gpdip/error.hpp"

namespace gpdip {

double RbfKernel::operator()(Lag r) const {
    const double d2 = static_cast<double>(r[0]) * r[0] + static_cast<double>(r[1]) * r[1];
    return variance * std::exp(-d2 / (2.0 * lengthscale * lengthscale));
}

StationaryKernel RbfKernel::on_grid(int dims, int half_width) const {
    if (!(lengthscale > 0.0) || !(variance > 0.0)) throw ShapeError("rbf: lengthscale and variance must be positive");
    return StationaryKernel::from_function(dims, half_width, [&](Lag r) { return (*this)(r); });
}

namespace {

void check_size(std::size_t n) {
    if (n > kMaxGpPoints)
        throw ShapeError("gp: " + std::to_string(n) + " points exceeds the dense limit of " + std::to_string(kMaxGpPoints));
}

}  // namespace

Factorization factorize(const Eigen::MatrixXd& gram, double kernel_variance, double sigma_n, const std::string& what) {
    check_size(static_cast<std::size_t>(gram.rows()));
    const double noise = sigma_n * sigma_n;
    std::vector<double> ladder;
    if (sigma_n == 0.0) ladder.push_back(1e-8);
    else ladder.push_back(0.0);
    for (double j : {1e-8, 1e-6, 1e-4})
        if (j > ladder.back()) ladder.push_back(j);
    for (double rel : ladder) {
        const double jitter = rel * kernel_variance;
        Eigen::MatrixXd a = gram;
        a.diagonal().array() += noise + jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(a);
        if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().diagonal().allFinite())
            return Factorization{llt.matrixL(), noise + jitter, jitter};
    }
    throw NumericalError("gp: Cholesky failed after jitter 1e-4*K(0) for " + what);
}

namespace {

std::string describe_kernel(const StationaryKernel& k) {
    return "kernel(dims=" + std::to_string(k.dims()) + ", L=" + std::to_string(k.half_width()) +
           ", K(0)=" + std::to_string(k.variance()) + ")";
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) throw NumericalError("gp: non-finite observation at index " + std::to_string(i));
        out(static_cast<Eigen::Index>(i)) = v[i];
    }
    return out;
}

}  // namespace

std::vector<std::vector<double>> sample_prior(const StationaryKernel& k, const std::vector<Point>& points, Rng& rng,
                                              std::size_t count) {
    std::vector<std::vector<double>> out;
    if (count == 0 || points.empty()) return std::vector<std::vector<double>>(count);
    check_size(points.size());
    const Eigen::MatrixXd gram = to_gram(k, points);
    // Sampling needs no floor beyond what the factorization forces.
    Factorization f;
    {
        Eigen::LLT<Eigen::MatrixXd> llt(gram);
        if (llt.info() == Eigen::Success)
            f = Factorization{llt.matrixL(), 0.0, 0.0};
        else
            f = factorize(gram, k.variance(), 0.0, describe_kernel(k));
    }
    const auto n = static_cast<Eigen::Index>(points.size());
    for (std::size_t s = 0; s < count; ++s) {
        Eigen::VectorXd z(n);
        for (Eigen::Index i = 0; i < n; ++i) z(i) = rng.normal();
        const Eigen::VectorXd x = f.lower.triangularView<Eigen::Lower>() * z;
        out.emplace_back(x.data(), x.data() + n);
    }
    return out;
}

GPPosterior posterior(const StationaryKernel& k, const std::vector<Point>& observed, const std::vector<double>& values,
                      NoiseModel noise, const std::vector<Point>& query) {
    if (noise.sigma_n < 0.0) throw ShapeError("gp: sigma_n must be non-negative");
    if (observed.size() != values.size()) throw ShapeError("gp: observed points and values differ in length");
    check_size(observed.size());
    GPPosterior post;
    const double k0 = k.variance();
    if (observed.empty()) {
        post.mean.assign(query.size(), 0.0);
        post.variance.assign(query.size(), k0);
        return post;
    }
    const Eigen::VectorXd y = to_vector(values);
    const Factorization f = factorize(to_gram(k, observed), k0, noise.sigma_n, describe_kernel(k));
    post.jitter = f.jitter;
    const auto lower = f.lower.triangularView<Eigen::Lower>();
    Eigen::VectorXd alpha = lower.solve(y);
    lower.transpose().solveInPlace(alpha);
    const Eigen::MatrixXd cross = cross_gram(k, observed, query);  // n x m
    const Eigen::VectorXd mean = cross.transpose() * alpha;
    const Eigen::MatrixXd v = lower.solve(cross);
    post.mean.assign(mean.data(), mean.data() + mean.size());
    post.variance.resize(query.size());
    for (std::size_t j = 0; j < query.size(); ++j)
        post.variance[j] = std::max(0.0, k0 - v.col(static_cast<Eigen::Index>(j)).squaredNorm());
    return post;
}

double log_marginal_likelihood(const StationaryKernel& k, const std::vector<Point>& observed,
                               const std::vector<double>& values, NoiseModel noise) {
    if (noise.sigma_n < 0.0) throw ShapeError("gp: sigma_n must be non-negative");
    if (observed.size() != values.size()) throw ShapeError("gp: observed points and values differ in length");
    if (observed.empty()) return 0.0;
    check_size(observed.size());
    const Eigen::VectorXd y = to_vector(values);
    const Factorization f = factorize(to_gram(k, observed), k.variance(), noise.sigma_n, describe_kernel(k));
    const Eigen::VectorXd w = f.lower.triangularView<Eigen::Lower>().solve(y);
    const double n = static_cast<double>(observed.size());
    return -0.5 * w.squaredNorm() - f.lower.diagonal().array().log().sum() - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

int max_lag(const std::vector<Point>& points) {
    if (points.empty()) return 0;
    int lo0 = points[0][0], hi0 = lo0, lo1 = points[0][1], hi1 = lo1;
    for (const Point& p : points) {
        lo0 = std::min(lo0, p[0]);
        hi0 = std::max(hi0, p[0]);
        lo1 = std::min(lo1, p[1]);
        hi1 = std::max(hi1, p[1]);
    }
    return std::max(hi0 - lo0, hi1 - lo1);
}

RbfFit fit_rbf(const std::vector<Point>& observed, const std::vector<double>& values, NoiseModel noise,
               const std::vector<double>& lengthscales) {
    if (lengthscales.empty()) throw ShapeError("fit_rbf: empty lengthscale grid");
    if (observed.empty()) throw ShapeError("fit_rbf: no observations");
    std::vector<double> grid = lengthscales;
    std::sort(grid.begin(), grid.end());
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var = values.size() > 1 ? var / (n - 1.0) : 0.0;
    if (!(var > 0.0)) {
        // Degenerate data: fall back to the second moment, then to one.
        double ms = 0.0;
        for (double v : values) ms += v * v;
        var = ms / n > 0.0 ? ms / n : 1.0;
    }
    bool two_d = false;
    for (const Point& p : observed) two_d = two_d || p[1] != 0;
    const int half_width = std::max(1, max_lag(observed));
    RbfFit best;
    bool found = false;
    for (double ell : grid) {
        const RbfKernel rbf{ell, var};
        double lml = -std::numeric_limits<double>::infinity();
        try {
            lml = log_marginal_likelihood(rbf.on_grid(two_d ? 2 : 1, half_width), observed, values, noise);
        } catch (const NumericalError&) {
        }
        if (!std::isfinite(lml)) continue;
        if (!found || lml > best.log_marginal_likelihood) {
            best = RbfFit{rbf, lml};
            found = true;
        }
    }
    if (!found) throw NumericalError("fit_rbf: log marginal likelihood non-finite for every lengthscale");
    return best;
}

std::vector<Point> grid_points(std::size_t h, std::size_t w) {
    std::vector<Point> pts;
    if (h == 0) {
        for (std::size_t x = 0; x < w; ++x) pts.push_back({static_cast<int>(x), 0});
        return pts;
    }
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) pts.push_back({static_cast<int>(y), static_cast<int>(x)});
    return pts;
}

}  // namespace gpdip
