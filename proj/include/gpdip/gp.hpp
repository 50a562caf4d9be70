#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gpdip/kernel.hpp"
#include "gpdip/rng.hpp"

namespace gpdip {

// Dense solves refuse more points than this.
inline constexpr std::size_t kMaxGpPoints = 20000;

struct NoiseModel {
    double sigma_n = 0.0;
};

struct GPPosterior {
    std::vector<double> mean;
    std::vector<double> variance;
    double jitter = 0.0;  // diagonal term actually added beyond sigma_n^2
};

struct RbfKernel {
    double lengthscale = 1.0;
    double variance = 1.0;

    double operator()(Lag r) const;
    // Sampled on [-half_width, half_width]^dims.
    StationaryKernel on_grid(int dims, int half_width) const;
};

// Cholesky factor of K + d I where d = sigma_n^2, or the jitter floor
// 1e-8 K(0) when sigma_n = 0. On failure the diagonal is escalated through
// 1e-8, 1e-6, 1e-4 (relative to K(0)); NumericalError after that.
struct Factorization {
    Eigen::MatrixXd lower;
    double diagonal = 0.0;  // total diagonal term added
    double jitter = 0.0;    // part of `diagonal` beyond sigma_n^2
};
Factorization factorize(const Eigen::MatrixXd& gram, double kernel_variance, double sigma_n, const std::string& what);

// `count` draws from N(0, Gram(points)).
std::vector<std::vector<double>> sample_prior(const StationaryKernel& k, const std::vector<Point>& points, Rng& rng,
                                              std::size_t count);

GPPosterior posterior(const StationaryKernel& k, const std::vector<Point>& observed, const std::vector<double>& values,
                      NoiseModel noise, const std::vector<Point>& query);

double log_marginal_likelihood(const StationaryKernel& k, const std::vector<Point>& observed,
                               const std::vector<double>& values, NoiseModel noise);

// Grid search over lengthscales; variance fixed to the sample variance of
// the observations. Ties go to the smaller lengthscale.
struct RbfFit {
    RbfKernel kernel;
    double log_marginal_likelihood = 0.0;
};
RbfFit fit_rbf(const std::vector<Point>& observed, const std::vector<double>& values, NoiseModel noise,
               const std::vector<double>& lengthscales);

// Largest |coordinate difference| over all pairs of `points`, per axis max.
int max_lag(const std::vector<Point>& points);

// Row-major pixel coordinates of an h x w grid (1D when h == 0).
std::vector<Point> grid_points(std::size_t h, std::size_t w);

}  // namespace gpdip
