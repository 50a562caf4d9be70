#pragma once

#include <vector>

#include <json.hpp>

#include "gpdip/kernel.hpp"
#include "gpdip/network_spec.hpp"
#include "gpdip/rng.hpp"
#include "gpdip/tensor.hpp"

namespace gpdip {

// One draw of z = v * h(X * U): fresh input and weights from `rng`, circular
// padding, and a width-1 zero-mean linear readout to a single channel.
// `length` is the input extent per spatial axis.
Tensor sample_output(const NetworkSpec& spec, Rng& rng, std::size_t length);

struct CovarianceEstimate {
    int dims = 1;
    int half_width = 0;
    std::size_t n_samples = 0;
    std::vector<double> values;      // K^(r), lag layout as StationaryKernel
    std::vector<double> stderr_k;    // standard error of K^(r)
    std::vector<double> rho;         // K^(r) / K^(0)
    std::vector<double> stderr_rho;  // delta-method standard error of rho

    StationaryKernel as_kernel() const { return StationaryKernel(dims, half_width, values); }
};

// Position-averaged (circular) second moments of sample_output, averaged over
// n_samples independent networks. Sample s uses the stream rng.derive(s), so
// the result is the same for any thread count.
CovarianceEstimate estimate_covariance(const NetworkSpec& spec, std::size_t n_samples, std::size_t length, const Rng& rng,
                                       int half_width);

struct LagComparison {
    Lag lag;
    double rho = 0.0;
    double rho_hat = 0.0;
    double stderr_rho = 0.0;
};

struct ComparisonReport {
    double max_abs_rho_err = 0.0;
    int check_half_width = 0;
    std::vector<LagComparison> rows;
};

// Max |rho^ - rho| over lags with max(|r_i|) <= check_half_width.
ComparisonReport compare(const StationaryKernel& analytic, const CovarianceEstimate& empirical, int check_half_width);

nlohmann::json to_json(const ComparisonReport& report);

}  // namespace gpdip
