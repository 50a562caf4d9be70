#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "gpdip/network_spec.hpp"
#include "gpdip/ops.hpp"

namespace gpdip {

// Integer offset (1D uses only the first component).
using Lag = std::array<int, 2>;
using Point = std::array<int, 2>;

// Stationary covariance sampled on the integer lag grid [-L, L]^dims.
class StationaryKernel {
public:
    StationaryKernel(int dims, int half_width, std::vector<double> values);

    static StationaryKernel from_function(int dims, int half_width, const std::function<double(Lag)>& f);

    int dims() const { return dims_; }
    int half_width() const { return half_width_; }
    int side() const { return 2 * half_width_ + 1; }
    const std::vector<double>& values() const { return values_; }

    bool in_support(Lag r) const;
    // K(r); throws ShapeError outside the grid.
    double at(Lag r) const;
    double at(int r) const { return at(Lag{r, 0}); }
    double variance() const { return at(Lag{0, 0}); }
    // K(r) / K(0).
    double rho(Lag r) const { return at(r) / variance(); }
    double rho(int r) const { return rho(Lag{r, 0}); }

    // Largest |K(r) - K(-r)| over the grid.
    double asymmetry() const;

    std::size_t index(Lag r) const;
    Lag lag_of(std::size_t index) const;

private:
    int dims_;
    int half_width_;
    std::vector<double> values_;
};

// Restriction to a smaller half-width.
StationaryKernel crop(const StationaryKernel& k, int half_width);

StationaryKernel white_kernel(double sigma, int dims, int half_width);

// Normalized Gaussian filter taps g(i), |i| <= ceil(3 s), summing to one.
std::vector<double> gaussian_taps(double filter_std);

// Covariance of white noise (std sigma_noise) filtered by gaussian_taps(s):
// sigma_noise^2 * (g * g)(r), separable across axes in 2D.
StationaryKernel gaussian_filtered_kernel(double sigma_noise, double filter_std, int dims, int half_width);

// Conv layer with i.i.d. weights N(0, gain / fan_in): K' = gain * K.
StationaryKernel transfer_conv(const StationaryKernel& k, double gain);

// erf:  K'(r) = (2/pi) asin(rho(r))
// relu: K'(r) = K(0)/(2 pi) (sin t + (pi - t) cos t),  t = acos(rho(r))
StationaryKernel transfer_nonlinearity(const StationaryKernel& k, Activation kind);

// Correlation map of the two transfers (rho -> rho').
double transfer_rho(double rho, Activation kind);

StationaryKernel transfer_bias(const StationaryKernel& k, double sigma_b);

// Down modes decimate (after a box-filter autocorrelation for avgpool). Up
// modes read K(r / factor) with cubic convolution between grid lags: both
// nearest and bilinear are treated as band-limited interpolation here.
StationaryKernel transfer_resample(const StationaryKernel& k, int factor, ResampleMode mode);

// add:    Ka + Kb
// concat: (ca Ka + cb Kb) / (ca + cb)
StationaryKernel transfer_skip(const StationaryKernel& ka, const StationaryKernel& kb, MergeKind kind, int channels_a,
                               int channels_b);

struct KernelTraceEntry {
    int layer = -1;  // -1 is the input kernel
    std::string op;
    bool interpolated = false;  // fractional-lag reads happened at this layer
    StationaryKernel kernel;
};

struct KernelDerivation {
    StationaryKernel kernel;
    std::vector<KernelTraceEntry> trace;
};

StationaryKernel input_kernel(const InputDescriptor& input, int half_width);

// Folds the layer list through the transfers and returns the output kernel on
// [-half_width, half_width]^dims. Intermediate grids are sized so that every
// output lag is computed without truncation.
KernelDerivation derive_kernel(const NetworkSpec& spec, int half_width = 64);

// M[i][j] = K(points[i] - points[j]).
Eigen::MatrixXd to_gram(const StationaryKernel& k, const std::vector<Point>& points);
// Cross-covariance C[i][j] = K(a[i] - b[j]).
Eigen::MatrixXd cross_gram(const StationaryKernel& k, const std::vector<Point>& a, const std::vector<Point>& b);

// Text format: "gpdip-kernel 1" header, dims, half_width, variance, then one
// "lag... value" line per grid point, values printed with 17 significant digits.
void write_kernel(const StationaryKernel& k, const std::string& path);
StationaryKernel read_kernel(const std::string& path);
std::string kernel_to_text(const StationaryKernel& k);
StationaryKernel kernel_from_text(const std::string& text);

nlohmann::json kernel_to_json(const StationaryKernel& k);
nlohmann::json derivation_to_json(const KernelDerivation& d);

}  // namespace gpdip
