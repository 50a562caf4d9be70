#pragma once

#include <cmath>
#include <functional>

#include "gpdip/rng.hpp"
#include "gpdip/tensor.hpp"

namespace testing {

inline gpdip::Tensor random_tensor(gpdip::Rng& rng, const gpdip::Shape& shape, double sigma = 1.0) {
    return gpdip::gaussian_tensor(rng, shape, sigma);
}

// Central difference of a scalar function of one tensor entry.
inline double central_difference(const std::function<double(const gpdip::Tensor&)>& f, gpdip::Tensor x, std::size_t i,
                                 double h = 1e-5) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    return (fp - fm) / (2.0 * h);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

}  // namespace testing
