#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>

namespace qbsde {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a fit or an iteration cannot produce a meaningful value.
class NumericalError : public Error {
public:
    using Error::Error;
};

inline double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/// Upper tail 1 - Phi(x), accurate for large positive x.
inline double normal_sf(double x) {
    return 0.5 * std::erfc(x / std::numbers::sqrt2);
}

double normal_quantile(double p);

/// Least-squares slope of ys against xs.
/// Throws NumericalError when xs or ys carry no variation.
double fit_slope(std::span<const double> xs, std::span<const double> ys);

/// Slope of log(ys) against log(xs).
double fit_loglog_slope(std::span<const double> xs, std::span<const double> ys);

/// Runs body(begin, end) over [0, count) split into contiguous chunks,
/// one per worker. workers <= 1 runs inline on the calling thread.
void parallel_for(std::size_t count, int workers,
                  const std::function<void(std::size_t, std::size_t)>& body);

/// Formats a double with 17 significant digits.
std::string format_exact(double value);

}  // namespace qbsde
