#include "qbsde/numerics.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cstdio>
#include <exception>
#include <thread>
#include <vector>

namespace qbsde {

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw std::domain_error("normal_quantile: p must lie in (0, 1)");
    }
    static const boost::math::normal_distribution<double> standard;
    return boost::math::quantile(standard, p);
}

double fit_slope(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2) {
        throw NumericalError("fit_slope: need at least two paired samples");
    }
    const auto n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0) {
        throw NumericalError("fit_slope: degenerate fit (abscissae do not vary)");
    }
    if (syy == 0.0) {
        throw NumericalError("fit_slope: degenerate fit (all values equal)");
    }
    return sxy / sxx;
}

double fit_loglog_slope(std::span<const double> xs, std::span<const double> ys) {
    std::vector<double> lx(xs.size()), ly(ys.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        lx[i] = std::log(xs[i]);
    }
    for (std::size_t i = 0; i < ys.size(); ++i) {
        ly[i] = std::log(ys[i]);
    }
    return fit_slope(lx, ly);
}

void parallel_for(std::size_t count, int workers,
                  const std::function<void(std::size_t, std::size_t)>& body) {
    if (count == 0) {
        return;
    }
    const auto w = static_cast<std::size_t>(std::max(1, workers));
    if (w == 1 || count < 2 * w) {
        body(0, count);
        return;
    }
    const std::size_t chunk = (count + w - 1) / w;
    std::vector<std::exception_ptr> errors((count + chunk - 1) / chunk);
    {
        std::vector<std::jthread> pool;
        pool.reserve(errors.size());
        for (std::size_t begin = 0, slot = 0; begin < count; begin += chunk, ++slot) {
            const std::size_t end = std::min(count, begin + chunk);
            pool.emplace_back([&body, &errors, begin, end, slot] {
                try {
                    body(begin, end);
                } catch (...) {
                    errors[slot] = std::current_exception();
                }
            });
        }
    }
    // Rethrow the error of the lowest chunk so the reported failure does not
    // depend on thread scheduling.
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

std::string format_exact(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

}  // namespace qbsde
