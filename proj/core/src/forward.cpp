#include "qbsde/forward.hpp"

#include "qbsde/driver.hpp"

#include <algorithm>
#include <cmath>

namespace qbsde {

SdeCoeffs axis_coeffs(AxisCoeffs axis, double lipschitz_K) {
    const auto d = axis.drift.size();
    if (d == 0 || axis.vol.size() != d) {
        throw Error("sde: per-axis drift and volatility lists must be non-empty and equal length");
    }
    SdeCoeffs c;
    c.dim = static_cast<int>(d);
    c.lipschitz_K = lipschitz_K;
    c.drift = [drift = axis.drift](std::span<const double> x, std::span<double> out) {
        for (std::size_t j = 0; j < drift.size(); ++j) {
            out[j] = drift[j](x[j]);
        }
    };
    c.diffusion = [vol = axis.vol](std::span<const double> x, std::span<double> out) {
        const std::size_t d = vol.size();
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t j = 0; j < d; ++j) {
            out[j * d + j] = vol[j](x[j]);
        }
    };
    c.axis = std::move(axis);
    return c;
}

SdeCoeffs gbm_coeffs(int d, double nu) {
    if (d < 1) {
        throw Error("sde: dimension must be at least 1");
    }
    AxisCoeffs axis;
    for (int j = 0; j < d; ++j) {
        axis.drift.emplace_back([](double) { return 0.0; });
        axis.vol.emplace_back([nu](double x) { return nu * x; });
    }
    return axis_coeffs(std::move(axis), std::abs(nu));
}

TimeGrid::TimeGrid(int n, double T) : n_(n), T_(T) {
    if (n < 0) {
        throw Error("time grid: number of steps must be non-negative");
    }
    if (!(T > 0.0)) {
        throw Error("time grid: horizon must be positive");
    }
    times_.resize(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) {
        times_[static_cast<std::size_t>(i)] = n == 0 ? 0.0 : T * i / n;
    }
    if (n > 0) {
        times_.back() = T;
    }
}

double TimeGrid::step(int i) const {
    if (i < 0 || i >= n_) {
        throw Error("time grid: step index out of range");
    }
    return T_ / n_;
}

double TimeGrid::time(int i) const { return times_.at(static_cast<std::size_t>(i)); }

namespace {

// y = x + h b(x) + sigma(x) dw, using caller-provided scratch.
void euler_into(const SdeCoeffs& coeffs, std::span<const double> x, double h,
                std::span<const double> dw, std::span<double> drift_buf,
                std::span<double> sigma_buf, std::span<double> out) {
    const auto d = static_cast<std::size_t>(coeffs.dim);
    coeffs.drift(x, drift_buf);
    coeffs.diffusion(x, sigma_buf);
    for (std::size_t j = 0; j < d; ++j) {
        double s = x[j] + h * drift_buf[j];
        for (std::size_t l = 0; l < d; ++l) {
            s += sigma_buf[j * d + l] * dw[l];
        }
        out[j] = s;
    }
}

void check_dim(const SdeCoeffs& coeffs, std::size_t size, const char* what) {
    if (size != static_cast<std::size_t>(coeffs.dim)) {
        throw Error(std::string("sde: ") + what + " has the wrong dimension");
    }
}

}  // namespace

std::vector<double> euler_step(const SdeCoeffs& coeffs, std::span<const double> x, double h,
                               std::span<const double> dw) {
    check_dim(coeffs, x.size(), "state");
    check_dim(coeffs, dw.size(), "increment");
    const auto d = static_cast<std::size_t>(coeffs.dim);
    std::vector<double> drift(d), sigma(d * d), out(d);
    euler_into(coeffs, x, h, dw, drift, sigma, out);
    return out;
}

std::vector<double> discrete_euler_step(const SdeCoeffs& coeffs, const Lattice& lattice,
                                        std::span<const double> x, double h,
                                        std::span<const double> dw_hat) {
    return lattice.project(euler_step(coeffs, x, h, dw_hat));
}

std::vector<Transition> transition_support(const SdeCoeffs& coeffs, const Lattice& lattice,
                                           const QuantGridD& grid, std::span<const double> x,
                                           double h, double R) {
    check_dim(coeffs, x.size(), "state");
    if (grid.dim != coeffs.dim || lattice.dim() != coeffs.dim) {
        throw Error("transition_support: grid, lattice and coefficients disagree on dimension");
    }
    if (!(h > 0.0)) {
        throw Error("transition_support: step must be positive");
    }
    const auto d = static_cast<std::size_t>(coeffs.dim);
    const double sqrt_h = std::sqrt(h);
    std::vector<double> drift(d), sigma(d * d), dw(d), y(d);
    std::vector<Transition> out;
    out.reserve(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const auto g = grid.node(k);
        for (std::size_t l = 0; l < d; ++l) {
            dw[l] = sqrt_h * g[l];
        }
        euler_into(coeffs, x, h, dw, drift, sigma, y);
        Transition t;
        t.successor = lattice.project_index(y);
        t.weight = grid.weights[k];
        t.h_weight.resize(d);
        for (std::size_t l = 0; l < d; ++l) {
            t.h_weight[l] = g[l] / sqrt_h;
        }
        if (!std::isinf(R)) {
            t.h_weight = clamp_weights(t.h_weight, R, h);
        }
        out.push_back(std::move(t));
    }
    return out;
}

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t splitmix_finalize(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t CounterRng::bits(std::uint64_t stream, std::uint64_t counter) const {
    std::uint64_t z = splitmix_finalize(seed_ + kGolden);
    z = splitmix_finalize(z ^ (stream * kGolden + 0xD1B54A32D192ED03ULL));
    return splitmix_finalize(z + counter * kGolden);
}

double CounterRng::uniform(std::uint64_t stream, std::uint64_t counter) const {
    // 53 random bits centered in their cell: never exactly 0 or 1.
    return (static_cast<double>(bits(stream, counter) >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal(std::uint64_t stream, std::uint64_t counter) const {
    return normal_quantile(uniform(stream, counter));
}

PathStatistics simulate_paths(const SdeCoeffs& coeffs, int n, double T,
                              std::span<const double> x0, std::size_t count,
                              std::uint64_t seed, int workers) {
    check_dim(coeffs, x0.size(), "initial point");
    if (count == 0) {
        throw Error("simulate_paths: path count must be at least 1");
    }
    const TimeGrid grid(n, T);
    const auto d = static_cast<std::size_t>(coeffs.dim);
    const CounterRng rng(seed);

    // Per-path results, reduced afterwards in path order.
    std::vector<double> terminal(count * d), sup_sq(count);
    parallel_for(count, workers, [&](std::size_t begin, std::size_t end) {
        std::vector<double> x(d), next(d), dw(d), drift(d), sigma(d * d);
        for (std::size_t p = begin; p < end; ++p) {
            std::copy(x0.begin(), x0.end(), x.begin());
            double best = 0.0;
            for (double c : x) best += c * c;
            for (int i = 0; i < n; ++i) {
                const double h = grid.step(i);
                const double sqrt_h = std::sqrt(h);
                for (std::size_t l = 0; l < d; ++l) {
                    dw[l] = sqrt_h * rng.normal(p, static_cast<std::uint64_t>(i) * d + l);
                }
                euler_into(coeffs, x, h, dw, drift, sigma, next);
                x.swap(next);
                double sq = 0.0;
                for (double c : x) sq += c * c;
                best = std::max(best, sq);
            }
            std::copy(x.begin(), x.end(), terminal.begin() + static_cast<std::ptrdiff_t>(p * d));
            sup_sq[p] = best;
        }
    });

    PathStatistics stats;
    stats.count = count;
    stats.terminal_mean.assign(d, 0.0);
    stats.terminal_stddev.assign(d, 0.0);
    for (std::size_t p = 0; p < count; ++p) {
        for (std::size_t l = 0; l < d; ++l) {
            stats.terminal_mean[l] += terminal[p * d + l];
        }
        stats.mean_sup_squared_norm += sup_sq[p];
    }
    const auto cnt = static_cast<double>(count);
    for (auto& m : stats.terminal_mean) m /= cnt;
    stats.mean_sup_squared_norm /= cnt;
    if (count > 1) {
        for (std::size_t p = 0; p < count; ++p) {
            for (std::size_t l = 0; l < d; ++l) {
                const double e = terminal[p * d + l] - stats.terminal_mean[l];
                stats.terminal_stddev[l] += e * e;
            }
        }
        for (auto& s : stats.terminal_stddev) s = std::sqrt(s / (cnt - 1.0));
    }
    return stats;
}

CoupledGapStatistics coupled_euler_gap(const SdeCoeffs& coeffs, int n, double T,
                                       std::span<const double> x0,
                                       std::span<const double> x0_tilde,
                                       const PerturbationFn& zeta, std::size_t count,
                                       std::uint64_t seed) {
    check_dim(coeffs, x0.size(), "initial point");
    check_dim(coeffs, x0_tilde.size(), "perturbed initial point");
    if (count == 0) {
        throw Error("coupled_euler_gap: path count must be at least 1");
    }
    const TimeGrid grid(n, T);
    const auto d = static_cast<std::size_t>(coeffs.dim);
    const CounterRng rng(seed);
    std::vector<double> x(d), xt(d), next(d), dw(d), drift(d), sigma(d * d), z(d);

    auto norm = [](std::span<const double> v) {
        double s = 0.0;
        for (double c : v) s += c * c;
        return std::sqrt(s);
    };
    std::vector<double> diff(d);
    for (std::size_t l = 0; l < d; ++l) diff[l] = x0[l] - x0_tilde[l];
    const double initial_gap = norm(diff);

    double sum_gap = 0.0, sum_zeta = 0.0;
    for (std::size_t p = 0; p < count; ++p) {
        std::copy(x0.begin(), x0.end(), x.begin());
        std::copy(x0_tilde.begin(), x0_tilde.end(), xt.begin());
        double sup_gap = initial_gap;
        double zeta_total = 0.0;
        for (int i = 0; i < n; ++i) {
            const double h = grid.step(i);
            const double sqrt_h = std::sqrt(h);
            for (std::size_t l = 0; l < d; ++l) {
                dw[l] = sqrt_h * rng.normal(p, static_cast<std::uint64_t>(i) * d + l);
            }
            euler_into(coeffs, x, h, dw, drift, sigma, next);
            x.swap(next);
            euler_into(coeffs, xt, h, dw, drift, sigma, next);
            xt.swap(next);
            zeta(p, i, h, z);
            for (std::size_t l = 0; l < d; ++l) {
                xt[l] += z[l];
                diff[l] = x[l] - xt[l];
            }
            zeta_total += norm(z);
            sup_gap = std::max(sup_gap, norm(diff));
        }
        sum_gap += sup_gap;
        sum_zeta += zeta_total;
    }
    CoupledGapStatistics out;
    out.mean_sup_gap = sum_gap / static_cast<double>(count);
    out.mean_perturbation = initial_gap + sum_zeta / static_cast<double>(count);
    out.stability_constant =
        out.mean_perturbation > 0.0 ? out.mean_sup_gap / out.mean_perturbation : 0.0;
    return out;
}

}  // namespace qbsde
